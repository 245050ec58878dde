"""Gradient-flow engine for equality-constrained minimization.

The engine integrates

    dw/dt = Psi(w) = -J' Lambda - grad f,    (J J') Lambda = g - J grad f,

in scaled variables, where ``J`` is the differential of the constraint vector
``g``.  The Schur system is solved with (warm-started) conjugate gradients and
time is advanced with an embedded explicit Euler / Heun pair whose second
stage is reused as the first stage of the next step, so every attempted step
costs exactly one evaluation of ``Psi``.

All vectors seen by the engine are real.  Problems with complex unknowns store
them as interleaved ``(real, imag)`` pairs, which makes the Euclidean product
coincide with ``Re[a^H b]``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

MODES = ("S1", "S2", "S3", "S4")


class FlowError(RuntimeError):
    """Unrecoverable numerical failure inside the flow engine."""


class FlowProblem:
    """Abstract constrained problem consumed by :func:`run_flow`.

    Subclasses set ``dim_w``, ``dim_g`` and ``n_ineq`` (the number of trailing
    rows of ``g`` that are slack-augmented inequalities) and implement the
    callbacks below.  Callbacks receive *unscaled* real vectors.
    """

    dim_w: int = 0
    dim_g: int = 0
    n_ineq: int = 0

    def cost(self, w):
        raise NotImplementedError

    def grad(self, w):
        raise NotImplementedError

    def constraint(self, w):
        raise NotImplementedError

    def jac_apply(self, w, v):
        raise NotImplementedError

    def jac_adjoint_apply(self, w, p):
        raise NotImplementedError

    def inequality_values(self, w):
        """Inequality function values ``h(w)`` (without slacks), if any."""
        return np.zeros(0)

    def row_scale_hint(self, w, sw):
        """2-norms of the inequality rows of ``J diag(sw)``.

        The fallback applies the adjoint to unit vectors; concrete problems
        should override it with closed-form expressions.
        """
        norms = np.empty(self.n_ineq)
        p = np.zeros(self.dim_g)
        first = self.dim_g - self.n_ineq
        for i in range(self.n_ineq):
            p[first + i] = 1.0
            norms[i] = np.linalg.norm(sw * self.jac_adjoint_apply(w, p))
            p[first + i] = 0.0
        return norms


@dataclass
class Scalings:
    """Diagonal variable scaling ``sw``, row scaling ``sg`` and cost scale ``f0``."""

    sw: np.ndarray
    sg: np.ndarray
    f0: float = 1.0

    def __post_init__(self):
        self.sw = np.asarray(self.sw, dtype=float)
        self.sg = np.asarray(self.sg, dtype=float)
        if np.any(~(self.sw > 0)) or np.any(~(self.sg > 0)) or not self.f0 > 0:
            raise ValueError("scalings must be strictly positive")


@dataclass
class FlowSettings:
    """Time-stepping and tolerance settings.

    ``mode`` selects the strategy: S1/S2 fixed-step explicit Euler, S3
    embedded Euler-Heun with fixed tolerances, S4 embedded Euler-Heun with
    adaptive CG and RK tolerances.
    """

    mode: str = "S4"
    dt0: float = 1.0
    tau_psi: float = 1e-3
    t_max: float = 1000.0
    tau_cg: float = 1e-6
    tau_rk_rel: float = 1e-3
    tau_rk_abs: float = 1e-6
    k_tau: float = 0.1
    cg_max_iter: int = 500
    fac: float = 0.9
    fac_min: float = 0.2
    fac_max: float = 2.0
    tau_cg_floor: float = 1e-14
    max_halvings: int = 20
    dt_max: float = math.inf
    warm_start: bool = True
    solver: str = "cg"
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.tau_psi > 0:
            raise ValueError("tau_psi must be positive")
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        if not 0 < self.k_tau < 1:
            raise ValueError("k_tau must lie in (0, 1)")
        if self.solver not in ("cg", "direct"):
            raise ValueError("solver must be 'cg' or 'direct'")

    @property
    def adaptive_step(self):
        return self.mode in ("S3", "S4")

    @property
    def adaptive_tolerances(self):
        return self.mode == "S4"


def preset(name, **overrides):
    """Settings for the four named strategies, with optional overrides."""
    base = {
        "S1": dict(mode="S1", dt0=1.0, tau_cg=1e-6),
        "S2": dict(mode="S2", dt0=1.5, tau_cg=1e-6),
        "S3": dict(mode="S3", dt0=1.0, tau_cg=1e-6, tau_rk_rel=1e-3, tau_rk_abs=1e-6),
        "S4": dict(mode="S4", dt0=1.0, tau_cg=1e-6),
    }
    if name not in base:
        raise ValueError(f"unknown preset {name!r}; expected one of {MODES}")
    kw = dict(base[name])
    kw.update(overrides)
    return FlowSettings(**kw)


# ---------------------------------------------------------------- slacks ---

def init_slacks(h0):
    """Slacks making initially satisfied inequality rows exactly feasible."""
    h0 = np.asarray(h0, dtype=float)
    if not np.all(np.isfinite(h0)):
        raise ValueError("inequality values must be finite")
    return np.sqrt(np.maximum(-h0, 0.0))


def augmented_constraint(h, s):
    """Slack-augmented inequality residual ``h + s*s``."""
    h = np.asarray(h)
    s = np.asarray(s)
    if h.shape != s.shape:
        raise ValueError(f"length mismatch: h has {h.shape}, s has {s.shape}")
    return h + s * s


def equilibrate_rows(problem, w, sw):
    """Row scales normalizing the inequality rows of ``J diag(sw)``.

    State (equality) rows keep scale 1.  Returns ``(sg, degenerate)`` where
    ``degenerate`` flags inequality rows with zero norm (given scale 1).
    """
    sg = np.ones(problem.dim_g)
    degenerate = np.zeros(problem.n_ineq, dtype=bool)
    if problem.n_ineq == 0:
        return sg, degenerate
    norms = np.asarray(problem.row_scale_hint(w, sw), dtype=float)
    degenerate = ~(norms > 0) | ~np.isfinite(norms)
    if degenerate.any():
        log.warning("%d inequality rows have zero norm", int(degenerate.sum()))
    sg[problem.dim_g - problem.n_ineq:] = np.where(degenerate, 1.0, norms)
    return sg, degenerate


# -------------------------------------------------------------------- CG ---

@dataclass
class CGResult:
    x: np.ndarray
    residual_norm: float
    iters: int
    converged: bool


def cg_solve(op, rhs, tau_abs, max_iter=500, x0=None):
    """Conjugate gradients for a self-adjoint positive (semi)definite ``op``.

    Stops when the residual 2-norm drops to ``tau_abs``.  Raises
    :class:`FlowError` if the iteration produces non-finite values.
    """
    rhs = np.asarray(rhs, dtype=float)
    if x0 is None:
        x = np.zeros_like(rhs)
        r = rhs.copy()
    else:
        x = np.array(x0, dtype=float)
        r = rhs - op(x)
    # the warm-start residual costs one operator application
    start = 0 if x0 is None else 1
    rr = float(r @ r)
    if not math.isfinite(rr):
        raise FlowError("non-finite right-hand side in CG")
    if math.sqrt(rr) <= tau_abs:
        return CGResult(x, math.sqrt(rr), start, True)
    p = r.copy()
    for it in range(start + 1, max_iter + 1):
        q = op(p)
        pq = float(p @ q)
        if not math.isfinite(pq):
            raise FlowError(f"non-finite value in CG at iteration {it}")
        if pq <= 0.0:
            # operator is singular along p; the residual cannot decrease further
            return CGResult(x, math.sqrt(rr), it, False)
        alpha = rr / pq
        x += alpha * p
        r -= alpha * q
        rr_new = float(r @ r)
        if not math.isfinite(rr_new):
            raise FlowError(f"non-finite residual in CG at iteration {it}")
        if math.sqrt(rr_new) <= tau_abs:
            return CGResult(x, math.sqrt(rr_new), it, True)
        p *= rr_new / rr
        p += r
        rr = rr_new
    return CGResult(x, math.sqrt(rr), max_iter, False)


# ------------------------------------------------------------------- Psi ---

@dataclass
class PsiResult:
    """One evaluation of the scaled flow field and its by-products."""

    psi: np.ndarray
    lam: np.ndarray
    gbar: np.ndarray
    cost: float
    norm_psi: float
    norm_g: float
    rhs_norm: float
    jt_lam_norm: float
    tau_cg: float
    cg_iters: int
    cg_residual: float
    converged: bool
    sg: np.ndarray
    wall_s: float = 0.0


def _scaled_ops(problem, w, sw, sg):
    def jbar(v):
        return problem.jac_apply(w, sw * v) / sg

    def jbar_t(p):
        return sw * problem.jac_adjoint_apply(w, p / sg)

    return jbar, jbar_t


def compute_psi(problem, wbar, sw, sg, f0, tau_cg, *, cg_max_iter=500,
                lam0=None, solver="cg"):
    """Evaluate the scaled flow field at the scaled point ``wbar``.

    ``tau_cg`` is either an absolute residual tolerance or a callable mapping
    the scaled constraint norm to one.  Returns a :class:`PsiResult`.
    """
    t_start = time.perf_counter()
    sw = np.asarray(sw, dtype=float)
    sg = np.asarray(sg, dtype=float)
    w = sw * wbar
    cost = float(problem.cost(w)) / f0
    grad_bar = sw * problem.grad(w) / f0
    if problem.dim_g == 0:
        psi = -grad_bar
        norm_psi = float(np.linalg.norm(psi))
        return PsiResult(psi, np.zeros(0), np.zeros(0), cost, norm_psi, 0.0, 0.0,
                         0.0, 0.0, 0, 0.0, True, sg,
                         time.perf_counter() - t_start)

    gbar = problem.constraint(w) / sg
    norm_g = float(np.linalg.norm(gbar))
    tol = float(tau_cg(norm_g)) if callable(tau_cg) else float(tau_cg)
    jbar, jbar_t = _scaled_ops(problem, w, sw, sg)
    rhs = gbar - jbar(grad_bar)

    if solver == "direct":
        sigma = np.column_stack([jbar(jbar_t(e)) for e in np.eye(problem.dim_g)])
        lam = np.linalg.solve(sigma, rhs)
        res = CGResult(lam, float(np.linalg.norm(rhs - sigma @ lam)), 0, True)
    else:
        res = cg_solve(lambda x: jbar(jbar_t(x)), rhs, tol, cg_max_iter, x0=lam0)
    jt_lam = jbar_t(res.x)
    psi = -jt_lam - grad_bar
    return PsiResult(
        psi=psi, lam=res.x, gbar=gbar, cost=cost,
        norm_psi=float(np.linalg.norm(psi)), norm_g=norm_g,
        rhs_norm=float(np.linalg.norm(rhs)),
        jt_lam_norm=float(np.linalg.norm(jt_lam)), tau_cg=tol,
        cg_iters=res.iters, cg_residual=res.residual_norm,
        converged=res.converged, sg=sg, wall_s=time.perf_counter() - t_start)


# ---------------------------------------------------------- time stepping ---

@dataclass
class StepOutcome:
    w_euler: np.ndarray
    w_heun: np.ndarray
    eps: float
    k2: PsiResult


def normalized_error(w, w_low, w_high, tau_abs, tau_rel):
    """RMS of the low/high order difference weighted by mixed tolerances."""
    scale = tau_abs + np.maximum(np.abs(w), np.abs(w_low)) * tau_rel
    return float(np.sqrt(np.mean(((w_low - w_high) / scale) ** 2)))


def rk12_advance(psi, w, k1, dt, *, tau_abs=1e-6, tau_rel=1e-3, tau_rk=None):
    """One embedded Euler/Heun step with a single new field evaluation.

    ``psi`` maps a point to a :class:`PsiResult`; ``k1`` is the field at ``w``.
    The error is the normalized RMS difference, or the Euclidean difference
    over ``tau_rk`` when that is given.
    """
    w_euler = w + dt * k1
    k2 = psi(w_euler)
    w_heun = w + 0.5 * dt * (k1 + k2.psi)
    if tau_rk is not None:
        eps = float(np.linalg.norm(w_euler - w_heun)) / tau_rk
    else:
        eps = normalized_error(w, w_euler, w_heun, tau_abs, tau_rel)
    return StepOutcome(w_euler, w_heun, eps, k2)


def update_timestep(eps, dt, fac=0.9, fac_min=0.2, fac_max=2.0):
    """Next step size for an order-2 local error estimate."""
    if eps < 0 or not dt > 0:
        raise ValueError("need eps >= 0 and dt > 0")
    if eps == 0:
        return dt * fac_max
    return dt * min(fac_max, max(fac_min, fac * (1.0 / eps) ** 0.5))


@dataclass
class TolHistory:
    """Norms from the last accepted field evaluation."""

    norm_psi: float
    rhs_norm: float
    jt_lam_norm: float


def update_cg_tolerance(history, k_tau, g_now, *, default=1e-6, floor=1e-14):
    """Absolute CG tolerance balancing stability and linear-solve accuracy."""
    if history is None:
        tau = min(k_tau * g_now, default)
    elif history.jt_lam_norm > 0 and math.isfinite(history.jt_lam_norm):
        estimate = history.norm_psi * history.rhs_norm / history.jt_lam_norm
        tau = k_tau * min(estimate, g_now)
    else:
        tau = k_tau * g_now
    return max(tau, floor)


def update_rk_tolerance(tau_prev, k_tau, psi_now, psi_prev, w_now, w_prev):
    """Non-increasing RK tolerance from a Lipschitz estimate of the field."""
    dpsi = float(np.linalg.norm(psi_now - psi_prev))
    if dpsi == 0.0 or not math.isfinite(dpsi):
        return tau_prev
    cand = k_tau * float(np.linalg.norm(psi_now)) * float(np.linalg.norm(w_now - w_prev)) / dpsi
    return min(tau_prev, cand)


# ------------------------------------------------------------------ trace ---

TRACE_COLUMNS = ("t", "dt", "norm_psi", "norm_g", "cost", "tau_cg", "tau_rk",
                 "cg_iters", "wall_s")
CALL_COLUMNS = ("t", "dt", "accepted", "cg_iters", "cg_converged", "tau_cg", "wall_s")


@dataclass
class StepRecord:
    t: float
    dt: float
    norm_psi: float
    norm_g: float
    cost: float
    tau_cg: float
    tau_rk: float
    cg_iters: int
    wall_s: float


@dataclass
class CallRecord:
    t: float
    dt: float
    accepted: bool
    cg_iters: int
    cg_converged: bool
    tau_cg: float
    wall_s: float


@dataclass
class FlowTrace:
    """History of a flow run.  ``records`` holds accepted steps only."""

    initial: StepRecord
    records: list = field(default_factory=list)
    calls: list = field(default_factory=list)
    w: Optional[np.ndarray] = None
    wbar: Optional[np.ndarray] = None
    status: str = "running"
    final: Optional[PsiResult] = None
    n_rejected: int = 0
    n_cg_failures: int = 0

    @property
    def n_psi_calls(self):
        return len(self.calls)

    @property
    def psi_time(self):
        return sum(c.wall_s for c in self.calls)

    @property
    def total_cg_iters(self):
        return sum(c.cg_iters for c in self.calls)

    @property
    def converged(self):
        return self.status == "converged"

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(TRACE_COLUMNS)
            for r in self.records:
                wr.writerow([repr(getattr(r, c)) for c in TRACE_COLUMNS])

    def write_calls_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(CALL_COLUMNS)
            for c in self.calls:
                wr.writerow([repr(getattr(c, k)) for k in CALL_COLUMNS])


def read_trace_csv(path):
    """Load a trace CSV written by :meth:`FlowTrace.write_csv` as a dict of arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in
            (rows[0].keys() if rows else TRACE_COLUMNS)}


# ------------------------------------------------------------------- loop ---

def run_flow(problem, w0, settings, sw=None, f0=1.0, callback=None):
    """Integrate the gradient flow from the unscaled point ``w0``.

    Returns a :class:`FlowTrace`; ``status`` is ``"converged"`` when
    ``||Psi|| <= tau_psi``, ``"budget"`` when ``t_max`` (or ``max_steps``) is
    exhausted, and ``"failed"`` on numerical breakdown.
    """
    s = settings
    sw = np.ones(problem.dim_w) if sw is None else np.asarray(sw, dtype=float)
    wbar = np.asarray(w0, dtype=float) / sw
    state = {"lam_unscaled": None}

    def psi_at(x, tau):
        t_start = time.perf_counter()
        w = sw * x
        sg, _ = equilibrate_rows(problem, w, sw)
        lam0 = None
        if s.warm_start and state["lam_unscaled"] is not None:
            lam0 = state["lam_unscaled"] * sg
        ev = compute_psi(problem, x, sw, sg, f0, tau, cg_max_iter=s.cg_max_iter,
                         lam0=lam0, solver=s.solver)
        # the call time covers row equilibration as well
        ev.wall_s = time.perf_counter() - t_start
        return ev

    def remember(ev):
        if ev.lam.size:
            state["lam_unscaled"] = ev.lam / ev.sg

    def cg_tol(history):
        if not s.adaptive_tolerances:
            return s.tau_cg
        return lambda g: update_cg_tolerance(history, s.k_tau, g,
                                             default=s.tau_cg, floor=s.tau_cg_floor)

    try:
        ev = psi_at(wbar, cg_tol(None))
    except FlowError as exc:
        log.error("initial field evaluation failed: %s", exc)
        nan_rec = StepRecord(0.0, 0.0, math.nan, math.nan, math.nan, math.nan,
                             math.nan, 0, 0.0)
        return FlowTrace(initial=nan_rec, w=sw * wbar, wbar=wbar, status="failed")
    if not ev.converged:
        log.warning("CG did not reach tolerance at the initial point")
    remember(ev)

    tau_rk = s.k_tau * ev.norm_psi if s.adaptive_tolerances else math.nan
    if s.adaptive_tolerances and not tau_rk > 0:
        tau_rk = s.tau_rk_abs
    trace = FlowTrace(initial=StepRecord(0.0, 0.0, ev.norm_psi, ev.norm_g, ev.cost,
                                         ev.tau_cg, tau_rk, ev.cg_iters, ev.wall_s))
    trace.calls.append(CallRecord(0.0, 0.0, True, ev.cg_iters, ev.converged,
                                  ev.tau_cg, ev.wall_s))

    t = 0.0
    dt = s.dt0
    halvings = 0
    history = TolHistory(ev.norm_psi, ev.rhs_norm, ev.jt_lam_norm)
    status = "running"
    while True:
        if ev.norm_psi <= s.tau_psi:
            status = "converged"
            break
        if t >= s.t_max or (s.max_steps is not None and len(trace.records) >= s.max_steps):
            status = "budget"
            break
        k1 = ev.psi
        dt_try = min(dt, s.dt_max, s.t_max - t) if s.adaptive_step else dt
        dt_try = max(dt_try, 1e-300)
        tau = cg_tol(history)
        try:
            if s.adaptive_step:
                out = rk12_advance(lambda x: psi_at(x, tau), wbar, k1, dt_try,
                                   tau_abs=s.tau_rk_abs, tau_rel=s.tau_rk_rel,
                                   tau_rk=tau_rk if s.adaptive_tolerances else None)
                ev_new, w_new, eps = out.k2, out.w_euler, out.eps
            else:
                w_new = wbar + dt_try * k1
                ev_new = psi_at(w_new, tau)
                eps = 0.0
        except FlowError as exc:
            log.error("field evaluation failed at t=%g: %s", t, exc)
            status = "failed"
            break

        if not (np.all(np.isfinite(w_new)) and np.isfinite(ev_new.norm_psi)):
            trace.calls.append(CallRecord(t, dt_try, False, ev_new.cg_iters,
                                          ev_new.converged, ev_new.tau_cg, ev_new.wall_s))
            log.error("non-finite state at t=%g", t)
            status = "failed"
            break

        if not ev_new.converged:
            trace.calls.append(CallRecord(t, dt_try, False, ev_new.cg_iters, False,
                                          ev_new.tau_cg, ev_new.wall_s))
            trace.n_cg_failures += 1
            halvings += 1
            if halvings > s.max_halvings:
                log.error("CG failed after %d step halvings", s.max_halvings)
                status = "failed"
                break
            dt = 0.5 * dt_try
            continue
        halvings = 0

        accepted = eps <= 1.0
        trace.calls.append(CallRecord(t, dt_try, accepted, ev_new.cg_iters, True,
                                      ev_new.tau_cg, ev_new.wall_s))
        if s.adaptive_step:
            dt_next = update_timestep(eps, dt_try, s.fac, s.fac_min, s.fac_max)
        else:
            dt_next = dt
        if not accepted:
            trace.n_rejected += 1
            dt = dt_next
            continue

        w_prev, psi_prev = wbar, ev.psi
        wbar, ev = w_new, ev_new
        t += dt_try
        remember(ev)
        history = TolHistory(ev.norm_psi, ev.rhs_norm, ev.jt_lam_norm)
        if s.adaptive_tolerances:
            tau_rk = update_rk_tolerance(tau_rk, s.k_tau, ev.psi, psi_prev, wbar, w_prev)
        rec = StepRecord(t, dt_try, ev.norm_psi, ev.norm_g, ev.cost, ev.tau_cg,
                         tau_rk, ev.cg_iters, ev.wall_s)
        trace.records.append(rec)
        if callback is not None:
            callback(rec, sw * wbar)
        dt = dt_next

    trace.status = status
    trace.wbar = wbar
    trace.w = sw * wbar
    trace.final = ev
    return trace


def settings_dict(settings):
    """Plain dict of a :class:`FlowSettings`, for serialization."""
    return {f.name: getattr(settings, f.name) for f in fields(settings)}


__all__ = [
    "FlowError", "FlowProblem", "Scalings", "FlowSettings", "preset", "MODES",
    "init_slacks", "augmented_constraint", "equilibrate_rows", "CGResult",
    "cg_solve", "PsiResult", "compute_psi", "StepOutcome", "rk12_advance",
    "normalized_error", "update_timestep", "TolHistory", "update_cg_tolerance",
    "update_rk_tolerance", "StepRecord", "CallRecord", "FlowTrace", "run_flow",
    "read_trace_csv", "settings_dict", "TRACE_COLUMNS",
]
