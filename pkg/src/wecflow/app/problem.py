"""Bind the hydrodynamic model, constraints and scalings into a flow problem."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ..differentials import WECModel
from ..flow import init_slacks
from ..hydro import ambient_coeffs, mechanical_impedance, solve_state


@dataclass
class ScalingRefs:
    """Reference magnitudes used to build the diagonal variable scaling ``sw``."""

    length: float
    damping: float
    stiffness: float
    amplitude: float
    slack_sl: float
    slack_ad: float
    slack_md: float


@dataclass
class AssembledProblem:
    model: WECModel
    w0: np.ndarray
    sw: np.ndarray
    f0: float
    refs: ScalingRefs

    @property
    def layout(self):
        return self.model.layout

    def design(self, w):
        """Physical decision variables of a packed iterate."""
        v = self.layout.unpack_w(np.asarray(w, dtype=float))
        return dict(X=v["X"].copy(), c=v["c"].copy(), kappa=v["kappa"].copy())


def grid_layout(n, bbox):
    """``n`` points at the centers of a near-square grid covering ``bbox``."""
    x0, y0, x1, y1 = bbox
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    xs = x0 + (np.arange(cols) + 0.5) * (x1 - x0) / cols
    ys = y0 + (np.arange(rows) + 0.5) * (y1 - y0) / rows
    pts = np.array([(x, y) for y in ys for x in xs])
    return pts[:n]


def reference_power(coeffs, waves, n_bodies):
    """Power [W] absorbed by ``n_bodies`` isolated devices, each optimally
    controlled at every frequency separately (``|F|^2 / 8 B_rad`` per component)."""
    total = 0.0
    for q in range(waves.n_freq):
        a = ambient_coeffs(np.zeros((1, 2)), waves.beta, waves.k[q], coeffs.n_prog,
                           coeffs.n_evan, coeffs.geometry.radius)[0]
        x = abs(coeffs.yb[q] @ a)
        total += (waves.rho * waves.g * waves.omega[q] * x ** 2 * (0.5 * waves.H[q]) ** 2
                  / (8.0 * coeffs.Yr[q].real))
    return n_bodies * total


@dataclass(frozen=True)
class IsolatedOptimum:
    """Best single (c, kappa) pair for one device without neighbors."""

    power: float
    c: float
    kappa: float


def isolated_optimum(coeffs, waves, alpha=1.0, draft=None):
    """Maximize the mean power of one isolated device over its damping and
    stiffness, subject to the slamming bound.  Used to set reference scales."""
    geo = coeffs.geometry
    draft = geo.draft if draft is None else draft
    X = np.empty(waves.n_freq, complex)
    for q in range(waves.n_freq):
        a = ambient_coeffs(np.zeros((1, 2)), waves.beta, waves.k[q], coeffs.n_prog,
                           coeffs.n_evan, geo.radius)[0]
        X[q] = coeffs.yb[q] @ a
    eta = 0.5j * waves.H
    c_ref = waves.rho * waves.g * geo.radius ** 2 / float(np.mean(waves.omega))
    k_ref = geo.k_hydro

    def zeta(p):
        W = mechanical_impedance(waves.omega, geo, p[0] * c_ref, p[1] * k_ref, coeffs.Yr,
                                 waves.rho, waves.g)
        return -0.5 * waves.H * X / W

    def neg_power(p):
        return -0.5 * p[0] * c_ref * float(np.sum((waves.omega * np.abs(zeta(p))) ** 2))

    def slam(p):
        return 2.0 * alpha ** 2 * draft ** 2 - float(np.sum(np.abs(zeta(p) - eta) ** 2))

    best = None
    for k0 in (0.0, -0.5, -1.0):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(neg_power, [1.0, k0], method="SLSQP",
                           constraints=[{"type": "ineq", "fun": slam}],
                           bounds=[(1e-6, None), (None, None)])
        if res.success and slam(res.x) > -1e-8 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise RuntimeError("isolated-device control optimization failed")
    return IsolatedOptimum(-float(best.fun), float(best.x[0] * c_ref), float(best.x[1] * k_ref))


def scaling_vector(layout, refs):
    nb, nf, M = layout.nb, layout.nf, layout.M
    parts = [np.full(2 * nb, refs.length), np.full(nb, refs.damping),
             np.full(nb, refs.stiffness), np.full(2 * nf * nb * M, refs.amplitude),
             np.full(2 * nf * nb, refs.amplitude), np.full(nb, refs.slack_sl),
             np.full(nb, refs.slack_ad), np.full(layout.n_pairs, refs.slack_md)]
    return np.concatenate(parts)


def assemble_problem(coeffs, waves, domain, X0, c0, kappa0, *, alpha=1.0, draft=None,
                     d_min=10.0, refs=None, f0=None, state_tol=1e-12):
    """Build the packed initial point and scalings for a park of ``len(X0)`` devices.

    The initial scattering and motion amplitudes solve the state equations,
    so the equality rows start (numerically) satisfied; slacks make the
    satisfied inequality rows exact.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    nb = len(X0)
    c0 = np.broadcast_to(np.asarray(c0, dtype=float), (nb,)).copy()
    kappa0 = np.broadcast_to(np.asarray(kappa0, dtype=float), (nb,)).copy()
    if X0.shape != (nb, 2):
        raise ValueError(f"positions must have shape (N_b, 2), got {X0.shape}")
    model = WECModel(coeffs, waves, domain, nb, alpha=alpha, draft=draft, d_min=d_min)
    lay = model.layout
    gamma, zeta = solve_state(X0, c0, kappa0, coeffs, waves, tol=state_tol)
    zeros = np.zeros
    w = lay.pack_w(X0, c0, kappa0, gamma, zeta, zeros(nb), zeros(nb), zeros(lay.n_pairs))
    h0 = model.inequality_values(w)
    s0 = init_slacks(h0)
    sl = lay.w_slices
    w[sl["s_sl"]] = s0[:nb]
    w[sl["s_ad"]] = s0[nb:2 * nb]
    w[sl["s_md"]] = s0[2 * nb:]
    if refs is None:
        raise ValueError("scaling references are required")
    sw = scaling_vector(lay, refs)
    if f0 is None:
        f0 = reference_power(coeffs, waves, nb)
    return AssembledProblem(model, w, sw, float(f0), refs)

