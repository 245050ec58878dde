"""Frequency-domain interaction model for arrays of heaving cylinders.

Each device scatters a field written in cylindrical harmonics with
``M = (2 N_n + 1)(N_m + 1)`` coefficients, stored mode-major: index
``m * (2 N_n + 1) + (n + N_n)`` for angular order ``n`` and depth mode ``m``
(``m = 0`` progressive, ``m >= 1`` evanescent).

For one frequency the state residual is written through the incident-field
coefficients seen by device ``l``,

    A_l = (H/2) a_l + sum_{m != l} T_{ml}^T (gamma_m + R zeta_m),

as ``e_gamma,l = B A_l - gamma_l`` and ``e_zeta,l = yb^T A_l / W_l + zeta_l``
with ``yb = Btilde^T Yd``.
"""

from __future__ import annotations

import json
import logging
import math
import zipfile
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .bessel import bessel_eval

log = logging.getLogger(__name__)

COEFF_FORMAT = "wecflow-coeffs"
COEFF_VERSION = 1
DENSE_LIMIT = 4000


class CoefficientFileError(ValueError):
    """Malformed or inconsistent single-body coefficient file."""


class StateSolveError(RuntimeError):
    """The state system could not be solved at some frequency."""


def n_coeffs(n_prog, n_evan):
    return (2 * n_prog + 1) * (n_evan + 1)


@dataclass(frozen=True)
class DeviceGeometry:
    """Cylindrical point absorber: radius, draft, mass and hydrostatic stiffness."""

    radius: float = 2.0
    draft: float = 0.5
    mass: float | None = None
    k_hydro: float | None = None
    rho: float = 1025.0
    g: float = 9.81

    def __post_init__(self):
        area = math.pi * self.radius ** 2
        if self.mass is None:
            object.__setattr__(self, "mass", self.rho * area * self.draft)
        if self.k_hydro is None:
            object.__setattr__(self, "k_hydro", self.rho * self.g * area)

    def as_dict(self):
        return dict(radius=self.radius, draft=self.draft, mass=self.mass,
                    k_hydro=self.k_hydro, rho=self.rho, g=self.g)


@dataclass
class SingleBodyCoeffs:
    """Isolated-device hydrodynamic data, one slice per frequency.

    Arrays: ``omega (Nf,)``, ``B (Nf, M, M)``, ``R (Nf, M)``, ``Yd (Nf, M)``,
    ``Yr (Nf,)``, ``Btilde (Nf, M, M)``.
    """

    omega: np.ndarray
    B: np.ndarray
    R: np.ndarray
    Yd: np.ndarray
    Yr: np.ndarray
    Btilde: np.ndarray
    n_prog: int
    n_evan: int
    geometry: DeviceGeometry = field(default_factory=DeviceGeometry)

    def __post_init__(self):
        self.validate()

    @property
    def n_freq(self):
        return self.omega.size

    @property
    def size(self):
        return n_coeffs(self.n_prog, self.n_evan)

    @property
    def yb(self):
        """``Btilde^T Yd`` per frequency, shape ``(Nf, M)``."""
        return np.einsum("qij,qi->qj", self.Btilde, self.Yd)

    def validate(self):
        M, nf = self.size, np.size(self.omega)
        dims = f"(N_n={self.n_prog}, N_m={self.n_evan}) => M={M}"
        expected = {"B": (nf, M, M), "R": (nf, M), "Yd": (nf, M), "Yr": (nf,),
                    "Btilde": (nf, M, M)}
        for name, shape in expected.items():
            arr = getattr(self, name)
            if np.shape(arr) != shape:
                raise CoefficientFileError(
                    f"field {name!r} has shape {np.shape(arr)}, expected {shape} for {dims}")
            if not np.all(np.isfinite(arr)):
                raise CoefficientFileError(f"field {name!r} has non-finite entries")

    def check_waves(self, waves, rtol=1e-10):
        if self.n_freq != waves.n_freq or not np.allclose(self.omega, waves.omega, rtol=rtol, atol=0):
            raise CoefficientFileError("coefficient frequencies do not match the wave set")
        if waves.n_evan < self.n_evan:
            raise CoefficientFileError(
                f"wave set has {waves.n_evan} evanescent modes, coefficients need {self.n_evan}")

    def subset(self, idx):
        idx = np.atleast_1d(idx)
        return SingleBodyCoeffs(self.omega[idx], self.B[idx], self.R[idx], self.Yd[idx],
                                self.Yr[idx], self.Btilde[idx], self.n_prog, self.n_evan,
                                self.geometry)

    def save(self, path):
        meta = dict(format=COEFF_FORMAT, version=COEFF_VERSION, n_prog=self.n_prog,
                    n_evan=self.n_evan, geometry=self.geometry.as_dict(),
                    units=dict(omega="rad/s", radius="m", draft="m", mass="kg",
                               k_hydro="N/m"))
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), omega=self.omega, B=self.B,
                     R=self.R, Yd=self.Yd, Yr=self.Yr, Btilde=self.Btilde)


def load_coeffs(path):
    """Read and dimension-check a coefficient file written by :meth:`SingleBodyCoeffs.save`."""
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except FileNotFoundError:
        raise
    except (zipfile.BadZipFile, EOFError, OSError, ValueError) as exc:
        raise CoefficientFileError(f"{path}: cannot parse coefficient file ({exc})") from exc
    missing = {"meta", "omega", "B", "R", "Yd", "Yr", "Btilde"} - set(arrays)
    if missing:
        raise CoefficientFileError(f"{path}: missing fields {sorted(missing)}")
    meta = json.loads(str(arrays.pop("meta")))
    if meta.get("format") != COEFF_FORMAT:
        raise CoefficientFileError(f"{path}: not a coefficient file")
    if meta.get("version") != COEFF_VERSION:
        raise CoefficientFileError(f"{path}: unsupported version {meta.get('version')}")
    return SingleBodyCoeffs(n_prog=int(meta["n_prog"]), n_evan=int(meta["n_evan"]),
                            geometry=DeviceGeometry(**meta["geometry"]), **arrays)


# ------------------------------------------------------- synthetic fixture ---

def group_velocity(omega, k, depth):
    kd = k * depth
    return 0.5 * omega / k * (1.0 + (2.0 * kd / math.sinh(2.0 * kd) if kd < 350 else 0.0))


def excitation_reference(omega, k, depth, geometry):
    """Froude-Krylov heave excitation area [m^2] of a floating cylinder."""
    r, d = geometry.radius, geometry.draft
    kr = k * r
    depth_factor = math.cosh(k * (depth - d)) / math.cosh(k * depth) if k * depth < 350 \
        else math.exp(-k * d)
    return math.pi * r ** 2 * depth_factor * 2.0 * bessel_eval("J", 1, kr) / kr


def synth_coeffs(geometry, waves, n_prog, n_evan, seed=0, coupling=0.1):
    """Deterministic, physically scaled stand-in for single-body coefficients.

    Blocks respect axisymmetry (no coupling between angular orders, identical
    blocks for ``+n`` and ``-n``).  Heave excitation follows the Froude-Krylov
    estimate, radiation damping follows the Haskind relation and the radiated
    wave amplitude carries the matching energy flux.  ``coupling`` scales the
    diffraction matrix; ``coupling=0`` also removes radiated waves, which
    decouples the devices entirely.
    """
    rng = np.random.default_rng(seed)
    P, nm = 2 * n_prog + 1, n_evan + 1
    M = P * nm
    nf = waves.n_freq
    r = geometry.radius
    rho, g = waves.rho, waves.g

    def idx(n, m):
        return m * P + n + n_prog

    def crandn(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    B = np.zeros((nf, M, M), complex)
    Bt = np.zeros((nf, M, M), complex)
    R = np.zeros((nf, M), complex)
    Yd = np.zeros((nf, M), complex)
    Yr = np.zeros(nf, complex)
    mode_decay = 1.0 / (1.0 + np.arange(nm))
    for q in range(nf):
        w, k = waves.omega[q], waves.k[q]
        for n in range(n_prog + 1):
            blk = crandn(nm, nm) * np.outer(mode_decay, mode_decay)
            blk *= coupling * 0.5 ** n / max(1.0, np.linalg.norm(blk, 2))
            tblk = np.eye(nm) + 0.05 * crandn(nm, nm) * np.outer(mode_decay, mode_decay)
            for sgn in {n, -n}:
                ii = [idx(sgn, m) for m in range(nm)]
                B[q][np.ix_(ii, ii)] = blk
                Bt[q][np.ix_(ii, ii)] = tblk
        zero_n = [idx(0, m) for m in range(nm)]
        Yd[q, zero_n] = np.concatenate([[1.0], 0.2 * crandn(nm - 1) * mode_decay[1:]])
        x0 = excitation_reference(w, k, waves.depth, geometry)
        yb00 = (Bt[q].T @ Yd[q])[idx(0, 0)]
        Yd[q] *= x0 / (yb00 * bessel_eval("J", 0, k * r))

        cg = group_velocity(w, k, waves.depth)
        b_rad = k * rho * g * x0 ** 2 / (4.0 * cg)
        added_mass = 4.0 / 3.0 * rho * r ** 3
        Yr[q] = (w * b_rad - 1j * w ** 2 * added_mass) / (rho * g)
        if coupling > 0:
            h0 = abs(bessel_eval("H1", 0, k * r))
            r00 = math.sqrt(b_rad * w ** 2 * k / (4.0 * rho * g * cg)) * h0
            R[q, idx(0, 0)] = r00 * np.exp(2j * math.pi * rng.random())
            R[q, zero_n[1:]] = 0.1 * r00 * crandn(nm - 1) * mode_decay[1:]
    return SingleBodyCoeffs(waves.omega.copy(), B, R, Yd, Yr, Bt, n_prog, n_evan, geometry)


# --------------------------------------------------------------- geometry ---

def pair_geometry(X):
    """Distances ``L[i, j] = |x_j - x_i|`` and angles of ``x_j - x_i``."""
    X = np.asarray(X, dtype=float)
    d = X[None, :, :] - X[:, None, :]
    L = np.hypot(d[..., 0], d[..., 1])
    alpha = np.arctan2(d[..., 1], d[..., 0])
    off = ~np.eye(len(X), dtype=bool)
    if np.any(L[off] == 0):
        raise ValueError("device centers must be pairwise distinct")
    return L, alpha


def dL_dalpha(L, alpha):
    """Derivatives of ``L_ij`` and ``alpha_ij`` with respect to ``(x_i, y_i, x_j, y_j)``.

    Solves ``[[cos a, -L sin a], [sin a, L cos a]] [dL, da]^T = rhs`` for each
    coordinate; returns arrays ``(dL, da)`` with a trailing axis of length 4.
    """
    L = np.asarray(L, dtype=float)
    if np.any(L <= 0):
        raise ValueError("pair distance must be positive")
    c, s = np.cos(alpha), np.sin(alpha)
    # inverse of the 2x2 matrix, determinant L
    dL_j = np.stack([c, s], -1)
    da_j = np.stack([-s / L, c / L], -1)
    dL = np.concatenate([-dL_j, dL_j], -1)
    da = np.concatenate([-da_j, da_j], -1)
    return dL, da


def transform_blocks(X, k, k_evan, radius, n_prog, derivatives=False):
    """Block-diagonal basis-transformation matrices for all ordered pairs.

    Returns ``T`` of shape ``(Nb, Nb, N_m + 1, P, P)`` with ``T[i, j, m]`` the
    mode-``m`` block of ``T_ij`` (rows ``n``, columns ``l``), zero on the
    diagonal ``i == j``.  With ``derivatives`` also returns the partial
    derivatives with respect to ``L_ij`` and ``alpha_ij``.
    """
    X = np.asarray(X, dtype=float)
    nb = len(X)
    L, alpha = pair_geometry(X)
    off = ~np.eye(nb, dtype=bool)
    orders = np.arange(-n_prog, n_prog + 1)
    nu = orders[:, None] - orders[None, :]
    phase = np.exp(1j * alpha[:, :, None, None] * nu)
    k_all = np.concatenate([[k], np.asarray(k_evan, dtype=float)])
    nm = k_all.size
    P = orders.size
    T = np.zeros((nb, nb, nm, P, P), complex)
    TL = np.zeros_like(T) if derivatives else None
    # radial factors depend on nu only through a few distinct orders, and L
    # is symmetric, so evaluate them once per order on the upper-triangle pairs
    iu = np.triu_indices(nb, 1)
    span = np.arange(-2 * n_prog - 1, 2 * n_prog + 2)
    pick = nu + 2 * n_prog + 1
    for m, km in enumerate(k_all):
        kL = km * L[iu][:, None]
        vals = np.zeros((nb, nb, span.size), complex)
        if m == 0:
            fac = bessel_eval("J", orders[None, :], k * radius) / \
                bessel_eval("H1", orders[:, None], k * radius)
            vals[iu] = bessel_eval("H1", span[None, :], kL)
        else:
            fac = bessel_eval("I", orders[None, :], km * radius) / \
                bessel_eval("K", orders[:, None], km * radius) * (-1.0) ** orders[None, :]
            vals[iu] = bessel_eval("K", span[None, :], kL)
        vals[(iu[1], iu[0])] = vals[iu]
        T[:, :, m] = fac * vals[:, :, pick] * phase
        if derivatives:
            lo, hi = vals[:, :, pick - 1], vals[:, :, pick + 1]
            # H' = (H_{nu-1} - H_{nu+1}) / 2,  K' = -(K_{nu-1} + K_{nu+1}) / 2
            dbase = 0.5 * (lo - hi) if m == 0 else -0.5 * (lo + hi)
            TL[:, :, m] = fac * km * dbase * phase
    T[~off] = 0.0
    if not derivatives:
        return T
    TL[~off] = 0.0
    Ta = 1j * nu * T
    return T, TL, Ta


def full_transform(T_pair):
    """Dense ``M x M`` matrix from the ``(N_m + 1, P, P)`` blocks of one pair."""
    nm, P, _ = T_pair.shape
    out = np.zeros((nm * P, nm * P), complex)
    for m in range(nm):
        out[m * P:(m + 1) * P, m * P:(m + 1) * P] = T_pair[m]
    return out


def ambient_coeffs(X, beta, k, n_prog, n_evan, radius):
    """Ambient-wave coefficients ``a_l``, shape ``(Nb, M)``; evanescent entries vanish."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    orders = np.arange(-n_prog, n_prog + 1)
    theta = np.exp(1j * k * (X[:, 0] * math.cos(beta) + X[:, 1] * math.sin(beta)))
    prog = bessel_eval("J", orders, k * radius) * np.exp(1j * orders * (math.pi / 2 - beta))
    out = np.zeros((len(X), n_coeffs(n_prog, n_evan)), complex)
    out[:, :orders.size] = theta[:, None] * prog[None, :]
    return out


def mechanical_impedance(omega, geometry, c, kappa, Yr, rho=None, g=None):
    """``W = Yr - i (omega^2 m + i omega c - k_h - kappa) / (rho g)``."""
    rho = geometry.rho if rho is None else rho
    g = geometry.g if g is None else g
    c = np.asarray(c, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    return Yr - 1j * (omega ** 2 * geometry.mass + 1j * omega * c
                      - geometry.k_hydro - kappa) / (rho * g)


# ------------------------------------------------------ per-frequency state ---

class FrequencyOperator:
    """State operator for one frequency at fixed decision variables.

    Blocks are applied matrix-free through the pairwise transformation
    matrices; :meth:`assemble` builds the dense system for small instances.
    """

    def __init__(self, coeffs, waves, q, X, c, kappa, derivatives=False):
        self.q = q
        self.omega = waves.omega[q]
        self.H = waves.H[q]
        self.k = waves.k[q]
        self.k_evan = waves.k_evan[q, :coeffs.n_evan]
        self.beta = waves.beta
        self.rho, self.g = waves.rho, waves.g
        self.n_prog, self.n_evan = coeffs.n_prog, coeffs.n_evan
        self.P = 2 * coeffs.n_prog + 1
        self.nm = coeffs.n_evan + 1
        self.M = coeffs.size
        self.X = np.asarray(X, dtype=float)
        self.nb = len(self.X)
        self.geometry = coeffs.geometry
        self.B = coeffs.B[q]
        self.R = coeffs.R[q]
        self.yb = coeffs.yb[q]
        self.Yr = coeffs.Yr[q]
        self.W = mechanical_impedance(self.omega, coeffs.geometry, c, kappa, self.Yr,
                                      self.rho, self.g)
        blocks = transform_blocks(self.X, self.k, self.k_evan, coeffs.geometry.radius,
                                  self.n_prog, derivatives)
        if derivatives:
            self.T, self.TL, self.Ta = blocks
        else:
            self.T, self.TL, self.Ta = blocks, None, None
        self.a = ambient_coeffs(self.X, self.beta, self.k, self.n_prog, self.n_evan,
                                coeffs.geometry.radius)

    # -- transfer between devices -------------------------------------------
    def _blocks(self, v):
        return v.reshape(self.nb, self.nm, self.P)

    def _stacked(self, T):
        """Blocks reordered to ``(d, m, s*n, l)`` for batched products."""
        nb, nm, P = self.nb, self.nm, self.P
        return np.ascontiguousarray(T.transpose(1, 2, 0, 3, 4).reshape(nb, nm, nb * P, P))

    @property
    def T_stacked(self):
        if getattr(self, "_T_stacked", None) is None:
            self._T_stacked = self._stacked(self.T)
            self._T_stacked_conj = self._T_stacked.conj()
        return self._T_stacked

    def transfer(self, S, T=None):
        """``sum_s T[s, d]^T S_s`` for every receiving device ``d``."""
        if T is not None:
            return np.einsum("sdmnl,smn->dml", T, self._blocks(S)).reshape(self.nb, self.M)
        Sm = self._blocks(S).transpose(1, 0, 2).reshape(self.nm, self.nb * self.P)
        return np.matmul(Sm[None, :, None, :], self.T_stacked)[:, :, 0, :].reshape(self.nb, self.M)

    def transfer_adjoint(self, Q, T=None):
        if T is not None:
            return np.einsum("sdmnl,dml->smn", T.conj(), self._blocks(Q)).reshape(self.nb, self.M)
        self.T_stacked
        r = np.matmul(self._T_stacked_conj, self._blocks(Q)[..., None])[..., 0].sum(axis=0)
        return r.reshape(self.nm, self.nb, self.P).transpose(1, 0, 2).reshape(self.nb, self.M)

    def pair_products(self, S, T):
        """Per-pair contributions ``T[s, d]^T S_s`` with shape ``(s, d, m, l)``."""
        return np.einsum("sdmnl,smn->sdml", T, self._blocks(S), optimize=True)

    # -- residual ------------------------------------------------------------
    def scattered(self, gamma, zeta):
        return gamma + zeta[:, None] * self.R[None, :]

    def incident(self, gamma, zeta):
        return 0.5 * self.H * self.a + self.transfer(self.scattered(gamma, zeta))

    def residual(self, gamma, zeta):
        """``(e_gamma (Nb, M), e_zeta (Nb,))`` for state arrays of the same shapes."""
        A = self.incident(gamma, zeta)
        return A @ self.B.T - gamma, (A @ self.yb) / self.W + zeta

    def forcing(self):
        """Right-hand sides ``h_gamma = -(H/2) B a`` and ``h_zeta = -(H/2W) yb^T a``."""
        return -0.5 * self.H * self.a @ self.B.T, -0.5 * self.H * (self.a @ self.yb) / self.W

    def apply(self, dgamma, dzeta):
        """Linear part of the residual (the state matrix times ``(dgamma, dzeta)``)."""
        A = self.transfer(self.scattered(dgamma, dzeta))
        return A @ self.B.T - dgamma, (A @ self.yb) / self.W + dzeta

    def apply_adjoint(self, pg, pz):
        qA = pg @ self.B.conj() + np.outer(pz / self.W.conj(), self.yb.conj())
        S = self.transfer_adjoint(qA)
        return S - pg, pz + S @ self.R.conj()

    def assemble(self):
        """Dense state matrix and right-hand side (unknowns ``[gamma_1..gamma_Nb, zeta]``)."""
        nb, M = self.nb, self.M
        n = nb * M + nb
        K = np.zeros((n, n), complex)
        for l in range(nb):
            K[l * M:(l + 1) * M, l * M:(l + 1) * M] = -np.eye(M)
            K[nb * M + l, nb * M + l] = 1.0
            for m in range(nb):
                if m == l:
                    continue
                Tt = full_transform(self.T[m, l]).T
                BT = self.B @ Tt
                K[l * M:(l + 1) * M, m * M:(m + 1) * M] = BT
                K[l * M:(l + 1) * M, nb * M + m] = BT @ self.R
                row = self.yb @ Tt / self.W[l]
                K[nb * M + l, m * M:(m + 1) * M] = row
                K[nb * M + l, nb * M + m] = row @ self.R
        hg, hz = self.forcing()
        return K, np.concatenate([hg.ravel(), hz])

    def solve(self, tol=1e-10, method="auto"):
        """Solve the state system; returns ``(gamma (Nb, M), zeta (Nb,))``."""
        nb, M = self.nb, self.M
        n = nb * M + nb
        if method == "auto":
            method = "dense" if n <= DENSE_LIMIT else "gmres"
        hg, hz = self.forcing()
        rhs = np.concatenate([hg.ravel(), hz])
        if method == "dense":
            K, _ = self.assemble()
            try:
                x = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError as exc:
                raise StateSolveError(f"singular state matrix at frequency {self.q}") from exc
        else:
            def mv(v):
                eg, ez = self.apply(v[:nb * M].reshape(nb, M), v[nb * M:])
                return np.concatenate([eg.ravel(), ez])
            op = LinearOperator((n, n), matvec=mv, dtype=complex)
            x, info = gmres(op, rhs, rtol=tol, atol=0.0, restart=min(n, 200), maxiter=50)
            if info != 0:
                raise StateSolveError(f"GMRES failed (info={info}) at frequency {self.q}")
        if not np.all(np.isfinite(x)):
            raise StateSolveError(f"non-finite state at frequency {self.q}")
        return x[:nb * M].reshape(nb, M), x[nb * M:]


def state_residual(X, c, kappa, gamma, zeta, coeffs, waves):
    """Residuals for all frequencies; ``gamma (Nf, Nb, M)``, ``zeta (Nf, Nb)``."""
    eg = np.empty_like(gamma, dtype=complex)
    ez = np.empty_like(zeta, dtype=complex)
    for q in range(waves.n_freq):
        op = FrequencyOperator(coeffs, waves, q, X, c, kappa)
        eg[q], ez[q] = op.residual(gamma[q], zeta[q])
    return eg, ez


def solve_state(X, c, kappa, coeffs, waves, tol=1e-10, method="auto"):
    """Solve every frequency independently; returns ``gamma (Nf, Nb, M)``, ``zeta (Nf, Nb)``."""
    nb = len(np.atleast_2d(X))
    gamma = np.empty((waves.n_freq, nb, coeffs.size), complex)
    zeta = np.empty((waves.n_freq, nb), complex)
    for q in range(waves.n_freq):
        op = FrequencyOperator(coeffs, waves, q, X, c, kappa)
        gamma[q], zeta[q] = op.solve(tol, method)
    return gamma, zeta
