"""Sea-state spectrum, its discretization into regular waves, and dispersion roots."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma

GRAVITY = 9.81
RHO = 1025.0


@dataclass(frozen=True)
class SeaState:
    """Unidirectional sea state.

    Hs [m], Te [s], beta [rad], depth [m], rho [kg/m^3], g [m/s^2].
    """

    Hs: float
    Te: float
    beta: float = 0.0
    depth: float = 30.0
    rho: float = RHO
    g: float = GRAVITY

    def __post_init__(self):
        if not (self.Hs > 0 and self.Te > 0 and self.depth > 0):
            raise ValueError("Hs, Te and depth must be positive")

    @property
    def pm_coefficients(self):
        """``(A, B)`` of ``S(w) = A w^-5 exp(-B w^-4)``.

        The energy period is defined on cyclic-frequency moments, which in
        angular frequency reads ``Te = 2 pi m_-1 / m_0``.
        """
        B = (2.0 * math.pi * gamma(1.25) / self.Te) ** 4
        return B * self.Hs ** 2 / 4.0, B

    @property
    def m0(self):
        return self.Hs ** 2 / 16.0


def pm_spectrum(omega, sea):
    """Pierson-Moskowitz spectral density [m^2 s] at angular frequency ``omega``."""
    A, B = sea.pm_coefficients
    omega = np.asarray(omega, dtype=float)
    out = np.zeros_like(omega)
    pos = omega > 0
    wp = omega[pos]
    out[pos] = A * wp ** -5 * np.exp(-B * wp ** -4)
    return out if out.ndim else float(out)


def cumulative_energy(omega, sea):
    """``int_0^omega S`` in closed form (``m0 exp(-B omega^-4)``)."""
    _, B = sea.pm_coefficients
    omega = np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        out = np.where(omega > 0, sea.m0 * np.exp(-B / np.where(omega > 0, omega, 1.0) ** 4), 0.0)
    return out if out.ndim else float(out)


def spectral_moment(sea, n, freq="angular"):
    """Closed-form moment ``int x^n S dx`` over angular or cyclic frequency."""
    A, B = sea.pm_coefficients
    if n >= 4:
        raise ValueError("moments of order >= 4 diverge for this spectrum")
    m = 0.25 * A * B ** ((n - 4) / 4.0) * gamma(1.0 - n / 4.0)
    if freq == "cyclic":
        m /= (2.0 * math.pi) ** n
    return m


def truncation_bounds(sea, neglect_fraction=0.02):
    """Frequencies leaving ``neglect_fraction/2`` of the energy in each tail."""
    if not 0 < neglect_fraction < 0.5:
        raise ValueError("neglect_fraction must lie in (0, 0.5)")
    _, B = sea.pm_coefficients
    half = 0.5 * neglect_fraction
    # inverse of the closed-form cumulative energy
    omega_l = (B / math.log(1.0 / half)) ** 0.25
    omega_r = (B / -math.log1p(-half)) ** 0.25
    return omega_l, omega_r


@dataclass
class WaveSet:
    """Discretized sea state: one regular wave per frequency bin.

    ``k_evan`` has shape ``(N_f, N_m)`` and holds the evanescent wavenumbers.
    """

    omega: np.ndarray
    H: np.ndarray
    k: np.ndarray
    k_evan: np.ndarray
    beta: float = 0.0
    depth: float = 30.0
    rho: float = RHO
    g: float = GRAVITY

    @property
    def n_freq(self):
        return self.omega.size

    @property
    def n_evan(self):
        return self.k_evan.shape[1]

    def subset(self, idx):
        idx = np.atleast_1d(idx)
        return WaveSet(self.omega[idx], self.H[idx], self.k[idx], self.k_evan[idx],
                       self.beta, self.depth, self.rho, self.g)

    def save(self, path):
        """Write a text cache: one row per component, columns ``omega H k k_1..k_Nm``."""
        meta = dict(format="wecflow-waveset", version=1, beta=self.beta,
                    depth=self.depth, rho=self.rho, g=self.g, n_evan=self.n_evan)
        cols = ["omega", "H", "k"] + [f"k_{m + 1}" for m in range(self.n_evan)]
        data = np.column_stack([self.omega, self.H, self.k, self.k_evan])
        header = json.dumps(meta) + "\n" + " ".join(cols)
        np.savetxt(path, data, fmt="%.17g", header=header)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing wave-set header")
        meta = json.loads(first[1:].strip())
        if meta.get("format") != "wecflow-waveset":
            raise ValueError(f"{path}: not a wave-set file")
        data = np.atleast_2d(np.loadtxt(path, comments="#"))
        n_evan = int(meta["n_evan"])
        if data.shape[1] != 3 + n_evan:
            raise ValueError(f"{path}: expected {3 + n_evan} columns, found {data.shape[1]}")
        return cls(data[:, 0].copy(), data[:, 1].copy(), data[:, 2].copy(),
                   data[:, 3:].copy(), meta["beta"], meta["depth"], meta["rho"], meta["g"])


def progressive_wavenumber(omega, depth, g=GRAVITY, tol=1e-15):
    """Positive root of ``omega^2 = g k tanh(k depth)`` by safeguarded Newton."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    nu = omega ** 2 / g
    # work with x = k*depth:  x tanh(x) = nu*depth
    c = nu * depth
    x = max(c, math.sqrt(c))  # deep- and shallow-water seeds
    lo, hi = 0.0, max(c, math.sqrt(c)) + 1.0
    for _ in range(100):
        th = math.tanh(x)
        f = x * th - c
        if f > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        df = th + x * (1.0 - th * th)
        x_new = x - f / df
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= tol * x:
            x = x_new
            break
        x = x_new
    return x / depth


def evanescent_wavenumbers(omega, depth, n_modes, g=GRAVITY):
    """Roots of ``omega^2 = -g k tan(k depth)``, one per interval
    ``((m - 1/2) pi, m pi) / depth``."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    c = omega ** 2 * depth / g
    roots = np.empty(n_modes)
    for m in range(1, n_modes + 1):
        a = (m - 0.5) * math.pi
        b = m * math.pi
        # x tan(x) + c changes sign from -inf to +c on (a, b)
        fn = lambda x: x * math.tan(x) + c  # noqa: E731
        lo = a + 1e-14 * b
        if not fn(lo) < 0 < fn(b):
            raise RuntimeError(f"bracketing failed for evanescent mode {m}")
        roots[m - 1] = brentq(fn, lo, b, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                              maxiter=200)
    return roots / depth


def discretize(sea, n_freq, neglect_fraction=0.02, n_evan=0):
    """Split the truncated spectrum into ``n_freq`` equal-width bins.

    Each component sits at its bin center with height ``sqrt(8 E_q)``, where
    ``E_q`` is the bin's share of ``int S``.
    """
    if n_freq < 1:
        raise ValueError("need at least one frequency")
    lo, hi = truncation_bounds(sea, neglect_fraction)
    edges = np.linspace(lo, hi, n_freq + 1)
    omega = 0.5 * (edges[:-1] + edges[1:])
    energy = np.diff(cumulative_energy(edges, sea))
    H = np.sqrt(8.0 * energy)
    k = np.array([progressive_wavenumber(w, sea.depth, sea.g) for w in omega])
    k_evan = np.array([evanescent_wavenumbers(w, sea.depth, n_evan, sea.g) for w in omega])
    k_evan = k_evan.reshape(n_freq, n_evan)
    return WaveSet(omega, H, k, k_evan, sea.beta, sea.depth, sea.rho, sea.g)


def regular_waves(omega, H, beta=0.0, depth=30.0, n_evan=0, rho=RHO, g=GRAVITY):
    """Wave set from explicit frequencies and heights (no spectrum)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    H = np.broadcast_to(np.asarray(H, dtype=float), omega.shape).copy()
    k = np.array([progressive_wavenumber(w, depth, g) for w in omega])
    k_evan = np.array([evanescent_wavenumbers(w, depth, n_evan, g) for w in omega])
    return WaveSet(omega, H, k, k_evan.reshape(omega.size, n_evan), beta, depth, rho, g)
