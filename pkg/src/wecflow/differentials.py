"""Cost, constraints and their differentials for the park-layout problem.

The flow variable ``w`` stacks, as real numbers,

    [X (Nb x 2), c (Nb), kappa (Nb), gamma (Nf x Nb x M complex),
     zeta (Nf x Nb complex), s_sl (Nb), s_ad (Nb), s_md (Nb (Nb - 1) / 2)]

and the constraint vector ``g`` stacks the state residuals of every
frequency followed by the slamming, domain and minimum-distance rows, each
with its quadratic slack.  Complex entries are interleaved ``(re, im)``
pairs, so the Euclidean product of packed vectors equals ``Re[u^H v]``.
All differentials are real-linear but not complex-linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow import FlowProblem
from .hydro import FrequencyOperator, dL_dalpha, pair_geometry


def c2r(z):
    return np.ascontiguousarray(z, dtype=complex).reshape(-1).view(float)


def r2c(x, shape):
    return np.ascontiguousarray(x, dtype=float).view(complex).reshape(shape)


@dataclass(frozen=True)
class WECLayout:
    """Index bookkeeping for the packed ``w`` and ``g`` vectors."""

    nb: int
    nf: int
    M: int

    @property
    def pairs(self):
        return np.array([(i, j) for i in range(self.nb) for j in range(i + 1, self.nb)],
                        dtype=int).reshape(-1, 2)

    @property
    def n_pairs(self):
        return self.nb * (self.nb - 1) // 2

    @property
    def n_ineq(self):
        return 2 * self.nb + self.n_pairs

    @property
    def w_blocks(self):
        nb, nf, M = self.nb, self.nf, self.M
        return [("X", 2 * nb), ("c", nb), ("kappa", nb), ("gamma", 2 * nf * nb * M),
                ("zeta", 2 * nf * nb), ("s_sl", nb), ("s_ad", nb), ("s_md", self.n_pairs)]

    @property
    def g_blocks(self):
        nb, nf, M = self.nb, self.nf, self.M
        return [("e", 2 * nf * (nb * M + nb)), ("sl", nb), ("ad", nb), ("md", self.n_pairs)]

    @staticmethod
    def _slices(blocks):
        out, start = {}, 0
        for name, size in blocks:
            out[name] = slice(start, start + size)
            start += size
        return out, start

    @property
    def w_slices(self):
        return self._slices(self.w_blocks)[0]

    @property
    def g_slices(self):
        return self._slices(self.g_blocks)[0]

    @property
    def dim_w(self):
        return self._slices(self.w_blocks)[1]

    @property
    def dim_g(self):
        return self._slices(self.g_blocks)[1]

    def unpack_w(self, w):
        """Dictionary of named views (complex blocks converted) of ``w``."""
        sl = self.w_slices
        nb, nf, M = self.nb, self.nf, self.M
        return dict(
            X=w[sl["X"]].reshape(nb, 2), c=w[sl["c"]], kappa=w[sl["kappa"]],
            gamma=r2c(w[sl["gamma"]], (nf, nb, M)), zeta=r2c(w[sl["zeta"]], (nf, nb)),
            s_sl=w[sl["s_sl"]], s_ad=w[sl["s_ad"]], s_md=w[sl["s_md"]])

    def pack_w(self, X, c, kappa, gamma, zeta, s_sl, s_ad, s_md):
        return np.concatenate([np.ravel(X), c, kappa, c2r(gamma), c2r(zeta), s_sl, s_ad, s_md])

    def unpack_g(self, g):
        sl = self.g_slices
        nb, nf, M = self.nb, self.nf, self.M
        e = r2c(g[sl["e"]], (nf, nb * M + nb))
        return dict(e_gamma=e[:, :nb * M].reshape(nf, nb, M), e_zeta=e[:, nb * M:],
                    sl=g[sl["sl"]], ad=g[sl["ad"]], md=g[sl["md"]])

    def pack_g(self, e_gamma, e_zeta, sl, ad, md):
        nf = self.nf
        e = np.concatenate([np.reshape(e_gamma, (nf, -1)), np.reshape(e_zeta, (nf, -1))], axis=1)
        return np.concatenate([c2r(e), sl, ad, md])


# ------------------------------------------------------------- row families ---

def wave_elevation(X, waves):
    """Complex ambient elevation ``eta[q, l] = i (H_q/2) exp(i k_q (x cos b + y sin b))``."""
    X = np.atleast_2d(X)
    proj = X[:, 0] * math.cos(waves.beta) + X[:, 1] * math.sin(waves.beta)
    return 0.5j * waves.H[:, None] * np.exp(1j * waves.k[:, None] * proj[None, :])


def slamming_values(zeta, X, waves, alpha, d):
    """``h_sl[l] = sum_q |zeta - eta|^2 - 2 alpha^2 d^2``; ``zeta`` has shape ``(Nf, Nb)``."""
    if not (alpha > 0 and d > 0):
        raise ValueError("alpha and d must be positive")
    rel = np.asarray(zeta) - wave_elevation(X, waves)
    return np.sum(np.abs(rel) ** 2, axis=0) - 2.0 * alpha ** 2 * d ** 2


def slamming_position_gradient(zeta, X, waves):
    """``d h_sl[l] / d(x_l, y_l)``, shape ``(Nb, 2)``."""
    eta = wave_elevation(X, waves)
    rel = np.asarray(zeta) - eta
    # only the phase of eta moves with the device
    base = -2.0 * np.sum(waves.k[:, None] * np.real(1j * rel.conj() * eta), axis=0)
    return np.stack([base * math.cos(waves.beta), base * math.sin(waves.beta)], -1)


def min_distance_values(X, d_min, pairs=None):
    """``d_min^2 - |x_l - x_m|^2`` over unordered pairs ``l < m``."""
    if not d_min > 0:
        raise ValueError("d_min must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if pairs is None:
        pairs = WECLayout(len(X), 1, 1).pairs
    diff = X[pairs[:, 0]] - X[pairs[:, 1]]
    return d_min ** 2 - np.sum(diff ** 2, axis=1)


def cost_value(zeta, c, omega):
    """Negative mean absorbed power ``-1/2 sum_l c_l sum_q (omega_q |zeta_lq|)^2``."""
    return -0.5 * float(np.sum(c[None, :] * (omega[:, None] * np.abs(zeta)) ** 2))


def cost_and_gradient(zeta, c, omega):
    """Cost and its gradient blocks ``(df/dc (Nb,), df/dzeta (Nf, Nb) complex)``."""
    zeta = np.asarray(zeta)
    p2 = (omega[:, None] * np.abs(zeta)) ** 2
    f = -0.5 * float(np.sum(c[None, :] * p2))
    return f, -0.5 * p2.sum(axis=0), -(omega[:, None] ** 2) * c[None, :] * zeta


# --------------------------------------------------------------- workspace ---

class DifferentialWorkspace:
    """Quantities shared by the residual, Jacobian and adjoint at one iterate."""

    def __init__(self, model, w):
        lay = model.layout
        self.key = w.tobytes()
        self.w = w.copy()
        self.v = lay.unpack_w(self.w)
        X, c, kappa = self.v["X"], self.v["c"], self.v["kappa"]
        gamma, zeta = self.v["gamma"], self.v["zeta"]
        L, alpha = pair_geometry(X)
        off = ~np.eye(lay.nb, dtype=bool)
        self.dL, self.da = dL_dalpha(np.where(off, L, 1.0), alpha)
        self.dL[~off] = 0.0
        self.da[~off] = 0.0
        self.ops, self.S, self.A = [], [], []
        self._pairs = {}
        for q in range(lay.nf):
            op = FrequencyOperator(model.coeffs, model.waves, q, X, c, kappa, derivatives=True)
            S = op.scattered(gamma[q], zeta[q])
            self.ops.append(op)
            self.S.append(S)
            self.A.append(0.5 * op.H * op.a + op.transfer(S))
        self.eta = wave_elevation(X, model.waves)
        self.h_ad, self.G_ad, self.outside = model.domain.evaluate(X)

    def pair_products(self, q):
        """``(T_L[s, d]^T S_s, T_alpha[s, d]^T S_s)`` at frequency ``q``, cached."""
        if q not in self._pairs:
            op = self.ops[q]
            self._pairs[q] = (op.pair_products(self.S[q], op.TL),
                              op.pair_products(self.S[q], op.Ta))
        return self._pairs[q]


class WECModel(FlowProblem):
    """Park-layout optimization problem in the unscaled packed variables.

    Parameters
    ----------
    coeffs : SingleBodyCoeffs
    waves : WaveSet
    domain : object
        Provides ``evaluate(points) -> (h, G, outside)`` for the admissible
        domain function and its (smoothed) gradient.
    n_bodies : int
    alpha, draft : float
        Slamming bound ``sum |zeta - eta|^2 <= 2 alpha^2 d^2``.
    d_min : float
        Minimum distance between device centers.
    """

    def __init__(self, coeffs, waves, domain, n_bodies, alpha=1.0, draft=None, d_min=10.0):
        coeffs.check_waves(waves)
        self.coeffs, self.waves, self.domain = coeffs, waves, domain
        self.layout = WECLayout(n_bodies, waves.n_freq, coeffs.size)
        self.alpha = alpha
        self.draft = coeffs.geometry.draft if draft is None else draft
        self.d_min = d_min
        self.dim_w = self.layout.dim_w
        self.dim_g = self.layout.dim_g
        self.n_ineq = self.layout.n_ineq
        self._ws = None

    def workspace(self, w):
        w = np.asarray(w, dtype=float)
        if self._ws is None or self._ws.key != w.tobytes():
            self._ws = DifferentialWorkspace(self, w)
        return self._ws

    # -- values --------------------------------------------------------------
    def cost(self, w):
        v = self.layout.unpack_w(np.asarray(w, dtype=float))
        return cost_value(v["zeta"], v["c"], self.waves.omega)

    def grad(self, w):
        v = self.layout.unpack_w(np.asarray(w, dtype=float))
        _, dc, dz = cost_and_gradient(v["zeta"], v["c"], self.waves.omega)
        out = np.zeros(self.dim_w)
        sl = self.layout.w_slices
        out[sl["c"]] = dc
        out[sl["zeta"]] = c2r(dz)
        return out

    def inequality_values(self, w):
        ws = self.workspace(w)
        return np.concatenate(self._inequalities(ws))

    def _inequalities(self, ws):
        X, zeta = ws.v["X"], ws.v["zeta"]
        h_sl = np.sum(np.abs(zeta - ws.eta) ** 2, axis=0) - 2.0 * self.alpha ** 2 * self.draft ** 2
        h_md = min_distance_values(X, self.d_min, self.layout.pairs) if self.layout.n_pairs \
            else np.zeros(0)
        return h_sl, ws.h_ad, h_md

    def state_residual(self, w):
        ws = self.workspace(w)
        nf, nb, M = self.layout.nf, self.layout.nb, self.layout.M
        eg = np.empty((nf, nb, M), complex)
        ez = np.empty((nf, nb), complex)
        for q, op in enumerate(ws.ops):
            A = ws.A[q]
            eg[q] = A @ op.B.T - ws.v["gamma"][q]
            ez[q] = (A @ op.yb) / op.W + ws.v["zeta"][q]
        return eg, ez

    def constraint(self, w):
        ws = self.workspace(w)
        eg, ez = self.state_residual(w)
        h_sl, h_ad, h_md = self._inequalities(ws)
        v = ws.v
        return self.layout.pack_g(eg, ez, h_sl + v["s_sl"] ** 2, h_ad + v["s_ad"] ** 2,
                                  h_md + v["s_md"] ** 2)

    # -- differentials -------------------------------------------------------
    def _pair_increments(self, ws, dX):
        """``(dL, dalpha)`` per ordered pair for a position perturbation."""
        coords = np.concatenate([np.broadcast_to(dX[:, None, :], ws.dL.shape[:2] + (2,)),
                                 np.broadcast_to(dX[None, :, :], ws.dL.shape[:2] + (2,))], -1)
        return np.sum(ws.dL * coords, -1), np.sum(ws.da * coords, -1)

    def jac_apply(self, w, v):
        ws = self.workspace(w)
        lay = self.layout
        dv = lay.unpack_w(np.asarray(v, dtype=float))
        dX, dc, dk = dv["X"], dv["c"], dv["kappa"]
        rho_g = self.waves.rho * self.waves.g
        cb, sb = math.cos(self.waves.beta), math.sin(self.waves.beta)
        dLp, dap = self._pair_increments(ws, dX)
        shift = dX[:, 0] * cb + dX[:, 1] * sb
        eg = np.empty((lay.nf, lay.nb, lay.M), complex)
        ez = np.empty((lay.nf, lay.nb), complex)
        for q, op in enumerate(ws.ops):
            dS = op.scattered(dv["gamma"][q], dv["zeta"][q])
            PL, Pa = ws.pair_products(q)
            dT_S = (np.einsum("sd,sdml->dml", dLp, PL)
                    + np.einsum("sd,sdml->dml", dap, Pa)).reshape(lay.nb, lay.M)
            da = 1j * op.k * shift[:, None] * op.a
            dA = 0.5 * op.H * da + op.transfer(dS) + dT_S
            dW = (op.omega * dc + 1j * dk) / rho_g
            eg[q] = dA @ op.B.T - dv["gamma"][q]
            ez[q] = (dA @ op.yb) / op.W + dv["zeta"][q] - (ws.A[q] @ op.yb) / op.W ** 2 * dW
        X, zeta = ws.v["X"], ws.v["zeta"]
        rel = zeta - ws.eta
        gx = slamming_position_gradient(zeta, X, self.waves)
        d_sl = (np.sum(gx * dX, axis=1) + 2.0 * np.sum(np.real(rel.conj() * dv["zeta"]), axis=0)
                + 2.0 * ws.v["s_sl"] * dv["s_sl"])
        d_ad = np.sum(ws.G_ad * dX, axis=1) + 2.0 * ws.v["s_ad"] * dv["s_ad"]
        if lay.n_pairs:
            i, j = lay.pairs.T
            diff = X[i] - X[j]
            d_md = -2.0 * np.sum(diff * (dX[i] - dX[j]), axis=1) + 2.0 * ws.v["s_md"] * dv["s_md"]
        else:
            d_md = np.zeros(0)
        return lay.pack_g(eg, ez, d_sl, d_ad, d_md)

    def jac_adjoint_apply(self, w, p):
        ws = self.workspace(w)
        lay = self.layout
        dp = lay.unpack_g(np.asarray(p, dtype=float))
        rho_g = self.waves.rho * self.waves.g
        cb, sb = math.cos(self.waves.beta), math.sin(self.waves.beta)
        gX = np.zeros((lay.nb, 2))
        gc = np.zeros(lay.nb)
        gk = np.zeros(lay.nb)
        gg = np.empty((lay.nf, lay.nb, lay.M), complex)
        gz = np.empty((lay.nf, lay.nb), complex)
        cL = np.zeros((lay.nb, lay.nb))
        ca = np.zeros((lay.nb, lay.nb))
        for q, op in enumerate(ws.ops):
            pg, pz = dp["e_gamma"][q], dp["e_zeta"][q]
            qA = pg @ op.B.conj() + np.outer(pz / op.W.conj(), op.yb.conj())
            S_adj = op.transfer_adjoint(qA)
            gg[q] = S_adj - pg
            gz[q] = pz + S_adj @ op.R.conj()
            # ambient-wave translation
            proj = np.real(1j * np.sum(qA.conj() * op.a, axis=1)) * 0.5 * op.H * op.k
            gX[:, 0] += proj * cb
            gX[:, 1] += proj * sb
            # transformation-matrix geometry
            PL, Pa = ws.pair_products(q)
            Qb = op._blocks(qA).conj()
            cL += np.real(np.einsum("sdml,dml->sd", PL, Qb))
            ca += np.real(np.einsum("sdml,dml->sd", Pa, Qb))
            # impedance
            zt = np.conj(-(ws.A[q] @ op.yb) / op.W ** 2) * pz
            gc += op.omega / rho_g * zt.real
            gk += zt.imag / rho_g
        pair_grad = cL[..., None] * ws.dL + ca[..., None] * ws.da
        gX += pair_grad[..., :2].sum(axis=1) + pair_grad[..., 2:].sum(axis=0)

        X, zeta = ws.v["X"], ws.v["zeta"]
        p_sl, p_ad, p_md = dp["sl"], dp["ad"], dp["md"]
        gX += slamming_position_gradient(zeta, X, self.waves) * p_sl[:, None]
        gz += 2.0 * (zeta - ws.eta) * p_sl[None, :]
        gX += ws.G_ad * p_ad[:, None]
        if lay.n_pairs:
            i, j = lay.pairs.T
            contrib = -2.0 * (X[i] - X[j]) * p_md[:, None]
            np.add.at(gX, i, contrib)
            np.add.at(gX, j, -contrib)
        v = ws.v
        return lay.pack_w(gX, gc, gk, gg, gz, 2.0 * v["s_sl"] * p_sl, 2.0 * v["s_ad"] * p_ad,
                          2.0 * v["s_md"] * p_md)

    def row_scale_hint(self, w, sw):
        """Closed-form 2-norms of the inequality rows of ``J diag(sw)``."""
        ws = self.workspace(w)
        lay = self.layout
        s = lay.unpack_w(np.asarray(sw, dtype=float))
        sX, sz = s["X"], s["zeta"]  # sz is complex: real/imag scales
        X, zeta = ws.v["X"], ws.v["zeta"]
        rel = zeta - ws.eta
        gx = slamming_position_gradient(zeta, X, self.waves)
        n_sl = (np.sum((gx * sX) ** 2, axis=1)
                + 4.0 * np.sum((rel.real * sz.real) ** 2 + (rel.imag * sz.imag) ** 2, axis=0)
                + (2.0 * ws.v["s_sl"] * s["s_sl"]) ** 2)
        n_ad = np.sum((ws.G_ad * sX) ** 2, axis=1) + (2.0 * ws.v["s_ad"] * s["s_ad"]) ** 2
        if lay.n_pairs:
            i, j = lay.pairs.T
            diff = 2.0 * (X[i] - X[j])
            n_md = (np.sum((diff * sX[i]) ** 2 + (diff * sX[j]) ** 2, axis=1)
                    + (2.0 * ws.v["s_md"] * s["s_md"]) ** 2)
        else:
            n_md = np.zeros(0)
        return np.sqrt(np.concatenate([n_sl, n_ad, n_md]))
