"""Small dense constrained problems expressed as :class:`FlowProblem` instances."""

from __future__ import annotations

import numpy as np

from .flow import FlowProblem, augmented_constraint, init_slacks


def _as_rows(values):
    return np.atleast_1d(np.asarray(values, dtype=float))


class DenseProblem(FlowProblem):
    """``min f(x)`` s.t. ``c(x) = 0`` and ``h(x) <= 0`` with dense Jacobians.

    Inequalities are converted with quadratic slacks, so the flow variable is
    ``w = [x, s]`` and the constraint vector is ``[c(x), h(x) + s*s]``.

    Parameters
    ----------
    n : int
        Number of original variables.
    f, grad : callable
        Cost and its gradient in ``x``.
    eq, eq_jac : callable, optional
        Equality constraints and their ``(n_eq, n)`` Jacobian.
    ineq, ineq_jac : callable, optional
        Inequality constraints and their ``(n_ineq, n)`` Jacobian.
    """

    def __init__(self, n, f, grad, eq=None, eq_jac=None, ineq=None, ineq_jac=None,
                 n_eq=0, n_ineq=0):
        self.n = n
        self._f, self._grad = f, grad
        self._eq, self._eq_jac = eq, eq_jac
        self._ineq, self._ineq_jac = ineq, ineq_jac
        self.n_eq = n_eq
        self.n_ineq = n_ineq
        self.dim_w = n + n_ineq
        self.dim_g = n_eq + n_ineq

    def split(self, w):
        return w[:self.n], w[self.n:]

    def initial_point(self, x0):
        """Stack ``x0`` with slacks from :func:`init_slacks`."""
        x0 = np.asarray(x0, dtype=float)
        s0 = init_slacks(self.inequality_values(np.concatenate([x0, np.zeros(self.n_ineq)])))
        return np.concatenate([x0, s0])

    def cost(self, w):
        return float(self._f(w[:self.n]))

    def grad(self, w):
        return np.concatenate([_as_rows(self._grad(w[:self.n])), np.zeros(self.n_ineq)])

    def inequality_values(self, w):
        if not self.n_ineq:
            return np.zeros(0)
        return _as_rows(self._ineq(w[:self.n]))

    def constraint(self, w):
        x, s = self.split(w)
        parts = []
        if self.n_eq:
            parts.append(_as_rows(self._eq(x)))
        if self.n_ineq:
            parts.append(augmented_constraint(_as_rows(self._ineq(x)), s))
        return np.concatenate(parts) if parts else np.zeros(0)

    def jacobian(self, w):
        """Dense Jacobian of the constraint vector with respect to ``w``."""
        x, s = self.split(w)
        jac = np.zeros((self.dim_g, self.dim_w))
        if self.n_eq:
            jac[:self.n_eq, :self.n] = np.reshape(self._eq_jac(x), (self.n_eq, self.n))
        if self.n_ineq:
            jac[self.n_eq:, :self.n] = np.reshape(self._ineq_jac(x), (self.n_ineq, self.n))
            jac[self.n_eq:, self.n:] = np.diag(2.0 * s)
        return jac

    def jac_apply(self, w, v):
        return self.jacobian(w) @ v

    def jac_adjoint_apply(self, w, p):
        return self.jacobian(w).T @ p

    def row_scale_hint(self, w, sw):
        jac = self.jacobian(w)[self.n_eq:]
        return np.linalg.norm(jac * sw, axis=1)


class LinearConstraintProblem(DenseProblem):
    """Quadratic cost ``0.5 x'Qx + b'x`` with linear equalities ``Ax = c``."""

    def __init__(self, Q, b, A, c):
        self.Q, self.b, self.A, self.c = (np.asarray(a, dtype=float) for a in (Q, b, A, c))
        super().__init__(
            self.Q.shape[0],
            lambda x: 0.5 * x @ self.Q @ x + self.b @ x,
            lambda x: self.Q @ x + self.b,
            eq=lambda x: self.A @ x - self.c,
            eq_jac=lambda x: self.A,
            n_eq=self.A.shape[0],
        )
