"""Analytic constrained test problems with known optima."""

import numpy as np

from wecflow.problems import DenseProblem


def equality_quadratic():
    """min 0.5 |x - a|^2  s.t.  A x = b  (orthogonal projection onto an affine set)."""
    rng = np.random.default_rng(3)
    A = rng.standard_normal((2, 4))
    b = rng.standard_normal(2)
    a = rng.standard_normal(4)
    prob = DenseProblem(4, lambda x: 0.5 * np.sum((x - a) ** 2), lambda x: x - a,
                        eq=lambda x: A @ x - b, eq_jac=lambda x: A, n_eq=2)
    x_star = a - A.T @ np.linalg.solve(A @ A.T, A @ a - b)
    return prob, np.zeros(4), x_star


def sphere_linear():
    """min c'x  s.t.  |x|^2 = 1  ->  x = -c/|c|."""
    c = np.array([1.0, -2.0, 0.5])
    prob = DenseProblem(3, lambda x: c @ x, lambda x: c,
                        eq=lambda x: [x @ x - 1.0], eq_jac=lambda x: 2.0 * x[None, :], n_eq=1)
    return prob, np.array([0.6, 0.8, 0.0]), -c / np.linalg.norm(c)


def inequality_box():
    """min 0.5 |x - p|^2  s.t.  0 <= x <= 1  ->  clip(p, 0, 1)."""
    p = np.array([1.7, -0.4, 0.3])
    eye = np.eye(3)
    prob = DenseProblem(3, lambda x: 0.5 * np.sum((x - p) ** 2), lambda x: x - p,
                        ineq=lambda x: np.concatenate([x - 1.0, -x]),
                        ineq_jac=lambda x: np.vstack([eye, -eye]), n_ineq=6)
    return prob, np.full(3, 0.5), np.clip(p, 0.0, 1.0)


def mixed_simplex():
    """min 0.5 |x - p|^2  s.t.  sum(x) = 1, x >= 0  (projection onto the simplex)."""
    p = np.array([0.9, 0.6, -0.3])
    prob = DenseProblem(3, lambda x: 0.5 * np.sum((x - p) ** 2), lambda x: x - p,
                        eq=lambda x: [np.sum(x) - 1.0], eq_jac=lambda x: np.ones((1, 3)),
                        ineq=lambda x: -x, ineq_jac=lambda x: -np.eye(3), n_eq=1, n_ineq=3)
    # sorted-threshold formula for the Euclidean simplex projection
    u = np.sort(p)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, 4) > css - 1)[0][-1]
    theta = (css[rho] - 1) / (rho + 1.0)
    return prob, np.full(3, 1.0 / 3.0), np.maximum(p - theta, 0.0)


def disk_inequality():
    """min -(x + y)  s.t.  x^2 + y^2 <= 1  ->  (1, 1)/sqrt(2)."""
    prob = DenseProblem(2, lambda x: -x[0] - x[1], lambda x: np.array([-1.0, -1.0]),
                        ineq=lambda x: [x @ x - 1.0], ineq_jac=lambda x: 2.0 * x[None, :],
                        n_ineq=1)
    return prob, np.array([0.1, -0.2]), np.full(2, 1.0 / np.sqrt(2.0))


TOYS = {
    "equality-quadratic": equality_quadratic,
    "sphere-linear": sphere_linear,
    "inequality-box": inequality_box,
    "mixed-simplex": mixed_simplex,
    "disk-inequality": disk_inequality,
}
