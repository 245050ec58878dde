"""Follow the constrained gradient flow on a small problem.

Minimize -(x + y) on the unit disk.  The inequality is turned into an
equality with a quadratic slack, and the flow Psi = -J'Lambda - grad f is
integrated with the embedded Euler/Heun pair.  The four presets differ in
whether the step and the inner tolerances adapt.
"""

import numpy as np

from wecflow.flow import MODES, preset, run_flow
from wecflow.problems import DenseProblem

problem = DenseProblem(
    2, lambda x: -x[0] - x[1], lambda x: np.array([-1.0, -1.0]),
    ineq=lambda x: [x @ x - 1.0], ineq_jac=lambda x: 2.0 * x[None, :], n_ineq=1)
x_star = np.full(2, 1.0 / np.sqrt(2.0))
w0 = problem.initial_point([0.1, -0.2])
print(f"start {w0[:2]}, slack {w0[2]:.3f} (the start is strictly feasible)")

print(f"\n{'mode':>4} {'status':>10} {'calls':>6} {'CG its':>7} {'|Psi|':>9} {'error':>9}")
for mode in MODES:
    trace = run_flow(problem, w0, preset(mode, tau_psi=1e-5, t_max=500.0))
    err = np.linalg.norm(trace.w[:2] - x_star)
    print(f"{mode:>4} {trace.status:>10} {trace.n_psi_calls:>6} {trace.total_cg_iters:>7} "
          f"{trace.final.norm_psi:9.1e} {err:9.1e}")

# S1 and S2 take plain Euler steps of fixed length.  With dt = 1.5 (S2) the
# iterate overshoots the curved boundary and keeps oscillating, so that run
# ends on the time budget.  The adaptive modes control the step instead.
trace = run_flow(problem, w0, preset("S4", tau_psi=1e-5))
t = trace.column("t")
g = trace.column("norm_g")
print("\nS4 history: constraint residual first drops with the step size, then the "
      "iterate slides along the boundary")
for i in np.linspace(0, len(t) - 1, 6).astype(int):
    print(f"  t = {t[i]:7.2f}   |g| = {g[i]:.2e}")
