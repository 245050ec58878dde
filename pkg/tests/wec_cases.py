"""Random park configurations and finite-difference helpers for derivative tests."""

import numpy as np

from wecflow.app.problem import ScalingRefs, assemble_problem
from wecflow.field import DiskDomain
from wecflow.hydro import DeviceGeometry, synth_coeffs
from wecflow.spectrum import SeaState, discretize

FD_STEPS = (1e-4, 1e-5, 1e-6, 1e-7)
REFS = ScalingRefs(50.0, 7e4, 5e4, 1.0, 0.7, 10.0, 50.0)


def random_case(seed, nb=3, nf=3, n_prog=2, n_evan=3, beta=None):
    """Model, a perturbed (off-manifold) iterate and the variable scaling."""
    rng = np.random.default_rng(seed)
    beta = rng.uniform(0, 2 * np.pi) if beta is None else beta
    waves = discretize(SeaState(rng.uniform(1.5, 3.0), rng.uniform(6.0, 10.0), beta=beta),
                       nf, n_evan=n_evan)
    coeffs = synth_coeffs(DeviceGeometry(), waves, n_prog, n_evan, seed=seed)
    while True:
        X = rng.uniform(0, 60, (nb, 2))
        d = np.linalg.norm(X[:, None] - X[None], axis=-1) + 1e3 * np.eye(nb)
        if d.min() > 8.0:
            break
    ap = assemble_problem(coeffs, waves, DiskDomain((30.0, 30.0), 35.0), X,
                          rng.uniform(5e3, 5e4, nb), rng.uniform(-1e4, 1e4, nb),
                          d_min=10.0, refs=REFS, f0=1e5)
    w = ap.w0 + 0.05 * ap.sw * rng.standard_normal(ap.w0.size)
    lay = ap.layout
    sl = lay.w_slices
    for name in ("s_sl", "s_ad", "s_md"):
        w[sl[name]] = rng.uniform(0.1, 1.0, w[sl[name]].size) * ap.sw[sl[name]]
    return ap.model, w, ap.sw, rng


def fd_directional(fun, w, v, steps=FD_STEPS):
    """Central differences of ``fun`` along ``v`` for each step."""
    return [(np.asarray(fun(w + h * v)) - np.asarray(fun(w - h * v))) / (2 * h) for h in steps]


def best_relative_error(exact, estimates):
    exact = np.asarray(exact)
    scale = max(np.linalg.norm(exact), 1e-300)
    return min(np.linalg.norm(exact - e) / scale for e in estimates)
