"""Input preparation with caching, optimization runs and result persistence."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..field import (DomainField, FieldError, MeshError, cut_square_mesh, load_mesh,
                     square_mesh)
from ..flow import equilibrate_rows, run_flow, settings_dict
from ..hydro import DeviceGeometry, load_coeffs, synth_coeffs
from ..spectrum import SeaState, WaveSet, discretize
from .config import ConfigError
from .problem import ScalingRefs, assemble_problem, grid_layout, isolated_optimum

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("run", "status", "f_end", "g_end", "psi_end", "ncalls", "total_call_time_s",
                   "total_cg_iters", "max_violation", "wall_s")

# "grid" covers the bounding box of the admissible area and may start some
# devices outside it; "admissible-grid" keeps only interior grid points
LAYOUTS = ("grid", "admissible-grid")

BUILTIN_MESHES = {"builtin:square": square_mesh, "builtin:cut-square": cut_square_mesh}


class InputError(RuntimeError):
    """Missing or invalid input files (exit code 3)."""


def _digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class Inputs:
    waves: WaveSet
    coeffs: object
    mesh: object
    field: DomainField
    cache: dict


def load_domain_mesh(config):
    spec = config.constraints["mesh"]
    if spec in BUILTIN_MESHES:
        return BUILTIN_MESHES[spec](config.constraints["mesh_h"])
    path = config.resolve(spec)
    if not path.exists():
        raise InputError(f"mesh file not found: {path}")
    try:
        return load_mesh(path)
    except MeshError as exc:
        raise InputError(str(exc)) from exc


def device_geometry(config, waves=None):
    d = config.device
    rho = waves.rho if waves is not None else 1025.0
    g = waves.g if waves is not None else 9.81
    return DeviceGeometry(d["radius"], d["draft"], d["mass"], d["k_hydro"], rho, g)


def prepare_inputs(config, seed=None):
    """Wave set, coefficients and domain field, reusing caches keyed by input hashes."""
    cache_dir = config.resolve(config.paths["cache_dir"])
    cache_dir.mkdir(parents=True, exist_ok=True)
    info = {}
    s, m = config.sea, config.model

    wave_key = _digest({"sea": s, "n_freq": m["n_freq"], "n_evan": m["n_evan"],
                        "neglect": m["neglect_fraction"]})
    wave_path = cache_dir / f"waves-{wave_key}.txt"
    if wave_path.exists():
        waves = WaveSet.load(wave_path)
        info["waves"] = ("hit", wave_path)
    else:
        sea = SeaState(s["Hs"], s["Te"], s["beta"], s["depth"])
        waves = discretize(sea, m["n_freq"], m["neglect_fraction"], m["n_evan"])
        waves.save(wave_path)
        info["waves"] = ("computed", wave_path)

    geo = device_geometry(config, waves)
    if m["coefficients"]:
        cpath = config.resolve(m["coefficients"])
        if not cpath.exists():
            raise InputError(f"coefficient file not found: {cpath}")
        try:
            coeffs = load_coeffs(cpath)
            coeffs.check_waves(waves)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        info["coeffs"] = ("file", cpath)
    else:
        seed = config.seed_value if seed is None else seed
        ckey = _digest({"wave": wave_key, "geo": geo.as_dict(), "n_prog": m["n_prog"],
                        "n_evan": m["n_evan"], "seed": seed, "coupling": m["synth_coupling"]})
        cpath = cache_dir / f"coeffs-{ckey}.npz"
        if cpath.exists():
            coeffs = load_coeffs(cpath)
            info["coeffs"] = ("hit", cpath)
        else:
            coeffs = synth_coeffs(geo, waves, m["n_prog"], m["n_evan"], seed,
                                  m["synth_coupling"])
            coeffs.save(cpath)
            info["coeffs"] = ("computed", cpath)

    mesh = load_domain_mesh(config)
    fkey = _digest({"mesh": mesh.hash(), "eta": config.constraints["eta_smooth"]})
    fpath = cache_dir / f"field-{fkey}.npz"
    if fpath.exists():
        field = DomainField.load(fpath, mesh)
        info["field"] = ("hit", fpath)
    else:
        try:
            field = DomainField.from_mesh(mesh, config.constraints["eta_smooth"])
        except FieldError as exc:
            raise InputError(str(exc)) from exc
        field.save(fpath)
        info["field"] = ("computed", fpath)
    return Inputs(waves, coeffs, mesh, field, info)


def admissible_nodes(mesh):
    return mesh.nodes[mesh.node_tags == 1]


def scaling_refs(config, inputs, iso):
    sc = dict(config.scaling)
    pts = admissible_nodes(inputs.mesh)
    diameter = float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)))
    length = sc["length"] or diameter
    return ScalingRefs(
        length=length,
        damping=sc["damping"] or iso.c,
        stiffness=sc["stiffness"] or max(abs(iso.kappa), 0.1 * iso_k_hydro(inputs)),
        amplitude=sc["amplitude"] or 0.5 * config.sea["Hs"],
        slack_sl=sc["slack_sl"] or math.sqrt(2.0) * config.constraints["alpha"]
        * config.device["draft"],
        slack_ad=sc["slack_ad"] or math.sqrt(float(np.max(np.abs(inputs.field.h_nodal)))),
        slack_md=sc["slack_md"] or length)


def iso_k_hydro(inputs):
    return inputs.coeffs.geometry.k_hydro


def admissible_grid(n, field, bbox, d_min=0.0, max_cols=64):
    """``n`` grid points strictly inside the admissible region.

    The grid is refined until it holds ``n`` admissible points; those are
    then thinned evenly so the layout still spans the region.
    """
    x0, y0, x1, y1 = bbox
    for cols in range(math.ceil(math.sqrt(n)), max_cols + 1):
        pts = grid_layout(cols * cols, bbox)
        h, _, outside = field.evaluate(pts)
        ok = pts[(h < 0) & ~outside]
        if len(ok) < n:
            continue
        pick = ok[np.round(np.linspace(0, len(ok) - 1, n)).astype(int)]
        if n < 2 or _min_spacing(pick) >= d_min:
            return pick
    raise ConfigError(f"cannot place {n} devices inside the admissible region on a grid")


def _min_spacing(X):
    d = np.linalg.norm(X[:, None] - X[None], axis=-1)
    return float(np.min(d[np.triu_indices(len(X), 1)]))


def initial_layout(config, inputs, seed):
    park = config.park
    if park["layout"] in LAYOUTS:
        pts = admissible_nodes(inputs.mesh)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        bbox = (lo[0], lo[1], hi[0], hi[1])
        if park["layout"] == "grid":
            X = grid_layout(park["n_bodies"], bbox)
        else:
            X = admissible_grid(park["n_bodies"], inputs.field, bbox,
                                config.constraints["d_min"])
    else:
        X = np.asarray(park["layout"], dtype=float)
    if park["jitter"]:
        rng = np.random.default_rng(seed)
        X = X + park["jitter"] * rng.uniform(-1.0, 1.0, X.shape)
    return X


def build_problem(config, inputs, seed=None):
    seed = config.seed_value if seed is None else seed
    iso = isolated_optimum(inputs.coeffs, inputs.waves, config.constraints["alpha"],
                           config.device["draft"])
    refs = scaling_refs(config, inputs, iso)
    f0 = config.scaling["f0"] or config.park["n_bodies"] * iso.power
    X0 = initial_layout(config, inputs, seed)
    try:
        return assemble_problem(inputs.coeffs, inputs.waves, inputs.field, X0,
                                config.park["c0"], config.park["kappa0"],
                                alpha=config.constraints["alpha"],
                                draft=config.device["draft"],
                                d_min=config.constraints["d_min"], refs=refs, f0=f0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class RunResult:
    """Final design and the summary quantities reported for a run."""

    name: str
    status: str
    X: np.ndarray
    c: np.ndarray
    kappa: np.ndarray
    f_end: float
    g_end: float
    psi_end: float
    ncalls: int
    psi_time: float
    total_cg_iters: int
    max_violation: float
    wall_s: float
    trace: object

    def summary_row(self):
        return dict(run=self.name, status=self.status, f_end=self.f_end, g_end=self.g_end,
                    psi_end=self.psi_end, ncalls=self.ncalls,
                    total_call_time_s=self.psi_time, total_cg_iters=self.total_cg_iters,
                    max_violation=self.max_violation, wall_s=self.wall_s)


def scaled_violation(problem, w, sw):
    """Largest inequality value divided by its row-equilibration scale."""
    model = problem
    h = model.inequality_values(w)
    if h.size == 0:
        return -math.inf
    sg, _ = equilibrate_rows(model, w, sw)
    return float(np.max(h / sg[model.dim_g - model.n_ineq:]))


def execute(config, preset_name=None, seed=None, inputs=None, callback=None, name=None):
    """Run the optimization; returns ``(RunResult, AssembledProblem, inputs)``."""
    inputs = inputs or prepare_inputs(config, seed)
    ap = build_problem(config, inputs, seed)
    settings = config.flow_settings(preset_name)
    t0 = time.perf_counter()
    trace = run_flow(ap.model, ap.w0, settings, sw=ap.sw, f0=ap.f0, callback=callback)
    wall = time.perf_counter() - t0
    design = ap.design(trace.w)
    fin = trace.final
    res = RunResult(
        name=name or settings.mode, status=trace.status, X=design["X"], c=design["c"],
        kappa=design["kappa"],
        f_end=fin.cost if fin is not None else math.nan,
        g_end=fin.norm_g if fin is not None else math.nan,
        psi_end=fin.norm_psi if fin is not None else math.nan,
        ncalls=trace.n_psi_calls, psi_time=trace.psi_time,
        total_cg_iters=trace.total_cg_iters,
        max_violation=scaled_violation(ap.model, trace.w, ap.sw) if fin is not None else math.nan,
        wall_s=wall, trace=trace)
    return res, ap, inputs


def write_summary(rows, path):
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        wr.writeheader()
        for row in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_summary(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def save_run(result, ap, inputs, config, out_dir, settings):
    """Write trace, call log, summary, final design and run metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.trace.write_csv(out / "trace.csv")
    result.trace.write_calls_csv(out / "calls.csv")
    write_summary([result.summary_row()], out / "summary.csv")
    design = {
        "status": result.status,
        "positions": result.X.tolist(),
        "damping": result.c.tolist(),
        "stiffness": result.kappa.tolist(),
        "f_end": result.f_end,
        "power_W": -result.f_end * ap.f0,
        "f0_W": ap.f0,
    }
    (out / "design.json").write_text(json.dumps(design, indent=2))
    meta = {
        "config": config.to_dict(),
        "settings": settings_dict(settings),
        "scaling": ap.refs.__dict__,
        "inputs": {k: [v[0], str(v[1])] for k, v in inputs.cache.items()},
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2, default=str))
    inputs.mesh.save(out / "mesh.txt")
    np.save(out / "w_final.npy", result.trace.w)
