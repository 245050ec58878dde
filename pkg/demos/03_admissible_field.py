"""Describe the admissible sea area by one smooth function.

A Poisson problem with source -1 inside and +1 outside, and h = 0 on the
interface, yields a field that is negative exactly in the admissible area.
Devices are kept inside through h(x) <= 0; the flow uses a smoothed
gradient recovered from the piecewise-linear solution.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from wecflow.field import GAMMA_AD, DomainField, cut_square_mesh, disk_mesh, solve_field  # noqa: E402

# Convergence on the unit disk, where h = -(1 - r^2)/4 exactly.
print("unit disk: RMS nodal error")
prev = None
for rings in (4, 8, 16, 32):
    mesh = disk_mesh(rings)
    err = solve_field(mesh) + (1 - np.sum(mesh.nodes ** 2, axis=1)) / 4
    rms = np.sqrt(np.mean(err ** 2))
    rate = "" if prev is None else f"  rate {np.log2(prev / rms):.2f}"
    print(f"  rings {rings:3d}: {rms:.2e}{rate}")
    prev = rms

mesh = cut_square_mesh(2.5)
field = DomainField.from_mesh(mesh)
print(f"\ncut square: {len(mesh.nodes)} nodes, {len(mesh.triangles)} triangles, "
      f"Delaunay violations {mesh.delaunay_violations()}")
probe = np.array([[10.0, 25.0], [1.0, 25.0], [-5.0, 25.0], [25.0, 45.0]])
h, G, _ = field.evaluate(probe)
for x, hv, gv in zip(probe, h, G):
    where = "inside" if hv < 0 else "outside" if hv > 0 else "on the boundary"
    print(f"  h({x[0]:5.1f}, {x[1]:5.1f}) = {hv:8.2f}  G = ({gv[0]:6.2f}, {gv[1]:6.2f})  {where}")

out = Path(__file__).resolve().parent / "output"
out.mkdir(exist_ok=True)
fig, ax = plt.subplots(figsize=(5, 5))
tc = ax.tricontourf(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles, field.h_nodal, 30,
                    cmap="RdBu_r")
iface = mesh.nodes[mesh.node_tags == GAMMA_AD]
ax.plot(iface[:, 0], iface[:, 1], "k.", ms=1)
ax.set_aspect("equal")
fig.colorbar(tc, ax=ax, shrink=0.8, label="h")
fig.tight_layout()
fig.savefig(out / "cut_square_field.png", dpi=120)
print(f"\nplot written to {out / 'cut_square_field.png'}")
