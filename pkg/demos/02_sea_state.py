"""Discretize an irregular sea into regular wave components.

The Pierson-Moskowitz spectrum is truncated so that 1 % of the energy is
dropped in each tail, split into equal-width bins, and each bin becomes
one regular wave of height sqrt(8 E_q).  Progressive and evanescent
wavenumbers come from the finite-depth dispersion relation.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from wecflow.spectrum import (SeaState, discretize, pm_spectrum, spectral_moment,  # noqa: E402
                              truncation_bounds)

sea = SeaState(Hs=2.12, Te=8.0, depth=30.0)
m0 = spectral_moment(sea, 0)
m_1 = spectral_moment(sea, -1, freq="cyclic")
print(f"Hs from 4 sqrt(m0): {4 * np.sqrt(m0):.6f} m")
print(f"Te from m-1/m0 (cyclic frequency): {m_1 / m0:.6f} s")

lo, hi = truncation_bounds(sea)
waves = discretize(sea, 5, n_evan=3)
print(f"\nkept band {lo:.3f} .. {hi:.3f} rad/s")
print(f"{'omega':>7} {'H [m]':>7} {'k':>8} {'k_1':>8} {'k_2':>8} {'k_3':>8}")
for w, H, k, ke in zip(waves.omega, waves.H, waves.k, waves.k_evan):
    print(f"{w:7.3f} {H:7.3f} {k:8.4f} " + " ".join(f"{x:8.4f}" for x in ke))
print(f"energy kept: {np.sum(waves.H ** 2 / 8) / m0:.4f} of m0")

out = Path(__file__).resolve().parent / "output"
out.mkdir(exist_ok=True)
omega = np.linspace(0.2, 2.5, 400)
fig, ax = plt.subplots(figsize=(6, 3.5))
ax.plot(omega, pm_spectrum(omega, sea), "k-", label="S(omega)")
edges = np.linspace(lo, hi, waves.n_freq + 1)
ax.bar(waves.omega, waves.H ** 2 / 8 / np.diff(edges), width=np.diff(edges), alpha=0.3,
       label="bins")
ax.set_xlabel("omega [rad/s]")
ax.set_ylabel("S [m^2 s]")
ax.legend()
fig.tight_layout()
fig.savefig(out / "sea_state.png", dpi=120)
print(f"\nplot written to {out / 'sea_state.png'}")
