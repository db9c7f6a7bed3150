"""Self-contained plotting scripts for a finished run directory.

The scripts are emitted next to the artifacts, read the CSVs by relative
path and need only numpy and matplotlib at the time they are executed.
Nothing here imports matplotlib.
"""
from __future__ import annotations

from pathlib import Path

from ..errors import MissingArtifact

_PRELUDE = '''"""{title}

Generated by qikt; reads {csv} relative to this file.
"""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent
data = np.genfromtxt(HERE / "{csv}", delimiter=",", names=True)
'''

_BODIES = {
    "plot_entropy_trace.py": ("Shannon entropy along the constant-H run.", "entropy_trace.csv", '''
fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(data["t"], data["S_analytic"] - data["S_analytic"][0], label="Maxwellian S(t) - S(0)")
ok = np.isfinite(data["S_particle"])
if ok.any():
    ax.errorbar(data["t"][ok], data["S_particle"][ok] - data["S_analytic"][0],
                yerr=3 * data["S_particle_err"][ok], fmt="o", label="particle KL (3 jackknife errors)")
ax.set_xlabel("t")
ax.set_ylabel("entropy change")
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "entropy_trace.png", dpi=120)
'''),
    "plot_T0.py": ("Background temperature T0(t) and directional temperatures.", "entropy_trace.csv", '''
fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(data["t"], data["T0"], label="T0")
for name in data.dtype.names:
    if name.startswith("T_"):
        ax.plot(data["t"], data[name], "--", label=name)
ax.set_xlabel("t")
ax.set_ylabel("temperature")
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "T0.png", dpi=120)
'''),
    "plot_moment_bands.py": ("Binned particle moments against the fluid fields with 3-sigma bands.",
                             "moment_check.csv", '''
seed = data["seed"] == data["seed"].min()
times = np.unique(data["t"][seed])
fig, axes = plt.subplots(2, len(times), figsize=(4 * len(times), 6), squeeze=False)
for col, t in enumerate(times):
    d = data[seed & (data["t"] == t)]
    x = d["c_1"]
    for row, (hat, ref, sig, label) in enumerate([("rho_hat", "rho_ref", "sig_rho", "rho"),
                                                   ("V_hat_1", "V_ref_1", "sig_V_1", "V")]):
        ax = axes[row, col]
        ax.fill_between(x, d[ref] - 3 * d[sig], d[ref] + 3 * d[sig], alpha=0.3, label="3 sigma")
        ax.plot(x, d[ref], "k-", lw=1, label="fluid")
        ax.plot(x, d[hat], ".", label="particles")
        ax.set_title(f"{label}, t = {t:g}")
axes[0, 0].legend()
fig.tight_layout()
fig.savefig(HERE / "moment_bands.png", dpi=120)
'''),
    "plot_residual_convergence.py": ("Continuity and Euler residuals under grid and step refinement.",
                                     "residuals.csv", '''
fig, ax = plt.subplots(figsize=(6, 4))
data = np.atleast_1d(data)
ax.loglog(data["n"], data["continuity"], "o-", label="continuity")
ax.loglog(data["n"], data["euler"], "s-", label="Euler")
ax.set_xlabel("grid points per axis (dt halves with h)")
ax.set_ylabel("max residual")
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "residual_convergence.png", dpi=120)
'''),
}


def emit_plots(out_dir) -> list:
    """Write the plotting scripts into ``out_dir``; returns their paths.

    Raises :class:`MissingArtifact` when the directory or a CSV a script
    depends on is absent.
    """
    out = Path(out_dir)
    if not out.is_dir():
        raise MissingArtifact(f"run directory {out} does not exist")
    missing = sorted({csv for _, csv, _ in _BODIES.values() if not (out / csv).is_file()})
    if missing:
        raise MissingArtifact(f"missing artifacts in {out}: {', '.join(missing)}")
    paths = []
    for name, (title, csv, body) in _BODIES.items():
        path = out / name
        text = _PRELUDE.format(title=title, csv=csv) + body
        if not path.is_file() or path.read_text() != text:
            path.write_text(text)
        paths.append(path)
    return paths
