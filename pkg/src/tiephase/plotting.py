"""Convenience figures rendered from summary rows (the CSV stays the contract)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 9,
}
COLORS = {"classical": "tab:blue", "quantum": "tab:red"}


def _curves(summary, key, d=None):
    """``{mode: (dz, mean, err)}`` for one filter size, sorted by dz."""
    ds = sorted({r["d"] for r in summary})
    d = ds[0] if d is None else d
    out = {}
    for r in summary:
        if r["d"] != d:
            continue
        out.setdefault(r["mode"], []).append((r["dz_um"], r[f"{key}_mean"], r[f"{key}_se"]))
    return {m: tuple(np.array(v) for v in zip(*sorted(pts))) for m, pts in out.items()}


def _save(fig, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def pearson_vs_dz(summary, path, d=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for mode, (dz, m, se) in _curves(summary, "pearson", d).items():
            ax.errorbar(dz, m, yerr=se, marker="o", ms=3, capsize=2, label=mode,
                        color=COLORS.get(mode, "0.3"))
        ax.set_xlabel("defocus dz (um)")
        ax.set_ylabel("Pearson correlation")
        ax.legend()
        return _save(fig, Path(path))


def phase_step_vs_dz(summary, path, d=None, nominal=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for mode, (dz, m, se) in _curves(summary, "step", d).items():
            if mode.startswith("multi_frame") or np.all(np.isnan(m)):
                continue
            ax.errorbar(dz, m, yerr=se, marker="o", ms=3, capsize=2, label=mode,
                        color=COLORS.get(mode, "0.3"))
        if nominal is not None:
            ax.axhline(nominal, color="0.5", ls="--", lw=1, label="nominal")
        ax.set_xlabel("defocus dz (um)")
        ax.set_ylabel("phase step (rad)")
        ax.legend()
        return _save(fig, Path(path))


def uncertainty_ratio_vs_dz(summary, path, d=None):
    curves = _curves(summary, "step", d)
    if "classical" not in curves or "quantum" not in curves:
        return None
    # std = se * sqrt(n) for both; the ratio of se is the ratio of std at equal n
    dz, _, se_c = curves["classical"]
    _, _, se_q = curves["quantum"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(dz, se_q / se_c, marker="o", ms=3, color="k")
        ax.axhline(1.0, color="0.5", ls="--", lw=1)
        ax.set_xlabel("defocus dz (um)")
        ax.set_ylabel("quantum / classical step uncertainty")
        return _save(fig, Path(path))


def pearson_vs_d(summary, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for dz in sorted({r["dz_um"] for r in summary}):
            for mode in ("classical", "quantum"):
                pts = sorted((r["d"], r["pearson_mean"]) for r in summary
                             if r["dz_um"] == dz and r["mode"] == mode)
                if pts:
                    d, m = zip(*pts)
                    ax.plot(d, m, marker="o", ms=3, color=COLORS[mode],
                            label=f"{mode} dz={dz:g}", ls="-" if mode == "quantum" else "--")
        ax.set_xlabel("averaging filter size d (pixels)")
        ax.set_ylabel("Pearson correlation")
        ax.legend(fontsize=7)
        return _save(fig, Path(path))


def render_figures(summary, out_dir, nominal_step=None) -> list:
    """Write every figure that the summary supports; returns the paths."""
    out_dir = Path(out_dir)
    paths = []
    n_d = len({r["d"] for r in summary})
    n_dz = len({r["dz_um"] for r in summary})
    if n_dz > 1:
        paths.append(pearson_vs_dz(summary, out_dir / "pearson_vs_dz.png"))
        if not all(np.isnan(r["step_mean"]) for r in summary):
            paths.append(phase_step_vs_dz(summary, out_dir / "phase_step_vs_dz.png", nominal=nominal_step))
            p = uncertainty_ratio_vs_dz(summary, out_dir / "uncertainty_ratio_vs_dz.png")
            if p is not None:
                paths.append(p)
    if n_d > 1:
        paths.append(pearson_vs_d(summary, out_dir / "pearson_vs_d.png"))
    return paths
