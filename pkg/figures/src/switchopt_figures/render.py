"""Render the three experiment figures from simulation CSV files.

Inputs are the CSVs the simulation CLI writes: an optional leading
"# key=value ..." comment, a header row naming the columns, then numeric
rows. Nothing here touches the simulation code; the CSV contract is the
only coupling.

fig1 overlays the sampled limit-set cloud and the perturbed arc in the
plane of the first two allocation coordinates. fig2 plots the active
objective value against time with switch markers, one panel per variant
found. fig3 plots the four method suboptimality traces on a shared log
axis.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be pinned first
import numpy as np  # noqa: E402

KINDS = ("fig1", "fig2", "fig3")


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    in_dir: Path
    out_path: Path

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")


def read_table(path: Path) -> tuple[list[str], np.ndarray]:
    """Columns and data of one simulation CSV."""
    with open(path) as fh:
        line = fh.readline()
        if line.startswith("#"):
            line = fh.readline()
        columns = line.strip().split(",")
        with warnings.catch_warnings():
            # the empty-input warning duplicates the explicit check below
            warnings.simplefilter("ignore", UserWarning)
            try:
                table = np.loadtxt(fh, delimiter=",", ndmin=2)
            except ValueError:
                table = np.empty((0, len(columns)))
    if table.shape[0] == 0:
        raise ValueError(f"{path}: no samples")
    if table.shape[1] != len(columns):
        raise ValueError(f"{path}: {table.shape[1]} data columns under "
                         f"{len(columns)} headers")
    return columns, table


def column(path: Path, columns: list[str], table: np.ndarray, name: str) -> np.ndarray:
    if name not in columns:
        raise ValueError(f"{path}: missing column {name!r}")
    return table[:, columns.index(name)]


def _build_fig1(in_dir: Path):
    cloud_path = in_dir / "cloud.csv"
    arc_path = in_dir / "arc.csv"
    ccols, cloud = read_table(cloud_path)
    acols, arc = read_table(arc_path)
    cq1 = column(cloud_path, ccols, cloud, "q_1")
    cq2 = column(cloud_path, ccols, cloud, "q_2")
    aq1 = column(arc_path, acols, arc, "q_1")
    aq2 = column(arc_path, acols, arc, "q_2")

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.scatter(cq1, cq2, s=3, color="tab:blue", label="ideal limit-set samples")
    ax.plot(aq1, aq2, color="tab:red", linewidth=0.8, label="perturbed arc")
    ax.set_xlabel("first allocation $q_1$")
    ax.set_ylabel("second allocation $q_2$")
    ax.set_title("steady state near the limit set")
    ax.legend(loc="best")
    return fig


def _build_fig2(in_dir: Path):
    panels = [(v, in_dir / f"arc_{v}.csv") for v in ("persistent", "sparse")
              if (in_dir / f"arc_{v}.csv").exists()]
    if not panels:
        raise FileNotFoundError(f"{in_dir}: no arc_persistent.csv or arc_sparse.csv")
    fig, axes = plt.subplots(len(panels), 1, figsize=(6.4, 3.2 * len(panels)),
                             squeeze=False)
    for ax, (variant, path) in zip(axes[:, 0], panels):
        cols, table = read_table(path)
        t = column(path, cols, table, "t")
        phi = column(path, cols, table, "phi")
        j = column(path, cols, table, "j")
        ax.plot(t, phi, color="tab:blue", linewidth=0.9, label="objective value")
        for tk in t[:-1][np.diff(j) > 0]:
            ax.axvline(tk, color="tab:gray", linewidth=0.6, linestyle="--")
        ax.set_xlabel("time")
        ax.set_ylabel("objective value")
        ax.set_title(f"{variant} switching")
        ax.legend(loc="best")
    fig.tight_layout()
    return fig


_FIG3_STYLE = [("gradient", "tab:gray"), ("hbm_k5", "tab:red"),
               ("hbm_k1", "tab:green"), ("hihbm", "black")]


def _build_fig3(in_dir: Path):
    path = in_dir / "errors.csv"
    cols, table = read_table(path)
    t = column(path, cols, table, "t")
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for method, color in _FIG3_STYLE:
        sub = column(path, cols, table, f"subopt_{method}")
        # log axis: clip at the float noise floor without altering the data
        ax.semilogy(t, np.maximum(sub, 1e-16), color=color, linewidth=1.0,
                    label=method)
    ax.set_xlabel("time")
    ax.set_ylabel("suboptimality")
    ax.set_title("method comparison")
    ax.legend(loc="best")
    return fig


def build_figure(kind: str, in_dir: Path):
    """Assemble the requested figure from the CSVs in in_dir."""
    in_dir = Path(in_dir)
    if kind == "fig1":
        return _build_fig1(in_dir)
    if kind == "fig2":
        return _build_fig2(in_dir)
    if kind == "fig3":
        return _build_fig3(in_dir)
    raise ValueError(f"unknown figure kind {kind!r}; expected one of {KINDS}")


def render(spec: FigureSpec) -> Path:
    """Write the figure to spec.out_path; identical inputs give identical
    image bytes."""
    fig = build_figure(spec.kind, spec.in_dir)
    out = Path(spec.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out, dpi=150, metadata={"Software": "switchopt-figures"})
    finally:
        plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="render",
                                     description="render experiment figures from CSV output")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="directory holding the experiment CSVs")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        out = render(FigureSpec(kind=args.kind, in_dir=Path(args.in_dir),
                                out_path=Path(args.out)))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
