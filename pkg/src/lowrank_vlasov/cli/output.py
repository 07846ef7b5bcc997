"""Result files: diagnostics CSV, factor snapshots and the resolved scenario."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

CSV_HEADER = ["t", "electric_energy", "mass", "total_energy", "entropy", "rank", "l2_error", "wall_ms"]


def _fmt(x):
    return "" if x is None else repr(float(x))


def write_matrix(path, A):
    """``rows cols`` header, then one row per line with 17 significant digits."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]}\n")
        for row in A:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_matrix(path):
    with open(path) as fh:
        rows, cols = (int(s) for s in fh.readline().split())
        data = np.array(fh.read().split(), dtype=float)
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols)


def write_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([
                _fmt(r.t), _fmt(r.electric_energy), _fmt(r.mass), _fmt(r.total_energy),
                _fmt(r.entropy), str(int(r.rank)), _fmt(r.l2_error), f"{r.wall_ms:.3f}",
            ])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_outputs(records, snapshots, out_dir, scenario=None, ops=None):
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "diagnostics.csv", records)
        for i, st in enumerate(snapshots):
            d = out / f"snapshot_{i:03d}"
            d.mkdir(exist_ok=True)
            write_matrix(d / "X.mat", st.X)
            write_matrix(d / "S.mat", st.S)
            write_matrix(d / "V.mat", st.V)
            meta = [f"t = {st.t!r}", f"rank = {st.rank}"]
            if ops is not None:
                meta += [f"x_mesh = {ops.x_mesh.fingerprint()}", f"v_mesh = {ops.v_mesh.fingerprint()}"]
            (d / "meta.txt").write_text("\n".join(meta) + "\n")
        if scenario is not None:
            (out / "scenario.resolved.txt").write_text("\n".join(scenario.resolved_lines()) + "\n")
    except OSError as exc:
        raise OSError(f"writing results to {out}: {exc}") from exc
