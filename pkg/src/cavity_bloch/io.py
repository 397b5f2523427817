"""Flat-file persistence: CSV tables, covariance dumps, run manifests.

All CSV files carry one header row; floats are written with repr-level
precision so identical runs produce byte-identical files.  Every output
directory gets exactly one ``manifest.json`` listing the generating
parameters, the command settings, and a content hash per file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fluctuations import FluctuationRun
from .meanfield import MeanfieldTrajectory
from .params import PARAM_FIELDS, SystemParams, validate

__all__ = [
    "RunManifest",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_occupations_csv",
    "write_spectrum_csv",
    "write_scan_csv",
    "write_covariances_npz",
    "fmt",
]

_VERSION = "0.1.0"


def fmt(x) -> str:
    """Deterministic, round-trippable float formatting."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Provenance record for one output directory."""

    params: dict
    command: str
    settings: dict = field(default_factory=dict)
    version: str = _VERSION
    created_utc: str = ""
    outputs: list = field(default_factory=list)

    def add_output(self, path: Path) -> None:
        path = Path(path)
        self.outputs.append(
            {"path": path.name, "sha256": _sha256(path), "bytes": path.stat().st_size}
        )

    def write(self, out_dir: Path) -> Path:
        self.created_utc = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        target = Path(out_dir) / "manifest.json"
        with open(target, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "tool": "cavity-bloch",
                    "version": self.version,
                    "command": self.command,
                    "created_utc": self.created_utc,
                    "params": self.params,
                    "settings": self.settings,
                    "outputs": self.outputs,
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
        return target

    @staticmethod
    def read(out_dir: Path) -> dict:
        with open(Path(out_dir) / "manifest.json", "r", encoding="utf-8") as fh:
            return json.load(fh)


def write_trajectory_csv(traj: MeanfieldTrajectory, path) -> Path:
    """Columns: t, re_alpha, im_alpha, s, then re/im of every c_n."""
    path = Path(path)
    n_max = traj.params.n_max
    header = ["t", "re_alpha", "im_alpha", "s"]
    for n in range(-n_max, n_max + 1):
        header += [f"re_c_{n}", f"im_c_{n}"]
    depth = traj.depth
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(traj.grid):
            row = [fmt(t), fmt(traj.alpha[k].real), fmt(traj.alpha[k].imag), fmt(depth[k])]
            for c in traj.coeffs[k]:
                row += [fmt(c.real), fmt(c.imag)]
            writer.writerow(row)
    return path


def read_trajectory_csv(path, params: SystemParams | dict) -> MeanfieldTrajectory:
    """Rebuild a trajectory (without dense interpolant) from its CSV."""
    if isinstance(params, dict):
        params = validate(params)
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, row)) for row in reader]
    data = np.asarray(rows)
    n_cols = len(header)
    k = (n_cols - 4) // 2
    if k != params.n_modes:
        raise ValueError(f"CSV has {k} coefficient columns, params expect {params.n_modes}")
    grid = data[:, 0]
    alpha = data[:, 1] + 1j * data[:, 2]
    coeffs = data[:, 4::2] + 1j * data[:, 5::2]
    return MeanfieldTrajectory(params=params, grid=grid, alpha=alpha, coeffs=coeffs, dense=None)


def write_occupations_csv(run: FluctuationRun, path) -> Path:
    """Columns: t, dn, dN plus the recorded accuracy diagnostics."""
    path = Path(path)
    with_dual = run.dual_residuals is not None
    header = ["t", "dn", "dN", "commutator_residual"] + (["dual_residual"] if with_dual else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(run.times):
            row = [
                fmt(t),
                fmt(run.photon_occupation[k]),
                fmt(run.atom_occupation[k]),
                fmt(run.commutator_residuals[k]),
            ]
            if with_dual:
                row.append(fmt(run.dual_residuals[k]))
            writer.writerow(row)
    return path


def write_spectrum_csv(rows: list[dict], path) -> Path:
    """Columns: x, band, omega, gamma, kind, cavity_weight, occupation."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "band", "omega", "gamma", "kind", "cavity_weight", "occupation"])
        for row in rows:
            writer.writerow(
                [
                    fmt(row["x"]),
                    int(row["band"]),
                    fmt(row["omega"]),
                    fmt(row["gamma"]),
                    row["kind"],
                    fmt(row["cavity_weight"]),
                    fmt(row.get("occupation", 0.0)),
                ]
            )
    return path


def write_scan_csv(rows: list[dict], path) -> Path:
    """Flattened SNR scan table, one line per (point, mode)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["axis", "value", "mode", "omega", "t_end", "signal", "variance", "snr", "converged"]
        )
        for row in rows:
            if row.get("failed"):
                writer.writerow([row["axis"], fmt(row["value"]), "failed", "", "", "", "", "", ""])
                continue
            for mode, res in sorted(row["results"].items()):
                writer.writerow(
                    [
                        row["axis"],
                        fmt(row["value"]),
                        mode,
                        fmt(row["omega"]),
                        fmt(row["t_end"]),
                        fmt(res["signal"]),
                        fmt(res["variance"]),
                        fmt(res["snr"]),
                        "" if res["converged"] is None else fmt(res["converged"]),
                    ]
                )
    return path


def write_covariances_npz(run: FluctuationRun, path, stride: int = 1) -> Path | None:
    """Binary dump of covariance snapshots every ``stride`` snapshots."""
    if not run.covariances:
        return None
    path = Path(path)
    picks = run.covariances[::stride]
    np.savez_compressed(
        path,
        times=np.array([c.t for c in picks]),
        covariances=np.stack([c.c for c in picks]),
    )
    return path


def params_dict(p: SystemParams) -> dict:
    return {name: getattr(p, name) for name in PARAM_FIELDS}
