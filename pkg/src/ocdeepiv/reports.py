"""CSV artifacts and run manifests.

Floats are written with ``repr`` (shortest round-trip form), so reading a
file back reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .model import LossRecord
from .simkit import Dataset

DATASET_COLUMNS = ("z1", "z2", "z3", "x1", "x2", "t", "y", "theta_true")
LOSS_COLUMNS = ("epoch", "total", "mse", "ortho")
THETA_COLUMNS = ("index", "theta_true", "theta_hat", "theta_smooth")
COMPARISON_COLUMNS = ("rank", "kind", "status", "mse_raw", "mse_smoothed",
                      "mse_raw_std", "mse_smoothed_std", "replications")


class CSVFormatError(ValueError):
    """A CSV file does not match its schema; the message names the row."""


def fmt(x) -> str:
    return repr(float(x))


def _open_write(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", newline="")


def _read_rows(path, columns):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVFormatError(f"{path}: empty file") from None
        if tuple(header) != tuple(columns):
            raise CSVFormatError(f"{path}: row 1: expected header {','.join(columns)}")
        rows = []
        for rowno, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise CSVFormatError(f"{path}: row {rowno}: expected {len(columns)} "
                                     f"fields, got {len(row)}")
            rows.append((rowno, row))
    return rows


def _float(value, path, rowno, column, allow_empty=False):
    if allow_empty and value == "":
        return None
    try:
        return float(value)
    except ValueError:
        raise CSVFormatError(f"{path}: row {rowno}: bad {column} value {value!r}") from None


# --------------------------------------------------------------------------
# Dataset

def write_dataset_csv(ds: Dataset, path) -> Path:
    """Columns ``z1,z2,z3,x1,x2,t[,y],theta_true``; ``y`` is omitted when absent."""
    cols = [c for c in DATASET_COLUMNS if c != "y" or ds.Y is not None]
    parts = [ds.Z, ds.X, ds.T] + ([ds.Y] if ds.Y is not None else []) + [ds.theta_true]
    data = np.hstack(parts)
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in data:
            w.writerow([fmt(v) for v in row])
    return Path(path)


def read_dataset_csv(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise CSVFormatError(f"{path}: empty file")
    has_y = "y" in header
    cols = [c for c in DATASET_COLUMNS if c != "y" or has_y]
    rows = _read_rows(path, cols)
    data = np.array([[_float(v, path, r, c) for v, c in zip(row, cols)] for r, row in rows])
    data = data.reshape(-1, len(cols))
    Z, X, T = data[:, 0:3], data[:, 3:5], data[:, 5:6]
    Y = data[:, 6:7] if has_y else None
    return Dataset(Z, X, T, data[:, -1:], Y)


# --------------------------------------------------------------------------
# Losses and theta

def write_losses_csv(records, switch_epoch: int, path) -> Path:
    """One row per epoch; ``ortho`` is blank up to and including ``switch_epoch``."""
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_COLUMNS)
        for r in records:
            ortho = "" if r.epoch <= switch_epoch else fmt(r.ortho)
            w.writerow([r.epoch, fmt(r.total), fmt(r.mse), ortho])
    return Path(path)


def read_losses_csv(path) -> list[LossRecord]:
    """Parse ``losses.csv``; a blank ortho field reads back as ``None``."""
    out = []
    for rowno, row in _read_rows(path, LOSS_COLUMNS):
        try:
            epoch = int(row[0])
        except ValueError:
            raise CSVFormatError(f"{path}: row {rowno}: bad epoch {row[0]!r}") from None
        out.append(LossRecord(epoch, _float(row[1], path, rowno, "total"),
                              _float(row[2], path, rowno, "mse"),
                              _float(row[3], path, rowno, "ortho", allow_empty=True)))
    return out


def write_theta_csv(theta_true_, theta_hat, theta_smooth, path) -> Path:
    cols = [np.asarray(c, dtype=float).reshape(-1) for c in (theta_true_, theta_hat, theta_smooth)]
    if not cols[0].size == cols[1].size == cols[2].size:
        raise ShapeError("theta columns differ in length")
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(THETA_COLUMNS)
        for i, (a, b, c) in enumerate(zip(*cols)):
            w.writerow([i, fmt(a), fmt(b), fmt(c)])
    return Path(path)


def read_theta_csv(path):
    """Return ``(theta_true, theta_hat, theta_smooth)`` as 1-D arrays."""
    rows = _read_rows(path, THETA_COLUMNS)
    data = np.array([[_float(v, path, r, c) for v, c in zip(row[1:], THETA_COLUMNS[1:])]
                     for r, row in rows]).reshape(-1, 3)
    return data[:, 0], data[:, 1], data[:, 2]


# --------------------------------------------------------------------------
# Comparison

def write_comparison_csv(rows, path) -> Path:
    """Rows in declared estimator order, with their MSE rank (failures unranked)."""
    ok = sorted((r for r in rows if not r.failed), key=lambda r: r.mse_raw)
    rank = {id(r): i + 1 for i, r in enumerate(ok)}
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            if r.failed:
                w.writerow(["", r.kind.value, r.error, "", "", "", "", 0])
            else:
                w.writerow([rank[id(r)], r.kind.value, "ok", fmt(r.mse_raw),
                            fmt(r.mse_smoothed), fmt(r.mse_raw_std),
                            fmt(r.mse_smoothed_std), r.replications])
    return Path(path)


def read_comparison_csv(path) -> list[dict]:
    return [dict(zip(COMPARISON_COLUMNS, row)) for _, row in _read_rows(path, COMPARISON_COLUMNS)]


# --------------------------------------------------------------------------
# Manifest

def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    seed: int
    config: list[tuple[str, str]]
    files: list[Path]
    wall_time: float
    extra: dict | None = None

    def digests(self) -> dict[str, str]:
        return {Path(f).name: sha256_file(f) for f in self.files}

    def render(self) -> str:
        lines = [f"command={self.command}", f"seed={self.seed}"]
        lines += [f"config.{k}={v}" for k, v in self.config]
        for name, digest in self.digests().items():
            lines.append(f"file.{name}.sha256={digest}")
        for k, v in (self.extra or {}).items():
            lines.append(f"{k}={v}")
        lines.append(f"wall_time={self.wall_time:.3f}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.render())
        return path


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line and "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out

