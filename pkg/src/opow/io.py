"""File formats: the shared series CSV schema, cumulant-table CSV, and JSON
metadata sidecars.  All writes go through a temp-file-plus-rename so a
crashed run never leaves a half-written artifact.
"""

from __future__ import annotations

import csv
import datetime
import io
import json
import os
import subprocess
import tempfile

import numpy as np

from . import __version__
from .ensemble import ObservableSeries
from .errors import ValidationError
from .noise import CumulantTable, monomial_label, sigma_cumulant_targets

SERIES_COLUMNS = ("t", "mean_Xa", "se_Xa", "mean_n_a", "se_n_a",
                  "mean_Xb", "se_Xb", "n_effective", "diverged_fraction")

CUMULANT_COLUMNS = ("monomial", "real", "imag", "se_real", "se_imag",
                    "target_real", "target_imag")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def series_to_csv(series: ObservableSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for j in range(len(series.times)):
        w.writerow(
            [_fmt(series.times[j])]
            + [x for i in range(3)
               for x in (_fmt(series.mean[j, i]), _fmt(series.stderr[j, i]))]
            + [str(int(series.n_effective[j])), _fmt(series.diverged_fraction[j])]
        )
    return buf.getvalue()


def write_series_csv(path: str, series: ObservableSeries) -> None:
    atomic_write_text(path, series_to_csv(series))


def read_series_csv(path: str) -> ObservableSeries:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SERIES_COLUMNS:
        raise ValidationError(
            f"{path}: expected header {','.join(SERIES_COLUMNS)}"
        )
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    if data.size == 0:
        raise ValidationError(f"{path}: no data rows")
    n_eff = data[:, 7].astype(np.int64)
    div = data[:, 8]
    n_traj = int(round(n_eff[0] / (1.0 - div[0]))) if div[0] < 1 else int(n_eff[0])
    return ObservableSeries(
        times=data[:, 0],
        mean=data[:, (1, 3, 5)],
        stderr=data[:, (2, 4, 6)],
        n_effective=n_eff,
        diverged_fraction=div,
        n_traj=max(n_traj, 1),
    )


def cumulants_to_csv(table: CumulantTable, kappa: float) -> str:
    targets = sigma_cumulant_targets(kappa)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CUMULANT_COLUMNS)
    for idx, entry in table.entries.items():
        tgt = targets[idx]
        w.writerow([
            monomial_label(idx, table.variables),
            _fmt(entry.value.real), _fmt(entry.value.imag),
            _fmt(entry.se_real), _fmt(entry.se_imag),
            _fmt(tgt.real), _fmt(tgt.imag),
        ])
    return buf.getvalue()


def version_string() -> str:
    base = f"opow {__version__}"
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True, text=True, timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{base}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def run_metadata(resolved_config: dict, *, seed: int, wall_time_s: float,
                 extra: dict | None = None) -> dict:
    meta = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "version": version_string(),
        "seed": int(seed),
        "wall_time_s": float(wall_time_s),
        "config": resolved_config,
    }
    if extra:
        meta.update(extra)
    return meta


def write_metadata(path: str, meta: dict) -> None:
    atomic_write_text(path, json.dumps(meta, indent=2, sort_keys=True) + "\n")
