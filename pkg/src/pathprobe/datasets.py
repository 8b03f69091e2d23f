"""CSV reading and writing for sweep, counting and figure data.

Column layouts are part of the external contract and are validated
verbatim on read.  Optional cells (undefined conditionals) are written as
empty fields.  Floats are written with repr so that a read-back returns
bit-identical values.  All writers are atomic: the file appears complete
or not at all.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass

from .interferometer import DelocalizationRecord, SweepResult
from .montecarlo import CorrectedRate, CountRecord

SWEEP_HEADER = (
    "phase_deg",
    "p_plus",
    "p_minus",
    "p_h_given_plus",
    "p_h_given_minus",
    "a2_plus",
    "a2_minus",
    "sigma_p_plus",
    "sigma_p_minus",
    "sigma_ph_plus",
    "sigma_ph_minus",
    "sigma_a2_plus",
    "sigma_a2_minus",
)
BACKGROUND_HEADER = ("run_kind", "port", "pol_setting", "counts", "duration_s")
COUNTS_HEADER = ("run_kind", "port", "pol_setting", "phase_deg", "counts", "duration_s")
CORRECTED_HEADER = ("run_kind", "port", "pol_setting", "phase_deg", "rate", "sigma")
BLOCKED_HEADER = (
    "phase_deg",
    "open_path",
    "p_plus",
    "p_minus",
    "p_h_given_plus",
    "p_h_given_minus",
    "survival",
)

FIGURE_HEADERS = {
    "fig4.csv": ("phase_deg", "p_plus", "p_minus"),
    "fig5a.csv": ("phase_deg", "p_h_given_minus", "reference", "a2_minus"),
    "fig5b.csv": ("phase_deg", "p_h_given_plus", "reference", "a2_plus"),
    "fig6a.csv": ("phase_deg", "p_h_given_minus", "a2_minus"),
    "fig6b.csv": ("phase_deg", "p_h_given_plus", "a2_plus"),
}


@dataclass(frozen=True)
class BlockedRecord:
    """Single-path run at one phase: port split, flip rates, survival."""

    phase_deg: float
    open_path: int
    p_plus: float
    p_minus: float
    p_h_given_plus: float
    p_h_given_minus: float
    survival: float

    def __post_init__(self):
        if self.open_path not in (1, 2):
            raise ValueError(f"open_path out of range: {self.open_path!r}")
        if not math.isfinite(self.phase_deg):
            raise ValueError(f"phase_deg out of range: {self.phase_deg!r}")


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        raise ValueError(f"cannot format {value!r}")
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(prefix=".partial-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def write_json(path, payload) -> None:
    """Atomically write a JSON report."""
    _atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def _write_table(path, header, rows) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(cell) for cell in row])
    _atomic_write_text(path, buffer.getvalue())


def _read_table(path, header):
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            found = tuple(next(reader))
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if found != tuple(header):
            raise ValueError(f"{path}: unexpected header {found!r}")
        rows = []
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"{path}: row has {len(row)} cells, expected {len(header)}")
            rows.append(row)
    return rows


def _float_cell(cell: str):
    return None if cell == "" else float(cell)


def _int_cell(cell: str) -> int:
    return int(cell)


def write_sweep_csv(path, sweep_result: SweepResult) -> None:
    rows = []
    for r in sweep_result.records:
        rows.append(
            (
                r.phase_deg,
                r.p_plus,
                r.p_minus,
                r.p_h_given_plus,
                r.p_h_given_minus,
                r.a2_plus,
                r.a2_minus,
                r.sigma_p_plus,
                r.sigma_p_minus,
                r.sigma_ph_plus,
                r.sigma_ph_minus,
                r.sigma_a2_plus,
                r.sigma_a2_minus,
            )
        )
    _write_table(path, SWEEP_HEADER, rows)


def read_sweep_csv(path) -> tuple:
    """Sweep rows as ``DelocalizationRecord`` objects (reference not stored)."""
    records = []
    for row in _read_table(path, SWEEP_HEADER):
        values = [_float_cell(cell) for cell in row]
        records.append(
            DelocalizationRecord(
                phase_deg=values[0],
                p_plus=values[1],
                p_minus=values[2],
                p_h_given_plus=values[3],
                p_h_given_minus=values[4],
                a2_plus=values[5],
                a2_minus=values[6],
                sigma_p_plus=values[7],
                sigma_p_minus=values[8],
                sigma_ph_plus=values[9],
                sigma_ph_minus=values[10],
                sigma_a2_plus=values[11],
                sigma_a2_minus=values[12],
            )
        )
    return tuple(records)


def write_background_csv(path, records) -> None:
    rows = [(r.run_kind, r.port, r.pol_setting, r.counts, r.duration) for r in records]
    _write_table(path, BACKGROUND_HEADER, rows)


def read_background_csv(path) -> tuple:
    """Background rows as ``CountRecord`` objects (phase fixed at 0)."""
    records = []
    for row in _read_table(path, BACKGROUND_HEADER):
        records.append(
            CountRecord(
                run_kind=row[0],
                port=row[1],
                pol_setting=row[2],
                phase_deg=0.0,
                counts=_int_cell(row[3]),
                duration=float(row[4]),
            )
        )
    return tuple(records)


def write_counts_csv(path, records) -> None:
    rows = [
        (r.run_kind, r.port, r.pol_setting, r.phase_deg, r.counts, r.duration) for r in records
    ]
    _write_table(path, COUNTS_HEADER, rows)


def read_counts_csv(path) -> tuple:
    records = []
    for row in _read_table(path, COUNTS_HEADER):
        records.append(
            CountRecord(
                run_kind=row[0],
                port=row[1],
                pol_setting=row[2],
                phase_deg=float(row[3]),
                counts=_int_cell(row[4]),
                duration=float(row[5]),
            )
        )
    return tuple(records)


def write_corrected_csv(path, records) -> None:
    rows = [
        (r.run_kind, r.port, r.pol_setting, r.phase_deg, r.rate, r.sigma) for r in records
    ]
    _write_table(path, CORRECTED_HEADER, rows)


def read_corrected_csv(path) -> tuple:
    records = []
    for row in _read_table(path, CORRECTED_HEADER):
        records.append(
            CorrectedRate(
                run_kind=row[0],
                port=row[1],
                pol_setting=row[2],
                phase_deg=float(row[3]),
                rate=float(row[4]),
                sigma=float(row[5]),
            )
        )
    return tuple(records)


def write_blocked_csv(path, records) -> None:
    rows = [
        (
            r.phase_deg,
            r.open_path,
            r.p_plus,
            r.p_minus,
            r.p_h_given_plus,
            r.p_h_given_minus,
            r.survival,
        )
        for r in records
    ]
    _write_table(path, BLOCKED_HEADER, rows)


def read_blocked_csv(path) -> tuple:
    records = []
    for row in _read_table(path, BLOCKED_HEADER):
        records.append(
            BlockedRecord(
                phase_deg=float(row[0]),
                open_path=int(row[1]),
                p_plus=float(row[2]),
                p_minus=float(row[3]),
                p_h_given_plus=float(row[4]),
                p_h_given_minus=float(row[5]),
                survival=float(row[6]),
            )
        )
    return tuple(records)


def write_figure_csvs(outdir, sweep_result: SweepResult) -> tuple:
    """Write the five figure tables for one sweep; returns the paths.

    fig4 carries the port split, fig5a/fig5b the conditional flip rates
    against the pooled single-path reference, fig6a/fig6b the normalized
    delocalization ratios alone.
    """
    outdir = os.fspath(outdir)
    os.makedirs(outdir, exist_ok=True)
    reference = sweep_result.reference_flip_prob
    columns = {
        "fig4.csv": lambda r: (r.phase_deg, r.p_plus, r.p_minus),
        "fig5a.csv": lambda r: (r.phase_deg, r.p_h_given_minus, reference, r.a2_minus),
        "fig5b.csv": lambda r: (r.phase_deg, r.p_h_given_plus, reference, r.a2_plus),
        "fig6a.csv": lambda r: (r.phase_deg, r.p_h_given_minus, r.a2_minus),
        "fig6b.csv": lambda r: (r.phase_deg, r.p_h_given_plus, r.a2_plus),
    }
    paths = []
    for name, header in FIGURE_HEADERS.items():
        path = os.path.join(outdir, name)
        _write_table(path, header, [columns[name](r) for r in sweep_result.records])
        paths.append(path)
    return tuple(paths)
