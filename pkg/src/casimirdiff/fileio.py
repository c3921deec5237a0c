"""CSV readers and writers for every tabular format the package exchanges.

All writers accept a ``header`` mapping that is emitted as ``# key: value``
comment lines before the column names; readers skip ``#`` lines (except the
``# V=`` voltage tag of scan files).
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .calibration import ContactPoint, ScanRecord
from .errors import DataFormatError
from .lifshitz import ForceCurve
from .roughness import HeightDistribution, distribution_from_samples
from .stats import RepeatedScans


def _comment_block(header: Mapping | None) -> str:
    if not header:
        return ""
    lines = []
    for k, v in header.items():
        for part in str(v).splitlines() or [""]:
            lines.append(f"# {k}: {part}")
    return "\n".join(lines) + "\n"


def _g(x: float, digits: int = 6) -> str:
    return f"{x:.{digits}g}"


def _write(path, header, columns: list[str], rows: Iterable[Iterable[str]]) -> Path:
    path = Path(path)
    buf = io.StringIO()
    buf.write(_comment_block(header))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    path.write_text(buf.getvalue())
    return path


def _read(path) -> tuple[list[str], list[str], np.ndarray]:
    """Return (comment lines, column names, float data)."""
    path = Path(path)
    comments, body = [], []
    for line in path.read_text().splitlines():
        s = line.strip()
        if not s:
            continue
        (comments if s.startswith("#") else body).append(s)
    if not body:
        raise DataFormatError(f"{path}: no header row")
    reader = csv.reader(body)
    names = [c.strip() for c in next(reader)]
    try:
        data = np.array([[float(x) for x in row] for row in reader], dtype=float)
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric value ({exc})") from None
    if data.size == 0:
        data = np.empty((0, len(names)))
    if data.shape[1] != len(names):
        raise DataFormatError(f"{path}: rows do not match the {len(names)} header columns")
    return comments, names, data


def is_synthetic(path) -> bool:
    """True when a file (or a sweep directory / manifest) is flagged ``# synthetic: true``."""
    path = Path(path)
    if path.is_dir():
        return any(is_synthetic(p) for p in sorted(path.glob("*.csv")))
    for line in path.read_text().splitlines():
        if not line.startswith("#"):
            break
        if line.replace(" ", "").lower() == "#synthetic:true":
            return True
    return False


# --------------------------------------------------------------------------
# force curves


def write_force_curve(path, curve: ForceCurve, header: Mapping | None = None, magnitude: bool = False) -> Path:
    """``z_nm,F_pN[,err_pN][,absF_pN]`` with 6 significant digits."""
    cols = ["z_nm", "F_pN"]
    arrays = [curve.z_nm, curve.force_pN]
    if curve.error is not None:
        cols.append("err_pN")
        arrays.append(curve.error * 1e12)
    if magnitude:
        cols.append("absF_pN")
        arrays.append(np.abs(curve.force_pN))
    rows = ([_g(a[i]) for a in arrays] for i in range(len(curve)))
    return _write(path, header, cols, rows)


def read_force_curve(path) -> ForceCurve:
    _, names, data = _read(path)
    if names[:2] != ["z_nm", "F_pN"]:
        raise DataFormatError(f"{path}: expected columns z_nm,F_pN[,err_pN]")
    err = data[:, names.index("err_pN")] * 1e-12 if "err_pN" in names else None
    return ForceCurve(data[:, 0] * 1e-9, data[:, 1] * 1e-12, err, {"source": str(path)})


# --------------------------------------------------------------------------
# repeated scans


def write_repeated_scans(path, scans: RepeatedScans, header: Mapping | None = None) -> Path:
    cols = ["z_nm"] + [f"F_pN_rep{k + 1}" for k in range(scans.n)]
    rows = ([_g(scans.z_nm[i], 8)] + [_g(v, 8) for v in scans.forces_pN[:, i]] for i in range(scans.z_nm.size))
    return _write(path, header, cols, rows)


def read_repeated_scans(path) -> RepeatedScans:
    _, names, data = _read(path)
    if not names or names[0] != "z_nm" or not all(n.startswith("F_pN_rep") for n in names[1:]):
        raise DataFormatError(f"{path}: expected columns z_nm,F_pN_rep1,...")
    return RepeatedScans(data[:, 0], data[:, 1:].T)


# --------------------------------------------------------------------------
# calibration sweeps


def write_scan(path, scan: ScanRecord, header: Mapping | None = None) -> Path:
    head = dict(header or {})
    buf_header = _comment_block(head) + f"# V={scan.voltage!r}\n"
    path = Path(path)
    body = io.StringIO()
    w = csv.writer(body, lineterminator="\n")
    w.writerow(["z_piezo_nm", "S_def"])
    w.writerows([_g(a, 12), _g(b, 12)] for a, b in zip(scan.z_piezo, scan.signal))
    path.write_text(buf_header + body.getvalue())
    return path


def read_scan(path) -> ScanRecord:
    comments, names, data = _read(path)
    volts = [c[1:].strip()[2:] for c in comments if c[1:].strip().startswith("V=")]
    if len(volts) != 1:
        raise DataFormatError(f"{path}: need exactly one '# V=<volts>' line")
    if names != ["z_piezo_nm", "S_def"]:
        raise DataFormatError(f"{path}: expected columns z_piezo_nm,S_def")
    try:
        voltage = float(volts[0])
    except ValueError:
        raise DataFormatError(f"{path}: bad voltage tag {volts[0]!r}") from None
    return ScanRecord(voltage, data[:, 0], data[:, 1])


def write_contacts(path, contacts: list[ContactPoint], header: Mapping | None = None) -> Path:
    rows = ([_g(c.voltage, 12), _g(c.signal, 12), _g(c.z_piezo, 12)] for c in contacts)
    return _write(path, header, ["V", "S_def", "z_piezo_nm"], rows)


def read_contacts(path) -> list[ContactPoint]:
    _, names, data = _read(path)
    if names != ["V", "S_def", "z_piezo_nm"]:
        raise DataFormatError(f"{path}: expected columns V,S_def,z_piezo_nm")
    return [ContactPoint(*map(float, row)) for row in data]


def write_manifest(path, scan_files: list[str], contact_file: str | None = None,
                   header: Mapping | None = None) -> Path:
    lines = [f"scan {f}" for f in scan_files]
    if contact_file:
        lines.append(f"contact {contact_file}")
    path = Path(path)
    path.write_text(_comment_block(header) + "\n".join(lines) + "\n")
    return path


def read_manifest(path) -> tuple[list[ScanRecord], list[ContactPoint] | None]:
    """Load a sweep set from a manifest file or from a directory of ``*.csv`` scans.

    Manifest lines are ``scan <file>`` or ``contact <file>`` (relative to the
    manifest).  In a directory every file with a ``# V=`` tag is a scan and
    ``contacts.csv``, if present, holds contact positions.
    """
    path = Path(path)
    if path.is_dir():
        scans = [read_scan(p) for p in sorted(path.glob("*.csv")) if p.name != "contacts.csv"]
        cfile = path / "contacts.csv"
        contacts = read_contacts(cfile) if cfile.exists() else None
        return scans, contacts
    scans, contacts = [], None
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        kind, _, rel = s.partition(" ")
        target = path.parent / rel.strip()
        if kind == "scan":
            scans.append(read_scan(target))
        elif kind == "contact":
            contacts = read_contacts(target)
        else:
            raise DataFormatError(f"{path}:{lineno}: unknown manifest entry {kind!r}")
    if not scans:
        raise DataFormatError(f"{path}: manifest lists no scans")
    return scans, contacts


# --------------------------------------------------------------------------
# topography


def read_topography(path, bin_count: int = 64) -> HeightDistribution:
    """``height_nm`` samples (histogrammed) or ``height_nm,probability`` bins."""
    _, names, data = _read(path)
    if names == ["height_nm"]:
        return distribution_from_samples(data[:, 0] * 1e-9, bin_count)
    if names == ["height_nm", "probability"]:
        p = data[:, 1]
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-6:
            raise DataFormatError(f"{path}: probabilities must be >= 0 and sum to 1")
        return HeightDistribution(data[:, 0] * 1e-9, p / p.sum())
    raise DataFormatError(f"{path}: expected columns height_nm or height_nm,probability")


def write_topography(path, dist: HeightDistribution, header: Mapping | None = None) -> Path:
    rows = ([_g(d * 1e9, 12), _g(p, 15)] for d, p in zip(dist.offsets, dist.probabilities))
    return _write(path, header, ["height_nm", "probability"], rows)


def write_table(path, columns: list[str], arrays, header: Mapping | None = None, digits: int = 6) -> Path:
    arrays = [np.asarray(a) for a in arrays]
    rows = ([_g(float(a[i]), digits) for a in arrays] for i in range(len(arrays[0])))
    return _write(path, header, columns, rows)
