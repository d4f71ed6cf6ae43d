"""Ingestion of DPC-format epidemic CSV files.

Required columns (comma-separated, UTF-8, ISO-8601 dates with an
optional time suffix):

* national scope: ``data``, ``nuovi_positivi``, ``deceduti``,
  ``dimessi_guariti``, ``terapia_intensiva``, ``totale_positivi``
* regional scope: the above plus ``codice_regione`` and
  ``denominazione_regione``

Unknown extra columns are ignored (logged).  Daily deceased and
recovered series come from first-differencing their cumulative columns;
negative differences (data corrections) are clamped to zero with the
indices recorded in the series' clamp log.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .series import CountSeries

logger = logging.getLogger(__name__)

__all__ = ["DpcRecord", "DesignMatrix", "parse_dpc",
           "merge_autonomous_provinces", "extract_series", "weekday_design",
           "bundled_snapshot_path", "load_bundled_series"]

_MANDATORY = ["data", "nuovi_positivi", "deceduti", "dimessi_guariti",
              "terapia_intensiva", "totale_positivi"]
_MANDATORY_REGIONAL = _MANDATORY + ["codice_regione", "denominazione_regione"]

MERGED_REGION = "Trentino-Alto Adige"
AUTONOMOUS_PROVINCES = ("P.A. Bolzano", "P.A. Trento")

WEEKDAY_NAMES = {"mon": 0, "tue": 1, "wed": 2, "thu": 3, "fri": 4,
                 "sat": 5, "sun": 6}


class SchemaError(ValueError):
    pass


class RowError(ValueError):
    pass


@dataclass(frozen=True)
class DpcRecord:
    date: dt.date
    nuovi_positivi: int
    deceduti: int
    dimessi_guariti: int
    terapia_intensiva: int
    totale_positivi: int
    region_code: int | None = None
    region: str | None = None


@dataclass(frozen=True)
class DesignMatrix:
    """T x (k+1) full-column-rank design matrix, intercept first."""

    X: np.ndarray
    columns: list

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("design matrix must be 2-dimensional")
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise ValueError("design matrix is rank deficient")
        object.__setattr__(self, "X", X)


def _parse_date(raw: str) -> dt.date:
    return dt.datetime.fromisoformat(raw.strip()).date()


def _parse_count(raw: str, column: str) -> int:
    value = int(float(raw))
    if value < 0 and column != "nuovi_positivi":
        raise ValueError(f"negative cumulative value {value} in {column}")
    return max(value, 0) if column == "nuovi_positivi" else value


def parse_dpc(path, scope: str = "national") -> list:
    """Parse a DPC CSV into typed records sorted by (region, date)."""
    if scope not in ("national", "regional"):
        raise ValueError(f"unknown scope {scope!r}")
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    mandatory = _MANDATORY_REGIONAL if scope == "regional" else _MANDATORY
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, no header row")
        missing = [c for c in mandatory if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing mandatory columns {missing}")
        extra = [c for c in reader.fieldnames if c not in mandatory]
        if extra:
            logger.info("ignoring extra columns: %s", extra)
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = DpcRecord(
                    date=_parse_date(row["data"]),
                    nuovi_positivi=_parse_count(row["nuovi_positivi"], "nuovi_positivi"),
                    deceduti=_parse_count(row["deceduti"], "deceduti"),
                    dimessi_guariti=_parse_count(row["dimessi_guariti"], "dimessi_guariti"),
                    terapia_intensiva=_parse_count(row["terapia_intensiva"], "terapia_intensiva"),
                    totale_positivi=_parse_count(row["totale_positivi"], "totale_positivi"),
                    region_code=(int(row["codice_regione"])
                                 if scope == "regional" else None),
                    region=(row["denominazione_regione"].strip()
                            if scope == "regional" else None),
                )
            except (ValueError, KeyError) as exc:
                raise RowError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    if not records:
        raise SchemaError(f"{path}: no data rows")
    records.sort(key=lambda r: (r.region or "", r.date))
    _check_dates_increasing(records)
    return records


def _check_dates_increasing(records):
    by_region = {}
    for rec in records:
        by_region.setdefault(rec.region, []).append(rec.date)
    for region, dates in by_region.items():
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise RowError(f"dates not strictly increasing for region {region!r}")


def merge_autonomous_provinces(records: list) -> list:
    """Sum Trento and Bolzano into Trentino-Alto Adige (20 regions left)."""
    if any(r.region is None for r in records):
        raise ValueError("merge requires regional-scope records")
    provinces = {}
    out = []
    for rec in records:
        if rec.region in AUTONOMOUS_PROVINCES:
            provinces.setdefault(rec.date, []).append(rec)
        else:
            out.append(rec)
    for date, recs in sorted(provinces.items()):
        if len(recs) == 1:
            logger.warning("only %s present on %s; missing province treated as 0",
                           recs[0].region, date)
        out.append(DpcRecord(
            date=date,
            nuovi_positivi=sum(r.nuovi_positivi for r in recs),
            deceduti=sum(r.deceduti for r in recs),
            dimessi_guariti=sum(r.dimessi_guariti for r in recs),
            terapia_intensiva=sum(r.terapia_intensiva for r in recs),
            totale_positivi=sum(r.totale_positivi for r in recs),
            region_code=4,
            region=MERGED_REGION,
        ))
    out.sort(key=lambda r: (r.region or "", r.date))
    return out


_CUMULATIVE_FIELD = {"deceased": "deceduti", "recovered": "dimessi_guariti"}


def extract_series(records: list, indicator: str,
                   region: str | None = None) -> CountSeries:
    """Daily incidence series for one indicator.

    positives come straight from ``nuovi_positivi``; deceased and
    recovered are first differences of their cumulative columns with
    negative corrections clamped to zero and logged.
    """
    recs = [r for r in records if r.region == region]
    if not recs:
        raise ValueError(f"no records for region {region!r}")
    recs.sort(key=lambda r: r.date)
    dates = [r.date for r in recs]
    if indicator == "positives":
        values = np.array([r.nuovi_positivi for r in recs], dtype=float)
        return CountSeries(start_date=dates[0], values=values,
                           indicator="daily-positives", region=region)
    if indicator not in _CUMULATIVE_FIELD:
        raise ValueError(f"unknown indicator {indicator!r}")
    cum = np.array([getattr(r, _CUMULATIVE_FIELD[indicator]) for r in recs],
                   dtype=float)
    diffs = np.diff(cum)
    # clamp log holds model times (1-based positions in the daily series)
    clamped = tuple(int(i) + 1 for i in np.nonzero(diffs < 0)[0])
    if clamped:
        logger.warning("%s: clamped %d negative daily differences at %s",
                       indicator, len(clamped), clamped)
    values = np.clip(diffs, 0.0, None)
    return CountSeries(start_date=dates[1], values=values,
                       indicator=f"daily-{indicator}", region=region,
                       clamp_log=clamped)


def reconciliation(records: list, indicator: str,
                   region: str | None = None) -> dict:
    """Exact identity: cumsum(daily) + day0 + clamped mass == final cumulative."""
    recs = sorted((r for r in records if r.region == region),
                  key=lambda r: r.date)
    cum = np.array([getattr(r, _CUMULATIVE_FIELD[indicator]) for r in recs],
                   dtype=float)
    series = extract_series(records, indicator, region)
    diffs = np.diff(cum)
    clamped_mass = float(-np.sum(diffs[diffs < 0]))
    return {
        "day0_value": float(cum[0]),
        "final_cumulative": float(cum[-1]),
        "daily_sum": float(np.sum(series.values)),
        "clamped_mass": clamped_mass,
        "identity_gap": float(cum[-1] - (cum[0] + np.sum(series.values)
                                         - clamped_mass)),
    }


def weekday_design(dates, flagged_days) -> DesignMatrix:
    """Intercept plus a dummy equal to 1 on the flagged weekdays."""
    if len(dates) == 0:
        raise ValueError("empty date list")
    flags = set()
    for day in flagged_days:
        if isinstance(day, str):
            key = day.strip().lower()[:3]
            if key not in WEEKDAY_NAMES:
                raise ValueError(f"unknown weekday {day!r}")
            flags.add(WEEKDAY_NAMES[key])
        else:
            flags.add(int(day))
    if not flags:
        raise ValueError("flagged weekday set is empty")
    if len(flags) == 7:
        raise ValueError("all weekdays flagged: dummy collinear with intercept")
    dummy = np.array([1.0 if d.weekday() in flags else 0.0 for d in dates])
    X = np.column_stack([np.ones(len(dates)), dummy])
    label = "wd_" + "".join(sorted(
        k.capitalize() for k, v in WEEKDAY_NAMES.items() if v in flags))
    return DesignMatrix(X=X, columns=["intercept", label])


# ---------------------------------------------------------------------------
# bundled snapshot


def bundled_snapshot_path(scope: str = "national") -> Path:
    name = ("dpc-covid19-ita-andamento-nazionale.csv" if scope == "national"
            else "dpc-covid19-ita-regioni.csv")
    return Path(resources.files("richfit.datasets") / name)


def load_bundled_series(indicator: str = "positives") -> CountSeries:
    """Indicator series from the frozen national snapshot."""
    records = parse_dpc(bundled_snapshot_path("national"), scope="national")
    return extract_series(records, indicator)
