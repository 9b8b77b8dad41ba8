"""Monitoring-network data ingestion.

Station files are comma-separated text with the exact header

    station_id,x_utm,y_utm,x1,x2,x3,y1,y2,sampled

plus an optional trailing ``cluster`` column carrying a tag such as C1, C2
or C3.  Rows flagged ``sampled`` must provide both outcomes; unsampled rows
leave ``y1`` and ``y2`` empty.  Coordinates are metres in a projected (UTM)
system; before any optimisation they are mapped onto a unit bounding box by
a uniform scaling (recorded, invertible) so the correlation-range priors
stay comparable across problems.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

from .exceptions import IngestionError
from .spatial import Location, PredictionSet

REQUIRED_HEADER = ("station_id", "x_utm", "y_utm", "x1", "x2", "x3", "y1", "y2", "sampled")
CLUSTER_COLUMN = "cluster"


@dataclass(frozen=True)
class StationRecord:
    """One monitoring station, with covariates and optional observed outcomes."""

    station_id: str
    x_utm: float
    y_utm: float
    covariates: tuple[float, float, float]
    y1: float | None
    y2: int | None
    sampled: bool
    cluster: str | None = None

    def __post_init__(self):
        if self.sampled and (self.y1 is None or self.y2 is None):
            raise IngestionError(f"sampled station {self.station_id!r} is missing outcome values")


@dataclass(frozen=True)
class AffineMap:
    """Uniform rescale from original coordinates onto a unit bounding box."""

    x0: float
    y0: float
    scale: float

    def to_unit(self, x: float, y: float) -> tuple[float, float]:
        return (x - self.x0) * self.scale, (y - self.y0) * self.scale

    def to_original(self, x: float, y: float) -> tuple[float, float]:
        return x / self.scale + self.x0, y / self.scale + self.y0


def bundled_stations_path() -> str:
    """Path of the bundled synthetic 22-station network file."""
    return str(resources.files("geodesign.data").joinpath("stations_synthetic.csv"))


def _parse_float(text: str, row: int, name: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestionError(f"row {row}: field {name!r} is not numeric: {text!r}") from None
    if not math.isfinite(value):
        raise IngestionError(f"row {row}: field {name!r} is not finite")
    return value


def ingest_stations(path: str) -> list[StationRecord]:
    """Read and validate a station file.

    Raises an ingestion error naming the offending row for duplicate ids,
    non-numeric fields or sampled rows missing outcomes.  An empty body
    (header only) returns an empty list with a warning.
    """
    import logging

    log = logging.getLogger(__name__)
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise IngestionError(f"cannot open station file {path!r}: {exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("station file is empty (no header row)") from None
        header = tuple(h.strip() for h in header)
        if header[: len(REQUIRED_HEADER)] != REQUIRED_HEADER:
            raise IngestionError(
                f"station file header must start with {','.join(REQUIRED_HEADER)!r}, got {','.join(header)!r}"
            )
        has_cluster = len(header) > len(REQUIRED_HEADER) and header[len(REQUIRED_HEADER)] == CLUSTER_COLUMN
        records: list[StationRecord] = []
        seen: set[str] = set()
        for row_num, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            expected = len(REQUIRED_HEADER) + (1 if has_cluster else 0)
            if len(row) != expected:
                raise IngestionError(f"row {row_num}: expected {expected} fields, got {len(row)}")
            sid = row[0].strip()
            if not sid:
                raise IngestionError(f"row {row_num}: empty station_id")
            if sid in seen:
                raise IngestionError(f"row {row_num}: duplicate station_id {sid!r}")
            seen.add(sid)
            x = _parse_float(row[1], row_num, "x_utm")
            y = _parse_float(row[2], row_num, "y_utm")
            covs = tuple(_parse_float(row[3 + i], row_num, f"x{i + 1}") for i in range(3))
            sampled_text = row[8].strip().lower()
            if sampled_text not in ("true", "false", "1", "0", "yes", "no"):
                raise IngestionError(f"row {row_num}: field 'sampled' must be boolean-like, got {row[8]!r}")
            sampled = sampled_text in ("true", "1", "yes")
            y1_text, y2_text = row[6].strip(), row[7].strip()
            if sampled:
                if not y1_text or not y2_text:
                    raise IngestionError(f"row {row_num}: sampled station {sid!r} is missing outcomes")
                y1 = _parse_float(y1_text, row_num, "y1")
                y2f = _parse_float(y2_text, row_num, "y2")
                if y2f < 0 or int(y2f) != y2f:
                    raise IngestionError(f"row {row_num}: y2 must be a nonnegative integer")
                y2 = int(y2f)
            else:
                y1 = _parse_float(y1_text, row_num, "y1") if y1_text else None
                y2 = int(_parse_float(y2_text, row_num, "y2")) if y2_text else None
            cluster = row[9].strip() if has_cluster else None
            records.append(
                StationRecord(
                    station_id=sid, x_utm=x, y_utm=y, covariates=covs, y1=y1, y2=y2, sampled=sampled, cluster=cluster
                )
            )
    if not records:
        log.warning("station file %s has a header but no data rows", path)
    else:
        log.info(
            "ingested %d stations (%d sampled) from %s", len(records), sum(r.sampled for r in records), path
        )
    return records


def unit_box_map(records: list[StationRecord]) -> AffineMap:
    """Uniform affine map taking the stations into the unit bounding box.

    The longer side of the bounding box maps to length one, preserving
    isotropy of the distances.
    """
    xs = [r.x_utm for r in records]
    ys = [r.y_utm for r in records]
    width = max(xs) - min(xs)
    height = max(ys) - min(ys)
    span = max(width, height)
    if span <= 0:
        raise IngestionError("station coordinates are degenerate (all identical)")
    return AffineMap(x0=min(xs), y0=min(ys), scale=1.0 / span)


def station_locations(records: list[StationRecord], affine: AffineMap) -> list[Location]:
    """Unit-box locations for the stations, covariates attached."""
    out = []
    for r in records:
        x, y = affine.to_unit(r.x_utm, r.y_utm)
        out.append(Location(x=x, y=y, covariates=r.covariates))
    return out


def station_prediction_set(records: list[StationRecord], affine: AffineMap) -> PredictionSet:
    """All network stations as the prediction locations."""
    return PredictionSet(tuple(station_locations(records, affine)))
