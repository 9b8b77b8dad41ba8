import pytest

from geodesign import IngestionError
from geodesign.stations import (
    REQUIRED_HEADER,
    bundled_stations_path,
    ingest_stations,
    station_prediction_set,
    unit_box_map,
)

HEADER = ",".join(REQUIRED_HEADER)


def write(tmp_path, body, header=HEADER):
    path = tmp_path / "stations.csv"
    path.write_text(header + "\n" + body)
    return str(path)


def test_bundled_file_counts():
    records = ingest_stations(bundled_stations_path())
    assert len(records) == 22
    assert sum(r.sampled for r in records) == 7
    assert all(r.cluster in {"C1", "C2", "C3"} for r in records)


def test_header_only_file_is_empty(tmp_path):
    records = ingest_stations(write(tmp_path, ""))
    assert records == []


def test_duplicate_id_names_station(tmp_path):
    body = "a,0,0,0,0,0,,,false\na,1,1,0,0,0,,,false\n"
    with pytest.raises(IngestionError) as err:
        ingest_stations(write(tmp_path, body))
    assert "'a'" in str(err.value)
    assert "row 3" in str(err.value)


def test_non_numeric_field_names_row(tmp_path):
    body = "a,0,zero,0,0,0,,,false\n"
    with pytest.raises(IngestionError) as err:
        ingest_stations(write(tmp_path, body))
    assert "row 2" in str(err.value)
    assert "y_utm" in str(err.value)


def test_sampled_requires_outcomes(tmp_path):
    body = "a,0,0,0,0,0,,,true\n"
    with pytest.raises(IngestionError) as err:
        ingest_stations(write(tmp_path, body))
    assert "missing outcomes" in str(err.value)


def test_wrong_header_rejected(tmp_path):
    with pytest.raises(IngestionError):
        ingest_stations(write(tmp_path, "", header="id,x,y"))


def test_optional_cluster_column(tmp_path):
    body = "a,0,0,0,0,0,,,false,C1\nb,10,5,0,0,0,4.5,3,true,C2\n"
    records = ingest_stations(write(tmp_path, body, header=HEADER + ",cluster"))
    assert records[0].cluster == "C1"
    assert records[1].y1 == 4.5 and records[1].y2 == 3


def test_unit_box_map_uniform_scale():
    records = ingest_stations(bundled_stations_path())
    affine = unit_box_map(records)
    unit = [affine.to_unit(r.x_utm, r.y_utm) for r in records]
    xs = [u[0] for u in unit]
    ys = [u[1] for u in unit]
    assert min(xs) == 0.0 and min(ys) == 0.0
    assert max(max(xs), max(ys)) == pytest.approx(1.0, abs=1e-12)
    # uniform: aspect ratio preserved
    w = max(r.x_utm for r in records) - min(r.x_utm for r in records)
    h = max(r.y_utm for r in records) - min(r.y_utm for r in records)
    assert max(xs) / max(ys) == pytest.approx(w / h, rel=1e-12)


def test_affine_round_trip_within_tolerance():
    records = ingest_stations(bundled_stations_path())
    affine = unit_box_map(records)
    for r in records:
        x, y = affine.to_original(*affine.to_unit(r.x_utm, r.y_utm))
        assert abs(x - r.x_utm) <= 1e-6 * abs(r.x_utm)
        assert abs(y - r.y_utm) <= 1e-6 * abs(r.y_utm)


def test_prediction_set_covers_network():
    records = ingest_stations(bundled_stations_path())
    pred = station_prediction_set(records, unit_box_map(records))
    assert pred.T == 22
    assert len(pred.points[0].covariates) == 3
