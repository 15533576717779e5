import json
import math

import pytest

from crimelink.data import (
    CrimeDataset,
    CrimeRecord,
    DataError,
    IngestSchema,
    load_dataset,
    load_diagnostics,
    read_truth,
    save_dataset,
    solved_subset,
    write_truth,
)


def _ds():
    recs = (
        CrimeRecord("a", 0.0, 1.0, 10.0, 12.0, {"prop": "tv"}, {"o1"}),
        CrimeRecord("b", math.nan, math.nan, 5.0, 5.0, {"prop": None}, set()),
        CrimeRecord("c", 3.0, 4.0, 7.5, 9.0, {"prop": "cash"}, {"o1", "o2"}),
    )
    return CrimeDataset(recs, {"prop": ("cash", "tv")})


def test_record_validation():
    with pytest.raises(DataError):
        CrimeRecord("a", 0, 0, 5.0, 4.0)
    with pytest.raises(DataError):
        CrimeRecord("a", math.inf, 0, 0, 0)
    with pytest.raises(DataError):
        CrimeRecord("a", 0, 0, math.nan, 0)
    r = CrimeRecord("a", math.nan, 0, 1, 1, offenders=["x"])
    assert r.exact_time and r.solved and r.offenders == frozenset({"x"})


def test_dataset_checks_ids_and_levels():
    r = CrimeRecord("a", 0, 0, 0, 0)
    with pytest.raises(DataError):
        CrimeDataset((r, r))
    with pytest.raises(DataError):
        CrimeDataset((CrimeRecord("a", 0, 0, 0, 0, {"prop": "gold"}),), {"prop": ("tv",)})
    with pytest.raises(DataError):
        CrimeDataset((CrimeRecord("a", 0, 0, 0, 0, {"prop": "tv"}),))


def test_dataset_access():
    ds = _ds()
    assert len(ds) == 3 and ds.ids == ["a", "b", "c"]
    assert ds["c"].x == 3.0 and "b" in ds and "z" not in ds
    assert solved_subset(ds).ids == ["a", "c"]
    assert ds.subset({"c", "a"}).ids == ["a", "c"]


def test_roundtrip(tmp_path):
    ds = _ds()
    sidecar = save_dataset(ds, tmp_path / "crimes.csv")
    assert sidecar.exists()
    back = load_dataset(tmp_path / "crimes.csv")
    assert back.ids == ds.ids
    assert back.category_schemas == ds.category_schemas
    for r0, r1 in zip(ds, back):
        assert r0.offenders == r1.offenders
        assert r0.t_earliest == r1.t_earliest and r0.t_latest == r1.t_latest
        assert (r0.x == r1.x) or (math.isnan(r0.x) and math.isnan(r1.x))
        assert dict(r0.categories) == dict(r1.categories)


def _write(tmp_path, text, schema):
    p = tmp_path / "in.csv"
    p.write_text(text)
    return p, IngestSchema.from_json(schema)


def test_invalid_rows_skipped_with_diagnostics(tmp_path):
    text = "cid,t0,t1,px,py,kind\nA,1,2,0,0,tv\nB,5,3,0,0,tv\nC,1,1,0,0,boat\n,1,1,0,0,tv\nA,1,1,0,0,tv\n"
    schema = {"columns": {"cid": "id", "t0": "t_earliest", "t1": "t_latest", "px": "x", "py": "y",
                          "kind": "category:prop"}, "levels": {"prop": ["tv"]}}
    p, sch = _write(tmp_path, text, schema)
    ds = load_dataset(p, sch)
    assert ds.ids == ["A"]
    diags = load_diagnostics(ds)
    assert len(diags) == 4
    assert any("line 3" in d for d in diags) and any("boat" in d for d in diags)


def test_error_policy_raises(tmp_path):
    text = "id,t_earliest,t_latest\nA,2,1\n"
    schema = {"columns": {"id": "id", "t_earliest": "t_earliest", "t_latest": "t_latest"},
              "on_invalid_row": "error"}
    p, sch = _write(tmp_path, text, schema)
    with pytest.raises(DataError) as exc:
        load_dataset(p, sch)
    assert exc.value.diagnostics


def test_iso_times_and_inferred_levels(tmp_path):
    text = "id,start,end,k\nA,1970-01-01T01:00:00,1970-01-01T03:30:00,x\nB,1970-01-02T00:00:00,1970-01-02T00:00:00,y\n"
    schema = {"columns": {"id": "id", "start": "t_earliest", "end": "t_latest", "k": "category:poe"},
              "time_format": "iso"}
    p, sch = _write(tmp_path, text, schema)
    ds = load_dataset(p, sch)
    assert ds["A"].t_earliest == 1.0 and ds["A"].t_latest == 3.5 and ds["B"].t_earliest == 24.0
    assert ds.category_schemas == {"poe": ("x", "y")}
    assert math.isnan(ds["A"].x)


def test_schema_errors(tmp_path):
    with pytest.raises(DataError):
        IngestSchema({"a": "id", "b": "t_earliest"})
    with pytest.raises(DataError):
        IngestSchema({"a": "id", "b": "t_earliest", "c": "t_latest", "d": "colour"})
    with pytest.raises(DataError):
        IngestSchema({"a": "id", "b": "t_earliest", "c": "t_latest"}, time_format="epoch")
    with pytest.raises(DataError):
        load_dataset(tmp_path / "nothing.csv")
    p, sch = _write(tmp_path, "id,t_earliest\nA,1\n",
                    {"columns": {"id": "id", "t_earliest": "t_earliest", "t_latest": "t_latest"}})
    with pytest.raises(DataError, match="missing columns"):
        load_dataset(p, sch)


def test_schema_json_roundtrip(tmp_path):
    sch = IngestSchema.default({"prop": ["a", "b"]})
    path = tmp_path / "s.json"
    path.write_text(json.dumps(sch.to_json()))
    assert IngestSchema.read(path) == sch


def test_truth_roundtrip(tmp_path):
    truth = {"a": frozenset({"o1", "o2"}), "b": frozenset()}
    write_truth(truth, tmp_path / "t.csv")
    assert read_truth(tmp_path / "t.csv") == truth
