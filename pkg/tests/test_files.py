import json

import pytest

from mitibench.calibration import calibrate, simulate_calibration_data
from mitibench.device import DeviceModel, reference_model
from mitibench.files import (
    SchemaError,
    calibration_data_document,
    ingest_results,
    parse_calibration_data,
    parse_results,
    results_document,
    write_results,
)
from mitibench.programs import build_program_suite
from mitibench.qubit_sim import run_experiment

MODEL = reference_model(theta0=-2.0, theta1=30.0)


@pytest.fixture(scope="module")
def suite_and_records():
    suite = build_program_suite([5, 20], [1.0, 2.0, 3.0], model=MODEL, seed=3)
    return suite, [run_experiment(MODEL, s) for s in suite]


def _core(rec):
    return (rec.label, rec.mean_p1, rec.mean_theta, rec.variance_of_mean, rec.shots)


def test_results_round_trip_p1(tmp_path, suite_and_records):
    suite, records = suite_and_records
    path = write_results(records, tmp_path / "results.json", MODEL, ideal_theta=29.9)
    got = ingest_results(path, suite, MODEL)
    assert [_core(r) for r in got.records] == [_core(r) for r in records]
    assert got.unknown_labels == [] and got.missing_labels == []
    assert got.ideal_theta == 29.9


def test_results_theta_observable(suite_and_records):
    suite, records = suite_and_records
    doc = results_document(records, MODEL, observable="theta")
    got = parse_results(json.loads(json.dumps(doc)), suite, MODEL)
    for a, b in zip(got.records, records):
        assert a.mean_theta == b.mean_theta
        assert a.mean_p1 == pytest.approx(b.mean_p1, abs=1e-12)
        assert a.variance_of_mean == pytest.approx(b.variance_of_mean, rel=1e-12)


def test_negative_variance_rejected_with_field(suite_and_records):
    suite, records = suite_and_records
    doc = results_document(records, MODEL)
    doc["records"][2]["variance_of_mean"] = -1
    with pytest.raises(SchemaError) as info:
        parse_results(doc, suite, MODEL)
    assert info.value.field == "records[2].variance_of_mean"


def test_unknown_label_skipped_and_reported(suite_and_records):
    suite, records = suite_and_records
    doc = results_document(records, MODEL)
    doc["records"].append({"label": "M7_c9", "mean": 0.5, "variance_of_mean": 1e-4, "shots": 100})
    got = parse_results(doc, suite, MODEL)
    assert got.unknown_labels == ["M7_c9"]
    assert len(got.records) == len(records)


def test_missing_labels_reported(suite_and_records):
    suite, records = suite_and_records
    doc = results_document(records[1:], MODEL)
    assert parse_results(doc, suite, MODEL).missing_labels == [suite[0].label]


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d.update(version=2), "version"),
    (lambda d: d.update(observable="phase"), "observable"),
    (lambda d: d.update(records={}), "records"),
    (lambda d: d["records"][0].update(mean="x"), "records[0].mean"),
    (lambda d: d["records"][0].update(mean=1.5), "records[0].mean"),
    (lambda d: d["records"][0].update(shots=0), "records[0].shots"),
    (lambda d: d["records"][0].pop("label"), "records[0].label"),
    (lambda d: d["records"].append(dict(d["records"][0])), "records[6].label"),
])
def test_schema_violations(suite_and_records, mutate, field):
    suite, records = suite_and_records
    doc = results_document(records, MODEL)
    mutate(doc)
    with pytest.raises(SchemaError) as info:
        parse_results(doc, suite, MODEL)
    assert info.value.field == field


def test_invalid_json(tmp_path, suite_and_records):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(SchemaError):
        ingest_results(p, suite_and_records[0], MODEL)


def test_calibration_data_round_trip():
    truth = DeviceModel(t1=1000.0, kappa1=0.01)
    data = simulate_calibration_data(truth, seed=3, periods=(10.0, 20.0, 30.0))
    doc = json.loads(json.dumps(calibration_data_document(data)))
    back, readout = parse_calibration_data(doc, truth)
    assert back == data and readout == truth
    assert calibrate(back, readout).model == calibrate(data, truth).model


def test_calibration_data_theta_and_readout():
    truth = DeviceModel(t1=1000.0, kappa1=0.01)
    data = simulate_calibration_data(truth, seed=3, periods=(10.0, 20.0, 30.0))
    doc = calibration_data_document(data)
    doc["observable"] = "theta"
    doc["readout"] = {"theta0": 10.0, "theta1": 20.0}
    for s in doc["rabi"] + doc["decay"] + [doc["relaxation"]]:
        s["values"] = [10.0 + 10.0 * v for v in s["values"]]
        s["variances"] = [100.0 * v for v in s["variances"]]
    back, readout = parse_calibration_data(doc, truth)
    assert readout.theta0 == 10.0 and readout.theta1 == 20.0
    assert back.rabi[0].values == pytest.approx(data.rabi[0].values, abs=1e-12)


def test_calibration_data_missing_section():
    with pytest.raises(SchemaError) as info:
        parse_calibration_data({"version": 1, "rabi": [], "decay": []}, DeviceModel())
    assert info.value.field == "relaxation"
