import numpy as np
import pytest

import sf2former as sf

SMALL = (40, 140, 40)


@pytest.fixture(scope="module")
def phantom(tmp_path_factory):
    out = tmp_path_factory.mktemp("phantom")
    text = sf.write_phantom(str(out), subjects=10, centers=1, seed=3, extents=SMALL)
    return out, text


def test_fft2_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 6)) + 1j * rng.normal(size=(8, 6))
    np.testing.assert_allclose(sf.fft2(x), np.fft.fft2(x), atol=1e-10)
    np.testing.assert_allclose(sf.ifft2(sf.fft2(x)), x, atol=1e-12)


def test_fft2_over_leading_axes_of_a_grid():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 5, 3)).astype(complex)
    np.testing.assert_allclose(sf.fft2(x), np.fft.fft2(x, axes=(0, 1)), atol=1e-10)


def test_fft2_rejects_vectors():
    with pytest.raises(sf.DimensionError):
        sf.fft2(np.zeros(4, dtype=complex))


def test_metrics_reference_row():
    m = sf.metrics(tp=13, fn=3, tn=9, fp=0)
    assert m["acc"] == pytest.approx(22 / 25)
    assert m["sen"] == pytest.approx(0.8125)
    assert m["spe"] == 1.0
    assert m["pre"] == 1.0
    assert m["f1"] == pytest.approx(26 / 29)
    assert not any(m["degenerate"].values())


def test_majority_vote():
    v = sf.majority_vote([1, 1, 0], [0.9, 0.6, 0.2])
    assert (v["label"], v["patient_votes"], v["control_votes"], v["tie_rule"]) == (1, 2, 1, False)
    tie = sf.majority_vote([1, 0], [0.6, 0.1])
    assert tie["tie_rule"] and tie["label"] == 0


def test_phantom_manifest_and_volume(phantom):
    out, text = phantom
    lines = text.strip().splitlines()
    assert lines[0] == "subject_id,label,center,modality,path"
    assert len(lines) == 11
    assert sum(",patient," in line for line in lines) == 5
    vol = sf.load_volume(str(out / "sub-000.rvol"))
    assert vol["data"].shape == (SMALL[2], SMALL[1], SMALL[0])
    assert vol["data"].dtype == np.float32
    assert vol["spacing"] == (1.0, 1.0, 1.0)


def test_structured_errors(tmp_path):
    with pytest.raises(sf.DataError):
        sf.load_volume(str(tmp_path / "missing.rvol"))
    bad = tmp_path / "bad.rvol"
    bad.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(sf.FormatError):
        sf.load_volume(str(bad))
    assert issubclass(sf.FormatError, sf.Error)
    with pytest.raises(sf.DataError):
        sf.write_phantom(str(tmp_path / "p"), subjects=3)


def test_fold_plan_is_a_partition(phantom):
    out, _ = phantom
    plan = sf.make_folds(out / "manifest.csv", seed=5)
    assert plan["k"] == 5
    tests = [s for f in plan["folds"] for s in f["test"]]
    assert sorted(tests) == [f"sub-{i:03d}" for i in range(10)]
    for f in plan["folds"]:
        assert not set(f["train"]) & set(f["test"])
        assert not set(f["val"]) & set(f["test"])
    assert plan == sf.make_folds(out / "manifest.csv", seed=5)


def test_model_predict_and_checkpoint_roundtrip(tmp_path):
    model = sf.Model("toy", seed=7)
    assert model.config["model.patch"] == "8"
    assert model.num_parameters > 0
    image = np.random.default_rng(2).random((32, 32), dtype=np.float32)
    label, p_control, p_patient = model.predict(image)
    assert label in (0, 1)
    assert p_control + p_patient == pytest.approx(1.0)
    path = tmp_path / "m.ckpt"
    model.save(str(path))
    again = sf.Model.load(str(path))
    assert again.predict(image) == (label, p_control, p_patient)
    with pytest.raises(sf.DimensionError):
        model.predict(np.zeros((16, 16), dtype=np.float32))
    with pytest.raises(sf.Error):
        sf.Model("huge")


def test_run_cv_report(phantom):
    out, _ = phantom
    report = sf.run_cv(out / "manifest.csv", train__epochs=1, run__slices="111:112")
    assert len(report["folds"]) == 5
    accs = [f["subject_metrics"]["acc"] for f in report["folds"]]
    assert report["aggregate"]["acc"] == pytest.approx(sum(accs) / 5)
    with pytest.raises(sf.Error):
        sf.run_cv(out / "manifest.csv", bogus__key=1)
