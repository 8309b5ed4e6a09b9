import pytest

import daf

SMALL = {
    "synth.n": "80",
    "synth.d_text": "12",
    "synth.d_audio": "5",
    "synth.d_video": "4",
    "model.d_attn": "6",
    "model.d_hidden": "6",
    "model.encoder_hidden": "3",
    "train.lr": "1e-3",
    "train.epochs": "3",
}


def test_metrics_examples():
    assert daf.mae([1.0, -2.0], [1.0, -2.0]) == 0.0
    assert daf.roc_auc([0.9, 0.8, 0.3, 0.2], [1, -1, 1, -1]) == 0.75
    assert daf.pearson_cc([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5, abs=1e-15)
    report = daf.metrics_report([1.0, 1.0, 1.0], [0.5, 1.0, 2.0])
    assert report["cc"] is None


def test_gen_synth_then_train_and_evaluate(tmp_path):
    daf.gen_synth(tmp_path / "data", n=80, dims=(12, 5, 4), seed=1)
    assert (tmp_path / "data" / "manifest.json").exists()
    settings = dict(SMALL, **{"data.path": str(tmp_path / "data"), "run.out": str(tmp_path / "run")})
    runs = daf.train(settings)
    assert len(runs) == 1 and runs[0]["epochs"] == 3
    result = daf.evaluate(tmp_path / "run" / "checkpoint.bin", settings)
    assert result["metrics"]["mae"] == pytest.approx(runs[0]["test_metrics"]["mae"], abs=1e-12)
    assert all(abs(p) <= 3.0 for _, p, _ in result["predictions"])
    assert 0.0 <= daf.roc(tmp_path / "run" / "checkpoint.bin", settings)["auc"] <= 1.0


def test_errors_map_to_exception_types(tmp_path):
    with pytest.raises(daf.ConfigError):
        daf.train({"model.fusion": "bogus"})
    with pytest.raises(daf.DataError):
        daf.train(dict(SMALL, **{"data.path": str(tmp_path / "missing")}))


def test_gradcheck_single_case():
    passed, report = daf.gradcheck(seeds=[0], lengths=[2])
    assert passed, report
