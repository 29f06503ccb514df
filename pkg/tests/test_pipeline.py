import json

import numpy as np
import pytest

from rareaction import pipeline, synth
from rareaction.errors import ConfigError
from rareaction.frameselect import MOTION_BASED
from rareaction.pipeline import Predictor, RunConfig


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    dataset = synth.generate_synthetic(synth.SyntheticSpec(n_videos=10, seed=31), root / "data")
    config = RunConfig(
        data_dir=str(dataset.root),
        out_dir=str(root / "run"),
        resamples=10,
        cv={
            "hidden_layers_grid": [0],
            "dropout_grid": [0.0],
            "learning_rate_grid": [0.01],
            "cv_epochs": 3,
            "final_epochs": 3,
        },
    )
    report = pipeline.run_pipeline(config)
    return root, config, report


class TestRunConfig:
    def test_unknown_fields_rejected(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"data_dir": ".", "out_dir": ".", "nonsense": 1}')
        with pytest.raises(ConfigError, match="nonsense"):
            RunConfig.from_json(p)

    def test_invalid_tiou_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig(data_dir=".", out_dir=".", tiou_thresholds=(1.5,))

    def test_validate_paths_missing_model(self, tmp_path):
        config = RunConfig(data_dir=str(tmp_path), out_dir=".", backend="onnx:/nope/bundle")
        with pytest.raises(ConfigError):
            config.validate_paths()

    def test_config_hash_stable_and_sensitive(self):
        a = RunConfig(data_dir="d", out_dir="o")
        b = RunConfig(data_dir="d", out_dir="o")
        c = RunConfig(data_dir="d", out_dir="o", k=9)
        assert pipeline.config_hash(a) == pipeline.config_hash(b)
        assert pipeline.config_hash(a) != pipeline.config_hash(c)

    def test_feature_hash_ignores_evaluation_fields(self):
        a = RunConfig(data_dir="d", out_dir="o", resamples=100)
        b = RunConfig(data_dir="d", out_dir="o", resamples=7, bootstrap_seed=99)
        assert pipeline.feature_config_hash(a) == pipeline.feature_config_hash(b)
        c = RunConfig(data_dir="d", out_dir="o", method="evenly_spaced")
        assert pipeline.feature_config_hash(a) != pipeline.feature_config_hash(c)


class TestFeatureCache:
    def test_cache_reused_on_rerun(self, small_run):
        root, config, _ = small_run
        cache_dirs = list((root / "run" / "features").iterdir())
        assert len(cache_dirs) == 1
        marfs = list(cache_dirs[0].glob("*.marf"))
        assert len(marfs) == 50
        stamps = {p: p.stat().st_mtime_ns for p in marfs}
        pipeline.run_pipeline(config)
        assert all(p.stat().st_mtime_ns == stamps[p] for p in marfs)

    def test_mixed_config_cache_rejected(self, small_run, tmp_path):
        root, config, _ = small_run
        cache_dir = next((root / "run" / "features").iterdir())
        meta = cache_dir / "cache_meta.json"
        doc = json.loads(meta.read_text())
        doc["feature_config_hash"] = "someone-elses-run"
        meta.write_text(json.dumps(doc))
        with pytest.raises(ConfigError):
            pipeline.run_pipeline(config)
        # restore for other tests
        doc["feature_config_hash"] = pipeline.feature_config_hash(config)
        meta.write_text(json.dumps(doc))

    def test_artifacts_embed_config_hash(self, small_run):
        root, config, report = small_run
        assert report["config_hash"] == pipeline.config_hash(config)
        head_doc = json.loads((root / "run" / "head.json").read_text())
        assert head_doc["metadata"]["config_hash"] == pipeline.config_hash(config)
        assert head_doc["metadata"]["feature_config_hash"] == pipeline.feature_config_hash(config)


class TestPredictor:
    def test_save_load_round_trip(self, small_run, tmp_path):
        root, _, _ = small_run
        predictor = Predictor.load(root / "run" / "head.json")
        x = np.random.default_rng(0).normal(size=(3, predictor.head.config.input_dim))
        scores = predictor.score(x)
        path = tmp_path / "copy.json"
        predictor.save(path)
        again = Predictor.load(path)
        assert np.array_equal(again.score(x), scores)
        assert again.method == MOTION_BASED
        assert again.k == 10
        assert again.backend == "mock"

    def test_scores_in_unit_interval(self, small_run):
        root, _, _ = small_run
        predictor = Predictor.load(root / "run" / "head.json")
        x = np.random.default_rng(1).normal(size=(5, predictor.head.config.input_dim))
        s = predictor.score(x)
        # raw inputs far outside the training scale may saturate to 0/1 in f64
        assert ((s >= 0) & (s <= 1)).all()


class TestFeatureStoreBackend:
    def test_detection_from_precomputed_features(self, small_run, tmp_path):
        root, config, baseline = small_run
        store_config = RunConfig(
            **{
                **config.to_json(),
                "backend": f"store:{root / 'run' / 'manifest.jsonl'}",
                "out_dir": str(tmp_path / "store_run"),
            }
        )
        report = pipeline.run_pipeline(store_config)
        # identical features -> identical recognition metrics
        assert report["recognition"]["point"] == baseline["recognition"]["point"]
        assert (
            report["detection"]["thresholds"]["0.25"]["ap"]
            == baseline["detection"]["thresholds"]["0.25"]["ap"]
        )
