import csv
import json
import os
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from app import create_app
from config.settings import (
    ClassifierSettings, DeskConfig, ExperimentSettings, SyntheticDatasetConfig, TestingConfig, apply_overrides,
    load_settings,
)
from harness import (
    ExperimentPlan, RunContext, check_dependencies, generate_synthetic_dataset, load_dataset,
    run_experiment, run_stage, save_dataset, split_dataset,
)
from harness.acceptance import check_eer_contract, check_roc_oracle
from harness.splits import ADVERSARIAL_SOURCE, NATURAL, SPLIT_NAMES, TEST, TRAIN, VAL, remainder_sizes
from middleware import EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_OK
from model import FeatureExtractor, accuracy, train_classifier
from recognition import roc_curve
from services import ReportService, format_value
from utils.cache import MARKER_NAME
from utils.errors import ConfigError, DataError, DependencyError, PreconditionError


@pytest.fixture
def small_data_config():
    return SyntheticDatasetConfig(num_classes=3, images_per_class=26, image_size=16)


# ---------------------------------------------------------------------------
# Synthetic dataset
# ---------------------------------------------------------------------------

def test_dataset_is_bitwise_reproducible(small_data_config):
    first = generate_synthetic_dataset(small_data_config, seed=5)
    second = generate_synthetic_dataset(small_data_config, seed=5)
    assert first.images.tobytes() == second.images.tobytes()
    assert first.ids == second.ids
    other = generate_synthetic_dataset(small_data_config, seed=6)
    assert other.images.tobytes() != first.images.tobytes()


def test_dataset_shape_and_range(small_data_config):
    dataset = generate_synthetic_dataset(small_data_config, seed=0)
    assert dataset.images.shape == (78, 16, 16, 1)
    assert dataset.images.dtype == np.float32
    assert dataset.images.min() >= 0.0 and dataset.images.max() <= 1.0
    assert np.bincount(dataset.labels).tolist() == [26, 26, 26]


def test_identities_are_separable_by_class_mean():
    cfg = SyntheticDatasetConfig(num_classes=10, images_per_class=20)
    dataset = generate_synthetic_dataset(cfg, seed=0)
    flat = dataset.images.reshape(len(dataset), -1).astype(np.float64)
    means = np.stack([flat[dataset.labels == c].mean(axis=0) for c in range(cfg.num_classes)])
    nearest = np.argmin(((flat[:, None, :] - means[None]) ** 2).sum(axis=2), axis=1)
    assert np.mean(nearest == dataset.labels) >= 0.8
    for a in range(cfg.num_classes):
        for b in range(a + 1, cfg.num_classes):
            assert np.linalg.norm(means[a] - means[b]) > 0.5


def test_classifier_generalises_to_held_out_identities():
    cfg = SyntheticDatasetConfig(num_classes=3, images_per_class=40, image_size=16)
    dataset = generate_synthetic_dataset(cfg, seed=0)
    held_out = np.arange(len(dataset)) % cfg.images_per_class >= 30
    model = FeatureExtractor.create(num_classes=3, channels=(4, 8), image_size=16, seed=0)
    trained, _ = train_classifier(model, dataset.images[~held_out], dataset.labels[~held_out],
                                  ClassifierSettings(epochs=25, batch_size=16), seed=0)
    assert accuracy(trained, dataset.images[held_out], dataset.labels[held_out]) >= 0.95


@pytest.mark.parametrize("changes", [{"num_classes": 1}, {"images_per_class": 0}])
def test_dataset_rejects_degenerate_configs(changes):
    with pytest.raises(DataError):
        generate_synthetic_dataset(SyntheticDatasetConfig(**changes), seed=0)


def test_save_and_load_dataset(tmp_path, small_data_config):
    dataset = generate_synthetic_dataset(small_data_config, seed=1)
    splits = split_dataset(dataset, 1, small_data_config)
    save_dataset(str(tmp_path), dataset, splits.split_of(dataset.ids))
    restored, split_of = load_dataset(str(tmp_path))
    assert restored.ids == dataset.ids
    np.testing.assert_array_equal(restored.images, dataset.images)
    np.testing.assert_array_equal(restored.labels, dataset.labels)
    assert split_of == splits.split_of(dataset.ids)


def test_missing_dataset_names_the_producing_stage(tmp_path):
    with pytest.raises(DependencyError) as excinfo:
        load_dataset(str(tmp_path))
    assert excinfo.value.stage == "gen-data"


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def test_remainder_sizes():
    assert remainder_sizes(6, (0.7, 0.15, 0.15)) == (4, 1, 1)
    assert remainder_sizes(40, (0.7, 0.15, 0.15)) == (28, 6, 6)


def test_split_sizes_and_disjointness(small_data_config):
    dataset = generate_synthetic_dataset(small_data_config, seed=2)
    splits = split_dataset(dataset, 2, small_data_config)
    sizes = {name: len(splits[name]) for name in SPLIT_NAMES}
    assert sizes == {NATURAL: 30, ADVERSARIAL_SOURCE: 30, TRAIN: 12, VAL: 3, TEST: 3}
    seen = np.concatenate([splits[name] for name in SPLIT_NAMES])
    assert len(np.unique(seen)) == len(dataset)
    for name in SPLIT_NAMES:
        counts = np.bincount(dataset.labels[splits[name]], minlength=3)
        assert len(set(counts.tolist())) == 1


def test_split_is_deterministic(small_data_config):
    dataset = generate_synthetic_dataset(small_data_config, seed=3)
    first = split_dataset(dataset, 3, small_data_config)
    second = split_dataset(dataset, 3, small_data_config)
    for name in SPLIT_NAMES:
        np.testing.assert_array_equal(first[name], second[name])


def test_split_rejects_small_classes():
    cfg = SyntheticDatasetConfig(num_classes=2, images_per_class=22, image_size=16)
    with pytest.raises(DataError):
        split_dataset(generate_synthetic_dataset(cfg, seed=0), 0, cfg)


# ---------------------------------------------------------------------------
# Settings
# ---------------------------------------------------------------------------

def test_desk_profile_uses_full_attack_and_detector_budgets():
    settings = DeskConfig().settings()
    assert settings.attacks.iteration_grid == (30, 50)
    assert settings.attacks.lbfgs_search_steps == 20
    assert settings.detector.epochs == 150
    assert settings.detector.batch_size == 256
    assert TestingConfig().settings().attacks.iteration_grid == (30,)


def test_apply_overrides_nested():
    settings = apply_overrides(ExperimentSettings(), {"seed": 4, "attacks": {"eps_grid": [0.1], "knn_k": 3}})
    assert settings.seed == 4
    assert settings.attacks.eps_grid == (0.1,)
    assert settings.attacks.knn_k == 3
    assert settings.classifier == ExperimentSettings().classifier


@pytest.mark.parametrize("overrides", [
    {"nonsense": 1},
    {"attacks": {"eps_grid": 0.1}},
    {"attacks": {"cw_abort_early": "yes"}},
    {"detector": {"epochs": "many"}},
    {"data": 3},
])
def test_apply_overrides_rejects_bad_values(overrides):
    with pytest.raises(ConfigError):
        apply_overrides(ExperimentSettings(), overrides)


def test_load_settings_from_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"verification": {"positive_pairs": 7}}))
    settings = load_settings(str(path), env="testing", seed=9, workers=2)
    assert settings.verification.positive_pairs == 7
    assert settings.seed == 9 and settings.workers == 2
    assert settings.data.num_classes == 3


def test_load_settings_rejects_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_settings(str(broken))


# ---------------------------------------------------------------------------
# Report service
# ---------------------------------------------------------------------------

def test_format_value():
    assert format_value(0.5) == "0.500000"
    assert format_value(np.float32(1.25)) == "1.250000"
    assert format_value(True) == "1"
    assert format_value(np.int64(3)) == "3"
    assert format_value(float("inf")) == "inf"
    assert format_value(None) == ""


def test_write_table_sorts_rows(tmp_path):
    service = ReportService(str(tmp_path))
    path = service.write_table("t.csv", ["name", "value"], [["b", 2.0], {"name": "a", "value": 1}])
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows == [["name", "value"], ["a", "1"], ["b", "2.000000"]]
    assert path == str(tmp_path / "t.csv")


def test_figures_are_deterministic(tmp_path):
    curve = roc_curve([0.9, 0.4, 0.7], [0.5, 0.1])
    outputs = []
    for sub in ("a", "b"):
        service = ReportService(str(tmp_path / sub))
        svg, pdf = service.plot_roc("roc", {"test": curve})
        hist_svg, _ = service.plot_histograms("hist", {"x": np.array([0.1, 0.2, 0.2]), "empty": np.array([])})
        outputs.append([Path(p).read_bytes() for p in (svg, pdf, hist_svg)])
    assert outputs[0] == outputs[1]
    assert outputs[0][1].startswith(b"%PDF")


# ---------------------------------------------------------------------------
# Property checks of the acceptance suite
# ---------------------------------------------------------------------------

def test_roc_oracle_check_agrees():
    assert check_roc_oracle(5, np.random.default_rng(0)) <= 1e-12


def test_eer_contract_check():
    gap, separated_eer = check_eer_contract(np.random.default_rng(0))
    assert gap <= 0.0
    assert separated_eer == 0.0


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def test_plan_orders_stages_and_rejects_unknown(testing_settings, tmp_path):
    plan = ExperimentPlan(testing_settings, str(tmp_path), ["train-classifier", "gen-data"])
    assert plan.stages == ["gen-data", "train-classifier"]
    with pytest.raises(PreconditionError):
        ExperimentPlan(testing_settings, str(tmp_path), ["gen-data", "train-everything"])


def test_missing_dependency_is_reported(testing_settings, tmp_path):
    plan = ExperimentPlan(testing_settings, str(tmp_path), ["gen-attacks"])
    with pytest.raises(DependencyError) as excinfo:
        check_dependencies(plan)
    assert excinfo.value.stage == "gen-data"
    with pytest.raises(DependencyError):
        run_stage(RunContext(testing_settings, str(tmp_path)), "train-classifier")


def test_stages_are_cached(testing_settings, tmp_path):
    ctx = RunContext(testing_settings, str(tmp_path))
    summary = run_stage(ctx, "gen-data")
    assert summary["images"] == 78
    marker = tmp_path / "gen-data" / MARKER_NAME
    stamp = os.path.getmtime(tmp_path / "gen-data" / "images.tgm")
    assert run_stage(ctx, "gen-data") == summary
    assert os.path.getmtime(tmp_path / "gen-data" / "images.tgm") == stamp

    key = json.loads(marker.read_text())["key"]
    changed = RunContext(replace(testing_settings, seed=1), str(tmp_path))
    run_stage(changed, "gen-data")
    assert json.loads(marker.read_text())["key"] != key
    first, _ = load_dataset(str(tmp_path / "gen-data"))
    reference = generate_synthetic_dataset(testing_settings.data, 1)
    assert first.images.tobytes() == reference.images.tobytes()


def test_classifier_stage_is_deterministic(testing_settings, tmp_path):
    digests = []
    for sub in ("a", "b"):
        plan = ExperimentPlan(testing_settings, str(tmp_path / sub), ["gen-data", "train-classifier"])
        summaries = run_experiment(plan)
        assert 0.0 <= summaries["train-classifier"]["test_accuracy"] <= 1.0
        digests.append((tmp_path / sub / "train-classifier" / "classifier.tgm").read_bytes())
    assert digests[0] == digests[1]


def test_full_pipeline_writes_report(testing_settings, tmp_path):
    settings = replace(testing_settings, attacks=replace(
        testing_settings.attacks, eps_grid=(0.3,), classifier_kinds=("BIM",), extra_kinds=()))
    summaries = run_experiment(ExperimentPlan(settings, str(tmp_path)))
    assert list(summaries) == ["gen-data", "train-classifier", "gen-attacks", "build-reps", "train-detector",
                               "eval-detector", "identify", "verify", "report"]

    report = tmp_path / "report"
    for name in ("attack_success.csv", "detector_auc.csv", "identification.csv", "verification_scenarios.csv",
                 "verification_roc.svg", "verification_roc.pdf"):
        assert (report / name).exists(), name

    with open(report / "attack_success.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert {row["kind"] for row in rows} == {"BIM", "DeepFeature"}
    for row in rows:
        assert 0.0 <= float(row["success_rate"]) <= 1.0
        if row["kind"] == "BIM":
            assert float(row["mean_linf"]) <= 0.3 + 1e-6
            assert int(row["runs"]) == 30


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def test_cli_runs_a_stage(tmp_path):
    app = create_app(TestingConfig)
    assert app.run(["gen-data", "--env", "testing", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "gen-data" / "manifest.csv").exists()


def test_cli_maps_missing_dependency_to_exit_code(tmp_path):
    app = create_app(TestingConfig)
    assert app.run(["train-classifier", "--env", "testing", "--out", str(tmp_path)]) == EXIT_DEPENDENCY


def test_cli_maps_bad_config_to_exit_code(tmp_path):
    app = create_app(TestingConfig)
    code = app.run(["gen-data", "--env", "testing", "--out", str(tmp_path),
                    "--config", str(tmp_path / "missing.json")])
    assert code == EXIT_CONFIG
