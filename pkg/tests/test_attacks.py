import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from attacks import (
    BIM, CWL2, CWLINF, DEEP_FEATURE, FGSM, LBFGS, MIFGSM, AttackConfig, AttackJob, RESULT_COLUMNS,
    append_results_csv, bim, cw_l2, cw_linf, deep_feature_attack, fgsm, from_tanh_space, lbfgs_attack,
    linf_penalty, logit_margin, mifgsm, perturbation_profile, read_manifest, run_attack, run_attack_batch,
    select_target, to_tanh_space, write_manifest,
)
from attacks.deep_feature import nearest_other_class
from attacks.lbfgs_attack import lbfgs_objective
from attacks.types import check_target
from model.extractor import CROSS_ENTROPY, LabeledImage
from recognition import compute_centroids, knn_identify
from tests.conftest import LinearClassifier
from utils.errors import DataError, PreconditionError


def _pixel(value, label=0):
    return LabeledImage(np.full((1, 1, 1), value), label, "p")


def _patch(seed=0, label=None, model=None, size=4):
    pixels = np.random.default_rng(seed).uniform(0.2, 0.8, (size, size, 1)).astype(np.float32).astype(np.float64)
    if label is None:
        label = model.predict(pixels)
    return LabeledImage(pixels, int(label), f"img{seed}")


# ---------------------------------------------------------------------------
# FGSM / BIM / MI-FGSM
# ---------------------------------------------------------------------------

def test_fgsm_single_pixel_step(single_pixel_classifier):
    cfg = AttackConfig(FGSM, epsilon=0.1)
    result = fgsm(single_pixel_classifier, _pixel(0.5), cfg)
    assert result.adversarial[0, 0, 0] == pytest.approx(0.6, abs=1e-6)
    assert result.success
    assert result.predicted_class == 1
    assert result.perturbation_linf == pytest.approx(0.1, abs=1e-6)


def test_fgsm_zero_gradient_leaves_image_unchanged():
    flat = LinearClassifier(np.zeros((16, 3)), np.array([1.0, 0.0, 0.0]), (4, 4, 1))
    image = _patch(label=0)
    result = fgsm(flat, image, AttackConfig(FGSM, epsilon=0.3))
    np.testing.assert_array_equal(result.adversarial, image.pixels.astype(np.float32))
    assert not result.success


@pytest.mark.parametrize("label,expected", [(0, False), (1, True)])
def test_fgsm_zero_epsilon(single_pixel_classifier, label, expected):
    result = fgsm(single_pixel_classifier, _pixel(0.25, label), AttackConfig(FGSM, epsilon=0.0))
    assert result.adversarial[0, 0, 0] == pytest.approx(0.25)
    assert result.success is expected


def test_bim_clip_binds_at_epsilon(single_pixel_classifier):
    cfg = AttackConfig(BIM, epsilon=0.15, step=0.1, iterations=2, early_stop=False)
    result = bim(single_pixel_classifier, _pixel(0.5), cfg)
    assert result.adversarial[0, 0, 0] == pytest.approx(0.65, abs=1e-6)
    assert result.iterations_used == 2


def test_bim_early_stop_after_first_success(single_pixel_classifier):
    cfg = AttackConfig(BIM, epsilon=0.15, step=0.1, iterations=2)
    result = bim(single_pixel_classifier, _pixel(0.5), cfg)
    assert result.iterations_used == 1
    assert result.adversarial[0, 0, 0] == pytest.approx(0.6, abs=1e-6)


def test_bim_single_iteration_equals_fgsm(linear_classifier):
    image = _patch(seed=1, model=linear_classifier)
    one_step = bim(linear_classifier, image, AttackConfig(BIM, epsilon=0.1, step=0.05, iterations=1))
    single = fgsm(linear_classifier, image, AttackConfig(FGSM, epsilon=0.05))
    np.testing.assert_array_equal(one_step.adversarial, single.adversarial)


def test_mifgsm_without_momentum_follows_normalized_gradient(linear_classifier):
    image = _patch(seed=2, model=linear_classifier)
    cfg = AttackConfig(MIFGSM, epsilon=1.0, step=0.05, iterations=1, momentum=0.0)
    result = mifgsm(linear_classifier, image, cfg)
    _, grad = linear_classifier.loss_and_input_grad(image.pixels, image.label)
    expected = np.clip(image.pixels + 0.05 * grad / np.linalg.norm(grad), 0.0, 1.0)
    np.testing.assert_allclose(result.adversarial, expected, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 50), st.floats(0.05, 0.5), st.integers(1, 12))
def test_mifgsm_total_l2_travel_within_epsilon(seed, epsilon, iterations):
    model = LinearClassifier(np.random.default_rng(seed).standard_normal((16, 3)), np.zeros(3), (4, 4, 1))
    image = _patch(seed=seed, model=model)
    cfg = AttackConfig(MIFGSM, epsilon=epsilon, iterations=iterations, early_stop=False)
    result = mifgsm(model, image, cfg)
    assert result.iterations_used == iterations
    assert result.perturbation_l2 <= epsilon + 1e-5


def test_mifgsm_default_step_on_linear_patch(linear_classifier):
    image = _patch(seed=8, model=linear_classifier)
    cfg = AttackConfig(MIFGSM, epsilon=0.3, iterations=10, early_stop=False)
    result = mifgsm(linear_classifier, image, cfg)
    assert result.perturbation_l2 <= 0.3 + 1e-5
    assert result.perturbation_linf <= 0.3 + 1e-6


def test_mifgsm_constant_gradient_doubles_velocity_not_step():
    weight = np.random.default_rng(13).standard_normal((16, 2))
    model = LinearClassifier(weight, np.zeros(2), (4, 4, 1))
    image = _patch(seed=13, model=model)
    cfg = AttackConfig(MIFGSM, epsilon=1.0, step=0.01, iterations=2, momentum=1.0, early_stop=False)
    result = mifgsm(model, image, cfg)

    # Two-class cross-entropy gradients all point along +-(w_other - w_label).
    other = 1 - image.label
    direction = weight[:, other] - weight[:, image.label]
    normalized = direction / np.sum(np.abs(direction))
    assert result.extra["velocity_l2"] == pytest.approx(2.0 * np.linalg.norm(normalized), rel=1e-9)
    expected = image.pixels + 0.02 * (direction / np.linalg.norm(direction)).reshape(image.pixels.shape)
    np.testing.assert_allclose(result.adversarial, expected, atol=1e-6)


def test_mifgsm_zero_gradient_is_a_no_op():
    flat = LinearClassifier(np.zeros((16, 3)), np.array([1.0, 0.0, 0.0]), (4, 4, 1))
    image = _patch(label=0)
    result = mifgsm(flat, image, AttackConfig(MIFGSM, epsilon=0.3, iterations=5))
    np.testing.assert_array_equal(result.adversarial, image.pixels.astype(np.float32))


def test_targeted_attack_reaches_target(grouped_classifier):
    image = _patch(seed=3, model=grouped_classifier)
    target = (image.label + 1) % 3
    result = bim(grouped_classifier, image, AttackConfig(BIM, targeted=True, epsilon=0.5, iterations=50), target)
    assert result.success
    assert result.predicted_class == target
    assert result.target_class == target


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([FGSM, BIM, MIFGSM]), st.floats(0.0, 0.5), st.integers(0, 50), st.booleans())
def test_gradient_attacks_respect_the_box(kind, epsilon, seed, targeted):
    model = LinearClassifier(np.random.default_rng(seed).standard_normal((16, 3)), np.zeros(3), (4, 4, 1))
    image = _patch(seed=seed, model=model)
    cfg = AttackConfig(kind, targeted=targeted, epsilon=epsilon, iterations=5)
    target = (image.label + 1) % 3 if targeted else None
    result = run_attack(model, image, cfg, target=target)
    assert result.perturbation_linf <= epsilon + 1e-6
    assert result.adversarial.min() >= 0.0 and result.adversarial.max() <= 1.0


def test_targeted_run_needs_valid_target(linear_classifier):
    image = _patch(model=linear_classifier)
    cfg = AttackConfig(FGSM, targeted=True)
    with pytest.raises(PreconditionError):
        check_target(cfg, image, None, 3)
    with pytest.raises(PreconditionError):
        fgsm(linear_classifier, image, cfg, target=image.label)
    with pytest.raises(PreconditionError):
        fgsm(linear_classifier, image, cfg, target=5)


def test_attack_config_validation():
    with pytest.raises(PreconditionError):
        AttackConfig("PGD")
    with pytest.raises(PreconditionError):
        AttackConfig(BIM, epsilon=-0.1)
    with pytest.raises(PreconditionError):
        AttackConfig(MIFGSM, momentum=1.5)
    assert AttackConfig(BIM, targeted=True, epsilon=0.1, iterations=30).tag == "BIM-T-eps0.1-n30"
    assert AttackConfig(DEEP_FEATURE, delta=5.0).tag == "DeepFeature-U-d5"
    assert AttackConfig(DEEP_FEATURE, delta=5.0).budget == 5.0


# ---------------------------------------------------------------------------
# Carlini-Wagner
# ---------------------------------------------------------------------------

def test_tanh_space_limits():
    assert from_tanh_space(np.array(0.0)) == pytest.approx(0.5)
    assert from_tanh_space(np.array(40.0)) == pytest.approx(1.0)
    assert from_tanh_space(np.array(-40.0)) == pytest.approx(0.0)
    x = np.array([0.0, 0.3, 1.0])
    np.testing.assert_allclose(from_tanh_space(to_tanh_space(x)), x, atol=1e-6)


def test_logit_margin_signs():
    margin, grad = logit_margin(np.array([2.0, 5.0, 1.0]), label=0, target=None)
    assert margin == pytest.approx(-3.0)
    np.testing.assert_array_equal(grad, [1.0, -1.0, 0.0])
    margin, grad = logit_margin(np.array([2.0, 5.0, 1.0]), label=0, target=2)
    assert margin == pytest.approx(4.0)
    np.testing.assert_array_equal(grad, [0.0, 1.0, -1.0])


def test_cw_l2_already_misclassified(single_pixel_classifier):
    cfg = AttackConfig(CWL2, confidence=0.0, cw_max_iterations=20, cw_binary_steps=2)
    result = cw_l2(single_pixel_classifier, _pixel(0.9, label=0), cfg)
    assert result.success
    assert result.perturbation_l2 == pytest.approx(0.0, abs=1e-5)


def test_cw_l2_targeted_success(grouped_classifier):
    image = _patch(seed=4, model=grouped_classifier)
    target = (image.label + 2) % 3
    cfg = AttackConfig(CWL2, targeted=True, cw_max_iterations=300, cw_binary_steps=6, cw_learning_rate=0.05)
    result = cw_l2(grouped_classifier, image, cfg, target)
    assert result.success
    assert result.predicted_class == target
    assert result.adversarial.min() >= 0.0 and result.adversarial.max() <= 1.0


def test_linf_penalty_hinge_sum():
    assert linf_penalty(np.array([0.5, 0.2]), 0.3) == pytest.approx(0.2)
    assert linf_penalty(np.array([-0.5, 0.2]), 0.3) == pytest.approx(0.2)
    assert linf_penalty(np.zeros(3), 0.0) == 0.0


def test_cw_linf_already_adversarial_shrinks_tau(single_pixel_classifier):
    cfg = AttackConfig(CWLINF, cw_max_iterations=20, tau0=1.0, tau_decay=0.9)
    result = cw_linf(single_pixel_classifier, _pixel(0.9, label=0), cfg)
    assert result.success
    assert result.linf_bound < cfg.tau0
    assert result.iterations_used == 20


def test_cw_linf_respects_bound(grouped_classifier):
    image = _patch(seed=5, model=grouped_classifier)
    cfg = AttackConfig(CWLINF, cw_max_iterations=400, cw_learning_rate=0.05, tau0=1.0)
    result = cw_linf(grouped_classifier, image, cfg)
    assert result.success
    assert result.predicted_class != image.label
    assert result.linf_bound < cfg.tau0
    assert result.perturbation_linf <= result.linf_bound + 1e-6


@pytest.fixture
def boundary_classifier():
    """
    Two classes on 4x4 images whose source sits at logit margin 0.5.

    The minimal L2 perturbation that flips the decision is margin / ||w1 - w0||,
    and it moves no pixel out of [0, 1].
    """
    rng = np.random.default_rng(21)
    weight = rng.standard_normal((16, 2))
    pixels = rng.uniform(0.45, 0.55, (4, 4, 1)).astype(np.float32).astype(np.float64)
    direction = weight[:, 1] - weight[:, 0]
    bias = np.array([0.5 + float(direction @ pixels.reshape(-1)), 0.0])
    model = LinearClassifier(weight, bias, (4, 4, 1))
    image = LabeledImage(pixels, 0, "boundary")
    return model, image, 0.5 / np.linalg.norm(direction)


def test_cw_l2_matches_boundary_distance(boundary_classifier):
    model, image, distance = boundary_classifier
    assert model.predict(image.pixels) == 0
    result = cw_l2(model, image, AttackConfig(CWL2, targeted=True), target=1)
    assert result.success
    assert result.perturbation_l2 == pytest.approx(distance, rel=0.05)


# ---------------------------------------------------------------------------
# L-BFGS
# ---------------------------------------------------------------------------

def test_lbfgs_rejects_true_class_target(linear_classifier):
    image = _patch(model=linear_classifier)
    with pytest.raises(PreconditionError):
        lbfgs_attack(linear_classifier, image, image.label, AttackConfig(LBFGS, targeted=True))


def test_lbfgs_objective_without_weight_is_cross_entropy(linear_classifier):
    image = _patch(seed=6, model=linear_classifier)
    target = (image.label + 1) % 3
    z = np.clip(image.pixels + 0.05, 0, 1)
    f, grad = lbfgs_objective(linear_classifier, image.pixels, target, 0.0)(z)
    loss, expected = linear_classifier.loss_and_input_grad(z, target, CROSS_ENTROPY)
    assert f == pytest.approx(loss)
    np.testing.assert_allclose(grad, expected)


def test_lbfgs_attack_reaches_target(grouped_classifier):
    image = _patch(seed=7, model=grouped_classifier)
    target = (image.label + 1) % 3
    cfg = AttackConfig(LBFGS, targeted=True, lbfgs_search_steps=4, lbfgs_max_iterations=100)
    result = lbfgs_attack(grouped_classifier, image, target, cfg)
    assert result.success
    assert result.predicted_class == target
    assert result.adversarial.min() >= 0.0 and result.adversarial.max() <= 1.0


def test_lbfgs_close_to_cw_l2_on_linear_model(boundary_classifier):
    model, image, distance = boundary_classifier
    cw = cw_l2(model, image, AttackConfig(CWL2, targeted=True), target=1)
    result = lbfgs_attack(model, image, 1, AttackConfig(LBFGS, targeted=True))
    assert result.success
    assert result.predicted_class == 1
    assert result.perturbation_l2 == pytest.approx(cw.perturbation_l2, rel=0.10)
    assert result.perturbation_l2 == pytest.approx(distance, rel=0.10)
    # The boundary constant of this model is ||w1 - w0|| / 2.
    critical = 0.5 / distance / 2.0
    assert result.extra["final_const"] == pytest.approx(critical, rel=0.05)


# ---------------------------------------------------------------------------
# Deep-feature attack
# ---------------------------------------------------------------------------

@pytest.fixture
def gallery(tiny_extractor):
    images = [_patch(seed=s, label=s % 3, size=8) for s in range(9)]
    batch = np.stack([im.pixels for im in images])
    reps = compute_centroids(tiny_extractor.trace(batch), [im.label for im in images], 3)
    return images, reps


def test_deep_feature_zero_delta_returns_source(tiny_extractor, gallery):
    images, reps = gallery
    source, guide = images[0], images[1]
    cfg = AttackConfig(DEEP_FEATURE, targeted=True, delta=0.0, df_max_iterations=20)
    result = deep_feature_attack(tiny_extractor, source, guide, reps, cfg)
    np.testing.assert_array_equal(result.adversarial, source.pixels.astype(np.float32))
    assert result.perturbation_linf == 0.0


def test_deep_feature_self_guide_stalls(tiny_extractor, gallery):
    images, reps = gallery
    source = images[0]
    start = knn_identify(tiny_extractor.trace(source.pixels).descriptor, reps.descriptor_templates(),
                         metric=reps.metric)
    other = next(c for c in range(3) if c not in (source.label, start))
    guide = LabeledImage(source.pixels.copy(), other, "copy")
    cfg = AttackConfig(DEEP_FEATURE, targeted=True, delta=10.0, df_max_iterations=50)
    result = deep_feature_attack(tiny_extractor, source, guide, reps, cfg)
    assert not result.success
    assert result.iterations_used <= 1
    assert result.perturbation_linf == pytest.approx(0.0, abs=1e-7)


def test_deep_feature_guide_of_source_class_rejected(tiny_extractor, gallery):
    images, reps = gallery
    cfg = AttackConfig(DEEP_FEATURE, targeted=True, delta=5.0)
    with pytest.raises(PreconditionError):
        deep_feature_attack(tiny_extractor, images[0], images[3], reps, cfg)
    with pytest.raises(PreconditionError):
        deep_feature_attack(tiny_extractor, images[0], None, reps, cfg)


def test_untargeted_deep_feature_ignores_guide(tiny_extractor, gallery):
    images, reps = gallery
    source = images[0]
    cfg = AttackConfig(DEEP_FEATURE, targeted=False, delta=10.0, df_max_iterations=30)
    baseline = deep_feature_attack(tiny_extractor, source, None, reps, cfg)
    nearest = nearest_other_class(tiny_extractor.trace(source.pixels).descriptor, reps.descriptor_templates(),
                                  source.label, reps.metric)
    assert baseline.extra["guide_class"] == nearest
    for guide in (images[3], images[1]):
        result = deep_feature_attack(tiny_extractor, source, guide, reps, cfg)
        assert result.extra["guide_class"] == nearest
        assert result.target_class is None
        np.testing.assert_array_equal(result.adversarial, baseline.adversarial)


def test_deep_feature_stays_in_pixel_box(tiny_extractor, gallery):
    images, reps = gallery
    cfg = AttackConfig(DEEP_FEATURE, targeted=False, delta=10.0, df_max_iterations=30)
    for source in images[:3]:
        result = deep_feature_attack(tiny_extractor, source, None, reps, cfg)
        assert result.perturbation_linf <= 10.0 / 255.0 + 1e-6
        assert result.iterations_used <= 30
        assert result.linf_bound == pytest.approx(10.0 / 255.0)


# ---------------------------------------------------------------------------
# Helpers and batch runs
# ---------------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(2, 20), st.integers(0, 10_000))
def test_select_target_never_returns_label(num_classes, seed):
    rng = np.random.default_rng(seed)
    label = int(rng.integers(num_classes))
    target = select_target(label, num_classes, rng)
    assert target != label
    assert 0 <= target < num_classes


def test_perturbation_profile():
    original = np.zeros((2, 2, 1))
    adversarial = np.array([[[1.0 / 255]], [[10.0 / 255]], [[0.0]], [[4.0 / 255]]]).reshape(2, 2, 1)
    profile = perturbation_profile(original, adversarial)
    assert profile["max_pixel_perturbation"] == pytest.approx(10.0 / 255)
    assert profile["fraction_within"] == pytest.approx(0.75)


def test_batch_preserves_job_order(linear_classifier):
    images = {f"img{s}": _patch(seed=s, model=linear_classifier) for s in range(4)}
    jobs = [AttackJob(image_id, AttackConfig(FGSM, epsilon=0.1)) for image_id in sorted(images, reverse=True)]
    results = run_attack_batch(linear_classifier, jobs, images, workers=1)
    assert [r.image_id for r in results] == [job.image_id for job in jobs]


def test_batch_rejects_unknown_image(linear_classifier):
    with pytest.raises(DataError):
        run_attack_batch(linear_classifier, [AttackJob("missing", AttackConfig(FGSM))], {})


def test_manifest_and_results_csv(tmp_path, linear_classifier):
    jobs = [AttackJob("img0", AttackConfig(CWL2, targeted=True), target=2),
            AttackJob("img1", AttackConfig(DEEP_FEATURE, delta=7.0), guide_id="img2")]
    path = str(tmp_path / "manifest.jsonl")
    write_manifest(path, jobs)
    restored = read_manifest(path)
    assert [job.key for job in restored] == [job.key for job in jobs]
    assert restored[0].config == jobs[0].config
    assert restored[1].guide_id == "img2"

    image = _patch(seed=0, model=linear_classifier)
    result = fgsm(linear_classifier, image, AttackConfig(FGSM, epsilon=0.1))
    csv_path = str(tmp_path / "results.csv")
    append_results_csv(csv_path, [result])
    append_results_csv(csv_path, [result])
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == RESULT_COLUMNS
    assert len(rows) == 3


def test_manifest_rejects_malformed_line(tmp_path):
    path = tmp_path / "manifest.jsonl"
    path.write_text('{"image_id": "a"}\n', encoding="utf-8")
    with pytest.raises(DataError):
        read_manifest(str(path))
