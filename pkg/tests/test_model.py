import numpy as np
import pytest

from config.settings import ClassifierSettings
from model import (
    CROSS_ENTROPY, NEGATED_CROSS_ENTROPY, FeatureExtractor, LabeledImage, forward,
    load_checkpoint, read_tensors, save_checkpoint, train_classifier, write_tensors,
)
from model.training import accuracy
from numcore import finite_diff_grad, max_relative_error
from utils.errors import ContainerFormatError, DataError, PreconditionError, StructuralError


def _random_image(size, seed=0):
    return np.random.default_rng(seed).uniform(0.1, 0.9, (size, size, 1))


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

def test_forward_has_one_pooled_vector_per_block(tiny_extractor):
    trace = forward(tiny_extractor, _random_image(8))
    assert len(trace.pooled) == tiny_extractor.num_blocks == 2
    assert [p.shape for p in trace.pooled] == [(3,), (4,)]
    np.testing.assert_array_equal(trace.descriptor, trace.pooled[-1])
    assert trace.logits.shape == (3,)


def test_forward_is_deterministic(tiny_extractor):
    image = _random_image(8, seed=4)
    first = forward(tiny_extractor, image)
    second = forward(tiny_extractor, image.copy())
    for a, b in zip(first.pooled, second.pooled):
        assert a.tobytes() == b.tobytes()
    assert first.logits.tobytes() == second.logits.tobytes()


def test_forward_of_zero_image_matches_constant_propagation(tiny_extractor):
    trace = forward(tiny_extractor, np.zeros((8, 8, 1)))
    h = np.zeros(1)
    for b in range(tiny_extractor.num_blocks):
        weight = tiny_extractor.params[f"block{b}.weight"]
        bias = tiny_extractor.params[f"block{b}.bias"]
        h = np.maximum(weight.sum(axis=(2, 3)) @ h + bias, 0.0)
        np.testing.assert_allclose(trace.pooled[b], h, atol=1e-12)


def test_batched_trace_rows_match_single_traces(tiny_extractor):
    batch = np.stack([_random_image(8, seed=s) for s in range(3)])
    batched = tiny_extractor.trace(batch)
    for i in range(3):
        single = tiny_extractor.trace(batch[i])
        np.testing.assert_allclose(batched.row(i).logits, single.logits, atol=1e-12)


def test_forward_rejects_wrong_image_shape(tiny_extractor):
    with pytest.raises(StructuralError):
        forward(tiny_extractor, np.zeros((9, 9, 1)))


def test_image_size_must_divide_by_downsampling():
    with pytest.raises(StructuralError):
        FeatureExtractor.create(num_classes=2, channels=(2, 2, 2), image_size=12)


def test_labeled_image_rejects_out_of_range_pixels():
    with pytest.raises(DataError):
        LabeledImage(np.full((2, 2, 1), 1.5), 0, "bad")


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", [CROSS_ENTROPY, NEGATED_CROSS_ENTROPY])
def test_input_gradient_matches_finite_differences(gradcheck_extractor, kind):
    image = _random_image(16, seed=2)
    loss, grad = gradcheck_extractor.loss_and_input_grad(image, 1, kind)
    numeric = finite_diff_grad(lambda x: gradcheck_extractor.loss_and_input_grad(x, 1, kind)[0], image)
    assert grad.shape == image.shape
    assert max_relative_error(grad, numeric) < 1e-4


def test_negated_loss_flips_sign(tiny_extractor):
    image = _random_image(8)
    loss, grad = tiny_extractor.loss_and_input_grad(image, 2, CROSS_ENTROPY)
    neg_loss, neg_grad = tiny_extractor.loss_and_input_grad(image, 2, NEGATED_CROSS_ENTROPY)
    assert neg_loss == pytest.approx(-loss)
    np.testing.assert_allclose(neg_grad, -grad)


def test_saturated_softmax_has_vanishing_gradient(tiny_extractor):
    image = _random_image(8, seed=9)
    logits = tiny_extractor.logits(image)
    top = int(np.argmax(logits))
    margin = np.sort(logits)[-1] - np.sort(logits)[-2]
    params = dict(tiny_extractor.params)
    params["head.weight"] = params["head.weight"] * (5000.0 / max(margin, 1e-6))
    saturated = tiny_extractor.with_params(params)
    _, grad = saturated.loss_and_input_grad(image, top)
    assert np.max(np.abs(grad)) <= 1e-6


def test_loss_rejects_unknown_kind_and_class(tiny_extractor):
    with pytest.raises(PreconditionError):
        tiny_extractor.loss_and_input_grad(_random_image(8), 0, "hinge")
    with pytest.raises(DataError):
        tiny_extractor.loss_and_input_grad(_random_image(8), 3)


def test_feature_loss_gradient_matches_finite_differences(gradcheck_extractor):
    image = _random_image(16, seed=3)
    target = gradcheck_extractor.trace(_random_image(16, seed=8)).descriptor
    _, grad = gradcheck_extractor.feature_loss_grad(image, target)
    numeric = finite_diff_grad(lambda x: gradcheck_extractor.feature_loss_grad(x, target)[0], image)
    assert max_relative_error(grad, numeric) < 1e-4


def test_feature_loss_of_own_descriptor_is_zero(tiny_extractor):
    image = _random_image(8, seed=5)
    loss, grad = tiny_extractor.feature_loss_grad(image, tiny_extractor.trace(image).descriptor)
    assert loss == 0.0
    assert np.max(np.abs(grad)) <= 1e-6


def test_feature_loss_rejects_wrong_length(tiny_extractor):
    with pytest.raises(StructuralError):
        tiny_extractor.feature_loss_grad(_random_image(8), np.zeros(7))


def test_parameter_gradients_match_finite_differences(tiny_extractor):
    images = np.stack([_random_image(8, seed=s) for s in range(4)])
    labels = np.array([0, 1, 2, 1])
    _, grads, _ = tiny_extractor.loss_and_param_grads(images, labels)

    def loss_with(name):
        def objective(value):
            params = dict(tiny_extractor.params)
            params[name] = value
            return tiny_extractor.with_params(params).loss_and_param_grads(images, labels)[0]
        return objective

    for name in ("block0.bias", "block1.weight", "head.weight"):
        numeric = finite_diff_grad(loss_with(name), tiny_extractor.params[name])
        assert max_relative_error(grads[name], numeric) < 1e-4, name


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _brightness_dataset(n_per_class=20, seed=0):
    rng = np.random.default_rng(seed)
    dark = np.clip(0.2 + 0.05 * rng.standard_normal((n_per_class, 8, 8, 1)), 0, 1)
    bright = np.clip(0.8 + 0.05 * rng.standard_normal((n_per_class, 8, 8, 1)), 0, 1)
    images = np.concatenate([dark, bright])
    labels = np.array([0] * n_per_class + [1] * n_per_class)
    return images, labels


def test_classifier_learns_separable_classes():
    images, labels = _brightness_dataset()
    model = FeatureExtractor.create(num_classes=2, channels=(4, 4), image_size=8, seed=0, dtype=np.float64)
    config = ClassifierSettings(epochs=20, batch_size=8, learning_rate=0.05, momentum=0.9)
    trained, history = train_classifier(model, images, labels, config, seed=0)
    assert accuracy(trained, images, labels) >= 0.99
    assert len(history.epochs) == 20
    assert history.final_train_accuracy >= 0.99


def test_classifier_training_is_deterministic():
    images, labels = _brightness_dataset(n_per_class=6)
    model = FeatureExtractor.create(num_classes=2, channels=(2, 3), image_size=8, seed=1, dtype=np.float64)
    config = ClassifierSettings(epochs=3, batch_size=4)
    first, _ = train_classifier(model, images, labels, config, seed=42)
    second, _ = train_classifier(model, images, labels, config, seed=42)
    for name in first.params:
        assert first.params[name].tobytes() == second.params[name].tobytes()


def test_classifier_training_needs_two_classes():
    images, _ = _brightness_dataset(n_per_class=3)
    model = FeatureExtractor.create(num_classes=2, channels=(2,), image_size=8)
    with pytest.raises(DataError):
        train_classifier(model, images, np.zeros(len(images), dtype=int))


# ---------------------------------------------------------------------------
# Tensor container
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, tiny_extractor):
    path = str(tmp_path / "model.tgm")
    save_checkpoint(tiny_extractor, path)
    restored = load_checkpoint(path)
    assert restored.image_size == 8
    assert restored.channels == tiny_extractor.channels
    for name, value in tiny_extractor.params.items():
        np.testing.assert_array_equal(restored.params[name], value.astype(np.float32))


def test_container_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.tgm"
    path.write_bytes(b"NOTMODEL" + b"\x00" * 8)
    with pytest.raises(ContainerFormatError):
        read_tensors(str(path))


def test_container_rejects_truncated_tensor(tmp_path):
    path = str(tmp_path / "t.tgm")
    write_tensors(path, {"a": np.arange(6, dtype=np.float32).reshape(2, 3)})
    with open(path, "rb") as fh:
        data = fh.read()
    with open(path, "wb") as fh:
        fh.write(data[:-5])
    with pytest.raises(ContainerFormatError):
        read_tensors(path)


def test_container_keeps_scalar_and_order(tmp_path):
    path = str(tmp_path / "t.tgm")
    write_tensors(path, {"z": np.float32(2.5), "a": np.ones((1, 2))})
    tensors = read_tensors(path)
    assert list(tensors) == ["z", "a"]
    assert tensors["z"].shape == ()
    assert float(tensors["z"]) == 2.5
