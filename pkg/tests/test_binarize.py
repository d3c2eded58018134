import numpy as np
import pytest
from skimage.filters import threshold_niblack, threshold_sauvola

from binarize.kinds import Lab, Niblack, Sauvola, SignSTE
from binarize.lab import LabParams, lab, lab_backward, lab_forward, lab_surrogate
from binarize.local import niblack, niblack_margin, sauvola, sauvola_margin
from binarize.quantize import lab_weight_scales, quantization_error, quantize_lab_weights
from binarize.sign import sign_ste, sign_ste_forward
from oracles import numeric_gradient, relative_error
from tensor import ops
from tensor.autodiff import Tape
from tensor.bits import unpack
from tensor.real import RealTensor
from utils.exceptions import ConfigError, QuantizationError, ShapeMismatchError


def float64_params(rng, channels, k=3, beta=1.3):
    return LabParams(
        RealTensor(rng.normal(0.0, 0.6, size=(2 * channels, 1, k, k)), requires_grad=True),
        RealTensor(rng.normal(0.0, 0.1, size=(1, 2 * channels, 1, 1)), requires_grad=True),
        RealTensor(np.full((1, 1, 1, 1), beta), requires_grad=True),
    )


def test_identity_lab_reproduces_sign(rng):
    for trial in range(100):
        shape = (int(rng.integers(1, 3)), int(rng.integers(1, 5)), int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        x = rng.normal(size=shape).astype(np.float32)
        if trial % 10 == 0:
            x[..., 0] = 0.0
        x = RealTensor(x)
        bits, _ = lab_forward(x, LabParams.identity(shape[1]))
        assert bits == sign_ste_forward(x)


def test_identity_lab_matches_sign_in_training_mode(rng):
    x = RealTensor(rng.normal(size=(2, 3, 5, 5)).astype(np.float32))
    np.testing.assert_array_equal(lab(x, LabParams.identity(3)).data, sign_ste(x).data)


def test_lab_ties_go_to_minus_one():
    params = LabParams.identity(1)
    params.dw_weights.data[:] = 0.0
    bits, _ = lab_forward(RealTensor(np.ones((1, 1, 3, 3), dtype=np.float32)), params)
    assert bits.popcount() == 0


def test_lab_surrogate_gradients_match_finite_differences(rng):
    p = float64_params(rng, channels=2)
    x = RealTensor(rng.normal(size=(2, 2, 5, 4)), requires_grad=True)
    cotangent = RealTensor(rng.normal(size=x.data.shape))

    def loss():
        return ops.sum_all(ops.mul(lab_surrogate(x, p), cotangent)).item()

    with Tape() as tape:
        out = ops.sum_all(ops.mul(lab(x, p, relaxed=True), cotangent))
    tape.backward(out)
    for tensor in (x, p.dw_weights, p.dw_bias, p.beta):
        assert relative_error(tensor.grad, numeric_gradient(loss, tensor.data)) < 1e-3


def test_hard_lab_uses_surrogate_backward(rng):
    p = float64_params(rng, channels=1)
    x = RealTensor(rng.normal(size=(1, 1, 4, 4)), requires_grad=True)
    with Tape() as tape:
        hard = lab(x, p)
        loss = ops.sum_all(hard)
    tape.backward(loss)
    assert set(np.unique(hard.data)) <= {-1.0, 1.0}
    assert np.abs(p.beta.grad).sum() > 0
    assert np.abs(x.grad).sum() > 0


def test_lab_channel_mismatch(rng):
    with pytest.raises(ShapeMismatchError):
        lab_forward(RealTensor(rng.normal(size=(1, 3, 4, 4))), LabParams.identity(2))


def test_lab_parameter_count_and_channel_slice(rng):
    p = LabParams.init(5, rng)
    assert p.parameter_count() == 2 * 5 * 9 + 2 * 5 + 1
    single = p.channel(3)
    np.testing.assert_array_equal(single.dw_weights.data[0], p.dw_weights.data[3])
    np.testing.assert_array_equal(single.dw_weights.data[1], p.dw_weights.data[8])
    x = RealTensor(rng.normal(size=(1, 5, 6, 6)).astype(np.float32))
    full, _ = lab_forward(x, p)
    alone, _ = lab_forward(RealTensor(x.data[:, 3:4]), single)
    np.testing.assert_array_equal(full.to_bool()[:, 3:4], alone.to_bool())


def test_sign_ste_backward_is_clipped():
    x = RealTensor(np.array([-2.0, -0.5, 0.0, 0.5, 2.0]).reshape(1, 1, 1, 5), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum_all(sign_ste(x))
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad.reshape(-1), [0.0, 1.0, 1.0, 1.0, 0.0])


def test_sign_ste_clip_band_includes_its_edges(rng):
    values = np.concatenate([[-1.5, -1.0, 1.0, 1.5], rng.uniform(-2.0, 2.0, size=60)])
    x = RealTensor(values.reshape(1, 1, 8, 8), requires_grad=True)
    upstream = RealTensor(np.full(x.data.shape, 2.0))
    with Tape() as tape:
        loss = ops.sum_all(ops.mul(sign_ste(x), upstream))
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad.reshape(-1)[:4], [0.0, 2.0, 2.0, 0.0])
    np.testing.assert_array_equal(x.grad, np.where(np.abs(x.data) <= 1.0, 2.0, 0.0))


@pytest.mark.parametrize("window", [3, 5])
def test_local_thresholds_match_scikit_image_inside_the_border(rng, window):
    x = rng.normal(size=(1, 1, 12, 11))
    r = window // 2
    inner = (slice(r, -r), slice(r, -r))
    # scikit-image subtracts k * sigma
    niblack_t = x[0, 0] - niblack_margin(x, -0.2, window)[0, 0]
    np.testing.assert_allclose(niblack_t[inner], threshold_niblack(x[0, 0], window_size=window, k=0.2)[inner], atol=1e-6)
    sauvola_t = x[0, 0] - sauvola_margin(x, 0.3, window, R=1.5)[0, 0]
    np.testing.assert_allclose(sauvola_t[inner], threshold_sauvola(x[0, 0], window_size=window, k=0.3, r=1.5)[inner], atol=1e-6)


def test_niblack_is_shift_invariant(rng):
    x = rng.normal(size=(2, 3, 7, 7)).astype(np.float64)
    assert niblack(RealTensor(x)) == niblack(RealTensor(x + 5.0))


def test_constant_map():
    x = RealTensor(np.full((1, 2, 5, 5), 3.0))
    assert niblack(x).popcount() == 0
    # sigma = 0 puts the Sauvola threshold at (1 - k) * mu
    assert sauvola(x, k_s=0.2).popcount() == 50


def test_sauvola_default_range_is_half_the_map_span(rng):
    x = rng.normal(size=(1, 1, 6, 6))
    half = (x.max() - x.min()) / 2
    np.testing.assert_array_equal(sauvola_margin(x, 0.5, 3), sauvola_margin(x, 0.5, 3, R=half))


def test_local_threshold_validation():
    with pytest.raises(ConfigError):
        Niblack(window=4)
    with pytest.raises(ConfigError):
        Sauvola(R=0.0)


def test_threshold_ste_band(rng):
    x = RealTensor(rng.normal(size=(1, 1, 6, 6)), requires_grad=True)
    binarizer = Niblack()
    with Tape() as tape:
        loss = ops.sum_all(binarizer.apply(x))
    tape.backward(loss)
    margin = niblack_margin(x.data, -0.2, 3)
    np.testing.assert_array_equal(x.grad, (np.abs(margin) <= 1.0).astype(np.float64))
    assert binarizer.apply(x).data.tolist() == unpack(binarizer.binarize(x), np.float64).data.tolist()


def test_binarizer_labels():
    assert SignSTE().label == "sign"
    assert Niblack(-0.2).label == "niblack(k=-0.2)"
    assert Sauvola(0.5).label == "sauvola(k=0.5)"
    assert Lab(LabParams.identity(1)).label == "lab"


def test_int8_quantization_keeps_peaks_and_bounds_error(rng):
    p = LabParams.init(4, rng)
    p.dw_weights.data[2] = 0.0
    quantized = quantize_lab_weights(p, 8)
    peaks = np.abs(p.dw_weights.data).max(axis=(1, 2, 3))
    np.testing.assert_allclose(np.abs(quantized.dw_weights.data).max(axis=(1, 2, 3)), peaks, rtol=1e-6)
    assert not quantized.dw_weights.data[2].any()
    err, scales = quantization_error(p, 8)
    assert (err <= scales / 2 + 1e-6).all()
    assert quantized.beta is p.beta and quantized.dw_bias is p.dw_bias


def test_int4_is_coarser_than_int8(rng):
    p = LabParams.init(4, rng)
    assert quantization_error(p, 4)[0].max() > quantization_error(p, 8)[0].max()
    with pytest.raises(QuantizationError):
        lab_weight_scales(p, 3)


def test_quantization_is_idempotent_on_its_own_grid(rng):
    for bits in (8, 4):
        once = quantize_lab_weights(LabParams.init(3, rng), bits)
        twice = quantize_lab_weights(once, bits)
        np.testing.assert_allclose(twice.dw_weights.data, once.dw_weights.data, rtol=1e-6, atol=1e-7)


def test_single_peak_weight_survives_int8():
    p = LabParams.identity(1)
    quantized = quantize_lab_weights(p, 8)
    np.testing.assert_array_equal(quantized.dw_weights.data, p.dw_weights.data)


def test_int4_error_is_at_most_half_a_step_per_weight(rng):
    for _ in range(20):
        p = LabParams.init(int(rng.integers(1, 6)), rng)
        quantized = quantize_lab_weights(p, 4)
        scales = lab_weight_scales(p, 4).reshape(-1, 1, 1, 1)
        err = np.abs(quantized.dw_weights.data.astype(np.float64) - p.dw_weights.data)
        assert (err <= scales / 2 + 1e-6).all()
        levels = np.round(quantized.dw_weights.data / np.where(scales > 0, scales, 1.0))
        assert np.abs(levels).max() <= 7


def test_cold_surrogate_agrees_with_hard_output(rng):
    for _ in range(10):
        p = float64_params(rng, channels=3, beta=1e3)
        x = RealTensor(rng.normal(size=(2, 3, 6, 6)))
        bits, cache = lab_forward(x, p)
        decided = np.abs(cache.z1 - cache.z0) > 0.01
        soft = lab_surrogate(x, p).data
        hard = unpack(bits).data
        assert decided.any()
        assert np.abs(soft - hard)[decided].max() < 1e-3


def test_lab_backward_at_a_tie_and_when_saturated():
    params = LabParams.identity(1, dtype=np.float64)
    params.dw_weights.data[:] = 0.0
    x = RealTensor(np.zeros((1, 1, 3, 3)))
    _, cache = lab_forward(x, params)
    upstream = np.zeros(x.data.shape)
    upstream[0, 0, 1, 1] = 1.0
    _, _, grad_bias, grad_beta = lab_backward(cache, params, upstream)
    # d/dz1 = 2 * beta * p * (1 - p) = 0.5 at p = 0.5
    np.testing.assert_allclose(grad_bias.reshape(-1), [-0.5, 0.5])
    assert grad_beta.item() == 0.0

    saturated = LabParams.identity(1, dtype=np.float64)
    x = RealTensor(np.where(np.arange(9).reshape(1, 1, 3, 3) % 2, 100.0, -100.0))
    _, cache = lab_forward(x, saturated)
    for grad in lab_backward(cache, saturated, np.ones(x.data.shape)):
        assert not np.any(grad)
