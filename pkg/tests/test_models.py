import numpy as np
import pytest
from pydantic import ValidationError

from binarize.kinds import Lab
from binarize.lab import LabParams
from conftest import synthetic_handle, tiny_spec
from models.builder import build, desk_spec, lab_masks, mask_label, resnet18_imagenet_spec
from models.plan import plan_model
from oracles import numeric_gradient, relative_error
from schemas.net_schemas import BinarizerConfig
from tensor.autodiff import Tape
from tensor.ops import softmax, softmax_cross_entropy
from tensor.real import RealTensor
from train.optim import make_optimizer
from train.trainer import train_step
from utils.exceptions import CheckpointFormatError, ConfigError, ModelBuildError, ShapeMismatchError


def batch_of(rng, spec, n=4):
    return RealTensor(rng.normal(size=(n, *spec.input_shape)).astype(np.float32))


@pytest.mark.parametrize("mode", ["train", "relaxed", "infer"])
def test_logit_shape(rng, mode):
    spec = tiny_spec(binarizer="lab", stages=2, layers=1)
    logits = build(spec).forward(batch_of(rng, spec), mode)
    assert logits.data.shape == (4, 3, 1, 1)


def test_batch_shape_is_checked(rng):
    model = build(tiny_spec())
    with pytest.raises(ShapeMismatchError):
        model.forward(RealTensor(rng.normal(size=(2, 1, 9, 9))))


def test_unknown_forward_mode_is_a_config_error(rng):
    spec = tiny_spec()
    with pytest.raises(ConfigError) as excinfo:
        build(spec).forward(batch_of(rng, spec), "eval")
    assert excinfo.value.key == "mode"


def test_plan_halves_resolution_per_stage():
    plan = plan_model(desk_spec("cifar10"))
    assert [u.name for u in plan.units][:3] == ["stage1.layer1", "stage1.layer2", "stage2.layer1"]
    assert [u.out_shape for u in plan.units[::2]] == [(32, 32, 32), (64, 16, 16), (128, 8, 8), (256, 4, 4)]
    assert plan.units[2].project and plan.units[2].downsample
    assert not plan.units[1].project


def test_resnet18_preset_geometry():
    plan = plan_model(resnet18_imagenet_spec())
    assert plan.stem.out_shape == (64, 56, 56)
    assert len(plan.units) == 16
    assert plan.units[-1].out_shape == (512, 7, 7)


def test_quicknet_stem(rng):
    spec = tiny_spec(shape=(3, 16, 16), channels=8, stem="quicknet-stem")
    model = build(spec)
    assert model.plan.stem.conv_shape == (2, 8, 8)
    assert model.plan.units[0].in_shape == (8, 4, 4)
    assert model.forward(batch_of(rng, spec, 2), "train").data.shape == (2, 3, 1, 1)
    with pytest.raises(ValidationError):
        tiny_spec(shape=(3, 16, 16), channels=6, stem="quicknet-stem")


def test_too_small_input_fails_to_build():
    with pytest.raises(ModelBuildError):
        build(tiny_spec(shape=(1, 1, 1), stem_pool=True))


def test_lab_adds_exactly_its_parameters():
    sign = build(tiny_spec(stages=2))
    lab = build(tiny_spec(binarizer="lab", stages=2))
    # stage 1 layers read 4 channels, stage 2 reads 4 then 8
    expected = sum(2 * c * 9 + 2 * c + 1 for c in (4, 4, 4, 8))
    assert lab.lab_parameter_count() == expected
    assert lab.parameter_count() - sign.parameter_count() == expected
    assert set(lab.betas()) == {"stage1.layer1", "stage1.layer2", "stage2.layer1", "stage2.layer2"}


def test_identity_lab_model_matches_sign_model(rng):
    spec = tiny_spec(stages=2)
    sign, swapped = build(spec, seed=3), build(spec, seed=3)
    for unit in swapped.units:
        unit.binarizer = Lab(LabParams.identity(unit.plan.in_shape[0]))
    batch = batch_of(rng, spec)
    np.testing.assert_array_equal(sign.forward(batch, "infer").data, swapped.forward(batch, "infer").data)
    np.testing.assert_array_equal(sign.forward(batch, "train").data, swapped.forward(batch, "train").data)


def test_zero_initialized_classifier_gives_uniform_logits(rng):
    spec = tiny_spec(zero_init_classifier=True)
    logits = build(spec).forward(batch_of(rng, spec), "infer").data
    np.testing.assert_allclose(softmax(logits), 1 / 3)


def test_infer_is_deterministic_and_thread_independent(rng):
    spec = tiny_spec(binarizer="lab", stages=2)
    model = build(spec)
    batch = batch_of(rng, spec)
    first = model.forward(batch, "infer").data
    np.testing.assert_array_equal(first, model.forward(batch, "infer").data)
    model.threads = 3
    np.testing.assert_array_equal(first, model.forward(batch, "infer").data)


def test_captures_hold_pre_and_post_maps(rng):
    spec = tiny_spec(stages=2, layers=1)
    captures = {}
    build(spec).forward(batch_of(rng, spec, 2), "infer", captures=captures)
    assert list(captures) == ["stage1.layer1", "stage2.layer1"]
    pre, post = captures["stage2.layer1"].pre, captures["stage2.layer1"].post
    assert pre.data.shape == (2, 4, 8, 8)
    assert post.to_bool().tolist() == (pre.data > 0).tolist()


def test_every_lab_placement_builds_and_trains():
    spec = tiny_spec(stages=4, layers=1, shape=(1, 16, 16))
    data = synthetic_handle(8, shape=(1, 16, 16))
    masks = lab_masks(4)
    assert len(masks) == 16 and len({mask_label(m) for m in masks}) == 16
    assert mask_label(masks[0]) == "0000" and mask_label(masks[-1]) == "1111"
    for mask in masks:
        model = build(spec.with_lab_mask(mask))
        assert len(model.lab_sites()) == sum(mask)
        optimizer = make_optimizer("adam", model.named_parameters())
        loss = train_step(model, optimizer, RealTensor(data.images), data.labels, 1e-3, 1.0)
        assert np.isfinite(loss)


def test_relaxed_network_gradients_match_finite_differences(rng):
    spec = tiny_spec(binarizer="lab", stages=2, layers=1)
    model = build(spec, seed=11)
    params = model.named_parameters()
    for p in params.values():
        p.data = p.data.astype(np.float64)
    images = RealTensor(rng.normal(size=(4, *spec.input_shape)))
    labels = np.array([0, 1, 2, 1])

    def loss_value():
        return softmax_cross_entropy(model.forward(images, "relaxed"), labels).item()

    with Tape() as tape:
        loss = softmax_cross_entropy(model.forward(images, "relaxed"), labels)
    tape.backward(loss)
    for name in ("lab.stage1.layer1.dw_weights", "lab.stage2.layer1.beta", "stage2.layer1.conv.weight",
                 "stage2.layer1.shortcut.conv.weight", "stage1.layer1.prelu.slope", "classifier.weight"):
        analytic = params[name].grad
        numeric = numeric_gradient(loss_value, params[name].data)
        assert relative_error(analytic, numeric) < 5e-3, name


def test_state_round_trip_reproduces_outputs(rng):
    spec = tiny_spec(binarizer="lab", stages=2, layers=1)
    data = synthetic_handle(8)
    trained = build(spec, seed=1)
    optimizer = make_optimizer("adam", trained.named_parameters())
    train_step(trained, optimizer, RealTensor(data.images), data.labels, 1e-2, 1.0)
    fresh = build(spec, seed=2)
    fresh.load_state(trained.state_tensors())
    batch = batch_of(rng, spec)
    np.testing.assert_array_equal(trained.forward(batch, "infer").data, fresh.forward(batch, "infer").data)


def test_state_must_fit_the_model():
    lab = build(tiny_spec(binarizer="lab"))
    state = lab.state_tensors()
    state.pop("classifier.bias")
    with pytest.raises(CheckpointFormatError):
        build(tiny_spec(binarizer="lab")).load_state(state)
    with pytest.raises(ShapeMismatchError):
        build(tiny_spec(binarizer="lab", channels=8)).load_state(lab.state_tensors())


def test_param_bytes_ordering():
    full = build(tiny_spec(stages=2, full_precision=True))
    sign = build(tiny_spec(stages=2))
    lab = build(tiny_spec(binarizer="lab", stages=2))
    assert sign.param_bytes() < full.param_bytes()
    assert sign.param_bytes() < lab.param_bytes()
    sizes = [lab.param_bytes()]
    for bits in (8, 4):
        lab.quantize_lab(bits)
        sizes.append(lab.param_bytes())
    assert sizes[0] > sizes[1] > sizes[2] > sign.param_bytes()


def test_full_precision_model_has_no_binarizers(rng):
    spec = tiny_spec(binarizer="lab", full_precision=True)
    model = build(spec)
    assert model.lab_sites() == {} and model.binary_weight_names() == []
    captures = {}
    model.forward(batch_of(rng, spec), "infer", captures=captures)
    assert captures == {}


def test_niblack_and_sauvola_models_run(rng):
    for kind in ("niblack", "sauvola"):
        spec = tiny_spec().with_binarizer(BinarizerConfig(kind=kind))
        assert build(spec).forward(batch_of(rng, spec), "train").data.shape == (4, 3, 1, 1)
