import pytest

from conftest import synthetic_handle, tiny_spec
from models.sweep import BINARIZER_VARIANTS, ablation_specs, lab_stage_indices, placement_sweep
from schemas.net_schemas import TrainConfig
from utils.exceptions import ModelBuildError


def test_placement_needs_four_stages():
    with pytest.raises(ModelBuildError):
        placement_sweep(tiny_spec(stages=2), synthetic_handle(8), None, TrainConfig(batch_size=4))


def test_ablation_ladder_adds_one_change_per_step():
    names, specs = zip(*ablation_specs(tiny_spec(stages=2)))
    assert names == ("A:sign", "B:+prelu", "C:+lab", "D:+stem")
    a, b, c, d = specs
    assert not any(block.use_prelu for block in a.blocks)
    assert all(block.use_prelu for block in b.blocks)
    assert lab_stage_indices(b) == [] and lab_stage_indices(c) == [1, 2]
    assert (c.stem, d.stem) == ("plain-conv", "quicknet-stem")
    assert d.blocks == c.blocks


def test_quicknet_step_rejects_indivisible_channels():
    with pytest.raises(ModelBuildError):
        ablation_specs(tiny_spec(channels=6))


def test_binarizer_variants_cover_every_family():
    assert {config.kind for _, config in BINARIZER_VARIANTS} == {"sign", "niblack", "sauvola", "lab"}
    assert [name for name, config in BINARIZER_VARIANTS] == [config.label for _, config in BINARIZER_VARIANTS]
