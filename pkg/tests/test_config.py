import json

import pytest
from hypothesis import given, strategies as st

from receval.config import EvalConfig
from receval.errors import ContractError


def test_defaults_round_trip():
    cfg = EvalConfig()
    back = EvalConfig.from_json(cfg.to_json())
    assert back.to_flat() == cfg.to_flat()
    flat = cfg.to_flat()
    assert flat["synth.n_frames"] == 608 and flat["synth.arc"] == 180.0 and flat["synth.radius"] == 900.0
    assert flat["roi_radius"] == 100.0 and flat["trajectory_unit"] == "m"


@given(st.floats(1, 500), st.integers(0, 2**31), st.sampled_from(["wilcoxon", "t"]))
def test_overrides_round_trip(r, seed, test):
    cfg = EvalConfig().with_overrides([f"roi_radius={r!r}", f"seed={seed}", f"test={test}"])
    assert cfg.roi_radius == r and cfg.seed == seed and cfg.test == test
    assert EvalConfig.from_json(cfg.to_json()).to_flat() == cfg.to_flat()


def test_overrides_keep_base_and_types():
    cfg = EvalConfig().with_overrides(["leaf=5", "synth.start=-30", "synth.fuse_leaf=null"])
    assert cfg.leaf == 5.0 and isinstance(cfg.leaf, float)
    assert cfg.synth.start == -30.0 and cfg.synth.fuse_leaf is None
    cfg2 = cfg.with_overrides(["seed=3"])
    assert cfg2.leaf == 5.0 and cfg2.seed == 3
    assert cfg.registration_params().leaf == 5.0
    assert cfg.pinhole().fx == 570.0


@pytest.mark.parametrize("item", [
    "roi_radius=0", "roi_radius=-1", "leaf=abc", "seed=1.5", "seed=-1", "nope=1",
    "test=anova", "synth.normals=1", "ransac.confidence=1", "camera.cx=1000", "noequals",
    "spin.width=null",
])
def test_invalid_overrides(item):
    with pytest.raises(ContractError):
        EvalConfig().with_overrides([item])


def test_from_json_errors():
    with pytest.raises(ContractError):
        EvalConfig.from_json("{")
    with pytest.raises(ContractError):
        EvalConfig.from_json("[1, 2]")
    with pytest.raises(ContractError, match="unknown"):
        EvalConfig.from_json(json.dumps({"roi.radius": 3}))
