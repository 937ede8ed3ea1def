"""Config parsing, sub-seed derivation, and run manifests."""

import json
from pathlib import Path

import pytest

from dofvo.config import (
    EUROC_CAM0_INTRINSICS,
    PipelineConfig,
    RunManifest,
    config_hash,
    config_snapshot,
    default_config_text,
    load_config,
    parse_config,
    read_manifest,
    subseed,
    write_manifest,
)
from dofvo.activations import ActivationKind
from dofvo.errors import DataError, DatasetError


def test_template_parses_to_defaults(tmp_path):
    path = tmp_path / "dofvo.ini"
    path.write_text(default_config_text())
    cfg = load_config(path)
    ref = PipelineConfig()
    assert cfg.dataset_root == tmp_path / "."
    assert cfg.out_dir == tmp_path / "out"
    assert cfg.camera_dir == ref.camera_dir
    assert cfg.gt_dir == ref.gt_dir
    assert cfg.intrinsics == EUROC_CAM0_INTRINSICS
    assert cfg.frontend == ref.frontend
    assert cfg.train == ref.train
    assert cfg.seed == 0


def test_empty_text_is_all_defaults():
    cfg = parse_config("")
    ref = PipelineConfig()
    assert cfg.frontend == ref.frontend
    assert cfg.train == ref.train
    assert cfg.intrinsics == ref.intrinsics


def test_overrides_reach_every_section():
    cfg = parse_config(
        """
        [dataset]
        root = seq
        camera_dir = mav0/cam1
        [camera]
        fx = 100.5
        cy = -2
        [frontend]
        geometry_mode = fundamental
        max_features = 250
        ransac_threshold_px = 2.5
        [train]
        hidden = 16, 8
        activation = leaky relu
        optimizer = sgd
        batch_size = 16
        [run]
        seed = 77
        out_dir = results
        """,
        base_dir="/base",
    )
    assert cfg.dataset_root == Path("/base/seq")
    assert cfg.camera_dir == "mav0/cam1"
    assert cfg.intrinsics.fx == 100.5 and cfg.intrinsics.cy == -2.0
    assert cfg.intrinsics.fy == EUROC_CAM0_INTRINSICS.fy
    assert cfg.frontend.geometry_mode == "fundamental"
    assert cfg.frontend.detector.max_features == 250
    assert cfg.frontend.ransac.threshold_px == 2.5
    assert cfg.train.hidden == (16, 8)
    assert cfg.train.activation == ActivationKind.LEAKY_RELU
    assert cfg.train.optimizer == "sgd"
    assert cfg.train.batch_size == 16
    assert cfg.seed == 77
    assert cfg.out_dir == Path("/base/results")


def test_inline_comments_stripped():
    cfg = parse_config("[run]\nseed = 5  # chosen by fair dice roll\n")
    assert cfg.seed == 5


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("[ddataset]\nroot = x\n", "unknown config section"),
        ("[train]\nactivaton = relu\n", "unknown key"),
        ("[run]\nseed = soon\n", "seed"),
        ("[run]\nseed = -3\n", ">= 0"),
        ("[camera]\nfx = 0\n", "positive"),
        ("[frontend]\ngeometry_mode = homography\n", "geometry_mode"),
        ("[train]\nhidden = \n", "hidden"),
        ("[train]\nhidden = 8,zero\n", "hidden"),
        ("[train]\noptimizer = lbfgs\n", "optimizer"),
        ("[train]\nactivation = swish\n", "activation"),
        ("[train]\nbatch_size = 0\n", ">= 1"),
        ("no sections here", "config syntax"),
    ],
)
def test_bad_config_rejected(text, fragment):
    with pytest.raises(DataError, match=fragment):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(DataError, match="cannot read config"):
        load_config(tmp_path / "absent.ini")


def test_validate_dataset_names_missing_path(tmp_path):
    cfg = PipelineConfig(dataset_root=tmp_path)
    with pytest.raises(DatasetError, match="mav0"):
        cfg.validate_dataset()


def test_subseed_deterministic_and_distinct():
    seen = set()
    for seed in (0, 1, 12345):
        for name in ("pair:0", "pair:1", "branch:3", "fusion"):
            value = subseed(seed, name)
            assert value == subseed(seed, name)
            assert 0 <= value < 2**63
            seen.add(value)
    assert len(seen) == 12


def test_subseed_sensitive_to_both_parts():
    assert subseed(1, "a") != subseed(2, "a")
    assert subseed(1, "a") != subseed(1, "b")
    # concatenation must not collide across the separator
    assert subseed(12, "3:x") != subseed(123, "x")


def test_config_hash_ignores_formatting_not_values():
    a = parse_config("[run]\nseed = 9\n")
    b = parse_config("# comment\n\n[run]\nseed = 9\n")
    c = parse_config("[run]\nseed = 10\n")
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_config_snapshot_is_json_ready():
    snap = config_snapshot(PipelineConfig())
    blob = json.dumps(snap, sort_keys=True)
    assert "geometry_mode" in snap["frontend"]
    assert snap["train"]["activation"] == "relu"
    assert json.loads(blob) == snap


def test_manifest_roundtrip(tmp_path):
    manifest = RunManifest(
        command="run-vo",
        tool_version="0.1.0",
        seed=4,
        config_hash="ab" * 32,
        config={"seed": 4},
        stage_seconds={"detect": {"mean_s": 0.01}},
        counts={"pairs": 11},
        outputs=("out/raw_poses.csv",),
    )
    path = tmp_path / "manifest.json"
    write_manifest(path, manifest)
    back = read_manifest(path)
    assert back == manifest.as_dict()
    # no stray temp files from the atomic write
    assert [p.name for p in tmp_path.iterdir()] == ["manifest.json"]


def test_manifest_overwrite_is_replace(tmp_path):
    path = tmp_path / "manifest.json"
    for seed in (1, 2):
        write_manifest(
            path,
            RunManifest("eval", "0.1.0", seed, "x", {}, {}, {}, ()),
        )
    assert read_manifest(path)["seed"] == 2


def test_read_manifest_rejects_junk(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(DataError, match="invalid manifest JSON"):
        read_manifest(path)
    with pytest.raises(DataError, match="cannot read"):
        read_manifest(tmp_path / "absent.json")
