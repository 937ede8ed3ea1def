"""Run configuration and manifests.

One INI file drives every subcommand. Sections: [dataset] for the
sequence location, [camera] for intrinsics, [frontend] for detector,
tracker, and consensus overrides, [train] for the refinement recipe,
[run] for seed and output directory. Relative paths resolve against the
config file's directory.

All randomness in a run flows from the single [run] seed through named
sub-seeds (`subseed`), so consumers get independent streams while the
whole run stays reproducible from one number.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__ as TOOL_VERSION
from .activations import ActivationKind, kind_from_name
from .epipolar import CameraIntrinsics, RansacConfig
from .errors import DataError, DatasetError
from .euroc import DEFAULT_CAMERA_DIR, DEFAULT_GROUNDTRUTH_DIR
from .features import DetectorConfig
from .flow import TrackerConfig
from .frontend import GEOMETRY_MODES, FrontendConfig
from .training import OPTIMIZERS, TrainConfig

# EuRoC cam0 pinhole parameters; the usual starting point for real runs
EUROC_CAM0_INTRINSICS = CameraIntrinsics(fx=458.654, fy=457.296, cx=367.215, cy=248.375)


@dataclass(frozen=True)
class PipelineConfig:
    """Validated settings shared by every subcommand."""

    dataset_root: Path = Path(".")
    camera_dir: str = DEFAULT_CAMERA_DIR
    gt_dir: str = DEFAULT_GROUNDTRUTH_DIR
    intrinsics: CameraIntrinsics = EUROC_CAM0_INTRINSICS
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    out_dir: Path = Path("out")

    def validate_dataset(self) -> None:
        """Raise unless the EuRoC-layout input files are actually present."""
        from .euroc import sequence_paths

        index_csv, image_dir, gt_csv = sequence_paths(
            self.dataset_root, self.camera_dir, self.gt_dir
        )
        for path in (index_csv, image_dir, gt_csv):
            if not Path(path).exists():
                raise DatasetError(f"missing dataset path: {path}")


def subseed(seed: int, name: str) -> int:
    """Independent 63-bit seed for one named consumer of the run seed."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


_TEMPLATE = """\
# Pipeline configuration. Relative paths resolve against this file's
# directory. Every value below shows its default.

[dataset]
# EuRoC-ASL sequence root (contains mav0/).
root = .
# camera subdirectory under the root
camera_dir = mav0/cam0
# ground-truth subdirectory under the root
gt_dir = mav0/state_groundtruth_estimate0

[camera]
# pinhole intrinsics in pixels (defaults: EuRoC cam0)
fx = 458.654
fy = 457.296
cx = 367.215
cy = 248.375

[frontend]
# essential (calibrated) or fundamental (pixel-space) geometry
geometry_mode = essential
# corner detection
block_size = 3
harris_k = 0.04
max_features = 500
quality_ratio = 0.01
min_distance = 8.0
border_margin = 12
# sparse optical flow
window_size = 21
pyramid_levels = 3
track_iterations = 30
track_epsilon = 0.01
track_max_residual = 0.08
track_min_eigenvalue = 1e-7
# robust estimation
ransac_iterations = 2000
ransac_confidence = 0.999
ransac_threshold_px = 1.0
# pair acceptance
min_valid_tracks = 8
min_median_flow_px = 0.25

[train]
# comma-separated hidden layer widths
hidden = 32,32
# relu | leaky_relu | elu | selu | tanh | sigmoid
activation = relu
learning_rate = 0.001
# per-epoch learning-rate multiplier in (0, 1]
lr_decay = 1.0
# adam | sgd
optimizer = adam
momentum = 0.9
batch_size = 64
epochs = 120
# fraction of samples held out as the contiguous validation tail
val_fraction = 0.1
# epochs without validation improvement before stopping
patience = 12

[run]
seed = 0
out_dir = out
"""

_SECTION_KEYS = {
    "dataset": {"root", "camera_dir", "gt_dir"},
    "camera": {"fx", "fy", "cx", "cy"},
    "frontend": {
        "geometry_mode",
        "block_size",
        "harris_k",
        "max_features",
        "quality_ratio",
        "min_distance",
        "border_margin",
        "window_size",
        "pyramid_levels",
        "track_iterations",
        "track_epsilon",
        "track_max_residual",
        "track_min_eigenvalue",
        "ransac_iterations",
        "ransac_confidence",
        "ransac_threshold_px",
        "min_valid_tracks",
        "min_median_flow_px",
    },
    "train": {
        "hidden",
        "activation",
        "learning_rate",
        "lr_decay",
        "optimizer",
        "momentum",
        "batch_size",
        "epochs",
        "val_fraction",
        "patience",
    },
    "run": {"seed", "out_dir"},
}


def default_config_text() -> str:
    """The init-config template; every default documented inline."""
    return _TEMPLATE


class _Section:
    """One INI section with typed, range-checked access."""

    def __init__(self, name: str, values: dict):
        self.name = name
        self.values = values

    def _convert(self, key: str, cast, default):
        if key not in self.values:
            return default
        raw = self.values[key]
        try:
            return cast(raw)
        except ValueError as exc:
            raise DataError(f"[{self.name}] {key} = {raw!r}: {exc}") from None

    def get_str(self, key: str, default: str) -> str:
        return self._convert(key, str, default)

    def get_int(self, key: str, default: int, minimum: int | None = None) -> int:
        value = self._convert(key, int, default)
        if minimum is not None and value < minimum:
            raise DataError(f"[{self.name}] {key} must be >= {minimum}, got {value}")
        return value

    def get_float(self, key: str, default: float, positive: bool = False) -> float:
        value = self._convert(key, float, default)
        if positive and value <= 0.0:
            raise DataError(f"[{self.name}] {key} must be positive, got {value}")
        return value


def _parse_hidden(raw: str) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("needs at least one width")
    return tuple(int(p) for p in parts)


def parse_config(text: str, base_dir=".") -> PipelineConfig:
    """Build a PipelineConfig from INI text; unknown keys are errors."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise DataError(f"config syntax: {exc}") from None

    base = Path(base_dir)
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise DataError(f"unknown config section [{section}]")
        unknown = set(parser[section]) - _SECTION_KEYS[section]
        if unknown:
            raise DataError(
                f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}"
            )

    def section(name: str) -> _Section:
        return _Section(name, dict(parser[name]) if parser.has_section(name) else {})

    ds = section("dataset")
    cam = section("camera")
    fe = section("frontend")
    tr = section("train")
    run = section("run")

    try:
        intrinsics = CameraIntrinsics(
            fx=cam.get_float("fx", EUROC_CAM0_INTRINSICS.fx, positive=True),
            fy=cam.get_float("fy", EUROC_CAM0_INTRINSICS.fy, positive=True),
            cx=cam.get_float("cx", EUROC_CAM0_INTRINSICS.cx),
            cy=cam.get_float("cy", EUROC_CAM0_INTRINSICS.cy),
        )
        mode = fe.get_str("geometry_mode", "essential")
        if mode not in GEOMETRY_MODES:
            raise DataError(f"[frontend] geometry_mode must be one of {GEOMETRY_MODES}")
        frontend = FrontendConfig(
            detector=DetectorConfig(
                block_size=fe.get_int("block_size", 3, minimum=1),
                harris_k=fe.get_float("harris_k", 0.04, positive=True),
                max_features=fe.get_int("max_features", 500, minimum=8),
                quality_ratio=fe.get_float("quality_ratio", 0.01, positive=True),
                min_distance=fe.get_float("min_distance", 8.0),
                border_margin=fe.get_int("border_margin", 12, minimum=0),
            ),
            tracker=TrackerConfig(
                window_size=fe.get_int("window_size", 21, minimum=3),
                pyramid_levels=fe.get_int("pyramid_levels", 3, minimum=1),
                max_iterations=fe.get_int("track_iterations", 30, minimum=1),
                epsilon=fe.get_float("track_epsilon", 0.01, positive=True),
                max_residual=fe.get_float("track_max_residual", 0.08, positive=True),
                min_eigenvalue=fe.get_float("track_min_eigenvalue", 1e-7),
            ),
            ransac=RansacConfig(
                max_iterations=fe.get_int("ransac_iterations", 2000, minimum=1),
                confidence=fe.get_float("ransac_confidence", 0.999),
                threshold_px=fe.get_float("ransac_threshold_px", 1.0, positive=True),
            ),
            geometry_mode=mode,
            min_valid_tracks=fe.get_int("min_valid_tracks", 8, minimum=8),
            min_median_flow_px=fe.get_float("min_median_flow_px", 0.25),
        )
        train = TrainConfig(
            hidden=tr._convert("hidden", _parse_hidden, (32, 32)),
            activation=tr._convert("activation", kind_from_name, ActivationKind.RELU),
            learning_rate=tr.get_float("learning_rate", 1e-3, positive=True),
            lr_decay=tr.get_float("lr_decay", 1.0, positive=True),
            optimizer=tr.get_str("optimizer", "adam"),
            momentum=tr.get_float("momentum", 0.9),
            batch_size=tr.get_int("batch_size", 64, minimum=1),
            epochs=tr.get_int("epochs", 120, minimum=1),
            val_fraction=tr.get_float("val_fraction", 0.1),
            patience=tr.get_int("patience", 12, minimum=1),
        )
    except ValueError as exc:
        raise DataError(f"config value: {exc}") from None

    if train.optimizer not in OPTIMIZERS:
        raise DataError(f"[train] optimizer must be one of {OPTIMIZERS}")

    return PipelineConfig(
        dataset_root=base / ds.get_str("root", "."),
        camera_dir=ds.get_str("camera_dir", DEFAULT_CAMERA_DIR),
        gt_dir=ds.get_str("gt_dir", DEFAULT_GROUNDTRUTH_DIR),
        intrinsics=intrinsics,
        frontend=frontend,
        train=train,
        seed=run.get_int("seed", 0, minimum=0),
        out_dir=base / run.get_str("out_dir", "out"),
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read config: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def config_snapshot(cfg: PipelineConfig) -> dict:
    """JSON-able view of every setting, for manifests and hashing."""
    return {
        "dataset_root": str(cfg.dataset_root),
        "camera_dir": cfg.camera_dir,
        "gt_dir": cfg.gt_dir,
        "intrinsics": asdict(cfg.intrinsics),
        "frontend": {
            "detector": asdict(cfg.frontend.detector),
            "tracker": asdict(cfg.frontend.tracker),
            "ransac": asdict(cfg.frontend.ransac),
            "geometry_mode": cfg.frontend.geometry_mode,
            "min_valid_tracks": cfg.frontend.min_valid_tracks,
            "min_median_flow_px": cfg.frontend.min_median_flow_px,
        },
        "train": {
            **asdict(cfg.train),
            "activation": cfg.train.activation.name.lower(),
            "hidden": list(cfg.train.hidden),
            "input_mask": list(cfg.train.input_mask) if cfg.train.input_mask else None,
        },
        "seed": cfg.seed,
        "out_dir": str(cfg.out_dir),
    }


def config_hash(cfg: PipelineConfig) -> str:
    blob = json.dumps(config_snapshot(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """What a command did: inputs, timings, counts, and produced files."""

    command: str
    tool_version: str
    seed: int
    config_hash: str
    config: dict
    stage_seconds: dict
    counts: dict
    outputs: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "tool_version": self.tool_version,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "config": self.config,
            "stage_seconds": self.stage_seconds,
            "counts": self.counts,
            "outputs": list(self.outputs),
        }


def write_manifest(path, manifest: RunManifest) -> None:
    """Atomic JSON write: temp file in the target directory, then replace."""
    path = Path(path)
    blob = json.dumps(manifest.as_dict(), indent=2, sort_keys=True) + "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read manifest: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid manifest JSON: {exc}") from None
