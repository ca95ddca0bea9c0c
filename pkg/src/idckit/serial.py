"""On-disk formats.

Condensed-set container (little-endian):

  offset  size  field
  0       4     magic "IDC1"
  4       2     format version (currently 1)
  6       1     formation mode code (0 identity, 1 uniform2d,
                2 multiscale2d, 3 uniform1d)
  7       1     formation factor
  8       2     num_classes
  10      2     n_per_class
  12      2     channels
  14      2     height
  16      2     width
  18      ...   payload: float32 pixels, class-major
                (num_classes * n_per_class * C * H * W values)
  end     4     CRC32 of the payload bytes

Run configuration is a plain key=value text file; '#' starts a comment.
Unknown keys are rejected by name.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .multiform import CondensedSet, FormationSpec

MAGIC = b"IDC1"
VERSION = 1
_HEADER = struct.Struct("<4sHBBHHHHH")

MODE_CODES = {"identity": 0, "uniform2d": 1, "multiscale2d": 2, "uniform1d": 3}
CODE_MODES = {v: k for k, v in MODE_CODES.items()}


class FileFormatError(ValueError):
    """A condensed-set file does not match the container format."""


class ChecksumError(FileFormatError):
    pass


class ConfigError(ValueError):
    """A run-configuration file contains something unusable."""


def save_condensed(path: str | Path, s: CondensedSet) -> None:
    k, n, c, h, w = s.data.shape
    for name, value in (("num_classes", k), ("n_per_class", n),
                        ("channels", c), ("height", h), ("width", w)):
        if not 0 < value < 2 ** 16:
            raise FileFormatError(f"{name}={value} does not fit in u16")
    header = _HEADER.pack(MAGIC, VERSION, MODE_CODES[s.spec.mode],
                          s.spec.factor, k, n, c, h, w)
    payload = s.data.astype("<f4").tobytes()
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
        f.write(struct.pack("<I", crc))


def load_condensed(path: str | Path) -> CondensedSet:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 4:
        raise FileFormatError(
            f"{path}: {len(raw)} bytes is too short for a condensed-set file")
    magic, version, mode_code, factor, k, n, c, h, w = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FileFormatError(
            f"{path}: magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FileFormatError(
            f"{path}: format version {version}, this build reads {VERSION}")
    if mode_code not in CODE_MODES:
        raise FileFormatError(f"{path}: unknown formation mode code {mode_code}")
    count = k * n * c * h * w
    need = _HEADER.size + 4 * count + 4
    if len(raw) != need:
        raise FileFormatError(
            f"{path}: header promises {need} bytes, file has {len(raw)}")
    payload = raw[_HEADER.size:_HEADER.size + 4 * count]
    (crc_stored,) = struct.unpack_from("<I", raw, _HEADER.size + 4 * count)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    if crc != crc_stored:
        raise ChecksumError(
            f"{path}: payload CRC 0x{crc:08x} does not match stored "
            f"0x{crc_stored:08x}")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return CondensedSet(data.reshape(k, n, c, h, w),
                        FormationSpec(CODE_MODES[mode_code], factor))


# ---------------------------------------------------------------------------
# run configuration

@dataclass
class RunConfig:
    # formation / budget
    mode: str = "uniform2d"
    factor: int = 2
    n_per_class: int = 10
    init: str = "random_real"
    train_per_class: int = 0      # 0 = use every training image
    # condensation
    data_lr: float = 0.005
    net_lr: float = 0.01
    inner_iters: int = 100
    outer_loops: int = 10
    reinit_period: int = 1
    batch_real: int = 64
    batch_syn: int = 0            # 0 = whole class
    objective: str = "l1"
    regularization: str = "strong"
    net_source: str = "real"
    pretrain_epochs: int = 0
    depth: int = 3
    width: int = 64
    seed: int = 0
    # evaluation
    eval_epochs: int = 300
    eval_reps: int = 3
    eval_batch: int = 64
    eval_lr: float = 0.01


_CHOICES = {
    "mode": ("identity", "uniform2d", "multiscale2d", "uniform1d"),
    "init": ("random_real", "noise"),
    "objective": ("l1", "mse", "cosine", "feature_mse"),
    "regularization": ("strong", "basic"),
    "net_source": ("real", "synthetic"),
}


def parse_run_config(text: str) -> RunConfig:
    """Parse key=value lines into a RunConfig; every key has a default, and
    unknown keys are an error."""
    cfg = RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    defaults = {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected key=value, got {body!r}")
        key, _, value = body.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in types:
            raise ConfigError(
                f"line {lineno}: unknown key {key!r}; known keys: "
                f"{', '.join(sorted(types))}")
        try:
            if isinstance(defaults[key], bool):
                parsed = value.lower() in ("1", "true", "yes")
            elif isinstance(defaults[key], int):
                parsed = int(value)
            elif isinstance(defaults[key], float):
                parsed = float(value)
            else:
                parsed = value
        except ValueError:
            raise ConfigError(
                f"line {lineno}: cannot parse {key}={value!r} as "
                f"{type(defaults[key]).__name__}") from None
        if key in _CHOICES and parsed not in _CHOICES[key]:
            raise ConfigError(
                f"line {lineno}: {key} must be one of {_CHOICES[key]}, "
                f"got {parsed!r}")
        setattr(cfg, key, parsed)
    return cfg


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_run_config(Path(path).read_text())
