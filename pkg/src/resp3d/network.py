"""The two-stream residual-frame network: per-modality conv1, four stages of
pseudo-3D blocks, global pool, fc1 and fc2."""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import textconfig
from .layers import Conv, ConvUnit, Linear, Module
from .p3d import BACKENDS, P3DBlock, P3DBlockConfig, block_output_shape
from .tensor import Tensor, ops, tensor_from_bytes, tensor_to_bytes
from .tensor.serialize import FormatError

MODALITIES = ("rgb", "residual")
STAGE_NAMES = ("res2", "res3", "res4", "res5")
STAGE_STRIDES = (1, 2, 2, 2)


@dataclass(frozen=True)
class NetworkConfig:
    modalities: Tuple[str, ...] = ("rgb", "residual")
    step_size: int = 1
    clip_len: int = 32
    crop: int = 112
    stage_blocks: Tuple[int, ...] = (3, 4, 6, 3)
    stage_channels: Tuple[int, ...] = (64, 128, 256, 512)
    conv1_channels: int = 64
    num_classes: int = 101
    enable_attention: bool = True
    enable_feature_residual: bool = True
    conv_backend: str = "pseudo3d"
    restore_expansion: int = 1
    fc1_units: int = 2048
    use_norm: bool = True

    def __post_init__(self):
        if not self.modalities:
            raise ValueError("at least one modality is required")
        bad = [m for m in self.modalities if m not in MODALITIES]
        if bad or len(set(self.modalities)) != len(self.modalities):
            raise ValueError(f"modalities must be distinct values from {MODALITIES}, got {self.modalities}")
        if len(self.stage_blocks) != 4 or len(self.stage_channels) != 4:
            raise ValueError("stage_blocks and stage_channels must both list 4 stages")
        if any(n <= 0 for n in self.stage_blocks + self.stage_channels):
            raise ValueError("stage blocks and channels must be positive")
        if self.conv_backend not in BACKENDS:
            raise ValueError(f"conv_backend must be one of {BACKENDS}")
        for name in ("step_size", "clip_len", "crop", "conv1_channels", "num_classes", "restore_expansion", "fc1_units"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def two_stream(self) -> bool:
        return len(self.modalities) == 2

    @property
    def stem_channels(self) -> int:
        """conv1 width per stream; a lone stream gets twice the channels."""
        return self.conv1_channels if self.two_stream else 2 * self.conv1_channels

    def block_configs(self) -> List[Tuple[str, P3DBlockConfig]]:
        out = []
        cin = self.stem_channels * len(self.modalities)
        for stage, n, cm, stride in zip(STAGE_NAMES, self.stage_blocks, self.stage_channels, STAGE_STRIDES):
            cout = cm * self.restore_expansion
            for i in range(n):
                cfg = P3DBlockConfig(cin, cm, cout, stride if i == 0 else 1, self.enable_attention,
                                     self.enable_feature_residual, self.use_norm, self.conv_backend)
                out.append((f"{stage}.{i}", cfg))
                cin = cout
        return out

    def to_text(self) -> str:
        return textconfig.to_text(self)

    @classmethod
    def from_text(cls, text: str) -> "NetworkConfig":
        return textconfig.build(cls, textconfig.parse_pairs(text))


# ---------------------------------------------------------------- shape walkthrough

@dataclass
class ShapeRow:
    stage: str
    filters: str
    channels: int
    T: int
    H: int
    W: int

    @property
    def output_size(self) -> str:
        if self.H == self.W:
            return f"{self.T}×{self.H}²"
        return f"{self.T}×{self.H}×{self.W}"


def _conv_out(n: int, k: int, s: int) -> int:
    return (n + 2 * ((k - 1) // 2) - k) // s + 1


def shape_walkthrough(config: NetworkConfig) -> List[ShapeRow]:
    """Symbolic shape inference (no parameters allocated)."""
    c = config
    T, S = c.clip_len, c.crop
    rows = [ShapeRow(f"raw_{m}", "-", 3, T, S, S) for m in c.modalities]
    S1 = _conv_out(S, 7, 2)
    for m in c.modalities:
        rows.append(ShapeRow(f"conv1_{m}", f"[1×7², {c.stem_channels}], [3×1², {c.stem_channels}]",
                             c.stem_channels, T, S1, S1))
    shape = (c.stem_channels * len(c.modalities), T, S1, S1)
    blocks = c.block_configs()
    for stage, n, cm in zip(STAGE_NAMES, c.stage_blocks, c.stage_channels):
        stage_blocks = [cfg for name, cfg in blocks if name.startswith(stage + ".")]
        for cfg in stage_blocks:
            shape = block_output_shape(cfg, shape)
        cout = stage_blocks[-1].out_channels
        if c.conv_backend == "pseudo3d":
            core = f"[1×3², {cm}], [3×1², {cm}]"
        else:
            core = f"[3×3², {cm}]"
        rows.append(ShapeRow(stage, f"[1×1², {cm}], {core}, [1×1², {cout}] ×{n}", *shape))
    C, T5, H5, W5 = shape
    rows.append(ShapeRow("pool", f"{T5}×{H5}²" if H5 == W5 else f"{T5}×{H5}×{W5}", C, 1, 1, 1))
    rows.append(ShapeRow("fc1", f"1×1², {c.fc1_units}", c.fc1_units, 1, 1, 1))
    rows.append(ShapeRow("fc2", f"1×1², {c.num_classes}", c.num_classes, 1, 1, 1))
    return rows


def format_walkthrough(rows: List[ShapeRow]) -> str:
    width = max(len(r.filters) for r in rows)
    lines = [f"{'stage':<15} {'filters':<{width}}  output"]
    for r in rows:
        out = "1×1×1" if (r.T, r.H, r.W) == (1, 1, 1) else r.output_size
        lines.append(f"{r.stage:<15} {r.filters:<{width}}  {out}")
    return "\n".join(lines)


# ---------------------------------------------------------------- model

class Stem(Module):
    """conv1 of one modality: spatial 1x7x7 stride 2, then temporal 3x1x1."""

    def __init__(self, channels: int, use_norm: bool, rng: np.random.Generator):
        self.spatial = ConvUnit(Conv(3, channels, (1, 7, 7), 2, rng), channels, use_norm)
        self.temporal = ConvUnit(Conv(channels, channels, (3, 1, 1), 1, rng), channels, use_norm)

    def forward(self, x: Tensor) -> Tensor:
        return self.temporal(self.spatial(x))


class Model(Module):
    """Realized network graph. Stage order: conv1 streams, res2..res5, pool, fc1, fc2."""

    def __init__(self, config: NetworkConfig, rng_seed: int = 0):
        rng = np.random.default_rng(rng_seed)
        self._config = config
        self._seed = rng_seed
        self.conv1_rgb = Stem(config.stem_channels, config.use_norm, rng) if "rgb" in config.modalities else None
        self.conv1_res = Stem(config.stem_channels, config.use_norm, rng) if "residual" in config.modalities else None
        blocks = config.block_configs()
        for stage in STAGE_NAMES:
            setattr(self, stage, [P3DBlock(cfg, rng, name) for name, cfg in blocks if name.startswith(stage + ".")])
        last = blocks[-1][1].out_channels
        self.fc1 = Linear(last, config.fc1_units, rng)
        self.fc2 = Linear(config.fc1_units, config.num_classes, rng)

    @property
    def config(self) -> NetworkConfig:
        return self._config

    def stages(self) -> List[Tuple[str, Optional[Module]]]:
        out = []
        if self.conv1_rgb is not None:
            out.append(("conv1_rgb", self.conv1_rgb))
        if self.conv1_res is not None:
            out.append(("conv1_residual", self.conv1_res))
        for stage in STAGE_NAMES:
            out.append((stage, getattr(self, stage)))
        out += [("pool", None), ("fc1", self.fc1), ("fc2", self.fc2)]
        return out

    def _check_input(self, stage: str, clip) -> Tensor:
        c = self._config
        x = ops.as_tensor(clip)
        expected = (3, c.clip_len, c.crop, c.crop)
        if x.ndim != 5 or tuple(x.shape[1:]) != expected:
            raise ValueError(f"{stage}: expected input [N,3,{c.clip_len},{c.crop},{c.crop}], got {x.shape}")
        return x

    def forward(self, rgb=None, res=None, trace: Optional[Dict[str, tuple]] = None) -> Tensor:
        """Logits ``[N, num_classes]``; clips are ``[N, 3, T, H, W]`` arrays or tensors."""
        c = self._config
        streams = []
        for modality, clip, stem, stage in (("rgb", rgb, self.conv1_rgb, "conv1_rgb"),
                                            ("residual", res, self.conv1_res, "conv1_residual")):
            if modality in c.modalities:
                if clip is None:
                    raise ValueError(f"{stage}: the {modality} clip is required by this model")
                y = stem(self._check_input(stage, clip))
                if trace is not None:
                    trace[stage] = y.shape[1:]
                streams.append(y)
            elif clip is not None:
                raise ValueError(f"{stage}: model was built without the {modality} modality")
        x = ops.concat_channels(streams)
        for stage in STAGE_NAMES:
            for block in getattr(self, stage):
                x = block(x)
            if trace is not None:
                trace[stage] = x.shape[1:]
        x = ops.global_avg_pool(x)
        if trace is not None:
            trace["pool"] = x.shape[1:]
        x = ops.reshape(x, (x.shape[0], x.shape[1]))
        x = ops.relu(self.fc1(x))
        if trace is not None:
            trace["fc1"] = x.shape[1:]
        x = self.fc2(x)
        if trace is not None:
            trace["fc2"] = x.shape[1:]
        return x


def build_model(config: NetworkConfig, rng_seed: int = 0) -> Model:
    return Model(config, rng_seed)


def forward(model: Model, rgb=None, res=None) -> Tensor:
    return model(rgb=rgb, res=res)


# ---------------------------------------------------------------- checkpoints

CKPT_MAGIC = b"P3DC"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint is malformed, of another version, or built for another config."""


@dataclass
class Checkpoint:
    config: NetworkConfig
    params: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray]
    optimizer: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: Dict[str, object] = field(default_factory=dict)


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def checkpoint_bytes(model: Model, optimizer_state: Optional[Dict[str, np.ndarray]] = None,
                     meta: Optional[dict] = None) -> bytes:
    """Serialize; layout: magic, u32 version, config text, meta JSON, then named P3DT records."""
    records = [(f"param/{n}", p.data) for n, p in model.named_parameters()]
    records += [(f"buffer/{n}", b) for n, b in model.named_buffers()]
    records += [(f"optim/{n}", a) for n, a in (optimizer_state or {}).items()]
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC + struct.pack("<I", CKPT_VERSION))
    buf.write(_pack_str(model.config.to_text()))
    buf.write(_pack_str(json.dumps(meta or {}, sort_keys=True)))
    buf.write(struct.pack("<I", len(records)))
    for name, arr in records:
        blob = tensor_to_bytes(arr)
        buf.write(_pack_str(name) + struct.pack("<Q", len(blob)) + blob)
    return buf.getvalue()


def save_checkpoint(model: Model, path, optimizer_state=None, meta=None) -> None:
    data = checkpoint_bytes(model, optimizer_state, meta)
    with open(path, "wb") as fh:
        fh.write(data)


def parse_checkpoint(data: bytes) -> Checkpoint:
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError("checkpoint is truncated")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    def take_str():
        (n,) = struct.unpack("<I", take(4))
        return take(n).decode("utf-8")

    if take(4) != CKPT_MAGIC:
        raise CheckpointError("not a P3DC checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != CKPT_VERSION:
        raise CheckpointError(f"checkpoint version {version} unsupported (expected {CKPT_VERSION})")
    try:
        config = NetworkConfig.from_text(take_str())
    except textconfig.ConfigError as exc:
        raise CheckpointError(f"checkpoint config unreadable: {exc}") from exc
    meta = json.loads(take_str())
    (count,) = struct.unpack("<I", take(4))
    groups = {"param": {}, "buffer": {}, "optim": {}}
    for _ in range(count):
        name = take_str()
        (size,) = struct.unpack("<Q", take(8))
        blob = take(size)
        try:
            arr, end = tensor_from_bytes(blob)
        except FormatError as exc:
            raise CheckpointError(f"record {name}: {exc}") from exc
        if end != len(blob):
            raise CheckpointError(f"record {name}: length mismatch")
        kind, _, key = name.partition("/")
        if kind not in groups:
            raise CheckpointError(f"unknown record kind in {name!r}")
        groups[kind][key] = arr
    if pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint records")
    return Checkpoint(config, groups["param"], groups["buffer"], groups["optim"], meta)


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())


def restore_into(model: Model, ckpt: Checkpoint) -> None:
    """Copy checkpoint tensors into ``model``; validates everything before writing."""
    mismatch = textconfig.diff(ckpt.config, model.config)
    if mismatch:
        detail = ", ".join(f"{f}: checkpoint={getattr(ckpt.config, f)!r} model={getattr(model.config, f)!r}"
                           for f in mismatch)
        raise CheckpointError(f"config mismatch on field {detail}")
    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    for kind, have, want in (("parameter", ckpt.params, params), ("buffer", ckpt.buffers, buffers)):
        if set(have) != set(want):
            missing = sorted(set(want) - set(have))
            extra = sorted(set(have) - set(want))
            raise CheckpointError(f"{kind} names differ (missing {missing[:3]}, unexpected {extra[:3]})")
        for name, arr in have.items():
            target = want[name].data if kind == "parameter" else want[name]
            if arr.shape != target.shape:
                raise CheckpointError(f"{kind} {name}: shape {arr.shape} vs model {target.shape}")
    for name, arr in ckpt.params.items():
        params[name].data = arr.astype(params[name].dtype)
    for name, arr in ckpt.buffers.items():
        buffers[name][...] = arr


def load_checkpoint(path, model: Optional[Model] = None) -> Tuple[Model, Checkpoint]:
    """Load a checkpoint; builds a fresh model from its config when none is given."""
    ckpt = read_checkpoint(path)
    if model is None:
        model = build_model(ckpt.config)
    restore_into(model, ckpt)
    return model, ckpt
