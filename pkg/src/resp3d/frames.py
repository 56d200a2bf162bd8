"""Frame ingestion, RGB/residual clip construction, augmentation and test-clip sampling.

Pixels are float32 in [0, 1]; clips are ``[T, H, W, C]`` until they are
batched into the network layout ``[N, C, T, H, W]``.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np

RGB = "rgb"
RESIDUAL = "residual"
PAD_POLICIES = ("repeat", "none")
CORNERS = ("tl", "tr", "bl", "br", "center")
DEFAULT_SCALES = (1.0, 0.875, 0.75, 0.66)
FRAME_PATTERN = re.compile(r"^img_(\d{5})\.(png|jpg)$")


class DatasetError(ValueError):
    """Malformed dataset layout or index; the message names the offending path."""


@dataclass
class FrameSequence:
    frames: np.ndarray  # [L, H, W, 3] float32 in [0, 1]
    source_fps: float = 15.0
    identifier: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError(f"{self.identifier or 'sequence'}: frames must be [L,H,W,3], got {self.frames.shape}")
        if len(self.frames) < 2:
            raise ValueError(f"{self.identifier or 'sequence'}: need at least 2 frames, got {len(self.frames)}")
        if self.source_fps <= 0:
            raise ValueError("source_fps must be positive")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class Clip:
    data: np.ndarray  # [T, H, W, C]
    modality: str
    step_size: int = 0
    source: str = ""
    start: int = 0
    geometry: Optional[Tuple[float, int, int]] = None  # (scale, y0, x0) of the crop

    @property
    def length(self) -> int:
        return self.data.shape[0]

    def to_network(self) -> np.ndarray:
        """``[C, T, H, W]`` view for batching."""
        return np.ascontiguousarray(self.data.transpose(3, 0, 1, 2))


@dataclass
class IndexEntry:
    path: str
    label: int
    frame_count: int
    fps: float = 15.0


@dataclass
class DatasetIndex:
    root: Path
    entries: List[IndexEntry]
    classes: List[str] = field(default_factory=list)

    def __post_init__(self):
        labels = sorted({e.label for e in self.entries})
        if labels and labels != list(range(len(labels))):
            raise DatasetError(f"{self.root}: labels must be dense in [0, #classes), got {labels}")
        if not self.classes:
            names = {}
            for e in self.entries:
                names.setdefault(e.label, Path(e.path).parts[0])
            self.classes = [names[i] for i in sorted(names)]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def num_classes(self) -> int:
        return len(self.classes)


# ---------------------------------------------------------------- ingestion

def frame_files(video_dir) -> List[Path]:
    video_dir = Path(video_dir)
    if not video_dir.is_dir():
        raise DatasetError(f"{video_dir}: frame directory not found")
    files = sorted(p for p in video_dir.iterdir() if FRAME_PATTERN.match(p.name))
    if not files:
        raise DatasetError(f"{video_dir}: no img_%05d.png|jpg frames")
    numbers = [int(FRAME_PATTERN.match(p.name).group(1)) for p in files]
    if numbers != list(range(1, len(files) + 1)):
        raise DatasetError(f"{video_dir}: frame numbers must run img_00001 onward without gaps")
    return files


def load_frames(video_dir, fps: float = 15.0) -> FrameSequence:
    frames = []
    for path in frame_files(video_dir):
        img = cv2.imread(str(path), cv2.IMREAD_COLOR)
        if img is None:
            raise DatasetError(f"{path}: unreadable image")
        frames.append(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))
    return FrameSequence(np.stack(frames).astype(np.float32) / 255.0, fps, str(video_dir))


def write_frames(video_dir, frames) -> None:
    """Write ``[L,H,W,3]`` frames in [0,1] as img_00001.png onward."""
    video_dir = Path(video_dir)
    video_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(np.asarray(frames), 1):
        img = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
        if not cv2.imwrite(str(video_dir / f"img_{i:05d}.png"), cv2.cvtColor(img, cv2.COLOR_RGB2BGR)):
            raise OSError(f"{video_dir}: could not write frame {i}")


def read_index(path) -> DatasetIndex:
    """Index lines: ``relative/path label frame_count fps`` (relative to the index's directory)."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: index file not found")
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DatasetError(f"{path}:{lineno}: expected 'path label frame_count fps'")
        try:
            entries.append(IndexEntry(parts[0], int(parts[1]), int(parts[2]), float(parts[3])))
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: malformed numeric field") from None
    if not entries:
        raise DatasetError(f"{path}: index lists no videos")
    return DatasetIndex(path.parent, entries)


def write_index(index: DatasetIndex, path) -> None:
    lines = [f"{e.path} {e.label} {e.frame_count} {e.fps:g}" for e in index.entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def scan_dataset(root, fps: float = 15.0) -> DatasetIndex:
    """Build an index from ``root/<class_name>/<video_id>/img_*.png``; labels follow sorted class names."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root}: dataset root not found")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise DatasetError(f"{root}: no class directories")
    entries = []
    for label, name in enumerate(classes):
        videos = sorted(p for p in (root / name).iterdir() if p.is_dir())
        if not videos:
            raise DatasetError(f"{root / name}: class directory holds no videos")
        for v in videos:
            entries.append(IndexEntry(f"{name}/{v.name}", label, len(frame_files(v)), fps))
    return DatasetIndex(root, entries, classes)


def open_dataset(path) -> DatasetIndex:
    """Accept an index file, or a dataset root (uses ``index.txt`` when present)."""
    path = Path(path)
    if path.is_file():
        return read_index(path)
    if (path / "index.txt").is_file():
        return read_index(path / "index.txt")
    return scan_dataset(path)


# ---------------------------------------------------------------- preprocessing

def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def resize_frame(frame: np.ndarray, height: int, width: int) -> np.ndarray:
    if frame.shape[:2] == (height, width):
        return frame
    return cv2.resize(frame, (width, height), interpolation=cv2.INTER_LINEAR)


def resample_and_resize(seq: FrameSequence, target_fps: float = 15.0, short_side: int = 256) -> FrameSequence:
    """Nearest-index temporal resampling to ``target_fps`` and bilinear short-side resize.

    Sources at or below ``target_fps`` keep every frame (no duplication)."""
    if seq.source_fps <= 0:
        raise ValueError("source_fps must be positive")
    frames = seq.frames
    if seq.source_fps > target_fps:
        ratio = seq.source_fps / target_fps
        n_out = int(math.floor((len(frames) - 1) / ratio + 1e-9)) + 1
        idx = [min(len(frames) - 1, _round_half_up(k * ratio)) for k in range(n_out)]
        frames = frames[idx]
    if len(frames) < 2:
        raise ValueError(f"{seq.identifier}: fewer than 2 frames after resampling to {target_fps} fps")
    H, W = frames.shape[1:3]
    if H <= W:
        h, w = short_side, _round_half_up(W * short_side / H)
    else:
        h, w = _round_half_up(H * short_side / W), short_side
    frames = np.stack([resize_frame(f, h, w) for f in frames])
    return FrameSequence(frames, min(seq.source_fps, target_fps), seq.identifier)


def residual_frame(seq: FrameSequence, t1: int, s: int) -> np.ndarray:
    """``|x[t1 + s] - x[t1]|`` per pixel and channel."""
    if s < 1:
        raise ValueError(f"step size must be >= 1, got {s}")
    if t1 < 0 or t1 + s >= len(seq):
        raise IndexError(f"residual frame ({t1}, s={s}) out of range for {len(seq)} frames")
    return np.abs(seq.frames[t1 + s] - seq.frames[t1])


def _window(seq: FrameSequence, start: int, T: int) -> np.ndarray:
    L = len(seq)
    if L < T:
        # short video: repeat the last frame up to T
        if start != 0:
            raise ValueError(f"{seq.identifier}: video shorter than T={T} only admits start 0")
        return np.concatenate([seq.frames, np.repeat(seq.frames[-1:], T - L, axis=0)])
    if start < 0 or start + T > L:
        raise ValueError(f"{seq.identifier}: window [{start}, {start + T}) exceeds {L} frames")
    return seq.frames[start:start + T]


def build_rgb_clip(seq: FrameSequence, start: int, T: int) -> Clip:
    return Clip(np.array(_window(seq, start, T)), RGB, 0, seq.identifier, start)


def build_residual_clip(seq: FrameSequence, start: int, T: int, s: int, pad_policy: str = "repeat") -> Clip:
    """Residual clip over the RGB window ``[start, start+T)``: ``T - s`` native frames,
    then padded back to ``T`` by repeating the last residual (``pad_policy='repeat'``)."""
    if pad_policy not in PAD_POLICIES:
        raise ValueError(f"pad_policy must be one of {PAD_POLICIES}")
    if s < 1:
        raise ValueError(f"step size must be >= 1, got {s}")
    if T <= s:
        raise ValueError(f"step size must be < clip length (s={s}, T={T})")
    window = _window(seq, start, T)
    res = np.abs(window[s:] - window[:-s])
    if pad_policy == "repeat":
        res = np.concatenate([res, np.repeat(res[-1:], s, axis=0)])
    return Clip(res, RESIDUAL, s, seq.identifier, start)


# ---------------------------------------------------------------- augmentation

def crop_offsets(height: int, width: int, crop: int, position: str) -> Tuple[int, int]:
    if position == "center":
        return (height - crop) // 2, (width - crop) // 2
    y0 = 0 if position[0] == "t" else height - crop
    x0 = 0 if position[1] == "l" else width - crop
    return y0, x0


def apply_geometry(clip: Clip, scale: float, position: str, crop: int) -> Clip:
    """Rescale every frame by ``scale`` (bilinear) and cut a ``crop x crop`` window at ``position``."""
    T, H, W, C = clip.data.shape
    h, w = _round_half_up(H * scale), _round_half_up(W * scale)
    if min(h, w) < crop:
        raise ValueError(f"crop {crop} larger than scaled frame {h}x{w} (scale {scale})")
    frames = clip.data if (h, w) == (H, W) else np.stack([resize_frame(f, h, w) for f in clip.data])
    y0, x0 = crop_offsets(h, w, crop, position)
    out = np.ascontiguousarray(frames[:, y0:y0 + crop, x0:x0 + crop])
    return replace(clip, data=out, geometry=(scale, y0, x0))


def augment_train(rgb: Optional[Clip], res: Optional[Clip], crop: int = 112,
                  scale_choices: Sequence[float] = DEFAULT_SCALES,
                  corner_choices: Sequence[str] = CORNERS,
                  rng: Optional[np.random.Generator] = None) -> Tuple[Optional[Clip], Optional[Clip]]:
    """Random scale + corner crop, one draw shared by both modalities and every frame."""
    rng = rng if rng is not None else np.random.default_rng()
    clips = [c for c in (rgb, res) if c is not None]
    if not clips:
        raise ValueError("augment_train needs at least one clip")
    shapes = {c.data.shape[1:3] for c in clips}
    if len(shapes) != 1:
        raise ValueError(f"clips disagree on frame size: {sorted(shapes)}")
    scale = float(scale_choices[rng.integers(len(scale_choices))])
    position = corner_choices[rng.integers(len(corner_choices))]
    out = [apply_geometry(c, scale, position, crop) if c is not None else None for c in (rgb, res)]
    return out[0], out[1]


def center_crop(clip: Clip, crop: int) -> Clip:
    return apply_geometry(clip, 1.0, "center", crop)


def sample_test_clips(length: int, T: int, n_clips: int = 10) -> List[int]:
    """Start indices evenly spaced over ``[0, length - T]`` (round half up).

    Videos no longer than ``T`` get start 0 for every clip."""
    if n_clips < 1:
        raise ValueError("n_clips must be >= 1")
    span = max(0, length - T)
    if n_clips == 1:
        return [_round_half_up(span / 2)]
    return [_round_half_up(k * span / (n_clips - 1)) for k in range(n_clips)]


# ---------------------------------------------------------------- standardization

@dataclass(frozen=True)
class Standardizer:
    mean: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    std: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __call__(self, data: np.ndarray) -> np.ndarray:
        """Standardize ``[..., C]`` pixel data channel-wise."""
        return ((data - np.asarray(self.mean, np.float32)) / np.asarray(self.std, np.float32)).astype(np.float32)


def stream_stats(clips: Sequence[np.ndarray]) -> Standardizer:
    """Per-channel mean/std over a collection of ``[T,H,W,3]`` arrays."""
    flat = np.concatenate([c.reshape(-1, 3) for c in clips]).astype(np.float64)
    std = np.maximum(flat.std(axis=0), 1e-3)
    return Standardizer(tuple(float(v) for v in flat.mean(axis=0)), tuple(float(v) for v in std))


def batch_clips(clips: Sequence[Clip], standardizer: Optional[Standardizer] = None, dtype=np.float32) -> np.ndarray:
    """Stack clips into ``[N, C, T, H, W]``."""
    out = []
    for c in clips:
        data = standardizer(c.data) if standardizer is not None else c.data
        out.append(data.transpose(3, 0, 1, 2))
    return np.ascontiguousarray(np.stack(out), dtype=dtype)


def env_workers(default: int) -> int:
    value = os.environ.get("P3D_NUM_WORKERS")
    return max(1, int(value)) if value else default
