"""Optimization loop, 10-clip evaluation and the synthetic motion toy dataset.

Determinism: every random draw of an epoch comes from generators seeded by
``(seed, epoch)`` (sample order) and ``(seed, epoch, video)`` (clip start and
augmentation), so results do not depend on worker count or scheduling, and a
run resumed from an epoch checkpoint replays the remaining epochs exactly.
"""

from __future__ import annotations

import collections
import json
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import frames as fp
from .frames import Clip, DatasetIndex, FrameSequence, IndexEntry, Standardizer
from .network import Model, NetworkConfig, read_checkpoint, restore_into, save_checkpoint
from .tensor import no_grad, ops


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


# ================================================================ configuration

@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 8
    epochs: int = 60
    lr_milestones: Tuple[float, ...] = (0.5, 0.75)  # fractions of ``epochs``
    lr_decay: float = 0.1
    seed: int = 0
    num_workers: int = 2
    precision: str = "float32"
    eval_every: int = 1
    early_stop_top1: float = 0.0  # stop once val top-1 reaches this; 0 disables
    test_clips: int = 10

    def __post_init__(self):
        if not (self.lr >= 0 and math.isfinite(self.lr)):
            raise ValueError(f"lr must be finite and >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        for name in ("batch_size", "epochs", "num_workers", "eval_every", "test_clips"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        m = self.lr_milestones
        if any(not 0 < v <= 1 for v in m) or any(b <= a for a, b in zip(m, m[1:])):
            raise ValueError(f"lr_milestones must be increasing fractions in (0, 1], got {m}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")
        if not 0 <= self.early_stop_top1 <= 1:
            raise ValueError("early_stop_top1 must be in [0, 1]")

    def milestone_epochs(self) -> List[int]:
        return [int(round(f * self.epochs)) for f in self.lr_milestones]

    def lr_at(self, epoch: int) -> float:
        """Step schedule; ``epoch`` counts from 0."""
        passed = sum(1 for m in self.milestone_epochs() if epoch >= m)
        return self.lr * self.lr_decay ** passed


@dataclass(frozen=True)
class DataConfig:
    train_root: str = ""
    val_root: str = ""
    target_fps: float = 15.0
    short_side: int = 256
    scale_choices: Tuple[float, ...] = fp.DEFAULT_SCALES
    corner_choices: Tuple[str, ...] = fp.CORNERS
    stats_videos: int = 64
    rgb_mean: Tuple[float, ...] = ()
    rgb_std: Tuple[float, ...] = ()
    res_mean: Tuple[float, ...] = ()
    res_std: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.short_side < 1 or self.target_fps <= 0 or self.stats_videos < 1:
            raise ValueError("short_side, target_fps and stats_videos must be positive")
        if not self.scale_choices or any(s <= 0 for s in self.scale_choices):
            raise ValueError("scale_choices must be positive")
        bad = [c for c in self.corner_choices if c not in fp.CORNERS]
        if bad or not self.corner_choices:
            raise ValueError(f"corner_choices must be drawn from {fp.CORNERS}")
        for prefix in ("rgb", "res"):
            mean, std = getattr(self, f"{prefix}_mean"), getattr(self, f"{prefix}_std")
            if len(mean) not in (0, 3) or len(std) != len(mean):
                raise ValueError(f"{prefix}_mean/{prefix}_std must both be empty or list 3 values")
            if any(v <= 0 for v in std):
                raise ValueError(f"{prefix}_std must be positive")

    def standardizer(self, modality: str) -> Optional[Standardizer]:
        prefix = "rgb" if modality == fp.RGB else "res"
        mean = getattr(self, f"{prefix}_mean")
        return Standardizer(mean, getattr(self, f"{prefix}_std")) if mean else None


# ================================================================ dataset

class VideoDataset:
    """One split: decoded videos plus training and test clip sampling.

    Videos are loaded lazily and cached after resampling and resizing.
    """

    def __init__(self, index: DatasetIndex, network: NetworkConfig, data: DataConfig = DataConfig(),
                 standardizers: Optional[Dict[str, Standardizer]] = None, cache: bool = True):
        if len(index) == 0:
            raise ValueError(f"{index.root}: dataset is empty")
        if network.step_size >= network.clip_len and fp.RESIDUAL in network.modalities:
            raise ValueError(f"step size must be < clip length (s={network.step_size}, T={network.clip_len})")
        self.index = index
        self.network = network
        self.data = data
        self.standardizers = dict(standardizers or {})
        for m in network.modalities:
            if m not in self.standardizers and data.standardizer(m) is not None:
                self.standardizers[m] = data.standardizer(m)
        self._cache: Dict[int, FrameSequence] = {} if cache else None
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.index)

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.index.entries], dtype=np.int64)

    @property
    def num_classes(self) -> int:
        return self.index.num_classes

    def video(self, i: int) -> FrameSequence:
        if self._cache is not None:
            with self._lock:
                seq = self._cache.get(i)
            if seq is not None:
                return seq
        e = self.index.entries[i]
        seq = fp.load_frames(Path(self.index.root) / e.path, e.fps)
        seq = fp.resample_and_resize(seq, self.data.target_fps, self.data.short_side)
        if self._cache is not None:
            with self._lock:
                self._cache[i] = seq
        return seq

    def _clips(self, seq: FrameSequence, start: int) -> Tuple[Optional[Clip], Optional[Clip]]:
        c = self.network
        rgb = fp.build_rgb_clip(seq, start, c.clip_len) if fp.RGB in c.modalities else None
        res = fp.build_residual_clip(seq, start, c.clip_len, c.step_size) if fp.RESIDUAL in c.modalities else None
        return rgb, res

    def _finish(self, clip: Optional[Clip]) -> Optional[np.ndarray]:
        if clip is None:
            return None
        std = self.standardizers.get(clip.modality)
        data = std(clip.data) if std is not None else clip.data
        return np.ascontiguousarray(data.transpose(3, 0, 1, 2), dtype=np.float32)

    def train_sample(self, i: int, rng: np.random.Generator):
        """Random start, then one shared scale/corner draw for both modalities."""
        seq = self.video(i)
        span = max(0, len(seq) - self.network.clip_len)
        start = int(rng.integers(span + 1))
        rgb, res = self._clips(seq, start)
        rgb, res = fp.augment_train(rgb, res, self.network.crop, self.data.scale_choices,
                                    self.data.corner_choices, rng)
        return self._finish(rgb), self._finish(res), self.index.entries[i].label

    def test_samples(self, i: int, n_clips: int = 10):
        """Center-cropped clips at the distinct test starts, with their multiplicities."""
        seq = self.video(i)
        starts = fp.sample_test_clips(len(seq), self.network.clip_len, n_clips)
        counts = collections.Counter(starts)
        out = []
        for start in sorted(counts):
            rgb, res = self._clips(seq, start)
            rgb = fp.center_crop(rgb, self.network.crop) if rgb is not None else None
            res = fp.center_crop(res, self.network.crop) if res is not None else None
            out.append((counts[start], self._finish(rgb), self._finish(res)))
        return out


def fit_standardizers(dataset: VideoDataset) -> Dict[str, Standardizer]:
    """Per-modality channel mean/std over the first ``stats_videos`` training videos (full frames)."""
    n = min(len(dataset), dataset.data.stats_videos)
    out = {}
    seqs = [dataset.video(i) for i in range(n)]
    if fp.RGB in dataset.network.modalities:
        out[fp.RGB] = fp.stream_stats([s.frames for s in seqs])
    if fp.RESIDUAL in dataset.network.modalities:
        s = dataset.network.step_size
        out[fp.RESIDUAL] = fp.stream_stats([np.abs(q.frames[s:] - q.frames[:-s]) for q in seqs if len(q) > s])
    return out


def with_standardizers(data: DataConfig, stds: Dict[str, Standardizer]) -> DataConfig:
    """``data`` with empty mean/std fields filled from ``stds`` (the values echoed into the run config)."""
    kwargs = asdict(data)
    for modality, prefix in ((fp.RGB, "rgb"), (fp.RESIDUAL, "res")):
        if modality in stds and not kwargs[f"{prefix}_mean"]:
            kwargs[f"{prefix}_mean"] = tuple(round(v, 6) for v in stds[modality].mean)
            kwargs[f"{prefix}_std"] = tuple(round(v, 6) for v in stds[modality].std)
    return DataConfig(**kwargs)


# ================================================================ optimizer

class SGD:
    """SGD with momentum and L2 weight decay; ``buf = m * buf + (g + wd * w)``, ``w -= lr * buf``."""

    def __init__(self, named_params, momentum: float = 0.9, weight_decay: float = 1e-4):
        self.params = list(named_params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.state: Dict[str, np.ndarray] = {}

    def step(self, lr: float) -> None:
        for name, p in self.params:
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data if self.weight_decay else p.grad.copy()
            buf = self.state.get(name)
            if buf is None or self.momentum == 0:
                buf = g
            else:
                buf *= self.momentum
                buf += g
            self.state[name] = buf
            p.data -= lr * buf

    def state_dict(self) -> Dict[str, np.ndarray]:
        return dict(self.state)

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        names = {n for n, _ in self.params}
        unknown = sorted(set(state) - names)
        if unknown:
            raise ValueError(f"optimizer state for unknown parameters: {unknown[:3]}")
        dtypes = {n: p.dtype for n, p in self.params}
        self.state = {n: np.array(a, dtype=dtypes[n]) for n, a in state.items()}


# ================================================================ loading

def _model_dtype(model: Model):
    return model.fc2.weight.dtype


def _stack(arrays, dtype):
    if arrays[0] is None:
        return None
    return np.ascontiguousarray(np.stack(arrays), dtype=dtype)


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def sample_rng(seed: int, epoch: int, video: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, video])


def iter_train_batches(dataset: VideoDataset, config: TrainConfig, epoch: int, pool: ThreadPoolExecutor,
                       dtype=np.float32, prefetch: int = 2):
    """Yield ``(rgb, res, labels)`` batches in a fixed order; workers fill a bounded look-ahead queue."""
    order = epoch_order(len(dataset), config.seed, epoch)
    batches = [order[i:i + config.batch_size] for i in range(0, len(order), config.batch_size)]
    pending = collections.deque()

    def submit(idxs):
        pending.append([pool.submit(dataset.train_sample, int(i), sample_rng(config.seed, epoch, int(i)))
                        for i in idxs])

    for b in batches[:prefetch]:
        submit(b)
    for k in range(len(batches)):
        futures = pending.popleft()
        if k + prefetch < len(batches):
            submit(batches[k + prefetch])
        samples = [f.result() for f in futures]
        rgb, res, labels = zip(*samples)
        yield _stack(rgb, dtype), _stack(res, dtype), np.array(labels, dtype=np.int64)


# ================================================================ evaluation

def topk_hits(scores: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Per-row hit flags; ties rank the lower class id first."""
    ranked = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return (ranked == labels[:, None]).any(axis=1)


@dataclass
class EvalResult:
    top1: float
    top5: float
    scores: np.ndarray  # [videos, classes] averaged softmax
    labels: np.ndarray

    @property
    def predictions(self) -> np.ndarray:
        return np.argsort(-self.scores, axis=1, kind="stable")[:, 0]


def video_scores(model: Model, samples, dtype) -> np.ndarray:
    """Average softmax over the test clips of one video, one batch per video."""
    counts = np.array([c for c, _, _ in samples], dtype=np.float64)
    rgb = _stack([r for _, r, _ in samples], dtype)
    res = _stack([s for _, _, s in samples], dtype)
    probs = ops.softmax(model(rgb=rgb, res=res).data.astype(np.float64))
    if len(samples) == 1:
        return probs[0]
    return (counts[:, None] * probs).sum(axis=0) / counts.sum()


def evaluate(model: Model, dataset: VideoDataset, n_clips: int = 10, num_workers: int = 2) -> EvalResult:
    """Video-level top-1/top-5 from ``n_clips`` uniformly spaced center-cropped clips per video.

    Each video is its own batch and scores are stored by index position, so
    the result does not depend on video order or worker scheduling.
    """
    was_training = model.training
    model.eval()
    dtype = _model_dtype(model)
    n = len(dataset)
    scores = np.zeros((n, model.config.num_classes))
    try:
        with no_grad(), ThreadPoolExecutor(max(1, num_workers)) as pool:
            futures = collections.deque()
            nxt = 0
            for i in range(n):
                while nxt < n and nxt < i + 2 * max(1, num_workers):
                    futures.append(pool.submit(dataset.test_samples, nxt, n_clips))
                    nxt += 1
                scores[i] = video_scores(model, futures.popleft().result(), dtype)
    finally:
        model.train(was_training)
    labels = dataset.labels
    k5 = min(5, scores.shape[1])
    return EvalResult(float(topk_hits(scores, labels, 1).mean()), float(topk_hits(scores, labels, k5).mean()),
                      scores, labels)


# ================================================================ training

@dataclass
class EpochRecord:
    epoch: int  # 1-based
    lr: float
    loss: float
    train_top1: float
    top1: float
    top5: float
    seconds: float
    evaluated: bool = False

    def log_line(self) -> str:
        return f"{self.epoch}\t{self.lr:.6g}\t{self.loss:.6f}\t{self.top1:.4f}\t{self.top5:.4f}\t{self.seconds:.2f}"


@dataclass
class TrainResult:
    history: List[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def best_top1(self) -> float:
        return max((r.top1 for r in self.history if r.evaluated), default=0.0)

    @property
    def final(self) -> Optional[EpochRecord]:
        return self.history[-1] if self.history else None


LOG_NAME = "epochs.log"
LAST_CKPT = "last.ckpt"
FINAL_CKPT = "final.ckpt"


def train_epoch(model: Model, optimizer: SGD, dataset: VideoDataset, config: TrainConfig, epoch: int,
                pool: ThreadPoolExecutor) -> Tuple[float, float]:
    """One pass over ``dataset``; returns (mean loss, running train top-1)."""
    model.train()
    lr = config.lr_at(epoch)
    dtype = _model_dtype(model)
    total = hits = 0
    loss_sum = 0.0
    for b, (rgb, res, labels) in enumerate(iter_train_batches(dataset, config, epoch, pool, dtype)):
        logits = model(rgb=rgb, res=res)
        loss = ops.softmax_cross_entropy(logits, labels)
        value = loss.data.item()
        if not math.isfinite(value):
            raise NumericalError(f"epoch {epoch + 1}, batch {b}: loss is {value} at lr {lr:g}; "
                                 f"the learning rate is probably too high")
        model.zero_grad()
        loss.backward()
        optimizer.step(lr)
        n = len(labels)
        loss_sum += value * n
        total += n
        hits += int(topk_hits(logits.data, labels, 1).sum())
    return loss_sum / total, hits / total


def _check_modalities(model: Model, dataset: VideoDataset) -> None:
    if tuple(model.config.modalities) != tuple(dataset.network.modalities):
        raise ValueError(f"model modalities {model.config.modalities} do not match dataset "
                         f"modalities {dataset.network.modalities}")


def train(model: Model, dataset: VideoDataset, config: TrainConfig, val_dataset: Optional[VideoDataset] = None,
          run_dir=None, optimizer: Optional[SGD] = None, start_epoch: int = 0,
          history: Optional[List[EpochRecord]] = None, on_epoch=None) -> TrainResult:
    """Train for ``config.epochs`` epochs (starting at ``start_epoch``, 0-based).

    With ``run_dir`` set, appends one line per epoch to ``epochs.log`` and
    rewrites ``last.ckpt`` after every epoch; ``final.ckpt`` is written at
    the end. Log columns: epoch, lr, loss, top1, top5, seconds; top-1/top-5
    are 10-clip validation accuracies on evaluated epochs, otherwise the
    running training-batch top-1 (top-5 then reported as NaN).
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    _check_modalities(model, dataset)
    if val_dataset is not None:
        _check_modalities(model, val_dataset)
    optimizer = optimizer or SGD(model.named_parameters(), config.momentum, config.weight_decay)
    result = TrainResult(list(history or []))
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    workers = fp.env_workers(config.num_workers)
    with ThreadPoolExecutor(workers) as pool:
        for epoch in range(start_epoch, config.epochs):
            t0 = time.perf_counter()
            loss, train_top1 = train_epoch(model, optimizer, dataset, config, epoch, pool)
            evaluated = val_dataset is not None and ((epoch + 1) % config.eval_every == 0
                                                     or epoch + 1 == config.epochs)
            if evaluated:
                ev = evaluate(model, val_dataset, config.test_clips, workers)
                top1, top5 = ev.top1, ev.top5
            else:
                top1, top5 = train_top1, float("nan")
            rec = EpochRecord(epoch + 1, config.lr_at(epoch), loss, train_top1, top1, top5,
                              time.perf_counter() - t0, evaluated)
            result.history.append(rec)
            stop = evaluated and config.early_stop_top1 > 0 and top1 >= config.early_stop_top1
            if run_dir is not None:
                with open(run_dir / LOG_NAME, "a", encoding="utf-8") as fh:
                    fh.write(rec.log_line() + "\n")
                meta = {"epoch": epoch + 1, "seed": config.seed, "stopped": stop,
                        "history": [asdict(r) for r in result.history]}
                save_checkpoint(model, run_dir / LAST_CKPT, optimizer.state_dict(), meta)
            if on_epoch is not None:
                on_epoch(rec)
            if stop:
                result.stopped_early = True
                break
    if run_dir is not None:
        meta = {"epoch": result.final.epoch if result.final else start_epoch, "seed": config.seed,
                "stopped": result.stopped_early, "history": [asdict(r) for r in result.history]}
        save_checkpoint(model, run_dir / FINAL_CKPT, optimizer.state_dict(), meta)
    return result


def resume(model: Model, ckpt_path, dataset: VideoDataset, config: TrainConfig,
           val_dataset: Optional[VideoDataset] = None, run_dir=None, on_epoch=None) -> TrainResult:
    """Continue a run from an epoch checkpoint (model, BN statistics, momentum buffers, epoch counter)."""
    ckpt = read_checkpoint(ckpt_path)
    restore_into(model, ckpt)
    optimizer = SGD(model.named_parameters(), config.momentum, config.weight_decay)
    optimizer.load_state_dict(ckpt.optimizer)
    history = [EpochRecord(**r) for r in ckpt.meta.get("history", [])]
    if ckpt.meta.get("stopped"):
        return TrainResult(history, True)
    return train(model, dataset, config, val_dataset, run_dir, optimizer, int(ckpt.meta.get("epoch", 0)),
                 history, on_epoch)


# ================================================================ toy dataset

DIRECTIONS = {
    "up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1),
    "up_left": (-1, -1), "up_right": (-1, 1), "down_left": (1, -1), "down_right": (1, 1),
}
APPEARANCE_POLICIES = ("shared", "per_class")


@dataclass(frozen=True)
class ToyDatasetSpec:
    """A square sliding across a toroidal canvas; the class is the direction of motion.

    Start positions are uniform and motion wraps around the borders, so
    under the ``shared`` appearance policy a single frame is independent of
    the class. ``per_class`` ties the shape colour to the label instead.
    """
    num_classes: int = 4
    num_videos: int = 200
    frames: int = 16
    image_size: int = 64
    shape_size: int = 12
    speed: int = 2
    appearance: str = "shared"
    fps: float = 15.0

    def __post_init__(self):
        if not 2 <= self.num_classes <= len(DIRECTIONS):
            raise ValueError(f"num_classes must be in [2, {len(DIRECTIONS)}]")
        if self.speed < 1:
            raise ValueError(f"speed must be >= 1 pixel/frame (got {self.speed}); residual frames would vanish")
        if self.frames < 2 or self.num_videos < 1:
            raise ValueError("need frames >= 2 and num_videos >= 1")
        if not 1 <= self.shape_size < self.image_size:
            raise ValueError("shape_size must be in [1, image_size)")
        if self.appearance not in APPEARANCE_POLICIES:
            raise ValueError(f"appearance must be one of {APPEARANCE_POLICIES}")

    @property
    def class_names(self) -> List[str]:
        return list(DIRECTIONS)[:self.num_classes]


@dataclass(frozen=True)
class ToyVideo:
    path: str
    label: int
    y0: int
    x0: int
    background: Tuple[float, float, float]
    color: Tuple[float, float, float]


def toy_footprint(spec: ToyDatasetSpec, video: ToyVideo, t: int) -> np.ndarray:
    """Boolean ``[S, S]`` mask of the pixels covered by the shape at frame ``t``."""
    dy, dx = DIRECTIONS[spec.class_names[video.label]]
    S, k = spec.image_size, spec.shape_size
    y = (video.y0 + dy * spec.speed * t) % S
    x = (video.x0 + dx * spec.speed * t) % S
    mask = np.zeros((S, S), dtype=bool)
    rows = (y + np.arange(k)) % S
    cols = (x + np.arange(k)) % S
    mask[np.ix_(rows, cols)] = True
    return mask


def render_toy(spec: ToyDatasetSpec, video: ToyVideo) -> np.ndarray:
    S = spec.image_size
    out = np.empty((spec.frames, S, S, 3), dtype=np.float32)
    for t in range(spec.frames):
        out[t] = video.background
        out[t][toy_footprint(spec, video, t)] = video.color
    return out


def toy_videos(spec: ToyDatasetSpec, seed: int) -> List[ToyVideo]:
    """Video parameters; labels cycle through the classes so they are balanced."""
    out = []
    palette = np.random.default_rng([seed, 7919]).uniform(0.6, 1.0, size=(spec.num_classes, 3))
    for k in range(spec.num_videos):
        rng = np.random.default_rng([seed, k])
        label = k % spec.num_classes
        bg = rng.uniform(0.0, 0.4, size=3)
        color = palette[label] if spec.appearance == "per_class" else rng.uniform(0.6, 1.0, size=3)
        y0, x0 = (int(v) for v in rng.integers(spec.image_size, size=2))
        # quantize to the 8-bit values the PNGs will hold
        bg, color = (tuple(float(np.rint(c * 255) / 255) for c in v) for v in (bg, color))
        out.append(ToyVideo(f"{spec.class_names[label]}/v{k:05d}", label, y0, x0, bg, color))
    return out


def generate_toy_dataset(spec: ToyDatasetSpec, seed: int, root) -> DatasetIndex:
    """Render ``spec`` under ``root`` as ``<class>/<video>/img_00001.png`` plus ``index.txt``
    and ``toy.json`` (per-video parameters). Deterministic given ``seed``."""
    root = Path(root)
    videos = toy_videos(spec, seed)
    try:
        root.mkdir(parents=True, exist_ok=True)
        for v in videos:
            fp.write_frames(root / v.path, render_toy(spec, v))
    except OSError as exc:
        raise OSError(f"{root}: could not write toy dataset ({exc})") from exc
    index = DatasetIndex(root, [IndexEntry(v.path, v.label, spec.frames, spec.fps) for v in videos],
                         spec.class_names)
    fp.write_index(index, root / "index.txt")
    meta = {"spec": asdict(spec), "seed": seed, "videos": [asdict(v) for v in videos]}
    (root / "toy.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")
    return fp.read_index(root / "index.txt")


def read_toy_metadata(root) -> Tuple[ToyDatasetSpec, List[ToyVideo]]:
    meta = json.loads((Path(root) / "toy.json").read_text(encoding="utf-8"))
    spec = ToyDatasetSpec(**meta["spec"])
    videos = [ToyVideo(v["path"], v["label"], v["y0"], v["x0"], tuple(v["background"]), tuple(v["color"]))
              for v in meta["videos"]]
    return spec, videos


def generate_toy_splits(root, seed: int = 0, train_videos: int = 200, val_videos: int = 80,
                        spec: Optional[ToyDatasetSpec] = None) -> Tuple[DatasetIndex, DatasetIndex]:
    """``root/train`` and ``root/val`` drawn from disjoint seed streams."""
    spec = spec or ToyDatasetSpec()
    base = asdict(spec)
    train_idx = generate_toy_dataset(ToyDatasetSpec(**{**base, "num_videos": train_videos}), 2 * seed,
                                     Path(root) / "train")
    val_idx = generate_toy_dataset(ToyDatasetSpec(**{**base, "num_videos": val_videos}), 2 * seed + 1,
                                   Path(root) / "val")
    return train_idx, val_idx


# ---------------------------------------------------------------- toy presets

TOY_SCALES = (1.0, 0.875)


def toy_network(modality: str = "residual", clip_len: int = 16, num_classes: int = 4, **overrides) -> NetworkConfig:
    """Scaled-down geometry for the toy task: T=16, crop 56, widths (16, 32, 64, 128)."""
    kwargs = dict(modalities=(modality,), clip_len=clip_len, crop=56, stage_channels=(16, 32, 64, 128),
                  conv1_channels=16, num_classes=num_classes, fc1_units=256)
    kwargs.update(overrides)
    return NetworkConfig(**kwargs)


def toy_data_config(train_root="", val_root="") -> DataConfig:
    return DataConfig(str(train_root), str(val_root), short_side=64, scale_choices=TOY_SCALES)
