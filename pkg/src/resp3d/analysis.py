"""Analytic cost model, a nested-loop instrumented reference executor, and
the finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .network import STAGE_NAMES, Model, NetworkConfig
from .p3d import P3DBlock, P3DBlockConfig, block_cost_terms, block_output_shape, count_block_cost
from .tensor import Tensor, precision

# ================================================================ cost model

FLOP_CONVENTIONS = {"madd": 1, "2flop": 2}


@dataclass
class CostRow:
    name: str
    madds: int
    params: int
    shape: Tuple[int, ...]


@dataclass
class CostReport:
    rows: List[CostRow]
    batch: int = 1
    note: str = ""

    @property
    def total_madds(self) -> int:
        return sum(r.madds for r in self.rows)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    def gflops(self, convention: str = "madd") -> float:
        return self.total_madds * FLOP_CONVENTIONS[convention] / 1e9

    def to_text(self) -> str:
        w = max(len(r.name) for r in self.rows)
        lines = [f"{'layer':<{w}}  {'madds':>16}  {'params':>12}  shape"]
        for r in self.rows:
            lines.append(f"{r.name:<{w}}  {r.madds:>16,}  {r.params:>12,}  {'x'.join(map(str, r.shape))}")
        lines.append(f"{'total':<{w}}  {self.total_madds:>16,}  {self.total_params:>12,}")
        lines.append(f"GFLOPs (1 madd = 1 FLOP): {self.gflops('madd'):.2f}")
        lines.append(f"GFLOPs (1 madd = 2 FLOPs): {self.gflops('2flop'):.2f}")
        if self.note:
            lines.append(self.note)
        return "\n".join(lines)

    def to_tsv(self) -> str:
        return "\n".join(f"{r.name}\t{r.madds}\t{r.params}\t{'x'.join(map(str, r.shape))}" for r in self.rows) + "\n"


def _stem_terms(cin: int, c1: int, T: int, S: int, use_norm: bool) -> List[Tuple[str, int, int]]:
    S1 = (S + 6 - 7) // 2 + 1
    P = T * S1 * S1
    rows = [("spatial", c1 * cin * 49 * P, c1 * cin * 49 + c1)]
    if use_norm:
        rows.append(("spatial.norm", c1 * P, 2 * c1))
    rows.append(("spatial.relu", c1 * P, 0))
    rows.append(("temporal", c1 * c1 * 3 * P, c1 * c1 * 3 + c1))
    if use_norm:
        rows.append(("temporal.norm", c1 * P, 2 * c1))
    rows.append(("temporal.relu", c1 * P, 0))
    return rows


def profile(model_or_config: Union[Model, NetworkConfig], batch: int = 1,
            clip_len: Optional[int] = None, crop: Optional[int] = None, detail: bool = False) -> CostReport:
    """Closed-form madds/params for one forward pass of ``batch`` clips per modality."""
    c = model_or_config.config if isinstance(model_or_config, Model) else model_or_config
    T = clip_len or c.clip_len
    S = crop or c.crop
    rows: List[CostRow] = []
    c1 = c.stem_channels
    S1 = (S + 6 - 7) // 2 + 1
    for m in c.modalities:
        terms = _stem_terms(3, c1, T, S, c.use_norm)
        if detail:
            rows += [CostRow(f"conv1_{m}.{n}", batch * a, p, (c1, T, S1, S1)) for n, a, p in terms]
        else:
            rows.append(CostRow(f"conv1_{m}", batch * sum(t[1] for t in terms), sum(t[2] for t in terms),
                                (c1, T, S1, S1)))
    shape = (c1 * len(c.modalities), T, S1, S1)
    for name, cfg in c.block_configs():
        out = block_output_shape(cfg, shape)
        if detail:
            rows += [CostRow(f"{name}.{n}", batch * a, p, out) for n, a, p in block_cost_terms(cfg, shape)]
        else:
            madds, params = count_block_cost(cfg, shape)
            rows.append(CostRow(name, batch * madds, params, out))
        shape = out
    C, T5, H5, W5 = shape
    rows.append(CostRow("pool", batch * C * T5 * H5 * W5, 0, (C, 1, 1, 1)))
    rows.append(CostRow("fc1", batch * (C * c.fc1_units + c.fc1_units), C * c.fc1_units + c.fc1_units, (c.fc1_units,)))
    rows.append(CostRow("fc2", batch * c.fc1_units * c.num_classes, c.fc1_units * c.num_classes + c.num_classes,
                        (c.num_classes,)))
    return CostReport(rows, batch)


def network_param_count(config: NetworkConfig) -> int:
    return profile(config).total_params


def param_count_delta(config_a, config_b) -> int:
    """Closed-form ``params(a) - params(b)`` for two block configs or two network configs."""
    def count(cfg):
        if isinstance(cfg, P3DBlockConfig):
            return count_block_cost(cfg, (cfg.in_channels, 1, 1, 1))[1]
        return network_param_count(cfg)
    return count(config_a) - count(config_b)


@dataclass
class FlopStudy:
    """GFLOPs of the paper-comparison configs under every (convention, restore width) pair."""
    table: Dict[Tuple[str, int], Dict[str, float]]
    target: float
    chosen: Tuple[str, int]

    def to_text(self) -> str:
        lines = [f"{'convention':<10} {'expand':>6} {'p3d-2stream':>12} {'p3d-1stream':>12} {'full3d':>10} {'ratio':>6}"]
        for (conv, exp), v in self.table.items():
            mark = "  <- closest to target" if (conv, exp) == self.chosen else ""
            lines.append(f"{conv:<10} {exp:>6} {v['pseudo3d']:>12.2f} {v['single']:>12.2f} {v['full3d']:>10.2f} "
                         f"{v['full3d'] / v['pseudo3d']:>6.2f}{mark}")
        return "\n".join(lines)


def flop_study(base: Optional[NetworkConfig] = None, target: float = 30.0) -> FlopStudy:
    base = base or NetworkConfig()
    table = {}
    for conv in FLOP_CONVENTIONS:
        for exp in (1, 4):
            p3d = replace(base, conv_backend="pseudo3d", restore_expansion=exp, modalities=("rgb", "residual"))
            table[(conv, exp)] = {
                "pseudo3d": profile(p3d).gflops(conv),
                "single": profile(replace(p3d, modalities=("residual",))).gflops(conv),
                "full3d": profile(replace(p3d, conv_backend="full3d")).gflops(conv),
            }
    chosen = min(table, key=lambda k: abs(table[k]["pseudo3d"] - target))
    return FlopStudy(table, target, chosen)


# ================================================================ instrumented reference executor

class Instrumented:
    """Direct nested-loop forward pass that increments ``madds`` inside each inner loop.

    Independent of the im2col/BLAS path: used as the oracle for both the
    cost model and the convolution kernels. Only practical for tiny shapes.
    """

    def __init__(self):
        self.madds = 0

    # -- convolutions
    def conv(self, x, w, b, stride=1, padding=(0, 0, 0)):
        x = np.asarray(x, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        N, Cin, T, H, W = x.shape
        Cout, _, kt, kh, kw = w.shape
        pt, ph, pw = padding
        To = T + 2 * pt - kt + 1
        Ho = (H + 2 * ph - kh) // stride + 1
        Wo = (W + 2 * pw - kw) // stride + 1
        out = np.zeros((N, Cout, To, Ho, Wo))
        for n in range(N):
            for co in range(Cout):
                for t in range(To):
                    for i in range(Ho):
                        for j in range(Wo):
                            acc = 0.0 if b is None else float(b[co])
                            for ci in range(Cin):
                                for a in range(kt):
                                    ti = t + a - pt
                                    for bb in range(kh):
                                        hi = i * stride + bb - ph
                                        for d in range(kw):
                                            wj = j * stride + d - pw
                                            self.madds += 1
                                            if 0 <= ti < T and 0 <= hi < H and 0 <= wj < W:
                                                acc += w[co, ci, a, bb, d] * x[n, ci, ti, hi, wj]
                            out[n, co, t, i, j] = acc
        return out

    def pointwise(self, x, w, b, stride=1):
        w = np.asarray(w, dtype=np.float64)
        return self.conv(x, w.reshape(w.shape + (1, 1, 1)), b, stride, (0, 0, 0))

    # -- elementwise and reductions
    def _each(self, x, fn):
        x = np.asarray(x, dtype=np.float64)
        out = np.empty_like(x)
        flat_in, flat_out = x.reshape(-1), out.reshape(-1)
        for k in range(flat_in.size):
            self.madds += 1
            flat_out[k] = fn(flat_in[k])
        return out

    def relu(self, x):
        return self._each(x, lambda v: v if v > 0 else 0.0)

    def sigmoid(self, x):
        return self._each(x, lambda v: 1.0 / (1.0 + np.exp(-v)))

    def add(self, a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        out = np.empty_like(a)
        fa, fb, fo = a.reshape(-1), b.reshape(-1), out.reshape(-1)
        for k in range(fa.size):
            self.madds += 1
            fo[k] = fa[k] + fb[k]
        return out

    def batch_norm(self, x, bn):
        x = np.asarray(x, dtype=np.float64)
        N, C = x.shape[:2]
        out = np.empty_like(x)
        for c in range(C):
            vals = x[:, c].reshape(-1)
            if bn.training:
                mean = sum(vals) / vals.size
                var = sum((v - mean) ** 2 for v in vals) / vals.size
            else:
                mean, var = bn.running_mean[c], bn.running_var[c]
            scale = float(bn.gamma.data[c]) / np.sqrt(var + bn.eps)
            shift = float(bn.beta.data[c]) - mean * scale
            o = out[:, c].reshape(-1)
            for k in range(vals.size):
                self.madds += 1
                o[k] = vals[k] * scale + shift
            out[:, c] = o.reshape(out[:, c].shape)
        return out

    def feature_residual(self, f):
        f = np.asarray(f, dtype=np.float64)
        N, C, T, H, W = f.shape
        out = np.zeros_like(f)
        for n in range(N):
            for c in range(C):
                for t in range(T):
                    for i in range(H):
                        for j in range(W):
                            self.madds += 1
                            if t < T - 1:
                                out[n, c, t, i, j] = abs(f[n, c, t + 1, i, j] - f[n, c, t, i, j])
        return out

    def pool(self, x):
        x = np.asarray(x, dtype=np.float64)
        N, C = x.shape[:2]
        out = np.zeros((N, C))
        for n in range(N):
            for c in range(C):
                acc = 0.0
                vals = x[n, c].reshape(-1)
                for k in range(vals.size):
                    self.madds += 1
                    acc += vals[k]
                out[n, c] = acc / vals.size
        return out

    def linear(self, x, w, b):
        x = np.asarray(x, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        N, Cin = x.shape
        out = np.zeros((N, w.shape[0]))
        for n in range(N):
            for o in range(w.shape[0]):
                acc = float(b[o])
                for i in range(Cin):
                    self.madds += 1
                    acc += w[o, i] * x[n, i]
                out[n, o] = acc
        return out

    def apply_attention(self, f, mask):
        f = np.asarray(f, dtype=np.float64)
        out = np.empty_like(f)
        N, C = f.shape[:2]
        for n in range(N):
            for c in range(C):
                m = mask[n, c]
                src, dst = f[n, c].reshape(-1), out[n, c].reshape(-1)
                for k in range(src.size):
                    self.madds += 1
                    dst[k] = src[k] * m + src[k]
                out[n, c] = dst.reshape(out[n, c].shape)
        return out

    # -- composite units mirroring the modules
    def unit(self, x, unit):
        conv = unit.conv
        if hasattr(conv, "kernel"):
            y = self.conv(x, conv.weight.data, conv.bias.data, conv.stride, conv.padding)
        else:
            y = self.pointwise(x, conv.weight.data, conv.bias.data, conv.stride)
        if unit.norm is not None:
            y = self.batch_norm(y, unit.norm)
        return self.relu(y) if unit.act else y

    def block(self, x, block: P3DBlock):
        c = block.config
        r = self.unit(x, block.reduce)
        if c.backend == "full3d":
            f = self.unit(r, block.conv3d)
        else:
            fs = self.unit(r, block.spatial)
            fm = self.unit(r, block.temporal)
            parts = [fs, fm]
            if c.enable_feature_residual:
                parts.append(self.feature_residual(fm))
            f = np.concatenate(parts, axis=1)
            if c.enable_attention:
                pooled = self.pool(f)
                mask = self.sigmoid(self.linear(pooled, block.attention.weight.data, block.attention.bias.data))
                f = self.apply_attention(f, mask)
        y = self.unit(f, block.restore)
        skip = self.unit(x, block.shortcut) if c.needs_projection else np.asarray(x, dtype=np.float64)
        return self.relu(self.add(y, skip))

    def model(self, model: Model, rgb=None, res=None) -> np.ndarray:
        streams = []
        if model.conv1_rgb is not None:
            streams.append(self.unit(self.unit(rgb, model.conv1_rgb.spatial), model.conv1_rgb.temporal))
        if model.conv1_res is not None:
            streams.append(self.unit(self.unit(res, model.conv1_res.spatial), model.conv1_res.temporal))
        x = np.concatenate(streams, axis=1)
        for stage in STAGE_NAMES:
            for block in getattr(model, stage):
                x = self.block(x, block)
        x = self.pool(x)
        x = self.relu(self.linear(x, model.fc1.weight.data, model.fc1.bias.data))
        return self.linear(x, model.fc2.weight.data, model.fc2.bias.data)


def instrumented_madds(model: Model, rgb=None, res=None) -> Tuple[np.ndarray, int]:
    counter = Instrumented()
    logits = counter.model(model, rgb, res)
    return logits, counter.madds


# ================================================================ gradient checking

@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    argmax: Tuple[int, ...]
    checked: int


@dataclass
class GradCheckReport:
    checks: List[ParamCheck]
    eps: float
    precision: str
    threshold: float = 1e-4

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.threshold

    def to_text(self) -> str:
        lines = [f"{c.name:<40} max rel err {c.max_rel_err:.3e} at {c.argmax} ({c.checked} coords)" for c in self.checks]
        lines.append(f"overall {self.max_rel_err:.3e} (threshold {self.threshold:g}, eps {self.eps:g}, {self.precision}): "
                     f"{'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps exactly-zero gradients from dividing by zero."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(loss_fn: Callable[[], Tensor], tensors: Sequence[Tuple[str, Tensor]], eps: float = 1e-5,
               seed: int = 0, max_coords: int = 200, threshold: float = 1e-4, floor: float = 1e-6,
               scale_floor: float = 1e-4) -> GradCheckReport:
    """Compare backprop gradients with central differences.

    ``loss_fn`` rebuilds the scalar loss from the current tensor values.
    Each tensor gets ``min(size, max_coords)`` coordinates checked, chosen
    by ``seed``. The error denominator never drops below
    ``max(floor, scale_floor * max|grad|)``: coordinates whose true gradient
    is zero (a conv bias feeding batch norm) are then compared against the
    overall gradient scale instead of against finite-difference roundoff.
    """
    for _, t in tensors:
        if t.dtype != np.float64:
            raise ValueError("grad_check needs float64 tensors")
        t.grad = None
    loss_fn().backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for name, t in tensors}
    scale = max((float(np.abs(g).max()) for g in analytic.values() if g.size), default=0.0)
    floor = max(floor, scale_floor * scale)
    rng = np.random.default_rng(seed)
    checks = []
    for name, t in tensors:
        flat = t.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else np.sort(rng.choice(n, size=max_coords, replace=False))
        worst, where = 0.0, 0
        for k in coords:
            orig = flat[k]
            flat[k] = orig + eps
            fp = loss_fn().data.item()
            flat[k] = orig - eps
            fm = loss_fn().data.item()
            flat[k] = orig
            numeric = (fp - fm) / (2 * eps)
            err = relative_error(float(analytic[name].reshape(-1)[k]), numeric, floor)
            if err > worst:
                worst, where = err, int(k)
        checks.append(ParamCheck(name, worst, tuple(int(i) for i in np.unravel_index(where, t.shape)), len(coords)))
        t.grad = None
    return GradCheckReport(checks, eps, "float64", threshold)


def kink_safe_normal(rng: np.random.Generator, shape, margin: float = 1e-2) -> np.ndarray:
    """Standard normal samples pushed at least ``margin`` away from 0."""
    x = rng.standard_normal(shape)
    return np.where(x >= 0, x + margin, x - margin)


def _module_loss(module, inputs: Sequence[Tensor], rng: np.random.Generator):
    with precision("float64"):
        out = module(*inputs)
    weights = Tensor(rng.standard_normal(out.shape), dtype=np.float64)
    return lambda: (module(*inputs) * weights).sum()


def grad_check_module(module, inputs: Sequence[Tensor], seed: int = 0, **kwargs) -> GradCheckReport:
    """Check every parameter of ``module`` and every input with ``requires_grad``."""
    rng = np.random.default_rng(seed + 1)
    loss = _module_loss(module, inputs, rng)
    tensors = list(module.named_parameters()) + [(f"input{i}", x) for i, x in enumerate(inputs) if x.requires_grad]
    return grad_check(loss, tensors, seed=seed, **kwargs)


def tiny_block(seed: int = 0, enable_attention: bool = True, enable_feature_residual: bool = True,
               backend: str = "pseudo3d", stride: int = 1, in_channels: int = 3, use_norm: bool = True):
    """The gradient-check configuration: C'=2, T=4, H=W=5, random nonzero attention weights."""
    rng = np.random.default_rng(seed)
    with precision("float64"):
        cfg = P3DBlockConfig(in_channels, 2, 4, stride, enable_attention, enable_feature_residual, use_norm, backend)
        block = P3DBlock(cfg, rng, "tiny")
        if cfg.has_attention:
            block.attention.weight.data = rng.standard_normal(block.attention.weight.shape) * 0.5
            block.attention.bias.data = rng.standard_normal(block.attention.bias.shape) * 0.5
        for name, p in block.named_parameters():
            if p.data.ndim == 1 and "gamma" not in name:
                p.data = rng.standard_normal(p.shape) * 0.1
        x = Tensor(kink_safe_normal(rng, (2, in_channels, 4, 5, 5)), requires_grad=True, dtype=np.float64)
    return block, x


def grad_check_ops(seed: int = 0, eps: float = 1e-5) -> Dict[str, GradCheckReport]:
    """Gradient check of every differentiable primitive on small random inputs."""
    from .p3d import apply_attention, attention_mask, feature_residual
    from .tensor import ops

    rng = np.random.default_rng(seed)

    def leaf(shape, margin=1e-2):
        return Tensor(kink_safe_normal(rng, shape, margin), requires_grad=True, dtype=np.float64)

    x5 = leaf((2, 3, 4, 5, 5))
    reports = {}

    def check(name, fn, tensors):
        out_shape = fn().shape
        weights = rng.standard_normal(out_shape)
        reports[name] = grad_check(lambda: (fn() * Tensor(weights, dtype=np.float64)).sum(),
                                   tensors, eps=eps, seed=seed)

    ws, bs = leaf((2, 3, 1, 3, 3)), leaf((2,))
    check("conv_spatial", lambda: ops.conv_spatial(x5, ws, bs, 2, 1), [("x", x5), ("w", ws), ("b", bs)])
    wt, bt = leaf((2, 3, 3, 1, 1)), leaf((2,))
    check("conv_temporal", lambda: ops.conv_temporal(x5, wt, bt, 1), [("x", x5), ("w", wt), ("b", bt)])
    wp, bp = leaf((4, 3)), leaf((4,))
    check("conv_pointwise", lambda: ops.conv_pointwise(x5, wp, bp, 2), [("x", x5), ("w", wp), ("b", bp)])
    w3, b3 = leaf((2, 3, 3, 3, 3)), leaf((2,))
    check("conv3d", lambda: ops.conv3d(x5, w3, b3, 1, (1, 1, 1)), [("x", x5), ("w", w3), ("b", b3)])
    a, b = leaf((2, 3, 4, 1, 1)), leaf((2, 3, 4, 5, 5))
    check("add", lambda: ops.add(a, b), [("a", a), ("b", b)])
    check("sub", lambda: ops.sub(b, a), [("a", a), ("b", b)])
    check("mul", lambda: ops.mul(a, b), [("a", a), ("b", b)])
    check("abs", lambda: ops.abs_(b), [("x", b)])
    check("relu", lambda: ops.relu(b), [("x", b)])
    check("sigmoid", lambda: ops.sigmoid(b), [("x", b)])
    check("global_avg_pool", lambda: ops.global_avg_pool(x5), [("x", x5)])
    p1, p2 = leaf((2, 2, 4, 5, 5)), leaf((2, 1, 4, 5, 5))
    check("concat_channels", lambda: ops.concat_channels([p1, p2]), [("p1", p1), ("p2", p2)])
    xl, wl, bl = leaf((3, 4)), leaf((5, 4)), leaf((5,))
    check("linear", lambda: ops.linear(xl, wl, bl), [("x", xl), ("w", wl), ("b", bl)])
    g, be = leaf((3,)), leaf((3,))
    rm, rv = np.zeros(3), np.ones(3)
    check("batch_norm", lambda: ops.batch_norm(x5, g, be, rm.copy(), rv.copy(), True), [("x", x5), ("gamma", g), ("beta", be)])
    rv_eval = rng.uniform(0.5, 2.0, 3)
    check("batch_norm_eval", lambda: ops.batch_norm(x5, g, be, rm.copy(), rv_eval, False),
          [("x", x5), ("gamma", g), ("beta", be)])
    logits = leaf((4, 6))
    labels = rng.integers(0, 6, 4)
    reports["softmax_cross_entropy"] = grad_check(lambda: ops.softmax_cross_entropy(logits, labels),
                                                  [("logits", logits)], eps=eps, seed=seed)
    # feature residual: keep adjacent time steps well separated so |.| never crosses its kink
    base = np.cumsum(np.abs(kink_safe_normal(rng, (2, 3, 4, 2, 2), 0.1)), axis=2) * rng.choice([-1, 1], (2, 3, 1, 2, 2))
    fm = Tensor(base, requires_grad=True, dtype=np.float64)
    check("feature_residual", lambda: feature_residual(fm), [("fm", fm)])
    f = leaf((2, 6, 3, 2, 2))
    wa, ba = leaf((6, 6)), leaf((6,))
    check("attention_mask", lambda: attention_mask(f, wa, ba), [("f", f), ("W", wa), ("b", ba)])
    m = Tensor(rng.uniform(0.1, 0.9, (2, 6, 1, 1, 1)), requires_grad=True, dtype=np.float64)
    check("apply_attention", lambda: apply_attention(f, m), [("f", f), ("mask", m)])
    return reports


def tiny_network_config(**overrides) -> NetworkConfig:
    """Smallest full network: one block per stage, 2 channels, T=4, crop 16."""
    kwargs = dict(clip_len=4, crop=16, stage_blocks=(1, 1, 1, 1), stage_channels=(2, 2, 2, 2), conv1_channels=2,
                  num_classes=3, fc1_units=4)
    kwargs.update(overrides)
    return NetworkConfig(**kwargs)


def grad_check_model(seed: int = 0, max_coords: int = 20, **kwargs) -> GradCheckReport:
    """Finite-difference check of every parameter of the tiny two-stream network."""
    from .network import build_model

    cfg = tiny_network_config()
    rng = np.random.default_rng(seed)
    with precision("float64"):
        model = build_model(cfg, seed)
        for block in model.modules():
            if isinstance(block, P3DBlock) and block.config.has_attention:
                block.attention.weight.data = rng.standard_normal(block.attention.weight.shape) * 0.5
        shape = (2, 3, cfg.clip_len, cfg.crop, cfg.crop)
        rgb = Tensor(kink_safe_normal(rng, shape), dtype=np.float64)
        res = Tensor(np.abs(kink_safe_normal(rng, shape)), dtype=np.float64)
        weights = Tensor(rng.standard_normal((2, cfg.num_classes)), dtype=np.float64)
    return grad_check(lambda: (model(rgb=rgb, res=res) * weights).sum(), list(model.named_parameters()),
                      seed=seed, max_coords=max_coords, **kwargs)
