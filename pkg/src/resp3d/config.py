"""Run configuration: one flat ``key = value`` file covering network, training and data keys."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from . import textconfig
from .network import NetworkConfig
from .textconfig import ConfigError
from .trainer import DataConfig, TrainConfig

SECTIONS = (("network", NetworkConfig), ("train", TrainConfig), ("data", DataConfig))
RUN_KEYS = ("output_dir",)
# keys that do not change results and therefore stay out of the run hash
UNHASHED = {"output_dir", "num_workers", "seed"}


def _names(cls) -> list:
    return [f.name for f in dataclasses.fields(cls)]


@dataclass(frozen=True)
class RunConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output_dir: str = "runs"

    @classmethod
    def from_pairs(cls, pairs: dict, base_dir=None) -> "RunConfig":
        known = set(RUN_KEYS)
        for _, sc in SECTIONS:
            known.update(_names(sc))
        unknown = sorted(set(pairs) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        parts = {}
        for name, sc in SECTIONS:
            parts[name] = textconfig.build(sc, {k: v for k, v in pairs.items() if k in _names(sc)})
        output_dir = pairs.get("output_dir", "runs").strip() or "runs"
        cfg = cls(parts["network"], parts["train"], parts["data"], output_dir)
        return cfg.resolve_paths(base_dir) if base_dir is not None else cfg

    @classmethod
    def from_text(cls, text: str, source: str = "<config>", base_dir=None) -> "RunConfig":
        return cls.from_pairs(textconfig.parse_pairs(text, source), base_dir)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        return cls.from_text(text, str(path), path.parent)

    def resolve_paths(self, base_dir) -> "RunConfig":
        """Make relative dataset and output paths absolute against ``base_dir``."""
        base = Path(base_dir)

        def fix(p: str) -> str:
            return str((base / p).resolve()) if p and not Path(p).is_absolute() else p

        data = dataclasses.replace(self.data, train_root=fix(self.data.train_root), val_root=fix(self.data.val_root))
        return dataclasses.replace(self, data=data, output_dir=fix(self.output_dir))

    def to_text(self) -> str:
        lines = []
        for name, _ in SECTIONS:
            lines.append(f"# {name}")
            lines += textconfig.to_lines(getattr(self, name))
        lines += ["# run", f"output_dir = {self.output_dir}"]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        """SHA-256 over every result-affecting key, in canonical order."""
        lines = [ln for ln in self.to_text().splitlines()
                 if not ln.startswith("#") and ln.split("=", 1)[0].strip() not in UNHASHED]
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()

    def run_name(self) -> str:
        return f"{self.config_hash()[:12]}-seed{self.train.seed}"

    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.run_name()
