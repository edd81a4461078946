"""Experiment configuration and the flat key = value config format.

Config files are plain text, one ``key = value`` per line, with dotted
prefixes for nested sections (``train.lambda0 = 0.01``, ``target.kind = w``).
Blank lines and ``#`` comments are ignored.  Unknown keys are an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import FormatError, ParameterError
from .states import TargetSpec
from .training import TrainConfig

__all__ = ["ExperimentConfig", "parse_config_text", "load_config", "config_to_text", "replace"]


@dataclass
class ExperimentConfig:
    """Everything one tomography run needs; see the config file keys below.

    ``target`` may be a TargetSpec, a path to a serialized state, or an
    in-memory state (used by virtual tomography).
    """

    target: object = None
    fidelity_threshold: float = 0.995
    batch_initial: int = 50
    batch_growth: float = 1.5
    batch_max: int = 0  # 0 = uncapped; capped batches give the -1 tail slope of r_succ
    max_replicas: int = 10000
    noise_epsilon: float = 0.0
    # noise-scaled truncation on by default: experiment runs must not let
    # bond dimensions absorb shot noise, or the fidelity plateaus early
    train: TrainConfig = field(default_factory=lambda: TrainConfig(eta_noise=1.0))
    virtual_runs: int = 8
    seed: int = 0
    output_dir: str | None = None
    blind: bool = False
    stop_on_threshold: bool = True
    init_bond_dim: int = 2
    c_estimate: float | None = None
    save_shots: bool = True

    def validate(self) -> None:
        if self.target is None:
            raise ParameterError("no target configured")
        if not 0.0 < self.fidelity_threshold < 1.0:
            raise ParameterError("fidelity_threshold must lie in (0, 1)")
        if self.batch_initial < 1 or self.batch_growth < 1.0:
            raise ParameterError("need batch_initial >= 1 and batch_growth >= 1")
        if not 0.0 <= self.noise_epsilon <= 1.0:
            raise ParameterError("noise_epsilon must lie in [0, 1]")
        if self.virtual_runs < 1 or self.init_bond_dim < 1:
            raise ParameterError("need virtual_runs >= 1 and init_bond_dim >= 1")
        if self.c_estimate is not None and self.c_estimate <= 0:
            raise ParameterError("c_estimate must be positive when given")
        self.train.validate()


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(raw, typ, key):
    raw = raw.strip()
    try:
        if typ is bool:
            return _BOOL[raw.lower()]
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except (KeyError, ValueError) as exc:
        raise ParameterError(f"config key {key!r}: cannot parse {raw!r}") from exc


def parse_config_text(text, path="<config>") -> dict[str, str]:
    """Flat key -> raw string mapping from config text."""
    out = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise FormatError(f"{path}: line {ln}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_TARGET_KEYS = {"kind": str, "n": int, "theta": float, "d_max": int, "seed": int}
_TOP_TYPES = {
    "fidelity_threshold": float,
    "batch_initial": int,
    "batch_growth": float,
    "batch_max": int,
    "max_replicas": int,
    "noise_epsilon": float,
    "virtual_runs": int,
    "seed": int,
    "output_dir": str,
    "blind": bool,
    "stop_on_threshold": bool,
    "init_bond_dim": int,
    "c_estimate": float,
    "save_shots": bool,
}
_TRAIN_TYPES = {
    f.name: (int if f.type == "int" else float) for f in fields(TrainConfig)
}


def build_experiment_config(mapping, base=None) -> ExperimentConfig:
    """Apply a flat key mapping on top of ``base`` (or defaults)."""
    cfg = replace(base) if base is not None else ExperimentConfig()
    cfg.train = replace(cfg.train)
    target_kv = {}
    target_path = None
    for key, raw in mapping.items():
        if key.startswith("train."):
            name = key[len("train.") :]
            if name not in _TRAIN_TYPES:
                raise ParameterError(f"unknown config key {key!r}")
            setattr(cfg.train, name, _coerce(raw, _TRAIN_TYPES[name], key))
        elif key == "target.path":
            target_path = raw.strip()
        elif key.startswith("target."):
            name = key[len("target.") :]
            if name not in _TARGET_KEYS:
                raise ParameterError(f"unknown config key {key!r}")
            target_kv[name] = _coerce(raw, _TARGET_KEYS[name], key)
        elif key in _TOP_TYPES:
            setattr(cfg, key, _coerce(raw, _TOP_TYPES[key], key))
        else:
            raise ParameterError(f"unknown config key {key!r}")
    if target_path is not None:
        if target_kv:
            raise ParameterError("give either target.path or target.* fields, not both")
        cfg.target = target_path
    elif target_kv:
        if "kind" not in target_kv or "n" not in target_kv:
            raise ParameterError("target needs at least target.kind and target.n")
        cfg.target = TargetSpec(
            kind=target_kv["kind"],
            n_sites=target_kv["n"],
            theta=target_kv.get("theta", 0.0),
            d_max=target_kv.get("d_max", 1),
            seed=target_kv.get("seed", 0),
        )
    return cfg


def load_config(path, base=None) -> ExperimentConfig:
    text = Path(path).read_text()
    return build_experiment_config(parse_config_text(text, str(path)), base)


def config_to_text(cfg) -> str:
    """Serialize a config back to the flat format (target paths as-is)."""
    lines = []
    if isinstance(cfg.target, TargetSpec):
        t = cfg.target
        lines += [
            f"target.kind = {t.kind}",
            f"target.n = {t.n_sites}",
            f"target.theta = {t.theta!r}",
            f"target.d_max = {t.d_max}",
            f"target.seed = {t.seed}",
        ]
    elif isinstance(cfg.target, (str, Path)):
        lines.append(f"target.path = {cfg.target}")
    for key, typ in _TOP_TYPES.items():
        val = getattr(cfg, key)
        if val is None:
            continue
        if typ is bool:
            val = "true" if val else "false"
        elif typ is float:
            val = repr(float(val))
        lines.append(f"{key} = {val}")
    for name in _TRAIN_TYPES:
        val = getattr(cfg.train, name)
        val = repr(float(val)) if isinstance(val, float) else str(val)
        lines.append(f"train.{name} = {val}")
    return "\n".join(lines) + "\n"
