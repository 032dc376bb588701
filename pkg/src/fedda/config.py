"""Experiment configuration: TOML sections, one per module namespace."""

from dataclasses import asdict, dataclass, field, fields

import tomli
import tomli_w


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSection:
    algorithm: str = "fedda"
    K: int = 8
    r: int = 0  # 0 means full participation
    I: int = 5
    E: int = 100
    lam: float = 1.0
    seed: int = 0
    init_batch: int = 16
    batch_size: int = 16
    transport: str = "memory"
    trace_clients: bool = True
    identical_client_streams: bool = False
    density_threshold: float = 0.01
    x0: float = 0.0


@dataclass(frozen=True)
class ProblemSection:
    kind: str = "quadratic"
    dim: int = 10
    samples: int = 64
    seed: int = 0
    noise_std: float = 0.0
    shift: float = 1.0
    curvature_lo: float = 1.0
    curvature_hi: float = 4.0
    shared_curvature: bool = False
    spread: float = 0.5
    support: float = 0.1
    magnitude: float = 0.1
    reg_weight: float = 0.1
    num_classes: int = 10
    positive_label: float = 1.0
    path: str = ""  # logistic kinds: CSV dataset; empty means synthetic blobs


@dataclass(frozen=True)
class PartitionSection:
    het_fraction: float = 0.8
    seed: int = 0


@dataclass(frozen=True)
class ScheduleSection:
    mode: str = "constant"
    eta: float = 0.003
    w: float = 1e4
    c: float = 1e6
    L: float = 0.0  # 0 means use the problem's analytic bound


@dataclass(frozen=True)
class EstimatorSection:
    variant: str = "mvr"
    alpha_mode: str = "schedule"
    alpha: float = 0.9


@dataclass(frozen=True)
class AdaptiveSection:
    variant: str = "elementwise"
    beta: float = 0.999
    epsilon: float = 0.01


@dataclass(frozen=True)
class ConstraintSection:
    kind: str = "none"
    radius: float = 0.0  # 0 means radius_scale * dim
    radius_scale: float = 0.01
    lo: float = -1.0
    hi: float = 1.0


@dataclass(frozen=True)
class BaselineSection:
    lr: float = 0.01
    server_lr: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    fedcm_alpha: float = 0.9


@dataclass(frozen=True)
class OutputSection:
    dir: str = "runs"
    csv: str = "metrics.csv"
    svg: str = "metrics.svg"
    svg_fields: tuple = ("measure_g", "loss")


SECTIONS = {
    "run": RunSection,
    "problem": ProblemSection,
    "partition": PartitionSection,
    "schedule": ScheduleSection,
    "estimator": EstimatorSection,
    "adaptive": AdaptiveSection,
    "constraint": ConstraintSection,
    "baseline": BaselineSection,
    "output": OutputSection,
}

_CHOICES = {
    ("run", "algorithm"): ("fedda", "fedda-i1", "fedavg", "fedadam", "fedcm"),
    ("run", "transport"): ("memory", "socket"),
    ("problem", "kind"): ("quadratic", "least_squares", "sparse_regression", "logistic",
                          "nonconvex_logistic"),
    ("schedule", "mode"): ("theorem", "practical", "constant"),
    ("estimator", "variant"): ("mvr", "momentum"),
    ("estimator", "alpha_mode"): ("schedule", "constant"),
    ("adaptive", "variant"): ("elementwise", "norm"),
    ("constraint", "kind"): ("none", "box", "l2", "l1"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    problem: ProblemSection = field(default_factory=ProblemSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    adaptive: AdaptiveSection = field(default_factory=AdaptiveSection)
    constraint: ConstraintSection = field(default_factory=ConstraintSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def participants(self):
        return self.run.r or self.run.K

    def variant_name(self):
        if self.run.algorithm in ("fedda", "fedda-i1"):
            i = 1 if self.estimator.variant == "mvr" else 2
            j = 1 if self.adaptive.variant == "elementwise" else 2
            suffix = "-i1" if self.run.algorithm == "fedda-i1" else ""
            return f"FedDA-{i}-{j}{suffix}"
        return {"fedavg": "FedAvg", "fedadam": "FedAdam", "fedcm": "FedCM"}[self.run.algorithm]

    def with_overrides(self, **sections):
        """``cfg.with_overrides(run={"E": 10})`` returns an updated copy."""
        return from_dict(_merge(to_dict(self), sections))


def _merge(base, extra):
    out = {k: dict(v) for k, v in base.items()}
    for sec, vals in extra.items():
        out.setdefault(sec, {}).update(vals)
    return out


def _coerce(section, key, ftype, value):
    where = f"{section}.{key}"
    if ftype is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if ftype is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if ftype is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if ftype is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if ftype is tuple:
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{where}: expected a list of strings")
        return tuple(value)
    raise ConfigError(f"{where}: unsupported field type")


_TYPES = {"int": int, "float": float, "str": str, "bool": bool, "tuple": tuple}


def from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    sections = {}
    for name, values in data.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section {name!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"section {name!r} must be a table")
        cls = SECTIONS[name]
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{name}]")
            ftype = known[key].type
            ftype = _TYPES.get(ftype, ftype) if isinstance(ftype, str) else ftype
            kwargs[key] = _coerce(name, key, ftype, value)
            choices = _CHOICES.get((name, key))
            if choices and kwargs[key] not in choices:
                raise ConfigError(f"{name}.{key}: {kwargs[key]!r} is not one of {choices}")
        sections[name] = cls(**kwargs)
    cfg = ExperimentConfig(**sections)
    validate(cfg)
    return cfg


def validate(cfg):
    run = cfg.run
    if run.K < 1:
        raise ConfigError("run.K must be at least 1")
    if not 0 <= run.r <= run.K:
        raise ConfigError("run.r must lie in [0, K]")
    if run.I < 1:
        raise ConfigError("run.I must be at least 1")
    if run.E < 0:
        raise ConfigError("run.E must be nonnegative")
    if run.lam <= 0:
        raise ConfigError("run.lam must be positive")
    if run.seed < 0:
        raise ConfigError("run.seed must be nonnegative")
    if run.algorithm == "fedda-i1":
        if run.I != 1:
            raise ConfigError("fedda-i1 requires run.I = 1")
        if cfg.participants != run.K:
            raise ConfigError("fedda-i1 requires full participation")
        if run.transport != "memory":
            raise ConfigError("fedda-i1 runs in-process; use transport = 'memory'")
    if cfg.estimator.alpha_mode == "constant" and not 0 < cfg.estimator.alpha <= 1:
        raise ConfigError("estimator.alpha must lie in (0, 1]")
    if not 0 <= cfg.adaptive.beta <= 1:
        raise ConfigError("adaptive.beta must lie in [0, 1]")
    if cfg.adaptive.epsilon <= 0:
        raise ConfigError("adaptive.epsilon must be positive")
    if not 0 < cfg.partition.het_fraction <= 1:
        raise ConfigError("partition.het_fraction must lie in (0, 1]")


def to_dict(cfg):
    out = {}
    for name in SECTIONS:
        sec = asdict(getattr(cfg, name))
        out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
    return out


def parse_config(text):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return from_dict(data)


def serialize_config(cfg):
    return tomli_w.dumps(to_dict(cfg))


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def apply_overrides(cfg, overrides):
    """Apply ``section.key=value`` strings; values use TOML syntax, bare words are strings."""
    updates = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        if "." not in key:
            raise ConfigError(f"override key {key!r} must be section.key")
        section, name = key.split(".", 1)
        try:
            value = tomli.loads(f"v = {raw.strip()}")["v"]
        except tomli.TOMLDecodeError:
            value = raw.strip()
        updates.setdefault(section, {})[name] = value
    return from_dict(_merge(to_dict(cfg), updates))
