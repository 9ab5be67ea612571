"""Experiment configuration: flat ``key = value`` files with typed fields.

Lines are ``key = value``; blank lines and ``#`` comments are ignored. List
fields take comma-separated values. Command-line overrides are applied on
top of the file, and :func:`format_config` writes the effective
configuration back in the same syntax.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .auth import MODEL_KINDS, AuthConfig
from .channel import MOBILE_NODE_COUNT, STATIC_NODE_COUNT, mobile_scenario, static_scenario
from .hvae import KL_MODES, HvaeConfig
from .nn import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _str_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    scenario: str = "static"
    alice_node: int | None = None
    model_kind: str = "tf_hvae"
    seed: int = 0
    samples_per_node: int = 40
    n_train: int = 30
    n_test: int = 10
    eve_interval: int = 1
    feature_mode: str = "magnitude"
    output_dir: str = "out"
    checkpoint: str = ""
    # channel
    cir_dim: int = 128
    static_fraction: float = 0.95
    # model
    h: int = 64
    z: int = 32
    double_peak_m: float = 1.0
    double_peak_s: float = 1.0
    prior_weight: float = 0.5
    kl2_weight: float = 0.1
    kl3_weight: float = 0.001
    kl_mode: str = "bound"
    detach_target: bool = True
    # optimiser
    learning_rate: float = 3e-3
    momentum: float = 0.9
    epochs: int = 100
    batch_size: int = 32
    # decision
    alpha: float | None = 0.5
    f_alice: float | None = None
    f_eve: float | None = None
    auth_mode: str = "threshold_free"
    threshold_grid: list[float] = field(default_factory=list)
    grid_points: int = 200
    # sweeps: every combination becomes one run
    sweep_seeds: list[int] = field(default_factory=list)
    sweep_models: list[str] = field(default_factory=list)
    sweep_eve_interval: list[int] = field(default_factory=list)
    sweep_hz: list[str] = field(default_factory=list)

    @property
    def scenario_kind(self) -> str:
        return "file" if self.scenario.startswith("file:") else self.scenario

    @property
    def dataset_path(self) -> str | None:
        return self.scenario[5:] if self.scenario.startswith("file:") else None

    @property
    def effective_alice_node(self) -> int:
        if self.alice_node is not None:
            return self.alice_node
        return 1 if self.scenario == "mobile" else 23

    @property
    def input_dim(self) -> int:
        return 2 * self.cir_dim if self.feature_mode == "reim" else self.cir_dim

    def validate(self) -> "ExperimentConfig":
        def bad(name, msg):
            raise ConfigError(f"{name}: {msg}")

        if self.scenario not in ("static", "mobile") and not self.scenario.startswith("file:"):
            bad("scenario", f"expected static, mobile or file:<path>, got {self.scenario!r}")
        if self.scenario.startswith("file:") and not self.dataset_path:
            bad("scenario", "file: needs a path")
        if self.model_kind not in MODEL_KINDS:
            bad("model_kind", f"expected one of {', '.join(MODEL_KINDS)}, got {self.model_kind!r}")
        for m in self.sweep_models:
            if m not in MODEL_KINDS:
                bad("sweep_models", f"unknown model kind {m!r}")
        if self.samples_per_node < 1:
            bad("samples_per_node", "must be >= 1")
        if self.n_train < 1 or self.n_test < 1:
            bad("n_train" if self.n_train < 1 else "n_test", "must be >= 1")
        if self.n_train + self.n_test > self.samples_per_node:
            bad("n_train", f"n_train + n_test = {self.n_train + self.n_test} exceeds "
                           f"samples_per_node = {self.samples_per_node}")
        nodes = {"static": STATIC_NODE_COUNT, "mobile": MOBILE_NODE_COUNT}.get(self.scenario)
        if nodes is not None and not 1 <= self.effective_alice_node <= nodes:
            bad("alice_node", f"must be in 1..{nodes} for the {self.scenario} scenario")
        if self.scenario == "mobile" and self.alice_node not in (None, 1):
            bad("alice_node", "the mobile scenario has a single moving Alice; leave unset")
        for iv in [self.eve_interval, *self.sweep_eve_interval]:
            if not 1 <= iv < MOBILE_NODE_COUNT:
                bad("eve_interval", f"must be in 1..{MOBILE_NODE_COUNT - 1}, got {iv}")
        if self.feature_mode not in ("magnitude", "reim"):
            bad("feature_mode", f"expected magnitude or reim, got {self.feature_mode!r}")
        if self.kl_mode not in KL_MODES:
            bad("kl_mode", f"expected one of {', '.join(KL_MODES)}, got {self.kl_mode!r}")
        for spec in self.sweep_hz:
            _parse_hz(spec)
        for name, build in (("model", self.hvae_config), ("auth", self.auth_config),
                            ("channel", self.scenario_params)):
            try:
                build()
            except ValueError as exc:
                raise ConfigError(f"{name}: {exc}") from exc
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, momentum=self.momentum,
                           epochs=self.epochs, batch_size=self.batch_size, seed=self.seed)

    def hvae_config(self) -> HvaeConfig:
        return HvaeConfig(input_dim=self.input_dim, h=self.h, z=self.z,
                          double_peak_m=self.double_peak_m, double_peak_s=self.double_peak_s,
                          prior_weight=self.prior_weight, kl2_weight=self.kl2_weight,
                          kl3_weight=self.kl3_weight, kl_mode=self.kl_mode,
                          detach_target=self.detach_target, train=self.train_config())

    def auth_config(self) -> AuthConfig:
        return AuthConfig(alpha=self.alpha, f_alice=self.f_alice, f_eve=self.f_eve,
                          mode=self.auth_mode, threshold_grid=self.threshold_grid or None,
                          grid_points=self.grid_points)

    def scenario_params(self):
        make = mobile_scenario if self.scenario == "mobile" else static_scenario
        return make(cir_dim=self.cir_dim, static_fraction=self.static_fraction)


def _parse_hz(spec: str) -> tuple[int, int]:
    try:
        h, z = spec.lower().split("x")
        return int(h), int(z)
    except ValueError:
        raise ConfigError(f"sweep_hz: expected entries like 64x32, got {spec!r}") from None


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _converter(name: str):
    ftype = _FIELDS[name].type
    if ftype == "bool":
        return _bool
    if ftype == "int":
        return int
    if ftype == "float":
        return float
    if ftype == "float | None":
        return _opt_float
    if ftype == "int | None":
        return _opt_int
    if ftype == "list[int]":
        return _int_list
    if ftype == "list[float]":
        return _float_list
    if ftype == "list[str]":
        return _str_list
    return str


def read_pairs(text: str, source: str = "<config>") -> dict[str, str]:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        pairs[key.replace("-", "_")] = value
    return pairs


def apply_pairs(cfg: ExperimentConfig, pairs: dict[str, str]) -> ExperimentConfig:
    for key, value in pairs.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(cfg, key, _converter(key)(value))
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from None
    return cfg


def parse_config(path=None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Defaults, then the file at ``path`` (if any), then ``overrides``; validated."""
    cfg = ExperimentConfig()
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
        apply_pairs(cfg, read_pairs(text, str(path)))
    apply_pairs(cfg, {k: v for k, v in (overrides or {}).items() if v is not None})
    return cfg.validate()


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg: ExperimentConfig) -> str:
    """Every field as ``key = value``; :func:`parse_config` reads it back unchanged."""
    return "".join(f"{name} = {_format_value(getattr(cfg, name))}\n" for name in _FIELDS)
