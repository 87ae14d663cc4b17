"""Run configuration: TOML/JSON loading, validation, canonical form and hash."""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .hmm import HmmParams, StabilityError
from .spectral import ModelSpec, Scaling, burgers_model, custom_model, ks_model

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class ModelConfig:
    kind: str = "burgers"  # burgers | ks | custom
    M: int = 2
    nu: float = 0.0
    q: object = "ones"
    lambdas: list = field(default_factory=list)  # custom: fast rates
    entries: list = field(default_factory=list)  # custom: [k, l, m, value]


@dataclass
class HmmConfig:
    p: int = 4
    h: float | None = None
    K: int | None = None
    L: int | None = None
    Lp: int | None = None
    lT: int | None = None
    dt_macro: float = 0.1
    T: float = 1.0
    X0: float = 0.5
    epsilon: float | None = None
    include_b1: bool = False


@dataclass
class HarnessConfig:
    seed: int = 0
    seeds: int = 8
    p_range: list = field(default_factory=lambda: [1, 5])
    M_list: list = field(default_factory=lambda: [2])
    row_time_cap: float = 600.0
    mixed_metric: bool = False
    series_indexing: bool = False
    n_x: int = 65
    fast_modes: bool = False


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    scaling: str = "diffusive"
    hmm: HmmConfig = field(default_factory=HmmConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        if "config" in data and "config_hash" in data:  # a manifest
            data = data["config"]
        blocks = {"model": ModelConfig, "hmm": HmmConfig, "harness": HarnessConfig}
        kw = {}
        for key, val in data.items():
            if key in blocks:
                if not isinstance(val, dict):
                    raise ConfigError(key, "expected a table")
                kw[key] = _build(blocks[key], val, key)
            elif key == "scaling":
                kw[key] = val
            else:
                raise ConfigError(key, "unknown key")
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        raw = path.read_bytes()
        try:
            if path.suffix == ".json":
                data = json.loads(raw)
            else:
                data = tomllib.loads(raw.decode())
        except (ValueError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(str(path), f"cannot parse: {exc}") from exc
        return cls.from_dict(data)

    def with_overrides(self, items: list[str]) -> "RunConfig":
        """Apply ``block.key=value`` overrides; values are parsed as JSON when possible."""
        data = self.to_dict()
        for item in items:
            if "=" not in item:
                raise ConfigError(item, "override must look like block.key=value")
            path, raw = item.split("=", 1)
            try:
                val = json.loads(raw)
            except json.JSONDecodeError:
                val = raw
            keys = path.split(".")
            node = data
            for k in keys[:-1]:
                if k not in node or not isinstance(node[k], dict):
                    raise ConfigError(path, "unknown block")
                node = node[k]
            node[keys[-1]] = val
        return RunConfig.from_dict(data)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def model_hash(self) -> str:
        blob = json.dumps(asdict(self.model), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def manifest(self, command: str, extra: dict | None = None) -> dict:
        out = {
            "command": command,
            "config": self.to_dict(),
            "config_hash": self.config_hash(),
            "model_hash": self.model_hash(),
            "seed": self.harness.seed,
        }
        out.update(extra or {})
        return out

    # -- semantics ----------------------------------------------------------

    def build_model(self, M: int | None = None) -> ModelSpec:
        mc = self.model
        M = mc.M if M is None else M
        kw = {"scaling": self.scaling, "epsilon": self.hmm.epsilon}
        q = mc.q
        if mc.kind == "burgers":
            return burgers_model(max(M, 1), mc.nu, q, **kw)
        if mc.kind == "ks":
            return ks_model(max(M, 1), mc.nu, q, **kw)
        return custom_model(mc.lambdas, q, mc.entries, mc.nu, **kw)

    def hmm_params(self, p: int | None = None) -> HmmParams:
        hc = self.hmm
        n_macro = int(round(hc.T / hc.dt_macro))
        return HmmParams.from_p(
            hc.p if p is None else p,
            hc.dt_macro,
            n_macro,
            h=hc.h, K=hc.K, L=hc.L, Lp=hc.Lp, lT=hc.lT,
            epsilon=hc.epsilon,
            include_b1=hc.include_b1 or None,
        )

    def validate(self) -> None:
        mc, hc, hs = self.model, self.hmm, self.harness
        try:
            Scaling(self.scaling)
        except ValueError:
            raise ConfigError("scaling", f"expected 'diffusive' or 'advective', got {self.scaling!r}")
        if mc.kind not in ("burgers", "ks", "custom"):
            raise ConfigError("model.kind", f"unknown model {mc.kind!r}")
        if not isinstance(mc.M, int) or mc.M < 1:
            raise ConfigError("model.M", "must be a positive integer")
        if mc.kind == "custom":
            if not mc.lambdas:
                raise ConfigError("model.lambdas", "custom models need fast eigenvalues")
            if any(v <= 0 for v in mc.lambdas):
                raise ConfigError("model.lambdas", "fast eigenvalues must be positive")
            for e in mc.entries:
                if len(e) != 4:
                    raise ConfigError("model.entries", f"expected [k, l, m, value], got {e!r}")
            if mc.M != len(mc.lambdas):
                raise ConfigError("model.M", f"custom model has {len(mc.lambdas)} fast modes")
        if hc.dt_macro <= 0 or hc.T <= 0:
            raise ConfigError("hmm.dt_macro", "dt_macro and T must be positive")
        n = hc.T / hc.dt_macro
        if not math.isclose(n, round(n), rel_tol=1e-9) or round(n) < 1:
            raise ConfigError("hmm.T", "T must be a positive multiple of dt_macro")
        if not isinstance(hc.p, int) or hc.p < 1:
            raise ConfigError("hmm.p", "must be a positive integer")
        if hc.h is not None and hc.h <= 0:
            raise ConfigError("hmm.h", "must be positive")
        if self.scaling == "advective" and hc.epsilon is None:
            raise ConfigError("hmm.epsilon", "the advective scale needs epsilon")
        if hc.epsilon is not None and hc.epsilon <= 0:
            raise ConfigError("hmm.epsilon", "must be positive")
        lo_hi = hs.p_range
        if len(lo_hi) != 2 or lo_hi[0] > lo_hi[1] or lo_hi[0] < 1:
            raise ConfigError("harness.p_range", "expected [p_min, p_max] with 1 <= p_min <= p_max")
        if not hs.M_list or any(not isinstance(m, int) or m < 1 for m in hs.M_list):
            raise ConfigError("harness.M_list", "expected a nonempty list of positive integers")
        if hs.seeds < 1:
            raise ConfigError("harness.seeds", "must be >= 1")
        if not 0 <= hs.seed < 2**64:
            raise ConfigError("harness.seed", "must be a 64-bit unsigned integer")

    def check_stability(self, p: int | None = None, M: int | None = None) -> None:
        """Raise :class:`StabilityError` naming the eigenvalue that ``h`` violates."""
        from .hmm import check_stability
        from .spectral import build_truncated_system

        M = self.model.M if M is None else M
        check_stability(build_truncated_system(self.build_model(M), M), self.hmm_params(p).h)


def _build(cls, values: dict, prefix: str):
    names = {f.name for f in fields(cls)}
    for key in values:
        if key not in names:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
    return cls(**values)


__all__ = ["ConfigError", "RunConfig", "ModelConfig", "HmmConfig", "HarnessConfig", "StabilityError"]
