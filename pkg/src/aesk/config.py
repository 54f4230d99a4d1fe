"""Run configuration: defaults, config file, environment, flag overrides.

Precedence (highest wins): flags > environment > config file > defaults.
The config file is a flat ``key = value`` format with dotted keys, one
per line, ``#`` comments; values are an int, float, bool, quoted string,
or a comma-separated list of quoted strings. Environment variables use
the ``AESK_`` prefix with dots replaced by underscores
(``prior.alpha`` -> ``AESK_PRIOR_ALPHA``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Any, Mapping

from .errors import ConfigError, ParseError

ENV_PREFIX = "AESK_"

DEFAULT_ENDPOINT = "https://clinicaltrials.gov/api/v2/studies"


@dataclass(frozen=True)
class RunConfig:
    embedding_path: str | None = None
    embedding_dimension: int = 32
    fallback_seed: int = 0
    unknown_term_policy: str = "error"

    min_cluster_size: int = 3
    epsilon: float | None = None

    variance_target: float = 0.9
    max_components: int = 10

    alpha: float = 0.5
    beta: float = 0.5
    levels: tuple[float, ...] = (0.05, 0.95)

    descriptors: tuple[str, ...] = ()
    lexicon: str | None = None

    endpoint: str = DEFAULT_ENDPOINT
    cache_dir: str = "cache"

    evd_include_noise: bool = False
    hide_zero_incidence: bool = False

    port: int = 8421
    bind: str = "127.0.0.1"
    sync_threshold: int = 500

    def validate(self) -> "RunConfig":
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("prior.alpha and prior.beta must be > 0")
        if self.embedding_dimension < 8:
            raise ConfigError("embedding.dimension must be >= 8")
        if self.unknown_term_policy not in ("error", "fallback"):
            raise ConfigError("embedding.unknown_term_policy must be 'error' or 'fallback'")
        if self.min_cluster_size < 1:
            raise ConfigError("cluster.min_cluster_size must be >= 1")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("cluster.epsilon must be > 0 when set")
        if not 0 < self.variance_target <= 1:
            raise ConfigError("pca.variance_target must be in (0, 1]")
        if self.max_components < 1:
            raise ConfigError("pca.max_components must be >= 1")
        if not self.levels or any(not 0 < lv < 1 for lv in self.levels):
            raise ConfigError("posterior.levels must all lie in (0, 1)")
        if not 1 <= self.port <= 65535:
            raise ConfigError("service.port out of range")
        if self.sync_threshold < 0:
            raise ConfigError("service.sync_threshold must be >= 0")
        return self


# Dotted config key -> (RunConfig field, value type). The type tag drives
# coercion of environment/flag strings.
KEY_FIELDS: dict[str, tuple[str, str]] = {
    "embedding.path": ("embedding_path", "str?"),
    "embedding.dimension": ("embedding_dimension", "int"),
    "embedding.fallback_seed": ("fallback_seed", "int"),
    "embedding.unknown_term_policy": ("unknown_term_policy", "str"),
    "cluster.min_cluster_size": ("min_cluster_size", "int"),
    "cluster.epsilon": ("epsilon", "float?"),
    "pca.variance_target": ("variance_target", "float"),
    "pca.max_components": ("max_components", "int"),
    "prior.alpha": ("alpha", "float"),
    "prior.beta": ("beta", "float"),
    "posterior.levels": ("levels", "floats"),
    "expectedness.descriptors": ("descriptors", "strs"),
    "ingest.lexicon": ("lexicon", "str?"),
    "fetch.endpoint": ("endpoint", "str"),
    "fetch.cache_dir": ("cache_dir", "str"),
    "visuals.evd_include_noise": ("evd_include_noise", "bool"),
    "visuals.hide_zero_incidence": ("hide_zero_incidence", "bool"),
    "service.port": ("port", "int"),
    "service.bind": ("bind", "str"),
    "service.sync_threshold": ("sync_threshold", "int"),
}

# Keys that change analysis output. Only these enter the artifact
# config_snapshot and the content-addressed analysis id; serving and
# caching knobs do not alter results.
ANALYSIS_KEYS = (
    "embedding.path",
    "embedding.dimension",
    "embedding.fallback_seed",
    "embedding.unknown_term_policy",
    "cluster.min_cluster_size",
    "cluster.epsilon",
    "pca.variance_target",
    "pca.max_components",
    "prior.alpha",
    "prior.beta",
    "posterior.levels",
    "expectedness.descriptors",
    "ingest.lexicon",
    "visuals.evd_include_noise",
    "visuals.hide_zero_incidence",
)


def _coerce(key: str, kind: str, value: Any) -> Any:
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "float?":
            if value is None or value == "":
                return None
            return float(value)
        if kind == "str":
            return str(value)
        if kind == "str?":
            if value is None or value == "":
                return None
            return str(value)
        if kind == "bool":
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("true", "1", "yes"):
                return True
            if text in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind == "floats":
            if isinstance(value, (list, tuple)):
                return tuple(float(v) for v in value)
            return tuple(float(v) for v in str(value).split(",") if v.strip())
        if kind == "strs":
            if isinstance(value, (list, tuple)):
                return tuple(str(v) for v in value)
            return tuple(v.strip() for v in str(value).split(",") if v.strip())
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    raise AssertionError(f"unhandled kind {kind}")


def _parse_scalar(text: str, line: int) -> Any:
    text = text.strip()
    if text.startswith('"') or text.startswith("'"):
        # one or more quoted strings, comma separated
        parts = []
        rest = text
        while rest:
            quote = rest[0]
            if quote not in "\"'":
                raise ParseError(f"expected quoted string: {rest}", line)
            end = rest.find(quote, 1)
            if end < 0:
                raise ParseError("unterminated string", line)
            parts.append(rest[1:end])
            rest = rest[end + 1 :].lstrip()
            if rest.startswith(","):
                rest = rest[1:].lstrip()
            elif rest:
                raise ParseError(f"trailing text after string: {rest}", line)
        return parts if len(parts) > 1 else parts[0]
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if "," in text:
        return [p.strip() for p in text.split(",") if p.strip()]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_file(path: str) -> dict[str, Any]:
    """Read a flat dotted-key config file into a {key: value} dict."""
    values: dict[str, Any] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ParseError("expected 'key = value'", lineno)
            key, _, rhs = stripped.partition("=")
            key = key.strip()
            if key not in KEY_FIELDS:
                raise ConfigError(f"unknown config key at line {lineno}: {key}")
            values[key] = _parse_scalar(rhs, lineno)
    return values


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    values: dict[str, Any] = {}
    for key in KEY_FIELDS:
        env_name = ENV_PREFIX + key.replace(".", "_").upper()
        if env_name in environ:
            values[key] = environ[env_name]
    return values


def apply_overrides(cfg: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    fields: dict[str, Any] = {}
    for key, value in overrides.items():
        if key not in KEY_FIELDS:
            raise ConfigError(f"unknown config key: {key}")
        field, kind = KEY_FIELDS[key]
        fields[field] = _coerce(key, kind, value)
    return replace(cfg, **fields)


def load_config(
    config_file: str | None = None,
    environ: Mapping[str, str] | None = None,
    flag_overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Resolve the effective RunConfig with full precedence."""
    cfg = RunConfig()
    if config_file:
        cfg = apply_overrides(cfg, parse_config_file(config_file))
    cfg = apply_overrides(cfg, env_overrides(environ))
    if flag_overrides:
        cfg = apply_overrides(cfg, flag_overrides)
    return cfg.validate()


def config_snapshot(cfg: RunConfig) -> dict[str, Any]:
    """Analysis-relevant keys as a JSON-serializable dict.

    Embedded verbatim in every artifact so a run can be reproduced; two
    runs with equal snapshots and equal inputs produce identical bytes.
    """
    snap: dict[str, Any] = {}
    for key in ANALYSIS_KEYS:
        field, _ = KEY_FIELDS[key]
        value = getattr(cfg, field)
        if isinstance(value, tuple):
            value = list(value)
        snap[key] = value
    return snap
