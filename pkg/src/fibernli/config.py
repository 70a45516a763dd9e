"""Experiment configuration: YAML files merged over versioned defaults."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from importlib import resources

import yaml

from .errors import ConfigError
from .kernels import QuadratureConfig
from .linkmodel import LinkConfig, PulseShape
from .megn import MEGNConfig
from .ssfm import SimConfig

WORKERS_ENV = "FIBERNLI_WORKERS"


def load_defaults():
    text = resources.files("fibernli").joinpath("data/defaults.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        key = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        if isinstance(base[k], dict) and k != "axes":
            if not isinstance(v, dict):
                raise ConfigError(f"{key} must be a mapping", key=key)
            out[k] = _merge(base[k], v, key)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides=None):
    """Defaults, then the file at ``path``, then ``overrides`` (a dict)."""
    cfg = load_defaults()
    if path is not None:
        try:
            with open(path) as fh:
                user = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", key=None) from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}", key=None) from exc
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a mapping", key=None)
        if "defaults_version" in user and user["defaults_version"] != cfg["defaults_version"]:
            raise ConfigError(
                f"config targets defaults_version {user['defaults_version']}, installed {cfg['defaults_version']}",
                key="defaults_version",
            )
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate(cfg)
    return cfg


def config_hash(cfg):
    """Short stable hash of the resolved config (worker count excluded)."""
    c = copy.deepcopy(cfg)
    c.get("run", {}).pop("workers", None)
    blob = json.dumps(c, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def resolve_workers(cli_value=None, cfg=None):
    """CLI flag, then the environment variable, then the config."""
    if cli_value is not None:
        n = cli_value
    elif os.environ.get(WORKERS_ENV):
        try:
            n = int(os.environ[WORKERS_ENV])
        except ValueError as exc:
            raise ConfigError(f"{WORKERS_ENV} must be an integer", key=WORKERS_ENV) from exc
    else:
        n = (cfg or {}).get("run", {}).get("workers", 1)
    if int(n) < 1:
        raise ConfigError("workers must be >= 1", key="run.workers")
    return int(n)


def _build(key, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError as exc:
        sub = f"{key}.{exc.key}" if exc.key else key
        raise ConfigError(f"invalid {sub}: {exc}", key=sub) from exc
    except (TypeError, ValueError) as exc:
        # name the field when the message leads with it
        field_ = next((k for k in kwargs if str(exc).startswith(k)), None)
        sub = f"{key}.{field_}" if field_ else key
        raise ConfigError(f"invalid {key} section: {exc}", key=sub) from exc


def link_from(cfg):
    return _build("link", LinkConfig, **cfg["link"])


def pulse_from(cfg):
    p = cfg["pulse"]
    return _build("pulse", PulseShape, symbol_rate_hz=float(p["symbol_rate_gbd"]) * 1e9, rolloff=p["rolloff"])


def quad_from(cfg):
    return _build("quadrature", QuadratureConfig, **cfg["quadrature"])


def model_from(cfg):
    m = cfg["model"]
    return _build("model", MEGNConfig, memory=m["memory"], mode=m["mode"], n_freq=m["n_freq"], quad=quad_from(cfg))


def sim_from(cfg, seed=None):
    s = dict(cfg["simulation"])
    s["seed"] = cfg["run"]["seed"] if seed is None else seed
    s["launch_power_dbm"] = cfg["signal"]["launch_power_dbm"]
    return _build("simulation", SimConfig, **s)


def validate(cfg):
    """Build every typed section once so errors surface before any work."""
    link = link_from(cfg)
    pulse_from(cfg)
    model_from(cfg)
    sim = sim_from(cfg)
    try:
        sim.steps_per_span(link)
    except ValueError as exc:
        raise ConfigError(str(exc), key="simulation.step_km") from exc
    sig = cfg["signal"]
    if sig["source"] not in ("ccdm", "iid", "gaussian"):
        raise ConfigError(f"unknown signal.source {sig['source']!r}", key="signal.source")
    if sig["mapping"] not in (1, 2, 4):
        raise ConfigError("signal.mapping must be 1, 2 or 4", key="signal.mapping")
    if len(sig["pmf"]) != len(sig["alphabet"]):
        raise ConfigError("signal.pmf and signal.alphabet differ in length", key="signal.pmf")
    if not isinstance(cfg["run"]["seed"], int) or cfg["run"]["seed"] < 0:
        raise ConfigError("run.seed must be a non-negative integer", key="run.seed")
    return cfg
