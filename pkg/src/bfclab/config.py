"""Scenario configuration: a versioned YAML document with unit-suffixed keys.

Every key has a default, so an empty document is the nominal scenario.
Unknown keys are rejected with the line they appear on. ``--set`` style
overrides use dotted paths, e.g. ``comb.fsr_ghz=14.97``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import yaml

from .core_model import CombParams, DetectorParams, FilterMode
from .errors import ConfigError
from .eventsim import LinkParams, SourceParams

CONFIG_VERSION = 1

_FLOAT, _INT, _STR = "float", "int", "str"
_OPT_FLOAT, _FLOAT_LIST, _TABLE = "float?", "floats?", "table?"

# path -> (type, default)
SCHEMA = {
    "version": (_INT, CONFIG_VERSION),
    "comb": {
        "fsr_ghz": (_FLOAT, 45.32),
        "linewidth_ghz": (_FLOAT, 1.56),
        "phase_matching_ghz": (_FLOAT, 245.0),
        "n_lines": (_INT, 5),
        "center_wavelength_nm": (_FLOAT, 1316.0),
        "filter_mode": (_STR, "singly"),
        "filter_transmission": (_FLOAT, 1.0),
    },
    "detectors": {
        "signal": {
            "jitter_ps": (_FLOAT, 6.49),
            "efficiency": (_FLOAT, 1.0),
            "dark_rate_hz": (_FLOAT, 0.0),
        },
        "idler": {
            "jitter_ps": (_FLOAT, 6.49),
            "efficiency": (_FLOAT, 1.0),
            "dark_rate_hz": (_FLOAT, 0.0),
        },
    },
    "source": {
        "pair_rate_hz": (_FLOAT, 1.0e5),
        "duration_s": (_FLOAT, 1.0),
        "seed": (_INT, 0),
        "window_ns": (_FLOAT, 2.0),
    },
    "link": {
        "length_km": (_FLOAT, 0.0),
        "loss_db": (_FLOAT, 0.0),
        "delay_ns": (_FLOAT, 0.0),
    },
    "analysis": {
        "tau_step_ps": (_OPT_FLOAT, None),
        "bin_width_ps": (_FLOAT, 1.0),
        "span_ns": (_FLOAT, 2.0),
        "g2_span_ns": (_FLOAT, 50.0),
        "window_ns": (_FLOAT, 2.0),
        "franson_bins": (_INT, 16),
        "franson_mode": (_STR, "quadrature"),
        "background_ratio": (_FLOAT, 0.375),
        "bpf_ghz": (_FLOAT, 30.0),
        "bpf_delay_ps": (_FLOAT, 0.0),
        "hbt_split": (_FLOAT, 0.5),
        "peak_smooth_ps": (_OPT_FLOAT, None),
        "peak_periods": (_INT, 8),
        "peak_method": (_STR, "slope"),
    },
    "spectrum": {
        "span_ghz": (_FLOAT, 120.0),
        "points": (_INT, 4801),
    },
    "schmidt": {
        "weights": (_FLOAT_LIST, None),
        "cross_talk": (_FLOAT, 0.0),
    },
    "qkd": {
        "bin_ps": (_FLOAT, 50.0),
        "frame_bins": (_INT, 16),
        "visibility": (_FLOAT_LIST, None),
        "holevo_table": (_TABLE, None),
    },
    "plan": {
        "b_spdc_ghz": (_FLOAT, 2000.0),
        "fsr_ghz": (_FLOAT, 100.0),
        "linewidth_ghz": (_FLOAT, 1.0),
    },
}


def defaults() -> dict:
    def walk(node):
        return {k: walk(v) if isinstance(v, dict) else copy.deepcopy(v[1]) for k, v in node.items()}
    return walk(SCHEMA)


def _line_map(text: str) -> dict:
    """Dotted key path -> 1-based line number, from the YAML node tree."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    out = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for knode, vnode in node.value:
                path = f"{prefix}{knode.value}"
                out[path] = knode.start_mark.line + 1
                walk(vnode, path + ".")

    if root is not None:
        walk(root, "")
    return out


def _coerce(kind: str, value, path: str):
    if value is None:
        if kind in (_OPT_FLOAT, _FLOAT_LIST, _TABLE):
            return None
        raise ConfigError(f"{path}: value required")
    try:
        if kind in (_FLOAT, _OPT_FLOAT):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind == _INT:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if kind == _STR:
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind == _FLOAT_LIST:
            if isinstance(value, (list, tuple)):
                return [float(v) for v in value]
            return float(value)
        if kind == _TABLE:
            if not isinstance(value, dict) or set(value) != {"visibility", "bits"}:
                raise TypeError
            return {"visibility": [float(v) for v in value["visibility"]],
                    "bits": [float(v) for v in value["bits"]]}
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"{path}: cannot read {value!r} as {kind.rstrip('?')}")


def _validate(data, schema, prefix, lines) -> dict:
    out = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'document'}: expected a mapping")
    for key, value in data.items():
        path = f"{prefix}{key}"
        where = f"line {lines[path]}: " if path in lines else ""
        if key not in schema:
            raise ConfigError(f"{where}unknown key '{path}'")
        entry = schema[key]
        try:
            if isinstance(entry, dict):
                out[key] = _validate(value if value is not None else {}, entry, path + ".", lines)
            else:
                out[key] = _coerce(entry[0], value, path)
        except ConfigError as exc:
            msg = str(exc)
            raise ConfigError(msg if msg.startswith("line ") else f"{where}{msg}") from None
    return out


def _merge(base: dict, extra: dict) -> dict:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def parse_config(text: str) -> dict:
    """Validate a YAML document and merge it over the defaults."""
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark else ""
        raise ConfigError(f"{where}malformed YAML ({getattr(exc, 'problem', exc)})") from None
    cfg = _merge(defaults(), _validate(data, SCHEMA, "", _line_map(text)))
    if cfg["version"] != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {cfg['version']}")
    return cfg


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return defaults()
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from None


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``key.path=value`` strings; values are read as YAML scalars."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node, entry = cfg, SCHEMA
        for k in keys[:-1]:
            if not isinstance(entry.get(k), dict):
                raise ConfigError(f"unknown key '{path}'")
            node, entry = node[k], entry[k]
        leaf = keys[-1]
        if leaf not in entry or isinstance(entry[leaf], dict):
            raise ConfigError(f"unknown key '{path}'")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            value = raw
        node[leaf] = _coerce(entry[leaf][0], value, path)
    return cfg


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None)


@dataclass(frozen=True)
class Scenario:
    comb: CombParams
    det_signal: DetectorParams
    det_idler: DetectorParams
    source: SourceParams
    link: LinkParams
    config: dict


def build_scenario(cfg: dict) -> Scenario:
    """Convert a resolved config into model objects (SI units)."""
    c, d, s, l = cfg["comb"], cfg["detectors"], cfg["source"], cfg["link"]
    try:
        comb = CombParams(fsr_hz=c["fsr_ghz"] * 1e9, linewidth_fwhm_hz=c["linewidth_ghz"] * 1e9,
                          phase_matching_fwhm_hz=c["phase_matching_ghz"] * 1e9,
                          n_lines=c["n_lines"], center_wavelength_nm=c["center_wavelength_nm"],
                          filter_mode=FilterMode(c["filter_mode"]),
                          filter_transmission=c["filter_transmission"])
        dets = [DetectorParams(jitter_rms_s=d[k]["jitter_ps"] * 1e-12,
                               efficiency=d[k]["efficiency"],
                               dark_rate_hz=d[k]["dark_rate_hz"]) for k in ("signal", "idler")]
        source = SourceParams(s["pair_rate_hz"], s["duration_s"], s["seed"], s["window_ns"] * 1e-9)
        link = LinkParams(l["length_km"], l["loss_db"], l["delay_ns"] * 1e-9)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return Scenario(comb, dets[0], dets[1], source, link, cfg)
