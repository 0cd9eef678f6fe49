"""JSON run configuration: schema, unit handling, presets and round-tripping.

A document holds exactly one parameter block, either ``params`` (effective
couplings) or ``microscopic`` (atomic inputs), plus optional ``sim``,
``init`` and command blocks.  The parameter block carries the unit mode:

``"kappa"``
    frequencies in units of kappa, with ``kappa_hz`` giving kappa / 2 pi in
    Hz; times in units of 1/kappa.
``"hz"``
    frequencies in Hz (multiplied by 2 pi internally); times in seconds.
``"rad_s"``
    frequencies in rad/s; times in seconds.

:class:`RunConfig` keeps the normalized document (defaults filled, values in
the declared units) so that ``parse_config(emit_config(cfg)) == cfg`` holds
exactly; the rad/s objects are built on demand.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from spinopto.dynamics import SimConfig
from spinopto.errors import ConfigError, SpinoptoError
from spinopto.model import MicroscopicParams, SystemParams
from spinopto.steady import operating_point_drive

UNITS = ("kappa", "hz", "rad_s")
REQUIRED = object()

# kinds: freq / time scale with the unit, num / int / bool / str are plain,
# vec3 and list_num are number lists, section nests another schema
_PARAM_COMMON = {
    "unit": ("str", REQUIRED),
    "kappa_hz": ("num", None),
    "kappa": ("freq", None),
    "delta_p_plus": ("freq", 0.0),
    "delta_p_minus": ("freq", 0.0),
    "nmax_plus": ("num", 0.0),
    "nmax_minus": ("num", 0.0),
    "b": ("vec3", [1.0, 0.0, 0.0]),
    "operating_point": ("section", None),
}

SCHEMA = {
    "params": {
        **_PARAM_COMMON,
        "omega_L": ("freq", REQUIRED),
        "omega_c": ("freq", REQUIRED),
        "S": ("num", REQUIRED),
    },
    "microscopic": {
        **_PARAM_COMMON,
        "g0": ("freq", REQUIRED),
        "delta_ca": ("freq", REQUIRED),
        "upsilon": ("num", REQUIRED),
        "gamma": ("freq", REQUIRED),
        "B": ("num", REQUIRED),
        "N": ("num", 1.0),
        "s": ("num", 0.5),
        "omega_c_bare": ("freq", 0.0),
        "S": ("num", None),
    },
    "operating_point": {
        "n_plus": ("num", REQUIRED),
        "effective_detuning": ("freq", REQUIRED),
        "branch": ("str", "high"),
    },
    "sim": {
        "duration": ("time", None),
        "dt": ("time", None),
        "record_stride": ("int", 1),
        "noise": ("bool", False),
        "seed": ("int", 0),
    },
    "init": {
        "theta0": ("num", math.pi / 2),
        "phi": ("num", 0.0),
        "cavity": ("str", "steady"),
    },
    "fixed_points": {
        "grid_n": ("int", 4096),
    },
    "sweep": {
        "start": ("freq", REQUIRED),
        "stop": ("freq", REQUIRED),
        "step": ("freq", REQUIRED),
        "direction": ("str", "both"),
        "start_theta": ("num", math.pi / 2),
        "capture_radius": ("num", 0.2),
        "grid_n": ("int", 4096),
    },
    "ringdown": {
        "target_theta": ("num", math.pi / 2),
        "deflection": ("num", 0.01),
        "window_start": ("time", None),
        "window_stop": ("time", None),
    },
    "spectrum": {
        "target_theta": ("num", math.pi / 2),
        "phi": ("list_num", [float(x) for x in np.linspace(0, np.pi, 19)[:-1]]),
        "segment_length": ("int", 16384),
        "transient": ("time", None),
    },
    "linear": {
        "target_theta": ("num", math.pi / 2),
        "omega_min": ("freq", None),
        "omega_max": ("freq", None),
        "n_omega": ("int", 512),
        "phi": ("list_num", [float(x) for x in np.linspace(0, np.pi, 19)[:-1]]),
    },
    "analogy": {
        "amplitude": ("num", 1e-3),
        "photon_imbalance": ("num", 0.0),
        "duration": ("time", None),
    },
    "scenario": {
        "name": ("str", REQUIRED),
        "duration": ("time", None),
        "spectrum_duration": ("time", None),
        "thetas": ("list_num", None),
    },
}

SCENARIOS = ("fig2", "fig3", "trigger")

_FIG2 = {
    "unit": "kappa",
    "kappa_hz": 1.5e6,
    "omega_L": 0.033,
    "omega_c": 0.00125,
    "nmax_plus": 15,
    "nmax_minus": 15,
    "S": 10000,
    "delta_p_plus": -4.8,
    "delta_p_minus": -4.8,
}

PRESETS = {
    "fig2": {
        "params": _FIG2,
        "sweep": {"start": -8.0, "stop": 2.0, "step": 0.01},
    },
    "fig3": {
        "params": {
            "unit": "hz",
            "kappa": 1.8e6,
            "omega_L": 200e3,
            "omega_c": -2.3e3,
            "S": 5000,
            "operating_point": {"n_plus": 10, "effective_detuning": 0.37 * 1.8e6, "branch": "high"},
        },
        "sim": {"noise": True, "record_stride": 32, "seed": 7},
        "init": {"theta0": math.pi / 2 - math.radians(1.0)},
        "scenario": {"duration": 8e-3, "spectrum_duration": 12e-3},
        "spectrum": {"transient": 2e-4},
    },
    "trigger": {
        "params": _FIG2,
        "sim": {"record_stride": 100},
        "init": {"cavity": "empty"},
        "scenario": {"duration": 3e4},
    },
}


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_value(kind, v, path):
    if v is None:
        return None
    if kind in ("freq", "time", "num"):
        if not _is_num(v) or not math.isfinite(v):
            raise ConfigError(f"{path}: expected a finite number, got {v!r}", path)
        return float(v)
    if kind == "int":
        if isinstance(v, bool) or not (isinstance(v, int) or (_is_num(v) and float(v).is_integer())):
            raise ConfigError(f"{path}: expected an integer, got {v!r}", path)
        return int(v)
    if kind == "bool":
        if not isinstance(v, bool):
            raise ConfigError(f"{path}: expected true or false, got {v!r}", path)
        return v
    if kind == "str":
        if not isinstance(v, str):
            raise ConfigError(f"{path}: expected a string, got {v!r}", path)
        return v
    if kind in ("vec3", "list_num"):
        if not isinstance(v, list) or not all(_is_num(x) and math.isfinite(x) for x in v):
            raise ConfigError(f"{path}: expected a list of numbers, got {v!r}", path)
        if kind == "vec3" and len(v) != 3:
            raise ConfigError(f"{path}: expected 3 components", path)
        if kind == "list_num" and not v:
            raise ConfigError(f"{path}: list must not be empty", path)
        return [float(x) for x in v]
    raise AssertionError(kind)


def _normalize_section(name, doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object", path)
    schema = SCHEMA[name]
    unknown = sorted(set(doc) - set(schema))
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {', '.join(unknown)}", path)
    missing = [k for k, (_, d) in schema.items() if d is REQUIRED and k not in doc]
    if missing:
        raise ConfigError(f"{path}: missing required field(s) {', '.join(missing)}", path)
    out = {}
    for key, (kind, default) in schema.items():
        sub = f"{path}.{key}"
        if kind == "section":
            out[key] = None if doc.get(key) is None else _normalize_section(key, doc[key], sub)
        else:
            v = doc.get(key, default)
            out[key] = _check_value(kind, copy.deepcopy(v), sub)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated, normalized run configuration.

    ``block`` is ``"params"`` or ``"microscopic"``; ``sections`` maps every
    present section name to its normalized contents in the declared units.
    """

    block: str
    sections: dict = field(default_factory=dict)

    @property
    def unit(self) -> str:
        return self.sections[self.block]["unit"]

    @property
    def freq_scale(self) -> float:
        """Multiplier taking configured frequencies to rad/s."""
        pb = self.sections[self.block]
        if self.unit == "kappa":
            return 2 * math.pi * pb["kappa_hz"]
        return 2 * math.pi if self.unit == "hz" else 1.0

    @property
    def time_scale(self) -> float:
        """Multiplier taking configured times to seconds."""
        return 1.0 / self.freq_scale if self.unit == "kappa" else 1.0

    def section(self, name) -> dict:
        """Section converted to rad/s and seconds (missing sections give defaults)."""
        raw = self.sections.get(name)
        if raw is None:
            raw = _normalize_section(name, {}, name)
        return self._convert(name, raw)

    def _convert(self, name, raw):
        out = {}
        for key, (kind, _) in SCHEMA[name].items():
            v = raw.get(key)
            if v is None:
                out[key] = None
            elif kind == "freq":
                out[key] = v * self.freq_scale
            elif kind == "time":
                out[key] = v * self.time_scale
            elif kind == "section":
                out[key] = self._convert(key, v)
            else:
                out[key] = v
        return out

    def system_params(self) -> SystemParams:
        """Effective parameters in rad/s."""
        pb = self.section(self.block)
        kappa = 2 * math.pi * self.sections[self.block]["kappa_hz"] if self.unit == "kappa" \
            else pb["kappa"]
        common = dict(
            kappa=kappa,
            delta_p_plus=pb["delta_p_plus"],
            delta_p_minus=pb["delta_p_minus"],
            nmax_plus=pb["nmax_plus"],
            nmax_minus=pb["nmax_minus"],
            b=tuple(pb["b"]),
        )
        if self.block == "params":
            p = SystemParams(omega_L=pb["omega_L"], omega_cpl=pb["omega_c"], S=pb["S"], **common)
        else:
            mp = self.microscopic_params()
            if pb["S"] is not None:
                common["S"] = pb["S"]
            p = SystemParams.from_microscopic(mp, **common)
        op = pb["operating_point"]
        if op is not None:
            p, _ = operating_point_drive(p, op["n_plus"], op["effective_detuning"], op["branch"])
        return p

    def microscopic_params(self) -> MicroscopicParams:
        if self.block != "microscopic":
            raise ConfigError("no microscopic block", "microscopic")
        pb = self.section("microscopic")
        return MicroscopicParams(g0=pb["g0"], delta_ca=pb["delta_ca"], upsilon=pb["upsilon"],
                                 gamma=pb["gamma"], B=pb["B"], N=pb["N"], s=pb["s"],
                                 omega_c_bare=pb["omega_c_bare"])

    def sim_config(self, duration=None, seed=None) -> SimConfig:
        """Integration settings; ``duration`` (s) overrides the configured one."""
        sb = self.section("sim")
        dur = duration if duration is not None else sb["duration"]
        if dur is None:
            raise ConfigError("sim.duration: required for this command", "sim.duration")
        return SimConfig(duration=dur, dt=sb["dt"], record_stride=sb["record_stride"],
                         noise_enabled=sb["noise"], seed=sb["seed"] if seed is None else seed)


def _validate(cfg: RunConfig):
    pb = cfg.sections[cfg.block]
    path = cfg.block
    if pb["unit"] not in UNITS:
        raise ConfigError(f"{path}.unit: must be one of {', '.join(UNITS)}", f"{path}.unit")
    if pb["unit"] == "kappa":
        if pb["kappa_hz"] is None or pb["kappa_hz"] <= 0:
            raise ConfigError(f"{path}.kappa_hz: required and positive in kappa units",
                              f"{path}.kappa_hz")
        if pb["kappa"] is not None:
            raise ConfigError(f"{path}.kappa: not allowed in kappa units (kappa is 1)",
                              f"{path}.kappa")
    else:
        if pb["kappa"] is None:
            raise ConfigError(f"{path}.kappa: required in {pb['unit']} units", f"{path}.kappa")
        if pb["kappa_hz"] is not None:
            raise ConfigError(f"{path}.kappa_hz: only allowed in kappa units", f"{path}.kappa_hz")
    op = pb["operating_point"]
    if op is not None:
        if op["branch"] not in ("high", "low"):
            raise ConfigError(f"{path}.operating_point.branch: must be 'high' or 'low'",
                              f"{path}.operating_point.branch")
        raw = cfg.sections[cfg.block]
        for key in ("delta_p_plus", "nmax_plus", "nmax_minus"):
            if raw[key] != 0:
                raise ConfigError(f"{path}.{key}: conflicts with {path}.operating_point",
                                  f"{path}.{key}")
    scen = cfg.sections.get("scenario")
    if scen is not None and scen["name"] not in SCENARIOS:
        raise ConfigError(f"scenario.name: must be one of {', '.join(SCENARIOS)}",
                          "scenario.name")
    init = cfg.sections.get("init")
    if init is not None and init["cavity"] not in ("steady", "empty"):
        raise ConfigError("init.cavity: must be 'steady' or 'empty'", "init.cavity")
    sw = cfg.sections.get("sweep")
    if sw is not None and sw["direction"] not in ("up", "down", "both"):
        raise ConfigError("sweep.direction: must be 'up', 'down' or 'both'", "sweep.direction")
    # build the physical objects once so their own invariants are checked
    try:
        p = cfg.system_params()
        sb = cfg.sections.get("sim")
        if sb is not None and sb["duration"] is not None:
            cfg.sim_config().step_size(p)
    except ConfigError:
        raise
    except (SpinoptoError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}", path) from exc


def parse_config(document) -> RunConfig:
    """Validate a JSON document (string, bytes or already-decoded dict).

    A ``scenario`` block without a parameter block takes its parameters,
    and any other missing sections, from the scenario preset.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", "") from exc
    if not isinstance(document, dict):
        raise ConfigError("config must be a JSON object", "")
    doc = copy.deepcopy(document)
    unknown = sorted(k for k in doc if k not in SCHEMA or k == "operating_point")
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {', '.join(unknown)}", unknown[0])

    scen = doc.get("scenario")
    if isinstance(scen, dict) and scen.get("name") in PRESETS and \
            "params" not in doc and "microscopic" not in doc:
        preset = PRESETS[scen["name"]]
        for key, val in preset.items():
            if key == "scenario":
                doc["scenario"] = {**val, **scen}
            elif key not in doc:
                doc[key] = copy.deepcopy(val)

    blocks = [b for b in ("params", "microscopic") if b in doc]
    if len(blocks) != 1:
        what = "both" if blocks else "neither"
        req = ", ".join(f"params.{k}" for k, (_, d) in SCHEMA["params"].items() if d is REQUIRED)
        raise ConfigError(
            f"exactly one of 'params' or 'microscopic' is required ({what} given); "
            f"required fields: {req}",
            "params",
        )
    block = blocks[0]
    sections = {name: _normalize_section(name, doc[name], name)
                for name in SCHEMA if name in doc and name != "operating_point"}
    cfg = RunConfig(block=block, sections=sections)
    _validate(cfg)
    return cfg


def emit_config(cfg: RunConfig) -> str:
    """Normalized JSON text; parsing it gives back an equal :class:`RunConfig`."""
    return json.dumps(cfg.sections, indent=2, sort_keys=True)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", "") from exc
    return parse_config(text)
