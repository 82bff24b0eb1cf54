"""Experiment configuration: INI sections, typed defaults and named presets.

Layering, lowest priority first: built-in defaults, preset, config file,
command-line overrides. Unknown sections and keys are rejected with the
file and line they appear on.
"""
from __future__ import annotations

import configparser
import copy
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from .controller import ControllerState, DesiredProfile
from .errors import ConfigurationError
from .plant import ExcitationSpec, PlantParams, PlantSimulator
from .training import METHODS, LearningConfig

__all__ = ["SCHEMA", "PRESETS", "ExperimentConfig", "load_config"]

_PP, _EX, _DP = PlantParams(), ExcitationSpec(), DesiredProfile()


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        v = text.strip().lower()
        if v not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return v
    return parse


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v not in configparser.ConfigParser.BOOLEAN_STATES:
        raise ValueError(f"expected a boolean, got {text!r}")
    return configparser.ConfigParser.BOOLEAN_STATES[v]


def _int(text: str) -> int:
    return int(text.strip())


def _float(text: str) -> float:
    return float(text.strip())


def _opt_float(text: str) -> Optional[float]:
    v = text.strip().lower()
    return None if v in ("", "none") else float(v)


def _str(text: str) -> str:
    return text.strip()


# section -> key -> (parser, default)
SCHEMA: Dict[str, Dict[str, Tuple[Callable[[str], Any], Any]]] = {
    "plant": {
        "omega": (_float, _PP.omega),
        "zeta": (_float, _PP.zeta),
        "gain": (_float, _PP.gain),
        "cubic": (_float, _PP.cubic),
        "noise_std": (_float, _PP.noise_std),
        "seed": (_int, 0),
    },
    "excitation": {
        "kind": (_choice("prbs", "multisine", "chirp"), _EX.kind),
        "amplitude": (_float, _EX.amplitude),
        "offset": (_float, _EX.offset),
        "horizon": (_float, _EX.horizon),
        "dt": (_float, _EX.dt),
        "seed": (_int, _EX.seed),
        "hold": (_float, _EX.hold),
        "f_min": (_float, _EX.f_min),
        "f_max": (_float, _EX.f_max),
        "n_tones": (_int, _EX.n_tones),
    },
    "identify": {
        "architecture": (_choice("dlnu", "dqnu"), "dqnu"),
        "method": (_choice(*METHODS), "rtrl"),
        "mu": (_float, 1.0),
        "epochs": (_int, 10),
        "n_y": (_int, 3),
        "n_u": (_int, 5),
        "normalize": (_bool, True),
        "series_parallel": (_bool, False),
        "standardize": (_bool, False),
        "evaluation": (_choice("free_run", "one_step"), "free_run"),
    },
    "control": {
        "architecture": (_choice("lnu", "qnu"), "qnu"),
        "method": (_choice(*METHODS), "bptt"),
        "mu": (_float, 0.00818),
        "epochs": (_int, 5),
        "n_qy": (_int, 0),
        "n_qe": (_int, 3),
        "resample_stride": (_int, 1),
        "normalize": (_bool, False),
        "q_limit": (_opt_float, None),
        "desired": (_choice(*DesiredProfile.KINDS), _DP.kind),
        "desired_center": (_float, _DP.center),
        "desired_amplitude": (_float, _DP.amplitude),
        "desired_f_min": (_float, _DP.f_min),
        "desired_f_max": (_float, _DP.f_max),
        "desired_n_tones": (_int, _DP.n_tones),
        "desired_hold": (_float, _DP.hold),
        "desired_seed": (_int, _DP.seed),
        "disturbance": (_float, 0.0),
        "y_init": (_float, 0.0),
    },
    "bench": {
        "budget_ms": (_float, 5.0),
        "steps": (_int, 20000),
        "warmup": (_int, 1000),
    },
    "output": {
        "directory": (_str, "."),
        "formats": (_choice("csv"), "csv"),
        "timing": (_bool, False),
    },
}

_IDENT_FIG5 = {"architecture": "dlnu", "method": "rtrl", "mu": 1.0, "epochs": 10,
               "n_y": 3, "n_u": 5, "normalize": True}
_IDENT_FIG6 = dict(_IDENT_FIG5, architecture="dqnu")

PRESETS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "fig5": {"identify": _IDENT_FIG5},
    "fig6": {"identify": _IDENT_FIG6},
    "fig7": {
        "identify": _IDENT_FIG6,
        "control": {"architecture": "lnu", "method": "rtrl", "mu": 0.1, "resample_stride": 5,
                    "epochs": 200, "n_qy": 0, "n_qe": 2, "normalize": False,
                    "desired": "band"},
    },
    "fig8": {
        "identify": _IDENT_FIG6,
        "control": {"architecture": "qnu", "method": "bptt", "mu": 0.00818, "resample_stride": 1,
                    "epochs": 5, "n_qy": 0, "n_qe": 3, "desired": "band"},
    },
    "fig9": {
        "identify": _IDENT_FIG6,
        "control": {"architecture": "qnu", "method": "bptt", "mu": 0.001, "resample_stride": 1,
                    "epochs": 5, "n_qy": 3, "n_qe": 3, "desired": "zero", "disturbance": 0.5},
    },
}


def _defaults() -> Dict[str, Dict[str, Any]]:
    return {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:\s#;][^=:]*?)\s*[=:]")


def _line_numbers(text: str) -> Dict[Tuple[Optional[str], Optional[str]], int]:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    where: Dict[Tuple[Optional[str], Optional[str]], int] = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(line)
        if m and not line[:1].isspace():
            where.setdefault((section, m.group(1).strip().lower()), no)
    return where


def load_config(path) -> Dict[str, Dict[str, Any]]:
    """Parse and type-check an INI file into a nested override dict."""
    return _load(path)[0]


def _load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigurationError(str(exc).replace("\n", " ")) from None
    lines = _line_numbers(text)
    out: Dict[str, Dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            no = lines.get((section, None), "?")
            raise ConfigurationError(
                f"{path}:{no}: unknown section [{section}]; expected one of {sorted(SCHEMA)}")
        for key, raw in parser.items(section):
            no = lines.get((section, key), "?")
            if key not in SCHEMA[section]:
                raise ConfigurationError(f"{path}:{no}: unknown key {key!r} in [{section}]")
            conv = SCHEMA[section][key][0]
            try:
                out.setdefault(section, {})[key] = conv(raw)
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{no}: [{section}] {key}: {exc}") from None
    where = {(sec, key): f"{path}:{lines.get((sec, key), '?')}" for sec in out for key in out[sec]}
    return out, where


def _anchor(msg: str, where, overrides) -> str:
    """Prefix a validation message with the file line of the offending key, if it came from a file."""
    m = re.match(r"\[(\w+)\] (\w+)", msg)
    if m:
        section, key = m.groups()
        if (section, key) in where and key not in overrides.get(section, {}):
            return f"{where[section, key]}: {msg}"
    return msg


@dataclass
class ExperimentConfig:
    """Resolved configuration with builders for the library objects."""

    values: Dict[str, Dict[str, Any]] = field(default_factory=_defaults)
    preset: Optional[str] = None

    @classmethod
    def build(cls, preset: Optional[str] = None, path=None,
              overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> "ExperimentConfig":
        values = _defaults()
        layers = []
        where: Dict[Tuple[str, str], str] = {}
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            layers.append(PRESETS[preset])
        if path is not None:
            values_from_file, where = _load(path)
            layers.append(values_from_file)
        if overrides:
            layers.append(overrides)
        for layer in layers:
            for section, keys in layer.items():
                if section not in SCHEMA:
                    raise ConfigurationError(f"unknown section [{section}]")
                for key, value in keys.items():
                    if key not in SCHEMA[section]:
                        raise ConfigurationError(f"unknown key {key!r} in [{section}]")
                    values[section][key] = copy.deepcopy(value)
        cfg = cls(values, preset)
        try:
            cfg.validate()
        except ConfigurationError as exc:
            raise ConfigurationError(_anchor(str(exc), where, overrides or {})) from None
        return cfg

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.values[section]

    def validate(self) -> None:
        """Construct every derived object once so bad values fail early."""
        self.plant_params()
        self.excitation_spec()
        self.identify_config()
        self.control_config()
        self.controller_state()
        self.desired_profile()
        b = self["bench"]
        if b["steps"] < 1 or b["warmup"] < 0:
            raise ConfigurationError("[bench] steps must be >= 1 and warmup >= 0")
        if not b["budget_ms"] >= 0:
            raise ConfigurationError("[bench] budget_ms must be >= 0")

    @staticmethod
    def _wrap(section: str, fn):
        try:
            return fn()
        except ConfigurationError as exc:
            raise ConfigurationError(f"[{section}] {exc}") from None

    # --- builders ------------------------------------------------------------

    def plant_params(self) -> PlantParams:
        p = self["plant"]
        return self._wrap("plant", lambda: PlantParams(p["omega"], p["zeta"], p["gain"], p["cubic"],
                                                       p["noise_std"]))

    def simulator(self) -> PlantSimulator:
        return PlantSimulator(self.plant_params(), self["excitation"]["dt"], self["plant"]["seed"])

    def excitation_spec(self) -> ExcitationSpec:
        e = self["excitation"]
        return self._wrap("excitation", lambda: ExcitationSpec(
            kind=e["kind"], amplitude=e["amplitude"], horizon=e["horizon"], dt=e["dt"],
            seed=e["seed"], hold=e["hold"], f_min=e["f_min"], f_max=e["f_max"],
            n_tones=e["n_tones"], offset=e["offset"]))

    def identify_config(self) -> LearningConfig:
        i = self["identify"]
        return self._wrap("identify", lambda: LearningConfig(
            mu=i["mu"], epochs=i["epochs"], normalize=i["normalize"], n_y=i["n_y"], n_u=i["n_u"],
            series_parallel=i["series_parallel"]))

    def control_config(self) -> LearningConfig:
        c = self["control"]
        return self._wrap("control", lambda: LearningConfig(
            mu=c["mu"], epochs=c["epochs"], normalize=c["normalize"], n_y=c["n_qy"], n_u=c["n_qe"]))

    def controller_state(self) -> ControllerState:
        c = self["control"]
        return self._wrap("control", lambda: ControllerState.zeros(
            c["architecture"], c["n_qy"], c["n_qe"], resample_stride=c["resample_stride"],
            q_limit=c["q_limit"]))

    def desired_profile(self) -> DesiredProfile:
        c = self["control"]
        return self._wrap("control", lambda: DesiredProfile(
            kind=c["desired"], center=c["desired_center"], amplitude=c["desired_amplitude"],
            f_min=c["desired_f_min"], f_max=c["desired_f_max"], n_tones=c["desired_n_tones"],
            hold=c["desired_hold"], seed=c["desired_seed"]))

    def desired(self, n: int, dt: float) -> np.ndarray:
        return self.desired_profile().samples(n, dt)
