"""Experiment configuration: hardware defaults, flat key=value loading with
strict validation, named presets and result emission."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .error_model import ConfigurationError, HardwareParams
from .link_layer import MIM, SENDER_RECEIVER, LinkConfig
from .purification import Scheme

PROTOCOL_MODES = ("tomography", "single-shot", "recurrent")


@dataclass
class ProtocolConfig:
    mode: str = "tomography"
    scheme: Optional[Scheme] = None
    rounds: int = 0
    switch_at: Optional[int] = None

    def validate(self):
        if self.mode not in PROTOCOL_MODES:
            raise ConfigurationError(f"protocol={self.mode!r} not one of {PROTOCOL_MODES}")
        if self.mode == "tomography":
            return
        if self.scheme is None:
            raise ConfigurationError(f"protocol {self.mode!r} needs a scheme")
        if self.mode == "single-shot":
            if self.rounds not in (0, 1):
                raise ConfigurationError("single-shot protocol runs exactly one round")
            self.rounds = 1
        elif self.rounds < 1:
            raise ConfigurationError("recurrent protocol needs rounds >= 1")
        if self.switch_at is not None and not 0 <= self.switch_at < self.rounds:
            raise ConfigurationError("switch_at must fall inside the purification rounds")


@dataclass
class ExperimentConfig:
    hardware: HardwareParams = field(default_factory=HardwareParams)
    link: LinkConfig = field(default_factory=LinkConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    n_measurements: int = 7000
    trials: int = 25
    seed_base: int = 1
    event_cap: int = 10**9

    def validate(self):
        self.hardware.validate()
        self.protocol.validate()
        if self.n_measurements < 0:
            raise ConfigurationError("n_measurements must be >= 0")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.event_cap < 1:
            raise ConfigurationError("event_cap must be >= 1")

    def flat(self) -> dict:
        """Canonical flat key=value view of the resolved configuration."""
        out = {}
        for f in dataclasses.fields(HardwareParams):
            out[f.name] = getattr(self.hardware, f.name)
        out["architecture"] = self.link.architecture
        out["total_length_km"] = self.link.total_length_km
        out["bsa_position_km"] = self.link.bsa_position_km
        out["protocol"] = self.protocol.mode
        out["scheme"] = self.protocol.scheme.value if self.protocol.scheme else ""
        out["rounds"] = self.protocol.rounds
        out["switch_at"] = "" if self.protocol.switch_at is None else self.protocol.switch_at
        out["n_measurements"] = self.n_measurements
        out["trials"] = self.trials
        out["seed_base"] = self.seed_base
        out["event_cap"] = self.event_cap
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.flat(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def copy(self) -> "ExperimentConfig":
        return dataclasses.replace(
            self,
            hardware=dataclasses.replace(self.hardware),
            link=dataclasses.replace(self.link),
            protocol=dataclasses.replace(self.protocol),
        )


def _parse_float(key, raw):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"key {key!r}: malformed number {raw!r}") from None


def _parse_int(key, raw):
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"key {key!r}: malformed integer {raw!r}") from None


def _parse_scheme(key, raw):
    if raw in ("", None):
        return None
    try:
        return Scheme(str(raw).lower())
    except ValueError:
        raise ConfigurationError(
            f"key {key!r}: unknown scheme {raw!r} (expect ss-sp, ss-dp, ds-sp or ds-dp)"
        ) from None


def _parse_arch(key, raw):
    arch = str(raw).lower()
    if arch not in (MIM, SENDER_RECEIVER):
        raise ConfigurationError(f"key {key!r}: unknown architecture {raw!r}")
    return arch


_HW_FLOAT_KEYS = tuple(
    f.name for f in dataclasses.fields(HardwareParams) if f.type == "float"
)
_HW_INT_KEYS = tuple(f.name for f in dataclasses.fields(HardwareParams) if f.type == "int")


def apply_overrides(config: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply flat key=value overrides; last write wins; unknown keys are
    rejected by name."""
    cfg = config.copy()
    for key, raw in overrides.items():
        if key in _HW_FLOAT_KEYS:
            setattr(cfg.hardware, key, _parse_float(key, raw))
        elif key in _HW_INT_KEYS:
            setattr(cfg.hardware, key, _parse_int(key, raw))
        elif key == "architecture":
            cfg.link.architecture = _parse_arch(key, raw)
        elif key == "total_length_km":
            cfg.link.total_length_km = _parse_float(key, raw)
        elif key == "bsa_position_km":
            cfg.link.bsa_position_km = None if raw in ("", None) else _parse_float(key, raw)
        elif key == "protocol":
            cfg.protocol.mode = str(raw)
        elif key == "scheme":
            cfg.protocol.scheme = _parse_scheme(key, raw)
        elif key == "rounds":
            cfg.protocol.rounds = _parse_int(key, raw)
        elif key == "switch_at":
            cfg.protocol.switch_at = None if raw in ("", None) else _parse_int(key, raw)
        elif key == "n_measurements":
            cfg.n_measurements = _parse_int(key, raw)
        elif key == "trials":
            cfg.trials = _parse_int(key, raw)
        elif key == "seed_base":
            cfg.seed_base = _parse_int(key, raw)
        elif key == "event_cap":
            cfg.event_cap = _parse_int(key, raw)
        else:
            raise ConfigurationError(f"unknown configuration key {key!r}")
    # re-run LinkConfig derivation (architecture may pin the analyzer position)
    cfg.link = LinkConfig(cfg.link.architecture, cfg.link.total_length_km,
                          None if cfg.link.architecture == SENDER_RECEIVER else cfg.link.bsa_position_km)
    cfg.validate()
    return cfg


def parse_config_file(path: str) -> dict:
    """Flat UTF-8 key=value lines; '#' starts a comment."""
    overrides = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            overrides[key.strip()] = value.strip()
    return overrides


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Defaults overlaid with file values overlaid with explicit overrides."""
    cfg = ExperimentConfig()
    if path:
        cfg = apply_overrides(cfg, parse_config_file(path))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg


# --- presets ---------------------------------------------------------------


@dataclass(frozen=True)
class PresetPoint:
    series: str
    sweep_name: str
    sweep_value: float
    config: ExperimentConfig


def _base(**over) -> ExperimentConfig:
    return apply_overrides(ExperimentConfig(), over)


_SCHEME_SERIES = (
    ("ss-sp", Scheme.SS_SP),
    ("ss-dp", Scheme.SS_DP),
    ("ds-sp", Scheme.DS_SP),
    ("ds-dp", Scheme.DS_DP),
)

# Ideal photon emission and ideal CNOTs, used by the recurrence studies.
_IDEAL_EMISSION = {"emission_zpl_prob": 1.0, "collection_eff": 1.0, "gate2q_error": 0.0}

_DISTANCE_GRID = (1, 2, 5, 10, 15, 20, 30, 40)

# Rounds swept per scheme in the recurrence presets; stronger schemes peak
# earlier so they need fewer rounds.
_RECURRENCE_ROUNDS = {
    "rss-sp": 7,
    "rss-dp": 4,
    "rds-sp": 5,
    "rds-dp": 3,
}


def preset_fig12() -> list:
    points = []
    for n in (1000, 2000, 5000, 7000, 10000, 20000, 40000, 60000, 80000, 100000):
        cfg = _base(architecture="mim", total_length_km=20, n_measurements=n)
        points.append(PresetPoint("mim", "n_measurements", n, cfg))
    return points


def _single_shot_over_distance(arch: str) -> list:
    points = []
    for dist in _DISTANCE_GRID:
        cfg = _base(architecture=arch, total_length_km=dist)
        points.append(PresetPoint(f"{arch}-none", "distance_km", dist, cfg))
        for name, _scheme in _SCHEME_SERIES:
            cfg = _base(
                architecture=arch,
                total_length_km=dist,
                protocol="single-shot",
                scheme=name,
            )
            points.append(PresetPoint(f"{arch}-{name}", "distance_km", dist, cfg))
    return points


def preset_fig13() -> list:
    return _single_shot_over_distance("mim")


def preset_fig14() -> list:
    return _single_shot_over_distance("mim") + _single_shot_over_distance("sr")


def _recurrent_point(length_km, scheme_name, rounds, qubits=None, switch_at=None, series=None):
    over = dict(
        architecture="mim",
        total_length_km=length_km,
        **_IDEAL_EMISSION,
    )
    if qubits is not None:
        over["qubits_per_qnic"] = qubits
    if rounds == 0:
        over["protocol"] = "tomography"
    else:
        over.update(protocol="recurrent", scheme=scheme_name.lstrip("r"), rounds=rounds)
        if switch_at is not None and switch_at < rounds:
            over["switch_at"] = switch_at
    cfg = _base(**over)
    return PresetPoint(series or scheme_name, "rounds", rounds, cfg)


def _recurrence_preset(length_km) -> list:
    points = [_recurrent_point(length_km, "none", 0)]
    for scheme_name, max_rounds in _RECURRENCE_ROUNDS.items():
        for rounds in range(1, max_rounds + 1):
            points.append(_recurrent_point(length_km, scheme_name, rounds))
    return points


def preset_fig16() -> list:
    return _recurrence_preset(10)


def preset_fig17() -> list:
    return _recurrence_preset(20)


def preset_fig15() -> list:
    points = []
    for qubits in (100, 300, 500, 700):
        for rounds in range(1, 7):
            p = _recurrent_point(10, "rss-sp", rounds, qubits=qubits,
                                 series=f"rss-sp-{qubits}q")
            points.append(PresetPoint(p.series, "rounds", rounds, p.config))
    return points


def preset_fig18() -> list:
    points = []
    for series, switch in (("case-a", 1), ("case-b", 2)):
        for rounds in range(1, 6):
            points.append(
                _recurrent_point(20, "rds-sp", rounds, switch_at=switch, series=series)
            )
    return points


PRESETS: dict = {
    "fig12": preset_fig12,
    "fig13": preset_fig13,
    "fig14": preset_fig14,
    "fig15": preset_fig15,
    "fig16": preset_fig16,
    "fig17": preset_fig17,
    "fig18": preset_fig18,
}


def preset_points(name: str) -> list:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None
    return builder()


# --- result rows -----------------------------------------------------------

RESULT_COLUMNS = (
    "preset",
    "series",
    "sweep_name",
    "sweep_value",
    "mean_f_r",
    "sigma_f_r",
    "min_f_r",
    "max_f_r",
    "mean_f_a",
    "frac_clean",
    "frac_x",
    "frac_z",
    "frac_y",
    "frac_er",
    "frac_mixed",
    "mean_throughput_per_s",
    "mean_raw_rate_per_s",
    "trials",
)


@dataclass(frozen=True)
class ResultRow:
    preset: str
    series: str
    sweep_name: str
    sweep_value: float
    mean_f_r: float
    sigma_f_r: float
    min_f_r: float
    max_f_r: float
    mean_f_a: float
    frac_clean: float
    frac_x: float
    frac_z: float
    frac_y: float
    frac_er: float
    frac_mixed: float
    mean_throughput_per_s: float
    mean_raw_rate_per_s: float
    trials: int

    @classmethod
    def from_aggregate(cls, preset, point: PresetPoint, agg) -> "ResultRow":
        fr = agg.error_fractions
        return cls(
            preset=preset,
            series=point.series,
            sweep_name=point.sweep_name,
            sweep_value=point.sweep_value,
            mean_f_r=agg.mean_f_r,
            sigma_f_r=agg.sigma_f_r,
            min_f_r=agg.min_f_r,
            max_f_r=agg.max_f_r,
            mean_f_a=agg.mean_f_a,
            frac_clean=fr.get("clean", 0.0),
            frac_x=fr.get("x", 0.0),
            frac_z=fr.get("z", 0.0),
            frac_y=fr.get("y", 0.0),
            frac_er=fr.get("er", 0.0),
            frac_mixed=fr.get("mixed", 0.0),
            mean_throughput_per_s=agg.mean_throughput,
            mean_raw_rate_per_s=agg.mean_raw_rate,
            trials=agg.trials,
        )


def _cell(value):
    return repr(value) if isinstance(value, float) else str(value)


def emit_results(rows: Sequence[ResultRow], fmt: str, path: str, meta: dict) -> None:
    """Write rows deterministically with a metadata header embedding the
    resolved config hash and seed base."""
    if not rows:
        raise ValueError("refusing to emit an empty result table")
    if fmt == "csv":
        lines = ["# qlink-results v1 " + json.dumps(meta, sort_keys=True)]
        lines.append(",".join(RESULT_COLUMNS))
        for row in rows:
            lines.append(",".join(_cell(getattr(row, c)) for c in RESULT_COLUMNS))
        payload = "\n".join(lines) + "\n"
    elif fmt == "json":
        doc = {"format": "qlink-results", "version": 1, "meta": meta,
               "rows": [dataclasses.asdict(r) for r in rows]}
        payload = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(payload)


def parse_results(path: str):
    """Inverse of emit_results; returns (rows, meta)."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.startswith("# qlink-results v1 "):
        lines = text.strip().split("\n")
        meta = json.loads(lines[0][len("# qlink-results v1 "):])
        header = lines[1].split(",")
        if tuple(header) != RESULT_COLUMNS:
            raise ValueError("unexpected result columns")
        rows = []
        for line in lines[2:]:
            cells = line.split(",")
            kwargs = {}
            for name, cell in zip(RESULT_COLUMNS, cells):
                if name in ("preset", "series", "sweep_name"):
                    kwargs[name] = cell
                elif name == "trials":
                    kwargs[name] = int(cell)
                else:
                    kwargs[name] = float(cell)
            rows.append(ResultRow(**kwargs))
        return rows, meta
    doc = json.loads(text)
    if doc.get("format") != "qlink-results":
        raise ValueError("not a qlink results file")
    return [ResultRow(**r) for r in doc["rows"]], doc["meta"]
