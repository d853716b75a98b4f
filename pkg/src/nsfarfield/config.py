"""Experiment configuration: flat ``key = value`` text with ``[section]`` headers.

Every key is checked against ``SCHEMA`` before anything runs; unknown
sections or keys and unparsable values raise ``ConfigError`` carrying the
offending line number.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .solver import FAMILIES

SUITES = ("kernel", "directions", "profile", "bounds", "pressure", "halfspace", "peetre", "largetime")
DEFAULT_SUITES = tuple(s for s in SUITES if s != "largetime")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


def _floats(text: str) -> tuple:
    parts = [p.strip() for p in text.replace(";", ",").split(",") if p.strip()]
    return tuple(float(p) for p in parts)


def _fraction(text: str) -> float:
    # accepts "0.25", "1/256", "2.5e-4"
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _matrix(text: str) -> tuple:
    rows = [r for r in text.split(";") if r.strip()]
    mat = tuple(tuple(float(v) for v in r.split(",")) for r in rows)
    if len({len(r) for r in mat}) != 1 or len(mat) != len(mat[0]):
        raise ValueError("matrix must be square, rows separated by ';'")
    return mat


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _suites(text: str) -> tuple:
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in names if s not in SUITES]
    if bad:
        raise ValueError(f"unknown suite(s) {bad}; choose from {SUITES}")
    return names


def _family(text: str) -> str:
    text = text.strip()
    if text not in FAMILIES:
        raise ValueError(f"unknown datum family {text!r}")
    return text


# section -> key -> (parser, default)
SCHEMA = {
    "grid": {"d": (int, 2), "n": (int, 1024), "L": (float, 32.0), "pad": (int, 2)},
    "datum": {"family": (_family, "anisotropic"), "amplitude": (float, 1.0)},
    "time": {"t_end": (_fraction, 0.25), "dt": (_fraction, 1 / 256),
             "record_at": (_floats, (0.0, 0.01, 0.0625, 0.125, 0.25))},
    "run": {"seed": (int, 20240611), "suites": (_suites, DEFAULT_SUITES), "out": (str, "nsfarfield-out"),
            "snapshots": (_bool, True)},
    "kernel": {"t_list": (_floats, (0.25, 1.0, 4.0)), "gshift_n": (int, 512), "gshift_L": (float, 16.0),
               "samples": (int, 10)},
    "directions": {"K": (_matrix, ((1.0, 0.0), (0.0, 0.0))), "j": (int, 1), "random_K": (int, 1000)},
    "bounds": {"times": (_floats, (0.0625, 0.125)), "n_rays": (int, 64), "delta_deg": (float, 10.0),
               "probe_theta": (float, 90.0), "shell_R": (_floats, (6.0, 9.0, 12.0))},
    "halfspace": {"family": (_family, "halfspace"), "offset": (float, 1.0)},
    "peetre": {"alphas": (_floats, (2.0, 1.0)), "t_list": (_floats, (0.25, 1.0, 4.0)),
               "theta": (float, 2.0), "pairs": (int, 1000)},
    "largetime": {"n": (int, 256), "L": (float, 32.0), "dt": (_fraction, 1 / 32), "t_end": (_fraction, 16.0),
                  "target_sup": (float, 0.1), "family": (_family, "anisotropic")},
    "tolerances": {
        "decomposition": (float, 1e-8), "gshift": (float, 1e-6), "l1_scaling": (float, 1e-5),
        "angle": (float, 1e-9), "profile_rel": (float, 0.25), "exponent_margin": (float, 0.3),
        "upper_factor": (float, 4.0), "lower_factor": (float, 0.25), "exceptional_ratio": (float, 0.1),
        "shell_ratio": (float, 2.0), "pressure_rel": (float, 0.25), "angular_variation": (float, 0.05),
        "halfspace_cross": (float, 1e-13), "tangential_band": (float, 0.2), "divergence": (float, 1e-6),
        "peetre_ratio": (float, 50.0), "peetre_c0": (float, 2.0), "slope_margin": (float, 0.3),
    },
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    source: str = "<defaults>"
    smoke: bool = False

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def to_dict(self) -> dict:
        out = {}
        for sec, kv in self.values.items():
            out[sec] = {k: (list(map(list, v)) if k == "K" else list(v) if isinstance(v, tuple) else v)
                        for k, v in kv.items()}
        return out

    def quick(self) -> "ExperimentConfig":
        """Smoke scale: n = 256 and t_end = 0.0625."""
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals["grid"]["n"] = 256
        vals["time"]["t_end"] = 0.0625
        vals["time"]["dt"] = max(vals["time"]["dt"], 1 / 128)
        vals["bounds"]["times"] = tuple(t for t in vals["bounds"]["times"] if t <= 0.0625) or (0.0625,)
        vals["kernel"]["gshift_n"] = min(vals["kernel"]["gshift_n"], 512)
        vals["directions"]["random_K"] = min(vals["directions"]["random_K"], 200)
        vals["largetime"]["t_end"] = min(vals["largetime"]["t_end"], 4.0)
        return ExperimentConfig(vals, self.source, smoke=True)


def defaults() -> ExperimentConfig:
    return ExperimentConfig({s: {k: d for k, (_, d) in kv.items()} for s, kv in SCHEMA.items()})


def _line_index(text: str) -> dict:
    """(section, key) -> line number; sections map to their header line."""
    where, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            where.setdefault((section, None), no)
        elif section is not None:
            key = line.split("=", 1)[0].split(":", 1)[0].strip()
            where.setdefault((section, key), no)
    return where


def parse(text: str, source: str = "<config>") -> ExperimentConfig:
    lines = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), strict=True)
    parser.optionxform = str  # keys are case sensitive (L vs l)
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", exc.lineno, source) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line (expected key = value)", line, source) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, source) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, source) from None
    cfg = defaults()
    cfg.source = source
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)), source)
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line, source)
            conv = SCHEMA[section][key][0]
            try:
                cfg.values[section][key] = conv(raw)
            except (TypeError, ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {exc}", line, source) from None
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), str(path))


def validate(cfg: ExperimentConfig) -> None:
    g, t = cfg["grid"], cfg["time"]
    if g["d"] not in (2, 3):
        raise ConfigError("grid.d must be 2 or 3", None, cfg.source)
    if g["n"] < 8 or g["n"] & (g["n"] - 1):
        raise ConfigError("grid.n must be a power of two >= 8", None, cfg.source)
    if g["pad"] < 2 or g["L"] <= 0:
        raise ConfigError("grid.pad must be >= 2 and grid.L positive", None, cfg.source)
    if not (t["t_end"] > 0 and t["dt"] > 0) or not math.isfinite(t["t_end"]):
        raise ConfigError("time.t_end and time.dt must be positive", None, cfg.source)
    if cfg["directions"]["j"] not in range(1, len(cfg["directions"]["K"]) + 1):
        raise ConfigError("directions.j out of range for K", None, cfg.source)
