"""INI-style run configuration with strict validation and line-numbered errors.

Example::

    [run]
    experiment = sweep

    [probe]
    kind = superposition
    bandwidth = 0.5

    [grid]
    nbar = 0:1:11
    bandwidth = log:1e-2:10:15

All rates are given in units of the emitter decay rate.
"""
from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import asdict, dataclass, field

import numpy as np

EXPERIMENTS = ("qbhat", "sweep", "readout", "advantage-map", "polarization", "validate")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class ProbeSpec:
    kind: str = "superposition"
    nbar: float = 1.0
    bandwidth: float = 1.0
    polarization: str = "H"
    envelope: str = "exponential"
    center: float = 5.0
    width: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    gamma: float = 1.0
    gamma_star: float = 0.0
    eta: float = 1.0
    probe: ProbeSpec = field(default_factory=ProbeSpec)
    grid: dict = field(default_factory=dict)
    phi: float | None = None
    t_end: float | None = None
    n_points: int = 400
    output_dir: str = "spisim-out"
    workers: int | None = None
    seed: int = 0
    source_text: str = ""

    @property
    def digest(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if k not in ("source_text", "workers", "output_dir")}
        payload["grid"] = {k: [float(x) for x in v] for k, v in sorted(self.grid.items())}
        return hashlib.sha256(repr(sorted(payload.items())).encode()).hexdigest()

    def echo(self) -> str:
        lines = [f"experiment = {self.experiment}",
                 f"emitter: gamma = {self.gamma:g}, gamma_star = {self.gamma_star:g}, eta = {self.eta:g}",
                 "probe: " + ", ".join(f"{k} = {v}" for k, v in asdict(self.probe).items())]
        for k, v in self.grid.items():
            lines.append(f"grid {k}: {len(v)} points in [{v[0]:g}, {v[-1]:g}]")
        if self.phi is not None:
            lines.append(f"phase = {self.phi:g}")
        lines.append(f"output = {self.output_dir}, seed = {self.seed}")
        return "\n".join(lines)


# allowed keys per section: name -> parser
_FLOAT = "float"
_SCHEMA = {
    "run": {"experiment": str, "seed": int, "phase": _FLOAT, "t_end": _FLOAT, "n_points": int},
    "emitter": {"gamma": _FLOAT, "gamma_star": _FLOAT, "eta": _FLOAT},
    "probe": {"kind": str, "nbar": _FLOAT, "bandwidth": _FLOAT, "polarization": str, "envelope": str,
              "center": _FLOAT, "width": _FLOAT},
    "grid": {"nbar": "grid", "bandwidth": "grid", "eta": "grid", "gamma_star": "grid"},
    "output": {"dir": str},
    "execution": {"workers": int},
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:count`` (linear), ``log:start:stop:count`` or a comma-separated list."""
    text = text.strip()
    try:
        if text.startswith("log:"):
            parts = text.split(":")
            if len(parts) != 4:
                raise ValueError
            a, b, n = float(parts[1]), float(parts[2]), int(parts[3])
            if a <= 0 or b <= 0:
                raise ConfigError("log grid bounds must be positive")
            axis = np.logspace(math.log10(a), math.log10(b), n)
        elif ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError
            a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
            axis = np.linspace(a, b, n)
        else:
            axis = np.array([float(x) for x in text.split(",") if x.strip()])
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"malformed grid {text!r}") from None
    if axis.size == 0:
        raise ConfigError("empty grid")
    if axis.size > 1 and np.any(np.diff(axis) <= 0):
        raise ConfigError(f"grid {text!r} is not strictly increasing")
    return axis


def _line_index(text: str) -> dict:
    where = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), no)
    return where


def parse_config(text: str, experiment: str | None = None) -> RunConfig:
    """Parse and validate a configuration; ``experiment`` fills in a missing ``[run] experiment``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section {exc.section!r}", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("cannot parse line", lineno) from None
    where = _line_index(text)

    values: dict = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", where.get((section, None)))
        for key, raw in cp.items(section):
            line = where.get((section, key))
            kind = _SCHEMA[section].get(key)
            if kind is None:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line)
            try:
                if kind == "grid":
                    val = parse_grid(raw)
                elif kind == _FLOAT:
                    val = float(raw)
                    if not math.isfinite(val):
                        raise ValueError
                elif kind is int:
                    val = int(raw)
                else:
                    val = raw.strip()
            except ConfigError as exc:
                raise ConfigError(str(exc), line) from None
            except ValueError:
                raise ConfigError(f"invalid value {raw!r} for {key!r}", line) from None
            values[(section, key)] = (val, line)

    def get(section, key, default=None):
        return values.get((section, key), (default, None))

    default_experiment = experiment
    experiment, line = get("run", "experiment", default_experiment)
    if experiment is None:
        raise ConfigError("missing [run] experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}", line)

    def positive(section, key, default):
        val, line = get(section, key, default)
        if not val > 0:
            raise ConfigError(f"{key} must be positive, got {val}", line)
        return val

    gamma = positive("emitter", "gamma", 1.0)
    gamma_star, line = get("emitter", "gamma_star", 0.0)
    if gamma_star < 0:
        raise ConfigError("gamma_star must be non-negative", line)
    eta, line = get("emitter", "eta", 1.0)
    if not 0 <= eta <= 1:
        raise ConfigError("eta must lie in [0, 1]", line)

    kind, line = get("probe", "kind", "superposition")
    if kind not in ("coherent", "superposition"):
        raise ConfigError(f"probe kind must be 'coherent' or 'superposition', got {kind!r}", line)
    nbar, line = get("probe", "nbar", 1.0)
    if nbar < 0 or (kind == "superposition" and nbar > 1):
        raise ConfigError(f"nbar={nbar} outside the allowed range for a {kind} probe", line)
    default_bw = 5e-2 if experiment == "advantage-map" else 1.0
    bandwidth = positive("probe", "bandwidth", default_bw)
    pol, line = get("probe", "polarization", "R" if experiment in ("readout", "advantage-map") else "H")
    if pol not in ("H", "V", "D", "A", "R", "L"):
        raise ConfigError(f"unknown polarization {pol!r}", line)
    envelope, line = get("probe", "envelope", "exponential")
    if envelope not in ("exponential", "gaussian"):
        raise ConfigError(f"unknown envelope {envelope!r}", line)
    center = positive("probe", "center", 5.0)
    width = positive("probe", "width", 1.0)
    probe = ProbeSpec(kind, nbar, bandwidth, pol, envelope, center, width)

    grid = {}
    for key in ("nbar", "bandwidth", "eta", "gamma_star"):
        val, line = get("grid", key)
        if val is None:
            continue
        if key == "bandwidth" and np.any(val <= 0):
            raise ConfigError("bandwidth grid must be positive", line)
        if key == "eta" and (np.any(val < 0) or np.any(val > 1)):
            raise ConfigError("eta grid must lie in [0, 1]", line)
        if key in ("nbar", "gamma_star") and np.any(val < 0):
            raise ConfigError(f"{key} grid must be non-negative", line)
        if key == "nbar" and kind == "superposition" and np.any(val > 1):
            raise ConfigError("superposition nbar grid must lie in [0, 1]", line)
        grid[key] = val

    phase, line = get("run", "phase")
    if phase is not None and not -math.pi < phase <= math.pi:
        raise ConfigError("phase must lie in (-pi, pi]", line)
    t_end, line = get("run", "t_end")
    if t_end is not None and t_end <= 0:
        raise ConfigError("t_end must be positive", line)
    n_points, line = get("run", "n_points", 400)
    if n_points < 2:
        raise ConfigError("n_points must be at least 2", line)
    workers, line = get("execution", "workers")
    if workers is not None and workers < 1:
        raise ConfigError("workers must be positive", line)
    seed, _ = get("run", "seed", 0)
    out, _ = get("output", "dir", "spisim-out")

    return RunConfig(experiment=experiment, gamma=gamma, gamma_star=gamma_star, eta=eta, probe=probe,
                     grid=grid, phi=phase, t_end=t_end, n_points=n_points, output_dir=out,
                     workers=workers, seed=seed, source_text=text)
