"""Scenario files: a sectioned key = value format read with configparser.

    [scenario]      name, seed
    [background]    kind (euclidean | hyperbolic | custom), m, curvature_scale,
                    warp (custom only: linear | sinh | blend), r_hi, r_lo, yamabe_lower
    [initial_data]  family, u_lo, u_hi, frequency, width, profile, table
    [run]           k_list, T, dt, h, spacing, refine_strength, newton_tol,
                    newton_max_iter, max_halvings, output_stride
    [diagnostics]   r0, p, sample_times, sobolev_samples, calibrate
    [exhaustion]    enabled, r0

Lists are comma separated.  Numbers may be written as fractions ("1/64").
A user table is a list of r:u pairs ("0:2, 1:2, 2:1.5, 3:1").
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from .background import BackgroundManifold, InvalidDimension, custom, euclidean, hyperbolic
from .exhaustion import MIN_GAP
from .flow import DEFAULT_STEPS, MAX_HALVINGS, NEWTON_MAX_ITER, NEWTON_TOL
from .initial import InitialDataSpec

KEYS = {
    "scenario": {"name", "seed"},
    "background": {"kind", "m", "curvature_scale", "warp", "r_hi", "r_lo", "yamabe_lower"},
    "initial_data": {"family", "u_lo", "u_hi", "frequency", "width", "profile", "table"},
    "run": {
        "k_list", "t", "dt", "h", "spacing", "refine_strength", "newton_tol",
        "newton_max_iter", "max_halvings", "output_stride",
    },
    "diagnostics": {"r0", "p", "sample_times", "sobolev_samples", "calibrate"},
    "exhaustion": {"enabled", "r0"},
}
LP_GAP = 5  # lp norms need r0 + 5 <= k


class ConfigError(ValueError):
    """Parse or validation failure; ``line`` is the 1-based line in the source when known."""

    def __init__(self, message: str, source: str = "<string>", line: int | None = None):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")
        self.source = source
        self.line = line


@dataclass(frozen=True)
class BackgroundConfig:
    kind: str
    m: int
    curvature_scale: float = 1.0
    warp: str | None = None
    r_hi: float | None = None
    r_lo: float | None = None
    yamabe_lower: float | None = None

    def build(self) -> BackgroundManifold:
        if self.kind == "euclidean":
            return euclidean(self.m)
        if self.kind == "hyperbolic":
            return hyperbolic(self.m, self.curvature_scale)
        return custom(self.m, self.warp, self.r_hi, self.r_lo, self.yamabe_lower)


@dataclass(frozen=True)
class RunConfig:
    k_list: tuple[int, ...]
    T: float
    dt: float
    h: float = 1.0 / 64
    spacing: str = "uniform"
    refine_strength: float = 0.5
    newton_tol: float = NEWTON_TOL
    newton_max_iter: int = NEWTON_MAX_ITER
    max_halvings: int = MAX_HALVINGS
    output_stride: int = 8

    def solver(self) -> dict:
        return {
            "newton_tol": self.newton_tol,
            "newton_max_iter": self.newton_max_iter,
            "max_halvings": self.max_halvings,
        }


@dataclass(frozen=True)
class DiagnosticsConfig:
    r0: tuple[float, ...] = (1.0,)
    p: tuple[float, ...] = (2.0, 3.0)
    sample_times: tuple[float, ...] = ()
    sobolev_samples: int = 0
    calibrate: bool = True


@dataclass(frozen=True)
class ExhaustionConfig:
    enabled: bool = False
    r0: float = 2.0


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    background: BackgroundConfig
    initial: InitialDataSpec
    run: RunConfig
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    exhaustion: ExhaustionConfig = field(default_factory=ExhaustionConfig)

    def echo(self) -> dict:
        """Every setting, defaults included, as plain JSON-ready data."""
        out = asdict(self)
        out["initial"] = {k: v for k, v in out["initial"].items() if v is not None}
        return out


def _number(text: str) -> float:
    return float(Fraction(text.strip()))


def _integer(text: str) -> int:
    v = Fraction(text.strip())
    if v.denominator != 1:
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _list(text: str, conv) -> tuple:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    if not items:
        raise ValueError("empty list")
    return tuple(conv(s) for s in items)


def _boolean(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _table(text: str) -> tuple[tuple[float, float], ...]:
    rows = []
    for item in _list(text, str):
        r, sep, u = item.partition(":")
        if not sep:
            raise ValueError(f"table entry {item!r} is not of the form r:u")
        rows.append((_number(r), _number(u)))
    return tuple(rows)


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        head = re.fullmatch(r"\[([^\]]+)\]", s)
        if head:
            current = head.group(1).strip().lower()
            if key is None and current == section:
                return i
            continue
        if current == section and key is not None:
            name = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            if name == key:
                return i
    return None


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, text: str, source: str):
        self.parser, self.text, self.source = parser, text, source

    def error(self, message: str, section: str, key: str | None = None) -> ConfigError:
        return ConfigError(message, self.source, _line_of(self.text, section, key))

    def get(self, section: str, key: str, conv=str, default=None, required: bool = False):
        if not self.parser.has_option(section, key):
            if required:
                raise self.error(f"missing required key [{section}] {key}", section)
            return default
        raw = self.parser.get(section, key)
        try:
            return conv(raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise self.error(f"bad value for [{section}] {key} = {raw!r}: {exc}", section, key) from None


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.ParsingError as exc:
        line, content = exc.errors[0]
        raise ConfigError(f"cannot parse {content.strip()!r}: expected [section] or key = value", source, line) from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse: {exc.message}", source, getattr(exc, "lineno", None)) from None
    rd = _Reader(parser, text, source)

    for section in parser.sections():
        if section not in KEYS:
            raise rd.error(f"unknown section [{section}]", section)
        for key in parser.options(section):
            if key not in KEYS[section]:
                raise rd.error(f"unknown key {key!r} in [{section}]", section, key)
    for section in ("scenario", "background", "initial_data", "run"):
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]", source)

    name = rd.get("scenario", "name", required=True).strip()
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise rd.error(f"scenario name {name!r} must use letters, digits, '.', '_' or '-'", "scenario", "name")
    seed = rd.get("scenario", "seed", _integer, 0)

    kind = rd.get("background", "kind", required=True).strip().lower()
    if kind not in ("euclidean", "hyperbolic", "custom"):
        raise rd.error(f"unknown background kind {kind!r}", "background", "kind")
    m = rd.get("background", "m", _integer, required=True)
    bcfg = BackgroundConfig(
        kind=kind,
        m=m,
        curvature_scale=rd.get("background", "curvature_scale", _number, 1.0),
        warp=rd.get("background", "warp", lambda s: s.strip(), None),
        r_hi=rd.get("background", "r_hi", _number, None),
        r_lo=rd.get("background", "r_lo", _number, None),
        yamabe_lower=rd.get("background", "yamabe_lower", _number, None),
    )
    if kind == "custom" and (bcfg.warp is None or bcfg.r_hi is None or bcfg.r_lo is None):
        raise rd.error("a custom background needs warp, r_hi and r_lo", "background")
    if kind != "custom" and any(v is not None for v in (bcfg.warp, bcfg.r_hi, bcfg.r_lo, bcfg.yamabe_lower)):
        raise rd.error("warp, r_hi, r_lo and yamabe_lower apply to custom backgrounds only", "background")
    try:
        bcfg.build()
    except InvalidDimension:
        raise
    except ValueError as exc:
        raise rd.error(str(exc), "background") from None

    u_lo = rd.get("initial_data", "u_lo", _number, required=True)
    try:
        init = InitialDataSpec(
            family=rd.get("initial_data", "family", lambda s: s.strip(), required=True),
            u_lo=u_lo,
            u_hi=rd.get("initial_data", "u_hi", _number, u_lo),
            frequency=rd.get("initial_data", "frequency", _number, 8.0),
            width=rd.get("initial_data", "width", _number, 1.0),
            profile=rd.get("initial_data", "profile", lambda s: s.strip(), "algebraic"),
            table=rd.get("initial_data", "table", _table, None),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise rd.error(str(exc), "initial_data") from None

    T = rd.get("run", "t", _number, required=True)
    run = RunConfig(
        k_list=rd.get("run", "k_list", lambda s: _list(s, _integer), required=True),
        T=T,
        dt=rd.get("run", "dt", _number, T / DEFAULT_STEPS),
        h=rd.get("run", "h", _number, 1.0 / 64),
        spacing=rd.get("run", "spacing", lambda s: s.strip(), "uniform"),
        refine_strength=rd.get("run", "refine_strength", _number, 0.5),
        newton_tol=rd.get("run", "newton_tol", _number, NEWTON_TOL),
        newton_max_iter=rd.get("run", "newton_max_iter", _integer, NEWTON_MAX_ITER),
        max_halvings=rd.get("run", "max_halvings", _integer, MAX_HALVINGS),
        output_stride=rd.get("run", "output_stride", _integer, 8),
    )
    diag = DiagnosticsConfig(
        r0=rd.get("diagnostics", "r0", lambda s: _list(s, _number), (1.0,)),
        p=rd.get("diagnostics", "p", lambda s: _list(s, _number), (2.0, 3.0)),
        sample_times=rd.get("diagnostics", "sample_times", lambda s: _list(s, _number), (T,)),
        sobolev_samples=rd.get("diagnostics", "sobolev_samples", _integer, 0),
        calibrate=rd.get("diagnostics", "calibrate", _boolean, True),
    )
    exh = ExhaustionConfig(
        enabled=rd.get("exhaustion", "enabled", _boolean, len(run.k_list) >= 2),
        r0=rd.get("exhaustion", "r0", _number, 2.0),
    )
    scenario = Scenario(name, seed, bcfg, init, run, diag, exh)
    _validate(scenario, rd)
    return scenario


def _validate(s: Scenario, rd: _Reader) -> None:
    run, diag, exh = s.run, s.diagnostics, s.exhaustion
    if not (run.T > 0 and run.dt > 0 and run.h > 0):
        raise rd.error("T, dt and h must be positive", "run")
    ks = run.k_list
    if any(r <= 0 for r in diag.r0):
        raise rd.error("every r0 must be positive", "diagnostics", "r0")
    if len(set(ks)) != len(ks) or list(ks) != sorted(ks):
        raise rd.error("k_list must be strictly increasing", "run", "k_list")
    if min(ks) < max(diag.r0) + LP_GAP:
        raise rd.error(
            f"k too small for r0: k={min(ks)} < max(r0) + {LP_GAP} = {max(diag.r0) + LP_GAP}", "run", "k_list"
        )
    if exh.enabled:
        if len(ks) < 2:
            raise rd.error("exhaustion needs at least two values in k_list", "exhaustion", "enabled")
        if min(ks) < exh.r0 + MIN_GAP:
            raise rd.error(
                f"k too small for r0: k={min(ks)} < exhaustion r0 + {MIN_GAP} = {exh.r0 + MIN_GAP}", "exhaustion", "r0"
            )
    if run.spacing not in ("uniform", "geometric-refinement-near-boundary"):
        raise rd.error(f"unknown spacing {run.spacing!r}", "run", "spacing")
    for k in ks:
        n = k / run.h
        if abs(n - round(n)) > 1e-9 * n:
            raise rd.error(f"h={run.h} does not divide k={k}", "run", "h")
        if round(n) < 16:
            raise rd.error(f"h={run.h} gives fewer than 16 intervals on B_{k}", "run", "h")
    if diag.calibrate:
        n_steps = max(1, math.ceil(run.T / run.dt - 1e-9))
        coarse_ok = all(round(k / run.h) % 2 == 0 and round(k / run.h) // 2 >= 16 for k in ks)
        if not coarse_ok or n_steps % 2:
            raise rd.error(
                "calibration needs a half-resolution twin: an even number of steps and of grid intervals, "
                "with at least 16 intervals after coarsening", "diagnostics", "calibrate")
    if run.newton_tol <= 0 or run.newton_max_iter < 1 or run.max_halvings < 0 or run.output_stride < 1:
        raise rd.error("solver settings out of range", "run")
    if any(p <= 1 for p in diag.p):
        raise rd.error("every exponent p must exceed 1", "diagnostics", "p")
    step = run.T / max(1, math.ceil(run.T / run.dt - 1e-9))
    for t in diag.sample_times:
        j = t / step
        if not (0 < t <= run.T * (1 + 1e-12)) or abs(j - round(j)) > 1e-6:
            raise rd.error(f"sample time {t} is not a stored time in (0, T]", "diagnostics", "sample_times")
    if diag.sobolev_samples < 0:
        raise rd.error("sobolev_samples must be non-negative", "diagnostics", "sobolev_samples")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc.strerror}", str(path)) from None
    return parse_scenario(text, str(path))


def _ini(name: str, background: str, initial: str, run: str, diagnostics: str = "", exhaustion: str = "") -> str:
    parts = [f"[scenario]\nname = {name}\nseed = 20240611\n", f"[background]\n{background}\n",
             f"[initial_data]\n{initial}\n", f"[run]\n{run}\n"]
    if diagnostics:
        parts.append(f"[diagnostics]\n{diagnostics}\n")
    if exhaustion:
        parts.append(f"[exhaustion]\n{exhaustion}\n")
    return "\n".join(parts)


_LP = "r0 = 1, 2\np = 2, 3\nsample_times = 0.25, 0.5, 1.0"
BUILTINS: dict[str, tuple[str, str]] = {
    "homothetic": (
        "hyperbolic m=3, u0 = 1: closed form u = 1 + 6t",
        _ini("homothetic", "kind = hyperbolic\nm = 3", "family = constant\nu_lo = 1", "k_list = 6\nT = 1\ndt = 1/512",
             "sobolev_samples = 100"),
    ),
    "homothetic-m4": (
        "hyperbolic m=4, u0 = 1: closed form u = 1 + 12t",
        _ini("homothetic-m4", "kind = hyperbolic\nm = 4", "family = constant\nu_lo = 1", "k_list = 6\nT = 1\ndt = 1/512"),
    ),
    "homothetic-m5": (
        "hyperbolic m=5, u0 = 1: closed form u = 1 + 20t",
        _ini("homothetic-m5", "kind = hyperbolic\nm = 5", "family = constant\nu_lo = 1", "k_list = 6\nT = 1\ndt = 1/512"),
    ),
    "stationary": (
        "Euclidean m=3, u0 = 2: the metric does not move",
        _ini("stationary", "kind = euclidean\nm = 3", "family = constant\nu_lo = 2", "k_list = 6\nT = 1\ndt = 1/512",
             "sobolev_samples = 100"),
    ),
    "bump-h3": (
        "hyperbolic m=3, smooth bump between 1 and 3",
        _ini("bump-h3", "kind = hyperbolic\nm = 3", "family = smooth-bump\nu_lo = 1\nu_hi = 3",
             "k_list = 8\nT = 1", _LP),
    ),
    "bump-h4": (
        "hyperbolic m=4, smooth bump between 1 and 3",
        _ini("bump-h4", "kind = hyperbolic\nm = 4", "family = smooth-bump\nu_lo = 1\nu_hi = 3",
             "k_list = 8\nT = 1", _LP),
    ),
    "hifreq-h3": (
        "hyperbolic m=3, cos(8r) oscillation between 1 and 3",
        _ini("hifreq-h3", "kind = hyperbolic\nm = 3", "family = high-frequency-oscillation\nu_lo = 1\nu_hi = 3",
             "k_list = 8\nT = 1", _LP),
    ),
    "hifreq-h4": (
        "hyperbolic m=4, cos(8r) oscillation between 1 and 3",
        _ini("hifreq-h4", "kind = hyperbolic\nm = 4", "family = high-frequency-oscillation\nu_lo = 1\nu_hi = 3",
             "k_list = 8\nT = 1", _LP),
    ),
    "lp-hifreq": (
        "L^p curvature integrals across k = 8, 10, 12 (hyperbolic m=3, oscillating data)",
        _ini("lp-hifreq", "kind = hyperbolic\nm = 3", "family = high-frequency-oscillation\nu_lo = 1\nu_hi = 3",
             "k_list = 8, 10, 12\nT = 1", _LP, "enabled = no"),
    ),
    "exhaustion-bump": (
        "exhaustion: k = 6..12 against k = 14 on B_2 (hyperbolic m=3, bump)",
        _ini("exhaustion-bump", "kind = hyperbolic\nm = 3", "family = smooth-bump\nu_lo = 1\nu_hi = 3",
             "k_list = 6, 8, 10, 12, 14\nT = 1", "r0 = 1", "enabled = yes\nr0 = 2"),
    ),
    "blend-custom": (
        "custom warp (r + sinh r)/2, m=3, bump data, user-declared Yamabe bound",
        _ini("blend-custom", "kind = custom\nm = 3\nwarp = blend\nr_hi = 6\nr_lo = 3\nyamabe_lower = 5.4",
             "family = smooth-bump\nu_lo = 1\nu_hi = 3", "k_list = 6\nT = 1", "sobolev_samples = 20"),
    ),
}


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTINS:
        raise KeyError(f"no builtin scenario {name!r}; choose from {sorted(BUILTINS)}")
    return parse_scenario(BUILTINS[name][1], f"<builtin {name}>")


def builtin_scenarios() -> list[Scenario]:
    return [builtin_scenario(n) for n in BUILTINS]
