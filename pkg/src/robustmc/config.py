"""Experiment configuration files.

The format is INI-style (read with :mod:`configparser`)::

    [experiment]
    seed = 42

    [margin]
    epsilon = 0.001
    delta = 0.01
    gamma = 0.05

    [curve]
    delta = 0.001
    alpha = 0.5
    l = 100

    [system]
    plant.gain = 800 + 80*d1
    plant.den_factors = 0; 4 + 0.2*d2; 6 + 0.3*d3
    compensator.num = 1, 2
    compensator.den = 1, 10
    requirement.kind = dstability
    region.half_plane = -1.5
    region.disks = nominal:0.3

    [uncertainty]
    kind = simplex
    vertices = 0.433, 0.25, -0.866; 0, -0.5, -0.866; -0.433, 0.25, -0.866; 0, 0, 1

Lists of scalars are comma separated, lists of items semicolon separated.
Affine expressions use ``dK`` for the K-th uncertainty coordinate. Unknown
sections or keys are rejected. Errors are raised as :class:`ConfigError`
naming the section, key and (when known) the line.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .margin import MarginParams
from .systems import (AffineExpr, Compensator, DStability, PoleRegion, RobustnessProblem,
                      SimParams, Stability, TimeDomain, TimeSpec, UncertainPlant, poly_roots_batch)
from .uncertainty import ScalarBlock, make_set

MODES = ("ci-table", "margin", "curve", "specs", "demo1", "demo2")

_KEYS = {
    "experiment": {"seed", "mode"},
    "margin": {"epsilon", "delta", "gamma", "cap", "max_doublings", "start_radius", "batch"},
    "curve": {"epsilon", "delta", "alpha", "l", "n", "max_halvings", "r_hat"},
    "ci_table": {"n", "delta"},
    "specs": {"delta"},
    "system": {
        "plant.gain", "plant.num_factors", "plant.den_factors", "plant.num_coeffs", "plant.den_coeffs",
        "compensator.num", "compensator.den",
        "requirement.kind",
        "region.half_plane", "region.disks",
        "time.rise_max", "time.settling_max", "time.peak_max", "time.rise_def", "time.settle_band",
        "sim.dt", "sim.horizon", "sim.hold",
    },
    "uncertainty": {"kind", "dim", "p", "vertices", "blocks"},
}

_REQUIRED = {
    "ci-table": ("ci_table",),
    "margin": ("margin", "system", "uncertainty"),
    "curve": ("curve", "system", "uncertainty"),
    "specs": ("system", "specs"),
    "demo1": (),
    "demo2": (),
}

_MAX_DIM = 1000

DEMO1 = """
[experiment]
seed = 0

[margin]
epsilon = 0.001
delta = 0.01
gamma = 0.05

[curve]
epsilon = 0.001
delta = 0.001
alpha = 0.5
l = 100
max_halvings = 20

[system]
plant.gain = 800 + 80*d1
plant.den_factors = 0; 4 + 0.2*d2; 6 + 0.3*d3
compensator.num = 1, 2
compensator.den = 1, 10
requirement.kind = dstability
region.half_plane = -1.5
region.disks = nominal:0.3

[uncertainty]
kind = simplex
vertices = 0.4330127018922193, 0.25, -0.8660254037844386; 0, -0.5, -0.8660254037844386; -0.4330127018922193, 0.25, -0.8660254037844386; 0, 0, 1
"""

DEMO2 = """
[experiment]
seed = 0

[margin]
epsilon = 0.01
delta = 0.01
gamma = 0.25

[curve]
epsilon = 0.01
delta = 0.01
alpha = 0.2
l = 100
max_halvings = 20

[system]
plant.gain = 800 + 80*d1
plant.den_factors = 0; 4 + 0.2*d2; 6 + 0.3*d3
compensator.num = 1, 2
compensator.den = 1, 10
requirement.kind = time
time.rise_max = 0.25
time.settling_max = 3.5
time.peak_max = 1.7
time.rise_def = 10-90
time.settle_band = 0.02
sim.dt = 0.001
sim.horizon = 10
sim.hold = 1

[uncertainty]
kind = box
dim = 3
"""

DEMOS = {"demo1": DEMO1, "demo2": DEMO2}


class ConfigError(ValueError):
    def __init__(self, message, section=None, key=None, line=None):
        where = ""
        if section:
            where = f"[{section}]" + (f" {key}" if key else "")
            if line:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)
        self.section = section
        self.key = key
        self.line = line


@dataclass
class CurveSettings:
    epsilon: float
    delta: float
    alpha: float = 0.5
    l: int = 100
    n: int | None = None
    max_halvings: int = 20
    r_hat: float | None = None

    @property
    def sample_size(self) -> int:
        from .curve import choose_sample_size
        return self.n if self.n is not None else choose_sample_size(self.epsilon, self.delta, self.alpha)


@dataclass
class ExperimentConfig:
    mode: str
    seed: int = 0
    margin: MarginParams | None = None
    curve: CurveSettings | None = None
    ci_n: int = 1000
    ci_delta: float = 0.01
    specs_delta: np.ndarray | None = None
    problem: RobustnessProblem | None = None
    plant: UncertainPlant | None = None
    compensator: Compensator | None = None
    sim: SimParams = field(default_factory=SimParams)
    time_spec: TimeSpec | None = None
    requirement: object = None
    text: str = ""


def _locate(text, section, key):
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            cur = m.group(1).strip().lower()
            continue
        if cur == section and key is not None:
            km = re.match(r"([^=:]+)[=:]", s)
            if km and km.group(1).strip().lower() == key:
                return i
        if cur == section and key is None:
            return i - 1 if i > 1 else i
    return None


class _Reader:
    def __init__(self, cp, text):
        self.cp = cp
        self.text = text

    def err(self, msg, section, key=None):
        return ConfigError(msg, section, key, _locate(self.text, section, key))

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def raw(self, section, key, default=None, required=False):
        if self.cp.has_option(section, key):
            v = self.cp.get(section, key).strip()
            if v == "" and required:
                raise self.err("value is empty", section, key)
            return v
        if required:
            raise ConfigError("missing required key", section, key, _locate(self.text, section, None))
        return default

    def num(self, section, key, default=None, required=False, kind=float, lo=None, hi=None,
            lo_open=False, hi_open=False):
        v = self.raw(section, key, None, required)
        if v is None:
            return default
        try:
            if kind is int:
                f = float(v)
                if not f.is_integer():
                    raise ValueError
                x = int(f)
            else:
                x = float(v)
        except (ValueError, OverflowError):
            raise self.err(f"expected {'an integer' if kind is int else 'a number'}, got {v!r}",
                           section, key) from None
        if isinstance(x, float) and not math.isfinite(x):
            raise self.err(f"value must be finite, got {v!r}", section, key)
        if lo is not None and (x < lo or (lo_open and x == lo)):
            raise self.err(f"value {x} out of range", section, key)
        if hi is not None and (x > hi or (hi_open and x == hi)):
            raise self.err(f"value {x} out of range", section, key)
        return x

    def prob(self, section, key, default=None, required=False):
        return self.num(section, key, default, required, lo=0.0, hi=1.0, lo_open=True, hi_open=True)

    def floats(self, section, key, required=False):
        v = self.raw(section, key, None, required)
        if v is None:
            return None
        try:
            out = [float(t) for t in v.split(",") if t.strip()]
        except ValueError:
            raise self.err(f"expected comma separated numbers, got {v!r}", section, key) from None
        if not out or not all(math.isfinite(x) for x in out):
            raise self.err("expected finite numbers", section, key)
        return out

    def items(self, section, key):
        v = self.raw(section, key, None)
        if v is None:
            return []
        return [t.strip() for t in v.split(";") if t.strip()]

    def affine_list(self, section, key):
        out = []
        for t in self.items(section, key):
            try:
                out.append(AffineExpr.parse(t))
            except ValueError as exc:
                raise self.err(str(exc), section, key) from None
        return out


def _parse_text(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), strict=True,
                                   empty_lines_in_values=False)
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", exc.section, exc.option, exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", exc.section, None, exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"key outside any section: {exc.line!r}", None, None, exc.lineno) from None
    except configparser.ParsingError as exc:
        lines = ", ".join(str(ln) for ln, _ in exc.errors)
        raise ConfigError(f"unparseable line(s) {lines}") from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    return cp


def _merge(base: str, override: str) -> str:
    """Overlay ``override`` keys on ``base``; result is normalised INI text."""
    a = _parse_text(base)
    b = _parse_text(override)
    for sec in b.sections():
        if not a.has_section(sec):
            a.add_section(sec)
        for k, v in b.items(sec, raw=True):
            a.set(sec, k, v)
    lines = []
    for sec in a.sections():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in a.items(sec, raw=True))
        lines.append("")
    return "\n".join(lines)


def _parse_disks(rd: _Reader):
    disks = []
    for item in rd.items("system", "region.disks"):
        if ":" not in item:
            raise rd.err(f"disk {item!r} must be center:radius", "system", "region.disks")
        center, rad = item.rsplit(":", 1)
        try:
            rad = float(rad)
        except ValueError:
            raise rd.err(f"bad disk radius in {item!r}", "system", "region.disks") from None
        if not rad > 0 or not math.isfinite(rad):
            raise rd.err(f"disk radius must be positive in {item!r}", "system", "region.disks")
        center = center.strip()
        if center.lower() == "nominal":
            disks.append(("nominal", rad))
            continue
        try:
            c = complex(center.replace(" ", "").strip("()"))
        except ValueError:
            raise rd.err(f"bad disk center {center!r}", "system", "region.disks") from None
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise rd.err("disk center must be finite", "system", "region.disks")
        disks.append((c, rad))
    return disks


def _parse_system(rd: _Reader, cfg: ExperimentConfig, uset, need_requirement: bool):
    sec = "system"
    gain = rd.raw(sec, "plant.gain", "1")
    try:
        gain = AffineExpr.parse(gain)
    except ValueError as exc:
        raise rd.err(str(exc), sec, "plant.gain") from None
    try:
        plant = UncertainPlant(
            gain=gain,
            num_factors=tuple(rd.affine_list(sec, "plant.num_factors")),
            den_factors=tuple(rd.affine_list(sec, "plant.den_factors")),
            num_coeffs=tuple(rd.affine_list(sec, "plant.num_coeffs")),
            den_coeffs=tuple(rd.affine_list(sec, "plant.den_coeffs")),
        )
    except ValueError as exc:
        raise rd.err(str(exc), sec, "plant.den_factors") from None
    if plant.n_params > _MAX_DIM:
        raise rd.err(f"uncertainty index d{plant.n_params} exceeds the limit {_MAX_DIM}", sec, None)
    if uset is not None and plant.n_params > uset.dim:
        raise rd.err(f"plant uses d{plant.n_params} but the set has dim {uset.dim}", "uncertainty",
                     "dim" if rd.has("uncertainty", "dim") else "kind")
    num = rd.floats(sec, "compensator.num") or [1.0]
    den = rd.floats(sec, "compensator.den") or [1.0]
    try:
        comp = Compensator(np.array(num), np.array(den))
    except ValueError as exc:
        raise rd.err(str(exc), sec, "compensator.den") from None
    cfg.plant, cfg.compensator = plant, comp

    hold = rd.raw(sec, "sim.hold", None)
    try:
        cfg.sim = SimParams(
            dt=rd.num(sec, "sim.dt", 1e-3, lo=0.0, lo_open=True),
            horizon=rd.num(sec, "sim.horizon", 10.0, lo=0.0, lo_open=True),
            hold=None if hold is not None and hold.lower() == "none"
            else rd.num(sec, "sim.hold", 1.0, lo=0.0),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise rd.err(str(exc), sec, "sim.dt") from None

    kind = rd.raw(sec, "requirement.kind", None, required=need_requirement)
    if kind is None:
        return None
    kind = kind.lower()
    if kind == "stability":
        req = Stability()
    elif kind == "dstability":
        half = rd.num(sec, "region.half_plane", None)
        disks = _parse_disks(rd)
        if any(c == "nominal" for c, _ in disks):
            nom = _nominal_complex_roots(plant, comp, uset)
            resolved = []
            for c, r in disks:
                resolved.extend([(z, r) for z in nom] if c == "nominal" else [(c, r)])
            disks = resolved
        try:
            req = DStability(PoleRegion(half, tuple(disks)))
        except ValueError as exc:
            raise rd.err(str(exc), sec, "region.disks") from None
    elif kind == "time":
        try:
            spec = TimeSpec(
                rise_time_max=rd.num(sec, "time.rise_max", required=True, lo=0.0, lo_open=True),
                settling_time_max=rd.num(sec, "time.settling_max", required=True, lo=0.0, lo_open=True),
                peak_max=rd.num(sec, "time.peak_max", required=True, lo=0.0, lo_open=True),
                rise_def=rd.raw(sec, "time.rise_def", "10-90"),
                settle_band=rd.num(sec, "time.settle_band", 0.02, lo=0.0, lo_open=True, hi=1.0),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise rd.err(str(exc), sec, "time.rise_def") from None
        cfg.time_spec = spec
        req = TimeDomain(spec, cfg.sim)
    else:
        raise rd.err(f"unknown requirement kind {kind!r} (stability, dstability, time)", sec,
                     "requirement.kind")
    return req


def _nominal_complex_roots(plant, comp, uset):
    """Complex closed-loop poles at delta = 0."""
    dim = uset.dim if uset is not None else max(plant.n_params, 1)
    zero = np.zeros((1, dim))
    char = np.polyadd(np.polymul(comp.den, plant.den(zero)[0]),
                      np.polymul(comp.num, plant.num(zero)[0]))
    roots, _ = poly_roots_batch(char[None, :])
    return [complex(z) for z in roots[0] if abs(z.imag) > 1e-9]


def _parse_uncertainty(rd: _Reader):
    sec = "uncertainty"
    kind = rd.raw(sec, "kind", required=True).lower()
    try:
        if kind in ("box", "lp"):
            dim = rd.num(sec, "dim", required=True, kind=int, lo=1, hi=_MAX_DIM)
            p = rd.raw(sec, "p", "2")
            p = math.inf if p.lower() in ("inf", "infinity") else rd.num(sec, "p", lo=1.0)
            return make_set(kind, dim=dim, p=p)
        if kind == "spectral":
            blocks = []
            v = rd.raw(sec, "blocks", required=True)
            for t in v.split(","):
                fld, _, mult = t.strip().partition(":")
                blocks.append(ScalarBlock(fld.strip().lower(), int(mult or 1)))
            if len(blocks) > _MAX_DIM or sum(b.multiplicity for b in blocks) > 10**4:
                raise ValueError("too many blocks")
            return make_set(kind, blocks=blocks)
        if kind == "simplex":
            verts = []
            if len(rd.items(sec, "vertices")) > _MAX_DIM + 1:
                raise ValueError("too many vertices")
            for item in rd.items(sec, "vertices"):
                verts.append([float(t) for t in item.split(",")])
            if not verts or len({len(v) for v in verts}) != 1:
                raise ValueError("vertices must be equal-length coordinate lists")
            return make_set(kind, vertices=verts)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise rd.err(str(exc), sec, "kind") from None
    raise rd.err(f"unknown set kind {kind!r} (box, lp, spectral, simplex)", sec, "kind")


def parse_config(text: str, mode: str, seed: int | None = None) -> ExperimentConfig:
    """Validate ``text`` for ``mode`` and build an :class:`ExperimentConfig`.

    Demo modes start from their built-in configuration; keys in ``text``
    override it.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    if mode in DEMOS:
        text = _merge(DEMOS[mode], text or "")
    cp = _parse_text(text)
    rd = _Reader(cp, text)
    for sec in cp.sections():
        if sec not in _KEYS:
            raise ConfigError("unknown section", sec, None, _locate(text, sec, None))
        for key in cp.options(sec):
            if key not in _KEYS[sec]:
                raise rd.err("unknown key", sec, key)
    for sec in _REQUIRED[mode]:
        if not cp.has_section(sec):
            raise ConfigError(f"section required for mode {mode!r} is missing", sec)
    cfg_mode = rd.raw("experiment", "mode", None)
    if cfg_mode is not None and cfg_mode != mode:
        raise rd.err(f"config is for mode {cfg_mode!r}, not {mode!r}", "experiment", "mode")

    cfg = ExperimentConfig(mode=mode, text=text)
    cfg.seed = rd.num("experiment", "seed", 0, kind=int, lo=0, hi=2**64 - 1)
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        cfg.seed = seed

    if mode == "ci-table":
        cfg.ci_n = rd.num("ci_table", "n", required=True, kind=int, lo=1, hi=100_000)
        cfg.ci_delta = rd.prob("ci_table", "delta", required=True)
        return cfg

    uset = _parse_uncertainty(rd) if cp.has_section("uncertainty") else None
    needs_problem = mode in ("margin", "curve", "demo1", "demo2")
    req = _parse_system(rd, cfg, uset, need_requirement=needs_problem)

    if mode == "specs":
        deltas = rd.floats("specs", "delta", required=True)
        dim = max(cfg.plant.n_params, 1) if uset is None else uset.dim
        if len(deltas) != dim:
            raise rd.err(f"expected {dim} coordinates, got {len(deltas)}", "specs", "delta")
        cfg.specs_delta = np.array(deltas)
        cfg.requirement = req
        return cfg

    if uset is None:
        raise ConfigError(f"section required for mode {mode!r} is missing", "uncertainty")
    try:
        cfg.problem = RobustnessProblem(cfg.plant, cfg.compensator, req, uset)
    except ValueError as exc:
        raise rd.err(str(exc), "uncertainty", "dim") from None

    if cp.has_section("margin"):
        try:
            cap = rd.num("margin", "cap", None, kind=int, lo=1)
            cfg.margin = MarginParams(
                epsilon=rd.prob("margin", "epsilon", required=True),
                delta=rd.prob("margin", "delta", required=True),
                gamma=rd.num("margin", "gamma", 0.05, lo=0.0, lo_open=True),
                cap=cap,
                max_doublings=rd.num("margin", "max_doublings", 30, kind=int, lo=1, hi=1000),
                start_radius=rd.num("margin", "start_radius", 1.0, lo=0.0, lo_open=True),
                batch=rd.num("margin", "batch", 1, kind=int, lo=1, hi=10**6),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise rd.err(str(exc), "margin", None) from None
    elif mode == "margin":
        raise ConfigError("section required for mode 'margin' is missing", "margin")

    if mode in ("curve", "demo1", "demo2"):
        eps_default = cfg.margin.epsilon if cfg.margin else None
        cs = CurveSettings(
            epsilon=rd.prob("curve", "epsilon", eps_default, required=eps_default is None),
            delta=rd.prob("curve", "delta", required=True),
            alpha=rd.prob("curve", "alpha", 0.5),
            l=rd.num("curve", "l", 100, kind=int, lo=2, hi=100_000),
            n=rd.num("curve", "n", None, kind=int, lo=1, hi=10**9),
            max_halvings=rd.num("curve", "max_halvings", 20, kind=int, lo=1, hi=1000),
            r_hat=None,
        )
        r_hat = rd.raw("curve", "r_hat", None)
        if r_hat is not None and r_hat.lower() != "auto":
            cs.r_hat = rd.num("curve", "r_hat", lo=0.0, lo_open=True)
        if cs.r_hat is None and cfg.margin is None:
            raise ConfigError("curve needs r_hat or a [margin] section", "curve", "r_hat")
        cfg.curve = cs
    return cfg
