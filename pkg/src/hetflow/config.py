"""Flat ``key = value`` run configuration with dotted section prefixes.

Blank lines and ``#`` comments are ignored.  Every key must appear in
:data:`SCHEMA`; values are parsed and range-checked before anything runs.
Lists are comma separated; mode lists (``k a b``) and trigonometric terms
(``a k l phi``) are semicolon separated groups of whitespace separated
numbers.  Slopes are ``q/r`` or ``irr:<value>``; eps values are ``1/m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import curve_flow, graph_flow
from . import forcing as forcing_mod
from .errors import ConfigError
from .forcing import Direction, Slope

EXPERIMENTS = ("curve", "graph", "weak", "homogenize", "effective-speed",
               "discontinuity-scan", "diagnostics")
FORCING_KINDS = ("constant", "sin-x", "sin-y", "offset-sin", "product", "trig", "piecewise",
                 "square-wave")
CURVE_INITIAL = ("circle", "ellipse", "perturbed-circle", "random-fourier", "points")
GRAPH_INITIAL = ("constant", "linear", "fourier", "random-fourier", "points")


# ---------------------------------------------------------------------------
# value parsers; each raises ValueError with a short reason


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(s):
    return int(s)


def _bool(s):
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _str(s):
    return s.strip()


def _floats(s):
    return [_float(p) for p in s.split(",") if p.strip()]


def _groups(width):
    def parse(s):
        out = []
        for grp in s.split(";"):
            if not grp.strip():
                continue
            nums = [_float(p) for p in grp.split()]
            if len(nums) != width:
                raise ValueError(f"each group needs {width} numbers")
            out.append(tuple(nums))
        return out
    return parse


def _point(s):
    v = _floats(s)
    if len(v) != 2:
        raise ValueError("expected two comma separated numbers")
    return tuple(v)


def _fraction(s):
    s = s.strip()
    return Fraction(s) if "/" in s else Fraction(float(s)).limit_denominator(10 ** 9)


def _eps_list(s):
    return [_fraction(p) for p in s.split(",") if p.strip()]


def parse_slope(s):
    s = s.strip()
    if s.startswith("irr:"):
        return Slope.irrational(_float(s[4:]))
    if "/" in s:
        q, r = s.split("/")
        return Slope.rational(int(q), int(r))
    return Slope.rational(int(s), 1)


def _slopes(s):
    return [parse_slope(p) for p in s.split(",") if p.strip()]


def _direction(s):
    s = s.strip()
    if s.startswith("irr:"):
        a, b = _point(s[4:])
        return Direction.irrational(a, b)
    a, b = _point(s)
    if a != int(a) or b != int(b):
        raise ValueError("integer directions need integer components (tag others irr:)")
    return Direction.lattice(int(a), int(b))


def _directions(s):
    return [_direction(p) for p in s.split(";") if p.strip()]


# key -> (parser, default)
SCHEMA = {
    "experiment": (_str, None),
    "seed": (_int, 0),
    "output.dir": (_str, "hetflow_out"),
    # forcing
    "forcing.kind": (_str, "constant"),
    "forcing.value": (_float, 0.0),
    "forcing.amp": (_float, 1.0),
    "forcing.offset": (_float, 0.0),
    "forcing.axis": (_str, "y"),
    "forcing.c0": (_float, 0.0),
    "forcing.terms": (_groups(4), []),
    "forcing.breakpoints": (_floats, []),
    "forcing.values": (_floats, []),
    "forcing.low": (_float, 0.5),
    "forcing.high": (_float, 1.5),
    "forcing.mollify": (_float, 0.0),
    "forcing.sup_grid": (_int, 4096),
    # initial datum
    "initial.kind": (_str, None),
    "initial.n": (_int, 256),
    "initial.radius": (_float, 1.0),
    "initial.a": (_float, 2.0),
    "initial.b": (_float, 1.0),
    "initial.center": (_point, (0.0, 0.0)),
    "initial.modes": (_groups(3), []),
    "initial.value": (_float, 0.0),
    "initial.slope": (_float, 0.0),
    "initial.offset": (_float, 0.0),
    "initial.random_modes": (_int, 3),
    "initial.random_amp": (_float, 0.05),
    "initial.file": (_str, ""),
    # solvers
    "solver.t_max": (_float, 1.0),
    "solver.cfl": (_float, 0.25),
    "solver.dt": (_float, 0.0),
    "solver.sample_interval": (_float, 0.0),
    "solver.kappa_max": (_float, 1e3),
    "solver.grad_cap": (_float, 1e3),
    "solver.reparametrize": (_bool, False),
    "solver.check_intersections": (_bool, True),
    # experiment specific
    "weak.deltas": (_floats, [0.2, 0.1, 0.05, 0.025]),
    "homogenize.eps": (_eps_list, [Fraction(1, 4), Fraction(1, 8), Fraction(1, 16)]),
    "homogenize.T": (_float, 0.1),
    "homogenize.nodes_per_cell": (_int, 32),
    "speed.slopes": (_slopes, [Slope.rational(0, 1)]),
    "speed.directions": (_directions, []),
    "speed.tol_G": (_float, 1e-8),
    "speed.samples": (_int, 256),
    "speed.eps": (_eps_list, []),
    "speed.T": (_float, 0.0),
    "diagnostics.p0": (_point, (0.0, 0.0)),
    "diagnostics.T": (_float, 0.0),
    "diagnostics.residual_dt": (_float, 0.0),
    "diagnostics.T_rel": (_float, 0.1),
}


@dataclass
class RunConfig:
    values: dict
    raw: dict  # key -> original text, in file order
    source: str = ""
    base_dir: Path = dc_field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def experiment(self):
        return self.values["experiment"]

    def echo(self):
        return dict(self.raw)

    # -- builders -----------------------------------------------------------

    def forcing(self):
        v = self.values
        kind = v["forcing.kind"]
        if kind == "constant":
            g = forcing_mod.constant(v["forcing.value"])
        elif kind == "sin-x":
            g = forcing_mod.sin_x(v["forcing.amp"], v["forcing.offset"])
        elif kind == "sin-y":
            g = forcing_mod.sin_y(v["forcing.amp"], v["forcing.offset"])
        elif kind == "offset-sin":
            g = forcing_mod.offset_sin(v["forcing.offset"], v["forcing.amp"], v["forcing.axis"])
        elif kind == "product":
            g = forcing_mod.product(v["forcing.amp"])
        elif kind == "trig":
            g = forcing_mod.trig(v["forcing.c0"], v["forcing.terms"])
        elif kind == "piecewise":
            g = forcing_mod.piecewise_x(v["forcing.breakpoints"], v["forcing.values"])
        else:
            g = forcing_mod.square_wave(v["forcing.low"], v["forcing.high"])
        if v["forcing.mollify"] > 0:
            g = forcing_mod.mollify(g, v["forcing.mollify"])
        return g

    def _points_file(self):
        path = Path(self.values["initial.file"])
        if not path.is_absolute():
            path = self.base_dir / path
        return np.loadtxt(path, delimiter=",", ndmin=2)

    def rng(self):
        return np.random.default_rng(self.values["seed"])

    def curve_initial(self):
        v = self.values
        kind = v["initial.kind"] or "circle"
        n = v["initial.n"]
        c = v["initial.center"]
        if kind == "circle":
            return curve_flow.circle(v["initial.radius"], n, c)
        if kind == "ellipse":
            return curve_flow.ellipse(v["initial.a"], v["initial.b"], n, c)
        if kind == "perturbed-circle":
            modes = [(int(k), a, b) for k, a, b in v["initial.modes"]]
            return curve_flow.perturbed_circle(v["initial.radius"], modes, n, c)
        if kind == "random-fourier":
            rng = self.rng()
            amp = v["initial.random_amp"] * v["initial.radius"]
            modes = [(k, amp * rng.uniform(-1, 1) / k, amp * rng.uniform(-1, 1) / k)
                     for k in range(2, 2 + v["initial.random_modes"])]
            return curve_flow.perturbed_circle(v["initial.radius"], modes, n, c)
        pts = self._points_file()
        if pts.shape[1] != 2:
            raise ConfigError("points file must have two columns x, y", "initial.file")
        return curve_flow.Curve(pts).validate()

    def graph_initial(self, n=None):
        v = self.values
        kind = v["initial.kind"] or "constant"
        n = n or v["initial.n"]
        if kind == "constant":
            return graph_flow.constant_state(v["initial.value"], n)
        if kind == "linear":
            return graph_flow.linear_state(v["initial.slope"], n, v["initial.offset"])
        if kind == "fourier":
            modes = [(int(k), a, b) for k, a, b in v["initial.modes"]]
            return graph_flow.fourier_state(modes, n, v["initial.slope"], v["initial.offset"])
        if kind == "random-fourier":
            rng = self.rng()
            amp = v["initial.random_amp"]
            modes = [(k, amp * rng.uniform(-1, 1) / k, amp * rng.uniform(-1, 1) / k)
                     for k in range(1, 1 + v["initial.random_modes"])]
            return graph_flow.fourier_state(modes, n, v["initial.slope"], v["initial.offset"])
        pts = self._points_file()
        if pts.shape[1] != 1 and pts.shape[0] != 1:
            raise ConfigError("graph points file must hold one column of u values",
                              "initial.file")
        return graph_flow.GraphState(pts.ravel(), v["initial.slope"]).validate()

    def graph_initial_factory(self):
        return lambda n: self.graph_initial(n)

    def _interval(self):
        si = self.values["solver.sample_interval"]
        return si if si > 0 else None

    def curve_solver(self):
        v = self.values
        return curve_flow.CurveSolverConfig(
            t_max=v["solver.t_max"], cfl=v["solver.cfl"], dt=v["solver.dt"] or None,
            kappa_max=v["solver.kappa_max"], sample_interval=self._interval(),
            reparametrize=v["solver.reparametrize"],
            check_intersections=v["solver.check_intersections"])

    def graph_solver(self):
        v = self.values
        return graph_flow.GraphSolverConfig(
            t_max=v["solver.t_max"], cfl=v["solver.cfl"], dt=v["solver.dt"] or None,
            sample_interval=self._interval(), grad_cap=v["solver.grad_cap"])


# ---------------------------------------------------------------------------
# reading and checking


def parse_text(text, source="<string>"):
    """Split into key -> text, rejecting malformed lines, duplicates and unknown keys."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (p.strip() for p in s.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'", key)
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'", key)
        raw[key] = val
    return raw


def _range(cond, key, msg):
    if not cond:
        raise ConfigError(f"{key}: {msg}", key)


def check(values, base_dir=None):
    """Range checks on parsed values; raises ConfigError naming the field."""
    v = values
    _range(v["experiment"] in EXPERIMENTS, "experiment",
           f"must be one of {', '.join(EXPERIMENTS)}")
    _range(v["forcing.kind"] in FORCING_KINDS, "forcing.kind",
           f"must be one of {', '.join(FORCING_KINDS)}")
    _range(v["forcing.axis"] in ("x", "y"), "forcing.axis", "must be x or y")
    _range(0.0 <= v["forcing.mollify"] <= 1.0, "forcing.mollify", "must lie in [0, 1]")
    _range(v["forcing.sup_grid"] >= 16, "forcing.sup_grid", "must be at least 16")
    if v["forcing.kind"] == "piecewise":
        b, vals = v["forcing.breakpoints"], v["forcing.values"]
        _range(len(b) == len(vals) + 1 and len(vals) >= 1, "forcing.breakpoints",
               "need one more breakpoint than values")
        _range(b[0] == 0.0 and b[-1] == 1.0 and all(y > x for x, y in zip(b[:-1], b[1:])),
               "forcing.breakpoints", "must increase strictly from 0 to 1")
    if v["forcing.kind"] == "trig":
        for a, k, l, ph in v["forcing.terms"]:
            _range(k == int(k) and l == int(l), "forcing.terms", "wave numbers must be integers")
    kinds = GRAPH_INITIAL if v["experiment"] in ("graph", "weak", "homogenize") else CURVE_INITIAL
    if v["initial.kind"] is not None:
        _range(v["initial.kind"] in kinds, "initial.kind", f"must be one of {', '.join(kinds)}")
        if v["initial.kind"] == "points":
            path = Path(v["initial.file"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            _range(v["initial.file"] and path.is_file(), "initial.file", "file not found")
    _range(v["initial.n"] >= 16, "initial.n", "must be at least 16")
    _range(v["initial.radius"] > 0, "initial.radius", "must be positive")
    _range(v["initial.a"] > 0 and v["initial.b"] > 0, "initial.a", "axes must be positive")
    for k, *_ in v["initial.modes"]:
        _range(k == int(k) and k >= 0, "initial.modes", "mode numbers must be integers >= 0")
    _range(v["solver.t_max"] > 0, "solver.t_max", "must be positive")
    _range(0.0 < v["solver.cfl"] <= 0.5, "solver.cfl", "must lie in (0, 0.5]")
    _range(v["solver.dt"] >= 0, "solver.dt", "must be non-negative (0 = from cfl)")
    _range(v["solver.sample_interval"] >= 0, "solver.sample_interval",
           "must be non-negative (0 = only the endpoints)")
    _range(v["solver.kappa_max"] > 0, "solver.kappa_max", "must be positive")
    _range(v["solver.grad_cap"] > 0, "solver.grad_cap", "must be positive")
    d = v["weak.deltas"]
    _range(len(d) >= 2 and all(0 < x <= 1 for x in d), "weak.deltas",
           "need at least two widths in (0, 1]")
    _range(all(b < a for a, b in zip(d[:-1], d[1:])), "weak.deltas", "must strictly decrease")
    for key in ("homogenize.eps", "speed.eps"):
        eps = v[key]
        for e in eps:
            _range(e.numerator == 1 and e.denominator >= 2, key,
                   f"{e} is not the reciprocal of an integer >= 2")
        _range(all(b < a for a, b in zip(eps[:-1], eps[1:])), key, "must strictly decrease")
    _range(len(v["homogenize.eps"]) >= 1, "homogenize.eps", "need at least one value")
    _range(v["homogenize.T"] > 0, "homogenize.T", "must be positive")
    _range(v["homogenize.nodes_per_cell"] >= 32, "homogenize.nodes_per_cell",
           "must be at least 32")
    _range(v["speed.tol_G"] > 0, "speed.tol_G", "must be positive")
    _range(v["speed.samples"] >= 8, "speed.samples", "must be at least 8")
    _range(v["speed.T"] >= 0, "speed.T", "must be non-negative (0 = default)")
    _range(v["diagnostics.T"] >= 0, "diagnostics.T", "must be non-negative (0 = estimate)")
    _range(v["diagnostics.residual_dt"] >= 0, "diagnostics.residual_dt", "must be non-negative")
    _range(0 < v["diagnostics.T_rel"] < 1, "diagnostics.T_rel", "must lie in (0, 1)")
    if v["experiment"] == "weak":
        _range(v["forcing.kind"] in ("constant", "sin-x", "piecewise", "square-wave")
               or (v["forcing.kind"] == "trig"
                   and all(l == 0 for _, _, l, _ in v["forcing.terms"])),
               "forcing.kind", "the weak experiment needs an x-only forcing")


def load_text(text, source="<string>", base_dir=None):
    raw = parse_text(text, source)
    if "experiment" not in raw:
        raise ConfigError("missing required key 'experiment'", "experiment")
    values = {}
    for key, (parser, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parser(raw[key])
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"{key}: cannot parse {raw[key]!r} ({exc})", key) from None
        else:
            values[key] = default
    check(values, base_dir)
    return RunConfig(values, raw, source, Path(base_dir) if base_dir else Path.cwd())


def load(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return load_text(text, str(path), path.parent)


def dump(raw):
    """Config text from a key -> text mapping (the manifest echo)."""
    return "".join(f"{k} = {v}\n" for k, v in raw.items())
