"""Run configuration: sectioned ``key = value`` files.

Example::

    [domain]
    nx = 33
    ny = 33

    [material]
    mu = 1
    lambda = 1

    [growth]
    kap_g.11 = 1
    kap_g.22 = 1

    [run]
    mode = solve2d

Numeric values and growth entries are arithmetic expressions (see
:mod:`grownplate.expr`); growth entries may use ``x`` and ``y``. Instead of
entries a whole tensor can be read from a field CSV (``eps_g = file.csv``,
columns ``eps_g.11`` ... ``eps_g.33``, missing ones are zero). A compatible
growth can be requested with ``w0.1``, ``w0.2``, ``v0`` expressions. Paths are
relative to the config file. Every problem is reported as a
:class:`ConfigError` carrying the offending line number.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy2d import Displacement2D
from .expr import ExprDomainError, ExprSyntaxError, eval_expr, parse_expr
from .fields import Grid2, read_csv
from .growth import GrowthField, make_compatible
from .material import Material
from .plate3d import Solver3DConfig
from .solver2d import SolverConfig

MODES = ("check", "solve2d", "airy", "verify3d", "sweep3d", "scaling")

_KNOWN = {
    "domain": {"nx", "ny", "lx", "ly", "x0", "y0"},
    "material": {"mu", "lambda"},
    "growth": {f"{t}.{i}{j}" for t in ("eps_g", "kap_g") for i in "123" for j in "123"}
    | {"eps_g", "kap_g", "w0.1", "w0.2", "v0"},
    "state": {"w1", "w2", "v", "file"},
    "solver": {"max_iters", "grad_tol", "history", "c1", "backtrack", "init_amplitude",
               "precondition", "starts"},
    "solver3d": {"max_iters", "grad_tol", "ftol", "history"},
    "sweep": {"h_list", "nz", "sign", "workers"},
    "scaling": {"gamma", "theta", "h_list"},
    "run": {"mode", "out", "seed"},
}


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, path=None):
        self.line, self.path = line, path
        where = f"{path}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + msg)


@dataclass
class RunConfig:
    path: Path
    grid: Grid2
    material: Material
    growth: GrowthField
    mode: str
    out: Path
    seed: int
    solver: SolverConfig
    starts: int = 4
    solver3d: Solver3DConfig = field(default_factory=Solver3DConfig)
    state: Displacement2D | None = None
    h_list: tuple = (1 / 8, 1 / 16, 1 / 32, 1 / 64)
    nz: int = 9
    sign: str = "+"
    workers: int = 1
    gamma: float = 2.0
    theta: float = 1.0
    scaling_h: tuple = (1 / 8, 1 / 16, 1 / 32, 1 / 64)
    echo: list = field(default_factory=list)


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` to the 1-based line that defines it."""
    out, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            out[(section, None)] = no
        elif section and line and line[0] not in "#;":
            key = re.split(r"[=:]", line, 1)[0].strip().lower()
            out.setdefault((section, key), no)
    return out


class _Reader:
    def __init__(self, path: Path, text: str):
        self.path = path
        self.lines = _line_index(text)
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                            default_section="__none__")
        self.cp.optionxform = str.lower
        try:
            self.cp.read_string(text, source=str(path))
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError("content before the first [section]", exc.lineno, path) from None
        except configparser.DuplicateSectionError as exc:
            raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, path) from None
        except configparser.DuplicateOptionError as exc:
            raise ConfigError(f"duplicate key '{exc.option}' in [{exc.section}]", exc.lineno,
                              path) from None
        except configparser.ParsingError as exc:
            lineno = exc.errors[0][0] if exc.errors else None
            raise ConfigError("malformed line, expected 'key = value'", lineno, path) from None
        for sec in self.cp.sections():
            if sec.lower() not in _KNOWN:
                raise ConfigError(f"unknown section [{sec}]", self.lines.get((sec.lower(), None)),
                                  path)
            for key in self.cp[sec]:
                if key not in _KNOWN[sec.lower()]:
                    raise ConfigError(f"unknown key '{key}' in [{sec}]",
                                      self.lines.get((sec.lower(), key)), path)

    def error(self, sec, key, msg):
        return ConfigError(msg, self.lines.get((sec, key)), self.path)

    def has(self, sec, key):
        return self.cp.has_option(sec, key)

    def raw(self, sec, key, default=None):
        if self.has(sec, key):
            return self.cp.get(sec, key).strip().strip('"').strip("'")
        return default

    def number(self, sec, key, default=None):
        text = self.raw(sec, key)
        if text is None:
            if default is None:
                raise ConfigError(f"missing required key '{key}' in [{sec}]",
                                  self.lines.get((sec, None)), self.path)
            return default
        try:
            val = float(eval_expr(parse_expr(text), 0.0, 0.0))
        except ExprSyntaxError as exc:
            raise self.error(sec, key, f"{key}: {exc}") from None
        except ExprDomainError as exc:
            raise self.error(sec, key, f"{key}: {exc}") from None
        if parse_expr(text).variables:
            raise self.error(sec, key, f"{key} must be a constant")
        if not np.isfinite(val):
            raise self.error(sec, key, f"{key} is not finite")
        return val

    def integer(self, sec, key, default=None):
        val = self.number(sec, key, default)
        if val != int(val):
            raise self.error(sec, key, f"{key} must be an integer, got {val:g}")
        return int(val)

    def numbers(self, sec, key, default):
        text = self.raw(sec, key)
        if text is None:
            return default
        vals = []
        for part in text.split(","):
            try:
                vals.append(float(eval_expr(parse_expr(part.strip()), 0.0, 0.0)))
            except (ExprSyntaxError, ExprDomainError) as exc:
                raise self.error(sec, key, f"{key}: {exc}") from None
        return tuple(vals)

    def field(self, sec, key, grid: Grid2):
        text = self.raw(sec, key)
        try:
            e = parse_expr(text)
            X, Y = grid.mesh
            vals = np.broadcast_to(np.asarray(eval_expr(e, X, Y), dtype=float), grid.shape).copy()
        except (ExprSyntaxError, ExprDomainError) as exc:
            raise self.error(sec, key, f"{key}: {exc}") from None
        if not np.all(np.isfinite(vals)):
            raise self.error(sec, key, f"{key} is not finite on the grid")
        return vals

    def path_value(self, sec, key):
        p = Path(self.raw(sec, key))
        if not p.is_absolute():
            p = self.path.parent / p
        if not p.is_file():
            raise self.error(sec, key, f"{key}: file not found: {p}")
        return p

    def table(self, sec, key, grid: Grid2):
        p = self.path_value(sec, key)
        try:
            g2, cols = read_csv(p)
        except (OSError, ValueError) as exc:
            raise self.error(sec, key, f"{key}: cannot read {p}: {exc}") from None
        if g2.shape != grid.shape or not np.allclose([g2.lx, g2.ly], [grid.lx, grid.ly]):
            raise self.error(sec, key, f"{key}: grid of {p} does not match [domain]")
        return cols


def _growth(r: _Reader, grid: Grid2) -> GrowthField:
    sec = "growth"
    if not r.cp.has_section(sec):
        return GrowthField.zeros(grid)
    compat = [k for k in ("w0.1", "w0.2", "v0") if r.has(sec, k)]
    entries = [k for k in r.cp[sec] if k not in ("w0.1", "w0.2", "v0")]
    if compat:
        if entries:
            raise r.error(sec, entries[0], "w0/v0 and explicit growth entries are exclusive")
        zero = np.zeros(grid.shape)
        w = np.stack([r.field(sec, k, grid) if r.has(sec, k) else zero for k in ("w0.1", "w0.2")], -1)
        v = r.field(sec, "v0", grid) if r.has(sec, "v0") else zero
        return make_compatible(grid, w, v)
    tens = {}
    for name in ("eps_g", "kap_g"):
        a = np.zeros(grid.shape + (3, 3))
        if r.has(sec, name):
            if any(k.startswith(name + ".") for k in entries):
                raise r.error(sec, name, f"{name} given both as a file and entry-wise")
            cols = r.table(sec, name, grid)
            for i in range(3):
                for j in range(3):
                    col = cols.get(f"{name}.{i + 1}{j + 1}")
                    if col is not None:
                        a[..., i, j] = col
        for i in range(3):
            for j in range(3):
                key = f"{name}.{i + 1}{j + 1}"
                if r.has(sec, key):
                    a[..., i, j] = r.field(sec, key, grid)
        tens[name] = a
    return GrowthField(grid, tens["eps_g"], tens["kap_g"])


def _state(r: _Reader, grid: Grid2) -> Displacement2D | None:
    sec = "state"
    if not r.cp.has_section(sec) or not r.cp[sec]:
        return None
    if r.has(sec, "file"):
        cols = r.table(sec, "file", grid)
        missing = [c for c in ("w1", "w2", "v") if c not in cols]
        if missing:
            raise r.error(sec, "file", f"state file lacks columns {missing}")
        return Displacement2D(grid, np.stack([cols["w1"], cols["w2"]], -1), cols["v"])
    zero = np.zeros(grid.shape)
    w = np.stack([r.field(sec, k, grid) if r.has(sec, k) else zero for k in ("w1", "w2")], -1)
    v = r.field(sec, "v", grid) if r.has(sec, "v") else zero
    return Displacement2D(grid, w, v)


def load_config(path, mode: str | None = None, out=None, seed: int | None = None) -> RunConfig:
    """Parse and validate a run configuration; ``mode``, ``out`` and ``seed``
    override the ``[run]`` section."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=path) from None
    r = _Reader(path, text)

    mode_val = mode if mode is not None else r.raw("run", "mode")
    if mode_val is None:
        raise ConfigError("no mode given ([run] mode or --mode)", path=path)
    if mode_val not in MODES:
        line = None if mode is not None else r.lines.get(("run", "mode"))
        raise ConfigError(f"unknown mode '{mode_val}' (expected one of {', '.join(MODES)})",
                          line, path)

    try:
        grid = Grid2(r.integer("domain", "nx"), r.integer("domain", "ny"),
                     r.number("domain", "lx", 1.0), r.number("domain", "ly", 1.0),
                     (r.number("domain", "x0", 0.0), r.number("domain", "y0", 0.0)))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), r.lines.get(("domain", None)), path) from None
    try:
        material = Material(r.number("material", "mu", 1.0), r.number("material", "lambda", 1.0))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), r.lines.get(("material", None)), path) from None

    growth = _growth(r, grid)
    state = _state(r, grid)

    s = "solver"
    try:
        solver = SolverConfig(
            max_iters=r.integer(s, "max_iters", 5000), grad_tol=r.number(s, "grad_tol", 1e-11),
            history=r.integer(s, "history", 12), c1=r.number(s, "c1", 1e-4),
            backtrack=r.number(s, "backtrack", 0.5), seed=0,
            init_amplitude=r.number(s, "init_amplitude", 0.0) or None,
            precondition=bool(r.integer(s, "precondition", 1)))
        s = "solver3d"
        solver3d = Solver3DConfig(
            max_iters=r.integer(s, "max_iters", 400), grad_tol=r.number(s, "grad_tol", 1e-12),
            ftol=r.number(s, "ftol", 1e-9), history=r.integer(s, "history", 12))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), r.lines.get((s, None)), path) from None
    starts = r.integer("solver", "starts", 4)
    if starts < 0:
        raise r.error("solver", "starts", "starts must be >= 0")

    h_list = r.numbers("sweep", "h_list", (1 / 8, 1 / 16, 1 / 32, 1 / 64))
    if not h_list or any(not h > 0 for h in h_list):
        raise r.error("sweep", "h_list", "h_list must hold positive thicknesses")
    nz = r.integer("sweep", "nz", 9)
    if nz < 3 or nz % 2 == 0:
        raise r.error("sweep", "nz", "nz must be odd and >= 3")
    sign = r.raw("sweep", "sign", "+")
    if sign not in ("+", "-"):
        raise r.error("sweep", "sign", "sign must be '+' or '-'")
    workers = r.integer("sweep", "workers", 1)
    if workers < 1:
        raise r.error("sweep", "workers", "workers must be >= 1")

    gamma = r.number("scaling", "gamma", 2.0)
    theta = r.number("scaling", "theta", 1.0)
    if not (gamma > 0 and theta > 0):
        raise ConfigError("gamma and theta must be positive", r.lines.get(("scaling", None)), path)
    scaling_h = r.numbers("scaling", "h_list", (1 / 8, 1 / 16, 1 / 32, 1 / 64))
    if any(not h > 0 for h in scaling_h):
        raise r.error("scaling", "h_list", "h_list must hold positive thicknesses")

    seed_val = seed if seed is not None else r.integer("run", "seed", 0)
    out_val = out if out is not None else r.raw("run", "out")
    if out_val is None:
        out_path = path.parent / f"{path.stem}_out"
    else:
        out_path = Path(out_val)
        if out is None and not out_path.is_absolute():
            out_path = path.parent / out_path
    solver.seed = int(seed_val)

    echo = []
    for sec in r.cp.sections():
        for key, val in r.cp[sec].items():
            echo.append((sec, key, val.strip()))
    return RunConfig(path, grid, material, growth, mode_val, out_path, int(seed_val), solver,
                     starts, solver3d, state, h_list, nz, sign, workers, gamma, theta,
                     scaling_h, echo)
