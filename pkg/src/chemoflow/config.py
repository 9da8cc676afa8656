"""Run configuration: strict ``key = value`` sections with documented defaults.

Sections and keys (defaults in parentheses)::

    [grid]     dim (2), n_cells (32; one value or one per axis),
               extent (1.0; one value or one per axis)
    [params]   m (1.0), D1 (1.0), D2 (1.0), kappa (0.0), mu (0.0), alpha (2.0),
               eps (0.1), D (power), chi (1), f (s), Phi (y), g (0),
               n0 (1 + 0.5*cos(pi*x)*cos(pi*y)), c0 (1), u0 (0), n0_mass (auto)
    [control]  t_end (0.1), cfl (0.5), dt_max (0.01), dt_min (1e-8),
               output_interval (0.01), pressure_tol (1e-12),
               pressure_max_iter (5000), div_tol (1e-8), c_floor (1e-12),
               n_floor (1e-12), K_diag (1.0), hessian_exclude_boundary (false)
    [sweep]    eps_list (0.1, 0.05, 0.025, 0.0125), bound_factor (3.0),
               cauchy_tolerance (0.05)
    [output]   dir (out), csv (timeseries.csv), snapshot_every (0),
               snapshot_prefix (snapshot)

``D = power`` selects ``D1 * s^(m-1)``. Vector entries (``g``, ``u0``) take a
single expression applied to every component or one comma-separated
expression per axis. ``n0_mass = auto`` rescales the sampled ``n0`` to the
mass of a 4x refined midpoint quadrature of the same expression.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from typing import Optional, Tuple

from .errors import ConfigParseError, ConfigValidationError, EvaluationError
from .expressions import compile_expression, forcing_component, scalar_function, spatial_function
from .grid import Grid
from .model import ModelParams, classify_regime


@dataclass(frozen=True)
class GridConfig:
    dim: int = 2
    n_cells: Tuple[int, ...] = (32,)
    extent: Tuple[float, ...] = (1.0,)

    def build(self) -> Grid:
        n = self.n_cells * self.dim if len(self.n_cells) == 1 else self.n_cells
        ext = self.extent * self.dim if len(self.extent) == 1 else self.extent
        return Grid(self.dim, tuple(n), tuple(ext))


@dataclass(frozen=True)
class ParamsConfig:
    m: float = 1.0
    D1: float = 1.0
    D2: float = 1.0
    kappa: float = 0.0
    mu: float = 0.0
    alpha: float = 2.0
    eps: float = 0.1
    D: str = "power"
    chi: str = "1"
    f: str = "s"
    Phi: str = "y"
    g: Tuple[str, ...] = ("0",)
    n0: str = "1 + 0.5*cos(pi*x)*cos(pi*y)"
    c0: str = "1"
    u0: Tuple[str, ...] = ("0",)
    n0_mass: Optional[float] = None


@dataclass(frozen=True)
class ControlConfig:
    t_end: float = 0.1
    cfl: float = 0.5
    dt_max: float = 0.01
    dt_min: float = 1e-8
    output_interval: float = 0.01
    pressure_tol: float = 1e-12
    pressure_max_iter: int = 5000
    div_tol: float = 1e-8
    c_floor: float = 1e-12
    n_floor: float = 1e-12
    K_diag: float = 1.0
    hessian_exclude_boundary: bool = False


@dataclass(frozen=True)
class SweepConfig:
    eps_list: Tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125)
    bound_factor: float = 3.0
    cauchy_tolerance: float = 0.05


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    csv: str = "timeseries.csv"
    snapshot_every: int = 0
    snapshot_prefix: str = "snapshot"


@dataclass(frozen=True)
class Config:
    grid: GridConfig = field(default_factory=GridConfig)
    params: ParamsConfig = field(default_factory=ParamsConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def build_grid(self) -> Grid:
        return self.grid.build()

    def build_params(self) -> ModelParams:
        return build_model_params(self.params, self.grid.dim)

    def replace(self, section: str, **changes) -> "Config":
        """Copy with some keys of one section changed (re-validated)."""
        new_section = dataclasses.replace(getattr(self, section), **changes)
        cfg = dataclasses.replace(self, **{section: new_section})
        validate_config(cfg)
        return cfg


SECTIONS = {
    "grid": GridConfig,
    "params": ParamsConfig,
    "control": ControlConfig,
    "sweep": SweepConfig,
    "output": OutputConfig,
}


def split_top_level(text: str) -> Tuple[str, ...]:
    """Split on commas that are not inside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur).strip())
    return tuple(parts)


def _convert(section: str, key: str, raw: str, ftype, default):
    name = f"{section}.{key}"
    raw = raw.strip()
    try:
        if key == "n0_mass":
            return None if raw.lower() in ("", "auto") else float(raw)
        if ftype in ("bool", bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, tuple):
            items = split_top_level(raw)
            if any(i == "" for i in items):
                raise ValueError("empty list entry")
            if default and isinstance(default[0], str):
                return items
            if default and isinstance(default[0], int):
                return tuple(int(i) for i in items)
            return tuple(float(i) for i in items)
        if isinstance(default, bool):
            raise AssertionError
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigValidationError(f"cannot parse {raw!r}: {exc}", key=name) from None


def parse_config(text: str) -> Config:
    """Parse and validate configuration text; unknown keys are rejected."""
    parser = configparser.ConfigParser(
        interpolation=None,
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#",),
        strict=True,
        empty_lines_in_values=False,
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError("expected a [section] header", line=exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigParseError(exc.message.split(":")[-1].strip(), line=exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigParseError("malformed line (expected key = value)", line=line) from None

    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigValidationError("unknown section", key=f"[{section}]")
        cls = SECTIONS[section]
        defaults = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in parser.items(section):
            if key not in defaults:
                raise ConfigValidationError("unknown key", key=f"{section}.{key}")
            fdef = defaults[key]
            default = fdef.default if fdef.default is not dataclasses.MISSING else fdef.default_factory()
            kwargs[key] = _convert(section, key, raw, fdef.type, default)
        values[section] = cls(**kwargs)
    cfg = Config(**values)
    validate_config(cfg)
    return cfg


def _require(ok: bool, key: str, message: str):
    if not ok:
        raise ConfigValidationError(message, key=key)


def _check_expr(key, source, allowed):
    try:
        expr = compile_expression(source)
    except EvaluationError as exc:
        raise ConfigValidationError(str(exc), key=key) from None
    extra = expr.variables - set(allowed)
    _require(not extra, key, f"uses variables {sorted(extra)} not available here (allowed: {allowed})")


def validate_config(cfg: Config) -> None:
    g = cfg.grid
    _require(g.dim in (2, 3), "grid.dim", "must be 2 or 3")
    _require(len(g.n_cells) in (1, g.dim), "grid.n_cells", "needs one value or one per axis")
    _require(len(g.extent) in (1, g.dim), "grid.extent", "needs one value or one per axis")
    _require(all(n >= 2 for n in g.n_cells), "grid.n_cells", "must be >= 2")
    _require(all(e > 0 for e in g.extent), "grid.extent", "must be > 0")
    if g.dim == 3:
        _require(all(n <= 48 for n in g.n_cells), "grid.n_cells", "3D grids are limited to 48 cells per axis")

    p = cfg.params
    _require(p.m > 0, "params.m", "must be > 0")
    _require(p.D1 > 0, "params.D1", "must be > 0")
    _require(p.D2 >= p.D1, "params.D2", "must be >= D1")
    _require(p.alpha > 1, "params.alpha", "must be > 1 (alpha > 1 is required)")
    _require(p.mu >= 0, "params.mu", "must be >= 0")
    _require(0 < p.eps <= 1, "params.eps", "must lie in (0, 1]")
    _require(p.n0_mass is None or p.n0_mass > 0, "params.n0_mass", "must be > 0")
    regime = classify_regime(p.m, p.mu, p.alpha)
    _require(
        regime.admissible,
        "params.m",
        f"inadmissible regime for (m={p.m}, mu={p.mu}, alpha={p.alpha}): "
        "need m > 2/3, or mu > 0 with alpha > 4/3",
    )
    space = ("x", "y", "z")[: g.dim]
    if p.D != "power":
        _check_expr("params.D", p.D, ("s",))
    _check_expr("params.chi", p.chi, ("s",))
    _check_expr("params.f", p.f, ("s",))
    _check_expr("params.Phi", p.Phi, space)
    _check_expr("params.n0", p.n0, space)
    _check_expr("params.c0", p.c0, space)
    for key, vec in (("params.g", p.g), ("params.u0", p.u0)):
        _require(len(vec) in (1, g.dim), key, "needs one expression or one per axis")
        for src in vec:
            _check_expr(key, src, space + ("t",) if key == "params.g" else space)

    c = cfg.control
    _require(c.t_end >= 0, "control.t_end", "must be >= 0")
    _require(0 < c.cfl <= 1, "control.cfl", "must lie in (0, 1]")
    _require(c.dt_max > 0, "control.dt_max", "must be > 0")
    _require(0 < c.dt_min < c.dt_max, "control.dt_min", "must lie in (0, dt_max)")
    _require(c.output_interval > 0, "control.output_interval", "must be > 0")
    _require(0 < c.pressure_tol <= 1e-4, "control.pressure_tol", "must lie in (0, 1e-4]")
    _require(c.pressure_max_iter > 0, "control.pressure_max_iter", "must be > 0")
    _require(c.div_tol > 0, "control.div_tol", "must be > 0")
    _require(c.c_floor > 0, "control.c_floor", "must be > 0")
    _require(c.n_floor > 0, "control.n_floor", "must be > 0")
    _require(c.K_diag > 0, "control.K_diag", "must be > 0")

    s = cfg.sweep
    _require(len(s.eps_list) >= 1, "sweep.eps_list", "needs at least one value")
    _require(all(0 < e <= 1 for e in s.eps_list), "sweep.eps_list", "values must lie in (0, 1]")
    _require(
        all(a > b for a, b in zip(s.eps_list, s.eps_list[1:])), "sweep.eps_list", "must be strictly decreasing"
    )
    _require(s.bound_factor > 1, "sweep.bound_factor", "must be > 1")
    _require(s.cauchy_tolerance >= 0, "sweep.cauchy_tolerance", "must be >= 0")

    o = cfg.output
    _require(o.snapshot_every >= 0, "output.snapshot_every", "must be >= 0")
    _require(bool(o.csv), "output.csv", "must not be empty")


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(cfg: Config) -> str:
    """Serialize a Config so that ``parse_config(emit_config(c)) == c``."""
    lines = []
    for section, cls in SECTIONS.items():
        lines.append(f"[{section}]")
        obj = getattr(cfg, section)
        for f in fields(cls):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _vector(sources, dim):
    return tuple(sources) * dim if len(sources) == 1 else tuple(sources)


def build_model_params(p: ParamsConfig, dim: int) -> ModelParams:
    D = None if p.D == "power" else scalar_function(p.D)
    g_src = _vector(p.g, dim)
    g = None if all(src.strip() in ("0", "0.0") for src in g_src) else tuple(forcing_component(s) for s in g_src)
    return ModelParams(
        m=p.m,
        D1=p.D1,
        D2=p.D2,
        kappa=p.kappa,
        mu=p.mu,
        alpha=p.alpha,
        eps=p.eps,
        D=D,
        chi=scalar_function(p.chi),
        f=scalar_function(p.f),
        Phi=spatial_function(p.Phi),
        g=g,
    )


def initial_velocity_sources(p: ParamsConfig, dim: int) -> Tuple[str, ...]:
    return _vector(p.u0, dim)
