"""Model parameters, structural hypotheses, regime classification and the
entropy transform used by the energy functional.

All model functions (diffusion ``D``, sensitivity ``chi``, consumption ``f``)
are vectorized callables of one argument ``s``; the potential ``Phi`` takes the
coordinate arrays and each forcing component ``g[d]`` takes ``(t, *coords)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, EvaluationError, InfeasibleError, InvalidParameterError, ToleranceError

ScalarFn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# presets

def power_law_diffusion(D0: float, m: float) -> ScalarFn:
    """D(s) = D0 * s**(m-1)."""

    def D(s):
        return D0 * np.power(s, m - 1.0)

    return D


def constant_function(value: float) -> ScalarFn:
    def const(s):
        return np.full(np.shape(s), float(value)) if np.ndim(s) else float(value)

    return const


def linear_consumption(s):
    """f(s) = s, the classic oxygen consumption law."""
    return s


# ---------------------------------------------------------------------------
# parameters

@dataclass(frozen=True)
class ModelParams:
    m: float = 1.0
    D1: float = 1.0
    D2: float = 1.0
    kappa: float = 0.0
    mu: float = 0.0
    alpha: float = 2.0
    eps: float = 0.1
    D: Optional[ScalarFn] = None
    chi: ScalarFn = field(default_factory=lambda: constant_function(1.0))
    f: ScalarFn = linear_consumption
    Phi: Optional[Callable[..., np.ndarray]] = None
    g: Optional[Sequence[Callable[..., np.ndarray]]] = None

    def __post_init__(self):
        checks = [
            (self.m > 0, "m must be > 0"),
            (self.D1 > 0, "D1 must be > 0"),
            (self.D2 >= self.D1, "D2 must be >= D1"),
            (self.alpha > 1, "alpha must be > 1"),
            (self.mu >= 0, "mu must be >= 0"),
            (0 < self.eps <= 1, "eps must lie in (0, 1]"),
            (math.isfinite(self.kappa), "kappa must be finite"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidParameterError(msg)
        if self.D is None:
            object.__setattr__(self, "D", power_law_diffusion(self.D1, self.m))

    def h(self, s):
        """The ratio f/chi driving the entropy transform."""
        return self.f(s) / self.chi(s)

    def with_eps(self, eps: float) -> "ModelParams":
        from dataclasses import replace

        return replace(self, eps=eps)


def d_eps(s, params: ModelParams):
    """Regularized diffusivity D(s + eps); defined for s >= 0 only."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("d_eps requires s >= 0")
    out = params.D(s + params.eps)
    if np.ndim(out) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# regimes

class RegimeTag(str, enum.Enum):
    CASE1 = "Case1"
    CASE2 = "Case2"
    BOTH = "Both"
    INADMISSIBLE = "Inadmissible"


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    delta_mu0: int
    p1: Optional[float] = None
    p2: Optional[float] = None
    p3: Optional[float] = None

    @property
    def admissible(self) -> bool:
        return self.tag is not RegimeTag.INADMISSIBLE


def classify_regime(m: float, mu: float, alpha: float) -> Regime:
    """Classify (m, mu, alpha) into the two admissibility routes.

    Route 1 is driven by diffusion (m > 2/3), route 2 by logistic damping
    (mu > 0, alpha > 4/3). Exponents follow the diffusion formulas whenever
    m > 2/3 and the damping formulas otherwise.
    """
    if not m > 0:
        raise InvalidParameterError(f"m must be > 0, got {m}")
    if not alpha > 1:
        raise InvalidParameterError(f"alpha must be > 1, got {alpha}")
    if not mu >= 0:
        raise InvalidParameterError(f"mu must be >= 0, got {mu}")

    delta = 1 if mu == 0 else 0
    by_diffusion = m > 2.0 / 3.0
    by_damping = mu > 0 and alpha > 4.0 / 3.0

    if by_diffusion and by_damping:
        tag = RegimeTag.BOTH
    elif by_diffusion:
        tag = RegimeTag.CASE1
    elif by_damping:
        tag = RegimeTag.CASE2
    else:
        return Regime(RegimeTag.INADMISSIBLE, delta)

    if by_diffusion:
        p1 = (3 * m + 2) / 3
        p2 = (3 * m + 2) / (3 * m + 1)
        p3 = (3 * m + 2) / 4
    else:
        p1 = alpha
        p2 = 2 * alpha / (alpha + m)
        p3 = 2 * alpha / (2 + alpha - m)
    return Regime(tag, delta, p1, p2, p3)


def _q_constraints(r: float, q: float) -> bool:
    a = 3.0 * (r * q - 2.0 * r + 2.0 * q) / (2.0 * r * q)
    return 0.0 < a < 1.0 and (2.0 * q / (2.0 - q)) * a < 2.0


def interpolation_exponents_valid(p1: float, r: float, q: float) -> bool:
    """Re-check the defining constraints of an (r, q) pair for a given p1."""
    return (
        6.0 / 5.0 < r < min(p1, 2.0)
        and (3.0 * r - 2.0) / r <= p1
        and 1.0 < q < 2.0
        and _q_constraints(r, q)
    )


def select_interpolation_exponents(p1: float) -> tuple:
    """Pick (r, q) for the space-time bound on |n u|^q.

    ``r`` is the midpoint of the feasible interval
    ``{r in (6/5, min(p1, 2)) : (3r - 2)/r <= p1}`` and ``q`` the largest value
    on a 1e-4 grid in (1, 2) with ``a = 3(rq - 2r + 2q)/(2rq)`` in (0, 1) and
    ``2q/(2-q) * a < 2``.
    """
    if not p1 > 4.0 / 3.0:
        raise InfeasibleError(f"p1 = {p1} must exceed 4/3")
    lo = 6.0 / 5.0
    hi = min(p1, 2.0)
    if p1 < 3.0:
        # (3r - 2)/r <= p1  <=>  r <= 2/(3 - p1)
        hi = min(hi, 2.0 / (3.0 - p1))
    r = 0.5 * (lo + hi)
    q = None
    for k in range(9999, 0, -1):
        cand = (10000 + k) / 10000.0
        if _q_constraints(r, cand):
            q = cand
            break
    if q is None or not interpolation_exponents_valid(p1, r, q):
        raise InfeasibleError(f"no admissible (r, q) found for p1 = {p1}")
    return r, q


# ---------------------------------------------------------------------------
# structural hypotheses

@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    worst_point: float
    worst_value: float


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _evaluate(fn, name, s):
    with np.errstate(all="ignore"):
        vals = np.asarray(fn(s), dtype=float) * np.ones_like(s)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        where = float(np.asarray(s)[bad][0])
        raise EvaluationError(f"{name} is not finite at s={where!r}", expression=name)
    return vals


def _first_derivative(fn, name, s, step):
    # forward one-sided near 0, centered elsewhere
    out = np.empty_like(s)
    inner = s >= step
    si = s[inner]
    out[inner] = (_evaluate(fn, name, si + step) - _evaluate(fn, name, si - step)) / (2 * step)
    so = s[~inner]
    if so.size:
        out[~inner] = (
            -3 * _evaluate(fn, name, so)
            + 4 * _evaluate(fn, name, so + step)
            - _evaluate(fn, name, so + 2 * step)
        ) / (2 * step)
    return out


def _second_derivative(fn, name, s, step):
    out = np.empty_like(s)
    inner = s >= step
    si = s[inner]
    out[inner] = (
        _evaluate(fn, name, si + step) - 2 * _evaluate(fn, name, si) + _evaluate(fn, name, si - step)
    ) / step**2
    so = s[~inner]
    if so.size:
        out[~inner] = (
            2 * _evaluate(fn, name, so)
            - 5 * _evaluate(fn, name, so + step)
            + 4 * _evaluate(fn, name, so + 2 * step)
            - _evaluate(fn, name, so + 3 * step)
        ) / step**2
    return out


def _worst(name, values, s, ok_mask, score):
    if np.all(ok_mask):
        i = int(np.argmin(score))
        return HypothesisCheck(name, True, float(s[i]), float(values[i]))
    bad = np.flatnonzero(~ok_mask)
    i = bad[int(np.argmin(score[bad]))]
    return HypothesisCheck(name, False, float(s[i]), float(values[i]))


def check_structural_hypotheses(
    params: ModelParams,
    c_max: float,
    n_samples: int = 1000,
    *,
    rtol: float = 1e-6,
    envelope_range=(1e-6, 1e6),
) -> HypothesisReport:
    """Sample-based check of the positivity, concavity and envelope conditions.

    Derivatives of ``h = f/chi`` and ``chi*f`` are taken by finite differences
    on a uniform sample of ``[0, c_max]``; the diffusion envelope
    ``D1 s^(m-1) <= D(s) <= D2 s^(m-1)`` is checked on a log-spaced sample.
    """
    if not c_max > 0:
        raise InvalidParameterError("c_max must be > 0")
    if n_samples < 3:
        raise InvalidParameterError("n_samples must be >= 3")

    s = np.linspace(0.0, c_max, n_samples)
    step = 1e-3 * c_max
    h = params.h
    chif = lambda x: params.chi(x) * params.f(x)  # noqa: E731

    chi_vals = _evaluate(params.chi, "chi", s)
    f_vals = _evaluate(params.f, "f", s)
    h_vals = _evaluate(h, "f/chi", s)
    scale = max(1.0, float(np.max(np.abs(h_vals))) / c_max)
    dh = _first_derivative(h, "f/chi", s, step)
    d2h = _second_derivative(h, "f/chi", s, step)
    dchif = _first_derivative(chif, "chi*f", s, step)
    tol1 = rtol * scale
    tol2 = rtol * scale / c_max

    checks = [
        _worst("chi_positive", chi_vals, s, chi_vals > 0, chi_vals),
        _worst("f_nonnegative", f_vals, s, f_vals >= 0, f_vals),
        HypothesisCheck("f_zero_at_zero", abs(f_vals[0]) <= 1e-12, 0.0, float(f_vals[0])),
        _worst("h_increasing", dh, s, dh > 0, dh),
        _worst("h_concave", d2h, s, d2h <= tol2, -d2h),
        _worst("chi_f_nondecreasing", dchif, s, dchif >= -tol1, dchif),
    ]

    lo, hi = envelope_range
    sig = np.logspace(math.log10(lo), math.log10(hi), n_samples)
    D_vals = _evaluate(params.D, "D", sig)
    ref = np.power(sig, params.m - 1.0)
    ratio = D_vals / ref
    lower_ok = ratio >= params.D1 * (1 - 1e-12)
    upper_ok = ratio <= params.D2 * (1 + 1e-12)
    margin = np.minimum(ratio / params.D1 - 1.0, 1.0 - ratio / params.D2)
    checks.append(_worst("diffusion_envelope", ratio, sig, lower_ok & upper_ok, margin))
    return HypothesisReport(tuple(checks))


# ---------------------------------------------------------------------------
# entropy transform

_PSI_TOL = 1e-10
_PSI_DEPTH = 40


def _simpson(fn, a, fa, b, fb):
    c = 0.5 * (a + b)
    fc = fn(c)
    return c, fc, (b - a) / 6.0 * (fa + 4.0 * fc + fb)


def adaptive_simpson(fn, a: float, b: float, tol: float = _PSI_TOL, max_depth: int = _PSI_DEPTH) -> float:
    """Adaptive Simpson quadrature with interval bisection and Richardson correction."""
    if a == b:
        return 0.0
    fa, fb = fn(a), fn(b)
    c, fc, whole = _simpson(fn, a, fa, b, fb)
    # explicit stack keeps deep refinements off the Python call stack
    total = 0.0
    stack = [(a, fa, b, fb, c, fc, whole, tol, 0)]
    while stack:
        a, fa, b, fb, c, fc, whole, tol, depth = stack.pop()
        lc, flc, left = _simpson(fn, a, fa, c, fc)
        rc, frc, right = _simpson(fn, c, fc, b, fb)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol:
            total += left + right + delta / 15.0
            continue
        if depth >= max_depth:
            raise ToleranceError(
                f"adaptive quadrature did not converge on [{a}, {b}] within depth {max_depth}"
            )
        stack.append((a, fa, c, fc, lc, flc, left, tol / 2, depth + 1))
        stack.append((c, fc, b, fb, rc, frc, right, tol / 2, depth + 1))
    return total


def _psi_integrand(params: ModelParams):
    def integrand(sigma):
        hv = float(params.h(sigma))
        if not hv > 0 or not math.isfinite(hv):
            raise DomainError(f"f/chi must be positive on the integration range, got {hv} at {sigma}")
        return 1.0 / math.sqrt(hv)

    return integrand


def psi(s: float, params: ModelParams, tol: float = _PSI_TOL) -> float:
    """Entropy transform: integral from 1 to s of dsigma / sqrt(f/chi)."""
    s = float(s)
    if not s > 0:
        raise DomainError(f"psi is defined for s > 0, got {s}")
    if s == 1.0:
        return 0.0
    value = adaptive_simpson(_psi_integrand(params), 1.0, s, tol)
    return value


def psi_values(values, params: ModelParams, tol: float = 1e-12) -> np.ndarray:
    """Vectorized psi: integrates between consecutive sorted sample values."""
    arr = np.asarray(values, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("psi is defined for s > 0")
    uniq = np.unique(np.append(arr.ravel(), 1.0))
    integrand = _psi_integrand(params)
    pieces = np.array([adaptive_simpson(integrand, a, b, tol) for a, b in zip(uniq[:-1], uniq[1:])])
    cum = np.concatenate(([0.0], np.cumsum(pieces)))
    cum -= cum[np.searchsorted(uniq, 1.0)]
    return cum[np.searchsorted(uniq, arr)]
