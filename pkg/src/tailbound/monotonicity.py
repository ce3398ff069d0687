"""Numerical l'Hospital-type monotonicity checks.

Let ``f(b-) = g(b-) = 0`` on ``(a, b)`` with ``g, g'`` nonvanishing, and put
``r = f/g`` and ``rho = f'/g'``. If ``rho`` is decreasing, so is ``r``; if
``rho`` is increasing-then-decreasing ("up-down"), ``r`` is decreasing or
up-down. The arguments that order the bound branches apply this rule to four
ratio pairs, collected by :func:`ratio_cases`.

Nothing here is a proof: every check samples a grid (log-spaced, 10**4
points by default) and classifies the sampled sequence.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .bounds import EXP_LAMBDA, LAMBDA
from .errors import DomainError, TailboundError
from .normal_core import INV_SQRT_2PI, phi, two_sided_tail, upper_tail

__all__ = [
    "PatternReport",
    "RatioCase",
    "CaseVerdict",
    "EvaluationError",
    "rho_lemma_v",
    "rho_lemma_w",
    "rho_prime_lemma_w",
    "rho_lemma_less",
    "rho_prime_lemma_less",
    "rho_w_tilde",
    "rho_prime_w_tilde",
    "sign_change",
    "check_pattern",
    "ratio_cases",
    "verify_lhopital_case",
    "matches_printed",
]

RHO_MIN_X = 0.05
TRUNCATION = 38.0
DIFF_TOL = 1e-12


class EvaluationError(TailboundError, ArithmeticError):
    """A sampled function returned a non-finite value."""

    def __init__(self, x, value):
        super().__init__(f"non-finite value {value!r} at x={x!r}")
        self.x = x
        self.value = value


def _exp_lam(lam):
    return EXP_LAMBDA if lam == LAMBDA else math.exp(lam)


def _rho_domain(x):
    x = float(x)
    if not (x >= RHO_MIN_X) or not math.isfinite(x):
        raise DomainError(f"closed form evaluated only for x >= {RHO_MIN_X}, got {x!r}")
    return x


# --- closed-form ratios -----------------------------------------------------


def rho_lemma_v(x, lam=LAMBDA):
    """``e**lam / (x sqrt(2 pi))``: derivative ratio for ``e**lam Q(x)`` vs ``exp(-x**2/2)``."""
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"x must be positive and finite, got {x!r}")
    return _exp_lam(lam) * INV_SQRT_2PI / x


def rho_lemma_w(x, lam=LAMBDA):
    """Derivative ratio for ``Q(x - lam/x)`` vs ``exp(-x**2/2)``."""
    x = _rho_domain(x)
    return (lam + x * x) * INV_SQRT_2PI / (x**3 * math.exp(lam * lam / (2 * x * x) - lam))


def rho_prime_lemma_w(x, lam=LAMBDA):
    x = _rho_domain(x)
    num = lam**3 - (3.0 - lam) * lam * x * x - x**4
    return num * INV_SQRT_2PI / (x**6 * math.exp(lam * lam / (2 * x * x) - lam))


def rho_lemma_less(x, lam=LAMBDA):
    """Derivative ratio for ``Q(x - lam/x)`` vs ``e**lam Q(x)``."""
    x = _rho_domain(x)
    return math.exp(-lam * lam / (2 * x * x)) * (1.0 + lam / (x * x))


def rho_prime_lemma_less(x, lam=LAMBDA):
    x = _rho_domain(x)
    return (lam * lam - (2.0 - lam) * x * x) * lam * x**-5 * math.exp(-lam * lam / (2 * x * x))


def _check_above_sqrt_lam(x, lam):
    x = float(x)
    if not x > math.sqrt(lam) or not math.isfinite(x):
        raise DomainError(f"x must exceed sqrt(lambda)={math.sqrt(lam):.6f}, got {x!r}")
    return x


def rho_w_tilde(x, lam=LAMBDA):
    """Derivative ratio for ``P(|Z| >= x - lam/x)`` vs ``1/x**2``."""
    x = _check_above_sqrt_lam(x, lam)
    return phi(x - lam / x) * (x**3 + lam * x)


def rho_prime_w_tilde(x, lam=LAMBDA):
    x = _check_above_sqrt_lam(x, lam)
    poly = lam**3 / x**6 + (lam + 1.0) * lam / x**4 + (3.0 - lam) / x**2 - 1.0
    return poly * x**4 * phi(x - lam / x)


def sign_change(func, lo, hi, xtol=1e-14):
    """Root of ``func`` on ``[lo, hi]`` (Brent), for locating where rho' vanishes."""
    return brentq(func, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


# --- pattern detection ------------------------------------------------------


@dataclass
class PatternReport:
    detected_pattern: str
    switch_point: Optional[float]
    max_violation: float
    expected: Optional[str] = None

    @property
    def matches(self):
        return self.expected is None or self.detected_pattern == self.expected


def _grid(interval, grid_size, spacing):
    a, b = (float(v) for v in interval)
    if not a < b or not math.isfinite(b):
        raise DomainError(f"need a finite interval with a < b, got {interval!r}")
    if spacing == "log":
        lo = a if a > 0 else b * 1e-4
        return np.geomspace(lo, b, grid_size + 2)[1:-1]
    if spacing == "linear":
        return np.linspace(a, b, grid_size + 2)[1:-1]
    raise DomainError(f"spacing must be 'log' or 'linear', got {spacing!r}")


def _sample(func, xs):
    values = np.empty_like(xs)
    for i, x in enumerate(xs):
        v = float(func(float(x)))
        if not math.isfinite(v):
            raise EvaluationError(float(x), v)
        values[i] = v
    return values


def _refine_max(func, lo, hi):
    res = minimize_scalar(
        lambda t: -func(t), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x)


def check_pattern(func, interval, grid_size=10_000, spacing="log", tol=DIFF_TOL):
    """Classify ``func`` on ``interval`` as decreasing, increasing, up-down or other.

    Consecutive differences are taken on ``log|func|`` when the sampled values
    share one strict sign and on ``func / max|func|`` otherwise; differences
    within ``tol`` count as flat. For an up-down sequence the switch point is
    refined from the grid maximum by a bounded scalar search.
    """
    if grid_size < 100:
        raise DomainError(f"grid_size must be at least 100, got {grid_size}")
    xs = _grid(interval, grid_size, spacing)
    values = _sample(func, xs)
    if np.all(values > 0):
        diffs = np.diff(np.log(values))
    elif np.all(values < 0):
        diffs = -np.diff(np.log(-values))
    else:
        scale = np.max(np.abs(values))
        diffs = np.diff(values / scale) if scale > 0 else np.zeros(len(values) - 1)

    signs = np.where(diffs > tol, 1, np.where(diffs < -tol, -1, 0))
    ups = np.flatnonzero(signs > 0)
    downs = np.flatnonzero(signs < 0)
    if ups.size == 0:
        pattern = "decreasing"
    elif downs.size == 0:
        pattern = "increasing"
    elif ups[-1] < downs[0]:
        pattern = "up-down"
    else:
        pattern = "other"

    switch = None
    if pattern == "decreasing":
        violation = max(0.0, float(diffs.max()))
    elif pattern == "increasing":
        violation = max(0.0, float(-diffs.min()))
    else:
        k = int(np.argmax(values))
        before, after = diffs[:k], diffs[k:]
        violation = max(
            0.0,
            float(-before.min()) if before.size else 0.0,
            float(after.max()) if after.size else 0.0,
        )
        if pattern == "up-down":
            lo = xs[max(k - 1, 0)]
            hi = xs[min(k + 1, len(xs) - 1)]
            switch = _refine_max(func, lo, hi)
    return PatternReport(pattern, switch, violation)


# --- ratio cases ------------------------------------------------------------


def matches_printed(value, printed):
    """True when ``value`` truncated to the digits of ``printed`` equals it.

    ``matches_printed(1.3124, "1.312")`` holds: the printed form ``1.312...``
    states the leading digits only.
    """
    decimals = len(printed.split(".")[1]) if "." in printed else 0
    truncated = math.floor(value * 10**decimals + 1e-9) / 10**decimals
    return f"{truncated:.{decimals}f}" == printed


@dataclass
class BoundaryValue:
    label: str
    x: float
    printed: Optional[str] = None
    exact: Optional[float] = None

    def check(self, r):
        value = r(self.x)
        if self.printed is not None:
            ok = matches_printed(value, self.printed)
        else:
            ok = abs(value - self.exact) <= 1e-12 * max(1.0, abs(self.exact))
        return value, ok


@dataclass
class RatioCase:
    """A pair ``(f, g)`` with its closed-form derivative ratio ``rho``.

    ``rho_window``/``r_window`` bound the sampled grids inside ``domain``;
    ``fd_window`` is where ``rho`` is compared with finite differences;
    ``limit_point`` stands in for ``b`` when checking ``f(b-) = g(b-) = 0``.
    ``expected_r_pattern`` may be ``"above-one"``: r must be decreasing or
    up-down and exceed 1 on ``above_one_window``.
    """

    name: str
    f: Callable[[float], float]
    g: Callable[[float], float]
    rho: Callable[[float], float]
    domain: tuple
    expected_rho_pattern: str
    expected_r_pattern: str
    rho_window: tuple
    r_window: tuple
    fd_window: tuple
    limit_point: float = TRUNCATION
    rho_switch: Optional[float] = None
    above_one_window: Optional[tuple] = None
    boundary: list = field(default_factory=list)

    def r(self, x):
        return self.f(x) / self.g(x)


@dataclass
class CaseVerdict:
    name: str
    rho: PatternReport
    r: Optional[PatternReport]
    premise_ok: bool
    conclusion_ok: Optional[bool]
    limits_ok: bool
    limit_values: tuple
    boundary: list
    fd_max_rel_error: float
    min_r_above_one: Optional[float] = None

    @property
    def ok(self):
        return (
            self.premise_ok
            and bool(self.conclusion_ok)
            and self.limits_ok
            and all(ok for _, _, ok in self.boundary)
        )


def ratio_cases(lam=LAMBDA, crossings=None):
    """The four (f, g) pairs used to locate the crossing points and order V, W."""
    from .bounds import solve_crossings

    if crossings is None:
        crossings = solve_crossings(lam)
    exp_lam = _exp_lam(lam)
    sqrt_lam = math.sqrt(lam)

    def gauss(x):
        return math.exp(-0.5 * x * x)

    def scaled_tail(x):
        return exp_lam * upper_tail(x)

    def shifted_tail(x):
        return upper_tail(x - lam / x) if x > 0 else 1.0

    def shifted_two_sided(x):
        return two_sided_tail(x - lam / x)

    def inv_square(x):
        return 1.0 / (x * x)

    root_w = math.sqrt((-(3 - lam) * lam + math.sqrt((3 - lam) ** 2 * lam**2 + 4 * lam**3)) / 2)

    return {
        "v_branches": RatioCase(
            name="v_branches",
            f=scaled_tail,
            g=gauss,
            rho=lambda x: rho_lemma_v(x, lam),
            domain=(0.0, math.inf),
            expected_rho_pattern="decreasing",
            expected_r_pattern="decreasing",
            rho_window=(1e-3, TRUNCATION),
            r_window=(1e-3, 30.0),
            fd_window=(0.5, 8.0),
            boundary=[BoundaryValue("r(0)", 0.0, exact=exp_lam / 2)],
        ),
        "w_branches": RatioCase(
            name="w_branches",
            f=shifted_tail,
            g=gauss,
            rho=lambda x: rho_lemma_w(x, lam),
            domain=(0.0, math.inf),
            expected_rho_pattern="up-down",
            expected_r_pattern="up-down",
            rho_window=(RHO_MIN_X, TRUNCATION),
            r_window=(1e-3, 30.0),
            fd_window=(0.5, 8.0),
            rho_switch=root_w,
            boundary=[
                BoundaryValue("r(0+)", 1e-9, exact=1.0),
                BoundaryValue("r(1)", 1.0, printed="1.13"),
            ],
        ),
        "v_below_w": RatioCase(
            name="v_below_w",
            f=shifted_tail,
            g=scaled_tail,
            rho=lambda x: rho_lemma_less(x, lam),
            domain=(0.0, math.inf),
            expected_rho_pattern="up-down",
            expected_r_pattern="above-one",
            rho_window=(RHO_MIN_X, TRUNCATION),
            r_window=(1e-3, 30.0),
            fd_window=(0.5, 8.0),
            rho_switch=lam / math.sqrt(2 - lam),
            above_one_window=(crossings.z_v, 12.0),
            boundary=[BoundaryValue("r(z_V)", crossings.z_v, printed="1.020")],
        ),
        "wtilde_branches": RatioCase(
            name="wtilde_branches",
            f=shifted_two_sided,
            g=inv_square,
            rho=lambda x: rho_w_tilde(x, lam),
            domain=(sqrt_lam, math.inf),
            expected_rho_pattern="up-down",
            expected_r_pattern="up-down",
            rho_window=(sqrt_lam, 30.0),
            r_window=(sqrt_lam, 30.0),
            fd_window=(1.3, 8.0),
            # 1/x**2 only reaches 1e-16 near x = 1e8
            limit_point=1e8,
            rho_switch=1.0 / math.sqrt(_wtilde_cubic_root(lam)),
            boundary=[BoundaryValue("r(sqrt(lambda))", sqrt_lam, exact=lam)],
        ),
    }


def _wtilde_cubic_root(lam):
    # positive root u of lam^3 u^3 + (lam+1) lam u^2 + (3-lam) u - 1 = 0
    def cubic(u):
        return lam**3 * u**3 + (lam + 1) * lam * u**2 + (3 - lam) * u - 1

    return sign_change(cubic, 0.0, 1.0 / lam)


def _fd_rel_error(case, points=200, step=1e-6):
    xs = np.linspace(*case.fd_window, points)
    worst = 0.0
    for x in xs:
        rho = case.rho(x)
        if abs(rho) < 1e-3:
            continue
        df = case.f(x + step) - case.f(x - step)
        dg = case.g(x + step) - case.g(x - step)
        worst = max(worst, abs(df / dg - rho) / abs(rho))
    return worst


def verify_lhopital_case(case, grid_size=10_000):
    """Check premise (rho pattern) and conclusion (r pattern) for one case.

    The conclusion is only evaluated when the premise holds; ``r`` must then be
    decreasing or up-down. Boundary values and ``f(b-) = g(b-) = 0`` at the
    case's ``limit_point`` are checked as well.
    """
    rho_report = check_pattern(case.rho, case.rho_window, grid_size)
    rho_report.expected = case.expected_rho_pattern
    xs = _grid(case.r_window, min(grid_size, 2000), "log")
    g_nonzero = bool(np.all(_sample(case.g, xs) != 0.0))
    premise_ok = rho_report.matches and g_nonzero

    r_report = None
    conclusion_ok = None
    min_above = None
    if premise_ok:
        r_report = check_pattern(case.r, case.r_window, grid_size)
        r_report.expected = case.expected_r_pattern
        conclusion_ok = r_report.detected_pattern in ("decreasing", "up-down")
        if case.expected_r_pattern == "above-one":
            above = _sample(case.r, _grid(case.above_one_window, grid_size, "linear"))
            min_above = float(above.min())
            conclusion_ok = conclusion_ok and min_above > 1.0
        else:
            conclusion_ok = conclusion_ok and r_report.matches

    fb, gb = case.f(case.limit_point), case.g(case.limit_point)
    limits_ok = abs(fb) < 1e-15 and abs(gb) < 1e-15
    boundary = [(bv.label, *bv.check(case.r)) for bv in case.boundary]
    return CaseVerdict(
        name=case.name,
        rho=rho_report,
        r=r_report,
        premise_ok=premise_ok,
        conclusion_ok=conclusion_ok,
        limits_ok=limits_ok,
        limit_values=(fb, gb),
        boundary=boundary,
        fd_max_rel_error=_fd_rel_error(case),
        min_r_above_one=min_above,
    )
