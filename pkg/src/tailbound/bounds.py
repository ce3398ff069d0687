"""Tail bounds for normalized sums of bounded zero-mean random variables.

For ``S = a_1 eta_1 + a_2 eta_2 + ...`` with ``sum a_i**2 = 1``, independent
zero-mean ``|eta_i| <= 1``, and ``x > 0``::

    P(S >= x)   <= W(x)  = min(exp(-x**2/2), P(Z >= x - lam/x))
    P(|S| >= x) <= Wt(x) = min(1/x**2,       P(|Z| >= x - lam/x))

with ``lam = ln(2 e**3 / 9) = 1.4959...``. The intermediate bound
``V(x) = min(exp(-x**2/2), e**lam P(Z >= x))`` satisfies ``V <= W``.
Hoeffding's ``exp(-x**2/2)``, the Markov bound ``1/x**2`` and Edelman's
``P(Z >= x - 1.5/x)`` are provided for comparison.

Every bound is 1 (the trivial probability bound) for ``x <= 0`` unless
``strict=True`` is passed, in which case a :class:`DomainError` is raised.
"""

import enum
import functools
import math
from dataclasses import dataclass

from .errors import CrossingError, DomainError
from .normal_core import phi, two_sided_tail, upper_tail

__all__ = [
    "LAMBDA",
    "EXP_LAMBDA",
    "EDELMAN_SHIFT",
    "Constants",
    "BoundKind",
    "CrossingPoints",
    "ONE_SIDED",
    "TWO_SIDED",
    "hoeffding_bound",
    "v_bound",
    "w_bound",
    "w_tilde_bound",
    "edelman_bound",
    "markov_two_sided",
    "bound",
    "solve_crossings",
    "crossing_residuals",
    "piecewise_bound",
    "invert_bound",
]

# 3 - ln 4.5 == ln(2 e^3 / 9) with a single rounded logarithm
LAMBDA = 3.0 - math.log(4.5)
EXP_LAMBDA = 2.0 * math.exp(3.0) / 9.0
EDELMAN_SHIFT = 1.5


@dataclass(frozen=True)
class Constants:
    lam: float = LAMBDA
    exp_lam: float = EXP_LAMBDA


class BoundKind(enum.Enum):
    HOEFFDING = "hoeffding"
    V = "v"
    W = "w"
    WTILDE = "wtilde"
    EDELMAN15 = "edelman15"
    MARKOV2 = "markov2"

    @property
    def two_sided(self):
        return self in (BoundKind.WTILDE, BoundKind.MARKOV2)

    @classmethod
    def parse(cls, name):
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise DomainError(f"unknown bound {name!r}; expected one of {valid}") from None


ONE_SIDED = (BoundKind.HOEFFDING, BoundKind.V, BoundKind.W, BoundKind.EDELMAN15)
TWO_SIDED = (BoundKind.MARKOV2, BoundKind.WTILDE)


@dataclass(frozen=True)
class CrossingPoints:
    """Points where the two branches of V, W and Wt meet."""

    z_v: float
    z_w: float
    z_wtilde: float


def _clamp(p):
    return min(1.0, max(0.0, p))


def _positive(x, strict):
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"bound argument must be finite, got {x!r}")
    if x <= 0.0:
        if strict:
            raise DomainError(f"bound argument must be positive, got {x!r}")
        return None
    return x


def _exp_lam(lam):
    return EXP_LAMBDA if lam == LAMBDA else math.exp(lam)


def _gauss(x):
    return math.exp(-0.5 * x * x)


def hoeffding_bound(x, strict=False):
    """``exp(-x**2/2)``."""
    x = _positive(x, strict)
    if x is None:
        return 1.0
    return _clamp(_gauss(x))


def v_bound(x, strict=False, lam=LAMBDA):
    """``min(exp(-x**2/2), e**lam * P(Z >= x))``."""
    x = _positive(x, strict)
    if x is None:
        return 1.0
    return _clamp(min(_gauss(x), _exp_lam(lam) * upper_tail(x)))


def w_bound(x, strict=False, lam=LAMBDA):
    """``min(exp(-x**2/2), P(Z >= x - lam/x))``; strictly decreasing."""
    x = _positive(x, strict)
    if x is None:
        return 1.0
    return _clamp(min(_gauss(x), upper_tail(x - lam / x)))


def w_tilde_bound(x, strict=False, lam=LAMBDA):
    """``min(1, 1/x**2, P(|Z| >= x - lam/x))``, the two-sided bound."""
    x = _positive(x, strict)
    if x is None:
        return 1.0
    return _clamp(min(1.0, 1.0 / (x * x), two_sided_tail(x - lam / x)))


def edelman_bound(x, strict=False):
    """``P(Z >= x - 1.5/x)``."""
    x = _positive(x, strict)
    if x is None:
        return 1.0
    return _clamp(upper_tail(x - EDELMAN_SHIFT / x))


def markov_two_sided(x, strict=False):
    """``min(1, 1/x**2)``, from ``E S**2 <= 1``."""
    x = _positive(x, strict)
    if x is None:
        return 1.0
    return _clamp(min(1.0, 1.0 / (x * x)))


_BOUND_FUNCS = {
    BoundKind.HOEFFDING: hoeffding_bound,
    BoundKind.V: v_bound,
    BoundKind.W: w_bound,
    BoundKind.WTILDE: w_tilde_bound,
    BoundKind.EDELMAN15: edelman_bound,
    BoundKind.MARKOV2: markov_two_sided,
}


def bound(kind, x, strict=False):
    """Evaluate the bound of the given kind at ``x``."""
    return _BOUND_FUNCS[BoundKind(kind)](x, strict=strict)


# --- crossing points --------------------------------------------------------


def _crossing_equations(lam):
    """(h, h') pairs whose unique bracketed roots are z_v, z_w, z_wtilde."""
    exp_lam = _exp_lam(lam)

    def h_v(z):
        return _gauss(z) - exp_lam * upper_tail(z)

    def dh_v(z):
        return -z * _gauss(z) + exp_lam * phi(z)

    def h_w(z):
        return _gauss(z) - upper_tail(z - lam / z)

    def dh_w(z):
        return -z * _gauss(z) + phi(z - lam / z) * (1.0 + lam / (z * z))

    def h_wt(z):
        return 1.0 / (z * z) - two_sided_tail(z - lam / z)

    def dh_wt(z):
        return -2.0 / z**3 + 2.0 * phi(z - lam / z) * (1.0 + lam / (z * z))

    return {
        "z_v": (h_v, dh_v, (1.0, 2.0)),
        "z_w": (h_w, dh_w, (1.0, 2.0)),
        "z_wtilde": (h_wt, dh_wt, (math.sqrt(lam), 3.0)),
    }


def _bisect_newton(h, dh, lo, hi, width=1e-13):
    f_lo, f_hi = h(lo), h(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise CrossingError(f"no sign change on [{lo}, {hi}]: h={f_lo:.3g}, {f_hi:.3g}")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        f_mid = h(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    z = 0.5 * (lo + hi)
    slope = dh(z)
    if slope != 0.0:
        polished = z - h(z) / slope
        if lo <= polished <= hi and abs(h(polished)) <= abs(h(z)):
            z = polished
    return z


def solve_crossings(lam=LAMBDA):
    """Locate z_v, z_w and z_wtilde by bisection plus one Newton step.

    ``lam`` exists so that callers can probe sensitivity; the default is the
    sharp constant.
    """
    roots = {
        name: _bisect_newton(h, dh, lo, hi)
        for name, (h, dh, (lo, hi)) in _crossing_equations(lam).items()
    }
    return CrossingPoints(**roots)


def crossing_residuals(crossings, lam=LAMBDA):
    """Absolute residuals of the defining equations at the given points."""
    eqs = _crossing_equations(lam)
    return {name: abs(eqs[name][0](getattr(crossings, name))) for name in eqs}


@functools.lru_cache(maxsize=None)
def _default_crossings():
    return solve_crossings()


def piecewise_bound(kind, x, crossings=None, strict=False):
    """Evaluate V, W or Wt by selecting the active branch.

    The branches are delimited by the crossing points; no minimum is taken.
    """
    kind = BoundKind(kind)
    if crossings is None:
        crossings = _default_crossings()
    x = _positive(x, strict)
    if x is None:
        return 1.0
    if kind is BoundKind.V:
        if x <= crossings.z_v:
            return _gauss(x)
        return _clamp(EXP_LAMBDA * upper_tail(x))
    if kind is BoundKind.W:
        if x <= crossings.z_w:
            return _gauss(x)
        return _clamp(upper_tail(x - LAMBDA / x))
    if kind is BoundKind.WTILDE:
        if x <= 1.0:
            return 1.0
        if x <= crossings.z_wtilde:
            return 1.0 / (x * x)
        return _clamp(two_sided_tail(x - LAMBDA / x))
    raise DomainError(f"{kind.value} has no piecewise form")


# --- inversion --------------------------------------------------------------


def invert_bound(kind, alpha):
    """Smallest ``x > 0`` with ``bound(kind, x) <= alpha``.

    Accurate to ``1e-10`` absolute in ``x``. For Wt the flat region ``(0, 1]``
    is never returned.
    """
    kind = BoundKind(kind)
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if kind is BoundKind.HOEFFDING:
        return math.sqrt(-2.0 * math.log(alpha))
    if kind is BoundKind.MARKOV2:
        return 1.0 / math.sqrt(alpha)
    func = _BOUND_FUNCS[kind]
    # every bound equals 1 near 0 or on (0, 1] (Wt), so 1.0 is never an answer
    # for alpha < 1 except through the monotone part
    lo = 1.0 if kind is BoundKind.WTILDE else 1e-12
    hi = 2.0
    while func(hi) > alpha:
        lo, hi = hi, 2.0 * hi
        if hi > 1e3:
            raise DomainError(f"alpha={alpha!r} is below the representable tail")
    while hi - lo > 1e-13 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if func(mid) <= alpha:
            hi = mid
        else:
            lo = mid
    return hi
