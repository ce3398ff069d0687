"""Exact and Monte Carlo tails of normalized random sums.

Exact routes:

* :func:`exact_rademacher_tail` enumerates all ``2**n`` sign patterns
  (``n <= 25``);
* :func:`exact_rademacher_tail_mitm` splits the signs in two halves, sorts the
  half sums and counts matching pairs (``n <= 46``);
* :func:`exact_bounded_sum_tail` convolves finite zero-mean laws.

Monte Carlo routes cover history-dependent martingales with two-point
conditional laws and random sums of vectors in ``R**d``. Samples are drawn in
fixed-size blocks, block ``j`` from the PCG64 stream seeded by
``SeedSequence(seed, spawn_key=(j,))``, so estimates do not depend on the
number of worker threads (``TAILBOUND_THREADS``).

All counts include outcomes within ``ATOM_TOL`` below the threshold, which
errs toward reporting a bound violation rather than hiding one.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bounds import ONE_SIDED, TWO_SIDED, BoundKind, bound
from .errors import CapacityError, DomainError, UsageError

__all__ = [
    "ATOM_TOL",
    "MC_DELTA",
    "WeightVector",
    "DiscreteZeroMeanDistribution",
    "TwoPointRule",
    "MartingaleSpec",
    "HilbertInstance",
    "TailSource",
    "VerificationReport",
    "exact_rademacher_tail",
    "exact_rademacher_tail_mitm",
    "exact_bounded_sum_tail",
    "simulate_martingale",
    "simulate_hilbert_norms",
    "mc_margin",
    "mc_martingale_tail",
    "mc_hilbert_tail",
    "rademacher_source",
    "bounded_source",
    "martingale_source",
    "hilbert_source",
    "violation_flags",
    "verify_instance",
    "random_distribution",
    "random_martingale_spec",
    "random_hilbert_instance",
]

ATOM_TOL = 1e-9
MERGE_TOL = 1e-12
MC_DELTA = 1e-6
MAX_DIRECT_N = 25
MAX_MITM_N = 46
MAX_CONVOLUTION_ATOMS = 10**7
MIN_MC_SAMPLES = 10**4
BLOCK_SIZE = 1 << 16
VIOLATION_TOL = 1e-9

_DIRECT_CHUNK_BITS = 20


def worker_count(workers=None):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("TAILBOUND_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"TAILBOUND_THREADS must be an integer, got {env!r}") from None
    return min(4, os.cpu_count() or 1)


def _ordered_map(func, items, workers):
    workers = worker_count(workers)
    if workers == 1 or len(items) == 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


# --- data types -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Coefficients ``a_i`` rescaled so that ``sum a_i**2 == 1``."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float).ravel()
        if a.size == 0:
            raise DomainError("weight vector must have at least one entry")
        if not np.all(np.isfinite(a)):
            raise DomainError("weights must be finite")
        norm = math.sqrt(math.fsum(a * a))
        if norm == 0.0:
            raise DomainError("weights must not all be zero")
        a = a / norm
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self):
        return self.a.size

    @classmethod
    def uniform(cls, n):
        return cls(np.ones(n))

    @classmethod
    def random(cls, rng, n):
        return cls(rng.standard_normal(n))


@dataclass(frozen=True, eq=False)
class DiscreteZeroMeanDistribution:
    """A finite law on ``[-1, 1]`` with zero mean."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.array(self.support, dtype=float).ravel()
        probs = np.array(self.probs, dtype=float).ravel()
        if support.size == 0 or support.size != probs.size:
            raise DomainError("support and probs must be non-empty and of equal length")
        if not (np.all(np.isfinite(support)) and np.all(np.isfinite(probs))):
            raise DomainError("support and probs must be finite")
        if np.any(probs < 0):
            raise DomainError("probabilities must be nonnegative")
        if np.max(np.abs(support)) > 1.0:
            raise DomainError("support must lie in [-1, 1]")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise DomainError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        mean = math.fsum(support * probs)
        if abs(mean) > 1e-12:
            raise DomainError(f"mean is {mean!r}, not 0")
        support.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def rademacher(cls):
        return cls([1.0, -1.0], [0.5, 0.5])

    @classmethod
    def two_point(cls, u, v):
        """Law on ``{u, -v}`` with ``P(u) = v/(u+v)``, which has mean zero."""
        if not (0 < u <= 1 and 0 < v <= 1):
            raise DomainError(f"two-point law needs u, v in (0, 1], got {u!r}, {v!r}")
        p = v / (u + v)
        return cls([u, -v], [p, 1.0 - p])

    @property
    def size(self):
        return self.support.size


@dataclass(frozen=True, eq=False)
class TwoPointRule:
    """History-dependent two-point conditional laws for martingale differences.

    At step ``i`` the difference ``eta_i`` takes values ``u`` or ``-v`` with
    ``P(u) = v/(u+v)``, where ``(u, v) = (u_table[i, s], v_table[i, s])`` and
    the state ``s`` summarizes earlier signs:

    * ``"window"``: bit ``j`` of ``s`` is 1 iff step ``i-1-j`` went up
      (``memory`` bits; absent steps count as down);
    * ``"ups"``: ``s = min(number of earlier up steps, states - 1)``.
    """

    kind: str
    u_table: np.ndarray
    v_table: np.ndarray

    def __post_init__(self):
        u = np.array(self.u_table, dtype=float)
        v = np.array(self.v_table, dtype=float)
        if u.ndim != 2 or u.shape != v.shape:
            raise DomainError("u and v tables must be 2-D arrays of equal shape")
        if self.kind not in ("window", "ups"):
            raise DomainError(f"rule kind must be 'window' or 'ups', got {self.kind!r}")
        if self.kind == "window" and (u.shape[1] & (u.shape[1] - 1)):
            raise DomainError("window rules need a power-of-two number of states")
        if not (np.all((u > 0) & (u <= 1)) and np.all((v > 0) & (v <= 1))):
            raise DomainError("all u, v entries must lie in (0, 1]")
        object.__setattr__(self, "u_table", u)
        object.__setattr__(self, "v_table", v)

    @property
    def steps(self):
        return self.u_table.shape[0]

    @property
    def states(self):
        return self.u_table.shape[1]

    def state(self, i, history):
        m = history.shape[0]
        s = np.zeros(m, dtype=np.int64)
        if self.kind == "window":
            memory = self.states.bit_length() - 1
            for j in range(min(memory, i)):
                s |= (history[:, i - 1 - j] > 0).astype(np.int64) << j
        else:
            if i:
                s = np.minimum((history[:, :i] > 0).sum(axis=1), self.states - 1)
        return s

    def __call__(self, i, history):
        s = self.state(i, history)
        return self.u_table[i, s], self.v_table[i, s]

    @classmethod
    def independent(cls, u, v):
        return cls("window", np.asarray(u, float)[:, None], np.asarray(v, float)[:, None])


@dataclass(frozen=True, eq=False)
class MartingaleSpec:
    """Martingale ``S_n = sum a_i eta_i`` with two-point conditional laws.

    ``rule(i, history)`` receives the ``(samples, i)`` array of earlier signs
    (+1 for ``u``, -1 for ``-v``) and returns arrays ``(u, v)`` in ``(0, 1]``.
    Since ``|a_i eta_i| <= |a_i|``, the differences satisfy
    ``sum ess sup |X_i|**2 <= 1``.
    """

    a: WeightVector
    rule: Callable

    def __post_init__(self):
        if not isinstance(self.a, WeightVector):
            object.__setattr__(self, "a", WeightVector(self.a))
        steps = getattr(self.rule, "steps", None)
        if steps is not None and steps != self.a.n:
            raise DomainError(f"rule covers {steps} steps but there are {self.a.n} weights")

    @property
    def n(self):
        return self.a.n


@dataclass(frozen=True, eq=False)
class HilbertInstance:
    """Vectors ``x_i`` in ``R**d`` with ``sum |x_i|**2 = 1`` and laws for ``eta_i``."""

    vectors: np.ndarray
    dists: tuple

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=float)
        if vectors.ndim != 2 or vectors.shape[0] == 0 or vectors.shape[1] == 0:
            raise DomainError("vectors must form a non-empty (k, d) array")
        if not np.all(np.isfinite(vectors)):
            raise DomainError("vectors must be finite")
        if len(self.dists) != vectors.shape[0]:
            raise DomainError(f"{vectors.shape[0]} vectors but {len(self.dists)} laws")
        total = math.fsum((vectors * vectors).ravel())
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"squared norms sum to {total!r}, not 1")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "dists", tuple(self.dists))

    @classmethod
    def normalized(cls, vectors, dists):
        vectors = np.array(vectors, dtype=float)
        total = math.sqrt(math.fsum((vectors * vectors).ravel()))
        if total == 0.0 or not math.isfinite(total):
            raise DomainError("vectors must not all vanish")
        return cls(vectors / total, dists)

    @property
    def dim(self):
        return self.vectors.shape[1]


# --- exact tails ------------------------------------------------------------


def _sign_sums(a):
    # all 2**len(a) signed sums, accumulated term by term in index order
    sums = np.zeros(1)
    for ai in a:
        sums = np.concatenate((sums + ai, sums - ai))
    return sums


def _thresholds(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("tail thresholds must be finite")
    return x


def _count_at_least(sorted_values, t):
    return sorted_values.size - np.searchsorted(sorted_values, t, side="left")


def _count_at_most(sorted_values, t):
    return np.searchsorted(sorted_values, t, side="right")


def _tail_from_sorted(sorted_values, x, two_sided, weights=None):
    """Tail masses of a sorted atom list at thresholds ``x - ATOM_TOL``."""
    t = np.atleast_1d(x) - ATOM_TOL
    if weights is None:
        upper = _count_at_least(sorted_values, t).astype(float)
        total = float(sorted_values.size)
        lower = _count_at_most(sorted_values, -t).astype(float)
    else:
        suffix = np.concatenate((np.cumsum(weights[::-1])[::-1], [0.0]))
        prefix = np.concatenate(([0.0], np.cumsum(weights)))
        upper = suffix[sorted_values.size - _count_at_least(sorted_values, t)]
        lower = prefix[_count_at_most(sorted_values, -t)]
        total = 1.0
    if two_sided:
        mass = np.where(t > 0, upper + lower, total)
    else:
        mass = upper
    return np.minimum(mass / total, 1.0)


def _shape_like(result, x):
    return float(result[0]) if np.ndim(x) == 0 else result


def exact_rademacher_tail(w, x, two_sided=False, workers=None):
    """``P(S >= x)`` (or ``P(|S| >= x)``) for ``S = sum a_i eps_i``, by enumeration.

    ``x`` may be a scalar or an array of thresholds.
    """
    if not isinstance(w, WeightVector):
        w = WeightVector(w)
    if w.n > MAX_DIRECT_N:
        raise CapacityError(
            f"direct enumeration is limited to n <= {MAX_DIRECT_N} (got {w.n}); "
            "use exact_rademacher_tail_mitm"
        )
    x = _thresholds(x)
    t = np.atleast_1d(x) - ATOM_TOL
    split = min(w.n, _DIRECT_CHUNK_BITS)
    low = _sign_sums(w.a[:split])
    highs = _sign_sums(w.a[split:])

    def count(h):
        s = np.sort(low + h)
        upper = _count_at_least(s, t)
        lower = _count_at_most(s, -t)
        return upper, lower

    parts = _ordered_map(count, list(highs), workers)
    upper = sum(p[0] for p in parts)
    lower = sum(p[1] for p in parts)
    total = 2**w.n
    mass = np.where(t > 0, upper + lower, total) if two_sided else upper
    return _shape_like(np.minimum(mass / total, 1.0), x)


def exact_rademacher_tail_mitm(w, x, two_sided=False):
    """Same quantity as :func:`exact_rademacher_tail` via meet-in-the-middle.

    Both halves' ``2**(n/2)`` sign sums are sorted; for each threshold the
    pairs with ``left + right >= t`` are counted by a merged sweep
    (``searchsorted`` of the sorted right sums against the sorted left sums).
    """
    if not isinstance(w, WeightVector):
        w = WeightVector(w)
    if w.n > MAX_MITM_N:
        raise CapacityError(f"meet-in-the-middle is limited to n <= {MAX_MITM_N} (got {w.n})")
    x = _thresholds(x)
    t = np.atleast_1d(x) - ATOM_TOL
    half = (w.n + 1) // 2
    left = np.sort(_sign_sums(w.a[:half]))
    right = np.sort(_sign_sums(w.a[half:]))
    total = left.size * right.size
    result = np.empty(t.size)
    for k, tk in enumerate(t):
        upper = int(np.sum(_count_at_least(left, tk - right), dtype=np.int64))
        if two_sided and tk > 0:
            lower = int(np.sum(_count_at_most(left, -tk - right), dtype=np.int64))
            mass = upper + lower
        elif two_sided:
            mass = total
        else:
            mass = upper
        result[k] = min(mass / total, 1.0)
    return _shape_like(result, x)


def _merge_atoms(values, probs):
    order = np.argsort(values, kind="stable")
    values = values[order]
    probs = probs[order]
    starts = np.concatenate(([0], np.flatnonzero(np.diff(values) > MERGE_TOL) + 1))
    merged = np.add.reduceat(probs, starts)
    return values[starts], merged / merged.sum()


def exact_bounded_sum_tail(w, dists, x, two_sided=False):
    """Exact tail of ``sum a_i eta_i`` for independent finite zero-mean ``eta_i``.

    The laws of ``a_i eta_i`` are convolved one at a time; atoms closer than
    ``1e-12`` are merged and the total mass renormalized after each pass.
    """
    if not isinstance(w, WeightVector):
        w = WeightVector(w)
    dists = list(dists)
    if len(dists) != w.n:
        raise DomainError(f"{w.n} weights but {len(dists)} laws")
    if math.prod(d.size for d in dists) > MAX_CONVOLUTION_ATOMS:
        raise CapacityError(
            f"product of support sizes exceeds {MAX_CONVOLUTION_ATOMS}"
        )
    x = _thresholds(x)
    values = np.zeros(1)
    probs = np.ones(1)
    for ai, d in zip(w.a, dists):
        v = (values[:, None] + ai * d.support[None, :]).ravel()
        p = (probs[:, None] * d.probs[None, :]).ravel()
        values, probs = _merge_atoms(v, p)
    return _shape_like(_tail_from_sorted(values, x, two_sided, probs), x)


# --- Monte Carlo ------------------------------------------------------------


def mc_margin(samples, delta=MC_DELTA):
    """One-sided Hoeffding allowance ``sqrt(ln(1/delta) / (2 samples))``."""
    return math.sqrt(math.log(1.0 / delta) / (2.0 * samples))


def _block_rng(seed, block):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _blocks(samples):
    if samples < MIN_MC_SAMPLES:
        raise DomainError(f"need at least {MIN_MC_SAMPLES} samples, got {samples}")
    sizes = [BLOCK_SIZE] * (samples // BLOCK_SIZE)
    if samples % BLOCK_SIZE:
        sizes.append(samples % BLOCK_SIZE)
    return list(enumerate(sizes))


def _check_rule_output(u, v, m):
    u = np.broadcast_to(np.asarray(u, dtype=float), (m,))
    v = np.broadcast_to(np.asarray(v, dtype=float), (m,))
    if not (np.all((u > 0) & (u <= 1)) and np.all((v > 0) & (v <= 1))):
        raise DomainError("martingale rule produced u or v outside (0, 1]")
    return u, v


def simulate_martingale(spec, samples, seed, workers=None):
    """Draw ``samples`` independent copies of ``S_n``; deterministic in ``seed``."""
    a = spec.a.a

    def run(block):
        j, m = block
        rng = _block_rng(seed, j)
        history = np.empty((m, spec.n), dtype=np.int8)
        s = np.zeros(m)
        for i in range(spec.n):
            u, v = _check_rule_output(*spec.rule(i, history[:, :i]), m)
            up = rng.random(m) < v / (u + v)
            s += a[i] * np.where(up, u, -v)
            history[:, i] = np.where(up, 1, -1)
        return s

    return np.concatenate(_ordered_map(run, _blocks(samples), workers))


def simulate_hilbert_norms(inst, samples, seed, workers=None):
    """Draw ``samples`` copies of ``|sum eta_i x_i|``; deterministic in ``seed``."""
    cdfs = [np.cumsum(d.probs) for d in inst.dists]

    def run(block):
        j, m = block
        rng = _block_rng(seed, j)
        eta = np.empty((m, len(inst.dists)))
        for i, (d, cdf) in enumerate(zip(inst.dists, cdfs)):
            idx = np.searchsorted(cdf, rng.random(m), side="right")
            eta[:, i] = d.support[np.minimum(idx, d.size - 1)]
        return np.linalg.norm(eta @ inst.vectors, axis=1)

    return np.concatenate(_ordered_map(run, _blocks(samples), workers))


def _empirical_tail(draws, x, two_sided):
    s = np.sort(draws)
    return _tail_from_sorted(s, x, two_sided)


def mc_martingale_tail(spec, x, samples, seed, two_sided=False, workers=None):
    """Empirical ``P(S_n >= x)`` (or ``P(|S_n| >= x)``) and its Hoeffding margin."""
    x = _thresholds(x)
    est = _empirical_tail(simulate_martingale(spec, samples, seed, workers), x, two_sided)
    return _shape_like(est, x), mc_margin(samples)


def mc_hilbert_tail(inst, x, samples, seed, workers=None):
    """Empirical ``P(|sum eta_i x_i| >= x)`` and its Hoeffding margin."""
    x = _thresholds(x)
    norms = simulate_hilbert_norms(inst, samples, seed, workers)
    return _shape_like(_empirical_tail(norms, x, False), x), mc_margin(samples)


# --- verification -----------------------------------------------------------


@dataclass
class TailSource:
    """Something that returns ``(tails, margins)`` on a threshold grid."""

    name: str
    two_sided: bool
    exact: bool
    evaluate: Callable


def rademacher_source(w, two_sided=False):
    if not isinstance(w, WeightVector):
        w = WeightVector(w)

    def evaluate(xs):
        if w.n <= MAX_DIRECT_N:
            tails = exact_rademacher_tail(w, xs, two_sided)
        else:
            tails = exact_rademacher_tail_mitm(w, xs, two_sided)
        return tails, np.zeros_like(tails)

    return TailSource(f"rademacher(n={w.n})", two_sided, True, evaluate)


def bounded_source(w, dists, two_sided=False):
    if not isinstance(w, WeightVector):
        w = WeightVector(w)

    def evaluate(xs):
        tails = exact_bounded_sum_tail(w, dists, xs, two_sided)
        return tails, np.zeros_like(tails)

    return TailSource(f"bounded(n={w.n})", two_sided, True, evaluate)


def martingale_source(spec, samples, seed, two_sided=False):
    def evaluate(xs):
        tails, margin = mc_martingale_tail(spec, xs, samples, seed, two_sided)
        return tails, np.full_like(tails, margin)

    return TailSource(f"martingale(n={spec.n})", two_sided, False, evaluate)


def hilbert_source(inst, samples, seed):
    def evaluate(xs):
        tails, margin = mc_hilbert_tail(inst, xs, samples, seed)
        return tails, np.full_like(tails, margin)

    return TailSource(f"hilbert(k={len(inst.dists)}, d={inst.dim})", True, False, evaluate)


@dataclass
class VerificationReport:
    source: str
    two_sided: bool
    x: np.ndarray
    tail: np.ndarray
    margin: np.ndarray
    bounds: dict
    violation: np.ndarray

    @property
    def n_violations(self):
        return int(np.count_nonzero(self.violation))

    @property
    def ok(self):
        return self.n_violations == 0

    def worst_slack(self):
        """Smallest ``bound - (tail - margin)`` over the grid and all bounds."""
        lower = self.tail - self.margin
        return float(min(np.min(b - lower) for b in self.bounds.values()))


def violation_flags(tail, margin, bound_columns):
    """Flag rows where ``tail - margin`` exceeds any bound by more than 1e-9."""
    lower = np.asarray(tail, float) - np.asarray(margin, float)
    flags = np.zeros(lower.shape, dtype=bool)
    for column in bound_columns:
        flags |= lower > np.asarray(column, float) + VIOLATION_TOL
    return flags


def verify_instance(source, bounds, x_grid):
    """Compare a tail source against the given bounds on ``x_grid``."""
    kinds = [BoundKind(k) for k in bounds]
    if not kinds:
        raise UsageError("at least one bound is required")
    allowed = TWO_SIDED if source.two_sided else ONE_SIDED
    wrong = [k.value for k in kinds if k not in allowed]
    if wrong:
        side = "two-sided" if source.two_sided else "one-sided"
        raise UsageError(f"{side} tails cannot be checked against {', '.join(wrong)}")
    xs = _thresholds(x_grid).ravel()
    tails, margins = source.evaluate(xs)
    columns = {k: np.array([bound(k, x) for x in xs]) for k in kinds}
    return VerificationReport(
        source=source.name,
        two_sided=source.two_sided,
        x=xs,
        tail=np.asarray(tails, float),
        margin=np.asarray(margins, float),
        bounds=columns,
        violation=violation_flags(tails, margins, columns.values()),
    )


# --- random instances -------------------------------------------------------


def random_distribution(rng, pairs=2):
    """Random zero-mean law: a mixture of ``pairs`` two-point zero-mean laws."""
    u = rng.uniform(0.05, 1.0, pairs)
    v = rng.uniform(0.05, 1.0, pairs)
    mix = rng.dirichlet(np.ones(pairs))
    p_up = v / (u + v)
    support = np.concatenate((u, -v))
    probs = np.concatenate((mix * p_up, mix * (1 - p_up)))
    # restore exact zero mean lost to rounding by adjusting the last pair
    mean = math.fsum(support * probs)
    probs[pairs - 1] -= mean / (u[-1] + v[-1])
    probs[-1] += mean / (u[-1] + v[-1])
    probs = probs / math.fsum(probs)
    return DiscreteZeroMeanDistribution(support, probs)


def random_martingale_spec(rng, n, kind="window", states=4):
    """Random history-dependent spec with ``u, v`` drawn from ``(0.05, 1]``."""
    u = rng.uniform(0.05, 1.0, (n, states))
    v = rng.uniform(0.05, 1.0, (n, states))
    return MartingaleSpec(WeightVector.random(rng, n), TwoPointRule(kind, u, v))


def random_hilbert_instance(rng, k, d):
    vectors = rng.standard_normal((k, d))
    dists = [random_distribution(rng, pairs=int(rng.integers(1, 4))) for _ in range(k)]
    return HilbertInstance.normalized(vectors, dists)
