"""Sharp Gaussian-shift tail bounds for normalized sums of bounded random variables.

The headline bound: if ``a_1**2 + a_2**2 + ... = 1`` and the ``eta_i`` are
independent, zero-mean and bounded by 1, then for ``x > 0``

    P(a_1 eta_1 + a_2 eta_2 + ... >= x) <= P(Z >= x - lam/x),
    lam = ln(2 e**3 / 9) = 1.4959...

The package evaluates and inverts this and related bounds, and checks them
against exact and simulated tails.
"""

__version__ = "0.1.0"

from .bounds import (  # noqa: E402
    EXP_LAMBDA,
    LAMBDA,
    BoundKind,
    Constants,
    CrossingPoints,
    bound,
    edelman_bound,
    hoeffding_bound,
    invert_bound,
    markov_two_sided,
    piecewise_bound,
    solve_crossings,
    v_bound,
    w_bound,
    w_tilde_bound,
)
from .errors import CapacityError, DomainError, TailboundError, UsageError  # noqa: E402
from .normal_core import phi, two_sided_tail, upper_tail, upper_tail_inverse  # noqa: E402
