"""Clayton copula kernels.

The bivariate Clayton copula

    C(u1, u2; alpha) = (u1^(-alpha) + u2^(-alpha) - 1)^(-1/alpha),  alpha > 0,

couples two marginal CDFs into a joint CDF with positive, lower-tail
dependence.  Its strength maps to Kendall's tau through the closed form
tau = alpha / (alpha + 2).

Everything is evaluated through the log-domain expression

    log t = m + log(exp(a - m) + exp(b - m) - exp(-m)),
    a = -alpha * log(u1),  b = -alpha * log(u2),  m = max(a, b),

which is exact at the copula boundaries and stable both for very small
alpha (independence limit) and for arguments deep in the tails.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ParameterDomainError


def _check_alpha(alpha: float) -> float:
    if not (np.isfinite(alpha) and alpha > 0):
        raise ParameterDomainError(f"copula parameter alpha must be positive, got {alpha!r}")
    return float(alpha)


def _log_t(log_u1, log_u2, alpha):
    """log(u1^-a + u2^-a - 1) from the log arguments, stably.

    Small exponents go through expm1/log1p, which keeps full relative
    precision when alpha is tiny (the later division by alpha would amplify
    any absolute rounding); large exponents use a max-shift, which cannot
    overflow and is exact at the boundaries (an argument of 0 gives
    log t = inf, hence C = 0).
    """
    a = -alpha * log_u1
    b = -alpha * log_u2
    m = np.maximum(a, b)
    a_small = np.minimum(a, 350.0)
    b_small = np.minimum(b, 350.0)
    precise = np.log1p(np.expm1(a_small) + np.expm1(b_small))
    with np.errstate(invalid="ignore"):
        shifted = m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))
    return np.where(m < 350.0, precise, shifted)


def clayton_cdf(u1, u2, alpha: float):
    """Clayton copula CDF ``C(u1, u2; alpha)``.

    Boundary cases are exact: C(u, 0) = 0 and C(u, 1) = u.
    """
    alpha = _check_alpha(alpha)
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if np.any((u1 < 0) | (u1 > 1)) or np.any((u2 < 0) | (u2 > 1)):
        raise ParameterDomainError("copula arguments must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        log_u1 = np.log(u1)
        log_u2 = np.log(u2)
    out = np.exp(-_log_t(log_u1, log_u2, alpha) / alpha)
    # Return the unit-cube edges bitwise exactly.
    out = np.where(u1 >= 1.0, u2, out)
    out = np.where(u2 >= 1.0, u1, out)
    out = np.where((u1 <= 0.0) | (u2 <= 0.0), 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def _du1_from_logs(log_u1, u2, alpha):
    """Conditional CDF of U2 given U1 = u1 from log(u1); u2 may touch 0 or 1."""
    with np.errstate(divide="ignore"):
        log_u2 = np.log(u2)
    log_t = _log_t(log_u1, log_u2, alpha)
    with np.errstate(invalid="ignore"):
        val = np.exp((-alpha - 1.0) * log_u1 - (1.0 / alpha + 1.0) * log_t)
    # The value is a conditional CDF; pin the boundaries exactly.
    val = np.where(u2 >= 1.0, 1.0, np.minimum(val, 1.0))
    return np.where(u2 <= 0.0, 0.0, val)


def clayton_du1(u1, u2, alpha: float):
    """Partial derivative of the Clayton CDF in its first argument.

    This is the conditional CDF of U2 given U1 = u1,

        dC/du1 = u1^(-alpha-1) * (u1^(-alpha) + u2^(-alpha) - 1)^(-1/alpha - 1),

    a nondecreasing function of u2 with values in [0, 1].
    """
    alpha = _check_alpha(alpha)
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if np.any((u1 <= 0) | (u1 > 1)):
        raise ParameterDomainError("u1 must lie in (0, 1]; the derivative is undefined at u1 = 0")
    if np.any((u2 < 0) | (u2 > 1)):
        raise ParameterDomainError("u2 must lie in [0, 1]")
    out = _du1_from_logs(np.log(u1), u2, alpha)
    if out.ndim == 0:
        return float(out)
    return out


def conditional_u2_quantile(u1, q, alpha: float):
    """Invert ``clayton_du1`` in its second argument.

    Returns the u2 with ``clayton_du1(u1, u2, alpha) = q``, the exact
    conditional quantile used when simulating from the joint law:

        u2 = (u1^(-alpha) * (q^(-alpha/(1+alpha)) - 1) + 1)^(-1/alpha).

    Evaluated in the log domain so extreme (u1, q) pairs cannot overflow.
    """
    alpha = _check_alpha(alpha)
    u1 = np.asarray(u1, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        log_w = np.log(np.expm1(-(alpha / (1.0 + alpha)) * np.log(q)))
        log_a = -alpha * np.log(u1)
    log_u2 = -np.logaddexp(log_a + log_w, 0.0) / alpha
    out = np.exp(log_u2)
    if out.ndim == 0:
        return float(out)
    return out


def kendall_tau_from_alpha(alpha: float) -> float:
    """Kendall's tau implied by the Clayton parameter: tau = alpha/(alpha+2)."""
    alpha = _check_alpha(alpha)
    return alpha / (alpha + 2.0)


def alpha_from_kendall_tau(tau: float) -> float:
    """Clayton parameter implied by Kendall's tau: alpha = 2 tau/(1 - tau)."""
    if not (np.isfinite(tau) and 0.0 < tau < 1.0):
        raise ParameterDomainError(f"tau must lie in (0, 1), got {tau!r}")
    return 2.0 * tau / (1.0 - tau)
