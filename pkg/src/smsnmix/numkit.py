"""Special functions, symmetric-matrix helpers and scale-variable quadrature.

Everything here is pure and vectorised.  The quadrature is a
double-exponential (DE) trapezoid rule: ``exp-sinh`` on the positive
half-line and ``tanh-sinh`` on the unit interval.  Both cope with the
integrable power singularities that gamma and beta mixing densities put at
the endpoints, which a plain Gauss-Legendre rule does not.  Halving the step
doubles the node count and reuses every previous node.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .exceptions import NonConvergent, NotPSD

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)

# DE truncation points: chosen so that |log u| reaches ~700 at the ends.
_T_MAX = {"half_line": 6.75, "unit": 6.0}
_COARSE_H = 0.25
_LOG_NEGLIGIBLE = 46.0  # e^-46 ~ 1e-20 relative to the row maximum


def _check_finite(x, name="x"):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")
    return x


# ---------------------------------------------------------------------------
# Univariate special functions
# ---------------------------------------------------------------------------

def std_normal_cdf(x):
    """Standard normal cdf, monotone and in (0, 1) for finite input."""
    return special.ndtr(_check_finite(x))


def log_std_normal_cdf(x):
    """``log Phi(x)``; accurate deep into the left tail (x << -8)."""
    return special.log_ndtr(_check_finite(x))


def _log_ndtr_fast(z):
    # log(ndtr) is ~3x cheaper than log_ndtr and exact enough above -30.
    z = np.asarray(z, dtype=float)
    out = np.log(special.ndtr(np.maximum(z, -30.0)))
    deep = z < -30.0
    if np.any(deep):
        out[deep] = special.log_ndtr(z[deep])
    return out


def mills_w(x):
    """Inverse Mills ratio ``phi(x) / Phi(x)``.

    Evaluated as ``sqrt(2/pi) / erfcx(-x/sqrt(2))``, which never forms the
    0/0 ratio in the left tail and tends to ``|x|`` as ``x -> -inf``.
    """
    x = _check_finite(x)
    return SQRT_2_OVER_PI / special.erfcx(-x / np.sqrt(2.0))


def _mills_w_unchecked(x):
    return SQRT_2_OVER_PI / special.erfcx(-np.asarray(x) / np.sqrt(2.0))


def bessel_k(order, x):
    """Modified Bessel function of the second kind ``K_order(x)``, x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("bessel_k requires x > 0")
    return special.kv(order, x)


def log_bessel_k(order, x):
    """``log K_order(x)`` without overflow/underflow at either end of x."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("log_bessel_k requires x > 0")
    order = np.abs(np.asarray(order, dtype=float))
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = np.log(special.kve(order, x)) - x
        # kve returns nan for huge x; the leading asymptote is exact there
        big = x > 1e8
        if np.any(big):
            out = np.where(big, 0.5 * np.log(np.pi / (2.0 * x)) - x, out)
    bad = ~np.isfinite(out) & (x < 1.0)
    if np.any(bad):
        # small-argument asymptotes where kve overflows
        o, xb = np.broadcast_arrays(order, x)
        bad = np.broadcast_to(bad, o.shape)
        o, xb = o[bad], xb[bad]
        small = np.where(
            o > 0,
            special.gammaln(np.maximum(o, 1e-300)) - np.log(2.0) + o * np.log(2.0 / xb),
            np.log(np.log(2.0 / xb) - np.euler_gamma),
        )
        out = np.array(out, copy=True)
        out[bad] = small
    return out


def student_t_cdf(x, df):
    """Univariate Student-t cdf with ``df`` degrees of freedom."""
    df = np.asarray(df, dtype=float)
    if np.any(df <= 0):
        raise ValueError("student_t_cdf requires df > 0")
    return special.stdtr(df, np.asarray(x, dtype=float))


def log_student_t_cdf(x, df):
    df = np.asarray(df, dtype=float)
    if np.any(df <= 0):
        raise ValueError("log_student_t_cdf requires df > 0")
    x = np.asarray(x, dtype=float)
    # upper tail via symmetry keeps precision for large positive x
    with np.errstate(divide="ignore"):
        return np.where(
            x > 0,
            np.log1p(-special.stdtr(df, -x)),
            np.log(special.stdtr(df, x)),
        )


# ---------------------------------------------------------------------------
# Symmetric matrices
# ---------------------------------------------------------------------------

def _symmetric_eigh(M, tol=1e-12):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(np.abs(M).max(), 1e-300)
    if np.abs(M - M.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    top = max(w.max(), 0.0)
    if w.min() < -1e-10 * top or (top == 0.0 and w.min() < 0):
        raise NotPSD(f"smallest eigenvalue {w.min():.3e} vs largest {top:.3e}")
    return np.clip(w, 0.0, None), V


def psd_sqrt(M):
    """Symmetric positive semidefinite square root.

    Eigenvalues in ``[-1e-10 * max, 0)`` are treated as rounding noise and
    clamped to zero; anything more negative raises :class:`NotPSD`.
    """
    w, V = _symmetric_eigh(M)
    return (V * np.sqrt(w)) @ V.T


def psd_inv_sqrt(M):
    """Inverse of :func:`psd_sqrt` for a positive definite matrix."""
    w, V = _symmetric_eigh(M)
    if w.min() <= 0:
        raise NotPSD("matrix is singular")
    return (V / np.sqrt(w)) @ V.T


def is_positive_definite(M):
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


# ---------------------------------------------------------------------------
# Double-exponential quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """DE trapezoid nodes mapped onto a support.

    ``log_u`` are the log-abscissae and ``log_w`` the log-weights, so that
    ``sum(exp(log_w) * f(exp(log_u)))`` approximates ``int f(u) du``.
    """

    support: str
    step: float
    t: np.ndarray
    log_u: np.ndarray
    log_w: np.ndarray

    @property
    def size(self):
        return self.t.size

    @property
    def nodes(self):
        return np.exp(self.log_u)

    @property
    def weights(self):
        return np.exp(self.log_w)


def _de_map(support, t):
    """Log-abscissa and log-Jacobian of the DE map at parameters ``t``."""
    if support == "half_line":
        s = 0.5 * np.pi * np.sinh(t)
        return s, s + np.log(0.5 * np.pi * np.cosh(t))
    if support == "unit":
        s = np.pi * np.sinh(t)
        log_v = -np.logaddexp(0.0, -s)
        log_1mv = -np.logaddexp(0.0, s)
        return log_v, log_v + log_1mv + np.log(np.pi * np.cosh(t))
    raise ValueError(f"unknown support {support!r}")


def de_rule(support, step=1.0 / 32.0):
    """Full DE rule on ``support`` ('half_line' or 'unit') with step ``step``."""
    tmax = _T_MAX[support]
    k = int(np.floor(tmax / step))
    t = step * np.arange(-k, k + 1)
    log_u, log_jac = _de_map(support, t)
    return QuadratureRule(support, step, t, log_u, log_jac + np.log(step))


_MEAN_FLOOR = 1e-12


def scale_posterior(law, log_kernel, stats=None, rtol=1e-10, max_nodes=1024,
                    fail_rtol=1e-6):
    """Posterior normalisers and moments over a scaling variable.

    For each row ``r`` computes ``Z_r = int exp(log_kernel(u)_r) h(u) du`` and
    the posterior means ``E_r[s_j(u)]`` under ``exp(log_kernel) * h``.

    Parameters
    ----------
    law : object
        Provides ``support`` ('point', 'half_line' or 'unit') and
        ``log_prior(log_u)``.
    log_kernel : callable
        ``log_kernel(log_u) -> (R, N)`` row log-likelihoods at the nodes.
    stats : callable, optional
        ``stats(log_u) -> (R, J, N)`` or ``(J, N)``; functions averaged.

    Returns
    -------
    log_z : ndarray, shape (R,)
    means : ndarray, shape (R, J)
        Empty second axis when ``stats`` is None.

    The coarse pass (step 1/4 over the whole support) fixes a window outside
    which every row is below ``exp(-46)`` of its maximum; finer levels only
    add midpoints inside that window.
    """
    if law.support == "point":
        log_u = np.zeros(1)
        lk = np.asarray(log_kernel(log_u), dtype=float)
        if stats is None:
            return lk[:, 0], np.zeros((lk.shape[0], 0))
        s = np.asarray(stats(log_u), dtype=float)
        s = np.broadcast_to(s if s.ndim == 3 else s[None], (lk.shape[0],) + s.shape[-2:])
        return lk[:, 0], s[..., 0].copy()

    support = law.support
    tmax = _T_MAX[support]

    def evaluate(t):
        log_u, log_jac = _de_map(support, t)
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            L = np.asarray(log_kernel(log_u), dtype=float) + law.log_prior(log_u) + log_jac
        if stats is None:
            return L, None
        S = np.asarray(stats(log_u), dtype=float)
        if S.ndim == 2:
            S = np.broadcast_to(S[None], (L.shape[0],) + S.shape)
        return L, S

    k = int(np.floor(tmax / _COARSE_H))
    t0 = _COARSE_H * np.arange(-k, k + 1)
    L0, S0 = evaluate(t0)
    rowmax = np.max(L0, axis=1)
    finite = np.isfinite(rowmax)
    sig = (L0 >= (rowmax - _LOG_NEGLIGIBLE)[:, None]) & finite[:, None]
    cols = np.flatnonzero(sig.any(axis=0))
    if cols.size == 0:
        lo, hi = 0, t0.size - 1
    else:
        lo, hi = max(cols[0] - 2, 0), min(cols[-1] + 2, t0.size - 1)
    t_lo, t_hi = t0[lo], t0[hi]

    # running sums over all evaluated nodes, shifted by a per-row constant
    shift = np.where(finite, rowmax, 0.0)

    def accumulate(L, S):
        w = np.exp(L - shift[:, None])
        acc = [w.sum(axis=1)]
        if S is not None:
            acc.append(np.einsum("rn,rjn->rj", w, S))
            acc.append(np.einsum("rn,rjn->rj", w, np.abs(S)))
        return acc

    sums = accumulate(L0[:, lo:hi + 1], None if S0 is None else S0[..., lo:hi + 1])
    step = _COARSE_H
    prev = [step * a for a in sums]
    n_nodes = hi - lo + 1
    gap = np.inf
    levels = 0
    while True:
        step /= 2.0
        t_new = np.arange(t_lo + step, t_hi, 2.0 * step)
        if n_nodes + t_new.size > max_nodes:
            break
        L, S = evaluate(t_new)
        sums = [a + b for a, b in zip(sums, accumulate(L, S))]
        n_nodes += t_new.size
        cur = [step * a for a in sums]
        levels += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            gz = np.abs(cur[0] - prev[0]) / cur[0]
            gap = np.nanmax(np.where(cur[0] > 0, gz, 0.0)) if gz.size else 0.0
            if len(cur) > 1 and cur[1].size:
                # absolute floor: stats whose posterior mass is ~1e-40 (e.g. an
                # underflowing Mills ratio) must not block convergence
                gn = np.abs(cur[1] - prev[1]) / (cur[2] + _MEAN_FLOOR * cur[0][:, None])
                gap = max(gap, np.nanmax(np.where(cur[2] > 0, gn, 0.0)))
        prev = cur
        if levels >= 2 and gap <= rtol:
            break
    if gap > fail_rtol:
        raise NonConvergent(f"DE quadrature gap {gap:.2e} after {n_nodes} nodes")
    z = prev[0]
    num = prev[1] if len(prev) > 1 else None
    with np.errstate(divide="ignore"):
        log_z = shift + np.log(z)
    if num is None:
        return log_z, np.zeros((z.size, 0))
    with np.errstate(invalid="ignore", divide="ignore"):
        means = num / z[:, None]
    return log_z, means


def integrate_scale(g: Callable, law, rtol=1e-8, max_nodes=1024):
    """``int g(u) h(u; theta) du`` for a scalar function ``g`` of the scale.

    ``g`` receives a vector of abscissae and must return values of the same
    shape.  Raises :class:`NonConvergent` when the node cap is reached with a
    relative gap above 1e-6.
    """

    def stats(log_u):
        return np.asarray(g(np.exp(log_u)), dtype=float)[None, :]

    log_z, means = scale_posterior(
        law, lambda log_u: np.zeros((1, np.size(log_u))), stats, rtol=rtol,
        max_nodes=max_nodes,
    )
    return float(np.exp(log_z[0]) * means[0, 0])


def golden_section_max(f, lo, hi, tol=1e-6, max_iter=200):
    """Maximise a unimodal ``f`` on ``[lo, hi]``; returns the argmax."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    # endpoints are admissible; compare them too
    cands = [(fc, c), (fd, d), (f(lo), float(lo)), (f(hi), float(hi))]
    return max(cands)[1]
