"""Conditional distributions and E-step expectations under missing-at-random data.

Rows are grouped by their missingness pattern so that each (pattern,
component) pair needs one factorisation of its observed scale block and one
batched quadrature over the scaling variable.

Notation per component, with ``o``/``m`` the observed/missing coordinates:

* ``q = Delta_o' Sigma_oo^{-1} Delta_o`` and
  ``A = Delta_o' Sigma_oo^{-1} (x_o - mu_o) / sqrt(1 - q)``;
* given ``K = k``, ``X_o`` has skew-normal density
  ``2 phi(x_o; mu_o, k Sigma_oo) Phi(k^{-1/2} A)``;
* the latent ``T`` given ``(x_o, k)`` is normal ``(mu_T, k sigma_T^2)``
  truncated to ``(0, inf)`` with ``sigma_T^2 = 1 - q`` and ``mu_T = sigma_T A``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg, special

from . import numkit
from .exceptions import DataError, SingularBlock
from .family import ComponentParams, MixtureModel, ScaleLaw, sn_logpdf

LOG2 = np.log(2.0)
_COND_MAX = 1e12

# order of the per-row posterior scale statistics
ESTEP_MAX_NODES = 4096

_STATS = ("k_inv", "xi_neg_half", "xi_pos_half", "log_u", "u", "k_inv2")


# ---------------------------------------------------------------------------
# Patterns and data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MissingPattern:
    """Observed and missing coordinate indices of a row."""

    p: int
    observed: tuple
    missing: tuple

    def __post_init__(self):
        o, m = tuple(int(i) for i in self.observed), tuple(int(i) for i in self.missing)
        if sorted(o + m) != list(range(self.p)):
            raise ValueError("observed and missing indices must partition range(p)")
        object.__setattr__(self, "observed", tuple(sorted(o)))
        object.__setattr__(self, "missing", tuple(sorted(m)))

    @classmethod
    def from_mask(cls, observed_mask):
        mask = np.asarray(observed_mask, dtype=bool)
        return cls(mask.size, tuple(np.flatnonzero(mask)), tuple(np.flatnonzero(~mask)))

    @classmethod
    def from_row(cls, x):
        return cls.from_mask(np.isfinite(np.asarray(x, dtype=float)))

    @classmethod
    def complete(cls, p):
        return cls(p, tuple(range(p)), ())

    @property
    def o(self):
        return np.array(self.observed, dtype=int)

    @property
    def m(self):
        return np.array(self.missing, dtype=int)

    @property
    def is_complete(self):
        return not self.missing


class ObservationSet:
    """Rows with NaN marking missing cells, grouped by missingness pattern.

    Rows with no observed coordinate are rejected.
    """

    def __init__(self, X):
        X = np.array(X, dtype=float, copy=True)
        if X.ndim != 2:
            raise DataError("data must be a 2-D array")
        if np.any(np.isinf(X)):
            raise DataError("data contain infinite values")
        observed = ~np.isnan(X)
        empty = np.flatnonzero(~observed.any(axis=1))
        if empty.size:
            raise DataError(f"row {empty[0]} has no observed value")
        self.X = X
        self.X.setflags(write=False)
        self.n, self.p = X.shape
        self.observed = observed
        keys, inverse = np.unique(observed, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        # complete pattern first, then by decreasing frequency for readability
        self.patterns = []
        self.rows = []
        for k, key in enumerate(keys):
            self.patterns.append(MissingPattern.from_mask(key))
            self.rows.append(np.flatnonzero(inverse == k))
        order = sorted(range(len(keys)), key=lambda k: (not self.patterns[k].is_complete, -self.rows[k].size, self.patterns[k].missing))
        self.patterns = [self.patterns[k] for k in order]
        self.rows = [self.rows[k] for k in order]

    @cached_property
    def column_means(self):
        return np.nanmean(self.X, axis=0)

    @property
    def missing_fraction(self):
        return 1.0 - self.observed.mean(axis=0)

    def mean_imputed(self):
        return np.where(self.observed, self.X, self.column_means)


# ---------------------------------------------------------------------------
# Block algebra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Blocks:
    """Sub-vectors and sub-blocks of a component under a pattern."""

    pattern: MissingPattern
    mu_o: np.ndarray
    mu_m: np.ndarray
    sigma_oo: np.ndarray
    sigma_om: np.ndarray
    sigma_mo: np.ndarray
    sigma_mm: np.ndarray
    omega_oo: np.ndarray
    omega_om: np.ndarray
    omega_mo: np.ndarray
    omega_mm: np.ndarray
    Delta_o: np.ndarray
    Delta_m: np.ndarray
    lam_o: np.ndarray
    lam_m: np.ndarray

    def reassemble(self):
        """Scatter the blocks back into full ``(mu, Sigma, Omega, Delta, lam)``."""
        p = self.pattern.p
        o, m = self.pattern.o, self.pattern.m
        mu = np.empty(p)
        mu[o], mu[m] = self.mu_o, self.mu_m
        Delta = np.empty(p)
        Delta[o], Delta[m] = self.Delta_o, self.Delta_m
        lam = np.empty(p)
        lam[o], lam[m] = self.lam_o, self.lam_m
        S = np.empty((p, p))
        W = np.empty((p, p))
        for M, (oo, om, mo, mm) in ((S, (self.sigma_oo, self.sigma_om, self.sigma_mo, self.sigma_mm)),
                                    (W, (self.omega_oo, self.omega_om, self.omega_mo, self.omega_mm))):
            M[np.ix_(o, o)] = oo
            M[np.ix_(o, m)] = om
            M[np.ix_(m, o)] = mo
            M[np.ix_(m, m)] = mm
        return mu, S, W, Delta, lam


def partition(params: ComponentParams, pattern: MissingPattern) -> Blocks:
    """Split a component's parameters into observed/missing blocks."""
    if pattern.p != params.p:
        raise ValueError("pattern dimension does not match the parameters")
    if not pattern.observed:
        raise ValueError("pattern has no observed coordinate")
    o, m = pattern.o, pattern.m
    S, W = params.sigma, params.Omega
    return Blocks(
        pattern,
        params.mu[o], params.mu[m],
        S[np.ix_(o, o)], S[np.ix_(o, m)], S[np.ix_(m, o)], S[np.ix_(m, m)],
        W[np.ix_(o, o)], W[np.ix_(o, m)], W[np.ix_(m, o)], W[np.ix_(m, m)],
        params.Delta[o], params.Delta[m], params.lam[o], params.lam[m],
    )


def _factor(M, what):
    try:
        c = np.linalg.cond(M)
    except np.linalg.LinAlgError:
        c = np.inf
    if not np.isfinite(c) or c > _COND_MAX:
        raise SingularBlock(f"{what} is numerically singular (condition {c:.3g})")
    return linalg.cho_factor(M, lower=True)


def _marginal_terms(params, pattern):
    """``(blocks, factor of Sigma_oo, w = Sigma_oo^{-1} Delta_o, q)``."""
    b = partition(params, pattern)
    cf = _factor(b.sigma_oo, "Sigma_oo")
    w = linalg.cho_solve(cf, b.Delta_o)
    q = float(b.Delta_o @ w)
    return b, cf, w, q


# ---------------------------------------------------------------------------
# Conditional distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConditionalSN:
    """Skew-normal law of ``X_m`` given ``x_o`` and ``K = kappa``.

    The law is ``SN(mu_c, kappa Sigma_c, lambda_c, kappa^{-1/2} lambda0_c)``.
    """

    kappa: float
    mu_c: np.ndarray
    sigma_c: np.ndarray
    lambda_c: np.ndarray
    lambda0_c: float
    delta0_c: float
    lambda_dot_o: np.ndarray
    A_o: float
    Delta_c: np.ndarray

    def params(self):
        return ComponentParams(self.mu_c, self.kappa * self.sigma_c, self.lambda_c,
                               self.lambda0_c / np.sqrt(self.kappa))

    def logpdf(self, x_m):
        return sn_logpdf(x_m, self.params())


def conditional_sn(params: ComponentParams, kappa, pattern: MissingPattern, x_o) -> ConditionalSN:
    """Conditional skew-normal of the missing block given ``x_o`` and ``K``.

    ``delta0_c`` is evaluated from its definition and from the observed-marginal
    skewness ``lambda_dot_o' Sigma_oo^{-1/2} (x_o - mu_o)``; the two must agree.
    """
    if pattern.is_complete:
        raise ValueError("conditional_sn needs at least one missing coordinate")
    x_o = np.asarray(x_o, dtype=float).ravel()
    b, cf, w, q = _marginal_terms(params, pattern)
    r = x_o - b.mu_o
    B = linalg.cho_solve(cf, b.sigma_om).T  # Sigma_mo Sigma_oo^{-1}
    mu_c = b.mu_m + B @ r
    sigma_c = b.sigma_mm - B @ b.sigma_om
    sigma_c = 0.5 * (sigma_c + sigma_c.T)
    Q = float(params.Delta @ np.linalg.solve(params.sigma, params.Delta))
    resid = b.Delta_m - B @ b.Delta_o
    lambda0_c = float(w @ r) / np.sqrt(1.0 - Q)
    lambda_c = numkit.psd_inv_sqrt(sigma_c) @ resid / np.sqrt(1.0 - Q)
    delta0_def = lambda0_c / np.sqrt(1.0 + lambda_c @ lambda_c)
    lambda_dot = numkit.psd_inv_sqrt(b.sigma_oo) @ b.Delta_o / np.sqrt(1.0 - q)
    A = float(lambda_dot @ numkit.psd_inv_sqrt(b.sigma_oo) @ r)
    if abs(delta0_def - A) > 1e-8 * max(1.0, abs(A)):
        raise ArithmeticError(f"threshold identity violated: {delta0_def} vs {A}")
    Delta_c = resid / np.sqrt(1.0 - q)
    return ConditionalSN(float(kappa), mu_c, sigma_c, lambda_c, lambda0_c, delta0_def,
                         lambda_dot, A, Delta_c)


@dataclass(frozen=True, eq=False)
class ConditionalNormal:
    """Normal law of ``X_m`` given ``x_o``, ``T`` and ``K``: ``N(m_c + T psi_c, K Omega_c)``."""

    m_c: np.ndarray
    psi_c: np.ndarray
    omega_c: np.ndarray


def conditional_normal(params: ComponentParams, pattern: MissingPattern, x_o) -> ConditionalNormal:
    """Regression of ``X_m`` on ``(x_o, T)`` from the ``Omega`` blocks."""
    x_o = np.asarray(x_o, dtype=float).ravel()
    b = partition(params, pattern)
    cf = _factor(b.omega_oo, "Omega_oo")
    B = linalg.cho_solve(cf, b.omega_om).T
    m_c = b.mu_m + B @ (x_o - b.mu_o)
    psi_c = b.Delta_m - B @ b.Delta_o
    omega_c = b.omega_mm - B @ b.omega_om
    return ConditionalNormal(m_c, psi_c, 0.5 * (omega_c + omega_c.T))


@dataclass(frozen=True)
class TPosterior:
    """``T | x_o, K=k`` is ``N(mu_T, k sigma2_T)`` truncated to ``(0, inf)``."""

    mu_T: float
    sigma2_T: float

    @property
    def sigma_T(self):
        return float(np.sqrt(self.sigma2_T))


def t_posterior(params: ComponentParams, pattern: MissingPattern, x_o) -> TPosterior:
    """Posterior of the latent truncation variable from the ``Omega_oo`` block.

    Also checks ``mu_T / sigma_T = A`` (the observed-marginal skewness term).
    """
    x_o = np.asarray(x_o, dtype=float).ravel()
    b = partition(params, pattern)
    cf = _factor(b.omega_oo, "Omega_oo")
    v = linalg.cho_solve(cf, b.Delta_o)
    sigma2 = 1.0 / (1.0 + float(b.Delta_o @ v))
    mu_T = sigma2 * float(v @ (x_o - b.mu_o))
    _, cf_s, w, q = _marginal_terms(params, pattern)
    A = float(w @ (x_o - b.mu_o)) / np.sqrt(1.0 - q)
    if abs(mu_T / np.sqrt(sigma2) - A) > 1e-8 * max(1.0, abs(A)):
        raise ArithmeticError(f"T-posterior identity violated: {mu_T / np.sqrt(sigma2)} vs {A}")
    return TPosterior(mu_T, sigma2)


# ---------------------------------------------------------------------------
# Batched posterior over the scaling variable
# ---------------------------------------------------------------------------

@dataclass
class PatternTerms:
    """Per-row observed-marginal quantities for one (pattern, component)."""

    log_dens: np.ndarray   # log f(x_o), shape (r,)
    A: np.ndarray          # (r,)
    q: float
    stats: np.ndarray      # (r, len(_STATS)) posterior means
    mu_c: np.ndarray | None = None      # (r, |m|)
    sigma_c: np.ndarray | None = None   # (|m|, |m|)
    Delta_c: np.ndarray | None = None   # (|m|,)


def _pattern_terms(params: ComponentParams, law: ScaleLaw, pattern: MissingPattern, Xo,
                   with_stats=True):
    b, cf, w, q = _marginal_terms(params, pattern)
    R = Xo - b.mu_o
    L = np.tril(cf[0])
    Z = linalg.solve_triangular(L, R.T, lower=True)
    d = np.einsum("ij,ij->j", Z, Z)
    A = (R @ w) / np.sqrt(1.0 - q)
    po = len(pattern.observed)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    const = LOG2 - 0.5 * (po * np.log(2.0 * np.pi) + log_det)

    def log_kernel(log_u):
        lk = law.log_kappa(log_u)[None, :]
        return (-0.5 * po * lk - 0.5 * d[:, None] * np.exp(-lk)
                + numkit._log_ndtr_fast(A[:, None] * np.exp(-0.5 * lk)))

    def stats(log_u):
        lk = law.log_kappa(log_u)[None, :]
        ki = np.exp(-lk)
        kih = np.exp(-0.5 * lk)
        W = numkit._mills_w_unchecked(A[:, None] * kih)
        r = A.size
        u = np.exp(log_u)
        S = np.empty((r, len(_STATS), log_u.size))
        S[:, 0] = ki
        S[:, 1] = kih * W
        S[:, 2] = W / kih
        S[:, 3] = log_u
        S[:, 4] = u
        S[:, 5] = np.exp(np.minimum(-2.0 * lk, 700.0))
        return S

    # the window is shared by every row of the pattern, so allow more nodes
    # than the single-integral cap
    log_z, means = numkit.scale_posterior(law, log_kernel, stats if with_stats else None,
                                          max_nodes=ESTEP_MAX_NODES)
    out = PatternTerms(const + log_z, A, q, means)
    if pattern.missing and with_stats:
        B = linalg.cho_solve(cf, b.sigma_om).T
        out.mu_c = b.mu_m + R @ B.T
        sc = b.sigma_mm - B @ b.sigma_om
        out.sigma_c = 0.5 * (sc + sc.T)
        out.Delta_c = (b.Delta_m - B @ b.Delta_o) / np.sqrt(1.0 - q)
    return out


@dataclass(frozen=True)
class ScaleMoments:
    """Posterior expectations over the scaling variable for one row."""

    k_inv_hat: float
    xi_neg_half_hat: float
    k_inv_t_hat: float
    k_inv_t2_hat: float
    log_k_inv_hat: float
    xi_pos_half_hat: float
    e_log_u: float
    e_u: float


def _log_k_inv(stats, kind, log_moment):
    """``E[log K^{-1}]`` exactly or by the second-order Taylor expansion."""
    if kind == "normal":
        return np.zeros(stats.shape[0])
    if log_moment == "exact":
        sign = 1.0 if kind in ("t", "slash") else -1.0
        return sign * stats[:, 3]
    if log_moment == "taylor":
        k = stats[:, 0]
        ratio = np.maximum(stats[:, 5] / (k * k), 1.0 + 1e-12)
        return np.log(k) - 0.5 * (ratio - 1.0)
    raise ValueError("log_moment must be 'exact' or 'taylor'")


def _theta_moments(stats, kind, log_moment):
    """``(E[log U], E[U])`` feeding the hyperparameter objective."""
    lk = _log_k_inv(stats, kind, log_moment)
    if kind in ("t", "slash"):
        return lk, stats[:, 0]
    if kind == "vgamma":
        return -lk, stats[:, 4]
    return np.zeros_like(lk), np.ones_like(lk)


def posterior_scale_moments(params: ComponentParams, law: ScaleLaw, pattern: MissingPattern,
                            x_o, log_moment="taylor") -> ScaleMoments:
    """Posterior scale moments of one row under one component.

    Expectations are over ``U`` with weight proportional to the skew-normal
    marginal of ``x_o`` given ``U`` times the prior of ``U``.
    """
    x_o = np.asarray(x_o, dtype=float).reshape(1, -1)
    t = _pattern_terms(params, law, pattern, x_o)
    s = t.stats[0]
    sig_T = np.sqrt(1.0 - t.q)
    mu_T = sig_T * t.A[0]
    k, xi = s[0], s[1]
    e_log_u, e_u = _theta_moments(t.stats, law.kind, log_moment)
    return ScaleMoments(
        k_inv_hat=float(k),
        xi_neg_half_hat=float(xi),
        k_inv_t_hat=float(k * mu_T + sig_T * xi),
        k_inv_t2_hat=float(k * mu_T ** 2 + mu_T * sig_T * xi + sig_T ** 2),
        log_k_inv_hat=float(_log_k_inv(t.stats, law.kind, log_moment)[0]),
        xi_pos_half_hat=float(s[2]),
        e_log_u=float(e_log_u[0]),
        e_u=float(e_u[0]),
    )


# ---------------------------------------------------------------------------
# E-step
# ---------------------------------------------------------------------------

@dataclass
class EStepCache:
    """Per-row, per-component hat quantities (already multiplied by ``z``).

    Arrays have leading shape ``(n, G)``.  The centred moments ``zkr``,
    ``zktr`` and ``zkrr`` stay accurate when a posterior scale moment is
    huge (a row sitting on a heavy-peaked component's location), where the
    raw ``zkxx - zkx mu' - ...`` expansion would cancel catastrophically.
    ``k_inv``, ``xi_neg_half``,
    ``xi_pos_half``, ``e_log_u``, ``e_u`` and ``log_k_inv`` are posterior
    scale moments *not* multiplied by ``z``.
    """

    z: np.ndarray
    zk: np.ndarray
    zkt: np.ndarray
    zkt2: np.ndarray
    zkx: np.ndarray
    zktx: np.ndarray
    zkxx: np.ndarray
    centre: np.ndarray          # (G, p) component locations the moments below are taken about
    zkr: np.ndarray             # z E[k^-1 (x - centre)]
    zktr: np.ndarray            # z E[k^-1 t (x - centre)]
    zkrr: np.ndarray            # z E[k^-1 (x - centre)(x - centre)']
    k_inv: np.ndarray
    xi_neg_half: np.ndarray
    xi_pos_half: np.ndarray
    log_k_inv: np.ndarray
    e_log_u: np.ndarray
    e_u: np.ndarray
    log_dens: np.ndarray       # log pi_g + log f_g(x_o), (n, G)
    loglik_rows: np.ndarray    # (n,)
    imputed: np.ndarray        # (n, p) conditional-mean completion
    underflow_rows: np.ndarray  # indices that fell back to uniform z

    @property
    def loglik(self):
        return float(np.sum(self.loglik_rows))


def _posterior_weights(log_dens):
    """Normalised responsibilities with uniform fallback for underflowing rows."""
    ll = special.logsumexp(log_dens, axis=1)
    bad = ~np.isfinite(ll)
    with np.errstate(invalid="ignore"):
        z = np.exp(log_dens - ll[:, None])
    if np.any(bad):
        z[bad] = 1.0 / log_dens.shape[1]
    return z, ll, np.flatnonzero(bad)


def observed_log_densities(model: MixtureModel, data: ObservationSet):
    """``log pi_g + log f_g(x_o)`` for every row and component, shape (n, G)."""
    out = np.empty((data.n, model.G))
    for pattern, rows in zip(data.patterns, data.rows):
        Xo = data.X[np.ix_(rows, pattern.o)]
        for g, (c, law) in enumerate(zip(model.components, model.laws)):
            t = _pattern_terms(c, law, pattern, Xo, with_stats=False)
            out[rows, g] = np.log(model.weights[g]) + t.log_dens
    return out


def estep(model: MixtureModel, data: ObservationSet, log_moment="exact") -> EStepCache:
    """Batched E-step over all rows, one quadrature per (pattern, component)."""
    n, p, G = data.n, data.p, model.G
    shape = (n, G)
    k = np.empty(shape)
    kt = np.empty(shape)
    kt2 = np.empty(shape)
    xi = np.empty(shape)
    xip = np.empty(shape)
    elog = np.empty(shape)
    eu = np.empty(shape)
    lki = np.empty(shape)
    kx = np.empty(shape + (p,))
    ktx = np.empty(shape + (p,))
    kxx = np.empty(shape + (p, p))
    kr = np.empty(shape + (p,))
    ktr = np.empty(shape + (p,))
    krr = np.empty(shape + (p, p))
    centre = np.array([c.mu for c in model.components], dtype=float).reshape(G, p)
    cmean = np.empty(shape + (p,))
    log_dens = np.empty(shape)

    for pattern, rows in zip(data.patterns, data.rows):
        o, m = pattern.o, pattern.m
        Xo = data.X[np.ix_(rows, o)]
        for g, (c, law) in enumerate(zip(model.components, model.laws)):
            t = _pattern_terms(c, law, pattern, Xo)
            log_dens[rows, g] = np.log(model.weights[g]) + t.log_dens
            s = t.stats
            sig_T = np.sqrt(1.0 - t.q)
            mu_T = sig_T * t.A
            kg, xg = s[:, 0], s[:, 1]
            ktg = kg * mu_T + sig_T * xg
            kt2g = kg * mu_T ** 2 + mu_T * sig_T * xg + sig_T ** 2
            k[rows, g], xi[rows, g], xip[rows, g] = kg, xg, s[:, 2]
            kt[rows, g], kt2[rows, g] = ktg, kt2g
            lki[rows, g] = _log_k_inv(s, law.kind, log_moment)
            elog[rows, g], eu[rows, g] = _theta_moments(s, law.kind, log_moment)

            # moments of r = x - mu, built without forming x x'
            R = Xo - c.mu[o]
            kr_r = np.empty((rows.size, p))
            ktr_r = np.empty((rows.size, p))
            krr_r = np.empty((rows.size, p, p))
            cm_r = np.empty((rows.size, p))
            kr_r[:, o] = kg[:, None] * R
            ktr_r[:, o] = ktg[:, None] * R
            cm_r[:, o] = Xo
            krr_r[np.ix_(np.arange(rows.size), o, o)] = kg[:, None, None] * R[:, :, None] * R[:, None, :]
            if m.size:
                Rc, Dc = t.mu_c - c.mu[m], t.Delta_c
                psi = Dc / sig_T
                kr_m = kg[:, None] * Rc + xg[:, None] * Dc
                kr_r[:, m] = kr_m
                ktr_r[:, m] = ktg[:, None] * (Rc - mu_T[:, None] * psi) + kt2g[:, None] * psi
                cm_r[:, m] = t.mu_c + s[:, 2][:, None] * Dc
                alpha = (Rc[:, :, None] * Dc[None, None, :] + Dc[None, :, None] * Rc[:, None, :]
                         - t.A[:, None, None] * np.outer(Dc, Dc)[None])
                mm = (t.sigma_c[None] + kg[:, None, None] * Rc[:, :, None] * Rc[:, None, :]
                      + xg[:, None, None] * alpha)
                ar = np.arange(rows.size)
                krr_r[np.ix_(ar, m, m)] = mm
                mo = kr_m[:, :, None] * R[:, None, :]
                krr_r[np.ix_(ar, m, o)] = mo
                krr_r[np.ix_(ar, o, m)] = np.swapaxes(mo, 1, 2)
            kr[rows, g] = kr_r
            ktr[rows, g] = ktr_r
            krr[rows, g] = krr_r
            mu = c.mu
            kx[rows, g] = kr_r + kg[:, None] * mu
            ktx[rows, g] = ktr_r + ktg[:, None] * mu
            kxx[rows, g] = (krr_r + kr_r[:, :, None] * mu[None, None, :] + mu[None, :, None] * kr_r[:, None, :]
                            + kg[:, None, None] * np.outer(mu, mu)[None])
            kx[rows[:, None], g, o[None, :]] = kg[:, None] * Xo
            ktx[rows[:, None], g, o[None, :]] = ktg[:, None] * Xo
            cmean[rows, g] = cm_r

    z, ll, bad = _posterior_weights(log_dens)
    return EStepCache(
        z=z, zk=z * k, zkt=z * kt, zkt2=z * kt2,
        zkx=z[..., None] * kx, zktx=z[..., None] * ktx, zkxx=z[..., None, None] * kxx,
        centre=centre, zkr=z[..., None] * kr, zktr=z[..., None] * ktr, zkrr=z[..., None, None] * krr,
        k_inv=k, xi_neg_half=xi, xi_pos_half=xip, log_k_inv=lki, e_log_u=elog, e_u=eu,
        log_dens=log_dens, loglik_rows=ll,
        imputed=np.einsum("ng,ngp->np", z, cmean),
        underflow_rows=bad,
    )


def _single(model, pattern, x):
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.p:
        raise ValueError("row dimension does not match the model")
    xx = x.copy()
    xx[pattern.m] = np.nan
    return ObservationSet(xx[None, :])


def responsibilities(model: MixtureModel, pattern: MissingPattern, x_o):
    """Posterior component probabilities of one row from its observed part."""
    x = np.full(model.p, np.nan)
    x[pattern.o] = np.asarray(x_o, dtype=float).ravel()
    z, _, _ = _posterior_weights(observed_log_densities(model, _single(model, pattern, x)))
    return z[0]


def estep_row(model: MixtureModel, pattern: MissingPattern, x, log_moment="exact") -> EStepCache:
    """E-step quantities of a single row (missing cells may hold anything)."""
    return estep(model, _single(model, pattern, x), log_moment)


def impute_row(model: MixtureModel, pattern: MissingPattern, x, resp=None):
    """Fill missing cells with the posterior conditional mean.

    ``sum_g z_g (mu_c + E[K^{1/2} W(K^{-1/2} A)] Delta_c)``; observed cells are
    returned untouched.  ``resp`` overrides the computed responsibilities.
    """
    x = np.array(x, dtype=float).ravel()
    if pattern.is_complete:
        return x
    cache = estep_row(model, pattern, x)
    out = x.copy()
    if resp is None:
        out[pattern.m] = cache.imputed[0, pattern.m]
        return out
    resp = np.asarray(resp, dtype=float)
    comp = np.empty((model.G, pattern.m.size))
    Xo = x[pattern.o][None, :]
    for g, (c, law) in enumerate(zip(model.components, model.laws)):
        t = _pattern_terms(c, law, pattern, Xo)
        comp[g] = t.mu_c[0] + t.stats[0, 2] * t.Delta_c
    out[pattern.m] = resp @ comp
    return out
