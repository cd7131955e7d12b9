"""Skew-normal scale mixtures: parameters, densities, moments and samplers.

A component is ``X = mu + sqrt(K) * (Delta * |T0| + Sigma^{1/2} (I - dd')^{1/2} T1)``
with ``T0 ~ N(0, 1)``, ``T1 ~ N_p(0, I)`` and ``K`` a positive function of a
scaling variable ``U``.  The four supported laws are

==========  ====================  =========
kind        U                      K
==========  ====================  =========
normal      1                      1
t           Gamma(nu/2, nu/2)      1/U
slash       Beta(alpha, 1)         1/U
vgamma      Gamma(eta, eta)        U
==========  ====================  =========

(rates, not scales).  The variance-gamma law ties ``gamma^2 = 2 eta`` so that
``E[U] = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special

from . import numkit
from .exceptions import MomentUndefined, NotPSD

LOG2 = np.log(2.0)

FAMILIES = ("normal", "t", "slash", "vgamma")
FAMILY_ALIASES = {
    "skew-normal": "normal",
    "skew-t": "t",
    "skew-slash": "slash",
    "skew-vgamma": "vgamma",
    "normal": "normal",
    "t": "t",
    "slash": "slash",
    "vgamma": "vgamma",
}
FAMILY_LABELS = {"normal": "skew-normal", "t": "skew-t", "slash": "skew-slash",
                 "vgamma": "skew-vgamma"}

# hyperparameter brackets; the vgamma lower bound depends on p
THETA_UPPER = {"t": 200.0, "slash": 100.0, "vgamma": 100.0}


def theta_bounds(kind, p):
    """Admissible ``(lower, upper)`` bracket for the law's hyperparameter."""
    if kind == "t":
        return 2.1, THETA_UPPER["t"]
    if kind == "slash":
        return 1.0, THETA_UPPER["slash"]
    if kind == "vgamma":
        return p / 2.0 + 0.01, THETA_UPPER["vgamma"]
    return None


# ---------------------------------------------------------------------------
# Scaling laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleLaw:
    """Distribution of the scaling variable and its link to ``K``.

    Use the named constructors (:meth:`skew_normal`, :meth:`skew_t`, ...).
    With ``strict=True`` (default) the hyperparameter must lie in the fitting
    bracket (nu > 2.1, alpha > 1, eta > 0.01, all below their upper bounds);
    the p-dependent eta bound is applied by the fitting code.
    """

    kind: str
    theta: float | None = None

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown scale law {self.kind!r}")
        if self.kind == "normal":
            if self.theta is not None:
                raise ValueError("the degenerate law has no hyperparameter")
            return
        if self.theta is None or not np.isfinite(self.theta) or self.theta <= 0:
            raise ValueError(f"{self.kind} law needs a positive hyperparameter")
        object.__setattr__(self, "theta", float(self.theta))

    # -- constructors -------------------------------------------------------
    @classmethod
    def skew_normal(cls):
        return cls("normal")

    @classmethod
    def skew_t(cls, nu, strict=True):
        if strict and not (2.1 < nu <= THETA_UPPER["t"]):
            raise ValueError(f"nu={nu} outside (2.1, 200]")
        return cls("t", nu)

    @classmethod
    def skew_slash(cls, alpha, strict=True):
        if strict and not (1.0 < alpha <= THETA_UPPER["slash"]):
            raise ValueError(f"alpha={alpha} outside (1, 100]")
        return cls("slash", alpha)

    @classmethod
    def skew_vgamma(cls, eta, strict=True):
        if strict and not (0.01 < eta <= THETA_UPPER["vgamma"]):
            raise ValueError(f"eta={eta} outside (0.01, 100]")
        return cls("vgamma", eta)

    @classmethod
    def skew_laplace(cls):
        """Variance-gamma law with ``eta = 1`` (so ``gamma^2 = 2``)."""
        return cls("vgamma", 1.0)

    @classmethod
    def from_name(cls, name, theta=None):
        kind = FAMILY_ALIASES[name]
        if kind == "normal":
            return cls.skew_normal()
        return cls(kind, theta)

    def with_theta(self, theta):
        return ScaleLaw(self.kind, theta)

    # -- properties ---------------------------------------------------------
    @property
    def label(self):
        return FAMILY_LABELS[self.kind]

    @property
    def dim_theta(self):
        return 0 if self.kind == "normal" else 1

    @property
    def gamma2(self):
        """Variance-gamma rate-squared ``gamma^2 = 2 eta``."""
        if self.kind != "vgamma":
            raise AttributeError("gamma2 is only defined for the vgamma law")
        return 2.0 * self.theta

    @property
    def support(self):
        return {"normal": "point", "t": "half_line", "slash": "unit",
                "vgamma": "half_line"}[self.kind]

    def log_prior(self, log_u):
        """Log density of U at ``exp(log_u)``."""
        log_u = np.asarray(log_u, dtype=float)
        th = self.theta
        if self.kind == "t":
            a = th / 2.0
            return a * np.log(a) - special.gammaln(a) + (a - 1.0) * log_u - a * np.exp(log_u)
        if self.kind == "slash":
            return np.log(th) + (th - 1.0) * log_u
        if self.kind == "vgamma":
            return th * np.log(th) - special.gammaln(th) + (th - 1.0) * log_u - th * np.exp(log_u)
        return np.zeros_like(log_u)

    def log_kappa(self, log_u):
        """``log K`` as a function of ``log U``."""
        if self.kind in ("t", "slash"):
            return -np.asarray(log_u, dtype=float)
        if self.kind == "vgamma":
            return np.asarray(log_u, dtype=float)
        return np.zeros_like(np.asarray(log_u, dtype=float))

    def sample_u(self, rng, n):
        th = self.theta
        if self.kind == "t":
            return rng.gamma(th / 2.0, 2.0 / th, size=n)
        if self.kind == "slash":
            return rng.beta(th, 1.0, size=n)
        if self.kind == "vgamma":
            return rng.gamma(th, 1.0 / th, size=n)
        return np.ones(n)

    def sample_kappa(self, rng, n):
        return np.exp(self.log_kappa(np.log(self.sample_u(rng, n))))

    def omega(self, r):
        """``E[K^{r/2}]``; raises :class:`MomentUndefined` when infinite."""
        th = self.theta
        h = r / 2.0
        if self.kind == "normal":
            return 1.0
        if self.kind == "t":
            if th <= r:
                raise MomentUndefined(f"order-{r} moment needs nu > {r} (nu={th})")
            a = th / 2.0
            return float(np.exp(h * np.log(a) + special.gammaln(a - h) - special.gammaln(a)))
        if self.kind == "slash":
            if th <= h:
                raise MomentUndefined(f"order-{r} moment needs alpha > {h} (alpha={th})")
            return th / (th - h)
        return float(np.exp(special.gammaln(th + h) - special.gammaln(th) - h * np.log(th)))

    def expected_log_prior(self, theta, e_log_u, e_u):
        """``E[log h(U; theta)]`` given ``E[log U]`` and ``E[U]``."""
        if self.kind == "t":
            a = theta / 2.0
            return a * np.log(a) - special.gammaln(a) + (a - 1.0) * e_log_u - a * e_u
        if self.kind == "slash":
            return np.log(theta) + (theta - 1.0) * e_log_u
        if self.kind == "vgamma":
            return theta * np.log(theta) - special.gammaln(theta) + (theta - 1.0) * e_log_u - theta * e_u
        return 0.0


# ---------------------------------------------------------------------------
# Component parameters
# ---------------------------------------------------------------------------

def _as_vector(x, name):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    return x


@dataclass(frozen=True, eq=False)
class ComponentParams:
    """Location ``mu``, scale ``sigma``, skewness ``lam`` and threshold ``lambda0``.

    Derived quantities (``delta``, ``Delta``, ``Omega``, roots and inverses)
    are computed lazily and cached.  ``sigma`` must be positive definite and
    ``Omega = sigma - Delta Delta'`` is then automatically positive definite.
    """

    mu: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray
    lambda0: float = 0.0

    def __post_init__(self):
        mu = _as_vector(self.mu, "mu")
        p = mu.size
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        lam = _as_vector(self.lam, "lam")
        if sigma.shape != (p, p) or lam.size != p:
            raise ValueError(f"dimension mismatch: mu {mu.shape}, sigma {sigma.shape}, lam {lam.shape}")
        if not (np.all(np.isfinite(sigma)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(lam))):
            raise ValueError("parameters must be finite")
        scale = max(np.abs(sigma).max(), 1e-300)
        if np.abs(sigma - sigma.T).max() > 1e-12 * scale:
            raise ValueError("sigma is not symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        if not numkit.is_positive_definite(sigma):
            raise NotPSD("sigma must be positive definite")
        for name, val in (("mu", mu), ("sigma", sigma), ("lam", lam)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "lambda0", float(self.lambda0))

    @classmethod
    def from_delta(cls, mu, sigma, Delta, lambda0=0.0):
        """Build from the scale-coupled skewness ``Delta = Sigma^{1/2} delta``."""
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        Delta = _as_vector(Delta, "Delta")
        inv_half = numkit.psd_inv_sqrt(sigma)
        q = float(Delta @ np.linalg.solve(sigma, Delta))
        if q >= 1.0:
            raise ValueError(f"Delta' Sigma^-1 Delta = {q:.6g} must be < 1")
        lam = inv_half @ Delta / np.sqrt(1.0 - q)
        return cls(mu, sigma, lam, lambda0)

    @property
    def p(self):
        return self.mu.size

    @cached_property
    def sigma_half(self):
        return numkit.psd_sqrt(self.sigma)

    @cached_property
    def sigma_inv_half(self):
        return numkit.psd_inv_sqrt(self.sigma)

    @cached_property
    def sigma_chol(self):
        return np.linalg.cholesky(self.sigma)

    @cached_property
    def log_det_sigma(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.sigma_chol))))

    @cached_property
    def delta(self):
        """``delta = lam / sqrt(1 + lam'lam)``."""
        return self.lam / np.sqrt(1.0 + self.lam @ self.lam)

    @cached_property
    def Delta(self):
        """``Delta = Sigma^{1/2} delta``."""
        return self.sigma_half @ self.delta

    @cached_property
    def Omega(self):
        """``Omega = Sigma - Delta Delta'``."""
        return self.sigma - np.outer(self.Delta, self.Delta)

    @cached_property
    def delta0(self):
        return self.lambda0 / np.sqrt(1.0 + self.lam @ self.lam)

    def marginal(self, idx):
        """Parameters of the marginal distribution of ``X[idx]``.

        The skew-normal family is closed under marginalisation: keep the
        ``idx`` blocks of ``mu``, ``Sigma`` and ``Delta``.
        """
        idx = np.asarray(idx, dtype=int)
        if idx.size == self.p and np.array_equal(idx, np.arange(self.p)):
            return self
        if self.lambda0 != 0.0:
            raise NotImplementedError("marginals are implemented for lambda0 = 0")
        return ComponentParams.from_delta(
            self.mu[idx], self.sigma[np.ix_(idx, idx)], self.Delta[idx]
        )

    def to_dict(self):
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist(),
                "lambda": self.lam.tolist(), "lambda0": self.lambda0}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mu"], d["sigma"], d["lambda"], d.get("lambda0", 0.0))


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Finite mixture of skew-normal scale mixtures.

    ``laws[g]`` carries component g's hyperparameter; all laws share a kind.
    """

    components: tuple
    laws: tuple
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        comps = tuple(self.components)
        laws = tuple(self.laws)
        if len(comps) < 1:
            raise ValueError("a mixture needs at least one component")
        if len(laws) == 1 and len(comps) > 1:
            laws = laws * len(comps)
        if len(laws) != len(comps):
            raise ValueError("one scale law per component required")
        if len({c.p for c in comps}) != 1:
            raise ValueError("components must share the dimension p")
        if len({law.kind for law in laws}) != 1:
            raise ValueError("components must share the scale-law kind")
        w = np.full(len(comps), 1.0 / len(comps)) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.size != len(comps) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "laws", laws)
        object.__setattr__(self, "weights", w)

    @property
    def G(self):
        return len(self.components)

    @property
    def p(self):
        return self.components[0].p

    @property
    def kind(self):
        return self.laws[0].kind

    def permuted(self, order):
        order = list(order)
        return MixtureModel(tuple(self.components[g] for g in order),
                            tuple(self.laws[g] for g in order),
                            self.weights[order])


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def _rows(x, p):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[-1] != p:
        raise ValueError(f"expected dimension {p}, got {X.shape[-1]}")
    return X, single


def _whiten(X, params):
    """Mahalanobis distance ``d`` and skewness argument ``A = lam' Sigma^{-1/2}(x-mu)``."""
    R = X - params.mu
    Z = np.linalg.solve(params.sigma_chol, R.T).T
    d = np.einsum("ij,ij->i", Z, Z)
    A = R @ (params.sigma_inv_half @ params.lam)
    return d, A


def _log_normal_part(d, params):
    return -0.5 * (params.p * np.log(2.0 * np.pi) + params.log_det_sigma + d)


def sn_logpdf(x, params: ComponentParams):
    """Log density of the skew-normal with threshold ``lambda0``.

    ``log f = -log Phi(delta0) + log phi_p(x; mu, Sigma) + log Phi(lambda0 + A)``.
    Accepts one point ``(p,)`` or rows ``(n, p)``.
    """
    X, single = _rows(x, params.p)
    d, A = _whiten(X, params)
    out = (-special.log_ndtr(params.delta0) + _log_normal_part(d, params)
           + special.log_ndtr(params.lambda0 + A))
    return float(out[0]) if single else out


def _log_t_part(d, params, nu):
    p = params.p
    return (special.gammaln((nu + p) / 2.0) - special.gammaln(nu / 2.0)
            - 0.5 * p * np.log(nu * np.pi) - 0.5 * params.log_det_sigma
            - 0.5 * (nu + p) * np.log1p(d / nu))


# rows per quadrature batch; bounds the (rows x nodes) work arrays
_CHUNK = 2048


def _chunked(fn, *arrays):
    """Apply a row-wise ``fn`` to aligned 1-D arrays in fixed-size batches."""
    n = arrays[0].shape[0]
    if n <= _CHUNK:
        return fn(*arrays)
    return np.concatenate([fn(*(a[i:i + _CHUNK] for a in arrays)) for i in range(0, n, _CHUNK)])


def _smsn_logpdf_quadrature(d, A, params, law):
    """Generic path: integrate ``2 phi_p(x; mu, K Sigma) Phi(K^{-1/2} A)`` over U."""
    if d.shape[0] > _CHUNK:
        return _chunked(lambda dd, aa: _smsn_logpdf_quadrature(dd, aa, params, law), d, A)
    p = params.p
    const = LOG2 - 0.5 * (p * np.log(2.0 * np.pi) + params.log_det_sigma)

    def log_kernel(log_u):
        lk = law.log_kappa(log_u)[None, :]
        return (-0.5 * p * lk - 0.5 * d[:, None] * np.exp(-lk)
                + numkit._log_ndtr_fast(A[:, None] * np.exp(-0.5 * lk)))

    log_z, _ = numkit.scale_posterior(law, log_kernel)
    return const + log_z


def gh_logpdf(y, lam, delta, gamma):
    """Log density of the symmetric generalised hyperbolic law.

    Normal variance mixture ``Y = sqrt(W) N`` with ``W`` generalised inverse
    Gaussian ``GIG(lam, delta^2, gamma^2)``; support is the whole real line.
    ``delta = 0`` is the variance-gamma limit (requires ``lam > 0``).
    """
    y, delta = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(delta, dtype=float))
    r = np.hypot(delta, y)
    # log(delta^lam K_lam(delta gamma)), with its delta -> 0 limit
    with np.errstate(divide="ignore"):
        pos = delta > 0
        log_norm = np.where(
            pos,
            lam * np.log(np.where(pos, delta, 1.0)) + numkit.log_bessel_k(lam, np.where(pos, delta * gamma, 1.0)),
            special.gammaln(abs(lam)) + (lam - 1.0) * LOG2 - lam * np.log(gamma) if lam > 0 else np.inf,
        )
        rr = np.where(r > 0, r, 1.0)
        body = (lam - 0.5) * np.log(rr) + numkit.log_bessel_k(lam - 0.5, gamma * rr)
    out = 0.5 * np.log(gamma / (2.0 * np.pi)) - log_norm + body
    return np.where(r > 0, out, np.inf)


def gh_cdf(a, lam, delta, gamma):
    """``P(Y <= a)`` for the symmetric GH law, by integrating its density.

    The tail mass ``int_{|a|}^inf f(y) dy`` is integrated with the
    half-line DE rule; symmetry gives the cdf.  Vectorised over ``a`` and
    ``delta``.  Returns ``(cdf, log_cdf)``.
    """
    a, delta = np.broadcast_arrays(np.atleast_1d(np.asarray(a, dtype=float)),
                                   np.atleast_1d(np.asarray(delta, dtype=float)))
    if a.shape[0] > _CHUNK:
        log_cdf = _chunked(lambda aa, dd: gh_cdf(aa, lam, dd, gamma)[1], a, delta)
        return np.exp(log_cdf), log_cdf
    absa = np.abs(a)

    class _Flat:
        support = "half_line"

        @staticmethod
        def log_prior(log_u):
            return np.zeros_like(log_u)

    def log_kernel(log_v):
        y = absa[:, None] + np.exp(log_v)[None, :] / gamma
        return gh_logpdf(y, lam, delta[:, None], gamma) - np.log(gamma)

    log_tail, _ = numkit.scale_posterior(_Flat, log_kernel)
    log_tail = np.minimum(log_tail, np.log(0.5))
    tail = np.exp(log_tail)
    log_cdf = np.where(a >= 0, np.log1p(-tail), log_tail)
    return np.exp(log_cdf), log_cdf


def _smsn_logpdf_vgamma(d, A, params, law):
    p = params.p
    eta = law.theta
    gamma = np.sqrt(law.gamma2)
    lam = eta - p / 2.0
    rd = np.sqrt(d)
    with np.errstate(divide="ignore"):
        pos = rd > 0
        bess = np.where(
            pos,
            lam * np.log(np.where(pos, rd, 1.0)) + numkit.log_bessel_k(lam, gamma * np.where(pos, rd, 1.0)),
            special.gammaln(abs(lam)) + (lam - 1.0) * LOG2 - lam * np.log(gamma) if lam > 0 else np.inf,
        )
    const = (2.0 * LOG2 + (eta + p / 2.0) * np.log(gamma) - 0.5 * p * np.log(2.0 * np.pi)
             - special.gammaln(eta) - eta * LOG2 - 0.5 * params.log_det_sigma)
    _, log_cdf = gh_cdf(A, lam, rd, gamma)
    return const + bess + log_cdf


def smsn_logpdf(x, params: ComponentParams, law: ScaleLaw, method="auto"):
    """Log density of a skew-normal scale mixture (threshold 0).

    Closed forms are used for the normal, skew-t and variance-gamma laws;
    the slash law (no closed form) and ``method='quadrature'`` integrate over
    the scaling variable.
    """
    if law.kind == "normal" and method == "auto":
        return sn_logpdf(x, params)
    if params.lambda0 != 0.0:
        raise ValueError("scale mixtures are defined here with lambda0 = 0")
    X, single = _rows(x, params.p)
    d, A = _whiten(X, params)
    if method == "quadrature" or law.kind == "slash":
        out = _smsn_logpdf_quadrature(d, A, params, law)
    elif law.kind == "t":
        nu, p = law.theta, params.p
        out = (LOG2 + _log_t_part(d, params, nu)
               + numkit.log_student_t_cdf(A * np.sqrt((nu + p) / (d + nu)), nu + p))
    elif law.kind == "vgamma":
        out = _smsn_logpdf_vgamma(d, A, params, law)
    else:
        out = _smsn_logpdf_quadrature(d, A, params, law)
    return float(out[0]) if single else out


def mixture_logpdf(x, model: MixtureModel):
    """``log sum_g pi_g f_g(x)`` via log-sum-exp."""
    X, single = _rows(x, model.p)
    L = np.column_stack([
        np.log(w) + smsn_logpdf(X, c, law)
        for w, c, law in zip(model.weights, model.components, model.laws)
    ])
    out = special.logsumexp(L, axis=1)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# Moments and sampling
# ---------------------------------------------------------------------------

def smsn_moments(params: ComponentParams, law: ScaleLaw):
    """Mean and covariance of a component.

    ``mean = mu + sqrt(2/pi) w1 Delta`` and
    ``cov = w2 Sigma - (2/pi) w1^2 Delta Delta'`` with ``w_r = E[K^{r/2}]``.
    """
    w1 = law.omega(1)
    w2 = law.omega(2)
    c = numkit.SQRT_2_OVER_PI * w1
    mean = params.mu + c * params.Delta
    cov = w2 * params.sigma - c * c * np.outer(params.Delta, params.Delta)
    return mean, cov


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_smsn(params: ComponentParams, law: ScaleLaw, n, seed=None, return_latent=False):
    """Draw ``n`` rows from the stochastic representation.

    With ``return_latent`` also returns ``T = sqrt(K)|T0|`` and ``K``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    p = params.p
    kappa = law.sample_kappa(rng, n)
    t0 = np.abs(rng.standard_normal(n))
    t1 = rng.standard_normal((n, p))
    root = params.sigma_half @ numkit.psd_sqrt(np.eye(p) - np.outer(params.delta, params.delta))
    sk = np.sqrt(kappa)
    T = sk * t0
    X = params.mu + T[:, None] * params.Delta + sk[:, None] * (t1 @ root.T)
    if return_latent:
        return X, T, kappa
    return X


def sample_mixture(model: MixtureModel, n, seed=None):
    """Draw ``n`` rows; returns ``(X, labels)``."""
    rng = _rng(seed)
    labels = rng.choice(model.G, size=n, p=model.weights)
    X = np.empty((n, model.p))
    for g in range(model.G):
        idx = np.flatnonzero(labels == g)
        if idx.size:
            X[idx] = sample_smsn(model.components[g], model.laws[g], idx.size, rng)
    return X, labels


def truncnorm_moments(mu, sigma2, variance="paper"):
    """Mean and variance of ``N(mu, sigma2)`` truncated to ``(0, inf)``.

    ``variance='paper'`` returns ``sigma2 (1 - W^2)`` with ``W = W(mu/sigma)``
    the inverse Mills ratio.  That expression drops the ``-(mu/sigma) W``
    term and is only exact at ``mu = 0``; it can even be negative for
    ``mu << 0``.  ``variance='classical'`` returns the exact
    ``sigma2 (1 - (mu/sigma) W - W^2)``.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    s = np.sqrt(sigma2)
    r = mu / s
    w = float(numkit.mills_w(r))
    mean = mu + s * w
    if variance == "paper":
        var = sigma2 * (1.0 - w * w)
    elif variance == "classical":
        var = sigma2 * (1.0 - r * w - w * w)
    else:
        raise ValueError("variance must be 'paper' or 'classical'")
    return mean, var
