"""ECM fitting of skew-normal scale-mixture mixtures with missing-at-random data."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import numkit
from .conditioning import EStepCache, ObservationSet, estep
from .exceptions import DegenerateInit, EmptyComponent, NotPSD
from .family import (FAMILY_ALIASES, ComponentParams, MixtureModel, ScaleLaw,
                     theta_bounds)

log = logging.getLogger(__name__)

INITIAL_THETA = {"t": 10.0, "slash": 5.0}
OMEGA_RULES = ("current", "printed", "lagged")


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit`.

    Parameters
    ----------
    n_components : int
        Number of mixture components G.
    family : str
        'skew-normal', 'skew-t', 'skew-slash' or 'skew-vgamma' (short names
        'normal', 't', 'slash', 'vgamma' also accepted).
    tol : float
        Aitken tolerance on the extrapolated log-likelihood.
    init : {'kmeans', 'random', 'given'}
        Starting partition; 'given' uses ``initial_model``.
    omega_rule : {'current', 'printed', 'lagged'}
        Which location iterate enters the Omega update.  'current' uses the
        freshly updated location throughout (a proper conditional maximum),
        'lagged' the previous one throughout, and 'printed' mixes both as the
        algorithm is usually written.
    log_moment : {'exact', 'taylor'}
        How ``E[log U | x_o]`` is obtained for the hyperparameter update.
    init_skewness : {'moments', 'zero'}
        Start skewness from per-cluster marginal skewness or at zero.
    fix_skewness : bool
        Keep Delta at zero (symmetric fit).
    """

    n_components: int = 2
    family: str = "skew-normal"
    tol: float = 1e-5
    max_iter: int = 500
    init: str = "kmeans"
    seed: int = 0
    initial_model: MixtureModel | None = None
    theta_bounds: tuple | None = None
    ridge: float = 1e-8
    omega_rule: str = "current"
    log_moment: str = "exact"
    init_skewness: str = "moments"
    fix_skewness: bool = False
    fix_theta: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 3:
            raise ValueError("max_iter must be >= 3")
        if self.family not in FAMILY_ALIASES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.init not in ("kmeans", "random", "given"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "given" and self.initial_model is None:
            raise ValueError("init='given' requires initial_model")
        if self.omega_rule not in OMEGA_RULES:
            raise ValueError(f"unknown omega_rule {self.omega_rule!r}")
        if self.log_moment not in ("exact", "taylor"):
            raise ValueError(f"unknown log_moment {self.log_moment!r}")
        if self.init_skewness not in ("moments", "zero"):
            raise ValueError(f"unknown init_skewness {self.init_skewness!r}")

    @property
    def kind(self):
        return FAMILY_ALIASES[self.family]

    def bounds(self, p):
        if self.theta_bounds is not None:
            return tuple(self.theta_bounds)
        return theta_bounds(self.kind, p)


@dataclass(frozen=True, eq=False)
class FitReport:
    """Result of :func:`fit`."""

    model: MixtureModel
    responsibilities: np.ndarray
    labels: np.ndarray
    imputed: np.ndarray
    loglik_trace: np.ndarray
    converged: bool
    n_iter: int
    bic: float
    n_params: int
    n_obs: int
    notes: tuple = ()

    @property
    def loglik(self):
        return float(self.loglik_trace[-1])


# ---------------------------------------------------------------------------
# Small pieces
# ---------------------------------------------------------------------------

def count_params(G, p, dim_theta):
    """Free parameters: weights, locations, skewness, scales, hyperparameters."""
    return (G - 1) + G * (2 * p + p * (p + 1) // 2 + dim_theta)


def bic(loglik, P, n):
    """``2 log L - P log n``; larger is better."""
    if n < 1 or P < 1:
        raise ValueError("need n >= 1 and P >= 1")
    return 2.0 * loglik - P * np.log(n)


def aitken_check(l0, l1, l2, eps):
    """Aitken-extrapolated convergence test on three consecutive log-likelihoods.

    Returns ``(converged, l_inf)`` with ``a = (l2 - l1)/(l1 - l0)`` and
    ``l_inf = l1 + (l2 - l1)/(1 - a)``; converged when
    ``0 <= l_inf - l1 < eps``.  A flat first difference or ``a >= 1`` falls
    back to ``|l2 - l1| < eps`` (``l_inf`` is then ``l2``).
    """
    d1 = l1 - l0
    d2 = l2 - l1
    if abs(d1) < 1e-14:
        return abs(d2) < eps, float(l2)
    a = d2 / d1
    if a >= 1.0:
        return abs(d2) < eps, float(l2)
    l_inf = l1 + d2 / (1.0 - a)
    gap = l_inf - l1
    return bool(0.0 <= gap < eps), float(l_inf)


def observed_loglik(data, model: MixtureModel):
    """Observed-data log-likelihood, marginalising missing cells exactly."""
    from .conditioning import observed_log_densities
    from scipy.special import logsumexp
    if not isinstance(data, ObservationSet):
        data = ObservationSet(data)
    return float(np.sum(logsumexp(observed_log_densities(model, data), axis=1)))


def _regularise(S, ridge):
    S = 0.5 * (S + S.T)
    c = np.linalg.cond(S)
    if not np.isfinite(c) or c > 1e12:
        bump = ridge * max(np.trace(S) / S.shape[0], 1e-300)
        log.info("scale matrix condition %.3g; adding ridge %.3g", c, bump)
        S = S + bump * np.eye(S.shape[0])
    return S


# ---------------------------------------------------------------------------
# Initialisation
# ---------------------------------------------------------------------------

def _sn_delta_from_skewness(g1):
    """Invert the univariate skew-normal skewness map; returns delta."""
    c = (4.0 - np.pi) / 2.0
    b = np.sqrt(2.0 / np.pi)
    g1 = np.clip(g1, -0.99, 0.99)
    r = np.cbrt(np.abs(g1) / c)
    delta = np.sign(g1) * r / (b * np.sqrt(1.0 + r * r))
    return np.clip(delta, -0.99, 0.99)


def _component_from_cluster(Y, init_skewness, ridge):
    p = Y.shape[1]
    mean = Y.mean(axis=0)
    S = np.atleast_2d(np.cov(Y, rowvar=False, bias=True))
    S = S + ridge * max(np.trace(S) / p, 1e-12) * np.eye(p)
    if init_skewness == "zero":
        return ComponentParams(mean, S, np.zeros(p))
    sd = np.sqrt(np.diag(S))
    g1 = np.mean(((Y - mean) / sd) ** 3, axis=0)
    d = _sn_delta_from_skewness(g1)
    b2 = 2.0 / np.pi
    sig_jj = np.diag(S) / (1.0 - b2 * d * d)
    Delta = d * np.sqrt(sig_jj)
    for _ in range(60):
        Sigma = S + b2 * np.outer(Delta, Delta)
        if Delta @ np.linalg.solve(Sigma, Delta) < 0.95:
            break
        Delta = 0.8 * Delta
    Sigma = S + b2 * np.outer(Delta, Delta)
    mu = mean - np.sqrt(b2) * Delta
    return ComponentParams.from_delta(mu, Sigma, Delta)


def _initial_law(kind, p, theta=None):
    if kind == "normal":
        return ScaleLaw.skew_normal()
    if theta is None:
        theta = p / 2.0 + 1.0 if kind == "vgamma" else INITIAL_THETA[kind]
    return ScaleLaw(kind, theta)


def _partition_model(Y, labels, G, config):
    p = Y.shape[1]
    comps, weights = [], []
    for g in range(G):
        idx = labels == g
        skew = "zero" if config.fix_skewness else config.init_skewness
        comps.append(_component_from_cluster(Y[idx], skew, config.ridge))
        weights.append(idx.mean())
    w = np.asarray(weights)
    law = _initial_law(config.kind, p)
    return MixtureModel(tuple(comps), (law,) * G, w / w.sum())


def _random_labels(n, G, p, rng):
    for _ in range(1000):
        labels = rng.integers(G, size=n)
        if np.all(np.bincount(labels, minlength=G) >= p + 1):
            return labels
    raise DegenerateInit("could not draw a random partition with p+1 rows per cluster")


def initialize(data, config: FitConfig) -> MixtureModel:
    """Starting model from a partition of the column-mean-imputed data.

    k-means (seeded, 10 restarts) gives the partition; a cluster with fewer
    than p+1 rows triggers a seeded random partition instead.  Locations and
    scales come from cluster moments; skewness from cluster marginal
    skewness (``init_skewness='moments'``) or zero.
    """
    if not isinstance(data, ObservationSet):
        data = ObservationSet(data)
    n, p, G = data.n, data.p, config.n_components
    if config.init == "given":
        return config.initial_model
    if n < G * (p + 1):
        raise DegenerateInit(f"need at least {G * (p + 1)} rows, got {n}")
    Y = data.mean_imputed()
    rng = np.random.default_rng(config.seed)
    if G == 1:
        labels = np.zeros(n, dtype=int)
    elif config.init == "kmeans":
        from sklearn.cluster import KMeans
        km = KMeans(n_clusters=G, n_init=10, random_state=config.seed).fit(Y)
        labels = km.labels_.astype(int)
        # relabel by first appearance so component order is data-determined
        _, first = np.unique(labels, return_index=True)
        order = np.argsort(first)
        labels = np.argsort(order)[labels]
        if np.any(np.bincount(labels, minlength=G) < p + 1):
            warnings.warn("k-means produced a cluster with fewer than p+1 rows; "
                          "falling back to a random partition")
            labels = _random_labels(n, G, p, rng)
    else:
        labels = _random_labels(n, G, p, rng)
    return _partition_model(Y, labels, G, config)


# ---------------------------------------------------------------------------
# CM step
# ---------------------------------------------------------------------------

@dataclass
class _Sums:
    z: np.ndarray
    zk: np.ndarray
    zkt: np.ndarray
    zkt2: np.ndarray
    zkx: np.ndarray
    zktx: np.ndarray
    zkxx: np.ndarray
    centre: np.ndarray
    zkr: np.ndarray
    zktr: np.ndarray
    zkrr: np.ndarray
    zlog: np.ndarray
    zu: np.ndarray


def _sums(cache: EStepCache) -> _Sums:
    return _Sums(
        z=cache.z.sum(axis=0), zk=cache.zk.sum(axis=0), zkt=cache.zkt.sum(axis=0),
        zkt2=cache.zkt2.sum(axis=0), zkx=cache.zkx.sum(axis=0),
        zktx=cache.zktx.sum(axis=0), zkxx=cache.zkxx.sum(axis=0), centre=cache.centre,
        zkr=cache.zkr.sum(axis=0), zktr=cache.zktr.sum(axis=0), zkrr=cache.zkrr.sum(axis=0),
        zlog=(cache.z * cache.e_log_u).sum(axis=0), zu=(cache.z * cache.e_u).sum(axis=0),
    )


def _omega_matrix(s: _Sums, g, a, b, Delta):
    """Scatter about ``mu + t Delta`` from moments centred at the E-step location.

    ``a`` and ``b`` are offsets ``centre - mu`` for the location entering the
    x-terms and the t-terms.  Working with offsets keeps a huge posterior
    scale moment from multiplying a rounded difference.
    """
    ktr = s.zktr[g] + s.zkt[g] * b
    M = (s.zkrr[g] + np.outer(a, s.zkr[g]) + np.outer(s.zkr[g], a) + s.zk[g] * np.outer(a, a)
         - np.outer(ktr, Delta) - np.outer(Delta, ktr)
         + s.zkt2[g] * np.outer(Delta, Delta))
    return 0.5 * (M + M.T) / s.z[g]


def _theta_objective(law, s, g):
    e_log, e_u = s.zlog[g] / s.z[g], s.zu[g] / s.z[g]
    return lambda th: float(law.expected_log_prior(th, e_log, e_u))


def _update_theta(law, s, g, bounds, fix):
    if law.kind == "normal" or fix:
        return law
    lo, hi = bounds
    f = _theta_objective(law, s, g)
    if law.kind == "slash":
        elog = s.zlog[g] / s.z[g]
        cand = -1.0 / elog if elog < 0 else hi
        cand = float(np.clip(cand, lo + 1e-9, hi))
    else:
        cand = numkit.golden_section_max(f, lo + 1e-9, hi, tol=1e-6)
    # a conditional maximum must not lower Q: keep the old value otherwise
    if f(cand) < f(law.theta):
        cand = law.theta
    return law.with_theta(cand)


def cm_step(data, model: MixtureModel, cache: EStepCache, config: FitConfig | None = None) -> MixtureModel:
    """One round of conditional maximisation given E-step quantities.

    Order: weights, location, Omega, skewness, hyperparameter, then
    ``Sigma = Omega + Delta Delta'`` and ``lambda`` from ``(Sigma, Delta)``.
    """
    config = config or FitConfig(n_components=model.G, family=model.kind)
    p = model.p
    n = cache.z.shape[0]
    s = _sums(cache)
    bounds = config.bounds(p)
    comps, laws = [], []
    for g, (c, law) in enumerate(zip(model.components, model.laws)):
        if s.z[g] < p + 1:
            raise EmptyComponent(g, float(s.z[g]), p + 1)
        D_old = np.zeros(p) if config.fix_skewness else c.Delta
        mu_old = c.mu
        # locations as offsets centre - mu
        a = -(s.zkr[g] - s.zkt[g] * D_old) / s.zk[g]
        a_old = s.centre[g] - mu_old
        mu = s.centre[g] - a
        if config.omega_rule == "current":
            Om = _omega_matrix(s, g, a, a, D_old)
        elif config.omega_rule == "lagged":
            Om = _omega_matrix(s, g, a_old, a_old, D_old)
        else:
            Om = _omega_matrix(s, g, a_old, a, D_old)
        if config.fix_skewness:
            Delta = np.zeros(p)
        else:
            Delta = (s.zktr[g] + s.zkt[g] * a) / s.zkt2[g]
        new_law = _update_theta(law, s, g, bounds, config.fix_theta)
        Sigma = Om + np.outer(Delta, Delta)
        try:
            if not numkit.is_positive_definite(Om):
                raise NotPSD("Omega update is not positive definite")
            Sigma = _regularise(Sigma, config.ridge)
            comp = ComponentParams.from_delta(mu, Sigma, Delta)
        except (NotPSD, ValueError):
            bump = config.ridge * max(abs(np.trace(Om)) / p, 1e-12)
            log.warning("component %d: Omega not positive definite; ridge %.3g", g, bump)
            Om = Om + bump * np.eye(p)
            comp = ComponentParams.from_delta(mu, Om + np.outer(Delta, Delta), Delta)
        comps.append(comp)
        laws.append(new_law)
    w = s.z / n
    return MixtureModel(tuple(comps), tuple(laws), w / w.sum())


def q_function(cache: EStepCache, model: MixtureModel, config: FitConfig | None = None):
    """Expected complete-data log-likelihood (up to parameter-free terms)."""
    s = _sums(cache)
    total = 0.0
    for g, (c, law) in enumerate(zip(model.components, model.laws)):
        Om = c.Omega
        a = s.centre[g] - c.mu
        M = _omega_matrix(s, g, a, a, c.Delta) * s.z[g]
        sign, logdet = np.linalg.slogdet(Om)
        total += s.z[g] * np.log(model.weights[g]) - 0.5 * s.z[g] * logdet
        total -= 0.5 * np.trace(np.linalg.solve(Om, M))
        if law.kind != "normal":
            total += s.z[g] * law.expected_log_prior(law.theta, s.zlog[g] / s.z[g], s.zu[g] / s.z[g])
    return float(total)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def _labels(z):
    return np.argmax(z, axis=1)  # first maximum wins ties


def fit(data, config: FitConfig, callback=None) -> FitReport:
    """Run ECM from the configured start until Aitken convergence or max_iter.

    ``callback(iteration, model, loglik)`` is called after every E-step.
    """
    if not isinstance(data, ObservationSet):
        data = ObservationSet(data)
    model = initialize(data, config)
    if model.kind != config.kind:
        model = MixtureModel(model.components, tuple(_initial_law(config.kind, data.p) for _ in model.laws), model.weights)
    if config.fix_skewness:
        model = MixtureModel(tuple(ComponentParams(c.mu, c.sigma, np.zeros(c.p)) for c in model.components),
                             model.laws, model.weights)
    cache = estep(model, data, config.log_moment)
    trace = [cache.loglik]
    notes = []
    if cache.underflow_rows.size:
        notes.append(f"{cache.underflow_rows.size} rows underflowed in every component")
    if callback:
        callback(0, model, trace[-1])
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        model = cm_step(data, model, cache, config)
        cache = estep(model, data, config.log_moment)
        trace.append(cache.loglik)
        if callback:
            callback(it, model, trace[-1])
        if len(trace) >= 3:
            ok, _ = aitken_check(trace[-3], trace[-2], trace[-1], config.tol)
            if ok:
                converged = True
                break
    trace = np.asarray(trace)
    drops = np.diff(trace)
    if drops.size and drops.min() < -1e-8 * max(1.0, abs(trace[-1])):
        notes.append(f"log-likelihood decreased by {-drops.min():.3g}")
    P = count_params(model.G, data.p, model.laws[0].dim_theta)
    return FitReport(
        model=model,
        responsibilities=cache.z,
        labels=_labels(cache.z),
        imputed=np.where(data.observed, data.X, cache.imputed),
        loglik_trace=trace,
        converged=converged,
        n_iter=it,
        bic=bic(trace[-1], P, data.n),
        n_params=P,
        n_obs=data.n,
        notes=tuple(notes),
    )
