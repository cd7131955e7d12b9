"""Simulation harness: synthetic truth, MAR injection, recovery metrics, grids.

Every replicate draws its randomness from a ``SeedSequence`` keyed on the
grid seed and the replicate coordinates, so cells can be run in any order
or in parallel and still give identical tables.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .ecm import FitConfig, fit
from .exceptions import SmsnMixError
from .family import FAMILIES, FAMILY_LABELS, ComponentParams, MixtureModel, ScaleLaw, sample_mixture

log = logging.getLogger(__name__)

RATES = (0.0, 0.2, 0.4, 0.6, 0.8)
OVERLAPS = ("separated", "close")
BLOCKS = ("mu", "lambda", "trace", "antitrace")

_SIM = {
    "weights": (0.3, 0.7),
    "mu1": (-5.0, 0.0),
    "mu2": {"separated": (-3.0, 0.0), "close": (-1.0, 0.0)},
    "sigma": (((3.0, -1.0), (-1.0, 3.0)), ((3.0, 1.0), (1.0, 3.0))),
    "lambda": ((3.0, 6.0), (5.0, 4.0)),
    "theta": {"normal": (None, None), "t": (4.0, 7.0), "slash": (3.0, 2.0), "vgamma": (2.0, 3.0)},
}


def _kind(family):
    from .family import FAMILY_ALIASES
    return FAMILY_ALIASES[family]


def make_truth(overlap="separated", family="skew-normal") -> MixtureModel:
    """Two-component bivariate simulation model.

    ``overlap`` selects the second location: (-3, 0) for 'separated' and
    (-1, 0) for 'close'.
    """
    if overlap not in OVERLAPS:
        raise ValueError(f"overlap must be one of {OVERLAPS}")
    kind = _kind(family)
    mus = (_SIM["mu1"], _SIM["mu2"][overlap])
    comps = tuple(ComponentParams(m, s, l) for m, s, l in zip(mus, _SIM["sigma"], _SIM["lambda"]))
    laws = tuple(ScaleLaw.skew_normal() if th is None else ScaleLaw(kind, th)
                 for th in _SIM["theta"][kind])
    return MixtureModel(comps, laws, np.array(_SIM["weights"]))


def inject_mar(X, rate, seed=None):
    """Blank cells in ``round(rate * n)`` randomly chosen rows.

    Within a chosen row each coordinate is deleted with probability 1/2,
    redrawn until at least one coordinate is kept and one deleted.  Rows are
    visited in a seeded random order and patterns are drawn for every row, so
    the same seed gives nested missingness across increasing rates.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must be in [0, 1)")
    X = np.array(X, dtype=float, copy=True)
    n, p = X.shape
    if p < 2 and rate > 0:
        raise ValueError("need p >= 2 to delete part of a row")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    masks = np.empty((n, p), dtype=bool)
    for i in range(n):
        while True:
            drop = rng.random(p) < 0.5
            if drop.any() and not drop.all():
                break
        masks[i] = drop
    k = int(round(rate * n))
    rows = order[:k]
    X[rows] = np.where(masks[:k], np.nan, X[rows])
    return X


def ari(labels_a, labels_b):
    """Adjusted Rand index (Hubert and Arabie) from the contingency table."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label vectors must have equal length")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1.0)

    def pairs(x):
        return np.sum(x * (x - 1.0)) / 2.0

    index = pairs(table)
    sa = pairs(table.sum(axis=1))
    sb = pairs(table.sum(axis=0))
    total = n * (n - 1.0) / 2.0
    expected = sa * sb / total if total > 0 else 0.0
    top = 0.5 * (sa + sb)
    if top == expected:
        return 1.0
    return float((index - expected) / (top - expected))


def _block_values(c: ComponentParams):
    return {
        "mu": np.asarray(c.mu),
        "lambda": np.asarray(c.lam),
        "trace": np.array([np.trace(c.sigma)]),
        "antitrace": np.array([c.sigma.sum() - np.trace(c.sigma)]),
    }


def match_components(truth: MixtureModel, estimate: MixtureModel):
    """Permutation of estimate components minimising total location distance."""
    if truth.G != estimate.G:
        raise ValueError("component counts differ")
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(truth.G)):
        cost = sum(np.linalg.norm(estimate.components[j].mu - truth.components[g].mu)
                   for g, j in enumerate(perm))
        if cost < best_cost - 1e-12:
            best, best_cost = perm, cost
    return best


def ab_rmse(truth: MixtureModel, estimates):
    """Absolute bias and RMSE per parameter block and component.

    ``AB = (1/B) sum_b sum_i |est - true|`` and
    ``RMSE = sqrt((1/B) sum_b sum_i (est - true)^2)`` summed over the block's
    elements.  Returns ``{'ab': {(block, g): v}, 'rmse': {...}}``.
    """
    estimates = list(estimates)
    if not estimates:
        raise ValueError("need at least one estimate")
    B = len(estimates)
    abs_sum, sq_sum = {}, {}
    tv = [_block_values(c) for c in truth.components]
    for est in estimates:
        perm = match_components(truth, est)
        for g, j in enumerate(perm):
            ev = _block_values(est.components[j])
            for blk in BLOCKS:
                d = ev[blk] - tv[g][blk]
                abs_sum[(blk, g)] = abs_sum.get((blk, g), 0.0) + float(np.sum(np.abs(d)))
                sq_sum[(blk, g)] = sq_sum.get((blk, g), 0.0) + float(np.sum(d * d))
    return {
        "ab": {k: v / B for k, v in abs_sum.items()},
        "rmse": {k: float(np.sqrt(v / B)) for k, v in sq_sum.items()},
    }


@dataclass(frozen=True)
class ExperimentGrid:
    """Cells of the simulation study.

    ``pairs`` lists (generator, fitted) family pairs; by default each family
    is fitted to data from its own generator.  ``paper()`` gives all sixteen
    pairs.
    """

    pairs: tuple = tuple((k, k) for k in FAMILIES)
    rates: tuple = RATES
    overlaps: tuple = OVERLAPS
    ns: tuple = (200,)
    replicates: int = 20
    tol: float = 1e-5
    max_iter: int = 200
    exclude_nonconverged: bool = False

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if any(not 0.0 <= r < 1.0 for r in self.rates):
            raise ValueError("rates must lie in [0, 1)")
        pairs = tuple((_kind(a), _kind(b)) for a, b in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        for o in self.overlaps:
            if o not in OVERLAPS:
                raise ValueError(f"unknown overlap {o!r}")

    @classmethod
    def paper(cls, **kw):
        kw.setdefault("pairs", tuple(itertools.product(FAMILIES, FAMILIES)))
        return cls(**kw)

    @property
    def generators(self):
        return tuple(dict.fromkeys(g for g, _ in self.pairs))

    def to_dict(self):
        d = asdict(self)
        d["pairs"] = [list(p) for p in self.pairs]
        return d


@dataclass
class MetricsRow:
    """Summary of one cell (generator, fitted, overlap, n, rate)."""

    generator: str
    fitted: str
    overlap: str
    n: int
    rate: float
    replicates: int
    n_failed: int
    n_nonconverged: int
    mean_ari: float
    sd_ari: float
    ab: dict = field(default_factory=dict)
    rmse: dict = field(default_factory=dict)
    ari_values: list = field(default_factory=list)

    @property
    def flagged(self):
        return self.n_failed > 0.2 * self.replicates

    @property
    def key(self):
        return (self.generator, self.fitted, self.overlap, self.n, self.rate)


def _replicate_seed(seed, gen_idx, overlap_idx, n, b):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(gen_idx, overlap_idx, int(n), int(b)))
    return ss.generate_state(2)


def _run_replicate(args):
    """All rates and fitted families for one simulated dataset."""
    # init fallbacks and overflow chatter are per-fit noise here; outcomes
    # are recorded through the failure and non-convergence counts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return _replicate_body(args)


def _replicate_body(args):
    grid, seed, gen, gi, overlap, oi, n, b = args
    truth = make_truth(overlap, gen)
    s_data, s_mar = _replicate_seed(seed, gi, oi, n, b)
    X, labels = sample_mixture(truth, n, seed=int(s_data))
    fitted = [f for g, f in grid.pairs if g == gen]
    out = []
    for rate in grid.rates:
        Xm = inject_mar(X, rate, seed=int(s_mar))
        for fam in fitted:
            cfg = FitConfig(n_components=2, family=fam, tol=grid.tol, max_iter=grid.max_iter,
                            seed=int(s_data % (2 ** 31)))
            try:
                rep = fit(Xm, cfg)
            except (SmsnMixError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
                log.info("replicate %s failed: %s", (gen, fam, overlap, n, rate, b), exc)
                out.append((fam, rate, None, None, False))
                continue
            out.append((fam, rate, ari(labels, rep.labels), rep.model, rep.converged))
    return (gen, overlap, n, b, out)


def run_grid(grid: ExperimentGrid, seed=0, workers=1, progress=None):
    """Simulate, fit and summarise every cell; rows ordered by cell key."""
    tasks = []
    for gi, gen in enumerate(grid.generators):
        for oi, overlap in enumerate(grid.overlaps):
            for n in grid.ns:
                for b in range(grid.replicates):
                    tasks.append((grid, seed, gen, FAMILIES.index(gen), overlap,
                                  OVERLAPS.index(overlap), n, b))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate, tasks))
    else:
        results = []
        for i, t in enumerate(tasks):
            results.append(_run_replicate(t))
            if progress:
                progress(i + 1, len(tasks))
    cells = {}
    for gen, overlap, n, b, out in results:
        for fam, rate, a, model, conv in out:
            cells.setdefault((gen, fam, overlap, n, rate), []).append((b, a, model, conv))
    rows = []
    for (gen, fam, overlap, n, rate), items in sorted(
            cells.items(), key=lambda kv: (FAMILIES.index(kv[0][0]), FAMILIES.index(kv[0][1]),
                                           OVERLAPS.index(kv[0][2]), kv[0][3], kv[0][4])):
        items.sort(key=lambda t: t[0])
        failed = sum(a is None for _, a, _, _ in items)
        noncon = sum(a is not None and not c for _, a, _, c in items)
        keep = [(a, m) for _, a, m, c in items
                if a is not None and (c or not grid.exclude_nonconverged)]
        aris = [a for a, _ in keep]
        metrics = ab_rmse(make_truth(overlap, gen), [m for _, m in keep]) if keep else {"ab": {}, "rmse": {}}
        rows.append(MetricsRow(
            generator=FAMILY_LABELS[gen], fitted=FAMILY_LABELS[fam], overlap=overlap, n=n,
            rate=rate, replicates=len(items), n_failed=failed, n_nonconverged=noncon,
            mean_ari=float(np.mean(aris)) if aris else float("nan"),
            sd_ari=float(np.std(aris, ddof=1)) if len(aris) > 1 else 0.0,
            ab=metrics["ab"], rmse=metrics["rmse"], ari_values=aris,
        ))
    return rows


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

KEY_COLUMNS = ["generator", "fitted", "overlap", "n", "rate"]


def ari_table(rows):
    header = KEY_COLUMNS + ["replicates", "n_failed", "n_nonconverged", "n_used", "flagged",
                            "mean_ari", "sd_ari"]
    body = [[r.generator, r.fitted, r.overlap, r.n, r.rate, r.replicates, r.n_failed,
             r.n_nonconverged, len(r.ari_values), int(r.flagged), r.mean_ari, r.sd_ari] for r in rows]
    return header, body


def metric_table(rows, which):
    """Wide table, one row per cell, one column per (block, component).

    Columns are ``<block>_<component>`` with components numbered from 1;
    cells where every replicate failed hold NaN.
    """
    cols = [(blk, g) for blk in BLOCKS for g in range(2)]
    header = KEY_COLUMNS + ["replicates", "n_used"] + [f"{blk}_{g + 1}" for blk, g in cols]
    body = []
    for r in rows:
        vals = getattr(r, which)
        body.append([r.generator, r.fitted, r.overlap, r.n, r.rate, r.replicates, len(r.ari_values)]
                    + [float(vals.get(c, np.nan)) for c in cols])
    return header, body
