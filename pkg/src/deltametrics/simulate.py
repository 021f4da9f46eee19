"""Seeded data generators and Monte-Carlo coverage drivers.

Each driver replays one cell of the reference coverage studies: ratio
methods on three data models, cluster-randomized variance estimators,
quantile intervals on clustered data, and cross-over effect estimators
under engagement-driven missingness. Replicate r of a run draws from a
counter-based generator keyed by (base seed, r), so results are identical
whether replicates run serially or on a process pool.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat

import numpy as np
from scipy.special import ndtr

from . import cluster, lmm, quantiles, ratio
from ._dist import z_quantile
from .crossover import (
    AugmentedPanel,
    decompose_complete_incomplete,
    fit_crossover_delta,
    fit_crossover_lmm,
)
from .errors import FiellerDegenerateError, InputDomainError

__all__ = ["Scenario", "MethodResult", "CoverageReport", "run_table",
           "default_scenarios", "replicate_rng", "gen_table1", "gen_table2",
           "gen_table3", "gen_table45", "true_quantile_table3",
           "crossover_oracle_truth", "TABLE1_TRUTH", "TABLE2_TRUTH"]

DEFAULT_SEED = 1729
_TRUTH_SEED = 990001  # dedicated stream for cached ground-truth runs

TABLE1_MODELS = ("normal", "poisson", "bernoulli")
TABLE1_SIZES = (20, 50, 200, 2000)
TABLE1_TRUTH = {"normal": 0.1, "poisson": 0.1, "bernoulli": 0.2}

# size-weighted mixture mean: (1/3*2*0.3 + 1/2*5*0.5 + 1/6*30*0.8) over
# (1/3*2 + 1/2*5 + 1/6*30)
TABLE2_TRUTH = (2.0 / 3.0 * 0.3 + 2.5 * 0.5 + 5.0 * 0.8) / (2.0 / 3.0 + 2.5 + 5.0)

_TABLE2_CATEGORIES = (  # probability, mean cluster size, per-cluster mean law
    (1.0 / 3.0, 2.0, 0.3, 0.05),
    (1.0 / 2.0, 5.0, 0.5, 0.10),
    (1.0 / 6.0, 30.0, 0.8, 0.05),
)

TABLE3_DISTRIBUTIONS = ("normal", "lognormal")
TABLE3_SIZES = (100, 1000, 10000)
_TABLE3_TRUTH_USERS = 10_000_000

_T45_EFFECT_MEAN = 10.0
_T45_EFFECT_SD = 0.3
_T45_USER_SD = 3.0
_T45_NOISE_SD = 2.0


def replicate_rng(base_seed: int, index: int) -> np.random.Generator:
    """Independent stream for one replicate of one run.

    Counter-based (Philox) keyed by (seed, replicate), so any subset of
    replicates can be generated in any order or process.
    """
    key = np.array([base_seed % 2 ** 64, index % 2 ** 64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# generators


def gen_table1(model: str, n: int, rng: np.random.Generator) -> tuple:
    """Independent control/treatment samples for the ratio study."""
    if model == "normal":
        return rng.normal(1.0, 0.1, n), rng.normal(1.1, 0.1, n)
    if model == "poisson":
        return (rng.poisson(1.0, n).astype(float),
                rng.poisson(1.1, n).astype(float))
    if model == "bernoulli":
        return ((rng.random(n) < 0.5).astype(float),
                (rng.random(n) < 0.6).astype(float))
    raise InputDomainError(f"unknown model {model!r}")


def gen_table2(k: int, rng: np.random.Generator) -> tuple:
    """Heterogeneous binary clusters: small/medium/large category mix.

    Cluster sizes are Poisson and may come out 0; empty clusters are
    dropped since they contribute nothing to the average metric.
    """
    counts = rng.multinomial(k, [c[0] for c in _TABLE2_CATEGORIES])
    sizes = []
    mus = []
    for m_c, (_, lam, mu, sd) in zip(counts, _TABLE2_CATEGORIES):
        sizes.append(rng.poisson(lam, m_c))
        mus.append(np.clip(rng.normal(mu, sd, m_c), 0.0, 1.0))
    sizes = np.concatenate(sizes)
    mus = np.concatenate(mus)
    keep = sizes > 0
    sizes, mus = sizes[keep], mus[keep]
    total = int(sizes.sum())
    values = (rng.random(total) < np.repeat(mus, sizes)).astype(float)
    cluster_ids = np.repeat(np.arange(sizes.size), sizes)
    return cluster_ids, values


def gen_table3(distribution: str, n_users: int, rng: np.random.Generator) -> tuple:
    """Clustered observations: shared per-user term plus i.i.d. noise.

    Each user contributes a uniform 1..10 observations; every observation
    is the sum of the user's shared draw and its own draw from the same
    family, so the observation marginal is the two-fold convolution.
    """
    sizes = rng.integers(1, 11, n_users)
    total = int(sizes.sum())
    if distribution == "normal":
        shared = rng.normal(0.0, 1.0, n_users)
        own = rng.normal(0.0, 1.0, total)
    elif distribution == "lognormal":
        shared = rng.lognormal(0.0, 1.0, n_users)
        own = rng.lognormal(0.0, 1.0, total)
    else:
        raise InputDomainError(f"unknown distribution {distribution!r}")
    values = np.repeat(shared, sizes) + own
    cluster_ids = np.repeat(np.arange(n_users), sizes)
    return cluster_ids, values


def gen_table45(n_per_group: int, rng: np.random.Generator) -> AugmentedPanel:
    """Cross-over panel with engagement-correlated effects and missingness.

    Per user: effect u ~ N(10, 3), engagement l = P(U < u) = Phi((u-10)/3),
    noise sd 2 per period, treated-period lift drawn N(10, 0.3) times l.
    Group I is treated in period 1, group II in period 2. Each (user,
    period) cell is independently missing with probability max(0.1, 1-l):
    low-engagement users usually drop out, and even the most engaged miss
    a period 10% of the time.
    """
    groups, i1s, x1s, i2s, x2s = [], [], [], [], []
    for label in ("I", "II"):
        u = rng.normal(10.0, _T45_USER_SD, n_per_group)
        l = ndtr((u - 10.0) / _T45_USER_SD)
        eps1 = rng.normal(0.0, _T45_NOISE_SD, n_per_group)
        eps2 = rng.normal(0.0, _T45_NOISE_SD, n_per_group)
        effect = rng.normal(_T45_EFFECT_MEAN, _T45_EFFECT_SD, n_per_group) * l
        base1 = u + eps1 + (effect if label == "I" else 0.0)
        base2 = u + eps2 + (effect if label == "II" else 0.0)
        present = np.minimum(0.9, l)
        i1 = rng.random(n_per_group) < present
        i2 = rng.random(n_per_group) < present
        keep = i1 | i2
        groups.append(np.full(int(keep.sum()), label))
        i1s.append(i1[keep].astype(float))
        x1s.append(np.where(i1, base1, 0.0)[keep])
        i2s.append(i2[keep].astype(float))
        x2s.append(np.where(i2, base2, 0.0)[keep])
    n_total = sum(g.size for g in groups)
    return AugmentedPanel(user_ids=np.arange(n_total),
                          group=np.concatenate(groups),
                          i1=np.concatenate(i1s), x1=np.concatenate(x1s),
                          i2=np.concatenate(i2s), x2=np.concatenate(x2s))


# ---------------------------------------------------------------------------
# cached ground truths

_table3_truth_cache: dict = {}
_crossover_truth_cache: dict = {}


def true_quantile_table3(distribution: str, p: float = 0.95,
                         n_users: int = _TABLE3_TRUTH_USERS,
                         seed: int = _TRUTH_SEED) -> float:
    """Reference quantile from one very large generator run, cached."""
    key = (distribution, p, n_users, seed)
    if key not in _table3_truth_cache:
        _, values = gen_table3(distribution, n_users, replicate_rng(seed, 0))
        rank = max(1, math.floor(values.size * p))
        _table3_truth_cache[key] = float(np.partition(values, rank - 1)[rank - 1])
    return _table3_truth_cache[key]


def crossover_oracle_truth(n_per_group: int = 1_000_000,
                           seed: int = _TRUTH_SEED) -> float:
    """Observed-population effect from one huge cross-over run, cached."""
    key = (n_per_group, seed)
    if key not in _crossover_truth_cache:
        panel = gen_table45(n_per_group, replicate_rng(seed, 1))
        _crossover_truth_cache[key] = fit_crossover_delta(panel).delta
    return _crossover_truth_cache[key]


# ---------------------------------------------------------------------------
# scenarios and reports


@dataclass(frozen=True)
class Scenario:
    """One cell of one table: generator parameters plus run controls."""

    table: int
    sims: int
    seed: int = DEFAULT_SEED
    alpha: float = 0.05
    model: str = ""            # table 1
    n: int = 0                 # table 1
    k: int = 0                 # table 2
    distribution: str = ""     # table 3
    n_users: int = 0           # table 3
    p: float = 0.95            # table 3
    bootstrap_replicates: int = 1000  # table 3
    n_per_group: int = 0       # tables 4-5

    def __post_init__(self):
        if self.table not in (1, 2, 3, 4, 5):
            raise InputDomainError(f"table must be 1..5, got {self.table}")
        if self.sims < 100:
            raise InputDomainError("sims must be at least 100")
        if not 0.0 < self.alpha < 1.0:
            raise InputDomainError("alpha must be in (0, 1)")
        if self.table == 1:
            if self.model not in TABLE1_MODELS:
                raise InputDomainError(f"table 1 model must be one of {TABLE1_MODELS}")
            if self.n not in TABLE1_SIZES:
                raise InputDomainError(f"table 1 n must be one of {TABLE1_SIZES}")
        elif self.table == 2:
            if self.k < 10:
                raise InputDomainError("table 2 needs K >= 10 clusters")
        elif self.table == 3:
            if self.distribution not in TABLE3_DISTRIBUTIONS:
                raise InputDomainError(
                    f"table 3 distribution must be one of {TABLE3_DISTRIBUTIONS}")
            if self.n_users < 10:
                raise InputDomainError("table 3 needs at least 10 users")
            if self.bootstrap_replicates < 100:
                raise InputDomainError("bootstrap needs >= 100 replicates")
        else:
            if self.n_per_group < 100:
                raise InputDomainError("tables 4-5 need >= 100 users per group")

    def cell(self) -> dict:
        if self.table == 1:
            return {"model": self.model, "n": self.n}
        if self.table == 2:
            return {"k": self.k}
        if self.table == 3:
            return {"distribution": self.distribution, "n_users": self.n_users,
                    "p": self.p, "bootstrap_replicates": self.bootstrap_replicates}
        return {"n_per_group": self.n_per_group}


@dataclass(frozen=True)
class MethodResult:
    """Per-method Monte-Carlo summary for one scenario."""

    method: str
    coverage: float | None
    coverage_mc_se: float | None
    mean_estimate: float
    true_value: float | None
    true_sd: float
    mean_se: float | None

    def to_dict(self) -> dict:
        return {"method": self.method, "coverage": self.coverage,
                "coverage_mc_se": self.coverage_mc_se,
                "mean_estimate": self.mean_estimate,
                "true_value": self.true_value, "true_sd": self.true_sd,
                "mean_se": self.mean_se}


@dataclass(frozen=True)
class CoverageReport:
    scenario: Scenario
    results: tuple
    dropped_replicates: int = 0

    def method(self, name: str) -> MethodResult:
        for r in self.results:
            if r.method == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"table": self.scenario.table, "cell": self.scenario.cell(),
                "sims": self.scenario.sims, "seed": self.scenario.seed,
                "alpha": self.scenario.alpha,
                "dropped_replicates": self.dropped_replicates,
                "methods": [r.to_dict() for r in self.results]}


# ---------------------------------------------------------------------------
# per-replicate workers (top level so process pools can pickle them)

TABLE1_METHODS = ("fieller", "delta", "delta-bc", "edgeworth", "edgeworth-bc")
TABLE2_METHODS = ("naive", "delta", "lmm", "lmm-weighted")
TABLE3_METHODS = ("bootstrap", "outer-pre", "outer-post")
TABLE45_METHODS = ("delta-gls", "lmm", "decompose-complete",
                   "decompose-incomplete", "decompose-weighted")


def _ci_row(ci, truth: float) -> tuple:
    return (1.0 if ci.contains(truth) else 0.0, ci.point,
            ci.se if ci.se is not None else math.nan)


def _table1_replicate(scen: Scenario, truth: float, idx: int) -> list:
    rng = replicate_rng(scen.seed, idx)
    x, y = gen_table1(scen.model, scen.n, rng)
    if x.mean() == 0.0:
        return [(math.nan, math.nan, math.nan)] * len(TABLE1_METHODS)
    inp = ratio.RatioInput.from_independent(x, y, alpha=scen.alpha)
    try:
        fie = _ci_row(ratio.fieller_ci(inp), truth)
    except FiellerDegenerateError:
        # the inversion set is unbounded and necessarily contains the truth
        fie = (1.0, inp.mean_y / inp.mean_x - 1.0, math.nan)
    return [
        fie,
        _ci_row(ratio.delta_ci(inp, bias_correct=False), truth),
        _ci_row(ratio.delta_ci(inp, bias_correct=True), truth),
        _ci_row(ratio.edgeworth_ci(inp, bias_correct=False), truth),
        _ci_row(ratio.edgeworth_ci(inp, bias_correct=True), truth),
    ]


def _table2_replicate(scen: Scenario, truth: float, idx: int) -> list:
    rng = replicate_rng(scen.seed, idx)
    ids, values = gen_table2(scen.k, rng)
    cs = cluster.summarize(ids, values)
    naive = cluster.naive_variance(cs)
    delta = cluster.delta_variance(cs)
    fit = lmm.fit_random_intercept(ids, np.ones((values.size, 1)), values)
    weighted = lmm.weighted_cluster_mean(fit, cs.n)
    return [
        _ci_row(naive.ci(scen.alpha), truth),
        _ci_row(delta.ci(scen.alpha), truth),
        _ci_row(fit.ci(0, scen.alpha), truth),
        (math.nan, weighted, math.nan),
    ]


def _table3_replicate(scen: Scenario, truth: float, idx: int) -> list:
    rng = replicate_rng(scen.seed, idx)
    ids, values = gen_table3(scen.distribution, scen.n_users, rng)
    boot_seed = int(rng.integers(2 ** 63))
    rows = []
    for est in (
        quantiles.bootstrap_ci(values, ids, scen.p, scen.alpha,
                               replicates=scen.bootstrap_replicates,
                               seed=boot_seed),
        quantiles.outer_ci_pre(values, ids, scen.p, scen.alpha),
        quantiles.outer_ci_post(values, ids, scen.p, scen.alpha),
    ):
        rows.append((1.0 if est.contains(truth) else 0.0, est.value, math.nan))
    return rows


def _table45_replicate(scen: Scenario, truth: float, idx: int) -> list:
    rng = replicate_rng(scen.seed, idx)
    panel = gen_table45(scen.n_per_group, rng)
    gls = fit_crossover_delta(panel, alpha=scen.alpha)
    mixed = fit_crossover_lmm(panel, alpha=scen.alpha)
    dec = decompose_complete_incomplete(panel)
    return [
        _ci_row(gls.ci, truth),
        _ci_row(mixed.ci, truth),
        (math.nan, dec.complete_delta, math.sqrt(dec.complete_var)),
        (math.nan, dec.incomplete_delta, math.sqrt(dec.incomplete_var)),
        _ci_row(dec.ci(scen.alpha), truth),
    ]


_WORKERS = {1: (_table1_replicate, TABLE1_METHODS),
            2: (_table2_replicate, TABLE2_METHODS),
            3: (_table3_replicate, TABLE3_METHODS),
            4: (_table45_replicate, TABLE45_METHODS),
            5: (_table45_replicate, TABLE45_METHODS)}


def _truth_for(scen: Scenario) -> float:
    if scen.table == 1:
        return TABLE1_TRUTH[scen.model]
    if scen.table == 2:
        return TABLE2_TRUTH
    if scen.table == 3:
        return true_quantile_table3(scen.distribution, scen.p)
    return crossover_oracle_truth()


def run_table(scenario: Scenario, threads: int = 1) -> CoverageReport:
    """Run every applicable estimator over seeded replicates of one cell.

    The report is a deterministic function of (scenario, package release):
    identical inputs give identical output regardless of ``threads``.
    """
    worker, methods = _WORKERS[scenario.table]
    truth = _truth_for(scenario)
    sims = scenario.sims
    if threads > 1:
        chunk = max(1, sims // (threads * 16))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(worker, repeat(scenario), repeat(truth),
                                 range(sims), chunksize=chunk))
    else:
        rows = [worker(scenario, truth, i) for i in range(sims)]
    data = np.asarray(rows, dtype=float)  # (sims, n_methods, 3)

    results = []
    dropped = int(np.isnan(data[:, 0, 1]).sum())
    for j, name in enumerate(methods):
        covers = data[:, j, 0]
        points = data[:, j, 1]
        ses = data[:, j, 2]
        n_cov = int(np.sum(~np.isnan(covers)))
        if n_cov:
            cov = float(np.nanmean(covers))
            mc = math.sqrt(cov * (1.0 - cov) / n_cov)
        else:
            cov, mc = None, None
        n_se = int(np.sum(~np.isnan(ses)))
        results.append(MethodResult(
            method=name, coverage=cov, coverage_mc_se=mc,
            mean_estimate=float(np.nanmean(points)),
            true_value=truth,
            true_sd=float(np.nanstd(points, ddof=1)),
            mean_se=float(np.nanmean(ses)) if n_se else None))
    return CoverageReport(scenario=scenario, results=tuple(results),
                          dropped_replicates=dropped)


def default_scenarios(table: int, sims: int | None = None,
                      seed: int = DEFAULT_SEED) -> list:
    """The per-table default grid of scenarios.

    Table 3 scales the slowest cell (10000 users, with bootstrap) down to
    500 replicates; other cells default to 2000.
    """
    if table == 1:
        return [Scenario(table=1, sims=sims or 10000, seed=seed, model=m, n=n)
                for m in TABLE1_MODELS for n in TABLE1_SIZES]
    if table == 2:
        return [Scenario(table=2, sims=sims or 1000, seed=seed, k=1000)]
    if table == 3:
        cells = []
        for d in TABLE3_DISTRIBUTIONS:
            for n_users in TABLE3_SIZES:
                default_m = 500 if n_users >= 10000 else 2000
                cells.append(Scenario(table=3, sims=sims or default_m,
                                      seed=seed, distribution=d,
                                      n_users=n_users))
        return cells
    if table in (4, 5):
        return [Scenario(table=table, sims=sims or 1000, seed=seed,
                         n_per_group=1000)]
    raise InputDomainError(f"table must be 1..5, got {table}")
