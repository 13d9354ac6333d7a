"""Registry of seeded Monte Carlo checks, one per limit theorem or identity.

Every entry takes a validated configuration and a master seed and returns a
:class:`~walksieve.stats.TestReport`.  Replica batches run through
:func:`walksieve.rng.replicate`, so reports do not depend on the thread
count and re-running with the same ``(seed, config)`` reproduces them bit
for bit.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import ConfigError, HypothesisError
from .gwp import (
    gw_generations,
    log_normalized_sibuya,
    validate_finite_mean,
    validate_sibuya,
    z_infty_sample,
)
from .increments import IncrementLaw, Kind, law_from_dict, pmf, survival
from .pointproc import (
    FiniteMeanStableModel,
    InfiniteMeanStableModel,
    LatticeModel,
    PoissonModel,
    SelfSimilarProfile,
    distinct_counts,
    exp_running_maxima,
    first_cluster,
    record_values,
    self_similarity_check,
    stability_test,
)
from .rng import replicate, substream
from .sieve import (
    SieveState,
    compose_forward,
    composition_batch,
    count_sieve,
    extinction_times,
    log_survivors_sibuya,
    sieve_round,
    sieve_walks,
)
from .stats import (
    KS_THRESHOLD,
    Check,
    TestReport,
    chi_square_counts,
    chi_square_discrete,
    exp_cdf,
    ks_one_sample,
    ks_two_sample,
)

GEOMETRIC_HALF = {"kind": "geometric", "p": 0.5}
SIBUYA_HALF = {"kind": "sibuya", "alpha": 0.5}


@dataclass(frozen=True)
class Theorem:
    id: str
    summary: str
    defaults: dict
    run: Callable[[dict, int, int], TestReport]


REGISTRY: dict[str, Theorem] = {}


def _register(tid: str, summary: str, **defaults):
    def deco(fn):
        REGISTRY[tid] = Theorem(tid, summary, defaults, fn)
        return fn

    return deco


def theorem_ids() -> list[str]:
    return list(REGISTRY)


def resolve_config(theorem_id: str, overrides: dict | None = None) -> dict:
    """Defaults of ``theorem_id`` updated by ``overrides``; unknown keys are rejected."""
    th = _lookup(theorem_id)
    cfg = copy.deepcopy(th.defaults)
    for key, value in (overrides or {}).items():
        if key not in cfg:
            raise ConfigError(f"{theorem_id}.{key}: unknown field (allowed: {', '.join(sorted(cfg))})")
        cfg[key] = value
    for key in ("law", "laws"):
        if key in cfg:
            descs = cfg[key] if key == "laws" else [cfg[key]]
            for d in descs:
                law_from_dict(d)
    for key in ("replicas", "n", "m", "seeds"):
        if key in cfg and (not isinstance(cfg[key], int) or cfg[key] < 0):
            raise ConfigError(f"{theorem_id}.{key}: expected a non-negative integer")
    return cfg


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _lookup(theorem_id: str) -> Theorem:
    try:
        return REGISTRY[theorem_id]
    except KeyError:
        raise ConfigError(f"unknown theorem id {theorem_id!r}; available: {', '.join(REGISTRY)}, all") from None


def theorem_suite(theorem_id: str, config: dict | None = None, seed: int = 0, threads: int = 1) -> TestReport:
    """Run one registered check and attach provenance."""
    if seed is None:
        raise ConfigError("seed: required for verification runs")
    th = _lookup(theorem_id)
    cfg = resolve_config(theorem_id, config)
    rep = th.run(cfg, int(seed), int(threads))
    rep.name = theorem_id
    rep.provenance = {
        "seed": int(seed),
        "theorem_id": theorem_id,
        "config": cfg,
        "config_hash": config_hash({"theorem_id": theorem_id, "config": cfg}),
    }
    return rep


def verify_all(seed: int, threads: int = 1, configs: dict | None = None) -> TestReport:
    """Run every registered check and aggregate them into one report."""
    configs = configs or {}
    unknown = set(configs) - set(REGISTRY)
    if unknown:
        raise ConfigError(f"unknown theorem id {sorted(unknown)[0]!r}; available: {', '.join(REGISTRY)}")
    agg = TestReport("all")
    verdicts = {}
    hashes = {}
    for tid in REGISTRY:
        rep = theorem_suite(tid, configs.get(tid), seed, threads)
        agg.merge(rep, tid)
        verdicts[tid] = rep.verdict
        hashes[tid] = rep.provenance["config_hash"]
    agg.details = {"verdicts": verdicts}
    agg.provenance = {"seed": int(seed), "theorem_id": "all", "config_hash": config_hash(hashes)}
    return agg


# ---------------------------------------------------------------------------
# helpers


def _law(cfg) -> IncrementLaw:
    return law_from_dict(cfg["law"])


def _require_geometric(law: IncrementLaw, what: str) -> None:
    if law.kind is not Kind.GEOMETRIC:
        raise HypothesisError(f"{what} needs geometric increments, got {law}")


def _batch(fn, cfg, seed, threads, *key, replicas=None):
    return replicate(fn, cfg["replicas"] if replicas is None else replicas, seed, key, threads)


def _exp_or_proxy(rep: TestReport, label: str, x: np.ndarray, law: IncrementLaw, seed: int, key, n_fixed: int):
    """KS of ``x`` against the martingale limit of ``law``.

    Geometric increments have an exactly exponential limit; for other laws
    the reference is a 10x larger sample of ``mu^-n Z_n`` proxies.
    """
    if law.kind is Kind.GEOMETRIC:
        rep.merge(ks_one_sample(x, exp_cdf(), KS_THRESHOLD), label)
    else:
        ref = z_infty_sample(law, substream(seed, *key, "reference"), 10 * x.size, n_fixed)
        rep.merge(ks_two_sample(x, ref, KS_THRESHOLD), label)


def _binned_probs(cdf_at: Callable[[int], float], lo: int, hi: int) -> np.ndarray:
    """Cell probabilities for ``<= lo``, ``lo+1 .. hi-1`` and ``>= hi``."""
    f = np.array([cdf_at(k) for k in range(lo, hi)])
    return np.concatenate([[f[0]], np.diff(f), [1.0 - f[-1]]])


def _bin_values(v: np.ndarray, lo: int, hi: int) -> np.ndarray:
    return np.bincount(np.clip(v, lo, hi) - lo, minlength=hi - lo + 1).astype(float)


# ---------------------------------------------------------------------------
# finite-mean regime


@_register(
    "E1_round_law",
    "survivor count after n rounds of the classical sieve is Binomial(M, p^n)",
    law=GEOMETRIC_HALF,
    m=1000,
    n=5,
    replicas=10_000,
)
def _round_law(cfg, seed, threads):
    law = _law(cfg)
    _require_geometric(law, "the Binomial round law")
    m, n = cfg["m"], cfg["n"]
    counts = _batch(lambda rng, k: count_sieve(law, m, n, rng, k)[:, -1], cfg, seed, threads, "E1_round_law")
    q = law.p**n
    rep = TestReport("E1_round_law", details={"mean": float(counts.mean()), "expected_mean": m * q})
    rep.merge(chi_square_discrete(counts, lambda k: sps.binom.pmf(k, m, q), range(m + 1)), "binomial")
    return rep


@_register(
    "T1",
    "mu^-n (S_1, S_2, ...) converges to partial sums of iid martingale limits",
    law=GEOMETRIC_HALF,
    n=12,
    j_max=2,
    replicas=10_000,
    n_fixed=14,
)
def _t1(cfg, seed, threads):
    law = _law(cfg)
    validate_finite_mean(law)
    n, j = cfg["n"], cfg["j_max"]
    s = _batch(lambda rng, k: composition_batch(law, n, j, rng, k), cfg, seed, threads, "T1")
    x = s.astype(float) * law.mu**-n
    gaps = np.diff(x, axis=1, prepend=0.0)
    rep = TestReport("T1")
    _exp_or_proxy(rep, "S_1", gaps[:, 0], law, seed, ("T1", 0), cfg["n_fixed"])
    for i in range(1, j):
        _exp_or_proxy(rep, f"gap_{i + 1}", gaps[:, i], law, seed, ("T1", i), cfg["n_fixed"])
    if j > 1:
        rep.add(Check("corr_S1_gap2", float(np.corrcoef(gaps[:, 0], gaps[:, 1])[0, 1]), None, "info"))
    return rep


def _poisson_pmf(lam):
    return lambda k: sps.poisson.pmf(k, lam)


@_register(
    "T2",
    "N_{mu^n x}^(n) converges to the Poisson counting process (classical case)",
    law=GEOMETRIC_HALF,
    n=10,
    x=[0.5, 1.0, 2.0],
    replicas=10_000,
)
def _t2(cfg, seed, threads):
    law = _law(cfg)
    validate_finite_mean(law)
    _require_geometric(law, "the Poisson counting limit")
    n = cfg["n"]
    xs = [float(v) for v in cfg["x"]]
    if sorted(xs) != xs or xs[0] <= 0:
        raise ConfigError("T2.x: expected increasing positive values")
    ms = np.floor(np.asarray(xs) * law.mu**n).astype(np.int64)
    counts = _batch(lambda rng, k: count_sieve(law, ms, n, rng, k)[:, :, -1], cfg, seed, threads, "T2")
    rep = TestReport("T2", details={"M": ms.tolist()})
    for i, x in enumerate(xs):
        rep.merge(chi_square_discrete(counts[:, i], _poisson_pmf(x), range(60)), f"N({x:g})")
    for i in range(1, len(xs)):
        inc = counts[:, i] - counts[:, i - 1]
        rep.merge(chi_square_discrete(inc, _poisson_pmf(xs[i] - xs[i - 1]), range(60)), f"increment_{i}")
    if len(xs) > 1:
        # joint law of (N(x1), N(x2) - N(x1)) against independent Poisson marginals
        a, b = counts[:, 0], counts[:, 1] - counts[:, 0]
        top = 12
        pa = np.append(sps.poisson.pmf(np.arange(top), xs[0]), sps.poisson.sf(top - 1, xs[0]))
        pb = np.append(sps.poisson.pmf(np.arange(top), xs[1] - xs[0]), sps.poisson.sf(top - 1, xs[1] - xs[0]))
        cell = np.minimum(a, top) * (top + 1) + np.minimum(b, top)
        obs = np.bincount(cell, minlength=(top + 1) ** 2).astype(float)
        exp = np.outer(pa, pb).ravel() * len(a)
        order = np.argsort(-exp, kind="stable")
        rep.merge(chi_square_counts(obs[order], exp[order]), "joint")
    return rep


@_register(
    "T3_classical",
    "T(mu^n x) - n converges to T'(x) with P{T' <= k} = exp(-mu^-k x)",
    law=GEOMETRIC_HALF,
    n=10,
    x=1.0,
    k_min=-2,
    k_max=6,
    replicas=10_000,
)
def _t3(cfg, seed, threads):
    law = _law(cfg)
    validate_finite_mean(law)
    _require_geometric(law, "the exponential T' law")
    n, x = cfg["n"], float(cfg["x"])
    m = int(math.floor(law.mu**n * x))
    t = _batch(lambda rng, k: extinction_times(law, m, rng, k), cfg, seed, threads, "T3_classical") - n
    lo, hi = cfg["k_min"], cfg["k_max"]
    probs = _binned_probs(lambda k: math.exp(-(law.mu**-k) * x), lo, hi)
    rep = TestReport("T3_classical", details={"M": m})
    rep.merge(chi_square_counts(_bin_values(t, lo, hi), probs * t.size), "T_prime")
    return rep


@_register(
    "T_single_player",
    "T(1) is geometric with success probability 1 - p_1",
    law=GEOMETRIC_HALF,
    replicas=100_000,
)
def _t_single(cfg, seed, threads):
    law = _law(cfg)
    if law.is_degenerate:
        raise HypothesisError(f"p_1 < 1 violated for {law}")
    p1 = law.p1
    t = _batch(lambda rng, k: extinction_times(law, 1, rng, k), cfg, seed, threads, "T_single_player")
    rep = TestReport("T_single_player", details={"mean": float(t.mean()), "expected_mean": 1.0 / (1.0 - p1)})
    rep.merge(chi_square_discrete(t, lambda k: p1 ** (k - 1.0) * (1.0 - p1), range(1, 80)), "geometric")
    return rep


@_register(
    "duality",
    "N_M^(n) >= k iff S_k^(n) <= M and T(M) <= k iff S_1^(k) > M on shared walks",
    laws=[GEOMETRIC_HALF, SIBUYA_HALF, {"kind": "explicit", "weights": [0.3, 0.3, 0.2, 0.2]}],
    m_max=200,
    n_max=8,
    seeds=100,
)
def _duality(cfg, seed, threads):
    laws = [law_from_dict(d) for d in cfg["laws"]]
    m_max, n_max = cfg["m_max"], cfg["n_max"]
    ms = np.arange(1, m_max + 1)
    ks = np.arange(1, m_max + 2)
    v1 = v2 = v3 = checked = 0
    for li, law in enumerate(laws):
        for s in range(cfg["seeds"]):
            walks = sieve_walks(law, seed, n_max, replica=li * 1_000_000 + s)
            state = SieveState.initial(m_max)
            n_counts = ms.copy()
            for n in range(1, n_max + 1):
                state = sieve_round(state, walks[n - 1])
                # counts recursion N_M^(n) = #{k : R^(n)(k) <= N_M^(n-1)}
                n_counts = np.array([walks[n - 1].count_upto(int(c)) for c in n_counts])
                from_labels = np.searchsorted(state.labels, ms, side="right")
                v3 += int(np.sum(n_counts != from_labels))
                s_k = np.array([_or_big(compose_forward(walks[:n], int(k), cap=m_max)) for k in ks])
                lhs = n_counts[:, None] >= ks[None, :]
                rhs = s_k[None, :] <= ms[:, None]
                v1 += int(np.sum(lhs != rhs))
                extinct = n_counts == 0  # T(M) <= n
                v2 += int(np.sum(extinct != (s_k[0] > ms)))
                checked += lhs.size + ms.size
    rep = TestReport("duality", details={"comparisons": checked})
    rep.add(Check("count_label_violations", v1, 1, "below"))
    rep.add(Check("extinction_violations", v2, 1, "below"))
    rep.add(Check("count_recursion_violations", v3, 1, "below"))
    return rep


def _or_big(v):
    return np.iinfo(np.int64).max if v is None else v


# ---------------------------------------------------------------------------
# infinite-mean regime


@_register(
    "sibuya_semigroup",
    "a g-generation Sibuya(alpha) process has the Sibuya(alpha^g) law",
    law=SIBUYA_HALF,
    generations=3,
    support_max=100,
    replicas=100_000,
)
def _semigroup(cfg, seed, threads):
    law = _law(cfg)
    validate_sibuya(law)
    g, top = cfg["generations"], cfg["support_max"]
    z = _batch(lambda rng, k: gw_generations(law, g, rng, k, censor=top)[:, -1], cfg, seed, threads, "sibuya_semigroup")
    target = IncrementLaw.sibuya(law.alpha**g)
    rep = TestReport("sibuya_semigroup")
    rep.merge(chi_square_discrete(z, lambda k: pmf(target, k), range(1, top + 1)), "pmf")
    return rep


@_register(
    "T5_sibuya",
    "alpha^n log Z_n converges to Exp(1) for Sibuya increments",
    law=SIBUYA_HALF,
    n=10,
    replicas=100_000,
)
def _t5(cfg, seed, threads):
    law = _law(cfg)
    validate_sibuya(law)
    n = cfg["n"]
    y = _batch(lambda rng, k: log_normalized_sibuya(law.alpha, n, rng, k), cfg, seed, threads, "T5_sibuya")
    rep = TestReport("T5_sibuya")
    rep.merge(ks_one_sample(y, exp_cdf(), KS_THRESHOLD), "exp_limit")
    return rep


@_register(
    "P1_sibuya",
    "running maxima of Exp(1): Poisson record values, geometric cluster sizes, ~log k records",
    law=SIBUYA_HALF,
    k=1000,
    g_max=40,
    replicas=10_000,
    distinct_range=[6.8, 8.2],
)
def _p1(cfg, seed, threads):
    validate_sibuya(_law(cfg))
    k, gmax = cfg["k"], cfg["g_max"]
    rows = _batch(lambda rng, r: exp_running_maxima(k, rng, r), cfg, seed, threads, "P1_sibuya")
    rec = record_values(rows)
    gaps = np.concatenate([np.diff(r, prepend=0.0) for r in rec])
    rep = TestReport("P1_sibuya", details={"record_gaps": int(gaps.size)})
    rep.merge(ks_one_sample(gaps, exp_cdf(), KS_THRESHOLD), "record_gaps")
    rep.merge(_multiplicity_test(rows, gmax, 0.0), "first_cluster")
    lo, hi = cfg["distinct_range"]
    rep.add(Check("mean_distinct", float(distinct_counts(rows).mean()), [lo, hi], "within"))
    return rep


def _multiplicity_test(rows: np.ndarray, gmax: int, rel_tol: float) -> TestReport:
    """Chi-square of first-cluster sizes against Geometric(e^-location), conditionally on each location."""
    loc, mult = first_cluster(rows, rel_tol)
    q = np.exp(-loc)
    g = np.arange(1, gmax + 1)
    expected = (q[:, None] * (1.0 - q[:, None]) ** (g[None, :] - 1)).sum(axis=0)
    expected = np.append(expected, np.sum((1.0 - q) ** gmax))
    observed = np.bincount(np.minimum(mult, gmax + 1) - 1, minlength=gmax + 1).astype(float)
    return chi_square_counts(observed, expected)


@_register(
    "P1_sieve_clusters",
    "clusters of alpha^n log S_j^(n) in the Sibuya sieve have geometric multiplicities",
    law=SIBUYA_HALF,
    n=10,
    j_max=200,
    g_max=40,
    rel_tolerance=1e-6,
    replicas=10_000,
)
def _p1_sieve(cfg, seed, threads):
    law = _law(cfg)
    validate_sibuya(law)
    n, j = cfg["n"], cfg["j_max"]
    y = _batch(lambda rng, k: log_survivors_sibuya(law.alpha, n, j, rng, k), cfg, seed, threads, "P1_sieve_clusters")
    rep = TestReport("P1_sieve_clusters")
    rep.merge(_multiplicity_test(y, min(cfg["g_max"], j - 1), cfg["rel_tolerance"]), "first_cluster")
    return rep


@_register(
    "T6_sibuya",
    "N^(n) at exp(x alpha^-n) converges to N''(x), geometric on {0, 1, ...}",
    law=SIBUYA_HALF,
    n=10,
    x=[0.5, 1.0, 2.0],
    j_max=200,
    replicas=10_000,
)
def _t6(cfg, seed, threads):
    law = _law(cfg)
    validate_sibuya(law)
    n, j = cfg["n"], cfg["j_max"]
    y = _batch(lambda rng, k: log_survivors_sibuya(law.alpha, n, j, rng, k), cfg, seed, threads, "T6_sibuya")
    rep = TestReport("T6_sibuya")
    for x in cfg["x"]:
        # duality: N_M^(n) = #{j : S_j^(n) <= M}
        counts = (y <= float(x)).sum(axis=1)
        q = math.exp(-float(x))
        rep.merge(
            chi_square_discrete(counts, lambda k, q=q: (1.0 - q) ** k * q, range(j)),
            f"N''({float(x):g})",
        )
    return rep


@_register(
    "T7_sibuya",
    "T(exp(alpha^-n x)) - n against its exact law and the T''(x) limit",
    law=SIBUYA_HALF,
    n=4,
    x=1.0,
    replicas=10_000,
    t_max=40,
)
def _t7(cfg, seed, threads):
    law = _law(cfg)
    validate_sibuya(law)
    n, x, a = cfg["n"], float(cfg["x"]), law.alpha
    m = int(math.floor(math.exp(x * a**-n)))
    t = _batch(lambda rng, k: extinction_times(law, m, rng, k), cfg, seed, threads, "T7_sibuya")
    tmax = cfg["t_max"]
    # exact: T(M) <= t  iff  S_1^(t) > M, and S_1^(t) is Sibuya(alpha^t)
    exact_cdf = lambda r: float(survival(IncrementLaw.sibuya(a**r), m)) if r >= 1 else 0.0
    probs = _binned_probs(exact_cdf, 1, tmax)
    rep = TestReport("T7_sibuya", details={"M": m})
    rep.merge(chi_square_counts(_bin_values(t, 1, tmax), probs * t.size), "exact_law")
    ks = np.arange(-n, tmax - n)
    emp = np.array([(t - n <= k).mean() for k in ks])
    lim = np.exp(-(a ** ks.astype(float)) * x)
    rep.add(Check("limit_distance", float(np.max(np.abs(emp - lim))), None, "info"))
    return rep


# ---------------------------------------------------------------------------
# point-process stability


@_register(
    "stability",
    "Poisson(1) is 1/2-stable under geometric thinning; Exp running maxima are alpha-stable under Sibuya thinning",
    p=0.5,
    alpha=0.5,
    perturbed_a=0.7,
    k_marginals=10,
    replicas=10_000,
)
def _stability(cfg, seed, threads):
    geo = IncrementLaw.geometric(cfg["p"])
    sib = IncrementLaw.sibuya(cfg["alpha"])
    k, r = cfg["k_marginals"], cfg["replicas"]
    rep = TestReport("stability")
    rep.merge(stability_test(PoissonModel(), geo, cfg["p"], k, r, seed, key=("poisson",)), "poisson")
    bad = stability_test(PoissonModel(), geo, cfg["perturbed_a"], k, r, seed, key=("perturbed",))
    rep.add(Check("perturbed.first_marginal", bad.checks[0].statistic, 0.1, "above"))
    lat = stability_test(LatticeModel(), geo, cfg["p"], k, r, seed, key=("lattice",))
    rep.add(Check("lattice.max_distance", max(c.statistic for c in lat.checks), KS_THRESHOLD, "above"))
    rep.merge(
        stability_test(InfiniteMeanStableModel(sib.alpha), sib, sib.alpha, k, r, seed, key=("maxima",)),
        "running_maxima",
    )
    return rep


@_register(
    "T4_T8_constructive",
    "G applied to limit sums or maxima, with semi-self-similar G, gives stable patterns",
    law=GEOMETRIC_HALF,
    sibuya=SIBUYA_HALF,
    beta=2.0,
    k_marginals=10,
    replicas=10_000,
    n_fixed=14,
)
def _constructive(cfg, seed, threads):
    law = _law(cfg)
    validate_finite_mean(law)
    sib = law_from_dict(cfg["sibuya"])
    validate_sibuya(sib)
    k, r = cfg["k_marginals"], cfg["replicas"]
    mu, a = law.mu, sib.alpha
    g_fin = SelfSimilarProfile.piecewise_random(mu)
    g_inf = SelfSimilarProfile.piecewise_random(a)
    rep = TestReport("T4_T8_constructive")
    model = FiniteMeanStableModel(law, g_fin, cfg["n_fixed"])
    rep.merge(stability_test(model, law, 1.0 / mu, k, r, seed, key=("finite",)), "finite_piecewise")
    model = FiniteMeanStableModel(law, SelfSimilarProfile.power_law(cfg["beta"]), cfg["n_fixed"])
    rep.merge(stability_test(model, law, mu ** -cfg["beta"], k, r, seed, key=("power",)), "finite_power")
    model = InfiniteMeanStableModel(a, g_inf)
    rep.merge(stability_test(model, sib, a, k, r, seed, key=("infinite",)), "infinite_piecewise")
    rep.merge(self_similarity_check(g_fin, realizations=r, seed=seed, key=("finite",)), "profile_mu")
    rep.merge(self_similarity_check(g_inf, realizations=r, seed=seed, key=("infinite",)), "profile_alpha")
    return rep
