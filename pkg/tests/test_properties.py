"""Property-based checks of the structural invariants."""

import math
import os
import tempfile

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from walksieve.errors import IndexOverflow
from walksieve.increments import IncrementLaw, cdf, pmf, survival
from walksieve.io import read_csv, render_csv
from walksieve.pointproc import (
    PointPattern,
    SelfSimilarProfile,
    cluster_stats,
    scale,
    thin,
)
from walksieve.rng import substream
from walksieve.sieve import (
    WalkPath,
    compose_forward,
    count_sieve,
    run_sieve,
    sieve_walks,
)
from walksieve.stats import merge_bins
from walksieve.suite import config_hash

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])

finite_floats = st.floats(min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False)
patterns = st.lists(finite_floats, min_size=1, max_size=60).map(lambda xs: PointPattern(sorted(xs)))
increments = st.lists(st.integers(1, 5), min_size=1, max_size=40)


@st.composite
def laws(draw):
    kind = draw(st.sampled_from(["geometric", "sibuya", "davies_pareto", "explicit"]))
    if kind == "geometric":
        return IncrementLaw.geometric(draw(st.floats(0.05, 0.95)))
    if kind == "sibuya":
        return IncrementLaw.sibuya(draw(st.floats(0.2, 0.95)))
    if kind == "davies_pareto":
        return IncrementLaw.davies_pareto(draw(st.floats(0.2, 0.95)), draw(st.integers(0, 3)))
    w = draw(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6))
    assume(sum(w) > 0 and w[0] < sum(w))
    return IncrementLaw.explicit(w)


@SETTINGS
@given(patterns, increments, st.floats(1e-3, 1e3))
def test_thin_and_scale_commute(p, inc, a):
    w = WalkPath(None, increments=inc)
    assert scale(thin(p, w), a) == thin(scale(p, a), w)


@SETTINGS
@given(patterns, increments)
def test_thinning_keeps_a_sub_pattern(p, inc):
    q = thin(p, WalkPath(None, increments=inc))
    assert len(q) <= len(p)
    assert np.all(np.diff(q.points) >= 0)
    assert q.truncation == p.truncation
    assert np.all(np.isin(q.points, p.points))


@SETTINGS
@given(patterns, st.floats(0.0, 10.0))
def test_clusters_cover_the_pattern(p, tol):
    cl = cluster_stats(p, tol)
    assert sum(m for _, m in cl) == len(p)
    locs = [x for x, _ in cl]
    assert locs == sorted(locs)
    assert all(b - a > tol or tol == 0 and b > a for a, b in zip(locs, locs[1:]))


@SETTINGS
@given(laws(), st.integers(0, 2**32), st.lists(st.integers(1, 3000), min_size=2, max_size=8))
def test_walk_is_order_independent(law, seed, ks):
    def values(order):
        w = WalkPath(law, substream(seed, "prop"))
        out = {}
        for k in order:
            try:
                out[k] = w(k)
            except IndexOverflow:
                out[k] = None
        return out, w

    va, a = values(ks)
    vb, _ = values(sorted(ks, reverse=True))
    assert va == vb
    assert np.all(np.diff(a.partial_sums) >= 1)


@SETTINGS
@given(laws(), st.integers(0, 2**32), st.integers(1, 80), st.integers(0, 5))
def test_sieve_state_invariants(law, seed, m, rounds):
    s = run_sieve(m, law, rounds, seed)
    assert s.survivor_count == len(s.labels) == s.history[-1]
    assert np.all(np.diff(s.labels) > 0)
    assert s.labels.size == 0 or (s.labels[0] >= 1 and s.labels[-1] <= m)
    assert all(x >= y for x, y in zip(s.history, s.history[1:]))


@SETTINGS
@given(laws(), st.integers(0, 2**32), st.integers(1, 60), st.integers(0, 5))
def test_duality_small_cases(law, seed, m, n):
    walks = sieve_walks(law, seed, max(n, 1))
    state = run_sieve(m, law, n, seed, walks=walks)
    for k in range(1, m + 2):
        sk = compose_forward(walks[:n], k, cap=m)
        assert (state.survivor_count >= k) == (sk is not None)
    if law.p1 < 1:
        full = run_sieve(m, law, 60, seed, walks=sieve_walks(law, seed, 60))
        t = full.extinction_time()
        if t is not None:
            walks60 = sieve_walks(law, seed, 60)
            for k in range(1, 8):
                assert (t <= k) == (compose_forward(walks60[:k], 1, cap=m) is None)


@SETTINGS
@given(laws(), st.integers(0, 2**32), st.lists(st.integers(0, 400), min_size=2, max_size=4), st.integers(1, 4))
def test_counts_are_monotone(law, seed, ms, rounds):
    ms = np.array(sorted(ms))
    traj = count_sieve(law, ms, rounds, substream(seed, "mono"), 5)
    assert np.all(np.diff(traj, axis=2) <= 0)
    assert np.all(np.diff(traj, axis=1) >= 0)


@SETTINGS
@given(laws(), st.integers(1, 500))
def test_survival_is_consistent(law, n):
    s = survival(law, np.arange(0, n + 1))
    assert s[0] == 1.0
    assert np.all(np.diff(s) <= 1e-15)
    assert math.isclose(float(cdf(law, n)) + float(s[-1]), 1.0, abs_tol=1e-12)
    assert np.all(pmf(law, np.arange(1, n + 1)) >= 0)


@SETTINGS
@given(
    st.lists(st.floats(0, 100), min_size=1, max_size=30),
    st.floats(0.5, 20),
)
def test_merge_bins_preserves_totals(expected, min_expected):
    exp = np.array(expected)
    obs = np.round(exp * 1.3)
    o, e = merge_bins(obs, exp, min_expected)
    assert math.isclose(o.sum(), obs.sum(), abs_tol=1e-9)
    assert math.isclose(e.sum(), exp.sum(), rel_tol=1e-12, abs_tol=1e-12)
    assert len(e) <= len(exp)
    if exp.sum() >= min_expected:
        assert np.all(e >= min_expected - 1e-9)


@SETTINGS
@given(
    st.floats(1.1, 10.0) | st.floats(0.1, 0.9),
    st.integers(0, 2**31),
    st.lists(st.floats(1e-4, 1e4), min_size=1, max_size=20),
)
def test_profile_is_semi_self_similar(c, seed, ts):
    prof = SelfSimilarProfile.piecewise_random(c, period_seed=seed)
    g = prof.realize()
    t = np.array(ts)
    period = prof.period
    lhs, rhs = g(period * t), period * g(t)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=0)
    order = np.argsort(t)
    assert np.all(np.diff(g(t[order])) >= 0)


@SETTINGS
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_csv_floats_round_trip(values):
    text = render_csv(["i", "v"], enumerate(values), {"seed": 1})
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "v.csv")
        with open(path, "w", newline="") as fh:
            fh.write(text)
        _, header, rows = read_csv(path)
    assert header == ["i", "v"]
    assert [float(r[1]) for r in rows] == [float(v) for v in values]


@SETTINGS
@given(st.dictionaries(st.text(min_size=1, max_size=5), st.integers(), max_size=6))
def test_config_hash_ignores_key_order(d):
    assert config_hash(d) == config_hash(dict(reversed(list(d.items()))))
