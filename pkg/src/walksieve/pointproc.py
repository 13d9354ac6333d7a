"""Point patterns, thinning by walks, and stability under thinning.

A pattern ``X_1 <= X_2 <= ...`` is *a-stable* when ``a * (X o R)`` has the
law of ``X``, where ``X o R`` keeps the points at indices ``R(1), R(2), ...``
of an independent walk.  Stability is checked on finitely many marginals by
:func:`stability_test`, which takes a *pattern model*: an object whose
``at(indices, rng)`` returns the points of fresh iid patterns at the given
(1-based, per-row increasing) indices.  Lazy models never materialise the
points they skip, so thinning by heavy-tailed walks costs nothing extra.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, HypothesisError, InsufficientPoints
from .gwp import (
    DEFAULT_N_FIXED,
    validate_finite_mean,
    validate_sibuya,
    z_infty_sample,
    z_infty_sums,
)
from .increments import IncrementLaw, sample_float
from .rng import substream
from .sieve import WalkPath
from .stats import KS_THRESHOLD, Check, TestReport, ks_distance


@dataclass(frozen=True)
class PointPattern:
    points: np.ndarray
    truncation: float = math.inf

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size and (np.any(np.diff(pts) < 0) or pts[0] < 0 or not np.all(np.isfinite(pts))):
            raise ValueError("points must be finite, non-negative and nondecreasing")
        if pts.size and pts[-1] > self.truncation:
            raise ValueError("points must not exceed the truncation horizon")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "truncation", float(self.truncation))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointPattern):
            return NotImplemented
        return self.truncation == other.truncation and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.points.tobytes(), self.truncation))

    def at(self, k):
        """Point ``X_k`` (1-based); ``k`` may be an array."""
        k = np.asarray(k, dtype=np.int64)
        if np.any(k < 1) or np.any(k > len(self)):
            raise InsufficientPoints(f"pattern has {len(self)} points, index {int(np.max(k))} requested")
        return self.points[k - 1]


def thin(pattern: PointPattern, walk: WalkPath) -> PointPattern:
    """Keep the points at indices ``R(1), R(2), ...`` that exist in the pattern."""
    if len(pattern) == 0:
        raise ValueError("cannot thin an empty pattern")
    idx = walk.upto(len(pattern))
    return PointPattern(pattern.points[idx - 1], pattern.truncation)


def scale(pattern: PointPattern, a: float) -> PointPattern:
    if not a > 0:
        raise ValueError("scale factor must be positive")
    return PointPattern(pattern.points * a, pattern.truncation * a)


def poisson_pattern(rate: float, horizon: float, rng) -> PointPattern:
    """Homogeneous Poisson pattern on ``[0, horizon]``."""
    n = rng.poisson(rate * horizon)
    return PointPattern(np.sort(rng.uniform(0.0, horizon, n)), horizon)


# ---------------------------------------------------------------------------
# semi-self-similar profiles


@dataclass(frozen=True)
class SelfSimilarProfile:
    """Nondecreasing ``G`` with ``G(c t) = c G(t)`` for ``c = scale_factor``.

    ``identity`` and ``power_law`` hold for every ``c``.  ``piecewise_random``
    draws a random staircase on one period of ``log_c t`` (8 uniform jump
    locations with sorted uniform heights) and repeats it, so the property
    holds pathwise for ``c = max(scale_factor, 1 / scale_factor)``.
    ``period_seed`` pins the realisation used when no stream is supplied.
    """

    kind: str = "identity"
    scale_factor: float | None = None
    beta: float | None = None
    period_seed: int | None = None
    jumps: int = 8

    def __post_init__(self):
        if self.kind not in ("identity", "power_law", "piecewise_random"):
            raise ConfigError(f"profile.kind: unknown kind {self.kind!r}")
        if self.kind == "power_law" and not (self.beta is not None and self.beta > 0):
            raise ConfigError("profile.beta: power_law needs beta > 0")
        if self.kind == "piecewise_random":
            c = self.scale_factor
            if c is None or not (c > 0 and c != 1 and math.isfinite(c)):
                raise ConfigError("profile.scale_factor: must lie in (0,1) or (1,inf)")

    @classmethod
    def identity(cls) -> SelfSimilarProfile:
        return cls("identity")

    @classmethod
    def power_law(cls, beta: float) -> SelfSimilarProfile:
        return cls("power_law", beta=beta)

    @classmethod
    def piecewise_random(cls, scale_factor: float, period_seed: int | None = None) -> SelfSimilarProfile:
        return cls("piecewise_random", scale_factor=scale_factor, period_seed=period_seed)

    @classmethod
    def from_dict(cls, d: dict) -> SelfSimilarProfile:
        allowed = {"kind", "scale_factor", "beta", "period_seed"}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"profile.{sorted(extra)[0]}: unknown field")
        return cls(**d)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.scale_factor is not None:
            d["scale_factor"] = self.scale_factor
        if self.beta is not None:
            d["beta"] = self.beta
        if self.period_seed is not None:
            d["period_seed"] = self.period_seed
        return d

    @property
    def period(self) -> float | None:
        if self.scale_factor is None:
            return None
        return max(self.scale_factor, 1.0 / self.scale_factor)

    def matches(self, c: float) -> bool:
        """Whether ``G(c t) = c G(t)`` holds for this profile."""
        if self.kind != "piecewise_random":
            return True
        return math.isclose(self.period, max(c, 1.0 / c), rel_tol=1e-9)

    def realize(self, rng=None, size: int | None = None) -> ProfileRealization:
        """Draw ``size`` independent copies of ``G`` (one if ``size`` is None)."""
        rows = 1 if size is None else int(size)
        if self.kind != "piecewise_random":
            return ProfileRealization(self, rows, size is None)
        if rng is None:
            if self.period_seed is None:
                raise ValueError("piecewise_random needs a stream or a period_seed")
            rng = substream(self.period_seed, "profile")
        locs = np.sort(rng.random((rows, self.jumps)), axis=1)
        levels = np.zeros((rows, self.jumps + 1))
        levels[:, 1:] = np.sort(rng.random((rows, self.jumps)), axis=1)
        return ProfileRealization(self, rows, size is None, locs, levels)


@dataclass
class ProfileRealization:
    profile: SelfSimilarProfile
    rows: int
    single: bool
    locs: np.ndarray | None = None
    levels: np.ndarray | None = None

    def __call__(self, t):
        """Evaluate ``G``; ``t`` has shape ``(rows, k)`` (or anything for a single copy)."""
        t = np.asarray(t, dtype=float)
        p = self.profile
        if p.kind == "identity":
            return t.copy()
        if p.kind == "power_law":
            return t**p.beta
        shape = t.shape
        tt = t.reshape(1, -1) if self.single else t.reshape(self.rows, -1)
        c = p.period
        with np.errstate(divide="ignore"):
            u = np.log(tt) / math.log(c)
        pos = tt > 0
        u = np.where(pos, u, 0.0)
        # period boundaries c^k must not fall on the wrong side through rounding
        near = np.rint(u)
        u = np.where(np.abs(u - near) < 1e-10, near, u)
        k = np.floor(u)
        frac = u - k
        j = (self.locs[:, None, :] <= frac[:, :, None]).sum(axis=2)
        h = np.take_along_axis(self.levels, j, axis=1)
        g = np.where(pos, c ** (k + h), 0.0)
        return g.reshape(shape)


# ---------------------------------------------------------------------------
# constructive stable patterns


def make_stable_finite_mean(
    law: IncrementLaw,
    profile: SelfSimilarProfile,
    k_points: int,
    seed: int,
    n_fixed: int = DEFAULT_N_FIXED,
) -> PointPattern:
    """``X_j = G(Z_1 + ... + Z_j)`` with iid martingale-limit proxies ``Z_i``.

    Stable for the walk with increment ``law`` at ``a = 1/mu`` (or
    ``mu^-beta`` for a power-law profile).
    """
    validate_finite_mean(law)
    if not profile.matches(law.mu):
        raise HypothesisError(f"profile scale factor {profile.scale_factor} does not match mu={law.mu}")
    if k_points < 1:
        raise ValueError("k_points must be positive")
    rng = substream(seed, "stable-finite")
    sums = np.cumsum(z_infty_sample(law, rng, int(k_points), n_fixed))
    g = profile.realize(None if profile.period_seed is not None else substream(seed, "stable-finite", "profile"))
    pts = g(sums)
    return PointPattern(pts, float(pts[-1]))


def _sibuya_alpha(alpha) -> float:
    if isinstance(alpha, IncrementLaw):
        validate_sibuya(alpha)
        return alpha.alpha
    alpha = float(alpha)
    if not 0 < alpha < 1:
        raise HypothesisError(f"Sibuya parameter must lie in (0,1), got {alpha}")
    return alpha


def make_stable_infinite_mean(alpha, profile: SelfSimilarProfile, k_points: int, seed: int) -> PointPattern:
    """``X_j = G(E_1 v ... v E_j)`` with iid Exp(1) ``E_i``.

    ``alpha`` is the Sibuya parameter or a Sibuya :class:`IncrementLaw`;
    other heavy-tailed laws have no closed-form limit and are rejected.
    """
    alpha = _sibuya_alpha(alpha)
    if not profile.matches(alpha):
        raise HypothesisError(f"profile scale factor {profile.scale_factor} does not match alpha={alpha}")
    if k_points < 1:
        raise ValueError("k_points must be positive")
    rng = substream(seed, "stable-infinite")
    maxima = np.maximum.accumulate(rng.standard_exponential(int(k_points)))
    g = profile.realize(None if profile.period_seed is not None else substream(seed, "stable-infinite", "profile"))
    pts = g(maxima)
    return PointPattern(pts, float(pts[-1]))


# ---------------------------------------------------------------------------
# pattern models


def _gaps(indices: np.ndarray) -> np.ndarray:
    return np.diff(indices, axis=1, prepend=0.0)


class PoissonModel:
    """Homogeneous Poisson pattern: ``X_k`` is a Gamma(k) sum."""

    def __init__(self, rate: float = 1.0):
        self.rate = float(rate)

    def at(self, indices, rng):
        return np.cumsum(rng.standard_gamma(_gaps(indices)), axis=1) / self.rate


class LatticeModel:
    """Deterministic pattern ``X_k = k``."""

    def at(self, indices, rng):
        return np.asarray(indices, dtype=float).copy()


class FiniteMeanStableModel:
    """Patterns of :func:`make_stable_finite_mean`, each with its own ``G``."""

    def __init__(self, law: IncrementLaw, profile: SelfSimilarProfile | None = None, n_fixed: int = DEFAULT_N_FIXED):
        validate_finite_mean(law)
        self.law = law
        self.profile = profile or SelfSimilarProfile.identity()
        if not self.profile.matches(law.mu):
            raise HypothesisError(f"profile scale factor does not match mu={law.mu}")
        self.n_fixed = n_fixed

    def at(self, indices, rng):
        gaps = np.rint(_gaps(indices)).astype(np.int64)
        sums = np.cumsum(z_infty_sums(self.law, gaps, rng, self.n_fixed), axis=1)
        return self.profile.realize(rng, sums.shape[0])(sums)


class InfiniteMeanStableModel:
    """Patterns of :func:`make_stable_infinite_mean`, each with its own ``G``."""

    def __init__(self, alpha, profile: SelfSimilarProfile | None = None):
        self.alpha = _sibuya_alpha(alpha)
        self.profile = profile or SelfSimilarProfile.identity()
        if not self.profile.matches(self.alpha):
            raise HypothesisError(f"profile scale factor does not match alpha={self.alpha}")

    def at(self, indices, rng):
        maxima = np.maximum.accumulate(max_of_exponentials(_gaps(indices), rng), axis=1)
        return self.profile.realize(rng, maxima.shape[0])(maxima)


class MaterializedModel:
    """Wraps ``sampler(rng) -> PointPattern``; thinning past the last point is a fault."""

    def __init__(self, sampler: Callable):
        self.sampler = sampler

    def at(self, indices, rng):
        idx = np.rint(np.asarray(indices)).astype(np.int64)
        out = np.empty(idx.shape)
        for r in range(idx.shape[0]):
            pattern = self.sampler(rng)
            if idx[r, -1] > len(pattern):
                raise InsufficientPoints(
                    f"pattern with {len(pattern)} points cannot supply index {int(idx[r, -1])}; "
                    "raise the truncation horizon"
                )
            out[r] = pattern.points[idx[r] - 1]
        return out


def max_of_exponentials(m, rng):
    """Maximum of ``m`` iid Exp(1) variables by inversion (``m`` real, elementwise)."""
    m = np.asarray(m, dtype=float)
    u = rng.random(m.shape)
    return -np.log(-np.expm1(np.log(u) / m))


def _as_model(generator):
    if hasattr(generator, "at"):
        return generator
    if callable(generator):
        return MaterializedModel(generator)
    raise TypeError("generator must be a pattern model or a callable rng -> PointPattern")


def walk_indices(law: IncrementLaw, rng, rows: int, k: int) -> np.ndarray:
    """``R(1..k)`` for ``rows`` independent walks, as float64 (exact below 2**53)."""
    return np.cumsum(sample_float(law, rng, (rows, k)), axis=1)


def stability_test(
    generator,
    law: IncrementLaw,
    a: float,
    k_marginals: int = 10,
    replicas: int = 10_000,
    seed: int = 0,
    threshold: float = KS_THRESHOLD,
    reference_factor: int = 10,
    name: str = "stability",
    key: tuple = (),
) -> TestReport:
    """Compare the first ``k_marginals`` points of ``a * (X o R)`` with those of a fresh ``X``.

    Each marginal gets a two-sample KS distance and the pooled consecutive
    gaps get one more; the report passes iff every distance is below
    ``threshold``.  The fresh side uses ``reference_factor`` times as many
    patterns so that the two-sample noise stays well inside the threshold.
    """
    if not 0 < a:
        raise ValueError("stability constant must be positive")
    model = _as_model(generator)
    k = int(k_marginals)
    rng = substream(seed, "stability", *key, "thinned")
    idx = walk_indices(law, rng, int(replicas), k)
    thinned = a * model.at(idx, rng)
    ref_rng = substream(seed, "stability", *key, "fresh")
    base = np.broadcast_to(np.arange(1.0, k + 1), (int(replicas) * reference_factor, k))
    fresh = model.at(base, ref_rng)
    rep = TestReport(name, details={"a": a, "law": law.to_dict(), "k_marginals": k, "replicas": int(replicas)})
    for j in range(k):
        rep.add(Check(f"marginal_{j + 1}", ks_distance(thinned[:, j], fresh[:, j]), threshold))
    if k > 1:
        rep.add(Check("gaps", ks_distance(np.diff(thinned, axis=1), np.diff(fresh, axis=1)), threshold))
    return rep


def self_similarity_check(
    profile: SelfSimilarProfile,
    grid: Sequence[float] | None = None,
    realizations: int = 10_000,
    seed: int = 0,
    threshold: float = KS_THRESHOLD,
    key: tuple = (),
) -> TestReport:
    """Check ``(G(c t_i)) = (c G(t_i))`` on a grid for the profile's period ``c``.

    Both sides are evaluated on the same realisations, so the per-point KS
    distances also certify the pathwise identity; the largest relative
    pathwise discrepancy is reported alongside.
    """
    c = profile.period or 2.0
    t = np.asarray(grid if grid is not None else np.geomspace(0.05, 20.0, 12), dtype=float)
    g = profile.realize(substream(seed, "self-similarity", *key), realizations)
    tt = np.broadcast_to(t, (realizations, t.size))
    left = g(c * tt)
    right = c * g(tt)
    rep = TestReport("self_similarity", details={"c": c, "grid": t.tolist()})
    for i in range(t.size):
        rep.add(Check(f"t_{i}", ks_distance(left[:, i], right[:, i]), threshold))
    denom = np.maximum(np.abs(right), 1e-300)
    rep.add(Check("pathwise_rel_error", float(np.max(np.abs(left - right) / denom)), 1e-9))
    return rep


# ---------------------------------------------------------------------------
# records and clusters


def cluster_stats(pattern, tolerance: float = 0.0) -> list[tuple[float, int]]:
    """Group sorted points into clusters of spread at most ``tolerance``.

    A cluster is located at its first point; a new cluster starts at the
    first point more than ``tolerance`` above that location.
    """
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    pts = pattern.points if isinstance(pattern, PointPattern) else np.asarray(pattern, dtype=float)
    out: list[tuple[float, int]] = []
    if pts.size == 0:
        return out
    if tolerance == 0:
        vals, counts = np.unique(pts, return_counts=True)
        return [(float(v), int(c)) for v, c in zip(vals, counts)]
    start, count = float(pts[0]), 0
    for p in pts:
        if p - start > tolerance:
            out.append((start, count))
            start, count = float(p), 0
        count += 1
    out.append((start, count))
    return out


def exp_running_maxima(k: int, rng, size: int) -> np.ndarray:
    return np.maximum.accumulate(rng.standard_exponential((size, k)), axis=1)


def distinct_counts(rows: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
    """Number of clusters in each row of nondecreasing values."""
    rows = np.atleast_2d(rows)
    return 1 + (np.diff(rows, axis=1) > tolerance).sum(axis=1)


def record_values(rows: np.ndarray) -> list[np.ndarray]:
    """Distinct values of each row of running maxima."""
    rows = np.atleast_2d(rows)
    keep = np.concatenate([np.ones((rows.shape[0], 1), bool), np.diff(rows, axis=1) > 0], axis=1)
    return [r[m] for r, m in zip(rows, keep)]


def first_cluster(rows: np.ndarray, rel_tolerance: float = 0.0):
    """Location and multiplicity of the first cluster in each row.

    The cluster is every point within ``rel_tolerance * |location|`` of the
    first point.  Multiplicities equal to the row length are censored.
    """
    rows = np.atleast_2d(rows)
    loc = rows[:, 0]
    mult = (rows - loc[:, None] <= rel_tolerance * np.abs(loc)[:, None]).sum(axis=1)
    return loc, mult
