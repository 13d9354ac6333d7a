"""Galton-Watson processes whose offspring law is the walk increment.

Generation ``n`` started from ``j`` ancestors has the law of the ``j``-th
survivor label after ``n`` sieve rounds, so this module supplies both the
normalised limits (``mu^-n Z_n`` and ``alpha^n log Z_n``) and the fast batch
route to survivor labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import HypothesisError, IndexOverflow, ResourceFault
from .increments import MAX_INT, IncrementLaw, Kind, sample, sample_log, xlogx_moment

# exact generic steps draw at most this many increments per batch
MAX_DRAWS = 20_000_000

DEFAULT_N_FIXED = 14


def validate_finite_mean(law: IncrementLaw) -> None:
    """Raise :class:`HypothesisError` unless ``mu`` is in (1, inf) and ``E xi log xi`` is finite."""
    mu = law.mu
    if law.is_degenerate or not (1.0 < mu < math.inf):
        raise HypothesisError(f"μ ∈ (1,∞) violated for {law} (mu={mu})")
    if not math.isfinite(xlogx_moment(law)):
        raise HypothesisError(f"E ξ log ξ < ∞ violated for {law}")


def validate_davies(law: IncrementLaw) -> None:
    if law.tail_alpha is None:
        raise HypothesisError(f"Davies tail condition violated for {law}: no tail index in (0,1)")


def validate_sibuya(law: IncrementLaw) -> None:
    validate_davies(law)
    if law.kind is not Kind.SIBUYA:
        raise HypothesisError(
            f"closed-form limit only available for Sibuya laws, got {law} "
            "(no constructive Z* for other Davies-class laws)"
        )


@dataclass
class GWTrajectory:
    """Generation sizes of one process, exact integers or natural logs."""

    law: IncrementLaw
    mode: str = "exact"
    sizes: list[int] = field(default_factory=list)
    log_sizes: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("exact", "log"):
            raise ValueError("mode must be 'exact' or 'log'")

    @property
    def generations(self) -> int:
        if self.mode == "exact":
            return len(self.sizes) - 1
        return len(self.log_sizes) - 1

    def logs(self) -> np.ndarray:
        if self.mode == "log":
            return np.asarray(self.log_sizes, dtype=float)
        return np.log(np.asarray(self.sizes, dtype=float))


def gw_step(sizes, law: IncrementLaw, rng, censor: int | None = None):
    """One generation: each entry of ``sizes`` is replaced by the sum of that many increments.

    With ``censor`` set, populations already above it are carried over
    unchanged and individual draws above it are truncated to ``censor + 1``;
    any result above ``censor`` then only means "more than censor".
    Raises :class:`IndexOverflow` if an exact result would pass 2**62.
    """
    scalar = np.ndim(sizes) == 0
    sizes = np.atleast_1d(np.asarray(sizes, dtype=np.int64))
    if np.any(sizes < 1):
        raise ValueError("population sizes must be >= 1")
    out = sizes.copy()
    if law.is_degenerate:
        return int(out[0]) if scalar else out
    todo = np.ones(sizes.shape, dtype=bool) if censor is None else sizes <= censor
    m = sizes[todo]
    if m.size:
        if law.kind is Kind.GEOMETRIC:
            if np.any(m.astype(float) * 1.5 / law.p + 64 > MAX_INT):
                raise IndexOverflow("geometric generation would exceed 2**62")
            # sum of m geometric steps = m + failures before the m-th success
            out[todo] = m + rng.negative_binomial(m, law.p)
        else:
            out[todo] = _sum_draws(m, law, rng, censor)
    return int(out[0]) if scalar else out


def _sum_draws(m: np.ndarray, law: IncrementLaw, rng, censor):
    if np.any(m > MAX_DRAWS):
        raise ResourceFault(
            f"exact generation needs {int(m.max())} draws in one family; "
            "use the closed-form or log-domain route"
        )
    res = np.empty(m.shape, dtype=np.int64)
    start = 0
    while start < m.size:
        cums = np.cumsum(m[start:])
        stop = start + max(1, int(np.searchsorted(cums, MAX_DRAWS, side="right")))
        block = m[start:stop]
        draws = sample(law, rng, int(block.sum()), cap=censor if censor is not None else MAX_INT)
        if censor is None and np.any(draws > MAX_INT):
            raise IndexOverflow(f"{law} draw exceeds 2**62 in exact mode")
        offsets = np.concatenate([[0], np.cumsum(block)[:-1]])
        fsum = np.add.reduceat(draws.astype(float), offsets)
        if censor is None and np.any(fsum >= MAX_INT):
            raise IndexOverflow("generation size exceeds 2**62 in exact mode")
        res[start:stop] = np.add.reduceat(draws, offsets)
        start = stop
    return res


def gw_generations(law: IncrementLaw, n: int, rng, size: int = 1, ancestors=1, censor: int | None = None):
    """Matrix of generation sizes ``Z_0..Z_n`` (shape ``(size, n + 1)``)."""
    z = np.broadcast_to(np.asarray(ancestors, dtype=np.int64), (size,)).copy()
    out = np.empty((size, n + 1), dtype=np.int64)
    out[:, 0] = z
    for k in range(1, n + 1):
        z = gw_step(z, law, rng, censor=censor)
        out[:, k] = z
    return out


def positive_stable_log(alpha: float, rng, size=None):
    """Log of positive stable draws with Laplace transform ``exp(-s**alpha)`` (Kanter's representation)."""
    u = np.asarray(rng.uniform(0.0, math.pi, size=size), dtype=float)
    e = np.asarray(rng.standard_exponential(size=size), dtype=float)
    log_a = (
        alpha * np.log(np.sin(alpha * u)) + (1 - alpha) * np.log(np.sin((1 - alpha) * u)) - np.log(np.sin(u))
    ) / (1 - alpha)
    out = (1 - alpha) / alpha * (log_a - np.log(e))
    return float(out) if size is None else out


def _stable_scale_log(law: IncrementLaw) -> float:
    # P{xi > x} ~ C x^-alpha  =>  sum of m draws ~ (C Gamma(1-alpha) m)^(1/alpha) * stable
    a = law.alpha
    if law.kind is Kind.SIBUYA:
        return 0.0
    return math.log(law.shift + 1) + gammaln(1 - a) / a


def gw_log_generations(law: IncrementLaw, n: int, rng, size: int = 1, direct_limit: int = 10_000):
    """Log generation sizes for heavy-tailed laws (shape ``(size, n + 1)``).

    Populations up to ``direct_limit`` are summed draw by draw in log space;
    larger ones use the stable approximation ``log Z' = log(m)/alpha +
    log(scale) + log(Y)`` with ``Y`` positive stable, which is the
    generalised central limit for ``m`` iid draws with tail index alpha.
    """
    validate_davies(law)
    a = law.alpha
    shift = _stable_scale_log(law)
    logz = np.zeros(size)
    out = np.zeros((size, n + 1))
    for k in range(1, n + 1):
        small = logz <= math.log(direct_limit)
        new = np.empty(size)
        if small.any():
            m = np.rint(np.exp(logz[small])).astype(np.int64)
            logs = sample_log(law, rng, int(m.sum()))
            offsets = np.concatenate([[0], np.cumsum(m)[:-1]])
            top = np.maximum.reduceat(logs, offsets)
            rep = np.repeat(top, m)
            new[small] = top + np.log(np.add.reduceat(np.exp(logs - rep), offsets))
        big = ~small
        if big.any():
            new[big] = logz[big] / a + shift + positive_stable_log(a, rng, int(big.sum()))
        logz = new
        out[:, k] = logz
    return out


def simulate_gw(law: IncrementLaw, n: int, rng, mode: str = "exact", direct_limit: int = 10_000) -> GWTrajectory:
    """One trajectory from a single ancestor.

    ``exact`` keeps integer sizes (overflow fault past 2**62); ``log``
    follows :func:`gw_log_generations` and is meant for infinite-mean laws.
    """
    if mode == "exact":
        sizes = [1]
        z = 1
        for _ in range(n):
            z = gw_step(z, law, rng)
            sizes.append(int(z))
        return GWTrajectory(law, "exact", sizes=sizes)
    logs = gw_log_generations(law, n, rng, 1, direct_limit)[0]
    return GWTrajectory(law, "log", log_sizes=logs)


def mart_normalized(traj, mu: float) -> np.ndarray:
    """``mu^-k Z_k`` along the last axis (accepts a trajectory or a size array)."""
    if isinstance(traj, GWTrajectory):
        if traj.mode != "exact":
            raise ValueError("martingale normalisation needs exact sizes")
        z = np.asarray(traj.sizes, dtype=float)
    else:
        z = np.asarray(traj, dtype=float)
    k = np.arange(z.shape[-1])
    return z * float(mu) ** -k


def log_normalized(traj, alpha: float) -> np.ndarray:
    """``alpha^k log Z_k`` along the last axis."""
    logs = traj.logs() if isinstance(traj, GWTrajectory) else np.asarray(traj, dtype=float)
    k = np.arange(logs.shape[-1])
    return logs * float(alpha) ** k


def log_normalized_sibuya(alpha: float, n: int, rng, size=None):
    """``alpha^n log Z_n`` with ``Z_n`` drawn directly as Sibuya(alpha^n)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if n == 0:
        return 0.0 if size is None else np.zeros(size)
    beta = alpha**n
    logs = sample_log(IncrementLaw.sibuya(beta), rng, size)
    return beta * logs


def z_infty_sample(law: IncrementLaw, rng, size=None, n_fixed: int = DEFAULT_N_FIXED):
    """Proxy draws of the martingale limit: ``mu^-n_fixed Z_n_fixed``."""
    validate_finite_mean(law)
    k = 1 if size is None else int(size)
    z = gw_generations(law, n_fixed, rng, k)[:, -1]
    out = z.astype(float) * law.mu**-n_fixed
    return float(out[0]) if size is None else out


def z_infty_sums(law: IncrementLaw, counts, rng, n_fixed: int = DEFAULT_N_FIXED):
    """Sums of ``counts`` iid proxies of the martingale limit, elementwise.

    A sum of ``d`` independent copies of ``Z_n`` is generation ``n`` grown
    from ``d`` ancestors, so no individual proxies are drawn.
    """
    validate_finite_mean(law)
    counts = np.asarray(counts, dtype=np.int64)
    flat = counts.ravel()
    z = flat.copy()
    for _ in range(n_fixed):
        z = gw_step(z, law, rng)
    return (z.astype(float) * law.mu**-n_fixed).reshape(counts.shape)
