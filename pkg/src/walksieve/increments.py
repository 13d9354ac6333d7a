"""Increment laws on {1, 2, ...} for the sieve walks.

Each law gives exact pmf/survival values and exact samplers.  Heavy-tailed
laws (Sibuya, lattice Pareto) also expose ``sample_log``, which returns the
natural log of the draw and stays finite where the integer itself would not
fit in 64 bits.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, IndexOverflow

# Largest integer draw handed out by ``sample``; partial sums of a few such
# values still fit in int64.
MAX_INT = 2**62

# Sibuya inversion switches to the continuous asymptotic survival above this.
SIBUYA_EXACT_LIMIT = 2**40

_SIBUYA_TABLE = 1024


class Kind(str, enum.Enum):
    GEOMETRIC = "geometric"
    SIBUYA = "sibuya"
    DAVIES_PARETO = "davies_pareto"
    EXPLICIT = "explicit"
    DEGENERATE_ONE = "degenerate_one"


@dataclass(frozen=True)
class IncrementLaw:
    """Distribution of the generic walk increment.

    Build instances with the classmethod constructors rather than directly.
    ``DEGENERATE_ONE`` (the point mass at 1) violates ``p_1 < 1`` and exists
    only so the identity sieve can be tested; limit-theorem code rejects it.
    """

    kind: Kind
    p: float | None = None
    alpha: float | None = None
    shift: int = 0
    weights: tuple[float, ...] | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.GEOMETRIC:
            if self.p is None or not 0.0 < self.p < 1.0:
                raise ConfigError(f"law.p: geometric law needs p in (0, 1), got {self.p!r}")
        elif kind in (Kind.SIBUYA, Kind.DAVIES_PARETO):
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ConfigError(f"law.alpha: {kind.value} law needs alpha in (0, 1), got {self.alpha!r}")
            if kind is Kind.DAVIES_PARETO and (int(self.shift) != self.shift or self.shift < 0):
                raise ConfigError("law.shift: davies_pareto shift must be a non-negative integer")
            object.__setattr__(self, "shift", int(self.shift))
        elif kind is Kind.EXPLICIT:
            if self.weights is None or len(self.weights) == 0:
                raise ConfigError("law.weights: explicit law needs a non-empty list")
            w = np.asarray(self.weights, dtype=float)
            if np.any(~np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
                raise ConfigError("law.weights: must be finite, non-negative and not all zero")
            w = w / w.sum()
            if w[0] >= 1.0:
                raise ConfigError("law.weights: p_1 < 1 violated (use degenerate_one for the identity sieve)")
            object.__setattr__(self, "weights", tuple(float(x) for x in w))

    @classmethod
    def geometric(cls, p: float) -> IncrementLaw:
        return cls(Kind.GEOMETRIC, p=float(p))

    @classmethod
    def sibuya(cls, alpha: float) -> IncrementLaw:
        return cls(Kind.SIBUYA, alpha=float(alpha))

    @classmethod
    def davies_pareto(cls, alpha: float, shift: int = 0) -> IncrementLaw:
        return cls(Kind.DAVIES_PARETO, alpha=float(alpha), shift=shift)

    @classmethod
    def explicit(cls, weights) -> IncrementLaw:
        return cls(Kind.EXPLICIT, weights=tuple(float(x) for x in weights))

    @classmethod
    def degenerate_one(cls) -> IncrementLaw:
        return cls(Kind.DEGENERATE_ONE)

    @property
    def mu(self) -> float:
        """Mean increment; ``inf`` for the Davies-class laws."""
        if self.kind is Kind.GEOMETRIC:
            return 1.0 / self.p
        if self.kind is Kind.EXPLICIT:
            return float(np.dot(np.arange(1, len(self.weights) + 1), self.weights))
        if self.kind is Kind.DEGENERATE_ONE:
            return 1.0
        return math.inf

    @property
    def tail_alpha(self) -> float | None:
        if self.kind in (Kind.SIBUYA, Kind.DAVIES_PARETO):
            return self.alpha
        return None

    @property
    def finite_mean(self) -> bool:
        return math.isfinite(self.mu)

    @property
    def is_degenerate(self) -> bool:
        return self.kind is Kind.DEGENERATE_ONE

    @property
    def p1(self) -> float:
        return float(pmf(self, 1))

    def to_dict(self) -> dict:
        if self.kind is Kind.GEOMETRIC:
            return {"kind": "geometric", "p": self.p}
        if self.kind is Kind.SIBUYA:
            return {"kind": "sibuya", "alpha": self.alpha}
        if self.kind is Kind.DAVIES_PARETO:
            return {"kind": "davies_pareto", "alpha": self.alpha, "shift": self.shift}
        if self.kind is Kind.EXPLICIT:
            return {"kind": "explicit", "weights": list(self.weights)}
        return {"kind": "degenerate_one"}

    def __str__(self) -> str:
        d = self.to_dict()
        args = ", ".join(f"{k}={v}" for k, v in d.items() if k != "kind")
        return f"{d['kind']}({args})"


_DESCRIPTOR_KEYS = {
    "geometric": ({"p"}, set()),
    "sibuya": ({"alpha"}, set()),
    "davies_pareto": ({"alpha"}, {"shift"}),
    "explicit": ({"weights"}, set()),
    "degenerate_one": (set(), set()),
}


def law_from_dict(desc) -> IncrementLaw:
    """Parse a JSON law descriptor such as ``{"kind": "sibuya", "alpha": 0.5}``."""
    if isinstance(desc, IncrementLaw):
        return desc
    if not isinstance(desc, dict):
        raise ConfigError("law: expected an object with a 'kind' field")
    if "kind" not in desc:
        raise ConfigError("law.kind: missing field")
    kind = desc["kind"]
    if kind not in _DESCRIPTOR_KEYS:
        raise ConfigError(f"law.kind: unknown kind {kind!r}; expected one of {sorted(_DESCRIPTOR_KEYS)}")
    required, optional = _DESCRIPTOR_KEYS[kind]
    keys = set(desc) - {"kind"}
    missing = required - keys
    if missing:
        raise ConfigError(f"law.{sorted(missing)[0]}: missing field for kind {kind!r}")
    unknown = keys - required - optional
    if unknown:
        raise ConfigError(f"law.{sorted(unknown)[0]}: unknown field for kind {kind!r}")
    try:
        if kind == "geometric":
            return IncrementLaw.geometric(desc["p"])
        if kind == "sibuya":
            return IncrementLaw.sibuya(desc["alpha"])
        if kind == "davies_pareto":
            return IncrementLaw.davies_pareto(desc["alpha"], desc.get("shift", 0))
        if kind == "explicit":
            return IncrementLaw.explicit(desc["weights"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"law: {exc}") from exc
    return IncrementLaw.degenerate_one()


# ---------------------------------------------------------------------------
# Sibuya survival in log domain


@functools.lru_cache(maxsize=64)
def _sibuya_table(alpha: float) -> np.ndarray:
    # log prod_{j<=n} (1 - alpha/j) for n = 0.._SIBUYA_TABLE-1
    j = np.arange(1, _SIBUYA_TABLE, dtype=float)
    out = np.zeros(_SIBUYA_TABLE)
    out[1:] = np.cumsum(np.log1p(-alpha / j))
    out.setflags(write=False)
    return out


def sibuya_log_survival(alpha: float, n) -> np.ndarray:
    """``log P{xi > n}`` for Sibuya(alpha), accurate to ~1e-15 relative for all n >= 0.

    Small n use the cumulative product directly; large n use a Stirling
    expansion of ``log Gamma(n+1-alpha) - log Gamma(n+1)`` written so that
    no two large quantities are subtracted.
    """
    n = np.asarray(n, dtype=float)
    out = np.empty(n.shape)
    small = n < _SIBUYA_TABLE
    table = _sibuya_table(float(alpha))
    out[small] = table[np.maximum(n[small], 0).astype(np.int64)]
    x = n[~small] + 1.0
    if x.size:
        a = alpha
        xa = x - a
        d = (x - 0.5) * np.log1p(-a / x) - a * np.log(xa) + a
        d += (1.0 / xa - 1.0 / x) / 12.0
        d -= (1.0 / xa**3 - 1.0 / x**3) / 360.0
        d += (1.0 / xa**5 - 1.0 / x**5) / 1260.0
        out[~small] = d - gammaln(1.0 - a)
    return out


def _sibuya_invert(alpha: float, e: np.ndarray):
    """Smallest n with ``-log S(n) > e``; returns (ints, logs, asymptotic_mask)."""
    neg_table = -_sibuya_table(float(alpha))
    idx = np.searchsorted(neg_table, e, side="right")
    ints = idx.astype(np.int64)
    logs = np.log(np.maximum(ints, 1).astype(float))
    far = idx >= _SIBUYA_TABLE
    asym = np.zeros(e.shape, dtype=bool)
    if far.any():
        ef = e[far]
        top = -sibuya_log_survival(alpha, float(SIBUYA_EXACT_LIMIT))
        beyond = ef >= top
        lo = np.full(ef.shape, _SIBUYA_TABLE - 1, dtype=np.int64)
        hi = np.full(ef.shape, SIBUYA_EXACT_LIMIT, dtype=np.int64)
        # invariant: -logS(lo) <= e < -logS(hi) for the exact-regime entries
        for _ in range(41):
            active = (hi - lo > 1) & ~beyond
            if not active.any():
                break
            mid = (lo + hi) // 2
            over = -sibuya_log_survival(alpha, mid) > ef
            hi = np.where(active & over, mid, hi)
            lo = np.where(active & ~over, mid, lo)
        fi = np.where(beyond, 0, hi)
        fl = np.where(beyond, (ef - gammaln(1.0 - alpha)) / alpha, np.log(np.maximum(hi, 1).astype(float)))
        ints[far] = fi
        logs[far] = fl
        asym[far] = beyond
    return ints, logs, asym


def _alias_table(probs: np.ndarray):
    k = len(probs)
    scaled = probs * k
    prob = np.ones(k)
    alias = np.arange(k)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    return prob, alias


def _draw(law: IncrementLaw, rng, size):
    """Core sampler: (int64 values, log values, overflow mask)."""
    if rng is None:
        raise ValueError("sampling requires an initialised random stream")
    shape = () if size is None else size
    kind = law.kind
    if kind is Kind.DEGENERATE_ONE:
        ints = np.ones(shape, dtype=np.int64)
        return ints, np.zeros(shape), np.zeros(shape, dtype=bool)
    if kind is Kind.EXPLICIT:
        table = law._cache.get("alias")
        if table is None:
            table = law._cache.setdefault("alias", _alias_table(np.asarray(law.weights)))
        prob, alias = table
        i = rng.integers(len(prob), size=shape)
        u = rng.random(size=shape)
        ints = (np.where(u < prob[i], i, alias[i]) + 1).astype(np.int64)
        return ints, np.log(ints.astype(float)), np.zeros(shape, dtype=bool)
    e = rng.standard_exponential(size=shape)
    e = np.asarray(e, dtype=float)
    if kind is Kind.GEOMETRIC:
        val = np.floor(e / -math.log1p(-law.p)) + 1.0
        huge = val >= MAX_INT
        ints = np.where(huge, 0, val).astype(np.int64)
        return ints, np.log(val), huge
    if kind is Kind.SIBUYA:
        ints, logs, asym = _sibuya_invert(law.alpha, np.atleast_1d(e))
        # continuous tail: integer draw is the first lattice point past n*
        nstar = np.exp(np.minimum(logs, 700.0))
        huge = asym & (nstar >= MAX_INT - 1)
        ints = np.where(asym & ~huge, np.floor(nstar) + 1, ints).astype(np.int64)
        ints = np.where(huge, 0, ints)
        return ints.reshape(shape), logs.reshape(shape), huge.reshape(shape)
    # lattice Pareto: P{xi > n} = min(1, (n / s0)^-alpha), s0 = shift + 1
    s0 = law.shift + 1
    lstar = math.log(s0) + e / law.alpha
    exact = lstar < math.log(2.0**52)
    val = np.floor(np.exp(np.minimum(lstar, 36.0))) + 1.0
    logs = np.where(exact, np.log(val), lstar)
    huge = lstar >= math.log(MAX_INT - 1)
    ints = np.where(huge, 0, np.where(exact, val, np.floor(np.exp(np.minimum(lstar, 43.0))) + 1)).astype(np.int64)
    return ints, logs, huge


def sample(law: IncrementLaw, rng: np.random.Generator, size=None, cap: int | None = None):
    """Exact draws of the increment.

    With ``cap`` set, every draw larger than ``cap`` is reported as
    ``cap + 1`` (censoring); without it, a draw beyond 2**62 raises
    :class:`IndexOverflow`.
    """
    ints, _, huge = _draw(law, rng, size)
    if cap is not None:
        cap = int(cap)
        ints = np.where(huge | (ints > cap), cap + 1, ints)
    elif np.any(huge):
        raise IndexOverflow(f"{law} draw exceeds 2**62; use sample_log or a cap")
    if size is None:
        return int(ints)
    return ints


def sample_log(law: IncrementLaw, rng: np.random.Generator, size=None):
    """Natural log of exact draws (continuous asymptotic tail for huge Sibuya draws)."""
    _, logs, _ = _draw(law, rng, size)
    if size is None:
        return float(logs)
    return logs


def sample_float(law: IncrementLaw, rng: np.random.Generator, size=None):
    """Draws as float64: exact below 2**53, ``exp`` of the log draw beyond 2**62."""
    ints, logs, huge = _draw(law, rng, size)
    out = np.where(huge, np.exp(logs), ints.astype(float))
    return float(out) if size is None else out


# ---------------------------------------------------------------------------
# pmf / survival


def survival(law: IncrementLaw, n):
    """``P{xi > n}``."""
    scalar = np.ndim(n) == 0
    n = np.asarray(n, dtype=float)
    kind = law.kind
    if kind is Kind.GEOMETRIC:
        out = np.where(n < 0, 1.0, np.exp(np.maximum(n, 0) * math.log1p(-law.p)))
    elif kind is Kind.SIBUYA:
        out = np.exp(sibuya_log_survival(law.alpha, np.maximum(n, 0)))
    elif kind is Kind.DAVIES_PARETO:
        s0 = law.shift + 1
        with np.errstate(divide="ignore"):
            out = np.where(n <= s0, 1.0, (np.maximum(n, 1) / s0) ** -law.alpha)
    elif kind is Kind.EXPLICIT:
        w = np.asarray(law.weights)
        tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])  # tail[i] = P{xi >= i+1}
        k = np.clip(np.floor(n), 0, len(w)).astype(np.int64)
        out = np.where(n < 1, 1.0, tail[k])
    else:
        out = np.where(n < 1, 1.0, 0.0)
    return float(out) if scalar else out


def cdf(law: IncrementLaw, n):
    s = survival(law, n)
    return 1.0 - s


def pmf(law: IncrementLaw, n):
    """``P{xi = n}``; zero off the support."""
    scalar = np.ndim(n) == 0
    n = np.asarray(n)
    nf = n.astype(float)
    valid = (nf >= 1) & (nf == np.floor(nf))
    kind = law.kind
    if kind is Kind.GEOMETRIC:
        out = law.p * np.exp((np.maximum(nf, 1) - 1) * math.log1p(-law.p))
    elif kind is Kind.SIBUYA:
        # S(n-1) - S(n) = S(n-1) * alpha / n, no cancellation
        m = np.maximum(nf, 1)
        out = np.exp(np.log(law.alpha / m) + sibuya_log_survival(law.alpha, m - 1))
    elif kind is Kind.DAVIES_PARETO:
        s0 = law.shift + 1
        m = np.maximum(nf, 1)
        prev = np.where(m - 1 <= s0, 1.0, (np.maximum(m - 1, s0) / s0) ** -law.alpha)
        cur = np.where(m <= s0, 1.0, (np.maximum(m, s0) / s0) ** -law.alpha)
        # for m-1 >= s0 use prev * (1 - ((m-1)/m)^alpha) to avoid cancellation
        ratio = -np.expm1(-law.alpha * np.log1p(1.0 / np.maximum(m - 1, 1)))
        out = np.where(m - 1 >= s0, prev * ratio, prev - cur)
    elif kind is Kind.EXPLICIT:
        w = np.asarray(law.weights)
        k = np.clip(nf, 1, len(w)).astype(np.int64) - 1
        out = np.where(nf <= len(w), w[k], 0.0)
    else:
        out = np.where(nf == 1, 1.0, 0.0)
    out = np.where(valid, out, 0.0)
    return float(out) if scalar else out


def xlogx_moment(law: IncrementLaw, truncation: int = 10**8) -> float:
    """``E xi log xi`` by direct summation; ``inf`` when it diverges.

    Infinite-mean laws diverge trivially.  For the geometric law the sum is
    cut where the survival drops below 1e-20 (never beyond ``truncation``)
    and the remainder is bounded by ``sum_{n>N} n^2 p q^(n-1)``.
    """
    if not law.finite_mean:
        return math.inf
    if law.kind is Kind.DEGENERATE_ONE:
        return 0.0
    if law.kind is Kind.EXPLICIT:
        n = np.arange(1, len(law.weights) + 1, dtype=float)
        return float(np.sum(n * np.log(n) * np.asarray(law.weights)))
    q = 1.0 - law.p
    stop = min(truncation, int(math.ceil(math.log(1e-20) / math.log(q))) + 1)
    total = 0.0
    for start in range(1, stop + 1, 10**6):
        n = np.arange(start, min(start + 10**6, stop + 1), dtype=float)
        total += float(np.sum(n * np.log(n) * pmf(law, n)))
    # remainder bound: sum_{n>N} n^2 p q^(n-1) <= p q^N (N+1)^2 / (1-q)^3
    bound = law.p * q**stop * (stop + 1) ** 2 / (1 - q) ** 3
    if bound > 1e-6:
        raise ConfigError(f"E xi log xi truncation at {stop} leaves remainder up to {bound:.3g}")
    return total


def sample_sibuya_bernoulli(alpha: float, rng, size=None):
    """Sibuya draws from the first success of independent B_i ~ Bernoulli(alpha/i).

    Trials are generated block by block: on ``[2^k, 2^(k+1))`` candidate
    successes come from a homogeneous Bernoulli(alpha/2^k) sequence (via
    geometric skips) and a candidate at ``i`` is kept with probability
    ``2^k / i``.  Returns float64 integer-valued draws (exact below 2**53).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    n = 1 if size is None else int(np.prod(size))
    out = np.zeros(n)
    u = np.asarray(rng.random(n), dtype=float)
    out[u < alpha] = 1.0
    active = np.flatnonzero(out == 0)
    k = 1
    while active.size:
        if k > 1000:
            raise IndexOverflow("Bernoulli-min Sibuya draw beyond 2**1000")
        lo = 2.0**k
        q = alpha / lo
        rate = -math.log1p(-q)
        pos = np.full(active.size, lo - 1.0)
        idx = active
        while idx.size:
            e = np.asarray(rng.standard_exponential(idx.size), dtype=float)
            cand = pos + np.floor(e / rate) + 1.0
            inblock = cand < 2.0 * lo
            acc = np.asarray(rng.random(idx.size), dtype=float) < lo / cand
            hit = inblock & acc
            out[idx[hit]] = cand[hit]
            keep = inblock & ~acc
            pos = cand[keep]
            idx = idx[keep]
        active = np.flatnonzero(out == 0)
        k += 1
    if size is None:
        return float(out[0])
    return out.reshape(size)
