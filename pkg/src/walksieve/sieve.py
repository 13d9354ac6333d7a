"""Leader-election sieve driven by increasing integer random walks.

In every round the surviving players are relabelled ``1, 2, ...`` and only
those whose current label is a value ``R(1), R(2), ...`` of a fresh walk
stay in the game.  The forward engine tracks original labels explicitly;
the composition functions evaluate nested walks instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisError, IndexOverflow, ResourceFault
from .gwp import gw_step
from .increments import MAX_INT, IncrementLaw, sample, sample_log
from .rng import substream

DEFAULT_MAX_LENGTH = 2**31
_FIRST_BLOCK = 64
_MAX_BLOCK = 2**16
# values from here on are treated as past 2**62 (float rounding margin)
_SATURATION = MAX_INT - 2**12


class WalkPath:
    """Lazily realised walk ``R(0) = 0 < R(1) < R(2) < ...``.

    Increments are drawn in a fixed block schedule (64, 64, 128, ... capped
    at 2**16), so the realised path depends only on the stream, never on the
    order in which values are queried.  Passing ``increments`` without an
    ``rng`` gives a fixed finite path; reading past its end raises
    :class:`ResourceFault`.

    A walk whose values pass 2**62 is cut there: every smaller value stays
    usable (so :meth:`upto` keeps working) and evaluating ``R(k)`` past the
    cut raises :class:`IndexOverflow`.
    """

    def __init__(self, law: IncrementLaw | None, rng=None, increments=None, max_length: int = DEFAULT_MAX_LENGTH):
        self.law = law
        self._rng = rng
        self.max_length = int(max_length)
        self._sums = np.zeros(_FIRST_BLOCK + 1, dtype=np.int64)
        self._n = 0
        self._saturated = False
        self._next_block = _FIRST_BLOCK
        if increments is not None:
            inc = np.asarray(increments, dtype=np.int64)
            if inc.ndim != 1 or np.any(inc < 1):
                raise ValueError("walk increments must be positive integers")
            self._append(inc)
        elif rng is None:
            raise ValueError("a walk needs either a random stream or fixed increments")

    def __len__(self) -> int:
        return self._n

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self._sums[: self._n + 1])

    @property
    def partial_sums(self) -> np.ndarray:
        return self._sums[: self._n + 1]

    def _append(self, inc: np.ndarray) -> None:
        if self._n + inc.size > self.max_length:
            raise ResourceFault(f"walk length would exceed {self.max_length}")
        last = int(self._sums[self._n])
        reach = last + np.cumsum(inc.astype(float))
        if reach[-1] >= MAX_INT:
            # keep the part below 2**62 and put a sentinel after it
            inc = inc[: int(np.searchsorted(reach, _SATURATION))]
            self._saturated = True
        need = self._n + inc.size + 1
        if need > self._sums.size:
            grown = np.zeros(max(need, 2 * self._sums.size), dtype=np.int64)
            grown[: self._n + 1] = self._sums[: self._n + 1]
            self._sums = grown
        self._sums[self._n + 1 : need] = last + np.cumsum(inc)
        self._n += inc.size
        if self._saturated:
            if self._sums.size < self._n + 2:
                self._sums = np.concatenate([self._sums, np.zeros(1, dtype=np.int64)])
            self._sums[self._n + 1] = MAX_INT

    def _grow(self) -> None:
        if self._saturated:
            raise IndexOverflow(f"walk value R({self._n + 1}) exceeds 2**62")
        if self._rng is None:
            raise ResourceFault(f"fixed walk has only {self._n} steps")
        block = self._next_block
        self._next_block = min(2 * block, _MAX_BLOCK) if self._n >= _FIRST_BLOCK else block
        self._append(np.asarray(sample(self.law, self._rng, block, cap=MAX_INT), dtype=np.int64))

    def ensure(self, k: int) -> None:
        k = int(k)
        if k > self.max_length:
            raise ResourceFault(f"walk index {k} exceeds the configured maximum {self.max_length}")
        while self._n < k:
            self._grow()

    def __call__(self, k):
        """``R(k)``; ``k`` may be an integer or an integer array."""
        if np.ndim(k) == 0:
            k = int(k)
            if k < 0:
                raise ValueError("walk index must be non-negative")
            self.ensure(k)
            return int(self._sums[k])
        k = np.asarray(k, dtype=np.int64)
        if k.size == 0:
            return k.copy()
        if k.min() < 0:
            raise ValueError("walk index must be non-negative")
        self.ensure(int(k.max()))
        return self._sums[k]

    def upto(self, limit: int) -> np.ndarray:
        """All values ``R(1), R(2), ...`` that do not exceed ``limit``.

        A fixed path is treated as the whole walk: its last value ends the
        list even if it does not exceed ``limit``.
        """
        limit = int(limit)
        if limit >= _SATURATION:
            raise IndexOverflow("walk limits at or beyond 2**62 are not supported")
        while self._sums[self._n] <= limit:
            if self._rng is None or self._saturated:
                break
            self._grow()
        stop = int(np.searchsorted(self._sums[: self._n + 1], limit, side="right"))
        return self._sums[1:stop].copy()

    def count_upto(self, limit: int) -> int:
        """``#{k >= 1 : R(k) <= limit}``."""
        return len(self.upto(limit))


def walk_eval(path: WalkPath, k):
    return path(k)


def sieve_walks(law: IncrementLaw, seed: int, rounds: int, replica: int = 0, **kwargs) -> list[WalkPath]:
    """The walks ``R^(1), ..., R^(rounds)`` used by replica ``replica`` of ``seed``."""
    return [WalkPath(law, substream(seed, "walk", replica, r), **kwargs) for r in range(1, rounds + 1)]


@dataclass
class SieveState:
    m: int
    round: int
    labels: np.ndarray
    elimination_round: np.ndarray
    history: list[int] = field(default_factory=list)

    @classmethod
    def initial(cls, m: int) -> SieveState:
        m = int(m)
        if m < 0:
            raise ValueError("player count must be non-negative")
        return cls(m, 0, np.arange(1, m + 1, dtype=np.int64), np.zeros(m, dtype=np.int64), [m])

    @property
    def survivor_count(self) -> int:
        return int(self.labels.size)

    def extinction_time(self) -> int | None:
        """``T(m)`` if every player has left by now, else ``None``."""
        if self.survivor_count:
            return None
        if self.m == 0:
            return 0
        return int(self.elimination_round.max())

    def alive_grid(self) -> np.ndarray:
        """Boolean ``(m, round + 1)`` table: player ``i`` still in after round ``r``."""
        r = np.arange(self.round + 1)
        elim = np.where(self.elimination_round == 0, np.iinfo(np.int64).max, self.elimination_round)
        return r[None, :] < elim[:, None]


def sieve_round(state: SieveState, walk: WalkPath) -> SieveState:
    """Keep the survivors sitting at positions ``R(1), R(2), ...``."""
    n = state.survivor_count
    pos = walk.upto(n)
    keep = np.zeros(n, dtype=bool)
    keep[pos - 1] = True
    elim = state.elimination_round.copy()
    elim[state.labels[~keep] - 1] = state.round + 1
    labels = state.labels[keep]
    return SieveState(state.m, state.round + 1, labels, elim, state.history + [int(labels.size)])


def run_sieve(m: int, law: IncrementLaw, rounds: int, seed: int, replica: int = 0, walks=None) -> SieveState:
    """Apply ``rounds`` sieve rounds to players ``1..m``."""
    if rounds < 0:
        raise ValueError("rounds must be non-negative")
    if walks is None:
        walks = sieve_walks(law, seed, rounds, replica)
    state = SieveState.initial(m)
    for r in range(rounds):
        state = sieve_round(state, walks[r])
    return state


def time_to_extinction(m: int, law: IncrementLaw, seed: int, replica: int = 0, max_rounds: int = 10**6) -> int:
    """``T(m)``: the first round after which none of ``1..m`` is left."""
    if law.is_degenerate:
        raise HypothesisError("degenerate_one never eliminates anyone; T(M) is infinite")
    if m < 1:
        raise ValueError("m must be >= 1")
    state = SieveState.initial(m)
    r = 0
    while state.survivor_count:
        r += 1
        if r > max_rounds:
            raise ResourceFault(f"no extinction after {max_rounds} rounds; check the increment law")
        state = sieve_round(state, WalkPath(law, substream(seed, "walk", replica, r)))
    return r


def compose_forward(walks, j: int, cap: int | None = None):
    """``R^(1) o ... o R^(n)(j)``: the original label of survivor ``j``.

    With ``cap``, returns ``None`` as soon as the value is known to exceed
    it (walks never decrease an index, so the rest of the chain is skipped).
    """
    v = int(j)
    for w in reversed(walks):
        if cap is not None and v > cap:
            return None
        try:
            v = w(v)
        except IndexOverflow:
            if cap is None:
                raise
            return None
    if cap is not None and v > cap:
        return None
    return v


def compose_backward(walks, j):
    """``R^(n) o ... o R^(1)(j)`` for a scalar or an array of ``j``."""
    v = j
    for w in walks:
        v = w(v)
    return v


def survivors_by_composition(law: IncrementLaw, n: int, j_max: int, seed: int, replica: int = 0) -> list[int]:
    """``(R^(n) o ... o R^(1)(j))_{j <= j_max}``, equal in law to ``(S_j^(n))``.

    Raises :class:`IndexOverflow` or :class:`ResourceFault` once an index
    leaves the walk range (expected for infinite-mean laws at large ``n``).
    """
    walks = [WalkPath(law, substream(seed, "composition", replica, r)) for r in range(1, n + 1)]
    v = np.arange(1, j_max + 1, dtype=np.int64)
    return [int(x) for x in compose_backward(walks, v)]


# ---------------------------------------------------------------------------
# batch routines (one walk per row, vectorised across replicas)


def renewal_count(law: IncrementLaw, limits, rng, budget: int = 2**22) -> np.ndarray:
    """``#{k >= 1 : R(k) <= limit}`` with an independent walk per row.

    ``limits`` has shape ``(rows,)`` or ``(rows, L)``; all ``L`` limits of a
    row are counted on the same walk.
    """
    lim = np.asarray(limits, dtype=np.int64)
    one_d = lim.ndim == 1
    lim2 = lim.reshape(lim.shape[0], -1)
    rows = lim2.shape[0]
    counts = np.zeros(lim2.shape, dtype=np.int64)
    top = lim2.max(axis=1) if lim2.size else np.zeros(rows, dtype=np.int64)
    if np.any(top >= 2**50):
        raise IndexOverflow("renewal limits beyond 2**50 are not supported")
    offset = np.zeros(rows, dtype=np.int64)
    active = np.flatnonzero(top >= 1)
    mu = law.mu
    it = 0
    while active.size:
        rem = int((top[active] - offset[active]).max())
        if math.isfinite(mu):
            mean = rem / mu
            w = int(mean * 1.1 + 4.0 * math.sqrt(mean) + 16)
        else:
            w = 32 << min(it, 20)
        w = max(1, min(w, rem + 1, budget // active.size, MAX_INT // (int(top.max()) + 1)))
        draws = sample(law, rng, (active.size, w), cap=int(top.max()))
        cs = offset[active, None] + np.cumsum(draws, axis=1)
        for col in range(lim2.shape[1]):
            counts[active, col] += (cs <= lim2[active, col : col + 1]).sum(axis=1)
        offset[active] = cs[:, -1]
        active = active[offset[active] <= top[active]]
        it += 1
    return counts[:, 0] if one_d else counts


def count_sieve(law: IncrementLaw, m, rounds: int, rng, size: int, until_extinct: bool = False, max_rounds: int = 10**6):
    """Survivor counts ``N_M^(r)`` for ``r = 0..rounds`` over ``size`` replicas.

    ``m`` may be a scalar or a 1-D array of thresholds sharing each replica's
    walks.  Returns the trajectory array (``(size, rounds+1)`` or
    ``(size, L, rounds+1)``) and, with ``until_extinct``, also ``T(M)``.
    """
    scalar = np.ndim(m) == 0
    ms = np.atleast_1d(np.asarray(m, dtype=np.int64))
    if until_extinct and law.is_degenerate:
        raise HypothesisError("degenerate_one never eliminates anyone; T(M) is infinite")
    n = np.broadcast_to(ms, (size, ms.size)).copy()
    traj = np.zeros((size, ms.size, rounds + 1), dtype=np.int64)
    traj[:, :, 0] = n
    t = np.where(n == 0, 0, -1)
    r = 0
    while r < rounds or (until_extinct and np.any(n > 0)):
        r += 1
        if r > max_rounds:
            raise ResourceFault(f"no extinction after {max_rounds} rounds")
        live = np.flatnonzero(n.max(axis=1) > 0)
        if live.size:
            n[live] = renewal_count(law, n[live], rng)
        if r <= rounds:
            traj[:, :, r] = n
        t = np.where((t < 0) & (n == 0), r, t)
    if scalar:
        traj = traj[:, 0, :]
        t = t[:, 0]
    if until_extinct:
        return traj, t
    return traj


def extinction_times(law: IncrementLaw, m: int, rng, size: int) -> np.ndarray:
    _, t = count_sieve(law, m, 0, rng, size, until_extinct=True)
    return t


def composition_batch(law: IncrementLaw, n: int, j_max: int, rng, size: int, censor: int | None = None) -> np.ndarray:
    """Survivor labels ``S_1..S_j_max`` after ``n`` rounds, shape ``(size, j_max)``.

    Consecutive gaps of a composed walk are independent branching families,
    so each gap is grown for ``n`` generations from one ancestor.
    """
    gaps = np.ones(size * j_max, dtype=np.int64)
    for _ in range(n):
        gaps = gw_step(gaps, law, rng, censor=censor)
    return np.cumsum(gaps.reshape(size, j_max), axis=1)


def log_survivors_sibuya(alpha: float, n: int, j_max: int, rng, size: int) -> np.ndarray:
    """``alpha^n log S_j^(n)`` for ``j <= j_max`` under a Sibuya(alpha) law.

    Uses the closed form: each gap is one Sibuya(alpha^n) family, summed in
    log space.
    """
    if n == 0:
        return np.broadcast_to(np.log(np.arange(1, j_max + 1, dtype=float)), (size, j_max)).copy()
    beta = alpha**n
    logs = sample_log(IncrementLaw.sibuya(beta), rng, (size, j_max))
    return beta * np.logaddexp.accumulate(logs, axis=1)


def pilot_truncation(law: IncrementLaw, n: int, j_max: int, rng, prob: float = 1e-3, pilot: int = 20_000) -> int:
    """Population size ``M`` with ``P{S_j_max^(n) > M}`` below ``prob`` (pilot estimate, 25% margin)."""
    s = composition_batch(law, n, j_max, rng, pilot)[:, -1]
    return int(math.ceil(np.quantile(s, 1.0 - prob) * 1.25))
