"""Goodness-of-fit primitives and the report type used by every verification."""

from __future__ import annotations

import json
import math
import warnings
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .errors import DegenerateBinning

SCHEMA_VERSION = 1

KS_THRESHOLD = 0.02
CHI2_P_THRESHOLD = 0.001


@dataclass
class EmpiricalSample:
    values: np.ndarray
    weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self.values.shape:
                raise ValueError("weights must match values")

    def __len__(self):
        return self.values.size

    @property
    def replicas(self) -> int:
        return self.values.size


def _values(sample) -> np.ndarray:
    if isinstance(sample, EmpiricalSample):
        return sample.values.ravel()
    return np.asarray(sample).ravel()


@dataclass
class Check:
    """One thresholded statistic.

    ``direction`` is ``"below"`` (pass iff statistic < threshold),
    ``"above"`` (pass iff statistic > threshold), ``"within"`` (threshold
    is a closed ``[lo, hi]`` pair) or ``"info"`` (never affects the verdict).
    """

    name: str
    statistic: float
    threshold: float | list | None = None
    direction: str = "below"
    p_value: float | None = None

    @property
    def passed(self) -> bool:
        s = self.statistic
        if self.direction == "info":
            return True
        if s is None or (isinstance(s, float) and math.isnan(s)):
            return False
        if self.direction == "below":
            return s < self.threshold
        if self.direction == "above":
            return s > self.threshold
        if self.direction == "within":
            lo, hi = self.threshold
            return lo <= s <= hi
        raise ValueError(f"unknown direction {self.direction!r}")

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "statistic": _num(self.statistic),
            "threshold": self.threshold,
            "direction": self.direction,
            "passed": self.passed,
        }
        if self.p_value is not None:
            d["p_value"] = _num(self.p_value)
        return d


def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return str(x)
    return x


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    name: str
    checks: list[Check] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "PASS" if self.checks and all(c.passed for c in self.checks) else "FAIL"

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def add(self, *checks: Check) -> TestReport:
        self.checks.extend(checks)
        return self

    def merge(self, other: TestReport, prefix: str | None = None) -> TestReport:
        pre = f"{prefix or other.name}."
        for c in other.checks:
            self.checks.append(Check(pre + c.name, c.statistic, c.threshold, c.direction, c.p_value))
        return self

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "verdict": self.verdict,
            "checks": [c.to_dict() for c in self.checks],
            "provenance": self.provenance,
            "details": self.details,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> TestReport:
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")

        def back(x):
            return float(x) if isinstance(x, str) else x

        checks = [
            Check(c["name"], back(c["statistic"]), c.get("threshold"), c.get("direction", "below"), back(c.get("p_value")))
            for c in d["checks"]
        ]
        return cls(d["name"], checks, d.get("provenance", {}), d.get("details", {}))

    def summary_line(self) -> str:
        worst = [c for c in self.checks if not c.passed]
        tail = "" if not worst else "  failing: " + ", ".join(f"{c.name}={c.statistic:.4g}" for c in worst[:3])
        return f"{self.verdict} {self.name}{tail}"


def ks_one_sample(sample, cdf: Callable, threshold: float | None = KS_THRESHOLD, name: str = "ks") -> TestReport:
    """Kolmogorov distance between the empirical cdf and ``cdf`` with its asymptotic p-value."""
    x = _values(sample)
    if x.size == 0:
        raise ValueError("KS test on an empty sample")
    res = sps.kstest(x, cdf)
    rep = TestReport(name)
    rep.add(Check("ks_distance", float(res.statistic), threshold, "below" if threshold is not None else "info", float(res.pvalue)))
    return rep


def ks_two_sample(a, b, threshold: float | None = KS_THRESHOLD, name: str = "ks2") -> TestReport:
    a = _values(a)
    b = _values(b)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test on an empty sample")
    res = _ks2(a, b)
    rep = TestReport(name)
    rep.add(Check("ks_distance", float(res.statistic), threshold, "below" if threshold is not None else "info", float(res.pvalue)))
    return rep


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov distance only (no p-value)."""
    return float(_ks2(_values(a), _values(b)).statistic)


def _ks2(a, b):
    # scipy falls back to the asymptotic p-value with a warning on large or tied samples
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return sps.ks_2samp(a, b)


def merge_bins(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0):
    """Merge adjacent bins left to right until each expected count reaches ``min_expected``.

    A short remainder at the right end is folded into the last full bin.
    """
    obs_out, exp_out = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if exp_out:
            obs_out[-1] += o_acc
            exp_out[-1] += e_acc
        else:
            obs_out.append(o_acc)
            exp_out.append(e_acc)
    return np.asarray(obs_out, dtype=float), np.asarray(exp_out, dtype=float)


def chi_square_counts(
    observed: Sequence[float],
    expected: Sequence[float],
    threshold: float = CHI2_P_THRESHOLD,
    name: str = "chi2",
    min_expected: float = 5.0,
) -> TestReport:
    """Pearson chi-square of observed vs expected counts (bins merged to ``min_expected``).

    ``expected`` is rescaled to the observed total; degrees of freedom are
    ``bins - 1``.
    """
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    if observed.shape != expected.shape:
        raise ValueError("observed and expected must have the same shape")
    if expected.sum() <= 0:
        raise DegenerateBinning("expected counts sum to zero")
    expected = expected * observed.sum() / expected.sum()
    o, e = merge_bins(observed, expected, min_expected)
    if o.size < 2:
        raise DegenerateBinning(f"{name}: binning left {o.size} bin(s)")
    stat = float(np.sum((o - e) ** 2 / e))
    dof = o.size - 1
    p = float(sps.chi2.sf(stat, dof))
    rep = TestReport(name, details={"bins": int(o.size), "dof": dof})
    rep.add(Check("p_value", p, threshold, "above", p))
    rep.add(Check("chi2", stat, None, "info"))
    return rep


def chi_square_discrete(
    sample,
    pmf: Callable,
    support: Iterable[int],
    threshold: float = CHI2_P_THRESHOLD,
    name: str = "chi2",
    min_expected: float = 5.0,
) -> TestReport:
    """Chi-square test of integer data against ``pmf``.

    Every value in ``support`` is its own bin and everything else shares one
    remainder bin whose probability is ``1 - sum(pmf(support))``.
    """
    x = _values(sample).astype(np.int64)
    if x.size == 0:
        raise ValueError("chi-square test on an empty sample")
    sup = np.asarray(sorted(set(int(s) for s in support)), dtype=np.int64)
    if sup.size < 1:
        raise DegenerateBinning("empty support")
    probs = np.asarray(pmf(sup), dtype=float)
    rest = max(0.0, 1.0 - probs.sum())
    idx = np.searchsorted(sup, x)
    inside = (idx < sup.size) & (sup[np.minimum(idx, sup.size - 1)] == x)
    counts = np.bincount(idx[inside], minlength=sup.size).astype(float)
    observed = np.append(counts, float((~inside).sum()))
    expected = np.append(probs, rest) * x.size
    if expected[-1] == 0 and observed[-1] > 0:
        # data outside a support that carries all the mass: impossible under the null
        rep = TestReport(name)
        rep.add(Check("p_value", 0.0, threshold, "above", 0.0))
        return rep
    return chi_square_counts(observed, expected, threshold, name, min_expected)


def tail_index(sample, quantile_range=(0.9, 0.999), min_points: int = 10_000) -> float:
    """Tail index from a log-log fit of the empirical survival function.

    The fit uses the distinct sample values between the two quantiles;
    returns minus the slope of ``log P{X > x}`` against ``log x``.  Light
    tails give large values (well above 2).
    """
    x = np.sort(_values(sample).astype(float))
    if x.size < min_points:
        raise ValueError(f"tail_index needs at least {min_points} points, got {x.size}")
    if np.any(x <= 0):
        raise ValueError("tail_index needs positive data")
    lo, hi = np.quantile(x, quantile_range)
    grid = np.unique(x[(x >= lo) & (x <= hi)])
    surv = 1.0 - np.searchsorted(x, grid, side="right") / x.size
    keep = surv > 0
    grid, surv = grid[keep], surv[keep]
    if grid.size < 2:
        raise ValueError("insufficient distinct tail points for a regression")
    slope = np.polyfit(np.log(grid), np.log(surv), 1)[0]
    return float(-slope)


def exp_cdf(rate: float = 1.0) -> Callable:
    return lambda x: -np.expm1(-rate * np.maximum(np.asarray(x, dtype=float), 0.0))
