"""Command-line experiment runner.

Subcommands::

    walksieve simulate {sieve|gwp|points} [--config PATH] [key=value ...]
    walksieve verify {<theorem id>|all} --seed N
    walksieve table {sieve-figure|cdf|qq} [key=value ...]

Configuration comes from a JSON file and/or trailing ``key=value``
overrides (values are parsed as JSON when possible; dotted keys reach into
nested objects).  Exit codes: 0 success/PASS, 1 FAIL, 2 usage or
configuration error, 3 resource fault or I/O error.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys

import numpy as np

from . import __version__
from .errors import ConfigError, HypothesisError, ResourceFault
from .gwp import gw_generations, gw_log_generations, log_normalized_sibuya
from .increments import Kind, law_from_dict
from .increments import cdf as law_cdf
from .io import read_column, render_csv, report_to_json, write_text
from .pointproc import (
    SelfSimilarProfile,
    make_stable_finite_mean,
    make_stable_infinite_mean,
    poisson_pattern,
)
from .rng import fresh_seed, replicate, substream
from .sieve import count_sieve, run_sieve
from .suite import REGISTRY, theorem_suite, verify_all

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_FAULT = 0, 1, 2, 3

REQUIRED = object()

# per-command schemas: key -> default (REQUIRED marks mandatory fields)
SCHEMAS = {
    ("simulate", "sieve"): {"law": REQUIRED, "m": REQUIRED, "rounds": REQUIRED, "replicas": 1, "until_extinct": False},
    ("simulate", "gwp"): {"law": REQUIRED, "n": REQUIRED, "replicas": 1, "mode": "auto", "direct_limit": 10_000},
    ("simulate", "points"): {
        "kind": REQUIRED,
        "k_points": 10,
        "replicas": 1,
        "law": None,
        "alpha": None,
        "rate": 1.0,
        "horizon": 100.0,
        "profile": {"kind": "identity"},
    },
    ("table", "sieve-figure"): {"m": REQUIRED, "rounds": REQUIRED, "law": {"kind": "geometric", "p": 0.5}},
    ("table", "cdf"): {
        "target": {"kind": "exp", "rate": 1.0},
        "x_min": 0.0,
        "x_max": 5.0,
        "step": 0.05,
        "sample": None,
        "column": None,
        "source": None,
    },
    ("table", "qq"): {
        "target": {"kind": "exp", "rate": 1.0},
        "p_min": 0.01,
        "p_max": 0.99,
        "step": 0.01,
        "sample": None,
        "column": None,
        "source": None,
    },
}

COMMON_KEYS = {"seed", "threads", "out"}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items) -> dict:
    out: dict = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r}: expected key=value")
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {p} is not an object")
        node[parts[-1]] = _parse_value(value)
    return out


def _deep_update(base: dict, extra: dict) -> dict:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def validate(command: tuple[str, str], raw: dict) -> dict:
    """Fill defaults and reject unknown or missing fields, naming them."""
    schema = SCHEMAS[command]
    prefix = ".".join(command)
    for key in raw:
        if key not in schema and key not in COMMON_KEYS:
            raise ConfigError(f"{prefix}: unknown field {key!r}")
    cfg = {}
    for key, default in schema.items():
        if key in raw:
            cfg[key] = raw[key]
        elif default is REQUIRED:
            raise ConfigError(f"{prefix}: missing required field {key!r}")
        else:
            cfg[key] = copy.deepcopy(default)
    for key in ("m", "rounds", "n", "replicas", "k_points"):
        if key in cfg and (isinstance(cfg[key], bool) or not isinstance(cfg[key], int) or cfg[key] < 0):
            raise ConfigError(f"{prefix}.{key}: expected a non-negative integer, got {cfg[key]!r}")
    if cfg.get("law") is not None:
        cfg["_law"] = law_from_dict(cfg["law"])
    return cfg


def _summary(values: np.ndarray, label: str) -> str:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return f"{label}: no finite values"
    q = np.quantile(v, [0.05, 0.25, 0.5, 0.75, 0.95])
    qs = " ".join(f"q{int(p * 100):02d}={x:.6g}" for p, x in zip([0.05, 0.25, 0.5, 0.75, 0.95], q))
    return f"{label}: n={v.size} mean={v.mean():.6g} {qs}"


# ---------------------------------------------------------------------------
# simulate


def _simulate_sieve(cfg, seed, threads):
    law, m, rounds = cfg["_law"], cfg["m"], cfg["rounds"]

    def run(rng, k):
        if cfg["until_extinct"]:
            traj, t = count_sieve(law, m, rounds, rng, k, until_extinct=True)
            return np.column_stack([traj, t])
        traj = count_sieve(law, m, rounds, rng, k)
        return np.column_stack([traj, np.full(k, -1)])

    data = replicate(run, cfg["replicas"], seed, ("simulate", "sieve"), threads)
    rows = []
    for i, row in enumerate(data):
        packed = ";".join(str(int(v)) for v in row[: rounds + 1])
        rows.append((i, rounds, packed, "" if row[-1] < 0 else int(row[-1])))
    summary = _summary(data[:, rounds], f"N_M^({rounds})")
    if cfg["until_extinct"]:
        summary += "\n" + _summary(data[:, -1], "T(M)")
    return ["replica_id", "n", "trajectory", "T"], rows, summary


def _simulate_gwp(cfg, seed, threads):
    law, n = cfg["_law"], cfg["n"]
    mode = cfg["mode"]
    if mode not in ("auto", "exact", "log", "closed_form"):
        raise ConfigError(f"simulate.gwp.mode: unknown mode {mode!r}")
    if mode == "auto":
        mode = "exact" if law.finite_mean else ("closed_form" if law.kind is Kind.SIBUYA else "log")
    if mode == "closed_form" and law.kind is not Kind.SIBUYA:
        raise ConfigError("simulate.gwp.mode: closed_form is only available for Sibuya laws")
    if mode == "exact":
        z = replicate(lambda rng, k: gw_generations(law, n, rng, k)[:, -1], cfg["replicas"], seed, ("simulate", "gwp"), threads)
        if law.finite_mean:
            norm = z.astype(float) * law.mu**-n
        else:
            norm = np.log(z.astype(float)) * law.tail_alpha**n
        header = ["replica_id", "n", "Z_n", "normalized"]
        rows = [(i, n, int(v), float(w)) for i, (v, w) in enumerate(zip(z, norm))]
        return header, rows, _summary(norm, "normalized")
    if law.tail_alpha is None:
        raise ConfigError(f"simulate.gwp.mode: {mode} needs a heavy-tailed law, got {law}")
    a = law.tail_alpha
    if mode == "closed_form":
        logs = replicate(
            lambda rng, k: log_normalized_sibuya(a, n, rng, k) / a**n, cfg["replicas"], seed, ("simulate", "gwp"), threads
        )
    else:
        logs = replicate(
            lambda rng, k: gw_log_generations(law, n, rng, k, cfg["direct_limit"])[:, -1],
            cfg["replicas"],
            seed,
            ("simulate", "gwp"),
            threads,
        )
    norm = logs * a**n
    header = ["replica_id", "n", "log_Z_n", "normalized"]
    rows = [(i, n, float(v), float(w)) for i, (v, w) in enumerate(zip(logs, norm))]
    return header, rows, _summary(norm, "normalized")


def _simulate_points(cfg, seed, threads):
    kind = cfg["kind"]
    profile = SelfSimilarProfile.from_dict(cfg["profile"])
    patterns = []
    for i in range(cfg["replicas"]):
        if kind == "poisson":
            patterns.append(poisson_pattern(float(cfg["rate"]), float(cfg["horizon"]), substream(seed, "points", i)))
        elif kind == "stable_finite":
            if cfg.get("_law") is None:
                raise ConfigError("simulate.points: missing required field 'law' for stable_finite")
            patterns.append(make_stable_finite_mean(cfg["_law"], profile, cfg["k_points"], _subseed(seed, i)))
        elif kind == "stable_infinite":
            alpha = cfg["_law"] if cfg.get("_law") is not None else cfg["alpha"]
            if alpha is None:
                raise ConfigError("simulate.points: stable_infinite needs 'alpha' or a Sibuya 'law'")
            patterns.append(make_stable_infinite_mean(alpha, profile, cfg["k_points"], _subseed(seed, i)))
        else:
            raise ConfigError(f"simulate.points.kind: unknown kind {kind!r} (poisson, stable_finite, stable_infinite)")
    rows = [(i, j + 1, float(x)) for i, p in enumerate(patterns) for j, x in enumerate(p.points)]
    counts = np.array([len(p) for p in patterns])
    return ["replica_id", "index", "point"], rows, _summary(counts, "points per pattern")


def _subseed(seed: int, i: int) -> int:
    return int(substream(seed, "points", i).integers(0, 2**63))


# ---------------------------------------------------------------------------
# table


def _target(desc) -> tuple:
    """(cdf, quantile) callables for a target descriptor."""
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError("table.target: expected an object with a 'kind' field")
    if desc["kind"] == "exp":
        rate = float(desc.get("rate", 1.0))
        if set(desc) - {"kind", "rate"} or not rate > 0:
            raise ConfigError("table.target: exp takes a positive 'rate' only")
        return (lambda x: -np.expm1(-rate * np.maximum(x, 0.0))), (lambda p: -np.log1p(-p) / rate)
    law = law_from_dict(desc)

    def cdf(x):
        return law_cdf(law, np.floor(np.maximum(x, 0.0)).astype(np.int64))

    def quantile(p):
        out = np.empty(np.shape(p))
        for i, pi in enumerate(np.atleast_1d(p)):
            lo, hi = 0, 1
            while float(law_cdf(law, hi)) < pi:
                lo, hi = hi, hi * 2
            while hi - lo > 1:
                mid = (lo + hi) // 2
                lo, hi = (mid, hi) if float(law_cdf(law, mid)) < pi else (lo, mid)
            out[i] = hi
        return out

    return cdf, quantile


def _table_sample(cfg, args, seed, threads) -> np.ndarray:
    if cfg["sample"] is not None:
        return read_column(cfg["sample"], cfg["column"])
    if cfg["source"] is not None:
        src = dict(cfg["source"])
        cmd = src.pop("command", "gwp")
        if ("simulate", cmd) not in SCHEMAS:
            raise ConfigError(f"table.source.command: unknown simulation {cmd!r}")
        header, rows, _ = SIMULATORS[cmd](validate(("simulate", cmd), src), seed, threads)
        col = cfg["column"] or next((c for c in ("normalized", "point") if c in header), header[-1])
        i = header.index(col)
        vals = np.array([float(r[i]) for r in rows if r[i] != ""])
        if vals.size == 0:
            raise ConfigError("table: empty sample")
        return vals
    raise ConfigError("table: needs a 'sample' artifact path or an inline 'source' generation descriptor")


def _grid(lo, hi, step, name) -> np.ndarray:
    lo, hi, step = float(lo), float(hi), float(step)
    if not step > 0 or hi < lo:
        raise ConfigError(f"table.{name}: need step > 0 and max >= min")
    n = int(round((hi - lo) / step)) + 1
    return lo + step * np.arange(n)


def _table(kind, cfg, args, seed, threads):
    if kind == "sieve-figure":
        state = run_sieve(cfg["m"], cfg["_law"], cfg["rounds"], seed)
        grid = state.alive_grid()
        rows = [(p + 1, r, int(grid[p, r])) for p in range(cfg["m"]) for r in range(cfg["rounds"] + 1)]
        return ["player", "round", "alive"], rows
    sample = np.sort(_table_sample(cfg, args, seed, threads))
    tcdf, tq = _target(cfg["target"])
    if kind == "cdf":
        x = _grid(cfg["x_min"], cfg["x_max"], cfg["step"], "x")
        emp = np.searchsorted(sample, x, side="right") / sample.size
        return ["x", "empirical_cdf", "target_cdf"], list(zip(x, emp, tcdf(x)))
    p = _grid(cfg["p_min"], cfg["p_max"], cfg["step"], "p")
    if p[0] <= 0 or p[-1] >= 1:
        raise ConfigError("table.p: probabilities must lie strictly inside (0, 1)")
    return ["p", "empirical_quantile", "target_quantile"], list(zip(p, np.quantile(sample, p), tq(p)))


SIMULATORS = {"sieve": _simulate_sieve, "gwp": _simulate_gwp, "points": _simulate_points}


# ---------------------------------------------------------------------------
# entry points


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--replicas", type=int, help="number of replicas")
    p.add_argument("--threads", type=int, default=None, help="worker thread cap")
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("overrides", nargs="*", metavar="key=value", help="configuration overrides")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="walksieve", description="Random-walk sieve simulations and checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}
    sim = subs["simulate"] = sub.add_parser("simulate", help="run a simulation and write a CSV artifact")
    sim.add_argument("what", choices=["sieve", "gwp", "points"])
    _common(sim)
    ver = subs["verify"] = sub.add_parser("verify", help="run a registered check (or all) and write a JSON report")
    ver.add_argument("theorem_id", help="check id or 'all'")
    _common(ver)
    tab = subs["table"] = sub.add_parser("table", help="emit plot-ready data tables")
    tab.add_argument("what", choices=["sieve-figure", "cdf", "qq"])
    _common(tab)
    subs["list"] = sub.add_parser("list", help="list registered check ids")
    return parser, subs


def _parse(argv) -> argparse.Namespace:
    # subcommand options and key=value overrides may be interleaved freely
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    if argv and argv[0] in subs:
        args = subs[argv[0]].parse_intermixed_args(argv[1:])
        args.command = argv[0]
        return args
    return parser.parse_args(argv)


def _settings(args) -> dict:
    raw = load_config(args.config)
    _deep_update(raw, parse_overrides(args.overrides))
    if args.replicas is not None:
        raw["replicas"] = args.replicas
    return raw


def _seed_of(args, raw, required: bool) -> tuple[int, bool]:
    seed = args.seed if args.seed is not None else raw.get("seed")
    if seed is None:
        if required:
            raise ConfigError("--seed: required for verify (reproducibility)")
        return fresh_seed(), True
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {seed!r}")
    return int(seed), False


def _threads(args, raw) -> int:
    t = args.threads if args.threads is not None else raw.get("threads", 1)
    if not isinstance(t, int) or t < 1:
        raise ConfigError(f"threads: expected a positive integer, got {t!r}")
    return t


def _cmd_verify(args) -> int:
    raw = _settings(args)
    seed, _ = _seed_of(args, raw, required=True)
    threads = _threads(args, raw)
    out = args.out or raw.get("out")
    overrides = {k: v for k, v in raw.items() if k not in COMMON_KEYS}
    if args.theorem_id == "all":
        report = verify_all(seed, threads, overrides)
    else:
        if args.theorem_id not in REGISTRY:
            raise ConfigError(f"unknown theorem id {args.theorem_id!r}; available: {', '.join(REGISTRY)}, all")
        report = theorem_suite(args.theorem_id, overrides, seed, threads)
    text = report_to_json(report)
    if out:
        write_text(text, out)
    else:
        sys.stdout.write(text)
    if report.name == "all":
        for tid, verdict in report.details["verdicts"].items():
            print(f"{verdict} {tid}", file=sys.stderr if not out else sys.stdout)
    print(report.summary_line(), file=sys.stderr if not out else sys.stdout)
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_simulate_or_table(args) -> int:
    raw = _settings(args)
    seed, drawn = _seed_of(args, raw, required=False)
    threads = _threads(args, raw)
    out = args.out or raw.get("out")
    cfg = validate((args.command, args.what), raw)
    if args.command == "simulate":
        header, rows, summary = SIMULATORS[args.what](cfg, seed, threads)
    else:
        header, rows = _table(args.what, cfg, args, seed, threads)
        summary = f"{len(rows)} rows"
    comments = {"seed": seed}
    if drawn:
        comments["seed_source"] = "entropy"
    write_text(render_csv(header, rows, comments), out)
    print(summary, file=sys.stdout if out else sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        if args.command == "list":
            for tid, th in REGISTRY.items():
                print(f"{tid}\t{th.summary}")
            return EXIT_OK
        if args.command == "verify":
            return _cmd_verify(args)
        return _cmd_simulate_or_table(args)
    except (ConfigError, HypothesisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceFault as exc:
        print(f"resource fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
