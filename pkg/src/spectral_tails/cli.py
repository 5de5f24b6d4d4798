"""Command-line laboratory: ``spectral-tails {rate,sample,verify,tails,structure}``.

Every run that writes a directory produces ``manifest.json``, ``records.jsonl`` and
``summary.csv``. Records contain no timestamps or thread counts and are sorted by
a stable key, so the same seed gives the same bytes on any number of workers.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import BudgetExceededError, ConvergenceError, InvariantError
from .graph import (
    clique_number,
    frobenius_sq,
    largest_eigenvalue,
    motzkin_straus_optimize,
    read_graph,
    spectral_bound_gap,
    write_edge_list,
)
from .rate import RateProfile, psi, rate_curve, transition_points
from .sampler import (
    EventThresholds,
    ModelParams,
    decompose,
    diagnostics,
    plan_decomposition,
    plant_clique,
    sample_network,
)

__all__ = ["run", "main", "emit_plot_data", "load_config"]

THREADS_ENV = "SPECTRAL_TAILS_THREADS"
EXIT_USAGE = 1
EXIT_INVARIANT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


DEFAULTS = {
    "rate": {"ladder": 6, "curve_max": 30.0, "curve_step": 0.1},
    "sample": {"d": 2.0, "seed": 0, "epsilon": None, "delta": 1.0, "plant": None},
    "verify": {"check": "spectral-bound"},
    "tails": {
        "mode": "upper", "n_grid": [128, 256, 512, 1024, 2048], "d": 2.0, "delta": 0.5,
        "trials": 20_000, "min_hits": 200, "block_size": 1_000, "seed": 0, "k_max": 4,
        "union_trials": 0, "planted_trials": 2_000,
    },
    "structure": {
        "n": 512, "d": 2.0, "delta": 10.0, "kappa": 0.2, "samples": 100,
        "method": "planted-proxy", "seed": 0,
    },
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spectral-tails", description="Large deviations of the top eigenvalue of sparse Gaussian networks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help="output directory"):
        sp.add_argument("--config", help="key = value configuration file; flags override it")
        sp.add_argument("--out", help=out_help)

    r = sub.add_parser("rate", help="rate function, minimisers and transition ladder")
    common(r, "JSON file (stdout when omitted)")
    r.add_argument("--delta", type=float)
    r.add_argument("--ladder", type=int, help="largest k in the transition ladder")
    r.add_argument("--plot-dir", help="also write plot CSVs of the rate curve here")
    r.add_argument("--curve-max", type=float)
    r.add_argument("--curve-step", type=float)

    s = sub.add_parser("sample", help="sample a network, optionally planted and decomposed")
    common(s)
    s.add_argument("--n", type=int)
    s.add_argument("--d", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--plant", type=int, help="plant a clique of this size")

    v = sub.add_parser("verify", help="check a deterministic inequality on a graph file")
    common(v)
    v.add_argument("--graph")
    v.add_argument("--check", choices=["spectral-bound", "motzkin-straus"])

    t = sub.add_parser("tails", help="Monte Carlo tail estimates and exponent fits")
    common(t)
    t.add_argument("--mode", choices=["upper", "lower"])
    t.add_argument("--n-grid", type=_int_list)
    t.add_argument("--d", type=float)
    t.add_argument("--delta", type=float)
    t.add_argument("--trials", type=int)
    t.add_argument("--min-hits", type=int)
    t.add_argument("--block-size", type=int)
    t.add_argument("--threads", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--k-max", type=int, help="largest planted clique size (upper mode)")
    t.add_argument("--planted-trials", type=int)
    t.add_argument("--union-trials", type=int, help="networks for the union upper bound (0 skips it)")

    st = sub.add_parser("structure", help="structure of conditioned samples")
    common(st)
    st.add_argument("--n", type=int)
    st.add_argument("--d", type=float)
    st.add_argument("--delta", type=float)
    st.add_argument("--kappa", type=float)
    st.add_argument("--samples", type=int)
    st.add_argument("--method", choices=["rejection", "planted", "planted-proxy"])
    st.add_argument("--seed", type=int)
    return p


# ----------------------------------------------------------------- config


def load_config(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys use dashes or underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _resolve(parser: argparse.ArgumentParser, args: argparse.Namespace) -> dict:
    """Merge flag > config file > default for the chosen subcommand."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    types = {a.dest: a.type for a in sub._actions if a.dest not in ("help",)}
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    unknown = set(cfg) - set(types)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    resolved = dict(DEFAULTS.get(args.command, {}))
    for key, value in cfg.items():
        conv = types.get(key) or str
        try:
            resolved[key] = conv(value)
        except ValueError:
            raise UsageError(f"config key {key!r}: bad value {value!r}") from None
    for key, value in vars(args).items():
        if value is not None:
            resolved[key] = value
    resolved.pop("config", None)
    return resolved


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


# ----------------------------------------------------------------- outputs


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_canonical(obj), sort_keys=True, separators=(",", ":"))


def write_records(path: Path, records: Iterable[dict], key=None) -> None:
    rows = list(records)
    if key is not None:
        rows.sort(key=key)
    path.write_text("".join(_dumps(r) + "\n" for r in rows))


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "0.0.0+local"


def write_manifest(out: Path, argv, cfg: dict, seed, child_seeds: dict, started: float) -> None:
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "command": list(argv),
        "config": _canonical(cfg),
        "master_seed": seed,
        "version": _version(),
        "started": started,
        "finished": time.time(),
        "child_seeds": child_seeds,
        "checksums": {p.name: _sha256(p) for p in files},
        "constants": {"chi_tail_C": 1.0, "subgraph_C": "1/sqrt(2 pi k)"},
    }
    (out / "manifest.json").write_text(json.dumps(_canonical(manifest), indent=2, sort_keys=True) + "\n")


def emit_plot_data(results, kind: str, out_dir: str | Path) -> list[Path]:
    """Plot-ready CSVs.

    ``rate-curve``: rows ``(delta, psi, h, minimizers, is_transition)`` plus a ladder file.
    ``exponent-fit``: rows ``(method, n, log_n, log_p, slope, intercept)``.
    ``structure``: rows ``(delta, freq_in_minimizers, freq_a1_a2, median_gaussian_dev)``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = list(results or [])
    if kind == "rate-curve":
        profiles = [r if isinstance(r, RateProfile) else RateProfile(**r) for r in results]
        top = max((p.delta for p in profiles), default=0.0)
        k_max = 2
        while 2 * k_max * (k_max - 1) ** 2 - 1 <= top:
            k_max += 1
        ladder = transition_points(k_max)
        marks = set(ladder.points[1:])
        path = out / "rate_curve.csv"
        write_csv(path, ["delta", "psi", "h", "minimizers", "is_transition"],
                  ([p.delta, p.psi, p.h, " ".join(map(str, p.minimizers)), int(p.delta in marks)] for p in profiles))
        lpath = out / "rate_transitions.csv"
        rows = [] if not profiles else [[k, ladder.delta_k(k), psi(ladder.delta_k(k)).psi] for k in range(2, k_max + 1) if ladder.delta_k(k) <= top]
        write_csv(lpath, ["k", "delta_k", "psi"], rows)
        return [path, lpath]
    if kind == "exponent-fit":
        path = out / "exponent_fit.csv"
        write_csv(path, ["method", "n", "log_n", "log_p", "slope", "intercept"],
                  ([r["method"], r["n"], math.log(r["n"]), math.log(r["probability"]) if r["probability"] > 0 else "-inf",
                    r.get("slope", ""), r.get("intercept", "")] for r in results))
        return [path]
    if kind == "structure":
        path = out / "structure_curve.csv"
        write_csv(path, ["delta", "freq_in_minimizers", "freq_a1_a2", "median_gaussian_dev"],
                  ([r["delta"], r["freq_in_minimizers"], r["freq_a1_a2"], r["median_gaussian_dev"]] for r in results))
        return [path]
    raise ValueError(f"unknown plot kind {kind!r}")


# -------------------------------------------------------------- subcommands


def _out_dir(cfg) -> Path:
    _require(cfg, "out")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_rate(cfg, argv) -> int:
    _require(cfg, "delta")
    if cfg["delta"] <= 0:
        raise UsageError("--delta must be positive")
    if cfg["ladder"] < 2:
        raise UsageError("--ladder must be at least 2")
    prof = psi(cfg["delta"])
    ladder = transition_points(cfg["ladder"])
    payload = {**prof.to_dict(), "ladder": list(ladder.points)}
    text = json.dumps(payload, indent=2)
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text + "\n")
    else:
        print(text)
    if cfg.get("plot_dir"):
        step, top = cfg["curve_step"], cfg["curve_max"]
        if step <= 0 or top <= 0:
            raise UsageError("curve step and max must be positive")
        deltas = [round(step * i, 12) for i in range(1, int(round(top / step)) + 1)]
        emit_plot_data(rate_curve(deltas), "rate-curve", cfg["plot_dir"])
    return 0


def cmd_sample(cfg, argv) -> int:
    _require(cfg, "n")
    params = ModelParams(cfg["n"], cfg["d"], cfg["seed"])
    eps = cfg.get("epsilon")
    plan = plan_decomposition(params.n, params.d, eps, cfg["delta"]) if eps is not None else None
    if cfg.get("plant") is not None and not 2 <= cfg["plant"] <= params.n:
        raise UsageError("--plant must lie in [2, n]")
    out = _out_dir(cfg)
    started = time.time()
    rng = np.random.default_rng(params.seed)
    planted = None
    if cfg.get("plant"):
        g, planted = plant_clique(params, cfg["plant"], cfg["delta"], rng)
    else:
        g = sample_network(params, rng)
    write_edge_list(g, out / "network.edges")
    record = {"n": g.n, "m": g.m, "d": params.d, "seed": params.seed, "planted": planted}
    if g.m:
        lam, _ = largest_eigenvalue(g)
        record["lambda1"] = lam
    if plan is not None:
        z1, z2 = decompose(g, plan)
        write_edge_list(z1, out / "heavy.edges")
        write_edge_list(z2, out / "light.edges")
        record.update(threshold=plan.threshold, delta_prime=plan.delta_prime, q_bound=plan.q_bound,
                      q_exact=plan.q_exact, heavy_edges=z1.m)
        if g.n >= 16:
            diag = diagnostics(z1, EventThresholds(1.0, 1.0, 3.0, eps))
            record["events"] = diag.flags()
            record["max_degree"] = diag.max_degree
            record["num_non_tree"] = diag.num_non_tree
    write_records(out / "records.jsonl", [record])
    write_csv(out / "summary.csv", sorted(k for k, v in record.items() if not isinstance(v, (dict, list, tuple, type(None)))),
              [[record[k] for k in sorted(k for k, v in record.items() if not isinstance(v, (dict, list, tuple, type(None))))]])
    write_manifest(out, argv, cfg, params.seed, {}, started)
    return 0


def cmd_verify(cfg, argv) -> int:
    _require(cfg, "graph")
    try:
        g = read_graph(cfg["graph"])
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read graph: {exc}") from None
    if g.support().m == 0:
        raise UsageError("graph has no nonzero edge")
    started = time.time()
    if cfg["check"] == "spectral-bound":
        k, _ = clique_number(g)
        frob = frobenius_sq(g)
        gap = spectral_bound_gap(g)
        lam = largest_eigenvalue(g)[0]
        report = {"check": "spectral-bound", "lambda1": lam, "frob_sq": frob, "clique_number": k, "gap": gap}
        ok = gap >= -1e-9 * frob
    else:
        res = motzkin_straus_optimize(g)
        k, _ = clique_number(g)
        report = {"check": "motzkin-straus", "value": res.value, "clique": list(res.clique), "clique_number": k,
                  "monotone": all(b >= a - 1e-15 for a, b in zip(res.trace, res.trace[1:]))}
        ok = report["monotone"] and abs(res.value - (k - 1) / (2 * k)) <= 1e-12
    report["ok"] = ok
    print(json.dumps(_canonical(report), indent=2))
    if cfg.get("out"):
        out = _out_dir(cfg)
        write_records(out / "records.jsonl", [report])
        keys = [k for k in sorted(report) if not isinstance(report[k], list)]
        write_csv(out / "summary.csv", keys, [[report[k] for k in keys]])
        write_manifest(out, argv, cfg, None, {}, started)
    if not ok:
        raise InvariantError(f"{cfg['check']} violated on {cfg['graph']}: {report}")
    return 0


def cmd_tails(cfg, argv) -> int:
    from .tails import (
        double_log_ratio,
        fit_exponent,
        lower_tail_mc,
        planted_exponent,
        upper_tail_naive,
        upper_tail_planted_lower,
        upper_tail_union_bound,
    )

    grid = cfg["n_grid"]
    threads = cfg.get("threads") or _default_threads()
    if not grid or any(n < 16 for n in grid) or sorted(set(grid)) != list(grid):
        raise UsageError("--n-grid must be strictly increasing integers >= 16")
    if cfg["trials"] < 1 or cfg["block_size"] < 1 or threads < 1:
        raise UsageError("trials, block size and threads must be positive")
    mode, delta, d, seed = cfg["mode"], cfg["delta"], cfg["d"], cfg["seed"]
    if mode == "upper" and delta <= 0:
        raise UsageError("--delta must be positive")
    if mode == "lower" and not 0 < delta < 1:
        raise UsageError("lower mode needs 0 < delta < 1")
    for n in grid:
        ModelParams(n, d, seed)
    out = _out_dir(cfg)
    started = time.time()
    records, child = [], {}
    for i, n in enumerate(grid):
        params = ModelParams(n, d, seed)
        task = 100 * i
        child[f"n={n}"] = {"spawn_key_prefix": task}
        if mode == "upper":
            est = upper_tail_naive(params, delta, cfg["trials"], seed, min_hits=cfg["min_hits"] or None,
                                   threads=threads, block_size=cfg["block_size"], task=task)
            records.append({**est.to_dict(), "n": n, "delta": delta, "method": "naive"})
            for k in range(2, cfg["k_max"] + 1):
                pl = upper_tail_planted_lower(params, delta, k, cfg["planted_trials"], seed, threads=threads, task=task + k)
                records.append({**pl.to_dict(), "n": n, "delta": delta, "method": f"planted-lower-bound-k{k}",
                                "planted_exponent": planted_exponent(delta, k)})
            if cfg["union_trials"]:
                ub = upper_tail_union_bound(params, delta, cfg["union_trials"], seed, threads=threads, task=task + 50)
                records.append({**ub.to_dict(), "n": n, "delta": delta, "method": "union-upper-bound"})
        else:
            est = lower_tail_mc(params, delta, cfg["trials"], seed, threads=threads,
                                block_size=cfg["block_size"], task=task)
            rec = {**est.to_dict(), "n": n, "delta": delta, "method": "naive"}
            if 0 < est.probability < 1:
                rec["double_log_ratio"] = double_log_ratio(est.probability, n)
            records.append(rec)
    write_records(out / "records.jsonl", records, key=lambda r: (r["n"], r["delta"], r["method"]))
    summary = []
    by_method = {}
    for r in records:
        by_method.setdefault(r["method"], []).append(r)
    for method, rows in sorted(by_method.items()):
        pts = [(r["n"], r["probability"]) for r in rows]
        if len(pts) >= 3 and all(p > 0 for _, p in pts):
            fit = fit_exponent(pts)
            summary.append([method, mode, delta, fit.slope, fit.slope_ci[0], fit.slope_ci[1], fit.intercept, len(pts)])
            for r in rows:
                r["slope"], r["intercept"] = fit.slope, fit.intercept
        else:
            summary.append([method, mode, delta, "", "", "", "", len(pts)])
    write_csv(out / "summary.csv", ["method", "mode", "delta", "slope", "slope_ci_low", "slope_ci_high", "intercept", "points"], summary)
    emit_plot_data(sorted(records, key=lambda r: (r["method"], r["n"])), "exponent-fit", out)
    write_manifest(out, argv, {**cfg, "threads": threads}, seed, child, started)
    return 0


def cmd_structure(cfg, argv) -> int:
    from .structure import ConditioningSpec, analyze_sample, conditioned_samples

    method = "planted-proxy" if cfg["method"] in ("planted", "planted-proxy") else "rejection"
    params = ModelParams(cfg["n"], cfg["d"], cfg["seed"])
    spec = ConditioningSpec(cfg["delta"], method, cfg["kappa"], cfg["samples"])
    out = _out_dir(cfg)
    started = time.time()
    batch = conditioned_samples(params, spec, cfg["seed"])
    reports = [analyze_sample(s.graph, s.summary, spec.delta, spec.kappa, proxy=batch.proxy) for s in batch]
    records = [{"sample": i, **r.to_dict()} for i, r in enumerate(reports)]
    write_records(out / "records.jsonl", records, key=lambda r: r["sample"])
    if spec.delta <= 3:
        print("warning: delta <= 3 lies outside the proved clique-concentration regime", file=sys.stderr)
    m = len(reports)
    agg = {
        "delta": spec.delta, "method": method, "proxy": batch.proxy, "samples": m,
        "attempts": batch.attempts, "acceptance_rate": batch.acceptance_rate,
        "freq_in_minimizers": sum(r.in_minimizers for r in reports) / m,
        "freq_unique": sum(r.unique_max_clique for r in reports) / m,
        "freq_contained": sum(r.all_big_cliques_inside for r in reports) / m,
        "freq_a1_a2": sum(r.a1 and r.a2 for r in reports) / m,
        "median_gaussian_dev": float(np.median([r.gaussian_l1_dev for r in reports])),
        "median_mass": float(np.median([r.mass_on_clique for r in reports])),
    }
    if any(not r.in_minimizers and r.k_X < 2 for r in reports):
        raise InvariantError("a conditioned sample has no edge")
    (out / "aggregate.json").write_text(json.dumps(_canonical(agg), indent=2, sort_keys=True) + "\n")
    keys = sorted(agg)
    write_csv(out / "summary.csv", keys, [[agg[k] for k in keys]])
    emit_plot_data([agg], "structure", out)
    write_manifest(out, argv, cfg, cfg["seed"], {}, started)
    return 0


COMMANDS = {"rate": cmd_rate, "sample": cmd_sample, "verify": cmd_verify, "tails": cmd_tails, "structure": cmd_structure}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _resolve(parser, args)
        return COMMANDS[args.command](cfg, argv)
    except (UsageError, ValueError) as exc:
        print(f"spectral-tails {args.command}: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (InvariantError, ArithmeticError) as exc:
        print(f"spectral-tails {args.command}: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (BudgetExceededError, ConvergenceError) as exc:
        print(f"spectral-tails {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


def main() -> None:
    sys.exit(run())
