"""Command-line driver: simulate / fit / predict / evaluate / kronecker.

Each command reads a TOML config (CLI flags override config keys), writes its
outputs into --out-dir, and records a meta.json with the seed and content
hashes of its inputs.  Exit codes: 0 success, 1 usage or malformed config,
2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from . import baselines, inference, io, metrics, predict
from .core import (
    EventLog,
    HyperParams,
    ModelParams,
    NumericalError,
    SocialGraph,
    split,
)
from .graphs import KroneckerSeed, ParamRanges, kronecker_graph, sample_ground_truth, uniform_location_map
from .inference import EMConfig, fit
from .simulate import simulate
from .temporal import IntensityContext, temporal_loglik


class ConfigError(ValueError):
    """Malformed or incomplete configuration."""


def _load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc


def _section(config: dict, name: str, config_path: str) -> dict:
    if name not in config:
        raise ConfigError(f"{config_path}: missing [{name}] section")
    return config[name]


def _require(section: dict, field: str, where: str):
    if field not in section:
        raise ConfigError(f"{where}: missing field {field!r}")
    return section[field]


def _hyper_from(config: dict) -> HyperParams:
    section = config.get("hyper", {})
    try:
        return HyperParams(
            tau=float(section.get("tau", 12.0)),
            sigma=float(section.get("sigma", 0.5)),
            kernel_mode=section.get("kernel_mode", "floor"),
            spatial_decay=float(section.get("spatial_decay", 1.0)),
            max_periods=int(section.get("max_periods", 50)),
            popularity_smoothing=float(section.get("popularity_smoothing", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"[hyper]: {exc}") from exc


def _graph_from(section: dict, where: str, rng: np.random.Generator) -> SocialGraph:
    if "path" in section:
        n = section.get("n_users")
        return io.load_graph(section["path"], n=int(n) if n else None)
    if "preset" in section:
        seed = KroneckerSeed.preset(section["preset"], int(_require(section, "power", where)))
    elif "matrix" in section:
        seed = KroneckerSeed(
            tuple(map(tuple, section["matrix"])), int(_require(section, "power", where))
        )
    else:
        raise ConfigError(f"{where}: needs 'path', 'preset', or 'matrix'")
    return kronecker_graph(seed, rng)


def _ranges_from(section: dict) -> ParamRanges:
    def pair(key, default):
        val = section.get(key, default)
        return (float(val[0]), float(val[1]))

    return ParamRanges(
        mu=pair("mu", (0.0, 0.05)),
        eta=pair("eta", (0.0, 0.05)),
        alpha=pair("alpha", (0.0, 0.5)),
        beta=pair("beta", (0.0, 0.1)),
    )


def _write_meta(out_dir: Path, command: str, seed: int | None, inputs: list[Path], extra: dict | None = None) -> None:
    meta = {
        "command": command,
        "seed": seed,
        "input_hashes": {str(p): io.content_hash(p) for p in inputs if Path(p).exists()},
    }
    if extra:
        meta.update(extra)
    with open(out_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_kronecker(config: dict, config_path: str, out_dir: Path, seed: int) -> None:
    section = _section(config, "kronecker", config_path)
    rng = np.random.default_rng(seed)
    graph = _graph_from(section, "[kronecker]", rng)
    io.save_graph(graph, out_dir / "graph.csv")
    _write_meta(out_dir, "kronecker", seed, [Path(config_path)], {"n_users": graph.n, "n_edges": len(graph)})


def cmd_simulate(config: dict, config_path: str, out_dir: Path, seed: int) -> None:
    section = _section(config, "simulate", config_path)
    hyper = _hyper_from(config)
    rng = np.random.default_rng(seed)
    graph = _graph_from(_require(section, "graph", "[simulate]"), "[simulate.graph]", rng)
    n_cats = int(_require(section, "n_categories", "[simulate]"))
    per_cat = int(_require(section, "locations_per_category", "[simulate]"))
    loc_cat = uniform_location_map(n_cats, per_cat)

    if "params" in section and "path" in section["params"]:
        truth = io.load_params(section["params"]["path"])
    else:
        truth = sample_ground_truth(
            graph,
            n_cats,
            _ranges_from(section.get("ranges", {})),
            rng,
            ensure_self_loops=bool(section.get("graph", {}).get("self_loops", False)),
        )
    horizon = section.get("horizon")
    n_events = section.get("n_events")
    if horizon is None and n_events is None:
        raise ConfigError("[simulate]: need 'horizon' and/or 'n_events'")
    log = simulate(
        truth,
        hyper,
        loc_cat,
        rng,
        horizon=float(horizon) if horizon is not None else None,
        max_events=int(n_events) if n_events is not None else None,
    )
    io.save_events(log, out_dir / "events.csv")
    io.save_params(truth, out_dir / "params.json")
    io.save_graph(graph, out_dir / "graph.csv")
    _write_meta(
        out_dir, "simulate", seed, [Path(config_path)],
        {"n_events": len(log), "horizon": log.horizon, "ground_truth": "params.json"},
    )


def _em_config(section: dict, threads: int) -> EMConfig:
    return EMConfig(
        max_em_iters=int(section.get("max_em_iters", 50)),
        tol=float(section.get("tol", 1e-4)),
        inner_gtol=float(section.get("inner_gtol", 1e-6)),
        inner_max_iters=int(section.get("inner_max_iters", 200)),
        n_jobs=threads,
    )


def cmd_fit(config: dict, config_path: str, out_dir: Path, seed: int, threads: int) -> None:
    section = _section(config, "fit", config_path)
    hyper = _hyper_from(config)
    log = io.load_events(_require(section, "events", "[fit]"))
    frac = section.get("train_fraction")
    train = split(log, float(frac))[0] if frac is not None else log
    mask = None
    if section.get("use_graph_mask"):
        mask = io.load_graph(_require(section, "graph", "[fit]"), n=log.n_users)
    init = io.load_params(section["init"]) if "init" in section else None
    result = fit(
        train,
        hyper,
        _em_config(section, threads),
        init=init,
        alpha_mask=mask,
        rng=np.random.default_rng(seed),
    )
    io.save_fit_result(result, out_dir / "fit.json", extra={"config_hash": io.content_hash(config_path)})
    with open(out_dir / "trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loglik"])
        for i, ll in enumerate(result.loglik_trace):
            writer.writerow([i, repr(float(ll))])
    _write_meta(out_dir, "fit", seed, [Path(config_path), Path(section["events"])])


def cmd_predict(config: dict, config_path: str, out_dir: Path, seed: int) -> None:
    section = _section(config, "predict", config_path)
    hyper = _hyper_from(config)
    log = io.load_events(_require(section, "events", "[predict]"))
    params = io.load_params(_require(section, "params", "[predict]"))
    at = float(section.get("at", log.horizon))
    top_k = int(section.get("top_k", 5))
    users = section.get("users", list(range(log.n_users)))
    ctx = IntensityContext(log, params, hyper)
    mode = section.get("mode", "median")

    from .spatial import compute_weights

    weights = compute_weights(log, params, hyper, at)
    with open(out_dir / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "next_time"])
        for u in users:
            try:
                t_hat = predict.predict_next_time(ctx, int(u), at, mode=mode)
                writer.writerow([int(u), repr(float(t_hat))])
            except Exception:
                writer.writerow([int(u), ""])
    with open(out_dir / "rankings.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "category", "rank", "location", "probability"])
        for u in users:
            for c in range(log.n_categories):
                ranking = predict.rank_locations(weights, params, int(u), c)[:top_k]
                for pos, (loc, prob) in enumerate(ranking, start=1):
                    writer.writerow([int(u), c, pos, loc, repr(prob)])
    _write_meta(out_dir, "predict", seed, [Path(config_path), Path(section["events"])])


def _proposed_scorer(full_log: EventLog, params: ModelParams, hyper: HyperParams, parts: tuple[str, ...]):
    stats = inference.sweep_stats(full_log, hyper)

    def scorer(events: EventLog, window: tuple[float, float]) -> float:
        a, b = window
        total = 0.0
        if "time" in parts:
            ctx = IntensityContext(full_log, params, hyper)
            total += temporal_loglik(ctx, events, window)
        if "location" in parts:
            idx = full_log.window_slice(a, b)
            cand_w = params.alpha[stats.cand_sources, full_log.user[
                np.repeat(np.arange(len(full_log)), np.diff(stats.cand_offsets))
            ]] * stats.cand_mass
            cs = np.concatenate([[0.0], np.cumsum(cand_w)])
            w_loc = cs[stats.cand_offsets[1:]] - cs[stats.cand_offsets[:-1]]
            numer = params.eta[full_log.user, full_log.category] * stats.pop_ratio + w_loc
            w_dot = np.einsum("kn,nk->k", stats.source_cat_mass, params.alpha[:, full_log.user])
            denom = params.eta[full_log.user, full_log.category] + w_dot
            vals = np.log(numer[idx]) - np.log(denom[idx])
            total += float(vals.sum())
        return total

    return scorer




def _predict_times(
    full_log: EventLog,
    test_idx: np.ndarray,
    hyper: HyperParams,
    proposed: ModelParams,
    hawkes: baselines.HawkesParams,
    multi: baselines.MultiHawkesParams,
    window_start: float,
    condition_on_category: bool,
) -> dict[str, np.ndarray]:
    """Absolute error of each model's median next-time prediction per test event."""
    errors: dict[str, list[float]] = {"proposed": [], "hawkes": [], "multihawkes": []}
    for e in test_idx:
        u = int(full_log.user[e])
        t_true = float(full_log.t[e])
        prior = full_log.t[(full_log.user == u) & (full_log.t < t_true)]
        t_from = float(prior.max()) if prior.size else window_start
        frozen = full_log.replace(
            events=[ev for ev in full_log if ev.t < t_from],
            horizon=max(full_log.horizon, t_from + 1.0),
        )
        cat = int(full_log.category[e]) if condition_on_category else None
        ctx = IntensityContext(frozen, proposed, hyper)
        try:
            t_hat = predict.predict_next_time(ctx, u, t_from, category=cat)
            errors["proposed"].append(abs(t_hat - t_true))
        except predict.PredictionError:
            pass
        for name, comp in (
            ("hawkes", baselines.hawkes_user_compensator(frozen, hawkes, u)),
            ("multihawkes", baselines.multihawkes_user_compensator(frozen, multi, u)),
        ):
            try:
                t_hat = predict.invert_compensator(comp, t_from, float(np.log(2.0)))
                errors[name].append(abs(t_hat - t_true))
            except predict.PredictionError:
                pass
    return {k: np.asarray(v) for k, v in errors.items()}


def cmd_evaluate(config: dict, config_path: str, out_dir: Path, seed: int, threads: int) -> None:
    section = _section(config, "evaluate", config_path)
    hyper = _hyper_from(config)
    log = io.load_events(_require(section, "events", "[evaluate]"))
    truth = io.load_params(section["params"]) if "params" in section else None
    graph = (
        io.load_graph(section["graph"], n=log.n_users) if "graph" in section else None
    )
    fractions = [float(f) for f in section.get("train_fractions", [0.2, 0.4, 0.6, 0.8, 1.0])]
    k_values = [int(k) for k in section.get("k_values", [1, 2, 3, 5])]
    thresholds = [float(x) for x in section.get("time_thresholds", [1.0, 2.0, 4.0, 6.0, 12.0])]
    split_frac = float(section.get("train_test_split", 0.8))
    em_cfg = _em_config(section, threads)
    rng = np.random.default_rng(seed)

    train, test = split(log, split_frac)
    window = (train.horizon, log.horizon)
    test_idx = log.window_slice(*window)
    rows: list[tuple[str, str, float]] = []
    last = {}

    for frac in fractions:
        sub = train if frac >= 1.0 else split(train, frac)[0]
        result = fit(sub, hyper, em_cfg, rng=np.random.default_rng(seed))
        hk = baselines.fit_hawkes(sub)
        mh = baselines.fit_multihawkes(sub, graph if graph else SocialGraph(log.n_users))
        tag = f"fraction={frac}"
        if truth is not None:
            for block, val in metrics.param_mse_blocks(result.params, truth).items():
                rows.append((f"mse_{block}", tag, val))
            if graph is not None and len(graph):
                rows.append(("edge_auc", tag, metrics.edge_auc(result.params.alpha, graph)))
        for name, parts in (("temporal", ("time",)), ("full", ("time", "location"))):
            scorer = _proposed_scorer(log, result.params, hyper, parts)
            rows.append(
                (f"avg_pred_loglik_{name}", f"model=proposed,{tag}",
                 metrics.avg_pred_loglik(scorer, log, window))
            )
        rows.append(
            ("avg_pred_loglik_temporal", f"model=hawkes,{tag}",
             metrics.avg_pred_loglik(lambda ev, w: baselines.hawkes_loglik(log, hk, ev, w), log, window))
        )
        rows.append(
            ("avg_pred_loglik_temporal", f"model=multihawkes,{tag}",
             metrics.avg_pred_loglik(lambda ev, w: baselines.multihawkes_loglik(log, mh, ev, w), log, window))
        )
        last = {"result": result, "hawkes": hk, "multihawkes": mh, "fraction": frac}

    fitted: ModelParams = last["result"].params
    truths = [int(log.location[e]) for e in test_idx]
    rankings = {
        "proposed": predict.sweep_rankings(log, test_idx, fitted, hyper),
        "most_popular": [
            baselines.most_popular_rank(log, int(log.category[e]), float(log.t[e]))
            for e in test_idx
        ],
        "periodic_loc": [
            baselines.periodic_loc_rank(
                log, int(log.user[e]), int(log.category[e]), float(log.t[e]),
                hyper.tau, 2 * hyper.sigma,
            )
            for e in test_idx
        ],
    }
    with open(out_dir / "accuracy_ndcg.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "k", "accuracy", "ndcg"])
        for model, ranks in rankings.items():
            for k in k_values:
                acc = metrics.accuracy_at_k(ranks, truths, k)
                ndcg = metrics.ndcg_at_k(ranks, truths, k)
                writer.writerow([model, k, repr(acc), repr(ndcg)])
                rows.append((f"accuracy_at_{k}", f"model={model}", acc))
                rows.append((f"ndcg_at_{k}", f"model={model}", ndcg))

    errors = _predict_times(
        log, test_idx, hyper, fitted, last["hawkes"], last["multihawkes"],
        window[0], bool(section.get("condition_on_category", False)),
    )
    with open(out_dir / "time_threshold.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "threshold", "fraction_within"])
        for model, errs in errors.items():
            for th in thresholds:
                val = float(np.mean(errs <= th)) if errs.size else 0.0
                writer.writerow([model, th, repr(val)])
                rows.append((f"time_within_{th}", f"model={model}", val))

    if graph is not None:
        soc = metrics.sociality(log, graph)
        with open(out_dir / "sociality.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user", "sociality"])
            for u, val in enumerate(soc):
                writer.writerow([u, "" if np.isnan(val) else repr(float(val))])
        rows.append(("sociality_mean", "window=full", float(np.nanmean(soc))))

    counts, edges = metrics.interevent_histogram(log, bin_width=float(section.get("bin_width", 1.0)))
    with open(out_dir / "interevent_histogram.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for i, cnt in enumerate(counts):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(cnt)])

    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "config", "value"])
        for metric, tag, value in rows:
            writer.writerow([metric, tag, repr(float(value))])
    _write_meta(out_dir, "evaluate", seed, [Path(config_path), Path(section["events"])])


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="checkins",
        description="Simulate, fit, and evaluate the periodic check-in model.",
    )
    parser.add_argument("command", choices=["simulate", "fit", "predict", "evaluate", "kronecker"])
    parser.add_argument("--config", required=True, help="TOML config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    parser.add_argument("--out-dir", default=None, help="output directory (default: cwd)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0

    try:
        config = _load_config(args.config)
        section = config.get(args.command, {})
        seed = args.seed if args.seed is not None else int(section.get("seed", 0))
        threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
        out_dir = Path(args.out_dir) if args.out_dir else Path.cwd()
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(config, args.config, out_dir, seed)
        elif args.command == "fit":
            cmd_fit(config, args.config, out_dir, seed, threads)
        elif args.command == "predict":
            cmd_predict(config, args.config, out_dir, seed)
        elif args.command == "evaluate":
            cmd_evaluate(config, args.config, out_dir, seed, threads)
        else:
            cmd_kronecker(config, args.config, out_dir, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
