"""Config-driven experiment runner and utility commands.

Configs are TOML (documented in the README, versioned in every report's
provenance block).  The ``run`` command executes one of four experiment
runners keyed by ``[experiment].type``:

  grid       instance generator x policies x horizons x seeds, regret table
             plus log-log slope fits
  synthetic  triple-exponential-smoothing streams: fixed-v (one demand
             process, many prediction draws) or fixed-a (many demand
             processes, perturbed-parameter predictions), GAP/scatter data
  pair       the indistinguishable pair: per-policy mean regrets on both
             instances and their sum
  realdata   CSV-ingested demand with external predictions, residual-based
             empirical family, GAP pipeline

Reports are deterministic byte-for-byte given (config, master seed).
"""

from __future__ import annotations

import argparse
import csv
import functools
import hashlib
import json
import math
import sys
from importlib import resources

import numpy as np

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover - exercised on py 3.10
    import tomli as tomllib

from . import __version__
from .demand import CostRates, NonnegativeReals, demand_variation, exponent_of, prediction_error, sample_path
from .instances import (
    HoltWintersParams,
    Instance,
    InstanceMeta,
    fit_residual_family,
    gen_holt_winters_instance,
    gen_indistinguishable_pair,
    gen_lower_bound_cycles,
    holt_winters_forecast,
    load_predictions,
    load_timeseries,
    split_train_test,
)
from .sim import PolicySpec, fit_regret_slope, gap, replicate, run_episode, seed_streams

CONFIG_FORMAT = "toml-v1"
PRESETS = (
    "synthetic-fixed-v",
    "synthetic-fixed-a",
    "lower-bound-slope",
    "perp-robustness",
    "real-data-gap",
)


class ConfigError(ValueError):
    pass


def _need(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"{where}.{key}: missing required key")
    return table[key]


def _cell_seeds(master_seed: int, cell_index: int, n: int) -> list[int]:
    ss = np.random.SeedSequence([int(master_seed), int(cell_index)])
    return [int(s) for s in ss.generate_state(n, dtype=np.uint32)]


def _policy_specs(cfg: dict) -> list[PolicySpec]:
    raw = _need(cfg, "policies", "config")
    if not raw:
        raise ConfigError("policies: at least one policy is required")
    specs = []
    for i, entry in enumerate(raw):
        name = _need(entry, "name", f"policies[{i}]")
        params = {k: v for k, v in entry.items() if k != "name"}
        specs.append(PolicySpec(name=name, params=params))
    return specs


def _run_table(cfg: dict) -> dict:
    run = _need(cfg, "run", "config")
    out = {
        "master_seed": int(run.get("master_seed", 0)),
        "n_seeds": int(_need(run, "seeds", "run")),
        "threads": int(run.get("threads", 1)),
    }
    if out["n_seeds"] < 1:
        raise ConfigError("run.seeds: need at least one seed")
    return out


# ---------------------------------------------------------------------------
# Runners


def _grid_runner(cfg: dict) -> dict:
    inst_cfg = _need(cfg, "instances", "config")
    gen = _need(inst_cfg, "generator", "instances")
    if gen != "lower_bound_cycles":
        raise ConfigError(f"instances.generator: grid runner supports 'lower_bound_cycles', got {gen!r}")
    vs = inst_cfg.get("v", [0.0])
    vs = [float(x) for x in (vs if isinstance(vs, list) else [vs])]
    a = float(inst_cfg.get("a", 1.0))
    horizons = [int(h) for h in _need(cfg["run"], "horizons", "run")]
    if any(h < 2 for h in horizons):
        raise ConfigError("run.horizons: horizons must be >= 2")
    run = _run_table(cfg)
    specs = _policy_specs(cfg)

    rows = []
    slopes = []
    cell = 0
    for v in vs:
        for spec in specs:
            regrets = []
            for T in horizons:
                factory = functools.partial(gen_lower_bound_cycles, v, a, T)
                seeds = _cell_seeds(run["master_seed"], cell, run["n_seeds"])
                cell += 1
                rep = replicate(factory, spec, seeds, workers=run["threads"])
                rows.append(
                    {
                        "v": v,
                        "a": a,
                        "policy": spec.name,
                        "T": T,
                        "n_seeds": run["n_seeds"],
                        "mean_regret": rep.mean_regret,
                        "stderr_regret": rep.stderr_regret,
                        "mean_realized_cost": rep.mean_realized_cost,
                    }
                )
                regrets.append(rep.mean_regret)
            if len(horizons) >= 3 and all(r > 0 for r in regrets):
                slopes.append(
                    {
                        "v": v,
                        "policy": spec.name,
                        "slope": fit_regret_slope(horizons, regrets),
                        "target": (3.0 + v) / 4.0,
                    }
                )
    return {"cells": rows, "slope_fits": slopes}


def _hw_param_table(raw: dict, where: str) -> HoltWintersParams:
    return HoltWintersParams(
        alpha=float(_need(raw, "alpha", where)),
        beta=float(_need(raw, "beta", where)),
        gamma_s=float(_need(raw, "gamma_s", where)),
        L=int(_need(raw, "season_length", where)),
    )


def _sample_hw_params(rng: np.random.Generator) -> HoltWintersParams:
    return HoltWintersParams(
        alpha=float(rng.uniform(0.2, 0.8)),
        beta=float(rng.uniform(0.2, 0.8)),
        gamma_s=float(rng.uniform(0.2, 0.8)),
        L=int(rng.choice([10, 20, 30])),
    )


def _perturb_hw_params(
    p: HoltWintersParams, rng: np.random.Generator, max_season: int = 30
) -> HoltWintersParams:
    def tweak(x: float, hi: float = 1.0) -> float:
        factor = 1.1 if rng.random() < 0.5 else 0.9
        return float(min(max(x * factor, 0.0), hi))

    # season length cannot exceed the available history
    new_l = min(max(1, round(p.L * (1.1 if rng.random() < 0.5 else 0.9))), max_season)
    return HoltWintersParams(alpha=tweak(p.alpha), beta=tweak(p.beta), gamma_s=tweak(p.gamma_s), L=new_l)


def _history_variation_exponent(history, T: int) -> tuple[float, float]:
    raw = exponent_of(demand_variation(np.asarray(history, dtype=float), 2.0), T, clamp=False)
    return min(max(raw, 0.0), 1.0), raw


def _synthetic_runner(cfg: dict) -> dict:
    inst_cfg = _need(cfg, "instances", "config")
    mode = _need(inst_cfg, "mode", "instances")
    if mode not in ("fixed-v", "fixed-a"):
        raise ConfigError(f"instances.mode: expected 'fixed-v' or 'fixed-a', got {mode!r}")
    n_instances = int(inst_cfg.get("instances", 200))
    T = int(inst_cfg.get("horizon", 365))
    min_follow = int(inst_cfg.get("min_follow", 20))
    run = _run_table(cfg)

    if n_instances < 1:
        raise ConfigError("instances.instances: need at least one instance")
    inst_rng, demand_rng, _ = seed_streams(run["master_seed"])
    history = inst_rng.uniform(80.0, 120.0, size=30)
    v_perp, v_perp_raw = _history_variation_exponent(history, T)

    rows = []
    clamped = 0
    if mode == "fixed-v":
        params = _hw_param_table(
            inst_cfg.get("demand_params", {"alpha": 0.5, "beta": 0.5, "gamma_s": 0.5, "season_length": 30}),
            "instances.demand_params",
        )
        base = gen_holt_winters_instance(
            params, params, T=T, rng=inst_rng, history=history, label="fixed-v-base"
        )
        # one demand process: the mean sequence and its realization are shared
        demand_path = sample_path(base.family, base.means, demand_rng)
        nopred = run_episode(base, PolicySpec("shrinking"), demands=demand_path, seed=0)
        for i in range(n_instances):
            pred_params = _sample_hw_params(inst_rng)
            preds = holt_winters_forecast(history, pred_params, T)
            inst = Instance(
                T=T,
                family=base.family,
                means=base.means,
                rates=base.rates,
                Q=base.Q,
                predictions=preds,
                meta=InstanceMeta(label=f"fixed-v-{i}", v_true=base.meta.v_true, a_true=None),
            )
            rows.append(
                _synthetic_row(i, inst, demand_path, nopred, v_perp, min_follow, base.meta.extras["v_raw"], T)
            )
            clamped += base.meta.extras["clamped_means"] > 0
    else:
        for i in range(n_instances):
            params = _sample_hw_params(inst_rng)
            pred_params = _perturb_hw_params(params, inst_rng)
            inst = gen_holt_winters_instance(
                params, pred_params, T=T, rng=inst_rng, history=history, label=f"fixed-a-{i}"
            )
            demand_path = sample_path(inst.family, inst.means, demand_rng)
            nopred = run_episode(inst, PolicySpec("shrinking"), demands=demand_path, seed=0)
            rows.append(
                _synthetic_row(i, inst, demand_path, nopred, v_perp, min_follow, inst.meta.extras["v_raw"], T)
            )
            clamped += inst.meta.extras["clamped_means"] > 0

    gaps = [r["gap"] for r in rows if not math.isnan(r["gap"])]
    undefined = sum(1 for r in rows if math.isnan(r["gap"]))
    summary = {
        "mode": mode,
        "instances": n_instances,
        "horizon": T,
        "perp_v": v_perp,
        "perp_v_raw": v_perp_raw,
        "mean_gap": float(np.mean(gaps)) if gaps else math.nan,
        "undefined_gap_count": undefined,
        "instances_with_clamped_means": int(clamped),
        "spearman_a_vs_prediction_cost": _spearman(
            [r["a_effective"] for r in rows], [r["cost_prediction"] for r in rows]
        ),
        "spearman_a_raw_vs_prediction_cost": _spearman(
            [r["a_raw"] for r in rows], [r["cost_prediction"] for r in rows]
        ),
        "spearman_v_vs_shrinking_cost": _spearman(
            [r["v_raw"] for r in rows], [r["cost_shrinking"] for r in rows]
        ),
    }
    return {"rows": rows, "summary": summary}


def _spearman(x, y) -> float:
    if len(set(x)) < 2 or len(set(y)) < 2:
        return math.nan
    from scipy import stats as sstats

    return float(sstats.spearmanr(x, y).statistic)


def _synthetic_row(i, inst, demand_path, nopred_traj, v_perp, min_follow, v_raw, T):
    pred = run_episode(inst, PolicySpec("prediction"), demands=demand_path, seed=0)
    perp = run_episode(
        inst,
        PolicySpec("perp", {"v": v_perp, "min_follow": min_follow}),
        demands=demand_path,
        seed=0,
    )
    err = prediction_error(inst.predictions, inst.means)
    # every policy rounds forecasts into the mean bounds before ordering, so
    # the error of the clamped sequence is what costs can actually reflect
    err_eff = prediction_error(np.clip(inst.predictions, *inst.family.mean_bounds), inst.means)
    cost_pred = pred.total_realized_cost
    cost_nopred = nopred_traj.total_realized_cost
    cost_perp = perp.total_realized_cost
    return {
        "instance": i,
        "v_raw": v_raw,
        "a_raw": exponent_of(err, T, clamp=False),
        "a_effective": exponent_of(err_eff, T, clamp=False),
        "prediction_error": err,
        "effective_prediction_error": err_eff,
        "cost_prediction": cost_pred,
        "cost_shrinking": cost_nopred,
        "cost_perp": cost_perp,
        "regret_prediction": pred.total_regret,
        "regret_shrinking": nopred_traj.total_regret,
        "regret_perp": perp.total_regret,
        "gap": gap(cost_perp, cost_pred, cost_nopred),
        "log_ratio": math.log(cost_pred / cost_nopred) if cost_pred > 0 and cost_nopred > 0 else math.nan,
        "perp_switch": perp.events.get("perp_switch"),
    }


def _perp_robustness_runner(cfg: dict) -> dict:
    """Two prediction regimes on a low-variation adversarial instance:
    perfect forecasts (PERP should shadow the prediction policy) and a large
    constant offset (PERP should detect and switch to the fixed window)."""
    inst_cfg = _need(cfg, "instances", "config")
    v = float(inst_cfg.get("v", 0.0))
    T = int(inst_cfg.get("horizon", 4096))
    offset = float(inst_cfg.get("offset", 20.0))
    run = _run_table(cfg)
    seeds = _cell_seeds(run["master_seed"], 0, run["n_seeds"])

    sums = {
        regime: {name: [] for name in ("perp", "fixed_window", "prediction", "shrinking")}
        for regime in ("perfect", "offset")
    }
    gaps = {"perfect": [], "offset": []}
    identical = 0
    for s in seeds:
        inst_rng, demand_rng, _ = seed_streams(s)
        base = gen_lower_bound_cycles(v, 1.0, T, inst_rng)
        demands = sample_path(base.family, base.means, demand_rng)
        for regime in ("perfect", "offset"):
            preds = base.means.copy() if regime == "perfect" else base.means + offset
            inst = Instance(
                T=T,
                family=base.family,
                means=base.means,
                rates=base.rates,
                Q=base.Q,
                predictions=preds,
                meta=base.meta,
            )
            trajs = {}
            for name, spec in (
                ("perp", PolicySpec("perp", {"v": v})),
                ("fixed_window", PolicySpec("fixed_window", {"v": v})),
                ("prediction", PolicySpec("prediction")),
                ("shrinking", PolicySpec("shrinking")),
            ):
                trajs[name] = run_episode(inst, spec, demands=demands, seed=0)
                sums[regime][name].append(trajs[name].total_regret)
            gaps[regime].append(
                gap(
                    trajs["perp"].total_realized_cost,
                    trajs["prediction"].total_realized_cost,
                    trajs["shrinking"].total_realized_cost,
                )
            )
            if regime == "perfect" and np.array_equal(
                trajs["perp"].quantities, trajs["prediction"].quantities
            ):
                identical += 1

    def _mean(xs):
        vals = [x for x in xs if not math.isnan(x)]
        return float(np.mean(vals)) if vals else math.nan

    out = {
        "v": v,
        "T": T,
        "offset": offset,
        "n_seeds": run["n_seeds"],
        "perfect_identical_to_prediction": identical,
        "mean_regret": {
            regime: {name: float(np.mean(vals)) for name, vals in per.items()}
            for regime, per in sums.items()
        },
        "mean_gap": {regime: _mean(vals) for regime, vals in gaps.items()},
        "undefined_gap_count": sum(
            1 for regime in gaps for x in gaps[regime] if math.isnan(x)
        ),
    }
    out["offset_regret_ratio_perp_vs_fixed"] = (
        out["mean_regret"]["offset"]["perp"] / out["mean_regret"]["offset"]["fixed_window"]
    )
    out["mean_gap_across_regimes"] = _mean([out["mean_gap"]["perfect"], out["mean_gap"]["offset"]])
    return {"perp_robustness": out}


def _pair_runner(cfg: dict) -> dict:
    inst_cfg = _need(cfg, "instances", "config")
    T = int(inst_cfg.get("horizon", 2048))
    run = _run_table(cfg)
    specs = _policy_specs(cfg)
    seeds = _cell_seeds(run["master_seed"], 0, run["n_seeds"])

    results = []
    for spec in specs:
        regrets = {0: [], 1: []}
        for s in seeds:
            inst_rng, demand_rng, policy_rng = seed_streams(s)
            pair = gen_indistinguishable_pair(T, inst_rng)
            for which, inst in enumerate(pair):
                traj = run_episode(inst, spec, demand_rng=demand_rng, policy_rng=policy_rng)
                regrets[which].append(traj.total_regret)
        mean0 = float(np.mean(regrets[0]))
        mean1 = float(np.mean(regrets[1]))
        results.append(
            {
                "policy": spec.name,
                "T": T,
                "n_seeds": run["n_seeds"],
                "mean_regret_noisy_constant": mean0,
                "mean_regret_revealed_drift": mean1,
                "mean_regret_sum": mean0 + mean1,
            }
        )
    return {"pair": results}


def _realdata_runner(cfg: dict) -> dict:
    inst_cfg = _need(cfg, "instances", "config")
    demand_csv = _need(inst_cfg, "demand_csv", "instances")
    pred_csv = _need(inst_cfg, "prediction_csv", "instances")
    train_pred_csv = _need(inst_cfg, "train_prediction_csv", "instances")
    test_len = int(_need(inst_cfg, "test_len", "instances"))
    ratio = float(inst_cfg.get("critical_quantile", 0.5))
    if not (0.0 < ratio < 1.0):
        raise ConfigError("instances.critical_quantile: must lie strictly between 0 and 1")
    min_follow = int(inst_cfg.get("min_follow", 20))

    series = load_timeseries(demand_csv)
    train, test = split_train_test(series, test_len)
    test_preds = [v for _, v in load_predictions(pred_csv)]
    if len(test_preds) != test_len:
        raise ConfigError(
            f"instances.prediction_csv: got {len(test_preds)} rows, expected test_len={test_len}"
        )
    train_pred_rows = [v for _, v in load_predictions(train_pred_csv)]
    train_vals = [v for _, v in train]
    if len(train_pred_rows) > len(train_vals):
        raise ConfigError("instances.train_prediction_csv: more rows than the training window")
    resid_train = train_vals[-len(train_pred_rows) :]

    family = fit_residual_family(resid_train, train_pred_rows)
    rates = CostRates(b=ratio, h=1.0 - ratio)
    test_vals = np.array([v for _, v in test], dtype=float)
    preds = np.clip(np.asarray(test_preds, dtype=float), *family.mean_bounds)
    v_perp, v_perp_raw = _history_variation_exponent(train_vals, test_len)

    inst = Instance(
        T=test_len,
        family=family,
        means=preds,  # proxy centers: true means are unknown for real data
        rates=rates,
        Q=NonnegativeReals(),
        predictions=np.asarray(test_preds, dtype=float),
        meta=InstanceMeta(label="real-data", v_true=v_perp, extras={"v_raw": v_perp_raw}),
        fixed_demands=test_vals,
    )
    costs = {}
    for name, spec in (
        ("shrinking", PolicySpec("shrinking")),
        ("prediction", PolicySpec("prediction")),
        ("perp", PolicySpec("perp", {"v": v_perp, "min_follow": min_follow})),
    ):
        traj = run_episode(inst, spec, seed=0)
        costs[name] = traj.total_realized_cost
    g = gap(costs["perp"], costs["prediction"], costs["shrinking"])
    return {
        "realdata": {
            "test_len": test_len,
            "critical_quantile": ratio,
            "perp_v": v_perp,
            "perp_v_raw": v_perp_raw,
            "cost_shrinking": costs["shrinking"],
            "cost_prediction": costs["prediction"],
            "cost_perp": costs["perp"],
            "gap": g,
            "gap_undefined": math.isnan(g),
            "expected_cost_columns_are_proxy": True,
        }
    }


_RUNNERS = {
    "grid": _grid_runner,
    "synthetic": _synthetic_runner,
    "pair": _pair_runner,
    "perp-robustness": _perp_robustness_runner,
    "realdata": _realdata_runner,
}


# ---------------------------------------------------------------------------
# Report plumbing


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def run_config(cfg: dict, config_bytes: bytes, out_dir=None) -> dict:
    exp = _need(cfg, "experiment", "config")
    etype = _need(exp, "type", "experiment")
    runner = _RUNNERS.get(etype)
    if runner is None:
        raise ConfigError(f"experiment.type: unknown type {etype!r} (choose from {sorted(_RUNNERS)})")
    body = runner(cfg)
    report = {
        "schema_version": 1,
        "provenance": {
            "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
            "config_format": CONFIG_FORMAT,
            "master_seed": int(cfg.get("run", {}).get("master_seed", 0)),
            "package_version": __version__,
        },
        "experiment": {"type": etype, "name": exp.get("name", "")},
        "results": body,
    }
    if out_dir is not None:
        _write_outputs(report, out_dir)
    return report


def report_bytes(report: dict) -> bytes:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2).encode() + b"\n"


def _write_outputs(report: dict, out_dir) -> None:
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_bytes(report_bytes(report))
    body = report["results"]
    if "rows" in body:
        rows = body["rows"]
        write_table(
            out / "scatter_data.csv",
            ["t", "a_raw", "a_effective", "v_raw", "cost_prediction", "cost_shrinking", "cost_perp"],
            [
                [
                    r["instance"],
                    r["a_raw"],
                    r["a_effective"],
                    r["v_raw"],
                    r["cost_prediction"],
                    r["cost_shrinking"],
                    r["cost_perp"],
                ]
                for r in rows
            ],
        )
        write_table(
            out / "gap_histogram.csv",
            ["t", "log_ratio", "gap"],
            [[r["instance"], r["log_ratio"], r["gap"]] for r in rows],
        )
    if "cells" in body:
        write_table(
            out / "regret_cells.csv",
            ["t", "v", "policy", "horizon", "mean_regret", "stderr_regret"],
            [
                [i, r["v"], r["policy"], r["T"], r["mean_regret"], r["stderr_regret"]]
                for i, r in enumerate(body["cells"])
            ],
        )


def write_table(path, header: list[str], rows) -> None:
    """CSV writer whose floats round-trip exactly (shortest repr)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_format_cell(c) for c in row])


def _format_cell(c):
    if c is None or (isinstance(c, float) and math.isnan(c)):
        return "nan"
    if isinstance(c, (float, np.floating)):
        return repr(float(c))
    return c


def load_table(path) -> list[dict]:
    """Read back a CSV written by write_table; numeric cells become floats."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            parsed = {}
            for k, v in row.items():
                try:
                    parsed[k] = float(v)
                except (TypeError, ValueError):
                    parsed[k] = v
            out.append(parsed)
    return out


# ---------------------------------------------------------------------------
# Commands


def _load_config(path: str) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        cfg = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}")
    return cfg, raw


def preset_path(name: str):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("nsnv").joinpath("presets", f"{name}.toml")


def cmd_run(args) -> int:
    if args.preset:
        raw = preset_path(args.preset).read_bytes()
        cfg = tomllib.loads(raw.decode("utf-8"))
    elif args.config:
        cfg, raw = _load_config(args.config)
    else:
        print("error: run needs --config or --preset", file=sys.stderr)
        return 2
    if args.seed is not None:
        # provenance hashes the config file as given; the seed is recorded separately
        cfg.setdefault("run", {})["master_seed"] = args.seed
    if args.threads is not None:
        cfg.setdefault("run", {})["threads"] = args.threads
    out_dir = args.out or cfg.get("output", {}).get("dir")
    report = run_config(cfg, raw, out_dir=out_dir)
    if out_dir is None:
        sys.stdout.write(report_bytes(report).decode())
    else:
        print(f"wrote {out_dir}/report.json")
    return 0


def cmd_variation(args) -> int:
    series = load_timeseries(args.csv)
    values = [v for _, v in series]
    v = demand_variation(values, args.theta)
    print(f"variation (theta={args.theta}): {v!r}")
    if len(values) >= 2:
        print(f"exponent: {exponent_of(v, len(values))!r}")
        raw = exponent_of(v, len(values), clamp=False)
        if raw > 1.0:
            print(f"note: raw exponent {raw!r} exceeded 1 and was clamped")
    else:
        print("exponent: n/a (series shorter than 2)")
    return 0


def cmd_gap(args) -> int:
    g = gap(args.perp, args.prediction, args.nopred)
    if math.isnan(g):
        print("GAP: undefined (baselines coincide)")
    else:
        print(f"GAP: {g!r}")
    return 0


def cmd_lowerbound(args) -> int:
    inst_rng, _, _ = seed_streams(args.seed)
    inst = gen_lower_bound_cycles(args.v, args.a, args.T, inst_rng)
    ex = inst.meta.extras
    print(f"label: {inst.meta.label}")
    print(f"case: {ex['case']}  cycle_len: {ex['cycle_len']}  amp: {ex['amp']!r}")
    print(f"variation: {ex['achieved_variation']!r}  bound (T^v/5): {args.T**args.v / 5.0!r}")
    print(
        f"prediction_error: {ex['achieved_error']!r}  "
        f"bound (T^a/sqrt5): {args.T**args.a / math.sqrt(5.0)!r}"
    )
    if args.out:
        write_table(
            args.out,
            ["t", "mean", "prediction"],
            [[t + 1, float(m), float(p)] for t, (m, p) in enumerate(zip(inst.means, inst.predictions))],
        )
        print(f"wrote {args.out}")
    return 0


def cmd_hw_forecast(args) -> int:
    series = load_timeseries(args.csv)
    params = HoltWintersParams(args.alpha, args.beta, args.gamma_s, args.season_length)
    fc = holt_winters_forecast([v for _, v in series], params, args.horizon)
    if args.out:
        write_table(args.out, ["t", "value"], [[i + 1, float(v)] for i, v in enumerate(fc)])
        print(f"wrote {args.out}")
    else:
        for i, v in enumerate(fc, start=1):
            print(f"{i},{v!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsnv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config or preset")
    run.add_argument("--config", help="TOML config path")
    run.add_argument("--preset", choices=PRESETS, help="bundled experiment preset")
    run.add_argument("--out", help="output directory for report.json and CSVs")
    run.add_argument("--seed", type=int, default=None, help="override run.master_seed")
    run.add_argument("--threads", type=int, default=None, help="override run.threads")
    run.set_defaults(fn=cmd_run)

    var = sub.add_parser("variation", help="demand variation and exponent of a series")
    var.add_argument("csv", help="time-series CSV with header t,value")
    var.add_argument("--theta", type=float, default=2.0)
    var.set_defaults(fn=cmd_variation)

    g = sub.add_parser("gap", help="optimality gap from three total costs")
    g.add_argument("perp", type=float)
    g.add_argument("prediction", type=float)
    g.add_argument("nopred", type=float)
    g.set_defaults(fn=cmd_gap)

    lb = sub.add_parser("lowerbound", help="generate and check an adversarial cycle instance")
    lb.add_argument("--v", type=float, required=True)
    lb.add_argument("--a", type=float, required=True)
    lb.add_argument("--T", type=int, required=True)
    lb.add_argument("--seed", type=int, default=0)
    lb.add_argument("--out", help="write the mean/prediction sequences as CSV")
    lb.set_defaults(fn=cmd_lowerbound)

    hw = sub.add_parser("hw-forecast", help="triple exponential smoothing forecast of a CSV series")
    hw.add_argument("csv")
    hw.add_argument("--alpha", type=float, required=True)
    hw.add_argument("--beta", type=float, required=True)
    hw.add_argument("--gamma-s", dest="gamma_s", type=float, required=True)
    hw.add_argument("--season-length", dest="season_length", type=int, required=True)
    hw.add_argument("--horizon", type=int, required=True)
    hw.add_argument("--out")
    hw.set_defaults(fn=cmd_hw_forecast)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
