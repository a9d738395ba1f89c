"""Experiment dispatch: each kind turns a Config into named output files."""

from __future__ import annotations

import hashlib
import json
import math
import time
from pathlib import Path
from typing import Callable

import numpy as np

import speciate
from speciate.core import resolve_threads
from speciate.experiments.collapse import scaling_collapse
from speciate.experiments.config import Config, ConfigError, load_config
from speciate.experiments.output import RunManifest, format_csv, svg_heatmap, svg_lines, write_run
from speciate.experiments.uturn import misattribution_curve, u_turn
from speciate.ising import c_rs
from speciate.mixture import MixtureModel
from speciate.speciation import (
    free_entropy_table,
    solve_mixture_asymptotic,
    solve_mixture_mc,
    solve_mixture_replica,
    stats_from_table,
)

# hierarchical default: four close pairs grouped into two super-groups
HIERARCHICAL_BETAS = (0.20, 0.25, 0.50, 0.55, 1.00, 1.05, 1.30, 1.35)


def _mixture(cfg: Config) -> MixtureModel:
    if cfg.kind != "ising":
        raise ConfigError([f"experiment needs model.kind = ising, got {cfg.kind!r}"])
    return MixtureModel.ising(cfg.betas, cfg.weights)


def _json(d) -> bytes:
    return (json.dumps(d, sort_keys=True, indent=2, allow_nan=True) + "\n").encode("utf-8")


def merge_events(pair_times: dict[tuple[int, int], float], R: int) -> list[float]:
    """Times at which the number of merged blocks drops (single linkage on pair times)."""
    parent = list(range(R))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    events = []
    for (r, s), t in sorted(pair_times.items(), key=lambda kv: kv[1]):
        a, b = find(r), find(s)
        if a != b and math.isfinite(t):
            parent[a] = b
            events.append(float(t))
    return events


def run_predict(cfg: Config, threads: int) -> dict[str, bytes]:
    mix = _mixture(cfg)
    rows, times = [], {}
    if cfg.method == "asymptotic":
        for (r, s), t in solve_mixture_asymptotic(mix, cfg.N, cfg.K).items():
            times[(r, s)] = t
            rows.append((r, s, t, t, t, math.nan, math.nan))
    else:
        if cfg.method == "mc":
            solves, _ = solve_mixture_mc(
                mix, cfg.N, cfg.K, cfg.n_samples, cfg.seed, cfg.grid(), threads, fluctuation=cfg.fluctuation
            )
        else:
            solves = solve_mixture_replica(mix, cfg.N, cfg.K, seed=cfg.seed, population_size=cfg.population_size)
        for (r, s), p in sorted(solves.items()):
            times[(r, s)] = p.t_merge
            lo, hi = p.bracket
            rows.append((r, s, p.forward.t_rs, p.backward.t_rs, p.t_merge, lo, hi))
    events = merge_events(times, mix.R)
    summary = {
        "events": events,
        "pairs": [
            {"r": r, "s": s, "t_forward": a, "t_backward": b, "t_merge": m, "bracket": [lo, hi]}
            for r, s, a, b, m, lo, hi in rows
        ],
    }
    for k, t in enumerate(events, start=1):
        summary[f"t{k}"] = t
    csv = format_csv(["r", "s", "t_forward", "t_backward", "t_merge", "bracket_lo", "bracket_hi"], rows)
    return {"predict.json": _json(summary), "predictions.csv": csv}


def run_uturn(cfg: Config, threads: int) -> dict[str, bytes]:
    mix = _mixture(cfg)
    am = u_turn(mix, cfg.t, cfg.n_samples, cfg.N, cfg.seed, cfg.dt, cfg.t_min, threads)
    header = ["origin"] + [f"attributed_{s}" for s in range(mix.R)]
    rows = [(r, *am.entries[r]) for r in range(mix.R)]
    counts = [(r, *am.counts[r]) for r in range(mix.R)]
    return {
        "attribution.csv": format_csv(header, rows),
        "counts.csv": format_csv(header, counts),
        "attribution.svg": svg_heatmap(am.entries, f"attribution at t = {cfg.t:g}, N = {cfg.N}"),
    }


def run_misattribution(cfg: Config, threads: int) -> dict[str, bytes]:
    mix = _mixture(cfg)
    grid = cfg.grid()
    rows, series = [], {}
    for r in range(mix.R):
        pts = misattribution_curve(mix, r, grid, cfg.n_samples, cfg.N, cfg.seed, cfg.dt, cfg.t_min, threads)
        rows += [(r, p.t, p.fraction, p.std_error) for p in pts]
        series[f"origin {r}"] = [p.fraction for p in pts]
    return {
        "misattribution.csv": format_csv(["origin", "t", "fraction", "std_error"], rows),
        "misattribution.svg": svg_lines(grid, series, f"misattribution, N = {cfg.N}", "t"),
    }


def band_rows(mix: MixtureModel, pairs, grid, n_samples: int, n: int, seed: int, K: float, threads: int):
    """Per (r, s, t): gap mean, per-sample sd, K-sigma band and the C_rs scale."""
    rows = []
    tables = {}
    for r in sorted({r for r, _ in pairs}):
        tables[r] = free_entropy_table(mix, r, grid, n_samples, n, seed, threads)
    for r, s in pairs:
        c = c_rs(mix.betas[r], mix.betas[s])
        for k, t in enumerate(grid):
            st = stats_from_table(tables[r][k], t, r, s, seed)
            sd = math.sqrt(st.diff_variance)
            rows.append(
                (r, s, float(t), st.diff_mean, sd, st.std_error, st.diff_mean - K * sd, st.diff_mean + K * sd,
                 math.sqrt(c / (2 * n)) * math.exp(-2 * t))
            )
    return rows


def run_bands(cfg: Config, threads: int) -> dict[str, bytes]:
    mix = _mixture(cfg)
    grid = cfg.grid()
    pairs = cfg.all_pairs()
    K = cfg.K
    rows = band_rows(mix, pairs, grid, cfg.n_samples, cfg.N, cfg.seed, K, threads)
    header = ["r", "s", "t", "mean_diff", "sd", "std_error", "band_lo", "band_hi", "c_scale"]
    series = {}
    for r, s in pairs:
        sel = [row for row in rows if row[0] == r and row[1] == s]
        series[f"{r}-{s} mean"] = [row[3] for row in sel]
        series[f"{r}-{s} lower"] = [row[6] for row in sel]
    return {
        "bands.csv": format_csv(header, rows),
        "bands.svg": svg_lines(grid, series, f"free-entropy gap and {K:g}-sigma band, N = {cfg.N}", "t"),
    }


def run_replica(cfg: Config, threads: int) -> dict[str, bytes]:
    from speciate.replica import f_rs_analytic_many

    mix = _mixture(cfg)
    grid = cfg.grid()
    rows = []
    for r in sorted({r for r, _ in cfg.all_pairs()}):
        models = sorted({s for rr, s in cfg.all_pairs() if rr == r} | {r})
        table = free_entropy_table(mix, r, grid, cfg.n_samples, cfg.N, cfg.seed, threads)
        for k, t in enumerate(grid):
            res = f_rs_analytic_many(
                mix.betas[r], [mix.betas[s] for s in models], float(t), cfg.population_size, seed=cfg.seed
            )
            for s, rep in zip(models, res):
                f = table[k][:, s]
                se = float(f.std(ddof=1) / math.sqrt(len(f)))
                rows.append((r, s, float(t), rep.f_rs, rep.k_std_error, float(f.mean()), se, rep.f_rs - float(f.mean())))
    header = ["r", "s", "t", "f_replica", "replica_se", "f_mc", "mc_se", "difference"]
    return {"replica.csv": format_csv(header, rows)}


def run_gaussian(cfg: Config, threads: int) -> dict[str, bytes]:
    from speciate.gaussian import (
        GaussianVarModel,
        closed_form_ts,
        potential_radial,
        solve_curvature_time,
        solve_gm_criterion,
    )

    if cfg.kind != "gaussian-var":
        raise ConfigError(["gaussian experiment needs model.kind = gaussian-var"])
    model = GaussianVarModel(cfg.delta, cfg.N)
    r_grid = np.linspace(0.4, 1.6, 121)
    rows, series = [], {}
    for t in cfg.grid():
        v = [potential_radial(model, float(r), float(t)) for r in r_grid]
        # shift so curves share the origin at r = 1
        v1 = potential_radial(model, 1.0, float(t))
        rows += [(float(t), float(r), vi) for r, vi in zip(r_grid, v)]
        series[f"t = {t:.3g}"] = [vi - v1 for vi in v]
    summary = {
        "N": cfg.N,
        "delta": cfg.delta,
        "t_s_solve": solve_curvature_time(model),
        "t_s_closed_form": closed_form_ts(cfg.N, cfg.delta),
        "t_criterion_K": solve_gm_criterion(model, cfg.K),
        "K": cfg.K,
    }
    return {
        "potential.csv": format_csv(["t", "r", "V"], rows),
        "potential.svg": svg_lines(r_grid, series, f"radial potential, N = {cfg.N}, delta = {cfg.delta:g}", "r"),
        "gaussian.json": _json(summary),
    }


def run_collapse(cfg: Config, threads: int) -> dict[str, bytes]:
    mix = _mixture(cfg)
    tab = scaling_collapse(mix, cfg.N_list, cfg.grid(), cfg.n_samples, cfg.seed, cfg.dt, cfg.t_min, threads)
    rows = []
    for k, n in enumerate(tab.N_list):
        for j, t in enumerate(tab.t_grid):
            rows.append((int(n), float(t), float(t) / math.log(n), tab.fractions[k, j], tab.std_errors[k, j]))
    summary = {
        "N_list": [int(n) for n in tab.N_list],
        "collapse_metric": tab.metric if tab.metric_defined else None,
        "collapse_metric_defined": tab.metric_defined,
        "crossing_t": [None if not math.isfinite(c) else c for c in tab.crossing_t],
        "crossing_level": 0.5 * tab.plateau,
        "relative_spread_raw": tab.spread_raw if math.isfinite(tab.spread_raw) else None,
        "relative_spread_scaled": tab.spread_scaled if math.isfinite(tab.spread_scaled) else None,
    }
    lines = {f"N = {n}": tab.fractions[k] for k, n in enumerate(tab.N_list)}
    # common x for the plot: scaled grid of the largest N is close enough visually
    return {
        "collapse.csv": format_csv(["N", "t", "t_over_logN", "fraction", "std_error"], rows),
        "collapse.json": _json(summary),
        "collapse.svg": svg_lines(tab.t_grid / math.log(tab.N_list[-1]), lines, "misattribution vs t / log N", "t / log N"),
    }


EXPERIMENTS: dict[str, Callable[[Config, int], dict[str, bytes]]] = {
    "predict": run_predict,
    "uturn": run_uturn,
    "misattribution": run_misattribution,
    "bands": run_bands,
    "replica": run_replica,
    "gaussian": run_gaussian,
    "collapse": run_collapse,
}


def run_experiment(
    config: str | Path | Config | None,
    kind: str | None = None,
    threads: int = 1,
    seed: int | None = None,
    out_dir: str | Path | None = None,
    t: float | None = None,
) -> RunManifest:
    """Run one experiment and persist its outputs and manifest atomically.

    Args:
        config: path to a config file or manifest, a Config, or None for defaults.
        kind: experiment name; falls back to ``experiment.kind`` in the config.
        threads: worker threads, 0 for all cores. Outputs do not depend on it.
        seed, out_dir, t: command-line overrides of the config values.
    """
    cfg = config if isinstance(config, Config) else load_config(config)
    if seed is not None:
        cfg.seed = int(seed)
    if out_dir is not None:
        cfg.out_dir = str(out_dir)
    if t is not None:
        cfg.t = float(t)
    kind = kind or cfg.experiment
    if kind not in EXPERIMENTS:
        raise ConfigError([f"unknown experiment {kind!r}; choose from {sorted(EXPERIMENTS)}"])
    cfg.experiment = kind
    cfg.validate()
    start = time.perf_counter()
    files = EXPERIMENTS[kind](cfg, resolve_threads(threads))
    echo = cfg.echo()
    manifest = RunManifest(kind, echo, cfg.seed, speciate.__version__, time.perf_counter() - start)
    digest = hashlib.sha256(json.dumps(echo, sort_keys=True).encode()).hexdigest()[:10]
    write_run(cfg.out_dir, f"{kind}-seed{cfg.seed}-{digest}", files, manifest)
    return manifest
