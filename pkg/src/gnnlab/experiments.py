"""Desk-scale Monte-Carlo sweeps: phase-transition thresholds, convergence
curves, joint success grids, and pruning-strategy comparisons.

Trials are embarrassingly parallel; every trial seed is derived from
(base_seed, cell, |D| index, trial, arm) so results are byte-identical for
any job count after sorting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from multiprocessing import get_context

import numpy as np
from scipy import stats

from .graph_core import TAG_VNMINUS, TAG_VNPLUS
from .sampler import estimate_alpha, gamma_for_alpha
from .synth_data import GenConfig, generate_graph, generate_patterns
from .trainer import TrainConfig, TrialOutcome, run_algorithm1

SWEEP_KINDS = ("phase_transition", "convergence", "joint_grid", "prune_compare")
PARAMS = ("alpha", "beta", "r", "K", "sigma", "D")

# desk-scale defaults; the full-scale profile is gen_full below
DESK_GEN = GenConfig(n=2000, degree=10, d=30, L=30, sigma=0.1)
FULL_GEN = GenConfig(n=10000, degree=30, d=50, L=200, sigma=0.2,
                     pattern_mode="relaxed")


@dataclass
class SweepSpec:
    kind: str
    gen: GenConfig = field(default_factory=lambda: replace(DESK_GEN))
    train: TrainConfig = field(default_factory=TrainConfig)
    param: str = "alpha"
    grid: tuple = ()
    grid2: tuple = ()                  # second axis (joint_grid: beta)
    d_grid: tuple = ()                 # |D| values for phase-transition search
    trials: int = 100
    base_seed: int = 0
    success_level: float = 0.95

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ValueError(f"unknown sweep kind {self.kind!r}")
        if self.param not in PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}")
        if len(self.grid) == 0:
            raise ValueError("empty parameter grid")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[dict]            # one per trial, self-describing
    summary: list[dict]         # one per (cell, |D|) aggregate
    fit: dict                   # thresholds, slopes, R^2


def derive_seed(base: int, *indices: int) -> int:
    ss = np.random.SeedSequence([base, *indices])
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))


def apply_cell(gen: GenConfig, train: TrainConfig, param: str, value: float,
               ) -> tuple[GenConfig, TrainConfig]:
    """Specialize the base configs for one grid cell."""
    if param == "alpha":
        s = train.sampling
        gamma = gamma_for_alpha(float(value), gen.degree, s.r)
        return gen, replace(train, sampling=replace(s, kind="two_tier", gamma=gamma))
    if param == "beta":
        return gen, replace(train, beta=float(value))
    if param == "r":
        return gen, replace(train, sampling=replace(train.sampling, r=int(value)))
    if param == "K":
        return gen, replace(train, K=int(value))
    if param == "sigma":
        return replace(gen, sigma=float(value)), train
    if param == "D":
        return replace(gen, train_size=int(value)), train
    raise ValueError(param)


def run_trial(gen: GenConfig, train: TrainConfig, seed: int) -> TrialOutcome:
    """One independent trial: fresh patterns, graph, split and model."""
    gen = replace(gen, seed=seed)
    train = replace(train, seed=seed)
    patterns = generate_patterns(gen)
    graph, d_train, d_test = generate_graph(patterns, gen)
    _, outcome = run_algorithm1(graph, d_train, train, test=d_test)
    return outcome


def _worker(task: tuple) -> dict:
    gen, train, seed, meta = task
    out = run_trial(gen, train, seed)
    row = dict(meta)
    row["seed"] = seed
    row.update(out.to_json())
    return row


def _run_tasks(tasks: list[tuple], jobs: int) -> list[dict]:
    if jobs <= 1 or len(tasks) < 2:
        rows = [_worker(t) for t in tasks]
    else:
        with get_context("fork").Pool(jobs) as pool:
            chunk = max(1, len(tasks) // (jobs * 8))
            rows = pool.map(_worker, tasks, chunksize=chunk)
    return sorted(rows, key=lambda r: (r.get("cell", 0), r.get("d", 0),
                                       r.get("arm", ""), r.get("trial", 0)))


def measure_alpha(gen: GenConfig, train: TrainConfig, samples: int = 20000) -> float:
    """Monte-Carlo alpha of the cell's sampler on a representative graph,
    over the irrelevant-node group."""
    gen = replace(gen, seed=derive_seed(0, 987))
    patterns = generate_patterns(gen)
    graph, _, _ = generate_graph(patterns, gen)
    vn = np.flatnonzero(np.isin(graph.tags, (TAG_VNPLUS, TAG_VNMINUS)))
    rng = np.random.default_rng(derive_seed(1, 987))
    return estimate_alpha(train.sampling, graph, vn, samples, rng).alpha


def _predictor(spec: SweepSpec, value: float, alpha_hat: float) -> float:
    if spec.param == "alpha":
        return alpha_hat ** -2
    if spec.param == "beta":
        return (1.0 - value) ** 2
    if spec.param == "r":
        return value ** 2
    if spec.param == "K":
        return 1.0 / value
    if spec.param == "sigma":
        return value ** 2
    return value


def _linfit(x: list[float], y: list[float]) -> dict:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 2:
        return {"slope": float("nan"), "intercept": float("nan"),
                "r2": float("nan"), "points": int(ok.sum())}
    res = stats.linregress(x[ok], y[ok])
    return {"slope": float(res.slope), "intercept": float(res.intercept),
            "r2": float(res.rvalue ** 2), "points": int(ok.sum())}


def phase_transition(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Sweep |D| per cell; threshold = smallest |D| with success rate >=
    success_level (plus the interpolated 0.5 crossing); fit thresholds
    against the theory's predictor."""
    if len(spec.d_grid) == 0:
        raise ValueError("phase_transition needs a |D| search grid")
    tasks = []
    for ci, value in enumerate(spec.grid):
        gen, train = apply_cell(spec.gen, spec.train, spec.param, value)
        for di, dsize in enumerate(spec.d_grid):
            gen_d = replace(gen, train_size=int(dsize))
            for t in range(spec.trials):
                seed = derive_seed(spec.base_seed, ci, di, t)
                tasks.append((gen_d, train, seed,
                              {"cell": ci, "value": float(value), "d": int(dsize),
                               "trial": t}))
    rows = _run_tasks(tasks, jobs)

    summary, thresholds, thresholds_50, predictors, alpha_hats = [], [], [], [], []
    for ci, value in enumerate(spec.grid):
        gen, train = apply_cell(spec.gen, spec.train, spec.param, value)
        a_hat = measure_alpha(gen, train) if spec.param in ("alpha", "r") else float("nan")
        alpha_hats.append(a_hat)
        rates = []
        for dsize in spec.d_grid:
            sel = [r for r in rows if r["cell"] == ci and r["d"] == dsize]
            rate = float(np.mean([r["success"] for r in sel]))
            iters = float(np.mean([r["iterations"] for r in sel]))
            rates.append(rate)
            summary.append({"cell": ci, "value": float(value), "alpha_hat": a_hat,
                            "d": int(dsize), "success_rate": rate,
                            "mean_iterations": iters, "trials": len(sel)})
        rates = np.array(rates)
        dd = np.array(spec.d_grid, dtype=float)
        hit = np.flatnonzero(rates >= spec.success_level)
        thr = float(dd[hit[0]]) if len(hit) else float("nan")
        cross = np.flatnonzero(rates >= 0.5)
        if len(cross):
            i = cross[0]
            if i == 0 or rates[i] == rates[i - 1]:
                thr50 = float(dd[i])
            else:
                f = (0.5 - rates[i - 1]) / (rates[i] - rates[i - 1])
                thr50 = float(dd[i - 1] + f * (dd[i] - dd[i - 1]))
        else:
            thr50 = float("nan")
        thresholds.append(thr)
        thresholds_50.append(thr50)
        predictors.append(_predictor(spec, value, a_hat))
        summary[-1]["threshold"] = thr
        summary[-1]["threshold_50"] = thr50

    # the 0.5 crossing interpolates between grid points, so it is the
    # better-conditioned response for the linear fit
    fit = {"param": spec.param, "grid": list(map(float, spec.grid)),
           "alpha_hat": alpha_hats, "predictor": predictors,
           "threshold": thresholds, "threshold_50": thresholds_50,
           "linear_fit": _linfit(predictors, thresholds_50)}
    return SweepResult(spec=spec, rows=rows, summary=summary, fit=fit)


def convergence_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Mean iterations-to-success per cell at a fixed |D| above threshold."""
    tasks = []
    for ci, value in enumerate(spec.grid):
        gen, train = apply_cell(spec.gen, spec.train, spec.param, value)
        for t in range(spec.trials):
            seed = derive_seed(spec.base_seed, ci, 0, t)
            tasks.append((gen, train, seed,
                          {"cell": ci, "value": float(value), "d": gen.train_size,
                           "trial": t}))
    rows = _run_tasks(tasks, jobs)

    summary, means, preds = [], [], []
    for ci, value in enumerate(spec.grid):
        gen, train = apply_cell(spec.gen, spec.train, spec.param, value)
        a_hat = measure_alpha(gen, train) if spec.param in ("alpha", "r") else float("nan")
        sel = [r for r in rows if r["cell"] == ci]
        iters = np.array([r["iterations"] for r in sel], dtype=float)
        censored = int(np.sum([r["censored"] for r in sel]))
        mean_it = float(np.mean(iters))
        summary.append({"cell": ci, "value": float(value), "alpha_hat": a_hat,
                        "d": gen.train_size, "mean_iterations": mean_it,
                        "std_iterations": float(np.std(iters)),
                        "success_rate": float(np.mean([r["success"] for r in sel])),
                        "censored": censored, "trials": len(sel)})
        means.append(mean_it)
        if spec.param == "alpha":
            preds.append(1.0 / a_hat)
        elif spec.param == "beta":
            preds.append(float(value))
        else:
            preds.append(float(value))
    fit = {"param": spec.param, "grid": list(map(float, spec.grid)),
           "predictor": preds, "mean_iterations": means,
           "linear_fit": _linfit(preds, means)}
    return SweepResult(spec=spec, rows=rows, summary=summary, fit=fit)


def joint_grid(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Success-rate matrix over (alpha grid) x (beta grid2) at fixed |D|."""
    if len(spec.grid2) == 0:
        raise ValueError("joint_grid needs grid (alpha) and grid2 (beta)")
    tasks = []
    for ai, a in enumerate(spec.grid):
        gen, train_a = apply_cell(spec.gen, spec.train, "alpha", a)
        for bi, beta in enumerate(spec.grid2):
            _, train = apply_cell(gen, train_a, "beta", beta)
            for t in range(spec.trials):
                seed = derive_seed(spec.base_seed, ai, bi, t)
                tasks.append((gen, train, seed,
                              {"cell": ai * len(spec.grid2) + bi, "value": float(a),
                               "beta": float(beta), "d": gen.train_size, "trial": t}))
    rows = _run_tasks(tasks, jobs)
    matrix = np.zeros((len(spec.grid), len(spec.grid2)))
    summary = []
    for ai, a in enumerate(spec.grid):
        for bi, beta in enumerate(spec.grid2):
            ci = ai * len(spec.grid2) + bi
            sel = [r for r in rows if r["cell"] == ci]
            rate = float(np.mean([r["success"] for r in sel]))
            matrix[ai, bi] = rate
            summary.append({"cell": ci, "alpha": float(a), "beta": float(beta),
                            "d": spec.gen.train_size, "success_rate": rate,
                            "trials": len(sel)})
    fit = {"alpha_grid": list(map(float, spec.grid)),
           "beta_grid": list(map(float, spec.grid2)),
           "success_matrix": matrix.tolist()}
    return SweepResult(spec=spec, rows=rows, summary=summary, fit=fit)


def pruning_comparison(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Arms (none, magnitude, random) at the spec's beta, paired seeds, mean
    0/1 test error per |D| value of the grid (param must be D)."""
    arms = ("none", "magnitude", "random")
    tasks = []
    for ci, dsize in enumerate(spec.grid):
        gen, _ = apply_cell(spec.gen, spec.train, "D", dsize)
        for arm_i, arm in enumerate(arms):
            train = replace(spec.train, prune_kind=arm,
                            beta=0.0 if arm == "none" else spec.train.beta)
            for t in range(spec.trials):
                seed = derive_seed(spec.base_seed, ci, 0, t)  # paired across arms
                tasks.append((gen, train, seed,
                              {"cell": ci, "value": float(dsize), "d": int(dsize),
                               "arm": arm, "trial": t}))
    rows = _run_tasks(tasks, jobs)
    summary = []
    curves = {arm: [] for arm in arms}
    for ci, dsize in enumerate(spec.grid):
        for arm in arms:
            sel = [r for r in rows if r["cell"] == ci and r["arm"] == arm]
            err = float(np.mean([r["test_error"] for r in sel]))
            curves[arm].append(err)
            summary.append({"cell": ci, "d": int(dsize), "arm": arm,
                            "mean_test_error": err,
                            "mean_iterations": float(np.mean([r["iterations"]
                                                              for r in sel])),
                            "success_rate": float(np.mean([r["success"] for r in sel])),
                            "trials": len(sel)})
    fit = {"d_grid": list(map(float, spec.grid)), "mean_test_error": curves}
    return SweepResult(spec=spec, rows=rows, summary=summary, fit=fit)


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    fn = {"phase_transition": phase_transition, "convergence": convergence_sweep,
          "joint_grid": joint_grid, "prune_compare": pruning_comparison}[spec.kind]
    return fn(spec, jobs=jobs)


# ---------------------------------------------------------------------------
# output files

def _csv_dump(rows: list[dict], path: str) -> None:
    import csv
    keys = sorted({k for r in rows for k in r})
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def write_outputs(result: SweepResult, out_dir: str) -> dict[str, str]:
    import os
    os.makedirs(out_dir, exist_ok=True)
    paths = {"sweep": os.path.join(out_dir, "sweep.csv"),
             "summary": os.path.join(out_dir, "summary.csv"),
             "fit": os.path.join(out_dir, "fit.json")}
    rows = [{k: v for k, v in r.items() if k != "wall_time"} for r in result.rows]
    _csv_dump(rows, paths["sweep"])
    _csv_dump(result.summary, paths["summary"])
    with open(paths["fit"], "w") as f:
        json.dump(result.fit, f, indent=2, sort_keys=True)
        f.write("\n")
    return paths
