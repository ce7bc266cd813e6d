"""Command-line interface.

Commands: gen, train, sweep, analyze, vc, alpha. Configuration is a UTF-8
file of `key = value` lines with `#` comments and dotted keys (gen.*,
train.*, sampling.*, sweep.*); any key can be overridden on the command line
as `--key value`. Every command writes a RunManifest JSON before computing.
Diagnostics go to stderr, data to files; exit code 0 iff no error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import analysis, experiments, gnn_model, graph_core, sampler, synth_data, trainer

VERSION = "0.1.0"
CONFIG_SCHEMA = "1"


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# config handling

def _parse_value(s: str):
    s = s.strip()
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    if "," in s:
        return tuple(_parse_value(p) for p in s.split(",") if p.strip())
    return s


def parse_config(path: str | None) -> dict:
    cfg: dict = {}
    if path is None:
        return cfg
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{ln}: expected 'key = value'")
            key, val = line.split("=", 1)
            cfg[key.strip()] = _parse_value(val)
    return cfg


def apply_overrides(cfg: dict, extras: list[str]) -> dict:
    if len(extras) % 2 != 0:
        raise CliError(f"dangling override: {extras[-1]!r}")
    for i in range(0, len(extras), 2):
        key = extras[i]
        if not key.startswith("--"):
            raise CliError(f"expected --key value, got {key!r}")
        cfg[key[2:]] = _parse_value(extras[i + 1])
    return cfg


def _build(cls, cfg: dict, prefix: str, **extra):
    names = {f.name for f in fields(cls)}
    kwargs = dict(extra)
    for key, val in cfg.items():
        if key.startswith(prefix + "."):
            name = key[len(prefix) + 1:]
            if name not in names:
                raise CliError(f"unknown config key {key!r}")
            kwargs[name] = val
    return cls(**kwargs)


def build_gen(cfg: dict) -> synth_data.GenConfig:
    base = _build(synth_data.GenConfig, cfg, "gen")
    if "seed" in cfg:
        base = replace(base, seed=int(cfg["seed"]))
    return base


def build_train(cfg: dict) -> trainer.TrainConfig:
    strat = _build(sampler.SamplingStrategy, cfg, "sampling")
    tc = _build(trainer.TrainConfig, cfg, "train", sampling=strat)
    if "seed" in cfg:
        tc = replace(tc, seed=int(cfg["seed"]))
    return tc


def build_sweep(cfg: dict) -> experiments.SweepSpec:
    gen = build_gen(cfg)
    train = build_train(cfg)
    kwargs = {}
    names = {f.name for f in fields(experiments.SweepSpec)}
    for key, val in cfg.items():
        if key.startswith("sweep."):
            name = key[6:]
            if name not in names:
                raise CliError(f"unknown config key {key!r}")
            if name in ("grid", "grid2", "d_grid") and not isinstance(val, tuple):
                val = (val,)
            kwargs[name] = val
    if "seed" in cfg:
        kwargs.setdefault("base_seed", int(cfg["seed"]))
    if "kind" not in kwargs:
        raise CliError("missing config key 'sweep.kind'")
    return experiments.SweepSpec(gen=gen, train=train, **kwargs)


def _reject_unknown(cfg: dict) -> None:
    known_prefixes = ("gen.", "train.", "sampling.", "sweep.")
    known_bare = {"seed"}
    for key in cfg:
        if key in known_bare or key.startswith(known_prefixes):
            continue
        raise CliError(f"unknown config key {key!r}")


# ---------------------------------------------------------------------------
# manifest

@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    outputs: list[str]
    version: str = VERSION
    schema: str = CONFIG_SCHEMA

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def write(self, path: str) -> None:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        # record outputs relative to the manifest so a run directory is
        # relocatable and reruns into different directories stay byte-identical
        base = os.path.dirname(os.path.abspath(path))
        outs = [os.path.relpath(os.path.abspath(o), base) for o in self.outputs]
        payload = {"command": self.command, "config": self.config,
                   "seed": self.seed, "outputs": outs,
                   "version": self.version, "schema": self.schema,
                   "config_hash": self.config_hash}
        with open(path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")


def _resolved(objs: dict) -> dict:
    out = {}
    for prefix, obj in objs.items():
        for k, v in asdict(obj).items():
            if isinstance(v, dict):  # nested dataclass (sampling strategy)
                for k2, v2 in v.items():
                    out[f"sampling.{k2}"] = v2
            else:
                out[f"{prefix}.{k}"] = v if not isinstance(v, tuple) else list(v)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_gen(args, cfg: dict) -> None:
    _reject_unknown(cfg)
    gen = build_gen(cfg)
    manifest = RunManifest("gen", _resolved({"gen": gen}), gen.seed, [args.out])
    manifest.write(args.out + ".manifest.json")
    patterns = synth_data.generate_patterns(gen)
    graph, train_set, test_set = synth_data.generate_graph(patterns, gen)
    with open(args.out, "w") as f:
        f.write(graph_core.save_graph(graph))
    print(f"wrote {args.out}: n={graph.n} d={graph.d} "
          f"train={len(train_set)} test={len(test_set)}", file=sys.stderr)


def _patterns_for(graph, cfg: dict):
    gen = build_gen(cfg)
    if gen.d != graph.d:
        print("note: gen.d does not match the graph; pattern-based stats skipped",
              file=sys.stderr)
        return None
    return synth_data.generate_patterns(gen)


def cmd_train(args, cfg: dict) -> None:
    _reject_unknown(cfg)
    with open(args.graph) as f:
        graph = graph_core.load_graph(f.read())
    gen = build_gen(cfg)
    tc = build_train(cfg)
    if args.no_prune:
        tc = replace(tc, beta=0.0)
    if args.trace_projections:
        tc = replace(tc, trace_every=1)
    os.makedirs(args.out, exist_ok=True)
    outputs = [os.path.join(args.out, p)
               for p in ("outcome.jsonl", "checkpoint.txt", "trace.csv")]
    manifest = RunManifest("train", _resolved({"gen": gen, "train": tc}),
                           tc.seed, outputs)
    manifest.write(os.path.join(args.out, "manifest.json"))

    rng = np.random.default_rng(np.random.SeedSequence([tc.seed, 17]))
    size = min(gen.train_size, graph.n)
    pos = np.flatnonzero(graph.labels == 1)
    neg = np.flatnonzero(graph.labels == -1)
    half = min(size // 2, len(pos), len(neg))
    train_ids = np.sort(np.concatenate([rng.choice(pos, half, replace=False),
                                        rng.choice(neg, half, replace=False)]))
    subset = graph_core.LabeledSubset(train_ids)
    patterns = _patterns_for(graph, cfg)
    model, outcome = trainer.run_algorithm1(graph, subset, tc, patterns=patterns)
    # wall_time is a console diagnostic, not a result; keeping it out of the
    # file makes reruns with the same seed byte-identical
    record = {k: v for k, v in outcome.to_json().items() if k != "wall_time"}
    with open(outputs[0], "w") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")
    with open(outputs[1], "w") as f:
        f.write(gnn_model.save_checkpoint(model))
    if outcome.trace is not None:
        with open(outputs[2], "w") as f:
            f.write("iteration,pattern,neuron,projection\n")
            for ti, t in enumerate(outcome.trace_iters):
                for p in range(outcome.trace.shape[1]):
                    for k in range(outcome.trace.shape[2]):
                        f.write(f"{t},{p},{k},{outcome.trace[ti, p, k]:.17g}\n")
    print(f"success={outcome.success} iterations={outcome.iterations} "
          f"test_error={outcome.test_error:.4f}", file=sys.stderr)


def cmd_sweep(args, cfg: dict) -> None:
    _reject_unknown(cfg)
    spec = build_sweep(cfg)
    outputs = [os.path.join(args.out, p)
               for p in ("sweep.csv", "summary.csv", "fit.json")]
    manifest = RunManifest("sweep", _resolved({"gen": spec.gen, "train": spec.train})
                           | {f"sweep.{k}": v for k, v in
                              {"kind": spec.kind, "param": spec.param,
                               "grid": list(spec.grid), "grid2": list(spec.grid2),
                               "d_grid": list(spec.d_grid), "trials": spec.trials,
                               "base_seed": spec.base_seed}.items()},
                           spec.base_seed, outputs)
    os.makedirs(args.out, exist_ok=True)
    manifest.write(os.path.join(args.out, "manifest.json"))
    result = experiments.run_sweep(spec, jobs=args.jobs)
    experiments.write_outputs(result, args.out)
    for row in result.summary:
        print(json.dumps(row, sort_keys=True), file=sys.stderr)


def cmd_analyze(args, cfg: dict) -> None:
    _reject_unknown(cfg)
    with open(args.checkpoint) as f:
        model = gnn_model.load_checkpoint(f.read())
    with open(args.graph) as f:
        graph = graph_core.load_graph(f.read())
    os.makedirs(args.out, exist_ok=True)
    outputs = [os.path.join(args.out, p) for p in ("lucky_report.json", "scatter.csv")]
    gen = build_gen(cfg)
    RunManifest("analyze", _resolved({"gen": gen}), gen.seed, outputs).write(
        os.path.join(args.out, "manifest.json"))
    patterns = _patterns_for(graph, cfg)
    if patterns is None:
        raise CliError("analyze needs gen.* config matching the graph dimension")
    rep = analysis.detect_lucky(model, patterns, graph.sigma)
    with open(outputs[0], "w") as f:
        json.dump({"lucky_plus": rep.lucky_plus.tolist(),
                   "lucky_minus": rep.lucky_minus.tolist(),
                   "fraction_plus": rep.fraction_plus,
                   "fraction_minus": rep.fraction_minus,
                   "prop1_bound": rep.prop1_bound}, f, indent=2, sort_keys=True)
        f.write("\n")
    rows = analysis.neuron_scatter(model, patterns)
    with open(outputs[1], "w") as f:
        f.write("neuron,sign,norm,angle_plus,angle_minus\n")
        for r in rows:
            f.write(f"{r['neuron']},{r['sign']},{r['norm']:.17g},"
                    f"{r['angle_plus']:.17g},{r['angle_minus']:.17g}\n")
    print(f"lucky fractions: +{rep.fraction_plus:.4f} / -{rep.fraction_minus:.4f}",
          file=sys.stderr)


def cmd_vc(args, cfg: dict) -> None:
    L = args.L
    RunManifest("vc", {"L": L}, 0, [args.out]).write(args.out + ".manifest.json")
    ok = analysis.vc_verify(L)
    labelings = 2 ** (2 ** (L // 2 - 1))
    with open(args.out, "w") as f:
        json.dump({"L": L, "verified": bool(ok), "labelings": labelings},
                  f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"vc L={L}: verified={ok} over {labelings} labelings", file=sys.stderr)
    if not ok:
        raise CliError("shattering verification failed")


def cmd_alpha(args, cfg: dict) -> None:
    _reject_unknown(cfg)
    with open(args.graph) as f:
        graph = graph_core.load_graph(f.read())
    strat = _build(sampler.SamplingStrategy, cfg, "sampling")
    if args.kind:
        strat = replace(strat, kind=args.kind)
    seed = int(cfg.get("seed", 0))
    RunManifest("alpha", _resolved({"sampling": strat}), seed, [args.out]).write(
        args.out + ".manifest.json")
    vn = np.flatnonzero(np.isin(graph.tags,
                                (graph_core.TAG_VNPLUS, graph_core.TAG_VNMINUS)))
    subset = vn if len(vn) else np.arange(graph.n)
    rng = np.random.default_rng(seed)
    est = sampler.estimate_alpha(strat, graph, subset, args.samples, rng)
    R = graph.max_degree
    payload = {"alpha_hat": est.alpha, "stderr": est.stderr,
               "per_node_min": est.per_node_min, "kind": strat.kind,
               "r": strat.r, "max_degree": R,
               "uniform_bracket": list(sampler.alpha_bound_uniform(1, R, strat.r)),
               "importance_lower": sampler.alpha_bound_importance(
                   strat.gamma, R, strat.r).lower}
    with open(args.out, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"alpha_hat={est.alpha:.4f} (se {est.stderr:.4f})", file=sys.stderr)


# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gnnlab",
                                description="GNN sparsification laboratory")
    p.add_argument("--version", action="version",
                   version=f"gnnlab {VERSION} (config schema {CONFIG_SCHEMA})")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic graph file")
    g.add_argument("--config", default=None)
    g.add_argument("--out", default="graph.txt")

    t = sub.add_parser("train", help="run the sparsified training pipeline")
    t.add_argument("graph")
    t.add_argument("--config", default=None)
    t.add_argument("--out", default="train_out")
    t.add_argument("--no-prune", action="store_true")
    t.add_argument("--trace-projections", action="store_true")

    s = sub.add_parser("sweep", help="run a Monte-Carlo experiment sweep")
    s.add_argument("spec", help="sweep config file")
    s.add_argument("--out", default="sweep_out")
    s.add_argument("--jobs", type=int, default=1)

    a = sub.add_parser("analyze", help="lucky-neuron report and weight scatter")
    a.add_argument("checkpoint")
    a.add_argument("graph")
    a.add_argument("--config", default=None)
    a.add_argument("--out", default="analyze_out")

    v = sub.add_parser("vc", help="verify the VC shattering construction")
    v.add_argument("L", type=int)
    v.add_argument("--out", default="vc.json")

    al = sub.add_parser("alpha", help="estimate the sampling probability alpha")
    al.add_argument("graph")
    al.add_argument("--config", default=None)
    al.add_argument("--kind", default=None, choices=sampler.KINDS)
    al.add_argument("--samples", type=int, default=100000)
    al.add_argument("--out", default="alpha.json")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        cfg_path = getattr(args, "spec", None) or getattr(args, "config", None)
        cfg = apply_overrides(parse_config(cfg_path), extras)
        {"gen": cmd_gen, "train": cmd_train, "sweep": cmd_sweep,
         "analyze": cmd_analyze, "vc": cmd_vc, "alpha": cmd_alpha}[args.command](args, cfg)
    except (CliError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
