"""Command-line entry point: ``edgesac <command> --config PATH --out DIR [--seed N]``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .classifier import (
    build_dataset,
    confusion_matrix,
    majority_baseline,
    train_classifier,
    write_confusion_csv,
    write_dataset_csv,
)
from .config import ExperimentConfig
from .edgesim import (
    EPISODE_HEADER,
    AgentPolicy,
    AveragePolicy,
    FrequencyPolicy,
    MetricsRecord,
    append_episode_rows,
    evaluate,
    EdgeEnv,
)
from .errors import ConfigError, NumericError
from .sac import CURVE_HEADER, SacAgent, train, write_curve
from .sensors import (
    ACTION_CLASSES,
    CHANNELS,
    FEATURE_HEADER,
    STREAM_HEADER,
    StreamConfig,
    generate_stream,
    read_stream_csv,
    merge_streams,
    stream_features,
    write_features_csv,
    write_stream_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 1, 2, 3

COMPARISON_HEADER = ["policy_name"] + [f"{k}_{s}" for k in MetricsRecord.FIELDS for s in ("mean", "std")]
CHECKPOINT = "sac_checkpoint.json"
LOWER_IS_BETTER = {"mean_response_ms": True, "accuracy_pct": False, "energy_j": True, "utilization_pct": False}


class MissingArtifact(Exception):
    pass


class RunContext:
    def __init__(self, command, cfg, out):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.artifacts = []
        self.started = time.time()
        try:
            os.makedirs(out, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from None
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")

    def path(self, *parts):
        p = os.path.join(self.out, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        return p

    def record(self, path, header=None):
        if header is not None:
            check_header(path, header)
        self.artifacts.append(os.path.relpath(path, self.out))

    def write_manifest(self, seeds, extra=None):
        doc = {
            "command": self.command,
            "config_hash": self.cfg.digest(),
            "seeds": seeds,
            "artifacts": sorted(self.artifacts),
            "tool_version": __version__,
            "started_unix": self.started,
            "finished_unix": time.time(),
        }
        if extra:
            doc.update(extra)
        with open(os.path.join(self.out, f"manifest_{self.command}.json"), "w") as fh:
            json.dump(doc, fh, indent=2)


def check_header(path, header):
    with open(path, newline="") as fh:
        got = next(csv.reader(fh), None)
    if got != list(header):
        raise RuntimeError(f"{path}: header {got} does not match schema {header}")


def athlete_class(i):
    return ACTION_CLASSES[i % len(ACTION_CLASSES)]


def cmd_generate(ctx):
    cfg = ctx.cfg
    p = cfg.pipeline
    seeds = np.random.SeedSequence(cfg.seeds.base).generate_state(p.athletes)
    athletes = []
    for i in range(p.athletes):
        scfg = StreamConfig(action_class=athlete_class(i), duration_s=p.duration_s,
                            rates_hz={c: p.rate_hz for c in CHANNELS}, noise_level=p.noise_level,
                            seed=int(seeds[i]))
        stream = generate_stream(scfg)
        files = []
        for ch in CHANNELS:
            path = ctx.path("streams", f"athlete_{i:03d}", f"{ch}.csv")
            write_stream_csv(path, stream, [ch])
            ctx.record(path, STREAM_HEADER)
            files.append(os.path.relpath(path, ctx.out))
        athletes.append({"athlete": i, "class": scfg.action_class, "seed": int(seeds[i]), "files": files})
    ctx.write_manifest([cfg.seeds.base], {"athletes": athletes})
    return EXIT_OK


def cmd_extract(ctx):
    cfg = ctx.cfg
    root = os.path.join(ctx.out, "streams")
    if not os.path.isdir(root):
        raise MissingArtifact(f"no streams under {root}; run 'generate' first")
    pipe = cfg.pipeline.pipeline_config()
    dirs = sorted(d for d in os.listdir(root) if d.startswith("athlete_"))
    if not dirs:
        raise MissingArtifact(f"no athlete streams under {root}")
    for d in dirs:
        parts = []
        for ch in CHANNELS:
            f = os.path.join(root, d, f"{ch}.csv")
            if not os.path.exists(f):
                raise MissingArtifact(f"missing stream file {f}")
            parts.append(read_stream_csv(f))
        feats = stream_features(merge_streams(parts), pipe)
        path = ctx.path("features", f"{d}.csv")
        write_features_csv(path, feats)
        ctx.record(path, FEATURE_HEADER)
    ctx.write_manifest([cfg.seeds.base])
    return EXIT_OK


def cmd_classify(ctx):
    cfg = ctx.cfg
    c = cfg.classifier
    raw = c.architecture == "conv1d"
    train_set, test_set = build_dataset(c.windows_per_class, c.split, cfg.pipeline.noise_level,
                                        cfg.pipeline.pipeline_config(), seed=cfg.seeds.base, raw=raw)
    mcfg = c.model_config()
    mcfg.seed = cfg.seeds.base
    model, losses = train_classifier(train_set, mcfg)
    result = confusion_matrix(model, test_set)
    majority = majority_baseline(train_set, test_set)

    model_path = ctx.path("classifier_model.json")
    model.save(model_path)
    ctx.record(model_path)
    for name, data in (("train.csv", train_set), ("test.csv", test_set)):
        path = ctx.path(name)
        write_dataset_csv(path, data)
        ctx.record(path)
    path = ctx.path("confusion.csv")
    write_confusion_csv(path, result)
    ctx.record(path, ["true\\pred"] + list(result.classes))
    path = ctx.path("classification_metrics.csv")
    header = ["model", "overall_accuracy"] + [f"{k}_accuracy" for k in result.classes]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for name, r in (("neural", result), ("majority", majority)):
            w.writerow([name, repr(r.overall)] + [repr(float(v)) for v in r.per_class])
    ctx.record(path, header)
    path = ctx.path("classifier_loss.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for k, v in enumerate(losses):
            w.writerow([k, repr(v)])
    ctx.record(path, ["epoch", "loss"])
    ctx.write_manifest([cfg.seeds.base], {"overall_accuracy": result.overall})
    print(f"test accuracy {result.overall:.4f} on {len(test_set)} examples")
    return EXIT_OK


def cmd_train_sac(ctx):
    cfg = ctx.cfg
    env = EdgeEnv(cfg.scenario())
    episodes = cfg.sac.episodes
    train_seeds = cfg.seeds.train_seeds(episodes)
    try:
        agent, curve = train(env, episodes, cfg.sac.agent_config(), seed=cfg.seeds.base, env_seeds=train_seeds)
    except NumericError as exc:
        path = ctx.path("sac_failure.json")
        with open(path, "w") as fh:
            json.dump({"error": str(exc), "snapshot": exc.snapshot}, fh, indent=2)
        raise
    ckpt = ctx.path(CHECKPOINT)
    agent.save(ckpt)
    ctx.record(ckpt)
    path = ctx.path("learning_curve.csv")
    write_curve(path, curve)
    ctx.record(path, CURVE_HEADER)
    ctx.write_manifest(train_seeds)
    return EXIT_OK


def cmd_compare(ctx, policies, checkpoint=None):
    cfg = ctx.cfg
    scenario = cfg.scenario()
    chosen = []
    for name in policies:
        if name == "sac":
            path = checkpoint or os.path.join(ctx.out, CHECKPOINT)
            if not os.path.exists(path):
                raise MissingArtifact(f"SAC checkpoint {path} not found; run 'train-sac' first")
            chosen.append(AgentPolicy(SacAgent.load(path)))
        elif name == "average":
            chosen.append(AveragePolicy())
        elif name == "frequency":
            chosen.append(FrequencyPolicy(scenario.params.history_window))
        else:
            raise ConfigError(f"unknown policy {name!r}")
    seeds = cfg.seeds.eval_seeds()
    results = [evaluate(p, scenario, seeds) for p in chosen]

    ep_path = ctx.path("episodes.csv")
    if os.path.exists(ep_path):
        os.remove(ep_path)
    for k, res in enumerate(results):
        append_episode_rows(ep_path, res, write_header=k == 0)
    ctx.record(ep_path, EPISODE_HEADER)

    cmp_path = ctx.path("comparison.csv")
    with open(cmp_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARISON_HEADER)
        for res in results:
            row = [res.policy]
            for k in MetricsRecord.FIELDS:
                row += [repr(float(getattr(res.mean, k))), repr(float(getattr(res.std, k)))]
            w.writerow(row)
    ctx.record(cmp_path, COMPARISON_HEADER)

    md_path = ctx.path("summary.md")
    with open(md_path, "w") as fh:
        fh.write(render_summary(results))
    ctx.record(md_path)
    ctx.write_manifest(seeds)
    return EXIT_OK


def best_policies(results):
    """Per metric: (best policy name, relative margin over the runner-up)."""
    out = {}
    for k in MetricsRecord.FIELDS:
        vals = sorted(((float(getattr(r.mean, k)), r.policy) for r in results), reverse=not LOWER_IS_BETTER[k])
        best_v, best = vals[0]
        if len(vals) > 1 and vals[1][0] != 0:
            margin = abs(vals[1][0] - best_v) / abs(vals[1][0])
        else:
            margin = 0.0
        out[k] = (best, margin)
    return out


def render_summary(results):
    best = best_policies(results)
    lines = ["| policy | " + " | ".join(MetricsRecord.FIELDS) + " |",
             "|---" * (len(MetricsRecord.FIELDS) + 1) + "|"]
    for r in results:
        cells = []
        for k in MetricsRecord.FIELDS:
            v = f"{float(getattr(r.mean, k)):.2f} ± {float(getattr(r.std, k)):.2f}"
            cells.append(f"**{v}**" if best[k][0] == r.policy else v)
        lines.append(f"| {r.policy} | " + " | ".join(cells) + " |")
    lines.append("")
    lines.append("Bold marks the best policy per metric.")
    lines.append("")
    for k, (name, margin) in best.items():
        direction = "lower" if LOWER_IS_BETTER[k] else "higher"
        lines.append(f"- {k}: best = {name} ({direction} is better), margin over runner-up {100 * margin:.2f}%")
    lines.append("")
    lines.append("Accuracy is the simulated deadline-hit fraction. The training reward is a weighted")
    lines.append("stand-in defined by the simulator, not a quantity measured on hardware.")
    return "\n".join(lines) + "\n"


def build_parser():
    parser = argparse.ArgumentParser(prog="edgesac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "extract", "classify", "train-sac", "compare"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="experiment JSON (defaults used when omitted)")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="overrides seeds.base")
        if name == "compare":
            sp.add_argument("--policies", default="sac,average,frequency",
                            help="comma-separated subset of sac,average,frequency")
            sp.add_argument("--checkpoint", help="SAC checkpoint (default: <out>/sac_checkpoint.json)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.seeds.base = args.seed
        ctx = RunContext(args.command, cfg, args.out or cfg.output_dir)
        if args.command == "generate":
            return cmd_generate(ctx)
        if args.command == "extract":
            return cmd_extract(ctx)
        if args.command == "classify":
            return cmd_classify(ctx)
        if args.command == "train-sac":
            return cmd_train_sac(ctx)
        policies = [p.strip() for p in args.policies.split(",") if p.strip()]
        return cmd_compare(ctx, policies, args.checkpoint)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MissingArtifact as exc:
        print(f"missing prerequisite: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
