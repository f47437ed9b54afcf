"""Command-line entry point: ``ptrppo {train,eval,compare,heatmap-render}``.

Output files (train):

* ``config.txt``: the resolved configuration, ``key = value`` per line
* ``metrics.csv``: ``step,mean_return,value_loss,policy_loss,entropy``, one row per evaluation
* ``heatmap.csv``: header ``p0..p{C-1}``, one row of raw priorities per replay iteration
* ``checkpoint.ckpt`` (latest evaluation point) and ``final.ckpt``
* ``learning_curve.png``, ``heatmap.png``
* ``status.txt``: ``complete`` or ``aborted: <reason>``; partial CSVs are kept on abort
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import approximator as ax
from .config import ConfigError, TrainConfig, load_config
from .plotting import plot_learning_curves, read_matrix_csv, render_heatmap
from .seeding import substream
from .trainer import IterationReport, TrainingAborted, evaluate, optimal_return, train

METRICS_HEADER = ["step", "mean_return", "value_loss", "policy_loss", "entropy"]
COMPARISON_HEADER = ["algorithm", "seeds", "mean_final_return", "std_final_return",
                     "median_steps_to_threshold"]
ALGORITHMS = ("ptr-max", "ptr-mean", "ptr-reward", "ppo")
THRESHOLD_FRACTION = 0.9


@dataclass
class RunArtifact:
    config: TrainConfig
    out_dir: Path
    metrics_csv: Path
    heatmap_csv: Path
    checkpoints: list[Path] = field(default_factory=list)
    figures: list[Path] = field(default_factory=list)
    final_return: float = float("nan")
    env_steps: int = 0
    wall_time: float = 0.0
    steps_to_threshold: float = float("inf")


def _fmt(x) -> str:
    return repr(float(x)) if x is not None else ""


def _heatmap_header(capacity: int) -> list[str]:
    return [f"p{i}" for i in range(capacity)]


def run_training(cfg: TrainConfig, out_dir: str | Path, figures: bool = True) -> RunArtifact:
    """Train and stream metrics / heatmap rows to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    status = out / "status.txt"
    status.write_text("running\n")
    art = RunArtifact(cfg, out, out / "metrics.csv", out / "heatmap.csv")
    curve: list[tuple[int, float]] = []
    ckpt = out / "checkpoint.ckpt"

    with open(art.metrics_csv, "w", newline="") as mf, open(art.heatmap_csv, "w", newline="") as hf:
        mw, hw = csv.writer(mf), csv.writer(hf)
        mw.writerow(METRICS_HEADER)
        hw.writerow(_heatmap_header(cfg.memory_capacity))

        def on_report(rep: IterationReport, params: ax.PolicyValueParams) -> None:
            for row in rep.priority_rows:
                hw.writerow([_fmt(x) for x in row])
            if rep.eval_return is not None:
                ls = rep.losses
                terms = (ls.value_loss, ls.policy_loss, ls.entropy) if ls else (None, None, None)
                mw.writerow([rep.env_steps, _fmt(rep.eval_return), *map(_fmt, terms)])
                mf.flush()
                curve.append((rep.env_steps, rep.eval_return))
                ax.save_checkpoint(params, ckpt)
            hf.flush()

        try:
            result = train(cfg, on_report)
        except TrainingAborted as exc:
            ax.save_checkpoint(exc.last_good, out / "last_good.ckpt")
            status.write_text(f"aborted: {exc}\n")
            raise

    ax.save_checkpoint(result.params, out / "final.ckpt")
    art.checkpoints = [p for p in (ckpt, out / "final.ckpt") if p.exists()]
    if result.reports:
        art.env_steps = result.reports[-1].env_steps
        art.wall_time = result.reports[-1].wall_time
    art.final_return = result.final_eval_return
    art.steps_to_threshold = result.steps_to_threshold(THRESHOLD_FRACTION * optimal_return(cfg))
    if figures:
        if curve:
            s, r = zip(*curve)
            art.figures.append(plot_learning_curves(
                {f"{cfg.env}": [(s, r)]}, out / "learning_curve.png",
                title=f"{cfg.env} seed {cfg.seed}",
                threshold=THRESHOLD_FRACTION * optimal_return(cfg)))
        rows = read_matrix_csv(art.heatmap_csv)
        if rows.shape[0]:
            art.figures.append(render_heatmap(rows, out / "heatmap.png"))
    (out / "summary.txt").write_text(
        f"final_mean_return = {art.final_return!r}\nenv_steps = {art.env_steps}\n"
        f"steps_to_threshold = {art.steps_to_threshold!r}\nwall_time = {art.wall_time:.3f}\n"
        f"stale_priority_updates = {result.stale_updates}\n")
    status.write_text("complete\n")
    return art


def algorithm_config(base: TrainConfig, algorithm: str) -> TrainConfig:
    if algorithm == "ppo":
        return base.replace(n_off_policy_iters=0, n_on_policy_epochs=10)
    if algorithm.startswith("ptr-") and algorithm[4:] in ("max", "mean", "reward"):
        return base.replace(priority_scheme=algorithm[4:])
    raise ConfigError(f"algorithms: unknown algorithm {algorithm!r} (choose from {ALGORITHMS})")


def run_comparison(base: TrainConfig, algorithms: Sequence[str], seeds: Sequence[int],
                   out_dir: str | Path) -> Path:
    """Train every algorithm on every seed; write ``comparison.csv`` and ``learning_curves.png``."""
    if not algorithms:
        raise ConfigError("algorithms: need at least one")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, curves = [], {}
    for algo in algorithms:
        finals, hits, runs = [], [], []
        for seed in seeds:
            cfg = algorithm_config(base, algo).replace(seed=int(seed)).validate()
            art = run_training(cfg, out / algo / f"seed_{seed}", figures=False)
            finals.append(art.final_return)
            hits.append(art.steps_to_threshold)
            m = read_matrix_csv(art.metrics_csv)
            runs.append((m[:, 0], m[:, 1]) if m.size else ([], []))
        curves[algo] = runs
        rows.append([algo, len(seeds), _fmt(np.mean(finals)), _fmt(np.std(finals)),
                     _fmt(np.median(hits))])
    path = out / "comparison.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPARISON_HEADER)
        w.writerows(rows)
    plot_learning_curves(curves, out / "learning_curves.png", title=base.env,
                         threshold=THRESHOLD_FRACTION * optimal_return(base))
    return path


def _overrides(args) -> dict[str, str]:
    ov = {}
    for flag, key in (("env", "env"), ("scheme", "priority_scheme"), ("memory", "memory_capacity"),
                      ("rollout", "rollout_len"), ("seed", "seed"), ("iterations", "max_iterations"),
                      ("off_iters", "n_off_policy_iters"), ("on_epochs", "n_on_policy_epochs")):
        val = getattr(args, flag, None)
        if val is not None:
            ov[key] = str(val)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        ov[k.strip()] = v.strip()
    return ov


def _resolve(args) -> TrainConfig:
    cfg = load_config(args.config, _overrides(args))
    if getattr(args, "steps", None) is not None:
        cfg = cfg.replace(max_iterations=max(args.steps // cfg.steps_per_iteration, 0)).validate()
    return cfg


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--env", choices=["gridworld", "chain", "cartpole"])
    p.add_argument("--scheme", choices=["max", "mean", "reward"])
    p.add_argument("--steps", type=int, help="env-step budget (sets max_iterations)")
    p.add_argument("--iterations", type=int, help="number of outer iterations")
    p.add_argument("--memory", type=int, help="priority memory capacity")
    p.add_argument("--rollout", type=int, help="rollout length")
    p.add_argument("--off-iters", type=int, dest="off_iters")
    p.add_argument("--on-epochs", type=int, dest="on_epochs")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ptrppo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one agent")
    _add_run_options(p)
    p.add_argument("--out", default="runs/train")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--env", choices=["gridworld", "chain", "cartpole"])
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")

    p = sub.add_parser("compare", help="multi-seed comparison table")
    _add_run_options(p)
    p.add_argument("--algorithms", default="ptr-mean,ppo",
                   help=f"comma-separated subset of {','.join(ALGORITHMS)}")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--out", default="runs/compare")

    p = sub.add_parser("heatmap-render", help="render heatmap.csv to an image")
    p.add_argument("heatmap_csv")
    p.add_argument("output")
    p.add_argument("--cell-size", type=int, default=8, dest="cell_size")
    p.add_argument("--cmap", default="viridis")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            art = run_training(_resolve(args), args.out)
            print(f"final mean return {art.final_return:.4f} after {art.env_steps} steps "
                  f"({art.wall_time:.1f}s); outputs in {art.out_dir}")
        elif args.command == "eval":
            cfg = _resolve(args)
            if args.episodes < 1:
                raise ConfigError("episodes: must be >= 1")
            params = ax.load_checkpoint(args.checkpoint)
            returns = evaluate(params, cfg, args.episodes, substream(cfg.seed, "eval"))
            print(f"mean return {returns.mean():.4f} +- {returns.std():.4f} over {args.episodes} episodes")
        elif args.command == "compare":
            algos = [a.strip() for a in args.algorithms.split(",") if a.strip()]
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
            path = run_comparison(_resolve(args), algos, seeds, args.out)
            print(path.read_text(), end="")
        elif args.command == "heatmap-render":
            out = render_heatmap(read_matrix_csv(args.heatmap_csv), args.output, args.cell_size, args.cmap)
            print(out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
