"""Command-line front door.

    sgvqa gen-data  --config exp.json --out runs/exp
    sgvqa train     --config exp.json --out runs/exp
    sgvqa eval      --config exp.json --out runs/exp
    sgvqa ablate    --config exp.json --out runs/exp
    sgvqa probe     --config exp.json --out runs/exp
    sgvqa sweep     --config exp.json --out runs/exp
    sgvqa gradcheck --out runs/exp

Commands are composable in that order and idempotent: existing outputs are
kept unless --force is given. Failures print a human summary on stdout and a
machine-readable JSON envelope on stderr; exit codes distinguish config
errors (2), missing prerequisites (3), and training divergence (4).
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, config_to_dict, experiment_hash, parse_config
from .gradcheck_protocol import GRADCHECK_TOLERANCE, gradcheck_all_configs
from .model import CheckpointError, ModelParams
from .reporting import (
    plot_delta_bars, plot_fraction_curve, plot_gradcheck_bars, plot_qtype_bars,
    plot_training_curves, write_json, write_loss_csv, write_metrics_csv,
)
from .scenes import build_corpus, load_corpus
from .training import (
    DivergenceError, PROBE_SETUPS, TABLE_SETUPS, evaluate, fraction_sweep,
    perturbation_report, train,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DIVERGED = 4


class MissingPrerequisite(RuntimeError):
    pass


def _manifest(cfg: ExperimentConfig, command: str, artifacts: list[str]) -> dict:
    return {
        "command": command,
        "config": config_to_dict(cfg),
        "config_hash": experiment_hash(cfg),
        "seed": cfg.train.seed,
        "versions": {"sgvqa": __version__, "numpy": np.__version__,
                     "python": sys.version.split()[0]},
        "artifacts": sorted(artifacts),
    }


def _load_corpus_or_fail(cfg: ExperimentConfig):
    corpus_dir = cfg.resolved_corpus_dir()
    if not (corpus_dir / "manifest.json").exists():
        raise MissingPrerequisite(
            f"no corpus at {corpus_dir}; run `sgvqa gen-data` first"
        )
    return load_corpus(corpus_dir)


def _load_checkpoint_or_fail(cfg: ExperimentConfig) -> ModelParams:
    path = cfg.resolved_checkpoint()
    if not path.exists():
        raise MissingPrerequisite(f"no checkpoint at {path}; run `sgvqa train` first")
    params, _ = ModelParams.load(path)
    return params


def _skip_if_exists(marker: Path, force: bool) -> bool:
    if marker.exists() and not force:
        print(f"{marker} exists; skipping (use --force to regenerate)")
        return True
    return False


def cmd_gen_data(cfg: ExperimentConfig, force: bool) -> int:
    corpus_dir = cfg.resolved_corpus_dir()
    if _skip_if_exists(corpus_dir / "manifest.json", force):
        return EXIT_OK
    corpus = build_corpus(cfg.corpus, corpus_dir)
    counts = corpus.counts()
    print(f"corpus written to {corpus_dir}: {counts}")
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, force: bool) -> int:
    out = Path(cfg.out) / "train"
    if _skip_if_exists(out / "metrics.csv", force):
        return EXIT_OK
    corpus = _load_corpus_or_fail(cfg)
    result = train(cfg.train, corpus, out_dir=out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(result.metrics, out / "metrics.csv")
    write_loss_csv(result.loss_rows, out / "losses.csv")
    plot_training_curves(result.metrics, result.loss_rows, out / "curves.png")
    write_json(_manifest(cfg, "train",
                         ["metrics.csv", "losses.csv", "curves.png", "checkpoints/final.json"]),
               out / "manifest.json")
    final = result.metrics[-1]
    print(f"trained {cfg.train.loss.variant} for {cfg.train.resolved_epochs()} epochs; "
          f"val overall={final['overall']:.3f} binary={final['binary']:.3f} "
          f"open={final['open']:.3f}")
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, force: bool) -> int:
    out = Path(cfg.out) / "eval"
    if _skip_if_exists(out / "report.json", force):
        return EXIT_OK
    corpus = _load_corpus_or_fail(cfg)
    params = _load_checkpoint_or_fail(cfg)
    report = evaluate(params, corpus, "test")
    out.mkdir(parents=True, exist_ok=True)
    write_json(report.to_dict(), out / "report.json")
    plot_qtype_bars(report.to_dict(), out / "qtype_accuracy.png")
    write_json(_manifest(cfg, "eval", ["report.json", "qtype_accuracy.png"]),
               out / "manifest.json")
    print(f"test overall={report.overall:.3f} binary={report.binary:.3f} "
          f"open={report.open:.3f} consistency={report.consistency:.3f} "
          f"validity={report.validity:.3f}")
    return EXIT_OK


def cmd_ablate(cfg: ExperimentConfig, force: bool) -> int:
    out = Path(cfg.out) / "ablate"
    if _skip_if_exists(out / "ablation.csv", force):
        return EXIT_OK
    corpus = _load_corpus_or_fail(cfg)
    params = _load_checkpoint_or_fail(cfg)
    rows = [r.to_dict() for r in perturbation_report(params, corpus, TABLE_SETUPS)]
    out.mkdir(parents=True, exist_ok=True)
    _write_rows_csv(rows, out / "ablation.csv")
    plot_delta_bars(rows, out / "ablation.png",
                    title="accuracy change under disruptive augmentations")
    write_json(_manifest(cfg, "ablate", ["ablation.csv", "ablation.png"]),
               out / "manifest.json")
    for r in rows:
        print(f"{r['name']:26s} clean={r['clean_acc']:.3f} "
              f"perturbed={r['perturbed_acc']:.3f} delta={r['delta']:+.3f}")
    return EXIT_OK


def cmd_probe(cfg: ExperimentConfig, force: bool) -> int:
    out = Path(cfg.out) / "probe"
    if _skip_if_exists(out / "probe.csv", force):
        return EXIT_OK
    corpus = _load_corpus_or_fail(cfg)
    params = _load_checkpoint_or_fail(cfg)
    rows = [r.to_dict() for r in perturbation_report(params, corpus, PROBE_SETUPS)]
    out.mkdir(parents=True, exist_ok=True)
    _write_rows_csv(rows, out / "probe.csv")
    plot_delta_bars(rows, out / "probe.png", value_key="perturbed_acc",
                    title="accuracy under graph/question noise")
    write_json(_manifest(cfg, "probe", ["probe.csv", "probe.png"]), out / "manifest.json")
    for r in rows:
        print(f"{r['name']:18s} clean={r['clean_acc']:.3f} "
              f"noisy={r['perturbed_acc']:.3f} delta={r['delta']:+.3f}")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, force: bool) -> int:
    out = Path(cfg.out) / "sweep"
    if _skip_if_exists(out / "sweep.csv", force):
        return EXIT_OK
    corpus = _load_corpus_or_fail(cfg)
    results = fraction_sweep(cfg.train, corpus, list(cfg.sweep_fractions))
    rows = []
    for frac, report, _result in results:
        row = {"fraction": frac, **report.rates()}
        rows.append(row)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows_csv(rows, out / "sweep.csv")
    plot_fraction_curve(rows, out / "sweep.png")
    write_json(_manifest(cfg, "sweep", ["sweep.csv", "sweep.png"]), out / "manifest.json")
    for row in rows:
        print(f"fraction={row['fraction']:.0%} test overall={row['overall']:.3f}")
    return EXIT_OK


def cmd_gradcheck(cfg: ExperimentConfig, force: bool) -> int:
    out = Path(cfg.out) / "gradcheck"
    if _skip_if_exists(out / "gradcheck.json", force):
        return EXIT_OK
    results = gradcheck_all_configs(seed=cfg.train.seed)
    out.mkdir(parents=True, exist_ok=True)
    write_json({"tolerance": GRADCHECK_TOLERANCE, "results": results},
               out / "gradcheck.json")
    plot_gradcheck_bars([r for r in results if r["status"] == "checked"],
                        GRADCHECK_TOLERANCE, out / "gradcheck.png")
    write_json(_manifest(cfg, "gradcheck", ["gradcheck.json", "gradcheck.png"]),
               out / "manifest.json")
    worst = 0.0
    ok = True
    for r in results:
        if r["status"] == "checked":
            flag = "ok" if r["max_rel_err"] <= GRADCHECK_TOLERANCE else "FAIL"
            ok &= flag == "ok"
            worst = max(worst, r["max_rel_err"])
            print(f"{r['config']:18s} max_rel_err={r['max_rel_err']:.3e} {flag}")
        else:
            print(f"{r['config']:18s} rejected as configured: {r['error']}")
    print(f"worst max_rel_err={worst:.3e} tolerance={GRADCHECK_TOLERANCE:g}")
    return EXIT_OK if ok else EXIT_ERROR


def _write_rows_csv(rows: list[dict], path: Path) -> None:
    import csv
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "probe": cmd_probe,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgvqa",
        description="synthetic scene-graph VQA with dual-view self-supervision",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="dotted-path override (repeatable)")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="set both corpus and train seeds")
    parser.add_argument("--force", action="store_true",
                        help="regenerate artifacts that already exist")
    return parser


def _fail(kind: str, message: str, code: int, path: str | None = None) -> int:
    envelope = {"error": kind, "message": message}
    if path:
        envelope["path"] = path
    print(f"error: {message}")
    print(json.dumps(envelope, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, args.overrides, seed=args.seed, out=args.out)
    except ConfigError as e:
        return _fail("config", str(e), EXIT_CONFIG, getattr(e, "path", None))
    except FileNotFoundError as e:
        return _fail("config", str(e), EXIT_CONFIG)
    try:
        return COMMANDS[args.command](cfg, args.force)
    except MissingPrerequisite as e:
        return _fail("missing_prerequisite", str(e), EXIT_MISSING)
    except CheckpointError as e:
        return _fail("checkpoint", str(e), EXIT_MISSING)
    except DivergenceError as e:
        return _fail("divergence", str(e), EXIT_DIVERGED)
    except ConfigError as e:
        return _fail("config", str(e), EXIT_CONFIG, getattr(e, "path", None))
    except ValueError as e:
        return _fail("invalid", str(e), EXIT_CONFIG)
    except Exception as e:  # pragma: no cover - unexpected
        traceback.print_exc()
        return _fail(type(e).__name__, str(e), EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
