"""Command-line entry point: simulate, train, eval, gradcheck, wiring, pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .cell import Checkpoint
from .config import EXCLUSION_MODES, RunConfig, load_config, write_manifest
from .dataset import load_scenario, normalize_scenario, window_arrays
from .errors import ConfigError, LtcBlockError
from .evaluation import comparison_table, evaluate_many, report
from .fileio import atomic_write_text
from .linksim import generate_scenario_set
from .training import gradient_check, history_csv, train
from .wiring import LayerCounts, build_ncp, require_valid, to_dot, wiring_stats

log = logging.getLogger("ltcblock")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _mkdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_simulate(cfg: RunConfig) -> int:
    out = _mkdir(cfg.scenario_dir)
    manifest = generate_scenario_set(cfg.indoor, list(cfg.outdoor), out,
                                     min_length=cfg.t_ob + max(cfg.horizons))
    files = [out / entry["path"] for entry in manifest["files"].values()] + [out / "manifest.json"]
    write_manifest(cfg, "simulate", files)
    print(f"wrote {len(manifest['files'])} scenarios to {out}")
    return EXIT_OK


def _train_one(cfg: RunConfig, indoor, horizon: int) -> list[Path]:
    ws = window_arrays(indoor, cfg.t_ob, horizon, cfg.stride, scenario_id=indoor.scenario_id)
    if len(ws) == 0:
        raise ConfigError(f"indoor trace too short for t_ob={cfg.t_ob}, K={horizon}")
    wiring = build_ncp(cfg.counts, cfg.fanouts, seed=cfg.seed)
    checkpoint, history = train((ws.features, ws.labels),
                                cfg.train.for_horizon(horizon, cfg.seed), wiring)
    checkpoint.save(cfg.model_path(horizon))
    atomic_write_text(cfg.history_path(horizon), history_csv(history))
    print(f"K={horizon}: loss {history[0].mean_loss:.4f} -> {history[-1].mean_loss:.4f} "
          f"over {len(history)} epochs")
    return [cfg.model_path(horizon), cfg.history_path(horizon)]


def cmd_train(cfg: RunConfig) -> int:
    indoor = normalize_scenario(load_scenario(cfg.scenario_dir / f"{cfg.indoor.name}.csv"))
    _mkdir(cfg.model_dir)
    horizons = sorted(cfg.horizons)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(lambda k: _train_one(cfg, indoor, k), horizons))
    else:
        outputs = [_train_one(cfg, indoor, k) for k in horizons]
    write_manifest(cfg, "train", [p for pair in outputs for p in pair])
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    checkpoints = {k: Checkpoint.load(cfg.model_path(k)) for k in cfg.horizons}
    scenarios = [load_scenario(cfg.scenario_dir / f"{p.name}.csv") for p in cfg.outdoor]
    metrics = evaluate_many(checkpoints, scenarios, cfg.threshold, cfg.exclusion, cfg.workers)
    paths = report(metrics, _mkdir(cfg.eval_dir))
    print(comparison_table(metrics), end="")
    write_manifest(cfg, "eval", list(paths.values()))
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, inject_bug: bool = False) -> int:
    g = cfg.gradcheck
    result = gradient_check(instances=g.instances, seed=cfg.seed, eps=g.eps, tolerance=g.tolerance,
                            t_ob=cfg.t_ob, ode_unfolds=cfg.train.ode_unfolds,
                            inject_bug=inject_bug)
    text = result.render()
    print(text, end="")
    path = _mkdir(cfg.root) / "gradcheck.txt"
    atomic_write_text(path, text)
    write_manifest(cfg, "gradcheck", [path])
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


def cmd_wiring(cfg: RunConfig) -> int:
    wiring = build_ncp(cfg.counts, cfg.fanouts, seed=cfg.seed)
    require_valid(wiring)
    out = _mkdir(cfg.root / "wiring")
    json_path, dot_path = out / "ncp.json", out / "ncp.dot"
    atomic_write_text(json_path, wiring.to_json() + "\n")
    atomic_write_text(dot_path, to_dot(wiring))
    print(json.dumps(wiring_stats(wiring), sort_keys=True, indent=1))
    write_manifest(cfg, "wiring", [json_path, dot_path])
    return EXIT_OK


def cmd_pipeline(cfg: RunConfig) -> int:
    for step in (cmd_simulate, cmd_train, cmd_eval):
        code = step(cfg)
        if code != EXIT_OK:
            return code
    artifacts = sorted(p for sub in (cfg.scenario_dir, cfg.model_dir, cfg.eval_dir)
                       for p in sub.iterdir() if p.is_file())
    write_manifest(cfg, "pipeline", artifacts)
    return EXIT_OK


def _horizons(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _counts(text: str) -> LayerCounts:
    parts = _horizons(text)
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected four counts: sensory,inter,command,motor")
    return LayerCounts(*parts)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file or a run manifest")
    common.add_argument("--seed", type=int)
    common.add_argument("--horizons", type=_horizons, help="comma-separated, e.g. 1,5,10")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--workers", type=int, help="thread cap for per-scenario/per-horizon work")
    common.add_argument("--threshold", type=float, help="weak-beam exclusion threshold")
    common.add_argument("--exclusion", choices=EXCLUSION_MODES)
    common.add_argument("--t-ob", dest="t_ob", type=int, help="observation window length")
    common.add_argument("--epochs", type=int)
    common.add_argument("--counts", type=_counts, help="layer sizes sensory,inter,command,motor")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ltcblock", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="generate indoor and outdoor scenarios")
    sub.add_parser("train", parents=[common], help="train one model per horizon")
    sub.add_parser("eval", parents=[common], help="evaluate on the outdoor scenarios")
    gc = sub.add_parser("gradcheck", parents=[common], help="compare BPTT with finite differences")
    gc.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    sub.add_parser("wiring", parents=[common], help="dump the NCP wiring as JSON and DOT")
    sub.add_parser("pipeline", parents=[common], help="simulate, train and eval in one go")
    return parser


_COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "eval": cmd_eval,
             "wiring": cmd_wiring, "pipeline": cmd_pipeline}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in ("seed", "horizons", "out_dir", "workers",
                                               "threshold", "exclusion", "t_ob", "epochs",
                                               "counts")}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, inject_bug=args.inject_bug)
        return _COMMANDS[args.command](cfg)
    except LtcBlockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
