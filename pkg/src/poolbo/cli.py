"""Command line front end.

Subcommands: `run` drives a campaign from a JSON config, `hv` computes exact
hypervolume for a saved front, `bench` runs the acquisition comparison grid,
and `select` scores one pool against a checkpointed campaign. Exit codes: 0
on success, 2 for bad configs or inputs, 1 for runtime failures (the last
checkpoint is left on disk).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from .bench import BenchSpec, run_bench
from .campaign import (
    CampaignConfig,
    _select_indices,
    build_initial_data,
    config_hash,
    init_campaign,
    load_checkpoint,
    run,
)
from .generation import load_pool
from .gp import fit, pool_posterior
from .oracles import make_oracle
from .pareto import build_front
from .seeds import derive_seed


def _setup_logging() -> None:
    level_name = os.environ.get("POOLBO_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_run(args) -> int:
    payload = _load_json(args.config)
    if not isinstance(payload, dict):
        raise ValueError("run config must be a JSON object")
    output_dir = payload.pop("output_dir", None)
    if not output_dir:
        raise ValueError("run config needs an output_dir")
    true_ids = payload.pop("true_front_ids", None)
    cfg = CampaignConfig.from_dict(payload)
    os.makedirs(output_dir, exist_ok=True)
    metrics_path = os.path.join(output_dir, "metrics.csv")
    checkpoint_path = os.path.join(output_dir, "checkpoint.json")
    front_path = os.path.join(output_dir, "front.json")

    if args.resume:
        if not os.path.exists(checkpoint_path):
            raise ValueError(f"nothing to resume: {checkpoint_path} does not exist")
        state, stored_cfg = load_checkpoint(checkpoint_path)
        if config_hash(stored_cfg) != config_hash(cfg):
            raise ValueError("config does not match the checkpointed campaign")
    else:
        if cfg.oracle is None:
            raise ValueError("run config needs an oracle")
        oracle = make_oracle(cfg.oracle)
        state = init_campaign(cfg, build_initial_data(cfg, oracle))

    state = run(
        state, cfg,
        metrics_path=metrics_path,
        checkpoint_path=checkpoint_path,
        front_path=front_path,
        true_front_ids=true_ids,
    )
    hv = state.front.hypervolume()
    print(f"finished iteration {state.iteration}: hv={hv!r} "
          f"labeled={state.dataset.n} front={state.front.size}")
    print(f"metrics: {metrics_path}")
    print(f"checkpoint: {checkpoint_path}")
    return 0


def cmd_hv(args) -> int:
    try:
        ref = tuple(float(v) for v in args.ref.split(","))
    except ValueError:
        raise ValueError(f"--ref must be comma-separated numbers, got {args.ref!r}") from None
    if len(ref) > 6:
        raise ValueError("exact hypervolume supports at most 6 objectives")
    payload = _load_json(args.front)
    if isinstance(payload, dict):
        if "points" not in payload:
            raise ValueError("front file must contain a 'points' array")
        points = payload["points"]
    else:
        points = payload
    # saved fronts carry {"id", "values"} entries; bare row lists also work
    if points and isinstance(points[0], dict):
        points = [p["values"] for p in points]
    points = np.asarray(points, dtype=float)
    if points.size and (points.ndim != 2 or points.shape[1] != len(ref)):
        raise ValueError(
            f"front points must be rows of {len(ref)} objectives, got shape {points.shape}"
        )
    if points.size == 0:
        points = points.reshape(0, len(ref))
    front = build_front(points, [str(i) for i in range(len(points))], ref)
    print(repr(front.hypervolume()))
    return 0


def cmd_bench(args) -> int:
    payload = _load_json(args.spec)
    spec = BenchSpec.from_dict(payload)
    result = run_bench(spec, workers=args.workers)
    print(f"wrote {len(result['records'])} cells under {spec.output_dir}")
    print(f"summary: {result['summary_path']}")
    return 0


def cmd_select(args) -> int:
    if args.batch_size < 1:
        raise ValueError("-q must be at least 1")
    state, cfg = load_checkpoint(args.checkpoint)
    feat_name = cfg.generator.featurizer if cfg.generator is not None else cfg.featurizer
    pool = load_pool(args.pool, feat_name)
    cfg = dataclasses.replace(
        cfg, batch_size=args.batch_size,
        generator=None, pool_path=args.pool,
    )
    # the same seed substream the next campaign iteration would draw
    acq_seed = derive_seed(derive_seed(cfg.seed, state.iteration + 1), 2)
    post = None
    if cfg.acquisition != "random":
        model = fit(state.dataset, cfg.gp)
        features = np.stack([c.features for c in pool])
        labeled = {g: state.dataset.objectives[i] for i, g in enumerate(state.dataset.genomes)}
        known_idx = [i for i, c in enumerate(pool) if c.genome in labeled]
        known_values = [labeled[pool[i].genome] for i in known_idx]
        post = pool_posterior(model, features, known_idx, known_values,
                              ids=[c.id for c in pool])
    selected = _select_indices(cfg, post, state.front, state.dataset, len(pool), acq_seed)
    for i in selected:
        print(pool[i].id)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poolbo",
        description="Batch multi-objective optimization over candidate pools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run or resume a campaign from a JSON config")
    p_run.add_argument("config", help="campaign config JSON")
    p_run.add_argument("--resume", action="store_true",
                       help="continue from output_dir/checkpoint.json")
    p_run.set_defaults(handler=cmd_run)

    p_hv = sub.add_parser("hv", help="exact hypervolume of a saved front")
    p_hv.add_argument("front", help="JSON file with a 'points' array")
    p_hv.add_argument("--ref", required=True, help="reference point, e.g. 0.0,0.0")
    p_hv.set_defaults(handler=cmd_hv)

    p_bench = sub.add_parser("bench", help="acquisition comparison over one pool")
    p_bench.add_argument("spec", help="bench spec JSON")
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.set_defaults(handler=cmd_bench)

    p_select = sub.add_parser("select", help="score a pool against a checkpoint")
    p_select.add_argument("pool", help="candidate pool CSV")
    p_select.add_argument("checkpoint", help="campaign checkpoint JSON")
    p_select.add_argument("-q", dest="batch_size", type=int, required=True,
                          help="batch size to select")
    p_select.set_defaults(handler=cmd_select)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _setup_logging()
    try:
        return args.handler(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
