"""Batch optimization loop: fit the surrogate, build a candidate pool, pick a
batch, query the oracle, update the front, and log progress.

The loop is deterministic given its config: every random draw uses a seed
derived from (config seed, iteration, stage), so a run can be replayed or
resumed from a checkpoint byte-for-byte.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .acquisition import (
    estimate_qpmhi,
    estimate_qpo,
    qehvi_mc,
    random_select,
    select_batch,
    thompson_hvi,
)
from .generation import Candidate, GeneratorConfig, load_pool, make_featurizer, propose_pool
from .gp import Dataset, GpConfig, fit, pool_posterior
from .pareto import (
    MetricRecord,
    ParetoFront,
    build_front,
    fraction_recovered,
    front_from_dict,
    front_to_dict,
    relative_hvi,
    save_front,
    update_front,
    write_metrics_csv,
)
from .seeds import child_rng, derive_seed

logger = logging.getLogger("poolbo.campaign")

ACQUISITIONS = ("qpmhi", "qehvi_mc", "thompson", "random", "qpo")
REF_RULES = ("nadir_of_initial", "explicit", "nadir_minus_epsilon")
CHECKPOINT_FORMAT = "poolbo-checkpoint-v1"

# seed-tree stage tags: iteration seed -> (generation, acquisition); stage 0
# is reserved for initial-data sampling
_STAGE_GENERATION = 1
_STAGE_ACQUISITION = 2


class DegenerateDataError(ValueError):
    """Initial data cannot support a surrogate or a front."""


class CampaignError(RuntimeError):
    """A campaign iteration failed; earlier checkpoints stay on disk."""


@dataclass(frozen=True)
class CampaignConfig:
    """Everything a run needs except the initial labeled data.

    Exactly one of `generator` (breed fresh pools each iteration) and
    `pool_path` (one fixed candidate file) must be set. `oracle` follows
    make_oracle's spec format and may be omitted when an oracle object is
    passed to run() directly.
    """

    iterations: int
    batch_size: int
    mc_samples: int = 256
    n_objectives: int = 2
    acquisition: str = "qpmhi"
    ref_rule: str = "nadir_minus_epsilon"
    ref_point: tuple | None = None
    ref_epsilon: float = 1e-6
    generator: GeneratorConfig | None = None
    pool_path: str | None = None
    featurizer: str = "identity"
    oracle: str | dict | None = None
    init: dict | None = None
    seed: int = 0
    gp: GpConfig = field(default_factory=GpConfig)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be at least 1")
        if not 1 <= self.n_objectives <= 6:
            raise ValueError("n_objectives must lie in 1..6 for exact hypervolume")
        if self.acquisition not in ACQUISITIONS:
            raise ValueError(f"unknown acquisition: {self.acquisition!r}")
        if self.acquisition == "qpo" and self.n_objectives != 1:
            raise ValueError("qpo is single-objective; set n_objectives=1")
        if self.ref_rule not in REF_RULES:
            raise ValueError(f"unknown ref_rule: {self.ref_rule!r}")
        if self.ref_rule == "explicit":
            if self.ref_point is None:
                raise ValueError("ref_rule 'explicit' needs a ref_point")
            if len(self.ref_point) != self.n_objectives:
                raise ValueError("ref_point length must match n_objectives")
            object.__setattr__(self, "ref_point", tuple(float(v) for v in self.ref_point))
        elif self.ref_point is not None:
            raise ValueError("ref_point is only used with ref_rule 'explicit'")
        if self.ref_epsilon <= 0:
            raise ValueError("ref_epsilon must be positive")
        if (self.generator is None) == (self.pool_path is None):
            raise ValueError("set exactly one of generator and pool_path")
        if self.generator is not None and self.batch_size > self.generator.pool_size:
            raise ValueError("batch_size cannot exceed the generated pool size")
        if self.init is not None and not isinstance(self.init, dict):
            raise ValueError("init must be a mapping")
        if self.oracle is not None and not isinstance(self.oracle, (str, dict)):
            raise ValueError("oracle spec must be a string or dict")

    def to_dict(self) -> dict:
        out = {
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "mc_samples": self.mc_samples,
            "n_objectives": self.n_objectives,
            "acquisition": self.acquisition,
            "ref_rule": self.ref_rule,
            "ref_point": None if self.ref_point is None else list(self.ref_point),
            "ref_epsilon": self.ref_epsilon,
            "generator": None if self.generator is None else dataclasses.asdict(self.generator),
            "pool_path": self.pool_path,
            "featurizer": self.featurizer,
            "oracle": self.oracle,
            "init": self.init,
            "seed": self.seed,
            "gp": dataclasses.asdict(self.gp),
        }
        if out["generator"] is not None:
            out["generator"]["constraints"] = list(out["generator"]["constraints"])
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "CampaignConfig":
        if not isinstance(payload, dict):
            raise ValueError("campaign config must be a mapping")
        work = dict(payload)
        generator = work.pop("generator", None)
        if generator is not None and not isinstance(generator, GeneratorConfig):
            generator = GeneratorConfig(**generator)
        gp = work.pop("gp", None)
        if gp is None:
            gp = GpConfig()
        elif not isinstance(gp, GpConfig):
            gp = GpConfig(**gp)
        ref_point = work.pop("ref_point", None)
        known = {f.name for f in dataclasses.fields(cls)} - {"generator", "gp", "ref_point"}
        unknown = set(work) - known
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        try:
            return cls(
                generator=generator,
                gp=gp,
                ref_point=None if ref_point is None else tuple(ref_point),
                **work,
            )
        except TypeError as exc:
            raise ValueError(str(exc)) from None


def config_hash(cfg: CampaignConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class CampaignState:
    dataset: Dataset
    front: ParetoFront
    iteration: int
    hv_initial: float
    history: list


def resolve_ref_point(objectives: np.ndarray, cfg: CampaignConfig) -> np.ndarray:
    if cfg.ref_rule == "explicit":
        return np.asarray(cfg.ref_point, dtype=float)
    lo = objectives.min(axis=0)
    if cfg.ref_rule == "nadir_of_initial":
        return lo
    span = objectives.max(axis=0) - lo
    # a flat objective still needs ref strictly below it, so fall back to an
    # absolute offset when the span is zero
    return lo - np.where(span > 0, cfg.ref_epsilon * span, cfg.ref_epsilon)


def init_campaign(cfg: CampaignConfig, initial: Dataset) -> CampaignState:
    """Validate the starting data and build iteration-zero state."""
    if initial.n < 2:
        raise DegenerateDataError("need at least two labeled designs to start")
    if initial.m != cfg.n_objectives:
        raise ValueError(
            f"initial data has {initial.m} objectives, config says {cfg.n_objectives}"
        )
    if initial.genomes is None:
        raise ValueError("initial dataset must carry genomes for duplicate tracking")
    if bool(np.all(initial.objectives == initial.objectives[0])):
        raise DegenerateDataError("all initial designs share one objective vector")
    ref = resolve_ref_point(initial.objectives, cfg)
    excluded = int(np.sum(np.any(initial.objectives <= ref, axis=1)))
    if excluded:
        logger.warning(
            "%d initial design(s) do not strictly dominate the reference point "
            "and are left off the front", excluded,
        )
    front = build_front(initial.objectives, initial.ids, ref)
    return CampaignState(
        dataset=initial,
        front=front,
        iteration=0,
        hv_initial=front.hypervolume(),
        history=[],
    )


def build_initial_data(cfg: CampaignConfig, oracle=None) -> Dataset:
    """Assemble the starting dataset described by cfg.init and label it.

    Three forms: {"genomes": [...]} uses the given designs, {"random":
    {"count": k, "length": B}} draws distinct random bitstrings, and
    {"pool_sample": k} samples rows of the static pool.
    """
    if not cfg.init:
        raise ValueError("config has no init section and no dataset was supplied")
    if oracle is None:
        if cfg.oracle is None:
            raise ValueError("no oracle: config.oracle is empty and none was passed")
        from .oracles import make_oracle

        oracle = make_oracle(cfg.oracle)
    spec = cfg.init
    feat_name = cfg.generator.featurizer if cfg.generator is not None else cfg.featurizer
    featurize = make_featurizer(feat_name)
    if "genomes" in spec:
        genomes = [str(g) for g in spec["genomes"]]
        if len(set(genomes)) != len(genomes):
            raise ValueError("init genomes must be distinct")
        cands = [
            Candidate(id=f"init-{i}", genome=g, features=featurize(g))
            for i, g in enumerate(genomes)
        ]
    elif "random" in spec:
        count = int(spec["random"]["count"])
        length = int(spec["random"]["length"])
        rng = child_rng(cfg.seed, 0)
        genomes: list = []
        seen = set()
        attempts = 0
        while len(genomes) < count:
            attempts += 1
            if attempts > 1000 * count:
                raise ValueError("could not draw enough distinct init genomes")
            g = "".join(rng.choice(["0", "1"], size=length))
            if g not in seen:
                seen.add(g)
                genomes.append(g)
        cands = [
            Candidate(id=f"init-{i}", genome=g, features=featurize(g))
            for i, g in enumerate(genomes)
        ]
    elif "pool_sample" in spec:
        if cfg.pool_path is None:
            raise ValueError("init pool_sample needs a pool_path")
        pool = load_pool(cfg.pool_path, cfg.featurizer)
        count = int(spec["pool_sample"])
        if count > len(pool):
            raise ValueError(f"init pool_sample {count} exceeds pool size {len(pool)}")
        rng = child_rng(cfg.seed, 0)
        idx = sorted(rng.choice(len(pool), size=count, replace=False).tolist())
        cands = [pool[i] for i in idx]
    else:
        raise ValueError("init must contain one of: genomes, random, pool_sample")
    values = np.asarray(oracle.evaluate(cands), dtype=float)
    return Dataset(
        ids=tuple(c.id for c in cands),
        features=np.stack([c.features for c in cands]),
        objectives=values,
        genomes=tuple(c.genome for c in cands),
    )


def _select_indices(cfg: CampaignConfig, post, front, dataset: Dataset, pool_size: int,
                    acq_seed: int) -> list:
    q = cfg.batch_size
    if cfg.acquisition == "random":
        return random_select(pool_size, q, acq_seed)
    if cfg.acquisition == "qpmhi":
        result = estimate_qpmhi(post, front, cfg.mc_samples, acq_seed)
        return select_batch(result, q)
    if cfg.acquisition == "qpo":
        best = float(dataset.objectives[:, 0].max())
        result = estimate_qpo(post, best, cfg.mc_samples, acq_seed)
        return select_batch(result, q)
    if cfg.acquisition == "qehvi_mc":
        return qehvi_mc(post, front, q, cfg.mc_samples, acq_seed)
    if cfg.acquisition == "thompson":
        return thompson_hvi(post, front, q, acq_seed)
    raise ValueError(f"unknown acquisition: {cfg.acquisition!r}")


def run(state: CampaignState, cfg: CampaignConfig, *, oracle=None, metrics_path=None,
        front_path=None, checkpoint_path=None, true_front_ids=None,
        posterior_fn=None) -> CampaignState:
    """Advance the campaign from state.iteration to cfg.iterations.

    Artifacts, when paths are given, are rewritten after every iteration so
    an interrupted run resumes from the last completed iteration. Candidates
    whose genome is already labeled consume their batch slot but are never
    re-queried. `posterior_fn(dataset, pool)` overrides the fitted surrogate,
    which keeps tests and what-if replays cheap.
    """
    if oracle is None:
        if cfg.oracle is None:
            raise ValueError("no oracle: config.oracle is empty and none was passed")
        from .oracles import make_oracle

        oracle = make_oracle(cfg.oracle)
    static_pool = None
    if cfg.pool_path is not None:
        static_pool = load_pool(cfg.pool_path, cfg.featurizer)
        if cfg.batch_size > len(static_pool):
            raise ValueError(
                f"batch_size {cfg.batch_size} exceeds pool size {len(static_pool)}"
            )
    true_ids = None if true_front_ids is None else set(true_front_ids)
    labeled = {g: state.dataset.objectives[i] for i, g in enumerate(state.dataset.genomes)}

    needs_surrogate = cfg.acquisition != "random"
    breeds_on_surrogate = (
        cfg.generator is not None and cfg.generator.parent_selection == "surrogate_weighted"
    )
    for t in range(state.iteration + 1, cfg.iterations + 1):
        it_seed = derive_seed(cfg.seed, t)
        model = None
        if (needs_surrogate and posterior_fn is None) or breeds_on_surrogate:
            model = fit(state.dataset, cfg.gp)
        if static_pool is not None:
            pool = static_pool
        else:
            pool = propose_pool(
                state.dataset, model, cfg.generator, derive_seed(it_seed, _STAGE_GENERATION)
            )
        acq_seed = derive_seed(it_seed, _STAGE_ACQUISITION)
        post = None
        if needs_surrogate:
            if posterior_fn is not None:
                post = posterior_fn(state.dataset, pool)
            else:
                features = np.stack([c.features for c in pool])
                known_idx = [i for i, c in enumerate(pool) if c.genome in labeled]
                known_values = [labeled[pool[i].genome] for i in known_idx]
                post = pool_posterior(
                    model, features, known_idx, known_values, ids=[c.id for c in pool]
                )
        selected = _select_indices(cfg, post, state.front, state.dataset, len(pool), acq_seed)
        batch = [pool[i] for i in selected]
        new = [c for c in batch if c.genome not in labeled]
        if len(new) < len(batch):
            logger.info(
                "iteration %d: %d of %d selected designs already labeled, skipping re-query",
                t, len(batch) - len(new), len(batch),
            )
        if new:
            try:
                values = np.asarray(oracle.evaluate(new), dtype=float)
            except Exception as exc:
                raise CampaignError(f"iteration {t}: oracle evaluation failed: {exc}") from exc
            if values.shape != (len(new), cfg.n_objectives):
                raise CampaignError(
                    f"iteration {t}: oracle returned shape {values.shape}, "
                    f"expected {(len(new), cfg.n_objectives)}"
                )
            if not np.all(np.isfinite(values)):
                raise CampaignError(f"iteration {t}: oracle returned non-finite objectives")
            state.dataset = state.dataset.append(
                ids=[c.id for c in new],
                features=np.stack([c.features for c in new]),
                objectives=values,
                genomes=[c.genome for c in new],
            )
            for cand, y in zip(new, values):
                state.front = update_front(state.front, y, cand.id)
                labeled[cand.genome] = y
        hv = state.front.hypervolume()
        record = MetricRecord(
            iteration=t,
            hv=hv,
            relative_hvi=relative_hvi(hv, state.hv_initial) if state.hv_initial > 0 else None,
            fraction_recovered=(
                fraction_recovered(state.dataset.ids, true_ids) if true_ids else None
            ),
            batch_ids=tuple(c.id for c in batch),
        )
        state.history.append(record)
        state.iteration = t
        if metrics_path is not None:
            write_metrics_csv(metrics_path, state.history)
        if front_path is not None:
            save_front(state.front, front_path)
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, state, cfg)
    return state


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, state: CampaignState, cfg: CampaignConfig) -> None:
    """Write the full campaign state, atomically replacing any earlier file."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "iteration": state.iteration,
        "hv_initial": state.hv_initial,
        "dataset": {
            "ids": list(state.dataset.ids),
            "genomes": None if state.dataset.genomes is None else list(state.dataset.genomes),
            "feature_kind": state.dataset.feature_kind,
            "features": state.dataset.features.tolist(),
            "objectives": state.dataset.objectives.tolist(),
        },
        "front": front_to_dict(state.front),
        "history": [
            {
                "iteration": rec.iteration,
                "hv": rec.hv,
                "relative_hvi": rec.relative_hvi,
                "fraction_recovered": rec.fraction_recovered,
                "batch_ids": list(rec.batch_ids),
            }
            for rec in state.history
        ],
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple:
    """Rebuild (state, config) from a checkpoint file."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a campaign checkpoint: {path}")
    cfg = CampaignConfig.from_dict(payload["config"])
    if config_hash(cfg) != payload["config_hash"]:
        raise ValueError("checkpoint config hash mismatch; file may be corrupted")
    ds = payload["dataset"]
    dataset = Dataset(
        ids=tuple(ds["ids"]),
        features=np.asarray(ds["features"], dtype=float),
        objectives=np.asarray(ds["objectives"], dtype=float),
        feature_kind=ds["feature_kind"],
        genomes=None if ds["genomes"] is None else tuple(ds["genomes"]),
    )
    history = [
        MetricRecord(
            iteration=rec["iteration"],
            hv=rec["hv"],
            relative_hvi=rec["relative_hvi"],
            fraction_recovered=rec["fraction_recovered"],
            batch_ids=tuple(rec["batch_ids"]),
        )
        for rec in payload["history"]
    ]
    state = CampaignState(
        dataset=dataset,
        front=front_from_dict(payload["front"]),
        iteration=int(payload["iteration"]),
        hv_initial=float(payload["hv_initial"]),
        history=history,
    )
    return state, cfg
