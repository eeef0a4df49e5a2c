"""The end-to-end attack loop: optimizer x scene x victim x metrics.

Each generation samples a population of perturbation patterns, projects
them (clamped to [0, 1]) into the simulated scene, queries the victim,
scores the L1 objective against the target depth, tracks the best pattern
ever observed and feeds the ranked population back into the strategy
update. The victim is consulted exactly g_max * lambda times.

Bound handling: the optimizer itself runs unbounded; values are clamped
only at projection time, matching the physical saturation of a projector.
Under evaluation noise the best pattern keeps its *observed* objective
value; no silent re-evaluation happens (an optional post-run revalidation
pass reports fresh statistics without touching the result).

Runs are deterministic for a given (config, scene, built-in victim):
candidate noise streams are derived from (seed, generation, index), so
evaluation order cannot change results, and checkpoints restore the exact
optimizer rng state.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import optimizer
from .metrics import objective, presence_rate
from .optimizer import OptimizerState, StrategyParams
from .scene import DepthMap, PerturbationPattern, RegionMask, SceneModel, compose_projection
from .victim import VictimDescriptor, VictimError, build_victim, estimate_depth

__all__ = [
    "AttackConfig",
    "TraceRecord",
    "AttackResult",
    "AttackAborted",
    "CheckpointMismatch",
    "fingerprint",
    "run_attack",
    "resume_attack",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = "pitl-checkpoint-v1"

# distinct stream tags so candidate noise and revalidation noise never
# collide with the optimizer's own generator
_NOISE_STREAM = 0x50495431
_REVAL_STREAM = 0x50495432


class AttackAborted(RuntimeError):
    """Run stopped early; carries a resumable checkpoint and the partial trace."""

    def __init__(self, message: str, checkpoint: dict, trace: list, cause: Optional[Exception] = None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.trace = trace
        self.cause = cause


class CheckpointMismatch(ValueError):
    """Checkpoint belongs to a different (config, scene, victim) fingerprint."""


@dataclass
class AttackConfig:
    """Run settings for one attack (see README for the file-level schema)."""

    g_max: int
    seed: int
    victim: VictimDescriptor
    sigma0: float = 1.0
    lambda_override: Optional[int] = None
    mean0: Union[str, Sequence[float]] = "max_rgb"
    bound_policy: str = "clamp_eval"
    noise_stddev: Optional[float] = None  # None: use the scene's value
    target: Union[str, DepthMap] = "background"
    presence_region: Optional[RegionMask] = None  # None: the attack region
    revalidate: int = 0

    def validate(self) -> None:
        if self.g_max < 1:
            raise ValueError(f"g_max must be >= 1, got {self.g_max}")
        if not (self.sigma0 > 0):
            raise ValueError(f"sigma0 must be > 0, got {self.sigma0}")
        if self.bound_policy != "clamp_eval":
            raise ValueError(f"unsupported bound policy {self.bound_policy!r}")
        if self.lambda_override is not None and self.lambda_override < 2:
            raise ValueError("lambda override must be >= 2")
        if isinstance(self.mean0, str) and self.mean0 not in ("max_rgb", "mid_rgb"):
            raise ValueError(f"unknown mean0 policy {self.mean0!r}")
        if self.noise_stddev is not None and self.noise_stddev < 0:
            raise ValueError("noise_stddev must be >= 0")
        if isinstance(self.target, str) and self.target != "background":
            raise ValueError(f"unknown target source {self.target!r}")
        if self.revalidate < 0:
            raise ValueError("revalidate must be >= 0")


@dataclass
class TraceRecord:
    """One generation of bookkeeping (the CSV row)."""

    generation: int
    eval_count: int
    f_best_gen: float
    f_best_so_far: float
    e_best_gen: float
    wall_ms: float


@dataclass
class AttackResult:
    best_pattern: PerturbationPattern
    best_objective: float
    best_generation: int
    best_depth: DepthMap  # observed estimate for the best pattern
    best_presence_rate: float
    trace: list
    fingerprint: str
    dimension: int
    population: int
    revalidation: Optional[dict] = None


@dataclass
class _Progress:
    """Mutable loop state shared by fresh and resumed runs."""

    state: OptimizerState
    f_best: float = math.inf
    best_vector: Optional[np.ndarray] = None
    best_depth: Optional[np.ndarray] = None
    best_generation: int = 0
    eval_count: int = 0
    trace: list = field(default_factory=list)


def _norm_seed(seed: int) -> int:
    # canonical non-negative form accepted by SeedSequence
    return int(seed) % (2**63)


def _noise_rng(seed: int, stream: int, generation: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([_norm_seed(seed), stream, generation, index])
    return np.random.Generator(np.random.PCG64(ss))


def _resolve_mean0(config: AttackConfig, n: int) -> np.ndarray:
    if isinstance(config.mean0, str):
        if config.mean0 == "max_rgb":
            return np.ones(n)
        return np.full(n, 0.5)
    mean0 = np.asarray(config.mean0, dtype=np.float64).reshape(-1)
    if mean0.size != n:
        raise ValueError(f"explicit mean0 has {mean0.size} entries, need {n}")
    return mean0


def _resolve_target(config: AttackConfig, scene: SceneModel) -> DepthMap:
    if isinstance(config.target, DepthMap):
        return config.target
    return scene.depth_back  # disappearance attack


def _effective_scene(config: AttackConfig, scene: SceneModel) -> SceneModel:
    if config.noise_stddev is None or config.noise_stddev == scene.noise_stddev:
        return scene
    return replace(scene, noise_stddev=config.noise_stddev)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fingerprint(config: AttackConfig, scene: SceneModel) -> str:
    """Content hash binding a checkpoint to its exact run setup.

    Covers every config field, the victim descriptor, and the scene arrays
    (so a resumed run cannot silently see different data).
    """
    ambient = scene.ambient
    ambient_part = (
        _sha256(np.ascontiguousarray(ambient).tobytes())
        if isinstance(ambient, np.ndarray)
        else float(ambient)
    )
    target = config.target
    target_part = target if isinstance(target, str) else _sha256(target.values.tobytes())
    presence_part = (
        None
        if config.presence_region is None
        else _sha256(config.presence_region.member.tobytes())
    )
    payload = {
        "attack": {
            "g_max": config.g_max,
            "seed": _norm_seed(config.seed),
            "sigma0": config.sigma0,
            "lambda_override": config.lambda_override,
            "mean0": config.mean0 if isinstance(config.mean0, str) else list(map(float, config.mean0)),
            "bound_policy": config.bound_policy,
            "noise_stddev": config.noise_stddev,
            "target": target_part,
            "presence_region": presence_part,
            "revalidate": config.revalidate,
        },
        "victim": config.victim.to_dict(),
        "scene": {
            "reflectance": _sha256(np.ascontiguousarray(scene.reflectance).tobytes()),
            "ambient": ambient_part,
            "depth_orig": _sha256(scene.depth_orig.values.tobytes()),
            "depth_back": _sha256(scene.depth_back.values.tobytes()),
            "region": _sha256(scene.region.member.tobytes()),
            "cell_grid": [scene.region.cell_rows, scene.region.cell_cols],
            "noise_stddev": scene.noise_stddev,
        },
    }
    return _sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8"))


def run_attack(
    config: AttackConfig,
    scene: SceneModel,
    victim=None,
    abort_after_generation: Optional[int] = None,
) -> AttackResult:
    """Run the full attack; returns the best pattern and per-generation trace.

    `victim` overrides the descriptor-built victim (useful for instrumented
    tests). `abort_after_generation` simulates an interruption: the run
    raises AttackAborted carrying a resumable checkpoint once that
    generation completes. A victim failure raises the same way, from the
    last completed generation.
    """
    config.validate()
    scene = _effective_scene(config, scene)
    scene.validate()
    n = scene.region.dimension
    params = StrategyParams.defaults(n, config.lambda_override)
    state = optimizer.init(n, _resolve_mean0(config, n), config.sigma0, _norm_seed(config.seed))
    prog = _Progress(state=state)
    fp = fingerprint(config, scene)
    return _run_loop(config, scene, victim, params, fp, prog, first_generation=1,
                     abort_after_generation=abort_after_generation)


def resume_attack(
    checkpoint: dict,
    config: AttackConfig,
    scene: SceneModel,
    victim=None,
    abort_after_generation: Optional[int] = None,
) -> AttackResult:
    """Continue an aborted run from a checkpoint; refuses mismatched configs.

    The returned result is indistinguishable from an unbroken run (apart
    from wall-clock timings): trace rows before the break are replayed from
    the checkpoint, the rest are recomputed from the restored rng state.
    """
    config.validate()
    scene = _effective_scene(config, scene)
    scene.validate()
    if checkpoint.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointMismatch(f"unknown checkpoint format {checkpoint.get('format')!r}")
    fp = fingerprint(config, scene)
    if checkpoint.get("fingerprint") != fp:
        raise CheckpointMismatch(
            "checkpoint fingerprint does not match this config/scene/victim; refusing to resume"
        )
    params = StrategyParams.defaults(scene.region.dimension, config.lambda_override)
    prog = _Progress(
        state=OptimizerState.from_dict(checkpoint["optimizer"]),
        f_best=checkpoint["f_best"] if checkpoint["f_best"] is not None else math.inf,
        best_vector=None
        if checkpoint["best_vector"] is None
        else np.asarray(checkpoint["best_vector"], dtype=np.float64),
        best_depth=None
        if checkpoint["best_depth"] is None
        else np.asarray(checkpoint["best_depth"], dtype=np.float64),
        best_generation=checkpoint["best_generation"],
        eval_count=checkpoint["eval_count"],
        trace=[TraceRecord(*row) for row in checkpoint["trace"]],
    )
    return _run_loop(config, scene, victim, params, fp, prog,
                     first_generation=checkpoint["completed_generation"] + 1,
                     abort_after_generation=abort_after_generation)


def _make_checkpoint(fp: str, completed_generation: int, prog: _Progress) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "fingerprint": fp,
        "completed_generation": completed_generation,
        "eval_count": prog.eval_count,
        "optimizer": prog.state.to_dict(),
        "f_best": None if math.isinf(prog.f_best) else prog.f_best,
        "best_vector": None if prog.best_vector is None else prog.best_vector.tolist(),
        "best_depth": None if prog.best_depth is None else prog.best_depth.tolist(),
        "best_generation": prog.best_generation,
        "trace": [
            [r.generation, r.eval_count, r.f_best_gen, r.f_best_so_far, r.e_best_gen, r.wall_ms]
            for r in prog.trace
        ],
    }


def _run_loop(
    config: AttackConfig,
    scene: SceneModel,
    victim,
    params: StrategyParams,
    fp: str,
    prog: _Progress,
    first_generation: int,
    abort_after_generation: Optional[int],
) -> AttackResult:
    presence_region = config.presence_region or scene.region
    d_tgt = _resolve_target(config, scene)

    owns_victim = victim is None
    if owns_victim:
        victim = build_victim(config.victim, scene)
    last_checkpoint = _make_checkpoint(fp, first_generation - 1, prog)

    try:
        return _drive(config, scene, victim, params, fp, prog, first_generation,
                      abort_after_generation, last_checkpoint, d_tgt, presence_region)
    finally:
        if owns_victim and hasattr(victim, "close"):
            victim.close()


def _drive(config, scene, victim, params, fp, prog, first_generation,
           abort_after_generation, last_checkpoint, d_tgt, presence_region) -> AttackResult:
    region = scene.region
    d_orig, d_back = scene.depth_orig, scene.depth_back
    seed = config.seed
    noisy = scene.noise_stddev > 0

    try:
        for g in range(first_generation, config.g_max + 1):
            tick = time.perf_counter()
            candidates = optimizer.sample_population(prog.state, params)
            gen_best_f = math.inf
            gen_best_depth: Optional[DepthMap] = None
            for cand in candidates:
                pattern = PerturbationPattern.from_vector(region, cand.vector)
                rng = _noise_rng(seed, _NOISE_STREAM, g, cand.index) if noisy else None
                image = compose_projection(scene, pattern, rng)
                depth = estimate_depth(victim, image)
                prog.eval_count += 1
                cand.fitness = objective(depth, d_tgt, region)
                if cand.fitness < gen_best_f:
                    gen_best_f = cand.fitness
                    gen_best_depth = depth
            ranked = optimizer.sort_by_fitness(candidates)
            e_gen = presence_rate(gen_best_depth, d_orig, d_back, presence_region)
            if ranked[0].fitness < prog.f_best:
                prog.f_best = ranked[0].fitness
                prog.best_vector = ranked[0].vector.copy()
                prog.best_depth = gen_best_depth.values
                prog.best_generation = g
            prog.state = optimizer.update(prog.state, params, ranked)
            wall_ms = (time.perf_counter() - tick) * 1000.0
            prog.trace.append(
                TraceRecord(g, prog.eval_count, gen_best_f, prog.f_best, e_gen, wall_ms)
            )
            last_checkpoint = _make_checkpoint(fp, g, prog)
            if abort_after_generation is not None and g >= abort_after_generation and g < config.g_max:
                raise AttackAborted(
                    f"aborted after generation {g} on request",
                    checkpoint=last_checkpoint,
                    trace=list(prog.trace),
                )
    except VictimError as exc:
        raise AttackAborted(
            f"victim failure: {exc}",
            checkpoint=last_checkpoint,
            trace=list(prog.trace),
            cause=exc,
        ) from exc

    best_pattern = PerturbationPattern.from_vector(region, prog.best_vector)
    best_depth = DepthMap(prog.best_depth)
    result = AttackResult(
        best_pattern=best_pattern,
        best_objective=prog.f_best,
        best_generation=prog.best_generation,
        best_depth=best_depth,
        best_presence_rate=presence_rate(best_depth, d_orig, d_back, presence_region),
        trace=list(prog.trace),
        fingerprint=fp,
        dimension=params.n,
        population=params.lam,
    )
    if config.revalidate > 0:
        result.revalidation = _revalidate(config, scene, victim, best_pattern, d_tgt, presence_region)
    return result


def _revalidate(config, scene, victim, pattern, d_tgt, presence_region) -> dict:
    """Fresh noisy re-evaluations of the best pattern; reporting only."""
    fs, es = [], []
    for i in range(config.revalidate):
        rng = _noise_rng(config.seed, _REVAL_STREAM, 0, i) if scene.noise_stddev > 0 else None
        image = compose_projection(scene, pattern, rng)
        depth = estimate_depth(victim, image)
        fs.append(objective(depth, d_tgt, scene.region))
        es.append(presence_rate(depth, scene.depth_orig, scene.depth_back, presence_region))
    return {
        "repeats": config.revalidate,
        "objective_mean": float(np.mean(fs)),
        "objective_std": float(np.std(fs)),
        "presence_rate_mean": float(np.mean(es)),
        "presence_rate_std": float(np.std(es)),
    }


def save_checkpoint(path, checkpoint: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(checkpoint, f)
        f.write("\n")


def load_checkpoint(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
