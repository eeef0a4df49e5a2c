"""Separable CMA-ES: covariance matrix adaptation restricted to a diagonal matrix.

Minimizes f: R^n -> R from ranked fitness values only (no gradients). The
diagonal restriction makes every update O(n) in time and memory, which is
what makes the strategy practical for per-pixel projection patterns where
n reaches several thousand.

The module is deliberately self-contained and usable outside the attack
loop: `init` / `sample_population` / `update` expose the raw
generation-by-generation protocol, and `minimize` wraps them for plain
benchmark functions. Sampling and updating mutate the state (rng, then
strategy parameters) and must be serialized by the caller; evaluating the
sampled candidates is the caller's business and may happen concurrently.

Strategy constants follow the separable-CMA reference defaults, including
the (n+2)/3 speed-up factor on the covariance learning rate; each formula
is spelled out next to its assignment in `StrategyParams.defaults`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "StrategyParams",
    "OptimizerState",
    "RankedCandidate",
    "default_lambda",
    "init",
    "sample_population",
    "sort_by_fitness",
    "update",
    "minimize",
]

# Variance floor: long runs on flat / noisy fitness plateaus can drive the
# sampling variance toward zero; clamping keeps the state valid forever.
_POSITIVITY_FLOOR = 1e-20


def default_lambda(n: int) -> int:
    """Default population size: 4 + floor(3 ln n).

    Parameters
    ----------
    n : int
        Search space dimension, must be >= 1.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")
    return 4 + int(math.floor(3.0 * math.log(n)))


@dataclass(frozen=True)
class StrategyParams:
    """Fixed strategy constants for one run, all derived from (n, lambda).

    weights are the mu recombination weights, positive, non-increasing and
    normalized to sum 1. Learning rates use the separable-CMA defaults; see
    `defaults` for the formulas.
    """

    n: int
    lam: int
    mu: int
    weights: np.ndarray
    mu_eff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_cov_sep: float
    chi_n: float  # E||N(0, I_n)||, used by step-size adaptation

    @classmethod
    def defaults(cls, n: int, lam: Optional[int] = None) -> "StrategyParams":
        """Build the default parameter set for dimension `n`.

        `lam` overrides the default population size (some experiment setups
        pin lambda explicitly instead of deriving it from n).
        """
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ValueError(f"dimension must be a positive integer, got {n!r}")
        lam = int(lam) if lam is not None else default_lambda(n)
        if lam < 2:
            raise ValueError(f"population size must be >= 2, got {lam}")
        mu = lam // 2  # number of parents used in recombination

        # w'_i = ln(mu+1) - ln(i), normalized to sum 1
        raw = np.log(mu + 1.0) - np.log(np.arange(1, mu + 1, dtype=np.float64))
        weights = raw / raw.sum()
        # variance-effective selection mass: 1 / sum w_i^2
        mu_eff = 1.0 / float(np.square(weights).sum())

        # cumulation rate for the step-size path: (mu_eff+2)/(n+mu_eff+3)
        c_sigma = (mu_eff + 2.0) / (n + mu_eff + 3.0)
        # step-size damping: 1 + 2 max(0, sqrt((mu_eff-1)/(n+1)) - 1) + c_sigma
        d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
        # cumulation rate for the covariance path: 4/(n+4)
        c_c = 4.0 / (n + 4.0)
        # full-matrix covariance learning rate with mu_cov = mu_eff:
        #   c_cov = (1/mu_cov) * 2/(n+sqrt(2))^2
        #         + (1 - 1/mu_cov) * min(1, (2 mu_eff - 1)/((n+2)^2 + mu_eff))
        mu_cov = mu_eff
        c_cov = (1.0 / mu_cov) * 2.0 / (n + math.sqrt(2.0)) ** 2
        c_cov += (1.0 - 1.0 / mu_cov) * min(1.0, (2.0 * mu_eff - 1.0) / ((n + 2.0) ** 2 + mu_eff))
        # diagonal-only updates lose the off-diagonal information, which the
        # separable variant compensates with a (n+2)/3 faster learning rate
        c_cov_sep = min(1.0, c_cov * (n + 2.0) / 3.0)

        # E||N(0,I)|| ~= sqrt(n) (1 - 1/(4n) + 1/(21 n^2))
        chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

        params = cls(
            n=int(n),
            lam=lam,
            mu=mu,
            weights=weights,
            mu_eff=mu_eff,
            c_sigma=c_sigma,
            d_sigma=d_sigma,
            c_c=c_c,
            c_cov_sep=c_cov_sep,
            chi_n=chi_n,
        )
        params.validate()
        return params

    def validate(self) -> None:
        w = self.weights
        if w.shape != (self.mu,) or np.any(w <= 0):
            raise ValueError("weights must be mu positive values")
        if np.any(np.diff(w) > 0):
            raise ValueError("weights must be non-increasing")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if not (0.0 < self.c_sigma < 1.0):
            raise ValueError(f"c_sigma out of range: {self.c_sigma}")
        if not (0.0 < self.c_c < 1.0):
            raise ValueError(f"c_c out of range: {self.c_c}")
        if not (0.0 < self.c_cov_sep <= 1.0):
            raise ValueError(f"c_cov_sep out of range: {self.c_cov_sep}")
        if self.d_sigma < 1.0:
            raise ValueError(f"d_sigma must be >= 1, got {self.d_sigma}")


@dataclass
class RankedCandidate:
    """One sampled solution: vector = mean + step_size * step, as sampled.

    `step` is recorded at sampling time rather than recomputed, so mean
    updates can work in step space (exact under translation of the search
    space). `index` is the sampling position within its generation and
    breaks fitness ties deterministically.
    """

    vector: np.ndarray
    step: np.ndarray
    index: int
    fitness: Optional[float] = None


@dataclass
class OptimizerState:
    """Mutable strategy state: mean, step size, diagonal covariance, paths.

    `cov_diag` holds the diagonal of C; the sampling distribution is
    N(mean, step_size^2 * diag(cov_diag)). `rng` advances on sampling and is
    part of the state so runs are reproducible and resumable.
    """

    mean: np.ndarray
    step_size: float
    cov_diag: np.ndarray
    path_sigma: np.ndarray
    path_c: np.ndarray
    generation: int
    rng: np.random.Generator = field(repr=False)

    def clone(self) -> "OptimizerState":
        """Deep copy, including the generator state (identical sample streams)."""
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = self.rng.bit_generator.state
        return OptimizerState(
            mean=self.mean.copy(),
            step_size=self.step_size,
            cov_diag=self.cov_diag.copy(),
            path_sigma=self.path_sigma.copy(),
            path_c=self.path_c.copy(),
            generation=self.generation,
            rng=rng,
        )

    def to_dict(self) -> dict:
        """JSON-serializable snapshot (exact float64 round-trip via repr floats)."""
        return {
            "mean": self.mean.tolist(),
            "step_size": self.step_size,
            "cov_diag": self.cov_diag.tolist(),
            "path_sigma": self.path_sigma.tolist(),
            "path_c": self.path_c.tolist(),
            "generation": self.generation,
            "rng_state": self.rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerState":
        state = cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            step_size=float(d["step_size"]),
            cov_diag=np.asarray(d["cov_diag"], dtype=np.float64),
            path_sigma=np.asarray(d["path_sigma"], dtype=np.float64),
            path_c=np.asarray(d["path_c"], dtype=np.float64),
            generation=int(d["generation"]),
            rng=np.random.Generator(np.random.PCG64()),
        )
        rng_state = dict(d["rng_state"])
        rng_state["state"] = {k: int(v) for k, v in d["rng_state"]["state"].items()}
        state.rng.bit_generator.state = rng_state
        return state


def init(n: int, initial_mean: Sequence[float], initial_sigma: float, seed: int) -> OptimizerState:
    """Fresh optimizer state: C = I, both evolution paths zero, generation 1.

    Identical seeds yield identical subsequent sample streams.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")
    if not (initial_sigma > 0):
        raise ValueError(f"initial step size must be > 0, got {initial_sigma}")
    mean = np.array(initial_mean, dtype=np.float64).reshape(-1)
    if mean.shape != (n,):
        raise ValueError(f"initial mean has shape {mean.shape}, expected ({n},)")
    return OptimizerState(
        mean=mean,
        step_size=float(initial_sigma),
        cov_diag=np.ones(n, dtype=np.float64),
        path_sigma=np.zeros(n, dtype=np.float64),
        path_c=np.zeros(n, dtype=np.float64),
        generation=1,
        rng=np.random.Generator(np.random.PCG64(seed)),
    )


def sample_population(state: OptimizerState, params: StrategyParams) -> list[RankedCandidate]:
    """Draw lambda candidates x_k = mean + step_size * y_k, y_k ~ N(0, diag(C)).

    Advances `state.rng` deterministically; fitness fields are left unset.
    """
    _check_state(state, params.n)
    z = state.rng.standard_normal((params.lam, params.n))
    steps = z * np.sqrt(state.cov_diag)
    vectors = state.mean + state.step_size * steps
    return [
        RankedCandidate(vector=vectors[k], step=steps[k], index=k)
        for k in range(params.lam)
    ]


def sort_by_fitness(candidates: Sequence[RankedCandidate]) -> list[RankedCandidate]:
    """Stable ascending sort by fitness; ties keep sampling order."""
    for cand in candidates:
        if cand.fitness is None:
            raise ValueError(f"candidate {cand.index} has no fitness assigned")
    return sorted(candidates, key=lambda c: c.fitness)


def update(
    state: OptimizerState,
    params: StrategyParams,
    ranked: Sequence[RankedCandidate],
) -> OptimizerState:
    """One strategy update from a fitness-ranked population (minimization).

    `ranked` must contain exactly lambda candidates sorted ascending by
    fitness. Returns the successor state with generation incremented; the
    rng generator object is carried over, so the old state must not be used
    for sampling afterwards (see the single-writer note in the module docs).
    """
    _check_state(state, params.n)
    if len(ranked) != params.lam:
        raise ValueError(f"expected {params.lam} ranked candidates, got {len(ranked)}")
    fitnesses = []
    for cand in ranked:
        if cand.fitness is None or not math.isfinite(cand.fitness):
            raise ValueError(f"candidate {cand.index} has invalid fitness {cand.fitness!r}")
        fitnesses.append(float(cand.fitness))
    if any(a > b for a, b in zip(fitnesses, fitnesses[1:])):
        raise ValueError("ranked candidates must be sorted ascending by fitness")

    n = params.n
    w = params.weights
    parent_steps = np.stack([ranked[i].step for i in range(params.mu)])  # (mu, n)

    # recombination in step space: m' = m + sigma * sum_i w_i y_i
    # (algebraically identical to sum_i w_i x_i, exact under translation)
    y_w = w @ parent_steps
    new_mean = state.mean + state.step_size * y_w

    # step-size path uses the isotropic step C^(-1/2) y_w (elementwise here)
    c_s = params.c_sigma
    p_sigma = (1.0 - c_s) * state.path_sigma + math.sqrt(
        c_s * (2.0 - c_s) * params.mu_eff
    ) * (y_w / np.sqrt(state.cov_diag))
    p_sigma_norm = float(np.linalg.norm(p_sigma))

    new_sigma = state.step_size * math.exp(
        (c_s / params.d_sigma) * (p_sigma_norm / params.chi_n - 1.0)
    )
    new_sigma = max(new_sigma, _POSITIVITY_FLOOR)

    # stall the covariance path while the step-size path is far too long
    # (prevents fast C growth on early divergent moves); the 1 - (1-c_s)^2g
    # factor removes the initialization bias of p_sigma
    debias = 1.0 - (1.0 - c_s) ** (2.0 * state.generation)
    h_sigma = 1.0 if p_sigma_norm / math.sqrt(debias) < (1.4 + 2.0 / (n + 1.0)) * params.chi_n else 0.0

    c_c = params.c_c
    p_c = (1.0 - c_c) * state.path_c + h_sigma * math.sqrt(
        c_c * (2.0 - c_c) * params.mu_eff
    ) * y_w

    # diagonal covariance update: rank-one (path) + rank-mu (parent steps);
    # when h_sigma = 0 the missing rank-one mass is put back on C to keep
    # the expected update unbiased
    c_cov = params.c_cov_sep
    mu_cov = params.mu_eff
    rank_mu = w @ np.square(parent_steps)
    new_cov = (
        (1.0 - c_cov) * state.cov_diag
        + (c_cov / mu_cov) * (np.square(p_c) + (1.0 - h_sigma) * c_c * (2.0 - c_c) * state.cov_diag)
        + c_cov * (1.0 - 1.0 / mu_cov) * rank_mu
    )
    new_cov = np.maximum(new_cov, _POSITIVITY_FLOOR)

    return OptimizerState(
        mean=new_mean,
        step_size=new_sigma,
        cov_diag=new_cov,
        path_sigma=p_sigma,
        path_c=p_c,
        generation=state.generation + 1,
        rng=state.rng,
    )


def minimize(
    fn: Callable[[np.ndarray], float],
    x0: Sequence[float],
    sigma0: float,
    seed: int,
    max_generations: int,
    target: Optional[float] = None,
    lam: Optional[int] = None,
    callback: Optional[Callable[[int, float, float], None]] = None,
) -> tuple[np.ndarray, float, list[tuple[int, float, float]]]:
    """Run the full sample/evaluate/update loop on a plain objective.

    Stops after `max_generations` or once the best-so-far value drops below
    `target`. Returns (best_x, best_f, history) where history rows are
    (generation, best_f_in_generation, best_f_so_far). `callback`, when
    given, receives the same three values each generation.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.size
    params = StrategyParams.defaults(n, lam)
    state = init(n, x0, sigma0, seed)
    best_x = x0.copy()
    best_f = math.inf
    history: list[tuple[int, float, float]] = []
    for _ in range(max_generations):
        gen = state.generation
        candidates = sample_population(state, params)
        for cand in candidates:
            cand.fitness = float(fn(cand.vector))
        ranked = sort_by_fitness(candidates)
        gen_best = ranked[0]
        if gen_best.fitness < best_f:
            best_f = gen_best.fitness
            best_x = gen_best.vector.copy()
        history.append((gen, gen_best.fitness, best_f))
        if callback is not None:
            callback(gen, gen_best.fitness, best_f)
        if target is not None and best_f < target:
            break
        state = update(state, params, ranked)
    return best_x, best_f, history


def _check_state(state: OptimizerState, n: int) -> None:
    if state.mean.shape != (n,):
        raise ValueError(f"state dimension {state.mean.shape} does not match params ({n},)")
    if not (state.step_size > 0):
        raise ValueError(f"step size must be > 0, got {state.step_size}")
    if np.any(state.cov_diag <= 0):
        raise ValueError("covariance diagonal must be strictly positive")
