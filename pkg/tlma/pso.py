"""Penalty-aware particle swarm optimization over flat real coordinate vectors.

The swarm maximizes a batched fitness callback ``fitness(positions) -> values``
where ``positions`` has shape (I_P, D). Constraints are expressed through the
callback's penalty term; the engine itself only clamps positions to a padded
box. Randomness comes from a stream factory ``streams(iteration, particle)``
so every particle's draws are independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

FitnessFn = Callable[[np.ndarray], np.ndarray]
SamplerFn = Callable[[np.random.Generator], np.ndarray]
StreamFn = Callable[[int, int], np.random.Generator]


@dataclass(frozen=True)
class SwarmConfig:
    num_particles: int = 300
    num_iterations: int = 200
    inertia: float = 0.9
    cognitive: float = 2.0
    social: float = 2.0
    penalty_coefficient: float = 1e6
    velocity_clamp: float = 0.2

    def __post_init__(self) -> None:
        if self.num_particles < 1 or self.num_iterations < 1:
            raise ValueError(
                f"num_particles and num_iterations must be >= 1, got {self.num_particles} and {self.num_iterations}"
            )
        if self.penalty_coefficient < 0:
            raise ValueError(f"penalty_coefficient must be non-negative, got {self.penalty_coefficient}")
        if not 0 < self.velocity_clamp <= 1:
            raise ValueError(f"velocity_clamp must lie in (0, 1], got {self.velocity_clamp}")

    @property
    def evaluations(self) -> int:
        return self.num_particles * self.num_iterations


@dataclass(frozen=True, eq=False)
class SearchBox:
    """Initialization box; positions are clamped to it widened by ``padding`` on each side."""

    lower: np.ndarray
    upper: np.ndarray
    padding: float = 0.0

    def __post_init__(self) -> None:
        lower = np.array(self.lower, dtype=float, ndmin=1)
        upper = np.array(self.upper, dtype=float, ndmin=1)
        if lower.shape != upper.shape or np.any(upper < lower):
            raise ValueError("box bounds must share a shape and satisfy lower <= upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def max_velocity(self, clamp: float) -> np.ndarray:
        return clamp * (self.upper - self.lower)

    def clip(self, positions: np.ndarray) -> np.ndarray:
        return np.clip(positions, self.lower - self.padding, self.upper + self.padding)


@dataclass
class Swarm:
    positions: np.ndarray
    velocities: np.ndarray
    max_velocity: np.ndarray
    pbest_positions: np.ndarray
    pbest_fitness: np.ndarray
    pbest_iteration: np.ndarray
    iteration: int = 0
    gbest_index: int = 0
    trace: list[float] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def gbest_position(self) -> np.ndarray:
        return self.pbest_positions[self.gbest_index]

    @property
    def gbest_fitness(self) -> float:
        return float(self.pbest_fitness[self.gbest_index])


@dataclass(frozen=True, eq=False)
class SwarmRunResult:
    best_position: np.ndarray
    best_fitness: float
    fitness_trace: np.ndarray
    evaluations: int
    best_feasible_position: Optional[np.ndarray] = None
    best_feasible_fitness: Optional[float] = None
    penalty_trace: Optional[np.ndarray] = None

    def trace_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "iteration": np.arange(1, len(self.fitness_trace) + 1),
                "best_fitness": self.fitness_trace,
            }
        )
        if self.penalty_trace is not None:
            frame["best_penalty"] = self.penalty_trace
        return frame


def init_swarm(
    config: SwarmConfig,
    box: SearchBox,
    sampler: SamplerFn,
    streams: StreamFn,
    incumbents: Sequence[np.ndarray] = (),
) -> Swarm:
    """Build the initial swarm; incumbents occupy the first particle slots."""
    dimension = box.dimension
    max_velocity = box.max_velocity(config.velocity_clamp)
    positions = np.empty((config.num_particles, dimension))
    velocities = np.empty_like(positions)
    for i in range(config.num_particles):
        rng = streams(0, i)
        if i < len(incumbents):
            start = np.asarray(incumbents[i], dtype=float)
        else:
            start = np.asarray(sampler(rng), dtype=float)
        if start.shape != (dimension,):
            raise ValueError(f"initial position of shape {start.shape} does not match dimension {dimension}")
        positions[i] = start
        velocities[i] = rng.uniform(-max_velocity, max_velocity)
    return Swarm(
        positions=positions,
        velocities=velocities,
        max_velocity=max_velocity,
        pbest_positions=positions.copy(),
        pbest_fitness=np.full(config.num_particles, -np.inf),
        pbest_iteration=np.full(config.num_particles, -1),
    )


def update_bests(swarm: Swarm, fitness: np.ndarray) -> tuple[np.ndarray, float]:
    """Strict-improvement personal bests, then the global best with earliest/lowest-index tie-break."""
    fitness = np.asarray(fitness, dtype=float)
    if fitness.shape != (swarm.size,):
        raise ValueError(f"expected {swarm.size} fitness values, got shape {fitness.shape}")
    improved = fitness > swarm.pbest_fitness
    swarm.pbest_positions[improved] = swarm.positions[improved]
    swarm.pbest_fitness[improved] = fitness[improved]
    swarm.pbest_iteration[improved] = swarm.iteration

    top = np.flatnonzero(swarm.pbest_fitness == swarm.pbest_fitness.max())
    swarm.gbest_index = int(top[np.lexsort((top, swarm.pbest_iteration[top]))[0]])
    swarm.trace.append(swarm.gbest_fitness)
    return swarm.gbest_position.copy(), swarm.gbest_fitness


def step_velocity_position(swarm: Swarm, config: SwarmConfig, box: SearchBox, streams: StreamFn) -> Swarm:
    dimension = swarm.positions.shape[1]
    r_personal = np.empty_like(swarm.positions)
    r_global = np.empty_like(swarm.positions)
    for i in range(swarm.size):
        rng = streams(swarm.iteration, i)
        r_personal[i] = rng.random(dimension)
        r_global[i] = rng.random(dimension)

    velocities = (
        config.inertia * swarm.velocities
        + config.cognitive * r_personal * (swarm.pbest_positions - swarm.positions)
        + config.social * r_global * (swarm.gbest_position - swarm.positions)
    )
    swarm.velocities = np.clip(velocities, -swarm.max_velocity, swarm.max_velocity)
    swarm.positions = box.clip(swarm.positions + swarm.velocities)
    return swarm


def run(
    config: SwarmConfig,
    fitness: FitnessFn,
    box: SearchBox,
    sampler: SamplerFn,
    streams: StreamFn,
    *,
    incumbents: Sequence[np.ndarray] = (),
    penalty: Optional[FitnessFn] = None,
) -> SwarmRunResult:
    """Run I_T rounds of evaluate -> update bests -> move.

    When ``penalty`` is given, the best evaluated point with zero penalty is
    reported alongside the global best, together with the penalty of the global
    best after every iteration.
    """
    swarm = init_swarm(config, box, sampler, streams, incumbents)
    feasible_position: Optional[np.ndarray] = None
    feasible_fitness = -np.inf
    penalties: list[float] = []

    for t in range(1, config.num_iterations + 1):
        swarm.iteration = t
        values = np.asarray(fitness(swarm.positions), dtype=float)
        update_bests(swarm, values)

        if penalty is not None:
            violation = np.asarray(penalty(swarm.positions), dtype=float)
            feasible = np.flatnonzero(violation == 0.0)
            if feasible.size:
                local = feasible[np.argmax(values[feasible])]
                if values[local] > feasible_fitness:
                    feasible_fitness = float(values[local])
                    feasible_position = swarm.positions[local].copy()
            penalties.append(float(np.asarray(penalty(swarm.gbest_position[None, :]))[0]))

        if t < config.num_iterations:
            step_velocity_position(swarm, config, box, streams)

    return SwarmRunResult(
        best_position=swarm.gbest_position.copy(),
        best_fitness=swarm.gbest_fitness,
        fitness_trace=np.asarray(swarm.trace),
        evaluations=config.evaluations,
        best_feasible_position=feasible_position,
        best_feasible_fitness=None if feasible_position is None else feasible_fitness,
        penalty_trace=np.asarray(penalties) if penalty is not None else None,
    )
