"""Position optimizers: AO-based PSO for the two-layer array and the benchmark schemes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

try:  # pragma: no cover - package-relative imports
    from . import pso
    from .beamforming import sum_rate_batch, sum_rate_optimal
    from .channel import Scenario
    from .geometry import (
        ArrayArchitecture,
        TwoLayerLayout,
        absolute_positions,
        antenna_penalty,
        check_feasible,
        check_single_layer_feasible,
        embed_positions,
        group_layout,
        offset_grid,
        position_displacement,
        positions_from_coordinates,
        sample_antenna_offsets,
        sample_subarray_origins,
        single_layer_penalty,
        subarray_penalty,
        sum_displacement,
        uniform_initial_layout,
        uniform_linear_positions,
    )
    from .pso import SearchBox, SwarmConfig, SwarmRunResult
    from .seeding import SeedPath
except ImportError:  # pragma: no cover - fallback for direct script execution
    import pso
    from beamforming import sum_rate_batch, sum_rate_optimal
    from channel import Scenario
    from geometry import (
        ArrayArchitecture,
        TwoLayerLayout,
        absolute_positions,
        antenna_penalty,
        check_feasible,
        check_single_layer_feasible,
        embed_positions,
        group_layout,
        offset_grid,
        position_displacement,
        positions_from_coordinates,
        sample_antenna_offsets,
        sample_subarray_origins,
        single_layer_penalty,
        subarray_penalty,
        sum_displacement,
        uniform_initial_layout,
        uniform_linear_positions,
    )
    from pso import SearchBox, SwarmConfig, SwarmRunResult
    from seeding import SeedPath

logger = logging.getLogger(__name__)

TL_MA = "tl-ma"
SL_MA = "sl-ma"
ARRAY_WISE = "array-wise"
FPA = "fpa"
ALL_AT_ONCE = "all-at-once"
SCHEMES = (TL_MA, SL_MA, ARRAY_WISE, FPA, ALL_AT_ONCE)

DISPLACEMENT_BASELINE = "uniform-initial"


@dataclass(frozen=True)
class AoConfig:
    subarray_swarm: SwarmConfig = field(default_factory=SwarmConfig)
    antenna_swarm: SwarmConfig = field(default_factory=SwarmConfig)
    max_rounds: int = 10
    epsilon: float = 1e-3
    all_at_once_particles: Optional[int] = None
    all_at_once_iterations: Optional[int] = None

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")

    def all_at_once_swarm(self) -> SwarmConfig:
        """Defaults to one AO round's budget: I_P + I_P' particles for I_T iterations."""
        particles = self.all_at_once_particles or (
            self.subarray_swarm.num_particles + self.antenna_swarm.num_particles
        )
        iterations = self.all_at_once_iterations or self.subarray_swarm.num_iterations
        return replace(self.subarray_swarm, num_particles=particles, num_iterations=iterations)


@dataclass(frozen=True, eq=False)
class SchemeResult:
    scheme: str
    positions: np.ndarray
    sum_rate: float
    subarray_displacement: float
    antenna_displacement: float
    rate_trace: np.ndarray
    evaluations: int
    layout: Optional[TwoLayerLayout] = None
    architecture: Optional[ArrayArchitecture] = None
    baseline: str = DISPLACEMENT_BASELINE
    swarm_runs: tuple[SwarmRunResult, ...] = ()

    @property
    def rounds(self) -> int:
        return len(self.rate_trace) - 1

    @property
    def total_displacement(self) -> float:
        return self.subarray_displacement + self.antenna_displacement

    def to_row(self) -> dict[str, object]:
        arch = self.architecture
        return {
            "scheme": self.scheme,
            "num_subarrays": arch.num_subarrays if arch else None,
            "alpha": arch.alpha if arch else None,
            "region_length": arch.region_length if arch else None,
            "sum_rate_bps_hz": self.sum_rate,
            "C_S_wavelengths": self.subarray_displacement,
            "C_A_wavelengths": self.antenna_displacement,
            "ao_rounds": self.rounds,
            "evaluations": self.evaluations,
            "displacement_baseline": self.baseline,
        }


def _offset_shape(d: np.ndarray, arch: ArrayArchitecture) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    return d.reshape(d.shape[:-1] + (arch.num_subarrays, arch.antennas_per_subarray))


def _as_result(values: np.ndarray) -> np.ndarray | float:
    return float(values) if np.ndim(values) == 0 else values


def layout_rate(layout: TwoLayerLayout, scenario: Scenario, arch: ArrayArchitecture) -> float:
    return sum_rate_optimal(absolute_positions(layout, arch), scenario).sum_rate


def fitness_subarray(
    q: np.ndarray, d: np.ndarray, scenario: Scenario, arch: ArrayArchitecture, kappa: float
) -> np.ndarray | float:
    """Sum-rate minus kappa times the subarray penalty; ``q`` may carry leading batch axes."""
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float).reshape(arch.num_subarrays, arch.antennas_per_subarray)
    delta = positions_from_coordinates(q, np.broadcast_to(d, q.shape[:-1] + d.shape), arch)
    return _as_result(sum_rate_batch(delta, scenario) - kappa * np.asarray(subarray_penalty(q, arch)))


def fitness_antenna(
    d: np.ndarray, q: np.ndarray, scenario: Scenario, arch: ArrayArchitecture, kappa: float
) -> np.ndarray | float:
    """Sum-rate minus kappa times the antenna penalty; ``d`` is flat with shape (..., M)."""
    d = _offset_shape(d, arch)
    q = np.asarray(q, dtype=float)
    batch = d.shape[:-2]
    delta = positions_from_coordinates(np.broadcast_to(q, batch + q.shape), d, arch)
    return _as_result(sum_rate_batch(delta, scenario) - kappa * np.asarray(antenna_penalty(d, arch)))


def subarray_box(arch: ArrayArchitecture) -> SearchBox:
    half_l = arch.region_length / 2
    return SearchBox(
        lower=np.full(arch.num_subarrays, -half_l),
        upper=np.full(arch.num_subarrays, half_l - arch.subarray_length),
        padding=arch.subarray_length,
    )


def antenna_box(arch: ArrayArchitecture) -> SearchBox:
    quarter = arch.wavelength / 4
    return SearchBox(
        lower=np.full(arch.num_antennas, quarter),
        upper=np.full(arch.num_antennas, arch.subarray_length - quarter),
        padding=arch.subarray_length,
    )


def _pick(run: SwarmRunResult, fallback: np.ndarray) -> np.ndarray:
    if run.best_feasible_position is None:
        return np.asarray(fallback, dtype=float)
    return run.best_feasible_position


def optimize_subarrays(
    d: np.ndarray,
    scenario: Scenario,
    arch: ArrayArchitecture,
    config: SwarmConfig,
    streams: pso.StreamFn,
    incumbent: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, SwarmRunResult]:
    d = np.asarray(d, dtype=float).reshape(arch.num_subarrays, arch.antennas_per_subarray)
    if antenna_penalty(d, arch) > 0:
        raise ValueError("subarray search needs feasible antenna offsets")
    if incumbent is None:
        incumbent = uniform_initial_layout(arch).q
    kappa = config.penalty_coefficient
    run = pso.run(
        config,
        lambda Q: fitness_subarray(Q, d, scenario, arch, kappa),
        subarray_box(arch),
        lambda rng: sample_subarray_origins(rng, arch),
        streams,
        incumbents=[incumbent],
        penalty=lambda Q: subarray_penalty(Q, arch),
    )
    return _pick(run, incumbent), run


def optimize_antennas(
    q: np.ndarray,
    scenario: Scenario,
    arch: ArrayArchitecture,
    config: SwarmConfig,
    streams: pso.StreamFn,
    incumbent: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, Optional[SwarmRunResult]]:
    """Returns flat (M,) offsets; the array-wise geometry admits a single point and skips the search."""
    if arch.is_array_wise:
        return offset_grid(arch).reshape(-1), None
    q = np.asarray(q, dtype=float)
    if incumbent is None:
        incumbent = uniform_initial_layout(arch).d.reshape(-1)
    kappa = config.penalty_coefficient
    run = pso.run(
        config,
        lambda D: fitness_antenna(D, q, scenario, arch, kappa),
        antenna_box(arch),
        lambda rng: sample_antenna_offsets(rng, arch),
        streams,
        incumbents=[np.asarray(incumbent, dtype=float).reshape(-1)],
        penalty=lambda D: antenna_penalty(_offset_shape(D, arch), arch),
    )
    return _pick(run, incumbent), run


def _two_layer_result(
    scheme: str,
    layout: TwoLayerLayout,
    initial: TwoLayerLayout,
    arch: ArrayArchitecture,
    trace: list[float],
    evaluations: int,
    runs: Sequence[SwarmRunResult],
) -> SchemeResult:
    subarray_cost, antenna_cost = sum_displacement(initial, layout)
    return SchemeResult(
        scheme=scheme,
        positions=absolute_positions(layout, arch),
        sum_rate=trace[-1],
        subarray_displacement=subarray_cost,
        antenna_displacement=antenna_cost,
        rate_trace=np.asarray(trace),
        evaluations=evaluations,
        layout=layout,
        architecture=arch,
        swarm_runs=tuple(runs),
    )


def ao_optimize(
    scenario: Scenario,
    arch: ArrayArchitecture,
    config: AoConfig,
    seeds: SeedPath,
    extra_starts: Sequence[TwoLayerLayout] = (),
    scheme: str = TL_MA,
) -> SchemeResult:
    """Alternate subarray and antenna searches until a round gains less than epsilon.

    Each inner search seeds its swarm with the incumbent and only replaces it
    when the canonical sum-rate does not drop, so the rate trace never decreases.
    """
    arch.validate()
    initial = uniform_initial_layout(arch)
    layout, rate = initial, layout_rate(initial, scenario, arch)
    for start in extra_starts:
        if check_feasible(start, arch).feasible:
            start_rate = layout_rate(start, scenario, arch)
            if start_rate > rate:
                layout, rate = start, start_rate

    trace = [rate]
    runs: list[SwarmRunResult] = []
    evaluations = 0
    call = 0
    for round_index in range(1, config.max_rounds + 1):
        q_candidate, q_run = optimize_subarrays(
            layout.d, scenario, arch, config.subarray_swarm, seeds.for_call(call), incumbent=layout.q
        )
        call += 1
        runs.append(q_run)
        evaluations += q_run.evaluations
        candidate = TwoLayerLayout(q_candidate, layout.d)
        candidate_rate = layout_rate(candidate, scenario, arch)
        if candidate_rate >= rate:
            layout, rate = candidate, candidate_rate

        d_candidate, d_run = optimize_antennas(
            layout.q,
            scenario,
            arch,
            config.antenna_swarm,
            seeds.for_call(call),
            incumbent=layout.d.reshape(-1),
        )
        call += 1
        if d_run is not None:
            runs.append(d_run)
            evaluations += d_run.evaluations
        candidate = TwoLayerLayout.unflatten(layout.q, d_candidate, arch)
        candidate_rate = layout_rate(candidate, scenario, arch)
        if candidate_rate >= rate:
            layout, rate = candidate, candidate_rate

        trace.append(rate)
        logger.debug("AO round %d: sum-rate %.6f bps/Hz", round_index, rate)
        if trace[-1] - trace[-2] < config.epsilon:
            break

    return _two_layer_result(scheme, layout, initial, arch, trace, evaluations, runs)


def array_wise_optimize(
    scenario: Scenario,
    arch: ArrayArchitecture,
    config: SwarmConfig,
    seeds: SeedPath,
) -> SchemeResult:
    """Rigid subarrays on the half-wavelength grid: one subarray search, C_A = 0."""
    rigid = ArrayArchitecture.array_wise(
        arch.num_subarrays, arch.antennas_per_subarray, arch.region_length, arch.wavelength
    ).validate()
    initial = uniform_initial_layout(rigid)
    layout = initial
    trace = [layout_rate(initial, scenario, rigid)]
    q_candidate, run = optimize_subarrays(initial.d, scenario, rigid, config, seeds.for_call(0), incumbent=initial.q)
    candidate = TwoLayerLayout(q_candidate, initial.d)
    candidate_rate = layout_rate(candidate, scenario, rigid)
    if candidate_rate >= trace[0]:
        layout = candidate
    trace.append(max(candidate_rate, trace[0]))
    return _two_layer_result(ARRAY_WISE, layout, initial, rigid, trace, run.evaluations, [run])


def fpa_layout(scenario: Scenario, arch: ArrayArchitecture) -> SchemeResult:
    positions = uniform_linear_positions(arch.num_antennas, arch.wavelength)
    rate = sum_rate_optimal(positions, scenario).sum_rate
    return SchemeResult(
        scheme=FPA,
        positions=positions,
        sum_rate=rate,
        subarray_displacement=0.0,
        antenna_displacement=0.0,
        rate_trace=np.array([rate]),
        evaluations=0,
        layout=embed_positions(positions, arch),
        architecture=arch,
    )


def _single_layer_search(
    config: SwarmConfig,
    to_positions: Callable[[np.ndarray], np.ndarray],
    box: SearchBox,
    sampler: pso.SamplerFn,
    streams: pso.StreamFn,
    incumbent: np.ndarray,
    scenario: Scenario,
    arch: ArrayArchitecture,
) -> SwarmRunResult:
    kappa = config.penalty_coefficient

    def violation(X: np.ndarray) -> np.ndarray:
        return np.asarray(single_layer_penalty(to_positions(X), arch.region_length, arch.wavelength))

    return pso.run(
        config,
        lambda X: sum_rate_batch(to_positions(X), scenario) - kappa * violation(X),
        box,
        sampler,
        streams,
        incumbents=[incumbent],
        penalty=violation,
    )


def sl_ma_optimize(
    scenario: Scenario,
    arch: ArrayArchitecture,
    config: AoConfig,
    seeds: SeedPath,
) -> SchemeResult:
    """Every antenna moves independently in [-L/2, L/2] with half-wavelength spacing.

    The positions are carried as consecutive groups of M_A and searched with
    the same alternating group-shift / in-group swarms and budget as TL-MA,
    but only the single-layer constraints are enforced, so neighbouring groups
    need only half-wavelength clearance. The search starts from the better of
    the half-wavelength array and the uniform two-layer layout. Element moves
    are reported as antenna displacement against the centered
    half-wavelength array.
    """
    region_length, wavelength = arch.region_length, arch.wavelength
    initial = uniform_linear_positions(arch.num_antennas, wavelength)
    positions, rate = initial, sum_rate_optimal(initial, scenario).sum_rate
    two_layer_start = absolute_positions(uniform_initial_layout(arch), arch)
    if check_single_layer_feasible(two_layer_start, region_length, wavelength):
        start_rate = sum_rate_optimal(two_layer_start, scenario).sum_rate
        if start_rate > rate:
            positions, rate = two_layer_start, start_rate
    layout = group_layout(positions, arch)

    trace = [rate]
    runs: list[SwarmRunResult] = []
    for round_index in range(1, config.max_rounds + 1):
        for call, block in enumerate(("q", "d"), start=2 * (round_index - 1)):
            q, d = layout.q, layout.d
            if block == "q":
                run = _single_layer_search(
                    config.subarray_swarm,
                    lambda Q: positions_from_coordinates(Q, np.broadcast_to(d, Q.shape[:-1] + d.shape), arch),
                    subarray_box(arch),
                    lambda rng: sample_subarray_origins(rng, arch),
                    seeds.for_call(call),
                    q,
                    scenario,
                    arch,
                )
                candidate = TwoLayerLayout(_pick(run, q), d)
            else:
                run = _single_layer_search(
                    config.antenna_swarm,
                    lambda D: positions_from_coordinates(np.broadcast_to(q, D.shape[:-1] + q.shape), D, arch),
                    antenna_box(arch),
                    lambda rng: sample_antenna_offsets(rng, arch),
                    seeds.for_call(call),
                    d.reshape(-1),
                    scenario,
                    arch,
                )
                candidate = TwoLayerLayout.unflatten(q, _pick(run, d.reshape(-1)), arch)
            runs.append(run)
            delta = absolute_positions(candidate, arch)
            if check_single_layer_feasible(delta, region_length, wavelength):
                candidate_rate = sum_rate_optimal(delta, scenario).sum_rate
                if candidate_rate >= rate:
                    layout, positions, rate = candidate, delta, candidate_rate

        trace.append(rate)
        logger.debug("SL-MA round %d: sum-rate %.6f bps/Hz", round_index, rate)
        if trace[-1] - trace[-2] < config.epsilon:
            break

    return SchemeResult(
        scheme=SL_MA,
        positions=positions,
        sum_rate=rate,
        subarray_displacement=0.0,
        antenna_displacement=position_displacement(initial, positions),
        rate_trace=np.asarray(trace),
        evaluations=sum(run.evaluations for run in runs),
        architecture=arch,
        swarm_runs=tuple(runs),
    )


def all_at_once_optimize(
    scenario: Scenario,
    arch: ArrayArchitecture,
    config: SwarmConfig,
    seeds: SeedPath,
) -> SchemeResult:
    """One swarm over the joint (q, d) vector with the summed penalties."""
    arch.validate()
    initial = uniform_initial_layout(arch)
    rate = layout_rate(initial, scenario, arch)
    split = arch.num_subarrays
    kappa = config.penalty_coefficient
    q_box, d_box = subarray_box(arch), antenna_box(arch)
    box = SearchBox(
        np.concatenate([q_box.lower, d_box.lower]),
        np.concatenate([q_box.upper, d_box.upper]),
        padding=arch.subarray_length,
    )

    def joint_penalty(X: np.ndarray) -> np.ndarray:
        return np.asarray(subarray_penalty(X[..., :split], arch)) + np.asarray(
            antenna_penalty(_offset_shape(X[..., split:], arch), arch)
        )

    def fitness(X: np.ndarray) -> np.ndarray:
        delta = positions_from_coordinates(X[..., :split], X[..., split:], arch)
        return sum_rate_batch(delta, scenario) - kappa * joint_penalty(X)

    run = pso.run(
        config,
        fitness,
        box,
        lambda rng: np.concatenate([sample_subarray_origins(rng, arch), sample_antenna_offsets(rng, arch)]),
        seeds.for_call(0),
        incumbents=[initial.to_vector()],
        penalty=joint_penalty,
    )
    layout = initial
    candidate = TwoLayerLayout.from_vector(_pick(run, initial.to_vector()), arch)
    candidate_rate = layout_rate(candidate, scenario, arch)
    if candidate_rate >= rate and check_feasible(candidate, arch).feasible:
        layout, final_rate = candidate, candidate_rate
    else:
        final_rate = rate
    return _two_layer_result(ALL_AT_ONCE, layout, initial, arch, [rate, final_rate], run.evaluations, [run])


def run_scheme(
    scheme: str,
    scenario: Scenario,
    arch: ArrayArchitecture,
    config: AoConfig,
    seeds: SeedPath,
    inject_fpa: bool = True,
) -> SchemeResult:
    """Dispatch one scheme; ``seeds`` should already be bound to this scheme."""
    if scheme == TL_MA:
        starts = []
        if inject_fpa:
            fpa = embed_positions(uniform_linear_positions(arch.num_antennas, arch.wavelength), arch)
            if fpa is not None:
                starts.append(fpa)
        return ao_optimize(scenario, arch, config, seeds, extra_starts=starts)
    if scheme == SL_MA:
        return sl_ma_optimize(scenario, arch, config, seeds)
    if scheme == ARRAY_WISE:
        return array_wise_optimize(scenario, arch, config.subarray_swarm, seeds)
    if scheme == FPA:
        return fpa_layout(scenario, arch)
    if scheme == ALL_AT_ONCE:
        return all_at_once_optimize(scenario, arch, config.all_at_once_swarm(), seeds)
    raise ValueError(f"Unknown scheme '{scheme}'. Expected one of: {', '.join(SCHEMES)}")
