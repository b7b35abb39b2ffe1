import numpy as np
import pytest

from tlma.beamforming import sum_rate_optimal
from tlma.channel import Scenario, sample_scenario
from tlma.geometry import (
    ArrayArchitecture,
    TwoLayerLayout,
    absolute_positions,
    antenna_penalty,
    check_feasible,
    check_single_layer_feasible,
    subarray_penalty,
    uniform_initial_layout,
    uniform_linear_positions,
)
from tlma.optimizer import (
    ALL_AT_ONCE,
    ARRAY_WISE,
    FPA,
    SCHEMES,
    SL_MA,
    TL_MA,
    AoConfig,
    all_at_once_optimize,
    ao_optimize,
    array_wise_optimize,
    fitness_antenna,
    fitness_subarray,
    fpa_layout,
    layout_rate,
    optimize_antennas,
    optimize_subarrays,
    run_scheme,
    sl_ma_optimize,
)
from tlma.pso import SwarmConfig
from tlma.seeding import SeedPath

SNR = 10 ** (9.78 / 10)
SMALL = SwarmConfig(num_particles=12, num_iterations=8)


@pytest.fixture
def arch():
    return ArrayArchitecture.from_alpha(4, 3, 24.0, 3 / 8)


@pytest.fixture
def scenario():
    return sample_scenario(3, 3, 1.0, SNR, np.random.default_rng(21))


def small_ao(rounds=3, epsilon=1e-3):
    return AoConfig(subarray_swarm=SMALL, antenna_swarm=SMALL, max_rounds=rounds, epsilon=epsilon)


class TestFitness:
    def test_feasible_subarrays_score_the_sum_rate(self, arch, scenario):
        layout = uniform_initial_layout(arch)
        value = fitness_subarray(layout.q, layout.d, scenario, arch, 1e6)
        assert value == pytest.approx(layout_rate(layout, scenario, arch), abs=1e-12)

    def test_overlap_is_penalized(self, arch, scenario):
        layout = uniform_initial_layout(arch)
        q = layout.q.copy()
        q[1] = q[0] + arch.subarray_length - 1.0
        rate = sum_rate_optimal(absolute_positions(TwoLayerLayout(q, layout.d), arch), scenario).sum_rate
        value = fitness_subarray(q, layout.d, scenario, arch, 1e6)
        assert value <= rate - 1e6
        assert value + 1e6 * subarray_penalty(q, arch) == pytest.approx(rate, abs=1e-6)

    def test_antenna_fitness_decomposition(self, arch, scenario):
        layout = uniform_initial_layout(arch)
        d = layout.d.reshape(-1).copy()
        assert fitness_antenna(d, layout.q, scenario, arch, 1e6) == pytest.approx(
            layout_rate(layout, scenario, arch), abs=1e-12
        )
        d[1] = d[0] + 0.1
        shifted = TwoLayerLayout.unflatten(layout.q, d, arch)
        rate = layout_rate(shifted, scenario, arch)
        value = fitness_antenna(d, layout.q, scenario, arch, 1e6)
        assert value + 1e6 * antenna_penalty(d, arch) == pytest.approx(rate, abs=1e-6)

    def test_batched_fitness(self, arch, scenario):
        layout = uniform_initial_layout(arch)
        batch = fitness_subarray(np.stack([layout.q, layout.q]), layout.d, scenario, arch, 1e6)
        assert batch.shape == (2,)
        d_batch = fitness_antenna(np.stack([layout.d.reshape(-1)] * 3), layout.q, scenario, arch, 1e6)
        assert d_batch.shape == (3,)


class TestInnerSearches:
    def test_single_subarray_stays_in_bounds(self, scenario):
        arch = ArrayArchitecture.from_alpha(1, 12, 24.0, 3 / 8)
        d = uniform_initial_layout(arch).d
        q, run = optimize_subarrays(d, scenario, arch, SMALL, SeedPath(1, 0, "q"))
        assert -12.0 <= q[0] <= 12.0 - arch.subarray_length
        assert run.evaluations == SMALL.evaluations

    def test_subarray_search_never_loses_to_incumbent(self, arch, scenario):
        layout = uniform_initial_layout(arch)
        q, _ = optimize_subarrays(layout.d, scenario, arch, SMALL, SeedPath(2, 0, "q"), incumbent=layout.q)
        assert subarray_penalty(q, arch) == 0
        assert fitness_subarray(q, layout.d, scenario, arch, 1e6) >= fitness_subarray(
            layout.q, layout.d, scenario, arch, 1e6
        )

    def test_flat_objective_for_one_antenna(self):
        arch = ArrayArchitecture(1, 1, 10.0, 1.0)
        toy = Scenario(angles=[[0.2]], gains=[[0.7 + 0.1j]], snr=2.0)
        grid = np.linspace(-5.0, 4.0, 37)
        rates = [sum_rate_optimal(np.array([g + 0.5]), toy).sum_rate for g in grid]
        np.testing.assert_allclose(rates, rates[0], atol=1e-12)
        q, _ = optimize_subarrays(np.array([[0.5]]), toy, arch, SMALL, SeedPath(3))
        assert check_feasible(TwoLayerLayout(q, [[0.5]]), arch).feasible

    def test_array_wise_offsets_skip_search(self, scenario):
        arch = ArrayArchitecture.from_alpha(4, 3, 24.0, 0.25)
        d, run = optimize_antennas(uniform_initial_layout(arch).q, scenario, arch, SMALL, SeedPath(0))
        assert run is None
        np.testing.assert_array_equal(d.reshape(4, 3), np.tile([0.25, 0.75, 1.25], (4, 1)))

    def test_antenna_search_is_feasible_and_improves(self, arch, scenario):
        layout = uniform_initial_layout(arch)
        d, run = optimize_antennas(layout.q, scenario, arch, SMALL, SeedPath(4, 0, "d"))
        assert antenna_penalty(d, arch) == 0
        assert fitness_antenna(d, layout.q, scenario, arch, 1e6) >= fitness_antenna(
            layout.d.reshape(-1), layout.q, scenario, arch, 1e6
        )
        assert run.evaluations == SMALL.evaluations


class TestAlternatingOptimization:
    @pytest.mark.parametrize("scenarios", [pytest.param(5), pytest.param(100, marks=pytest.mark.slow)])
    def test_rate_trace_never_decreases(self, arch, scenarios):
        rng = np.random.default_rng(99)
        for trial in range(scenarios):
            scenario = sample_scenario(3, 3, 1.0, SNR, rng)
            result = ao_optimize(scenario, arch, small_ao(), SeedPath(5, trial, TL_MA))
            assert np.all(np.diff(result.rate_trace) >= 0)
            assert check_feasible(result.layout, arch).feasible
            assert result.sum_rate == pytest.approx(result.rate_trace[-1])

    def test_single_user_beats_fpa(self):
        arch = ArrayArchitecture.from_alpha(4, 3, 24.0, 0.25)
        rng = np.random.default_rng(17)
        for trial in range(5):
            scenario = sample_scenario(1, 3, 1.0, SNR, rng)
            result = run_scheme(TL_MA, scenario, arch, small_ao(), SeedPath(6, trial, TL_MA))
            assert result.sum_rate >= fpa_layout(scenario, arch).sum_rate

    def test_one_round_equals_both_inner_searches(self, arch, scenario):
        seeds = SeedPath(8, 0, TL_MA)
        result = ao_optimize(scenario, arch, small_ao(rounds=1, epsilon=0.0), seeds)
        assert result.rounds == 1

        layout = uniform_initial_layout(arch)
        rate = layout_rate(layout, scenario, arch)
        q, _ = optimize_subarrays(layout.d, scenario, arch, SMALL, seeds.for_call(0), incumbent=layout.q)
        candidate = TwoLayerLayout(q, layout.d)
        if layout_rate(candidate, scenario, arch) >= rate:
            layout, rate = candidate, layout_rate(candidate, scenario, arch)
        d, _ = optimize_antennas(layout.q, scenario, arch, SMALL, seeds.for_call(1), incumbent=layout.d.reshape(-1))
        candidate = TwoLayerLayout.unflatten(layout.q, d, arch)
        if layout_rate(candidate, scenario, arch) >= rate:
            layout = candidate
        np.testing.assert_array_equal(result.positions, absolute_positions(layout, arch))

    def test_evaluation_accounting(self, arch, scenario):
        result = ao_optimize(scenario, arch, small_ao(rounds=2, epsilon=0.0), SeedPath(9))
        assert result.rounds == 2
        assert result.evaluations == 2 * (SMALL.evaluations + SMALL.evaluations)
        assert len(result.swarm_runs) == 4

    def test_displacement_against_uniform_start(self, arch, scenario):
        result = ao_optimize(scenario, arch, small_ao(rounds=1), SeedPath(10))
        initial = uniform_initial_layout(arch)
        assert result.subarray_displacement == pytest.approx(np.abs(result.layout.q - initial.q).sum())
        assert result.antenna_displacement == pytest.approx(np.abs(result.layout.d - initial.d).sum())

    def test_same_seed_same_result(self, arch, scenario):
        first = ao_optimize(scenario, arch, small_ao(rounds=2), SeedPath(11))
        second = ao_optimize(scenario, arch, small_ao(rounds=2), SeedPath(11))
        np.testing.assert_array_equal(first.positions, second.positions)
        np.testing.assert_array_equal(first.rate_trace, second.rate_trace)


class TestBenchmarks:
    def test_sl_ma_is_feasible(self, arch, scenario):
        result = sl_ma_optimize(scenario, arch, small_ao(), SeedPath(12, 0, SL_MA))
        assert check_single_layer_feasible(result.positions, 24.0)
        assert result.subarray_displacement == 0.0
        assert result.antenna_displacement == pytest.approx(
            np.abs(result.positions - uniform_linear_positions(12)).sum()
        )
        assert result.sum_rate == pytest.approx(sum_rate_optimal(result.positions, scenario).sum_rate, abs=1e-12)
        assert result.sum_rate >= fpa_layout(scenario, arch).sum_rate

    def test_sl_ma_starts_no_worse_than_two_layer_start(self, arch, scenario):
        result = sl_ma_optimize(scenario, arch, small_ao(rounds=1), SeedPath(12, 1, SL_MA))
        start = max(fpa_layout(scenario, arch).sum_rate, layout_rate(uniform_initial_layout(arch), scenario, arch))
        assert result.rate_trace[0] == pytest.approx(start, abs=1e-12)
        assert np.all(np.diff(result.rate_trace) >= 0)

    def test_sl_ma_shares_the_alternating_budget(self, arch, scenario):
        config = small_ao(rounds=3, epsilon=0.0)
        result = sl_ma_optimize(scenario, arch, config, SeedPath(12, 2, SL_MA))
        tl = ao_optimize(scenario, arch, config, SeedPath(12, 2, TL_MA))
        assert result.rounds == tl.rounds == 3
        assert len(result.swarm_runs) == 6
        assert result.evaluations == tl.evaluations == 6 * SMALL.evaluations

    def test_sl_ma_single_antenna(self):
        arch = ArrayArchitecture(1, 1, 10.0, 1.0)
        toy = Scenario(angles=[[0.2]], gains=[[0.7 + 0.1j]], snr=2.0)
        result = sl_ma_optimize(toy, arch, small_ao(rounds=1), SeedPath(13))
        assert result.sum_rate == pytest.approx(np.log2(1 + 2.0 * 0.5), abs=1e-12)

    def test_array_wise(self, arch, scenario):
        result = array_wise_optimize(scenario, arch, SMALL, SeedPath(14, 0, ARRAY_WISE))
        assert result.antenna_displacement == 0.0
        assert result.architecture.is_array_wise
        np.testing.assert_array_equal(result.layout.d, np.tile([0.25, 0.75, 1.25], (4, 1)))
        assert check_feasible(result.layout, result.architecture).feasible

    def test_fpa(self, arch, scenario):
        result = fpa_layout(scenario, arch)
        assert result.positions[0] == pytest.approx(-11 / 4)
        np.testing.assert_allclose(np.diff(result.positions), 0.5)
        assert (result.subarray_displacement, result.antenna_displacement, result.evaluations) == (0.0, 0.0, 0)
        assert result.sum_rate == fpa_layout(scenario, arch).sum_rate

    def test_all_at_once_budget_and_feasibility(self, arch, scenario):
        config = small_ao()
        swarm = config.all_at_once_swarm()
        assert swarm.evaluations == SMALL.evaluations + SMALL.evaluations
        result = all_at_once_optimize(scenario, arch, swarm, SeedPath(15, 0, ALL_AT_ONCE))
        assert check_feasible(result.layout, arch).feasible
        assert result.evaluations == swarm.evaluations
        assert result.sum_rate >= result.rate_trace[0]

    def test_budget_override(self):
        config = AoConfig(subarray_swarm=SMALL, antenna_swarm=SMALL, all_at_once_particles=100)
        assert config.all_at_once_swarm().num_particles == 100
        assert config.all_at_once_swarm().num_iterations == SMALL.num_iterations

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_dispatch(self, arch, scenario, scheme):
        result = run_scheme(scheme, scenario, arch, small_ao(rounds=1), SeedPath(16, 0, scheme))
        assert result.scheme == scheme
        assert result.sum_rate > 0

    def test_unknown_scheme(self, arch, scenario):
        with pytest.raises(ValueError, match="Unknown scheme"):
            run_scheme("grid-search", scenario, arch, small_ao(), SeedPath(0))


@pytest.mark.slow
class TestPairedOrdering:
    """Desk-scale orderings over 50 paired scenarios, each gap allowed one standard error."""

    TRIALS = 50
    DESK = SwarmConfig(num_particles=60, num_iterations=60)

    def _mean_sem(self, values):
        values = np.asarray(values)
        return values.mean(), values.std(ddof=1) / np.sqrt(len(values))

    def _run(self, schemes, arch):
        config = AoConfig(subarray_swarm=self.DESK, antenna_swarm=self.DESK)
        results = {scheme: [] for scheme in schemes}
        for trial in range(self.TRIALS):
            scenario = sample_scenario(3, 3, 1.0, SNR, np.random.default_rng(1000 + trial))
            for scheme in schemes:
                results[scheme].append(run_scheme(scheme, scenario, arch, config, SeedPath(77, trial, scheme)))
        return results

    def test_rate_and_displacement_ordering(self, arch):
        results = self._run([SL_MA, TL_MA, ARRAY_WISE, FPA], arch)
        stats = {s: self._mean_sem([r.sum_rate for r in rs]) for s, rs in results.items()}
        for better, worse in [(SL_MA, TL_MA), (TL_MA, ARRAY_WISE), (ARRAY_WISE, FPA)]:
            assert stats[better][0] >= stats[worse][0] - max(stats[better][1], stats[worse][1])
        tl_cost = np.mean([r.total_displacement for r in results[TL_MA]])
        sl_cost = np.mean([r.total_displacement for r in results[SL_MA]])
        assert tl_cost < sl_cost

    def test_alternating_beats_all_at_once(self, arch):
        results = self._run([TL_MA, ALL_AT_ONCE], arch)
        ao_mean, ao_sem = self._mean_sem([r.sum_rate for r in results[TL_MA]])
        joint_mean, joint_sem = self._mean_sem([r.sum_rate for r in results[ALL_AT_ONCE]])
        assert ao_mean >= joint_mean - max(ao_sem, joint_sem)

    @pytest.mark.parametrize("scheme", [TL_MA, SL_MA, ARRAY_WISE, ALL_AT_ONCE])
    def test_rate_grows_with_region_length(self, scheme):
        means = []
        for length in (16.0, 20.0, 24.0):
            arch = ArrayArchitecture.from_alpha(4, 3, length, 3 / 8)
            results = self._run([scheme], arch)
            means.append(self._mean_sem([r.sum_rate for r in results[scheme]]))
        for (low, low_sem), (high, high_sem) in zip(means, means[1:]):
            assert high >= low - max(low_sem, high_sem)
