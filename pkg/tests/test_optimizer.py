import itertools

import numpy as np
import pytest

from urbanflux.errors import Infeasible, NegativeCount, ShapeError
from urbanflux.nets import predict_hybrid
from urbanflux.features import env_from_counts
from urbanflux.optimizer import (
    ConstraintSet,
    GaConfig,
    Individual,
    Objective,
    apply_edits,
    decode_grouped,
    make_fitness,
    parse_scenario,
    repair,
    run_ga,
    run_grouped_ga,
    run_scenario,
    step,
    what_if,
    DEFAULT_GROUP_MAPPING,
)

# Reference compositions from the four study locations (16 counts + total).
NANDA_BASE = np.array([88, 19, 10, 18, 72, 103, 112, 3, 122, 44, 108, 71, 0, 27, 90, 16])
PEOPLES_PARK_BASE = np.array([40, 191, 86, 178, 168, 247, 214, 32, 205, 259, 254, 284,
                              0, 27, 118, 102])


def toy_fitness(target):
    def fn(counts):
        d = counts - target
        return float(d @ d)
    return fn


def _cs(base=None, **over):
    base = NANDA_BASE if base is None else base
    kw = dict(base_counts=np.asarray(base), fixed_total=True,
              fixed_indices=frozenset({12}), delta_bound=50)
    kw.update(over)
    return ConstraintSet(**kw)


class TestConstraintSet:
    def test_nanda_base_total(self):
        # the published per-category digits; their printed total is one higher,
        # so the digits are pinned as ground truth
        assert NANDA_BASE.sum() == 903

    def test_peoples_park_base_sums_to_2405(self):
        assert PEOPLES_PARK_BASE.sum() == 2405

    def test_base_is_feasible(self):
        cs = _cs()
        assert cs.satisfied_by(cs.base_counts)

    def test_predicate_rejects_violations(self):
        cs = _cs()
        bad_total = cs.base_counts.copy()
        bad_total[0] += 1
        assert not cs.satisfied_by(bad_total)
        bad_fixed = cs.base_counts.copy()
        bad_fixed[12] += 1
        bad_fixed[0] -= 1
        assert not cs.satisfied_by(bad_fixed)
        bad_bound = cs.base_counts.copy()
        bad_bound[0] += 51
        bad_bound[1] -= 51
        assert not cs.satisfied_by(bad_bound)

    def test_negative_base_rejected(self):
        with pytest.raises(Infeasible):
            _cs(base=np.array([-1] + [1] * 15))

    def test_individual_checked(self):
        cs = _cs()
        Individual.checked(cs.base_counts.copy(), cs)
        with pytest.raises(Infeasible):
            Individual.checked(cs.base_counts + 1, cs)


class TestRepair:
    def test_feasible_input_unchanged(self):
        cs = _cs()
        rng = np.random.default_rng(0)
        out = repair(cs.base_counts.copy(), cs, rng)
        np.testing.assert_array_equal(out.counts, cs.base_counts)

    def test_round_robin_spreads_excess(self):
        base = np.array([10] * 16)
        cs = ConstraintSet(base, fixed_total=True, fixed_indices=frozenset({0, 1, 2, 3}
                           | set(range(7, 16))), delta_bound=50)
        # free indices are 4, 5, 6; add one to each -> total off by +3
        counts = base.copy()
        counts[[4, 5, 6]] += 1
        out = repair(counts, cs, np.random.default_rng(1))
        np.testing.assert_array_equal(out.counts, base)  # each decremented once

    def test_random_inputs_always_feasible(self):
        cs = _cs()
        rng = np.random.default_rng(2)
        for _ in range(200):
            raw = cs.base_counts + rng.integers(-120, 120, 16)
            out = repair(raw, cs, rng)
            assert cs.satisfied_by(out.counts)

    def test_idempotent(self):
        cs = _cs()
        rng = np.random.default_rng(3)
        once = repair(cs.base_counts + rng.integers(-80, 80, 16), cs, rng)
        again = repair(once.counts.copy(), cs, np.random.default_rng(99))
        np.testing.assert_array_equal(once.counts, again.counts)


class TestStep:
    def test_mutation_preserves_total(self):
        cs = _cs()
        cfg = GaConfig(population=20, generations=1, mutation_rate=1.0, seed=0)
        rng = np.random.default_rng(0)
        pop = [Individual.checked(cs.base_counts.copy(), cs) for _ in range(20)]
        new = step(pop, cs, cfg, toy_fitness(cs.base_counts), rng)
        for ind in new:
            assert ind.counts.sum() == cs.base_counts.sum()
            assert cs.satisfied_by(ind.counts)

    def test_full_elitism_keeps_population(self):
        cs = _cs()
        cfg = GaConfig(population=8, generations=1, elitism=8, seed=0)
        rng = np.random.default_rng(0)
        pop = [repair(cs.base_counts + rng.integers(-10, 10, 16), cs, rng)
               for _ in range(8)]
        new = step(pop, cs, cfg, toy_fitness(cs.base_counts), rng)
        old_sorted = sorted(tuple(i.counts) for i in pop)
        new_sorted = sorted(tuple(i.counts) for i in new)
        assert old_sorted == new_sorted

    def test_best_fitness_non_increasing(self):
        cs = _cs()
        target = repair(cs.base_counts + np.array([5, -5] + [0] * 14),
                        cs, np.random.default_rng(4)).counts
        result = run_ga(cs, GaConfig(population=16, generations=40, seed=1),
                        toy_fitness(target))
        assert all(a >= b - 1e-12 for a, b in zip(result.history, result.history[1:]))


class TestRunGa:
    def test_toy_known_optimum_solved_exactly(self):
        cs = _cs()
        rng = np.random.default_rng(8)
        noise = rng.integers(-30, 30, 16)
        target = repair(cs.base_counts + noise, cs, rng).counts
        cfg = GaConfig(population=64, generations=200, mutation_rate=0.8,
                       crossover_rate=0.9, seed=2)
        result = run_ga(cs, cfg, toy_fitness(target))
        np.testing.assert_array_equal(result.best.counts, target)
        assert result.best_fitness == 0.0

    def test_never_worse_than_base(self):
        cs = _cs()
        cfg = GaConfig(population=16, generations=5, seed=3)
        result = run_ga(cs, cfg, toy_fitness(cs.base_counts))
        assert result.best_fitness <= result.base_fitness

    def test_bit_reproducible(self):
        cs = _cs()
        cfg = GaConfig(population=24, generations=20, seed=11)
        target = cs.base_counts.copy()
        target[1] += 20
        target[3] -= 20
        a = run_ga(cs, cfg, toy_fitness(target))
        b = run_ga(cs, cfg, toy_fitness(target))
        np.testing.assert_array_equal(a.best.counts, b.best.counts)
        assert a.history == b.history

    def test_every_evaluated_individual_is_feasible(self):
        cs = _cs()
        seen = []

        def spy(counts):
            seen.append(counts.copy())
            return float(np.var(counts))

        run_ga(cs, GaConfig(population=12, generations=10, seed=5), spy)
        assert seen
        for counts in seen:
            assert cs.satisfied_by(counts)


class TestObjective:
    def test_variance_matches_hand_rolled(self, models_td):
        model_t, model_d = models_td
        counts = np.array([5] * 16)
        env = env_from_counts(counts, model_t.norm_info_).as_vector()
        pred = predict_hybrid(model_t, model_d, env)
        v = pred.hourly_vht
        hand = float(((v - v.mean()) ** 2).sum() / 24.0)
        assert Objective("variance")(pred) == pytest.approx(hand, rel=1e-12)

    def test_uniform_hourly_has_zero_variance(self, models_td):
        model_t, model_d = models_td
        pred = predict_hybrid(model_t, model_d,
                              env_from_counts(np.array([3] * 16),
                                              model_t.norm_info_).as_vector())
        uniform = type(pred)(total_vht=pred.total_vht,
                             hourly_vht=np.full(24, pred.total_vht / 24),
                             proportions=np.full(24, 1 / 24))
        assert Objective("variance")(uniform) == pytest.approx(0.0, abs=1e-18)

    def test_fitness_pure(self, models_td):
        model_t, model_d = models_td
        fitness = make_fitness(model_t, model_d, Objective("variance"))
        a = fitness(NANDA_BASE)
        b = fitness(NANDA_BASE.copy())
        assert a == b

    def test_peak_and_custom(self, models_td):
        model_t, model_d = models_td
        pred = predict_hybrid(model_t, model_d,
                              env_from_counts(NANDA_BASE, model_t.norm_info_).as_vector())
        assert Objective("peak")(pred) == pytest.approx(pred.hourly_vht.max())
        w = tuple(np.eye(24)[5])
        assert Objective("custom", w)(pred) == pytest.approx(pred.hourly_vht[5])


class TestGrouped:
    def test_zero_deltas_decode_to_base(self):
        cs = _cs()
        out = decode_grouped(np.zeros(4, dtype=np.int64), cs, DEFAULT_GROUP_MAPPING,
                             np.random.default_rng(0))
        np.testing.assert_array_equal(out.counts, cs.base_counts)

    def test_decoded_always_feasible(self):
        cs = _cs()
        rng = np.random.default_rng(1)
        for _ in range(200):
            deltas = rng.integers(-cs.delta_bound, cs.delta_bound + 1, 4)
            out = decode_grouped(deltas, cs, DEFAULT_GROUP_MAPPING, rng)
            assert cs.satisfied_by(out.counts)

    def test_group_deltas_apply_to_mapped_categories(self):
        cs = _cs()
        out = decode_grouped(np.array([10, 0, 0, 0]), cs, DEFAULT_GROUP_MAPPING,
                             np.random.default_rng(2))
        assert out.counts[1] == cs.base_counts[1] + 10  # eating group is index 01
        assert out.counts.sum() == cs.base_counts.sum()

    def test_exhaustive_oracle_small_bounds(self, models_td):
        model_t, model_d = models_td
        cs = _cs(delta_bound=2)
        fitness = make_fitness(model_t, model_d, Objective("variance"))
        cfg = GaConfig(population=64, generations=60, mutation_rate=0.6, seed=7)
        result = run_grouped_ga(cs, cfg, fitness)
        # enumerate the full 5^4 genome space with the same decode rule
        best = np.inf
        for deltas in itertools.product(range(-2, 3), repeat=4):
            ind = decode_grouped(np.array(deltas), cs, DEFAULT_GROUP_MAPPING,
                                 np.random.default_rng(cfg.seed))
            best = min(best, fitness(ind.counts))
        assert result.best_fitness == pytest.approx(best, abs=1e-9)

    def test_grouped_reproducible(self, models_td):
        model_t, model_d = models_td
        cs = _cs(delta_bound=5)
        fitness = make_fitness(model_t, model_d, Objective("variance"))
        cfg = GaConfig(population=16, generations=10, seed=3)
        a = run_grouped_ga(cs, cfg, fitness)
        b = run_grouped_ga(cs, cfg, fitness)
        np.testing.assert_array_equal(a.best.counts, b.best.counts)
        assert a.history == b.history


class TestWhatIf:
    def test_nanda_residential_edit(self, models_td):
        # residential 122 -> 202 adds exactly 80 to the composition total
        model_t, model_d = models_td
        result = what_if(NANDA_BASE, {8: 202}, model_t, model_d)
        assert result.edited_counts.sum() == NANDA_BASE.sum() + 80
        assert result.edited_counts[8] == 202
        assert result.base.total_vht > 0
        assert result.l1_divergence >= 0

    def test_proportional_scaling_preserves_proportions(self, models_td):
        model_t, model_d = models_td
        result = what_if(NANDA_BASE, ("scale", int(NANDA_BASE.sum()) * 2),
                         model_t, model_d)
        np.testing.assert_array_equal(result.edited_counts, NANDA_BASE * 2)
        base_p = NANDA_BASE / NANDA_BASE.sum()
        edit_p = result.edited_counts / result.edited_counts.sum()
        np.testing.assert_array_equal(base_p, edit_p)

    def test_scaling_keeps_requested_total(self):
        out = apply_edits(NANDA_BASE, ("scale", 984))
        assert out.sum() == 984

    def test_equalize_divisible_total(self, models_td):
        model_t, model_d = models_td
        base = np.full(16, 100)
        result = what_if(base, "equalize", model_t, model_d)
        np.testing.assert_array_equal(result.edited_counts, base)
        p = result.edited.proportions
        base_env = env_from_counts(base, model_t.norm_info_)
        np.testing.assert_allclose(base_env.proportions, np.full(16, 1 / 16))

    def test_equalize_spreads_remainder(self):
        out = apply_edits(np.array([10] * 15 + [18]), "equalize")
        assert out.sum() == 168
        assert sorted(set(out.tolist())) == [10, 11]

    def test_negative_edit_rejected(self, models_td):
        model_t, model_d = models_td
        with pytest.raises(NegativeCount):
            what_if(NANDA_BASE, {3: -1}, model_t, model_d)

    def test_unknown_edit_form(self):
        with pytest.raises(ShapeError):
            apply_edits(NANDA_BASE, ("unknown", 2))


class TestScenario:
    def test_parse_defaults(self):
        cs, cfg, objective, options = parse_scenario({"base_counts": NANDA_BASE.tolist()})
        assert cs.delta_bound == 50
        assert cs.fixed_indices == frozenset({12})
        assert cfg.population == 64
        assert objective.kind == "variance"
        assert options["grouped"] is False

    def test_parse_rejects_bad_counts(self):
        with pytest.raises(ShapeError):
            parse_scenario({"base_counts": [1, 2, 3]})
        with pytest.raises(ShapeError):
            parse_scenario({})

    def test_run_scenario_peoples_park_relieves_peak(self, paper_scale_models):
        # the scenario needs models whose training envelope covers a 2405-POI
        # buffer, i.e. the 1 km sampling geometry
        model_t, model_d = paper_scale_models
        doc = {
            "base_counts": PEOPLES_PARK_BASE.tolist(),
            "fixed_indices": [12],
            "delta_bound": 50,
            "objective": {"kind": "variance"},
            "ga": {"population": 48, "generations": 80, "mutation_rate": 0.6, "seed": 4},
        }
        result = run_scenario(doc, model_t, model_d)
        assert sum(result["best_counts"]) == 2405
        assert result["best_counts"][12] == 0  # transport hub held fixed
        assert result["best_fitness"] <= result["base_fitness"]
        base_peak = max(result["base_prediction"]["hourly_vht"])
        best_peak = max(result["best_prediction"]["hourly_vht"])
        assert best_peak <= base_peak  # flattening the curve relieves the peak
