import random
from collections import defaultdict

from django.test import SimpleTestCase

from memorec.models import Size
from memorec.profiler import build_callgraph, build_profiles
from memorec.rec_mem import (
    MemConfig, cluster_and_rank, io_profile, profile_filter, recommend_mem, saved_time, suggest_implementation,
)

from .factories import call, flat, random_flat_trace

EXHAUSTIVE = MemConfig(kernel='exhaustive', min_mean_time_ns=0)


def _iterative(max_depth, **options):
    return MemConfig(kernel='iterative', min_mean_time_ns=0, initial_depth=1, max_depth=max_depth, **options)


def _full_scan_violations(records):
    """Methods with one input rendering mapped to two outputs, found by a plain scan."""
    outputs = defaultdict(set)
    for record in records:
        outputs[(record.method, record.key)].add(record.output.rendering)
    return {method for (method, _), values in outputs.items() if len(values) > 1}


def _profiles(calls, **options):
    return build_profiles(flat(calls, **options))


class ProfileFilterTests(SimpleTestCase):
    def test_thresholds(self):
        records = [call('once', [1], 1, start=0, duration=1_000_000)]
        records += [call('cheap', [i], 1, start=2_000_000 + i * 10, duration=1) for i in range(100)]
        records += [call('kept', [i], 1, start=3_000_000 + i * 10_000, duration=6000) for i in range(2)]
        self.assertEqual(profile_filter(build_profiles(records), MemConfig(min_mean_time_ns=5000)), ['kept'])

    def test_self_time_basis(self):
        records = [
            call('outer', [1], 1, start=0, duration=10_000), call('inner', [1], 1, start=1, duration=9000, depth=1),
            call('outer', [1], 1, start=20_000, duration=10_000), call('inner', [1], 1, start=20_001, duration=9000, depth=1),
        ]
        profiles = build_profiles(records)
        self.assertEqual(profile_filter(profiles, MemConfig(min_mean_time_ns=5000)), ['inner', 'outer'])
        self.assertEqual(profile_filter(profiles, MemConfig(min_mean_time_ns=5000, cost_basis='self')), ['inner'])


class IoProfileTests(SimpleTestCase):
    def test_consistent_outputs(self):
        profiles = _profiles([('m', [1], 2), ('m', [1], 2)])
        for config in (EXHAUSTIVE, _iterative(16)):
            with self.subTest(kernel=config.kernel):
                self.assertEqual(io_profile(['m'], profiles, config), {'m'})

    def test_conflicting_outputs(self):
        profiles = _profiles([('m', [1], 2), ('m', [1], 3)])
        for config in (EXHAUSTIVE, _iterative(16)):
            with self.subTest(kernel=config.kernel):
                self.assertEqual(io_profile(['m'], profiles, config), set())

    def test_shallow_comparison_discards(self):
        profiles = _profiles([('m', ['{a:1}'], 'x'), ('m', ['{a:2}'], 'y')])
        self.assertEqual(io_profile(['m'], profiles, EXHAUSTIVE), {'m'})
        self.assertEqual(io_profile(['m'], profiles, _iterative(1)), set())
        self.assertEqual(io_profile(['m'], profiles, _iterative(2)), {'m'})
        self.assertEqual(io_profile(['m'], profiles, _iterative(None)), {'m'})

    def test_shallow_comparison_accepts(self):
        profiles = _profiles([('m', ['1'], '{v:1}'), ('m', ['1'], '{v:2}')])
        self.assertEqual(io_profile(['m'], profiles, _iterative(1)), {'m'})
        self.assertEqual(io_profile(['m'], profiles, EXHAUSTIVE), set())

    def test_stable_stop_rule(self):
        profiles = _profiles([('m', ['{a:{b:{c:1}}}'], 'x'), ('m', ['{a:{b:{c:2}}}'], 'y')])
        config = _iterative(None, stop_when_stable=True)
        self.assertEqual(io_profile(['m'], profiles, config), set())
        self.assertEqual(io_profile(['m'], profiles, _iterative(None)), {'m'})

    def test_deep_iterative_equals_exhaustive(self):
        rng = random.Random(100)
        for trial in range(100):
            records = random_flat_trace(rng, methods=4, calls=30, max_height=4)
            profiles = build_profiles(records)
            candidates = sorted(profiles)
            with self.subTest(trial=trial):
                self.assertEqual(
                    io_profile(candidates, profiles, _iterative(None)), io_profile(candidates, profiles, EXHAUSTIVE),
                )
                self.assertEqual(
                    io_profile(candidates, profiles, _iterative(16)), io_profile(candidates, profiles, EXHAUSTIVE),
                )

    def test_config_validation(self):
        for options in ({'kernel': 'fuzzy'}, {'initial_depth': 0}, {'initial_depth': 4, 'max_depth': 2},
                        {'cost_basis': 'wall'}):
            with self.subTest(options=options), self.assertRaises(ValueError):
                MemConfig(**options)


class ClusterAndRankTests(SimpleTestCase):
    def test_saved_time(self):
        profile = _profiles([('m', ['a'], 1)] * 3 + [('m', ['b'], 2)], duration=100)['m']
        self.assertEqual(saved_time(profile), 200.0)

    def test_caller_subsumes_callee(self):
        records = []
        for index in range(2):
            start = index * 1000
            records += [
                call('p', [1], 'P', start=start, duration=100),
                call('c', [1], 'C', start=start + 10, duration=40, depth=1),
            ]
        profiles = build_profiles(records)
        ranked = cluster_and_rank({'p', 'c'}, build_callgraph(records), profiles)
        self.assertEqual([(item.method, item.subsumes) for item in ranked], [('p', ('c',))])

    def test_partial_containment_stays_apart(self):
        records = [
            call('p', [1], 'P', start=0, duration=100), call('c', [1], 'C', start=10, duration=40, depth=1),
            call('p', [1], 'P', start=1000, duration=100), call('c', [1], 'C', start=1010, duration=40, depth=1),
            call('c', [1], 'C', start=2000, duration=40),
        ]
        ranked = cluster_and_rank({'p', 'c'}, build_callgraph(records), build_profiles(records))
        self.assertEqual({item.method for item in ranked}, {'p', 'c'})
        self.assertTrue(all(item.subsumes == () for item in ranked))

    def test_chain_is_reported_under_the_root(self):
        records = []
        for index in range(2):
            start = index * 1000
            records += [
                call('a', [1], 'A', start=start, duration=100),
                call('b', [1], 'B', start=start + 10, duration=50, depth=1),
                call('c', [1], 'C', start=start + 20, duration=10, depth=2),
            ]
        ranked = cluster_and_rank({'a', 'b', 'c'}, build_callgraph(records), build_profiles(records))
        self.assertEqual([(item.method, item.subsumes) for item in ranked], [('a', ('b', 'c'))])

    def test_ties_break_by_signature(self):
        profiles = _profiles([('zeta', [1], 1), ('alpha', [1], 1), ('zeta', [1], 1), ('alpha', [1], 1)])
        records = flat([('zeta', [1], 1), ('alpha', [1], 1), ('zeta', [1], 1), ('alpha', [1], 1)])
        ranked = cluster_and_rank({'zeta', 'alpha'}, build_callgraph(records), profiles)
        self.assertEqual([item.method for item in ranked], ['alpha', 'zeta'])


class SuggestImplementationTests(SimpleTestCase):
    def _hint(self, keys, **options):
        profile = _profiles([('m', [key], f'out-{key}') for key in keys], duration=100)['m']
        return suggest_implementation('m', profile, MemConfig(**options))

    def test_getter(self):
        hint = suggest_implementation('g', _profiles([('g', [], 'v'), ('g', [], 'v')])['g'])
        self.assertTrue(hint.getter)
        self.assertEqual((hint.scope, hint.size), ('global', 'single'))

    def test_repeated_input_prefers_single(self):
        self.assertEqual(self._hint(['a', 'a', 'a', 'b']).size, Size.SINGLE)

    def test_alternating_inputs_prefer_multi(self):
        hint = self._hint(['a', 'b'] * 4)
        self.assertEqual(hint.size, Size.MULTI)
        self.assertFalse(hint.getter)
        self.assertEqual(hint.scope, 'global')

    def test_holding_penalty(self):
        keys = ['a', 'a', 'b', 'a', 'b']
        self.assertEqual(self._hint(keys).size, Size.MULTI)
        self.assertEqual(self._hint(keys, size_penalty_ns=1000).size, Size.SINGLE)


class RecommendMemTests(SimpleTestCase):
    def test_hot_pure_method_ranked_first(self):
        calls = [('app.Hot.get(int)', [i % 2], f'h{i % 2}') for i in range(10)]
        calls += [('app.Warm.get(int)', [1], 'w')] * 2
        records = flat(calls, gap=100_000, duration=20_000)
        recommendations = recommend_mem(records, MemConfig(min_mean_time_ns=5000))
        self.assertEqual([rec.method for rec in recommendations], ['app.Hot.get(int)', 'app.Warm.get(int)'])
        first = recommendations.recommendations[0]
        self.assertEqual(first.score, 8 * 20_000.0)
        self.assertEqual(first.source, 'MEM')
        self.assertIsNone(first.whitelist)
        self.assertIsNotNone(first.hint)

    def test_everything_too_cheap(self):
        records = flat([('m', [1], 1)] * 5, duration=10)
        self.assertEqual(len(recommend_mem(records, MemConfig(min_mean_time_ns=5000))), 0)

    def test_constant_writer_is_a_false_positive(self):
        records = flat([('app.Audit.append(String)', [f'o{i}'], 'ok') for i in range(3)] * 2, gap=10_000, duration=8000)
        recommendations = recommend_mem(records, MemConfig(min_mean_time_ns=5000))
        self.assertEqual(recommendations.methods, {'app.Audit.append(String)'})

    def test_soundness_and_ranking(self):
        rng = random.Random(33)
        for trial in range(100):
            records = random_flat_trace(rng, methods=5, calls=40, max_height=3, pure_bias=0.5)
            config = MemConfig(min_mean_time_ns=rng.choice([0, 3000, 6000]))
            profiles = build_profiles(records)
            recommendations = recommend_mem(records, config)
            with self.subTest(trial=trial):
                self.assertFalse(recommendations.methods & _full_scan_violations(records))
                self.assertLessEqual(recommendations.methods, set(profile_filter(profiles, config)))
                expected = sorted(
                    recommendations.methods,
                    key=lambda m: (-saved_time(profiles[m]), m),
                )
                self.assertEqual([rec.method for rec in recommendations], expected)
