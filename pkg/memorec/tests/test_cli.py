import csv
import io
import json
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

from django.test import SimpleTestCase, override_settings

from memorec.cli import RunConfig, main
from memorec.conf import memorec_settings
from memorec.exceptions import ConfigurationError
from memorec.models import INVALID_CATEGORIES
from memorec.rec_apl import AplConfig
from memorec.replay_sim import CacheConfig
from memorec.study import PLAN_ORDER, StudyConfig, derive_seed, run_study

from .factories import APP_PATH, NAV_PATH

HOT = {
    'store.catalog.ProductRepository.findById(String)',
    'store.catalog.PriceService.listPrice(String)',
    'store.web.MenuBuilder.buildMenu(String)',
    'store.catalog.CategoryService.findCategory(String)',
}
AUDIT = 'store.orders.AuditLog.append(String)'
CHANGING = {
    'store.web.FrontController.handle()',
    'store.web.BannerService.currentBanner()',
    'store.inventory.StockService.available(String)',
    'store.marketing.PromoService.randomPromotions(String)',
}
TIME_VARYING = {
    'store.web.BannerService.currentBanner()',
    'store.inventory.StockService.available(String)',
}


def run(*argv):
    """Exit status, stdout and stderr of one command line."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        status = main([str(arg) for arg in argv])
    return status, out.getvalue(), err.getvalue()


def read_rows(path):
    with open(path, newline='', encoding='utf-8') as handle:
        return list(csv.DictReader(handle))


def tree_bytes(root):
    root = Path(root)
    return {path.relative_to(root).as_posix(): path.read_bytes() for path in sorted(root.rglob('*')) if path.is_file()}


class UsageTests(SimpleTestCase):
    def test_unknown_subcommand(self):
        status, _, err = run('bogus')
        self.assertEqual(status, 2)
        self.assertIn('bogus', err)

    def test_missing_required_option(self):
        self.assertEqual(run('profile')[0], 2)

    def test_missing_input_file(self):
        status, _, err = run('profile', '--trace', '/nonexistent/trace.jsonl')
        self.assertEqual(status, 1)
        self.assertIn('does not exist', err)

    def test_invalid_parameter(self):
        with tempfile.TemporaryDirectory() as tmp:
            status, _, err = run('trace-gen', '--nav', NAV_PATH, '--app', APP_PATH, '--seed', 1, '--requests', 5,
                                 '--out', Path(tmp) / 'gen')
            self.assertEqual(status, 0)
            trace = Path(tmp) / 'gen' / 'trace.jsonl'
            status, _, err = run('recommend-apl', '--trace', trace, '--k', -1, '--out', Path(tmp) / 'apl.json')
        self.assertEqual(status, 1)
        self.assertIn('k must be non-negative', err)

    def test_malformed_trace(self):
        with tempfile.TemporaryDirectory() as tmp:
            trace = Path(tmp) / 'trace.jsonl'
            trace.write_text('{"format": "memorec-trace", "version": 1, "epoch_ns": 0}\nnot json\n', encoding='utf-8')
            self.assertEqual(run('profile', '--trace', trace)[0], 1)
            status, out, _ = run('profile', '--trace', trace, '--on-error', 'skip')
        self.assertEqual(status, 0)
        self.assertIn('skipped_lines: 1', out)

    def test_run_config(self):
        with self.assertRaises(ConfigurationError):
            RunConfig('trace-gen', paths={'nav': str(NAV_PATH), 'app': str(APP_PATH)})
        run_config = RunConfig.from_options('study', {
            'nav': str(NAV_PATH), 'app': str(APP_PATH), 'seed': 4, 'out': 'x', 'users': [1, 5], 'max_depth': 0,
            'kernel': 'iterative', 'ttl_ns': 1000,
        })
        self.assertEqual(run_config.users, (1, 5))
        self.assertIsNone(run_config.mem.max_depth)
        self.assertEqual(run_config.cache.default_ttl_ns, 1000)
        self.assertEqual(run_config.describe()['mem']['kernel'], 'iterative')


class PipelineTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls._tmp.name)
        cls.gen = cls.root / 'gen'
        status, cls.gen_out, err = run(
            'trace-gen', '--nav', NAV_PATH, '--app', APP_PATH, '--seed', 11, '--requests', 300, '--out', cls.gen,
        )
        assert status == 0, err
        cls.trace = cls.gen / 'trace.jsonl'
        for name in ('apl', 'mem'):
            status, _, err = run(f'recommend-{name}', '--trace', cls.trace, '--out', cls.root / f'{name}.json')
            assert status == 0, err

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()
        super().tearDownClass()

    def test_trace_gen_outputs(self):
        self.assertIn('300 requests', self.gen_out)
        self.assertEqual(len((self.gen / 'requests.jsonl').read_text(encoding='utf-8').splitlines()), 301)
        manifest = json.loads((self.gen / 'manifest.json').read_text(encoding='utf-8'))
        self.assertEqual(manifest['methods'][AUDIT], 'file-write')

    def test_trace_gen_is_reproducible(self):
        with tempfile.TemporaryDirectory() as tmp:
            status, _, _ = run('trace-gen', '--nav', NAV_PATH, '--app', APP_PATH, '--seed', 11, '--requests', 300,
                               '--out', tmp)
            self.assertEqual(status, 0)
            self.assertEqual(tree_bytes(tmp), tree_bytes(self.gen))

    def test_trace_gen_from_request_log(self):
        with tempfile.TemporaryDirectory() as tmp:
            status, _, _ = run('trace-gen', '--nav', NAV_PATH, '--app', APP_PATH, '--seed', 11,
                               '--log', self.gen / 'requests.jsonl', '--out', tmp)
            self.assertEqual(status, 0)
            self.assertEqual((Path(tmp) / 'trace.jsonl').read_bytes(), self.trace.read_bytes())

    def test_profile(self):
        status, out, _ = run('profile', '--trace', self.trace, '--out', self.root / 'profile.jsonl')
        self.assertEqual(status, 0)
        self.assertIn('skipped_lines: 0', out)
        lines = [json.loads(line) for line in (self.root / 'profile.jsonl').read_text(encoding='utf-8').splitlines()]
        self.assertEqual([line['method'] for line in lines], sorted(line['method'] for line in lines))
        self.assertIn(AUDIT, {line['method'] for line in lines})

    def test_recommendation_files(self):
        mem = json.loads((self.root / 'mem.json').read_text(encoding='utf-8'))
        apl = json.loads((self.root / 'apl.json').read_text(encoding='utf-8'))
        self.assertEqual((mem['format'], mem['source'], apl['source']), ('memorec-recommendations', 'MEM', 'APL'))
        self.assertTrue(HOT <= {item['method'] for item in mem['recommendations']})
        self.assertTrue(all(item['whitelist'] for item in apl['recommendations']))
        self.assertTrue(all(item['hint'] for item in mem['recommendations']))

    def test_replay(self):
        out = self.root / 'replay_mem.csv'
        status, stdout, _ = run('replay', '--trace', self.trace, '--plan', self.root / 'mem.json', '--out', out)
        self.assertEqual(status, 0)
        self.assertIn('MEM: relative throughput', stdout)
        rows = read_rows(out)
        self.assertEqual(rows[-1]['method'], 'TOTAL')
        self.assertGreater(int(rows[-1]['hits']), 0)

    def test_replay_absent_method(self):
        plan = self.root / 'ghost_plan.json'
        plan.write_text(json.dumps({
            'format': 'memorec-dev-plan', 'methods': [{'method': 'store.Ghost.haunt()', 'ttl_ns': 100}],
        }), encoding='utf-8')
        out = self.root / 'ghost.csv'
        status, _, _ = run('replay', '--trace', self.trace, '--plan', plan, '--out', out)
        self.assertEqual(status, 0)
        row = read_rows(out)[0]
        self.assertEqual((row['plan'], row['method']), ('DEV', 'store.Ghost.haunt()'))
        self.assertEqual([row[name] for name in ('hits', 'misses', 'additions', 'discards', 'saved_ns')],
                         ['0', '0', '0', '0', '0'])

    def test_compare(self):
        out = self.root / 'overlap.csv'
        status, stdout, _ = run('compare', '--a', self.root / 'apl.json', '--b', self.root / 'mem.json', '--out', out)
        self.assertEqual(status, 0)
        self.assertTrue(stdout.startswith('shared: '))
        rows = read_rows(out)
        self.assertTrue(all((row['set_a'], row['set_b']) == ('apl', 'mem') for row in rows))
        self.assertTrue(HOT <= {row['method'] for row in rows if row['in_b'] == 'true'})

    def test_report(self):
        out = self.root / 'report'
        status, _, err = run(
            'report', '--trace', self.trace, '--apl', self.root / 'apl.json', '--mem', self.root / 'mem.json',
            '--manifest', self.gen / 'manifest.json', '--format', 'md', '--out', out,
        )
        self.assertEqual(status, 0, err)
        self.assertTrue((out / 'summary.md').is_file())
        throughput = read_rows(out / 'throughput.csv')
        self.assertEqual([row['plan'] for row in throughput], ['NOCACHE', 'DEV', 'APL', 'MEM'])
        self.assertEqual(float(throughput[0]['relative_throughput']), 0.0)
        labels = {row['method']: row['label'] for row in read_rows(out / 'classification.csv') if row['approach'] == 'MEM'}
        self.assertEqual(labels[AUDIT], 'invalid')

    def test_report_unknown_method(self):
        manifest = self.root / 'partial_manifest.json'
        manifest.write_text(json.dumps({'methods': {AUDIT: 'file-write'}}), encoding='utf-8')
        status, _, err = run(
            'report', '--trace', self.trace, '--apl', self.root / 'apl.json', '--mem', self.root / 'mem.json',
            '--manifest', manifest, '--out', self.root / 'partial',
        )
        self.assertEqual(status, 1)
        self.assertIn('missing from the purity manifest', err)


class StudyTests(SimpleTestCase):
    def _config(self, out, **options):
        return StudyConfig(nav=NAV_PATH, app=APP_PATH, seed=2024, out=Path(out), **options)

    def test_derive_seed(self):
        self.assertEqual(derive_seed(1, 'learning'), derive_seed(1, 'learning'))
        self.assertNotEqual(derive_seed(1, 'learning'), derive_seed(1, 'testing', 1))
        self.assertLess(derive_seed(1, 'testing', 5), 2 ** 63)

    def test_reruns_are_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = run_study(self._config(Path(tmp) / 'a', requests=150, users=(1, 3), fmt='md'))
            run_study(self._config(Path(tmp) / 'b', requests=150, users=(1, 3), fmt='md'))
            a, b = tree_bytes(Path(tmp) / 'a'), tree_bytes(Path(tmp) / 'b')
        self.assertEqual(a, b)
        self.assertIn('report/summary.md', a)
        self.assertIn('testing_u3/metrics_MEM.csv', a)
        self.assertEqual(sorted(first.metrics), [1, 3])
        listed = {item['path'] for item in json.loads(a['artifacts.json'])['artifacts']}
        self.assertEqual(listed, set(a) - {'artifacts.json'})

    def test_study_command(self):
        with tempfile.TemporaryDirectory() as tmp:
            status, out, err = run('study', '--nav', NAV_PATH, '--app', APP_PATH, '--seed', 5, '--requests', 100,
                                   '--users', 1, 2, '--out', tmp)
            self.assertEqual(status, 0, err)
            self.assertIn('APL: ', out)
            self.assertTrue((Path(tmp) / 'report' / 'throughput.csv').is_file())
            config = json.loads((Path(tmp) / 'run_config.json').read_text(encoding='utf-8'))
        self.assertEqual((config['seed'], config['users'], config['nav']), (5, [1, 2], 'nav.json'))

    def test_recommendation_quality(self):
        with tempfile.TemporaryDirectory() as tmp:
            result = run_study(self._config(tmp, cache=CacheConfig(default_ttl_ns=None)))
        self.assertTrue(HOT <= result.mem.methods)
        self.assertIn(AUDIT, result.mem.methods)
        self.assertFalse(result.mem.methods & CHANGING)
        self.assertIn('store.catalog.ProductRepository.findById(String)', result.apl.methods)
        self.assertTrue(result.apl.methods <= HOT | TIME_VARYING)
        self.assertTrue(all(rec.whitelist for rec in result.apl))
        self.assertEqual([metrics.plan for metrics in result.metrics[1]], list(PLAN_ORDER))

        apl, mem = result.classifications
        for classification in (apl, mem):
            for row in classification.rows:
                with self.subTest(approach=classification.approach, method=row.method):
                    invalid = result.manifest.category(row.method) in INVALID_CATEGORIES
                    self.assertEqual(row.label == 'invalid', invalid)
        mem_rows = {row.method: row for row in mem.rows}
        self.assertEqual(mem_rows[AUDIT].label, 'invalid')
        self.assertEqual(mem_rows['store.catalog.ProductRepository.findById(String)'].label, 'existing')
        self.assertEqual(mem.usefulness_rate, 1.0)
        apl_rows = {row.method: row for row in apl.rows}
        self.assertTrue(apl_rows['store.catalog.ProductRepository.findById(String)'].useful)
        self.assertEqual(apl.usefulness_rate, 1.0)


class SettingsTests(SimpleTestCase):
    def test_sections_merge_over_defaults(self):
        with override_settings(MEMOREC={'APL': {'K': 2.5}}):
            self.assertEqual(AplConfig().k, 2.5)
            self.assertEqual(AplConfig().changeability_ceiling, 0.1)
            self.assertEqual(memorec_settings.CACHE['HIT_LOOKUP_NS'], 500)
        self.assertEqual(AplConfig().k, 1.0)

    def test_unknown_section(self):
        with self.assertRaises(AttributeError):
            memorec_settings.METRICS
