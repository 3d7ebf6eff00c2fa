"""
The two-phase study.

Learning phase: generate a workload, execute it on the synthetic
application and run both recommenders on the resulting trace.
Testing phase: for each simulated user count, generate a fresh workload
from the same navigation probabilities, execute it and replay the
NOCACHE, DEV, APL and MEM plans on it. Reports compare all of them.

Everything is derived from the master seed; two runs with the same inputs
write identical csv/md outputs.
"""
import hashlib
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .evaluate import PurityManifest, classify, compare, emit_report
from .profiler import analyze_nesting, build_callgraph, build_profiles, write_profile_dump
from .rec_apl import AplConfig, recommend_apl
from .rec_mem import MemConfig, recommend_mem
from .recommendations import write_recommendations
from .replay_sim import (
    CacheConfig, CachingPlan, dev_plan_document, load_dev_plan, plan_from_app, plan_from_recommendations, replay,
    write_metrics_csv,
)
from .signals import recording
from .trace_model import TruncationPolicy, write_trace
from .utils import ensure_directory, write_json, write_text
from .workload import (
    WorkloadConfig, execute_synthetic, generate_workload, load_app, load_navigation, write_request_log,
)

logger = logging.getLogger(__name__)

PLAN_ORDER = ('NOCACHE', 'DEV', 'APL', 'MEM')


def derive_seed(seed, *parts):
    """Stable 63-bit seed for one phase of a study."""
    text = ':'.join(str(part) for part in (seed, *parts))
    return int.from_bytes(hashlib.sha256(text.encode('utf-8')).digest()[:8], 'big') >> 1


@dataclass(frozen=True)
class StudyConfig:
    nav: Path
    app: Path
    seed: int
    out: Path
    requests: int = 500
    users: tuple = (1,)
    learning_users: Optional[int] = None
    dev: Optional[Path] = None
    fmt: str = 'csv'
    apl: AplConfig = field(default_factory=AplConfig)
    mem: MemConfig = field(default_factory=MemConfig)
    cache: CacheConfig = field(default_factory=CacheConfig)
    policy: TruncationPolicy = field(default_factory=TruncationPolicy.from_settings)

    @property
    def learning(self):
        return self.learning_users if self.learning_users is not None else self.users[0]

    def describe(self):
        """Effective configuration; file inputs by name only so the record does not depend on the run directory."""
        return {
            'subcommand': 'study',
            'nav': Path(self.nav).name,
            'app': Path(self.app).name,
            'dev': Path(self.dev).name if self.dev else None,
            'seed': self.seed,
            'requests': self.requests,
            'users': list(self.users),
            'learning_users': self.learning,
            'format': self.fmt,
            'apl': vars(self.apl),
            'mem': vars(self.mem),
            'cache': {
                'default_ttl_ns': self.cache.default_ttl_ns,
                'hit_lookup_ns': self.cache.hit_lookup_ns,
                'miss_overhead_ns': self.cache.miss_overhead_ns,
                'whitelist_check_ns': self.cache.whitelist_check_ns,
            },
            'truncation': {
                'application_packages': list(self.policy.application_packages),
                'internal_packages': list(self.policy.internal_packages),
            },
        }


@dataclass
class StudyResult:
    out: Path
    apl: object = None
    mem: object = None
    dev: Optional[CachingPlan] = None
    manifest: Optional[PurityManifest] = None
    metrics: dict = field(default_factory=dict)
    classifications: tuple = ()
    files: list = field(default_factory=list)


def _write_jsonl(path, writer, *args):
    buffer = io.StringIO()
    writer(*args, buffer)
    return write_text(path, buffer.getvalue())


def _phase(app, spec, config, seed, users, directory):
    """Generate, execute and store one workload; returns the trace records."""
    workload = WorkloadConfig(seed=seed, users=users, request_count=config.requests)
    log = generate_workload(spec, workload, app.parameter_domains())
    records = execute_synthetic(app, log, config.policy, seed=seed)
    ensure_directory(directory)
    _write_jsonl(directory / 'requests.jsonl', write_request_log, log)
    _write_jsonl(directory / 'trace.jsonl', write_trace, records)
    return records


def run_study(config):
    out = ensure_directory(config.out)
    logger.info(f"Study configuration: {config.describe()}")
    result = StudyResult(out=out)

    with recording(out) as ledger:
        write_json(out / 'run_config.json', config.describe())
        spec = load_navigation(config.nav)
        app = load_app(config.app)

        # Learning phase
        learning_seed = derive_seed(config.seed, 'learning')
        records = _phase(app, spec, config, learning_seed, config.learning, out / 'learning')
        nesting = analyze_nesting(records)
        profiles = build_profiles(records, nesting)
        callgraph = build_callgraph(records, nesting)
        _write_jsonl(out / 'learning' / 'profile.jsonl', write_profile_dump, profiles)

        result.apl = recommend_apl(records, config.apl, profiles=profiles)
        result.mem = recommend_mem(records, config.mem, profiles=profiles, callgraph=callgraph)
        write_recommendations(result.apl, out / 'recommendations_apl.json')
        write_recommendations(result.mem, out / 'recommendations_mem.json')

        result.manifest = PurityManifest(app.ground_truth())
        write_json(out / 'manifest.json', result.manifest.as_document())
        result.dev = load_dev_plan(config.dev) if config.dev else plan_from_app(app)
        write_json(out / 'dev_plan.json', dev_plan_document(result.dev))

        plans = {
            'NOCACHE': CachingPlan.nocache(),
            'DEV': result.dev,
            'APL': plan_from_recommendations(result.apl, name='APL'),
            'MEM': plan_from_recommendations(result.mem, name='MEM'),
        }

        # Testing phase, once per simulated user count
        for users in config.users:
            directory = out / f'testing_u{users}'
            testing = _phase(app, spec, config, derive_seed(config.seed, 'testing', users), users, directory)
            replays = [replay(testing, plans[name], config.cache) for name in PLAN_ORDER]
            for metrics in replays:
                write_metrics_csv([metrics], directory / f'metrics_{metrics.plan}.csv')
            result.metrics[users] = replays

        primary = result.metrics[config.users[0]]
        by_plan = {metrics.plan: metrics for metrics in primary}
        result.classifications = (
            classify(result.apl, result.dev, result.manifest, by_plan['APL'], approach='APL'),
            classify(result.mem, result.dev, result.manifest, by_plan['MEM'], approach='MEM'),
        )
        emit_report(
            out / 'report',
            classifications=result.classifications,
            comparisons=[compare(result.apl, result.mem, 'APL', 'MEM')],
            metrics_by_users=sorted(result.metrics.items()),
            fmt=config.fmt,
        )
        result.files = ledger.as_list()

    write_json(out / 'artifacts.json', {'artifacts': result.files})
    logger.info(f"Study finished: {len(result.files)} files in {out}")
    return result
