"""
Subcommand implementations behind ``manage.py memorec``.

Each handler takes a RunConfig built from the parsed options, logs it, and
returns the files it wrote. main(argv) runs the management command the way
the shell would and returns its exit status.
"""
import io
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .evaluate import OVERLAP_COLUMNS, classify, compare, emit_report, load_manifest
from .exceptions import ConfigurationError
from .profiler import analyze_nesting, build_profiles, profile_summary, write_profile_dump
from .rec_apl import AplConfig, recommend_apl
from .rec_mem import MemConfig, recommend_mem
from .recommendations import load_recommendations, write_recommendations
from .replay_sim import (
    CacheConfig, CachingPlan, load_dev_plan, plan_from_recommendations, replay, simulate_throughput,
    write_metrics_csv,
)
from .study import StudyConfig, run_study
from .trace_model import TruncationPolicy, read_trace, trace_digest, write_trace
from .utils import CSVExporter, ensure_directory, load_json_document, write_json, write_text
from .workload import (
    WorkloadConfig, execute_synthetic, generate_workload, load_app, load_navigation, read_request_log,
    write_request_log,
)

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('trace-gen', 'profile', 'recommend-apl', 'recommend-mem', 'replay', 'compare', 'report', 'study')

# Path options that must name an existing file when given
INPUT_PATHS = ('nav', 'app', 'trace', 'plan', 'a', 'b', 'apl', 'mem', 'dev', 'manifest', 'log')

REQUIRED = {
    'trace-gen': ('nav', 'app', 'seed', 'out'),
    'profile': ('trace',),
    'recommend-apl': ('trace', 'out'),
    'recommend-mem': ('trace', 'out'),
    'replay': ('trace', 'plan', 'out'),
    'compare': ('a', 'b'),
    'report': ('trace', 'apl', 'mem', 'manifest', 'out'),
    'study': ('nav', 'app', 'seed', 'out'),
}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    paths: dict = field(default_factory=dict)
    seed: Optional[int] = None
    users: tuple = (1,)
    learning_users: Optional[int] = None
    requests: Optional[int] = None
    duration_ns: Optional[int] = None
    fmt: str = 'csv'
    on_error: str = 'abort'
    plan_name: Optional[str] = None
    apl: AplConfig = field(default_factory=AplConfig)
    mem: MemConfig = field(default_factory=MemConfig)
    cache: CacheConfig = field(default_factory=CacheConfig)
    verbosity: int = 1

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigurationError(f"Unknown subcommand '{self.subcommand}'")
        for name in REQUIRED[self.subcommand]:
            value = self.seed if name == 'seed' else self.paths.get(name)
            if value is None:
                raise ConfigurationError(f"{self.subcommand} requires --{name}")
        for name in INPUT_PATHS:
            path = self.paths.get(name)
            if path is not None and not Path(path).is_file():
                raise ConfigurationError(f"--{name}: {path} does not exist")

    def path(self, name):
        value = self.paths.get(name)
        return Path(value) if value is not None else None

    @classmethod
    def from_options(cls, subcommand, options):
        def pick(*names):
            return {name: options[name] for name in names if options.get(name) is not None}

        users = tuple(options.get('users') or (1,))
        try:
            apl = AplConfig(**pick('k', 'changeability_ceiling', 'min_input_occurrences'))
            mem_options = pick('kernel', 'min_mean_time_ns', 'initial_depth', 'max_depth', 'cost_basis')
            if mem_options.get('max_depth') == 0:
                mem_options['max_depth'] = None  # unbounded
            mem = MemConfig(**mem_options)
            cache = CacheConfig(**{
                ('default_ttl_ns' if name == 'ttl_ns' else name): value
                for name, value in pick('ttl_ns', 'hit_lookup_ns', 'miss_overhead_ns', 'whitelist_check_ns').items()
            })
            return cls(
                subcommand=subcommand,
                paths={name: options[name] for name in INPUT_PATHS + ('out',) if options.get(name) is not None},
                seed=options.get('seed'),
                users=users,
                learning_users=options.get('learning_users'),
                requests=options.get('requests'),
                duration_ns=options.get('duration_ns'),
                fmt=options.get('format') or 'csv',
                on_error=options.get('on_error') or 'abort',
                plan_name=options.get('name'),
                apl=apl,
                mem=mem,
                cache=cache,
                verbosity=options.get('verbosity', 1),
            )
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

    def describe(self):
        return {
            'subcommand': self.subcommand,
            'paths': {name: str(value) for name, value in sorted(self.paths.items())},
            'seed': self.seed,
            'users': list(self.users),
            'requests': self.requests,
            'duration_ns': self.duration_ns,
            'format': self.fmt,
            'on_error': self.on_error,
            'apl': vars(self.apl),
            'mem': vars(self.mem),
            'cache': {
                'default_ttl_ns': self.cache.default_ttl_ns,
                'hit_lookup_ns': self.cache.hit_lookup_ns,
                'miss_overhead_ns': self.cache.miss_overhead_ns,
                'whitelist_check_ns': self.cache.whitelist_check_ns,
            },
        }


def _stream_to(path, writer, *args):
    buffer = io.StringIO()
    writer(*args, buffer)
    return write_text(path, buffer.getvalue())


def load_plan(document, name=None):
    """A CachingPlan from either a developer plan or a recommendation file."""
    data = load_json_document(document, 'plan')
    if data.get('format') == 'memorec-dev-plan':
        plan = load_dev_plan(data)
        return CachingPlan(name, plan.rules, plan.source) if name else plan
    return plan_from_recommendations(load_recommendations(data), name=name)


def trace_gen(run, stdout):
    out = ensure_directory(run.path('out'))
    spec = load_navigation(run.path('nav'))
    app = load_app(run.path('app'))
    if run.path('log') is not None:
        with open(run.path('log'), encoding='utf-8') as handle:
            log = read_request_log(handle)
    else:
        if run.duration_ns is not None and run.requests is None:
            workload = WorkloadConfig(seed=run.seed, users=run.users[0], duration_ns=run.duration_ns)
        else:
            workload = WorkloadConfig(seed=run.seed, users=run.users[0], request_count=run.requests or 500)
        log = generate_workload(spec, workload, app.parameter_domains())
    records = execute_synthetic(app, log, TruncationPolicy.from_settings(), seed=run.seed)
    written = [
        _stream_to(out / 'requests.jsonl', write_request_log, log),
        _stream_to(out / 'trace.jsonl', write_trace, records),
        write_json(out / 'manifest.json', {'methods': app.ground_truth()}),
    ]
    stdout.write(f"{len(log)} requests, {len(records)} trace records written to {out}\n")
    return written


def profile(run, stdout):
    trace = read_trace(run.path('trace'), on_error=run.on_error)
    digest = trace_digest(trace.records)
    span = f"[{digest.span[0]}, {digest.span[1]}]" if digest.span else "empty"
    stdout.write(
        f"records: {digest.records}\nmethods: {digest.methods}\nsessions: {digest.sessions}\n"
        f"span_ns: {span}\nskipped_lines: {trace.skipped}\n"
    )
    profiles = build_profiles(trace.records, analyze_nesting(trace.records))
    if run.path('out') is not None:
        return [_stream_to(run.path('out'), write_profile_dump, profiles)]
    for item in profiles.values():
        summary = profile_summary(item)
        stdout.write(f"{summary['method']}: count={summary['count']} mean_total_ns={summary['mean_total_ns']:.1f}\n")
    return []


def recommend(run, stdout):
    trace = read_trace(run.path('trace'), on_error=run.on_error)
    if run.subcommand == 'recommend-apl':
        recommendations = recommend_apl(trace.records, run.apl)
    else:
        recommendations = recommend_mem(trace.records, run.mem)
    for rec in recommendations:
        stdout.write(f"{rec.method}\t{rec.score:.1f}\n")
    return [write_recommendations(recommendations, run.path('out'))]


def replay_plan(run, stdout):
    trace = read_trace(run.path('trace'), on_error=run.on_error)
    plan = load_plan(run.path('plan'), name=run.plan_name)
    metrics = replay(trace.records, plan, run.cache)
    stdout.write(f"{plan.name}: relative throughput {metrics.relative_throughput:+.4f}\n")
    return [write_metrics_csv([metrics], run.path('out'))]


def compare_sets(run, stdout):
    a = load_recommendations(run.path('a'))
    b = load_recommendations(run.path('b'))
    report = compare(a, b, run.path('a').stem, run.path('b').stem)
    stdout.write(
        f"shared: {', '.join(sorted(report.shared)) or '-'}\n"
        f"only {report.name_a}: {', '.join(sorted(report.only_a)) or '-'}\n"
        f"only {report.name_b}: {', '.join(sorted(report.only_b)) or '-'}\n"
    )
    if run.path('out') is None:
        return []
    exporter = CSVExporter(run.path('out'), OVERLAP_COLUMNS)
    for row in report.rows():
        exporter.add_row(row)
    return [exporter.save()]


def report(run, stdout):
    trace = read_trace(run.path('trace'), on_error=run.on_error)
    apl = load_recommendations(run.path('apl'))
    mem = load_recommendations(run.path('mem'))
    manifest = load_manifest(run.path('manifest'))
    dev = load_plan(run.path('dev'), name='DEV') if run.path('dev') else CachingPlan('DEV')
    plans = [CachingPlan.nocache(), dev, plan_from_recommendations(apl, 'APL'), plan_from_recommendations(mem, 'MEM')]
    replays = [replay(trace.records, plan, run.cache) for plan in plans]
    by_plan = {metrics.plan: metrics for metrics in replays}
    classifications = (
        classify(apl, dev, manifest, by_plan['APL'], approach='APL'),
        classify(mem, dev, manifest, by_plan['MEM'], approach='MEM'),
    )
    stdout.write(simulate_throughput(replays).to_string(index=False) + '\n')
    return emit_report(
        run.path('out'),
        classifications=classifications,
        comparisons=[compare(apl, mem, 'APL', 'MEM')],
        metrics_by_users=[(run.users[0] if len(run.users) == 1 else '', replays)],
        fmt=run.fmt,
    )


def study(run, stdout):
    config = StudyConfig(
        nav=run.path('nav'),
        app=run.path('app'),
        seed=run.seed,
        out=run.path('out'),
        requests=run.requests or 500,
        users=run.users,
        learning_users=run.learning_users,
        dev=run.path('dev'),
        fmt=run.fmt,
        apl=run.apl,
        mem=run.mem,
        cache=run.cache,
    )
    result = run_study(config)
    for classification in result.classifications:
        rate = classification.usefulness_rate
        stdout.write(
            f"{classification.approach}: {len(classification.rows)} recommendations, usefulness rate "
            f"{'n/a' if rate is None else f'{rate:.2f}'}\n"
        )
    return [Path(result.out) / item['path'] for item in result.files]


HANDLERS = {
    'trace-gen': trace_gen,
    'profile': profile,
    'recommend-apl': recommend,
    'recommend-mem': recommend,
    'replay': replay_plan,
    'compare': compare_sets,
    'report': report,
    'study': study,
}


def run(run_config, stdout):
    logger.info(f"Effective configuration: {run_config.describe()}")
    return HANDLERS[run_config.subcommand](run_config, stdout)


def main(argv=None):
    """Run ``memorec <subcommand> ...`` and return the process exit status."""
    from django.core.management import load_command_class

    argv = list(sys.argv[1:] if argv is None else argv)
    command = load_command_class('memorec', 'memorec')
    try:
        command.run_from_argv(['manage.py', 'memorec', *argv])
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0
