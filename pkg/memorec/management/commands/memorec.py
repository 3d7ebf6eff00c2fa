import logging

from django.core.management.base import BaseCommand, CommandError

from memorec import cli
from memorec.conf import memorec_settings
from memorec.evaluate import REPORT_FORMATS
from memorec.exceptions import MemorecError
from memorec.models import Kernel

VERBOSITY_LEVELS = {0: logging.ERROR, 2: logging.INFO, 3: logging.DEBUG}


class Command(BaseCommand):
    help = "Recommend cacheable methods from execution traces and evaluate them by cache replay."

    # No database
    requires_system_checks = []
    requires_migrations_checks = False

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='subcommand', required=True, metavar='subcommand')

        trace_gen = subparsers.add_parser('trace-gen', help="Generate a workload and a synthetic trace")
        self._workload_arguments(trace_gen)
        trace_gen.add_argument('--log', help="Replay this request log instead of generating one")
        trace_gen.add_argument('--out', required=True, help="Output directory")

        profile = subparsers.add_parser('profile', help="Digest a trace and optionally dump method profiles")
        self._trace_arguments(profile)
        profile.add_argument('--out', help="Profile dump (JSON lines)")

        apl = subparsers.add_parser('recommend-apl', help="Run the metric-threshold recommender")
        self._trace_arguments(apl)
        self._apl_arguments(apl)
        apl.add_argument('--out', required=True, help="Recommendation file")

        mem = subparsers.add_parser('recommend-mem', help="Run the input-output invariance recommender")
        self._trace_arguments(mem)
        self._mem_arguments(mem)
        mem.add_argument('--out', required=True, help="Recommendation file")

        replay = subparsers.add_parser('replay', help="Replay a trace under a caching plan")
        self._trace_arguments(replay)
        replay.add_argument('--plan', required=True, help="Recommendation file or developer plan")
        replay.add_argument('--name', help="Plan name in the metrics table")
        self._cache_arguments(replay)
        replay.add_argument('--out', required=True, help="Metrics CSV")

        compare = subparsers.add_parser('compare', help="Overlap of two recommendation files")
        compare.add_argument('--a', required=True)
        compare.add_argument('--b', required=True)
        compare.add_argument('--out', help="Overlap CSV")

        report = subparsers.add_parser('report', help="Replay NOCACHE/DEV/APL/MEM and write report tables")
        self._trace_arguments(report)
        report.add_argument('--apl', required=True, help="APL recommendation file")
        report.add_argument('--mem', required=True, help="MEM recommendation file")
        report.add_argument('--dev', help="Developer plan")
        report.add_argument('--manifest', required=True, help="Purity manifest")
        report.add_argument('--users', type=int, nargs=1, help="User count label for the tables")
        self._cache_arguments(report)
        report.add_argument('--format', choices=REPORT_FORMATS, default=memorec_settings.REPORT['FORMAT'])
        report.add_argument('--out', required=True, help="Report directory")

        study = subparsers.add_parser('study', help="Run the learning and testing phases end to end")
        self._workload_arguments(study, many_users=True)
        study.add_argument('--learning-users', type=int, help="Users in the learning phase (default: first --users)")
        study.add_argument('--dev', help="Developer plan (default: the app's developer_cache)")
        self._apl_arguments(study)
        self._mem_arguments(study)
        self._cache_arguments(study)
        study.add_argument('--format', choices=REPORT_FORMATS, default=memorec_settings.REPORT['FORMAT'])
        study.add_argument('--out', required=True, help="Output directory")

    @staticmethod
    def _trace_arguments(parser):
        parser.add_argument('--trace', required=True, help="Trace file (JSON lines)")
        parser.add_argument('--on-error', choices=['abort', 'skip'], help="Malformed trace lines")

    @staticmethod
    def _workload_arguments(parser, many_users=False):
        parser.add_argument('--nav', required=True, help="Navigation spec (JSON)")
        parser.add_argument('--app', required=True, help="Synthetic application spec (JSON)")
        parser.add_argument('--seed', type=int, required=True)
        if many_users:
            parser.add_argument('--users', type=int, nargs='+', default=[1], help="Simulated user counts")
        else:
            parser.add_argument('--users', type=int, nargs=1, default=[1], help="Simulated users")
        group = parser.add_mutually_exclusive_group()
        group.add_argument('--requests', type=int, help="Requests per workload (default 500)")
        if not many_users:
            group.add_argument('--duration-ns', type=int, help="Simulated duration instead of a request count")

    @staticmethod
    def _apl_arguments(parser):
        parser.add_argument('--k', type=float, help="Standard deviations above the mean")
        parser.add_argument('--changeability-ceiling', type=float)
        parser.add_argument('--min-input-occurrences', type=int)

    @staticmethod
    def _mem_arguments(parser):
        parser.add_argument('--kernel', choices=Kernel.values)
        parser.add_argument('--min-mean-time-ns', type=float)
        parser.add_argument('--initial-depth', type=int)
        parser.add_argument('--max-depth', type=int, help="0 for unbounded")
        parser.add_argument('--cost-basis', choices=['total', 'self'])

    @staticmethod
    def _cache_arguments(parser):
        parser.add_argument('--ttl-ns', type=int, help="Default TTL (default: never expires)")
        parser.add_argument('--hit-lookup-ns', type=int)
        parser.add_argument('--miss-overhead-ns', type=int)
        parser.add_argument('--whitelist-check-ns', type=int)

    def handle(self, *args, **options):
        level = VERBOSITY_LEVELS.get(options['verbosity'])
        if level is not None:
            logging.getLogger('memorec').setLevel(level)

        subcommand = options.pop('subcommand')
        try:
            run_config = cli.RunConfig.from_options(subcommand, options)
            written = cli.run(run_config, self.stdout)
        except MemorecError as exc:
            raise CommandError(str(exc), returncode=1) from exc
        except OSError as exc:
            raise CommandError(f"{exc.filename or ''}: {exc.strerror or exc}", returncode=1) from exc

        if options['verbosity'] >= 2:
            for path in written:
                self.stdout.write(f"wrote {path}")
