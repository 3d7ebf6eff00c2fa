"""
Deterministic cache replay.

A trace is walked in start order against an unbounded cache. Each planned
method is looked up by (method, inputs), or by method alone for
single-instance caches; entries expire once they are ttl old. A hit skips
the call's whole subtree, so nested records of the same session are not
replayed. Time is modelled: the baseline is the sum of top-level durations
and the cached run subtracts hit subtrees and adds per-operation costs.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import pandas as pd

from .conf import memorec_settings
from .exceptions import DocumentError, TraceMismatchError, UnorderedTraceError
from .models import Admission, Size, Source
from .serializers import DevPlanSerializer
from .signals import plan_replayed
from .trace_model import trace_fingerprint
from .utils import CSVExporter, load_json_document

logger = logging.getLogger(__name__)

METRICS_COLUMNS = [
    'plan', 'method', 'hits', 'misses', 'additions', 'discards', 'saved_ns', 'relative_throughput',
    'stale_hits', 'hit_ratio',
]
TOTAL = 'TOTAL'


@dataclass(frozen=True)
class AdmissionRule:
    admission: str
    whitelist: Optional[frozenset] = None
    ttl_ns: Optional[int] = None

    def __post_init__(self):
        if self.admission not in Admission.values:
            raise ValueError(f"Unknown admission '{self.admission}'")
        if self.admission == Admission.INPUT_WHITELIST and not self.whitelist:
            raise ValueError("INPUT_WHITELIST needs a non-empty whitelist")
        if self.ttl_ns is not None and self.ttl_ns <= 0:
            raise ValueError("ttl_ns must be positive")


@dataclass(frozen=True)
class CachingPlan:
    """What to cache. Methods without a rule are not cached and not reported."""
    name: str
    rules: dict = field(default_factory=dict)
    source: Optional[str] = None

    @classmethod
    def nocache(cls):
        return cls('NOCACHE')

    def rule(self, method):
        return self.rules.get(method)

    @property
    def methods(self):
        return sorted(self.rules)


@dataclass(frozen=True)
class CacheConfig:
    default_ttl_ns: Optional[int] = field(default_factory=lambda: memorec_settings.CACHE['DEFAULT_TTL_NS'])
    ttl_ns: dict = field(default_factory=dict)
    hit_lookup_ns: int = field(default_factory=lambda: memorec_settings.CACHE['HIT_LOOKUP_NS'])
    miss_overhead_ns: int = field(default_factory=lambda: memorec_settings.CACHE['MISS_OVERHEAD_NS'])
    whitelist_check_ns: int = field(default_factory=lambda: memorec_settings.CACHE['WHITELIST_CHECK_NS'])

    def __post_init__(self):
        if min(self.hit_lookup_ns, self.miss_overhead_ns, self.whitelist_check_ns) < 0:
            raise ValueError("Operation costs must be non-negative")

    def ttl_for(self, method, rule):
        """Plan TTL, then the per-method map, then the default (None: never expires)."""
        if rule.ttl_ns is not None:
            return rule.ttl_ns
        return self.ttl_ns.get(method, self.default_ttl_ns)

    @property
    def cost_model(self):
        return (self.hit_lookup_ns, self.miss_overhead_ns, self.whitelist_check_ns)


@dataclass
class MethodMetrics:
    hits: int = 0
    misses: int = 0
    additions: int = 0
    discards: int = 0
    stale_hits: int = 0
    saved_ns: int = 0
    overhead_ns: int = 0

    @property
    def net_saved_ns(self):
        return self.saved_ns - self.overhead_ns

    @property
    def hit_ratio(self):
        calls = self.hits + self.misses
        return self.hits / calls if calls else None

    def absorb(self, other):
        for name in ('hits', 'misses', 'additions', 'discards', 'stale_hits', 'saved_ns', 'overhead_ns'):
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass(frozen=True)
class DiscardStats:
    """Whitelisted-method input accounting."""
    cached_inputs: int
    uncached_inputs: int
    uncached_occurrences: int


def relative_throughput(baseline_ns, cached_ns):
    if baseline_ns == 0:
        return 0.0
    if cached_ns <= 0:
        return math.inf
    return baseline_ns / cached_ns - 1


@dataclass(frozen=True)
class ReplayMetrics:
    plan: str
    per_method: dict
    baseline_ns: int
    cached_ns: int
    fingerprint: str = ''
    cost_model: tuple = ()
    discarded_inputs: dict = field(default_factory=dict)

    @property
    def total(self):
        total = MethodMetrics()
        for metrics in self.per_method.values():
            total.absorb(metrics)
        return total

    @property
    def relative_throughput(self):
        return relative_throughput(self.baseline_ns, self.cached_ns)

    def method_throughput(self, method):
        """Throughput change if only this method's net saving applied."""
        return relative_throughput(self.baseline_ns, self.baseline_ns - self.per_method[method].net_saved_ns)

    def counts(self):
        """{method: (hits, misses, additions, discards)}, for comparisons."""
        return {
            method: (m.hits, m.misses, m.additions, m.discards) for method, m in self.per_method.items()
        }


def check_order(records):
    previous = None
    for index, record in enumerate(records):
        if previous is not None and record.start < previous:
            raise UnorderedTraceError(index, previous, record.start)
        previous = record.start


def _cache_key(method, rule, record):
    if rule.admission == Admission.SINGLE_INSTANCE:
        return (method,)
    return (method, record.key)


def replay(records, plan, config=None, announce=True):
    config = config or CacheConfig()
    records = list(records)
    check_order(records)

    per_method = {method: MethodMetrics() for method in plan.methods}
    seen = set()
    discarded_keys = {}
    cache = {}
    active_hits = {}
    baseline = 0

    for record in records:
        if record.depth == 0:
            baseline += record.duration
        hits_here = [
            hit for hit in active_hits.get(record.session, ()) if hit[2] >= record.start
        ]
        active_hits[record.session] = hits_here
        if any(depth < record.depth and start <= record.start and record.end <= end for depth, start, end in hits_here):
            continue

        rule = plan.rule(record.method)
        if rule is None:
            continue
        seen.add(record.method)
        metrics = per_method[record.method]
        if rule.admission == Admission.NONE:
            metrics.misses += 1
            continue

        ttl = config.ttl_for(record.method, rule)
        whitelisted = rule.admission == Admission.INPUT_WHITELIST
        key = _cache_key(record.method, rule, record)
        entry = cache.get(key)
        fresh = entry is not None and (ttl is None or record.start - entry[0] < ttl)
        if fresh and rule.admission == Admission.SINGLE_INSTANCE:
            fresh = entry[2] == record.key

        if fresh:
            metrics.hits += 1
            metrics.saved_ns += record.duration
            metrics.overhead_ns += config.hit_lookup_ns
            if entry[1] != record.output.rendering:
                metrics.stale_hits += 1
            hits_here.append((record.depth, record.start, record.end))
            continue

        metrics.misses += 1
        if whitelisted and record.key not in rule.whitelist:
            metrics.discards += 1
            metrics.overhead_ns += config.hit_lookup_ns + config.whitelist_check_ns
            discarded_keys.setdefault(record.method, set()).add(record.key)
            continue
        metrics.additions += 1
        metrics.overhead_ns += config.miss_overhead_ns + (config.whitelist_check_ns if whitelisted else 0)
        cache[key] = (record.start, record.output.rendering, record.key)

    for method in sorted(set(plan.methods) - seen):
        logger.warning(f"Plan {plan.name}: method {method} does not occur in the trace")

    net_saved = sum(metrics.net_saved_ns for metrics in per_method.values())
    metrics = ReplayMetrics(
        plan=plan.name,
        per_method=per_method,
        baseline_ns=baseline,
        cached_ns=baseline - net_saved,
        fingerprint=trace_fingerprint(records),
        cost_model=config.cost_model,
        discarded_inputs={
            method: DiscardStats(
                cached_inputs=len(rule.whitelist),
                uncached_inputs=len(discarded_keys.get(method, ())),
                uncached_occurrences=per_method[method].discards,
            )
            for method, rule in sorted(plan.rules.items())
            if rule.admission == Admission.INPUT_WHITELIST
        },
    )
    if announce:
        plan_replayed.send(sender=replay, plan=plan, metrics=metrics)
    return metrics


def brute_force_oracle(records, plan, config=None):
    """Reference replay: a flat list of cache entries and a full scan of earlier hits per call."""
    config = config or CacheConfig()
    records = list(records)
    for i in range(1, len(records)):
        if records[i].start < records[i - 1].start:
            raise UnorderedTraceError(i, records[i - 1].start, records[i].start)

    rows = {}
    for method in plan.rules:
        rows[method] = MethodMetrics()
    entries = []
    hit_records = []

    for record in records:
        skipped = False
        for hit in hit_records:
            if (hit.session == record.session and hit.depth < record.depth
                    and hit.start <= record.start and record.end <= hit.end):
                skipped = True
        if skipped:
            continue
        if record.method not in plan.rules:
            continue
        rule = plan.rules[record.method]
        row = rows[record.method]
        if rule.admission == Admission.NONE:
            row.misses = row.misses + 1
            continue

        inputs = [value.rendering for value in record.inputs]
        ttl = config.ttl_for(record.method, rule)
        found = None
        for entry in entries:
            if entry['method'] != record.method:
                continue
            if rule.admission != Admission.SINGLE_INSTANCE and entry['inputs'] != inputs:
                continue
            found = entry
        hit = False
        if found is not None and found['inputs'] == inputs:
            age = record.start - found['stored']
            if ttl is None or age < ttl:
                hit = True

        if hit:
            row.hits = row.hits + 1
            row.saved_ns = row.saved_ns + (record.end - record.start)
            row.overhead_ns = row.overhead_ns + config.hit_lookup_ns
            if found['output'] != record.output.rendering:
                row.stale_hits = row.stale_hits + 1
            hit_records.append(record)
        elif rule.admission == Admission.INPUT_WHITELIST and tuple(inputs) not in rule.whitelist:
            row.misses = row.misses + 1
            row.discards = row.discards + 1
            row.overhead_ns = row.overhead_ns + config.hit_lookup_ns + config.whitelist_check_ns
        else:
            row.misses = row.misses + 1
            row.additions = row.additions + 1
            row.overhead_ns = row.overhead_ns + config.miss_overhead_ns
            if rule.admission == Admission.INPUT_WHITELIST:
                row.overhead_ns = row.overhead_ns + config.whitelist_check_ns
            if found is not None:
                entries.remove(found)
            entries.append({
                'method': record.method, 'inputs': inputs, 'stored': record.start,
                'output': record.output.rendering,
            })

    baseline = 0
    for record in records:
        if record.depth == 0:
            baseline = baseline + (record.end - record.start)
    net = 0
    for row in rows.values():
        net = net + row.saved_ns - row.overhead_ns
    return ReplayMetrics(
        plan=plan.name,
        per_method=dict(sorted(rows.items())),
        baseline_ns=baseline,
        cached_ns=baseline - net,
        fingerprint=trace_fingerprint(records),
        cost_model=config.cost_model,
    )


def simulate_throughput(metrics_set):
    """Relative throughput of every replayed plan against the uncached baseline."""
    metrics_set = list(metrics_set)
    columns = ['plan', 'baseline_ns', 'cached_ns', 'hits', 'misses', 'additions', 'discards', 'relative_throughput']
    if not metrics_set:
        return pd.DataFrame(columns=columns)
    reference = metrics_set[0]
    for metrics in metrics_set[1:]:
        if metrics.fingerprint != reference.fingerprint:
            raise TraceMismatchError(f"Plan {metrics.plan} was replayed on a different trace than {reference.plan}")
        if metrics.cost_model != reference.cost_model:
            raise TraceMismatchError(f"Plan {metrics.plan} used a different cost model than {reference.plan}")
    rows = []
    for metrics in metrics_set:
        total = metrics.total
        rows.append({
            'plan': metrics.plan,
            'baseline_ns': metrics.baseline_ns,
            'cached_ns': metrics.cached_ns,
            'hits': total.hits,
            'misses': total.misses,
            'additions': total.additions,
            'discards': total.discards,
            'relative_throughput': metrics.relative_throughput,
        })
    return pd.DataFrame(rows, columns=columns)


def plan_from_recommendations(recommendations, name=None, ttl_ns=None):
    rules = {}
    for rec in recommendations:
        if rec.whitelist is not None:
            whitelist = frozenset(tuple(value.rendering for value in inputs) for inputs in rec.whitelist)
            rules[rec.method] = AdmissionRule(Admission.INPUT_WHITELIST, whitelist=whitelist, ttl_ns=ttl_ns)
        elif rec.hint is not None and rec.hint.size == Size.SINGLE:
            rules[rec.method] = AdmissionRule(Admission.SINGLE_INSTANCE, ttl_ns=ttl_ns)
        else:
            rules[rec.method] = AdmissionRule(Admission.ALL_INPUTS, ttl_ns=ttl_ns)
    source = str(recommendations.source)
    return CachingPlan(name=name or source, rules=rules, source=source)


def _dev_rules(entries, default_ttl_ns=None):
    return {
        method: AdmissionRule(str(admission), ttl_ns=ttl if ttl is not None else default_ttl_ns)
        for method, ttl, admission in entries
    }


def load_dev_plan(document):
    serializer = DevPlanSerializer(data=load_json_document(document, 'developer plan'))
    if not serializer.is_valid():
        raise DocumentError('developer plan', serializer.errors)
    data = serializer.validated_data
    entries = [(entry['method'], entry['ttl_ns'], entry['admission']) for entry in data['methods']]
    return CachingPlan('DEV', _dev_rules(entries, data['default_ttl_ns']), source=Source.DEV.value)


def plan_from_app(app):
    """DEV plan from the developer_cache section of a synthetic application."""
    return CachingPlan('DEV', _dev_rules(app.developer_cache), source=Source.DEV.value)


def dev_plan_document(plan):
    return {
        'format': 'memorec-dev-plan',
        'default_ttl_ns': None,
        'methods': [
            {'method': method, 'ttl_ns': rule.ttl_ns, 'admission': str(rule.admission)}
            for method, rule in sorted(plan.rules.items())
        ],
    }


def metrics_rows(metrics):
    rows = []
    for method, row in sorted(metrics.per_method.items()):
        rows.append([
            metrics.plan, method, row.hits, row.misses, row.additions, row.discards,
            row.net_saved_ns, metrics.method_throughput(method), row.stale_hits, row.hit_ratio,
        ])
    total = metrics.total
    rows.append([
        metrics.plan, TOTAL, total.hits, total.misses, total.additions, total.discards,
        metrics.baseline_ns - metrics.cached_ns, metrics.relative_throughput, total.stale_hits, total.hit_ratio,
    ])
    return rows


def write_metrics_csv(metrics_set, path):
    exporter = CSVExporter(path, METRICS_COLUMNS)
    for metrics in metrics_set:
        for row in metrics_rows(metrics):
            exporter.add_row(row)
    return exporter.save()
