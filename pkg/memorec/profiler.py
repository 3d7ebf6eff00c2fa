"""
Per-method profiles and the dynamic call graph.

Both are derived from interval nesting: within a session a record at depth
d + 1 belongs to the closest preceding depth-d record, and its interval must
lie strictly inside that record's interval (both bounds differ).
"""
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import networkx as nx
import numpy as np

from .exceptions import NestingError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Nesting:
    """Direct caller/callee links of a record sequence (indices into it)."""
    parents: tuple
    children: tuple
    self_times: tuple


def analyze_nesting(records):
    records = list(records)
    parents = [None] * len(records)
    children = [[] for _ in records]

    by_session = defaultdict(list)
    for index, record in enumerate(records):
        by_session[record.session].append(index)

    for session in sorted(by_session):
        order = sorted(by_session[session], key=lambda i: (records[i].start, records[i].depth, i))
        stack = []
        for index in order:
            record = records[index]
            while stack and records[stack[-1]].depth >= record.depth:
                stack.pop()
            if record.depth > 0:
                if not stack or records[stack[-1]].depth != record.depth - 1:
                    raise NestingError(record, f"no enclosing depth-{record.depth - 1} call")
                parent = records[stack[-1]]
                if record.start <= parent.start or record.end >= parent.end:
                    raise NestingError(
                        record,
                        f"interval [{record.start}, {record.end}] not strictly inside {parent.method} "
                        f"[{parent.start}, {parent.end}]",
                    )
                parents[index] = stack[-1]
                children[stack[-1]].append(index)
            stack.append(index)

    self_times = []
    for index, record in enumerate(records):
        own = record.duration - sum(records[child].duration for child in children[index])
        if own < 0:
            raise NestingError(record, "direct callees overlap (negative self time)")
        self_times.append(own)
    return Nesting(tuple(parents), tuple(tuple(c) for c in children), tuple(self_times))


@dataclass(frozen=True)
class Observation:
    """One call within an input group."""
    output: object
    start: int
    session: str
    total: int
    self_time: int


@dataclass(frozen=True)
class MethodProfile:
    method: str
    count: int
    total_times: tuple
    self_times: tuple
    groups: dict
    inputs: dict
    sessions: frozenset

    @cached_property
    def mean_total(self):
        return float(np.mean(self.total_times)) if self.total_times else 0.0

    @cached_property
    def std_total(self):
        return float(np.std(self.total_times, ddof=0)) if self.total_times else 0.0

    @cached_property
    def mean_self(self):
        return float(np.mean(self.self_times)) if self.self_times else 0.0

    def mean_time(self, basis='total'):
        return self.mean_self if basis == 'self' else self.mean_total

    def group_mean(self, key, basis='total'):
        values = [obs.self_time if basis == 'self' else obs.total for obs in self.groups[key]]
        return float(np.mean(values))

    def distinct_outputs(self, key):
        return {obs.output.rendering for obs in self.groups[key]}

    @cached_property
    def reuse_gaps(self):
        """Time between consecutive occurrences of the same input with an unchanged output."""
        gaps = []
        for observations in self.groups.values():
            for previous, current in zip(observations, observations[1:]):
                if previous.output == current.output:
                    gaps.append(current.start - previous.start)
        return tuple(sorted(gaps))


def build_profiles(records, nesting=None):
    """Aggregate records into {method: MethodProfile}, sorted by signature."""
    records = list(records)
    nesting = nesting or analyze_nesting(records)

    indices = defaultdict(list)
    for index, record in enumerate(records):
        indices[record.method].append(index)

    profiles = {}
    for method in sorted(indices):
        ordered = sorted(indices[method], key=lambda i: (records[i].start, i))
        groups = defaultdict(list)
        inputs = {}
        for index in ordered:
            record = records[index]
            key = record.key
            inputs.setdefault(key, record.inputs)
            groups[key].append(Observation(
                record.output, record.start, record.session, record.duration, nesting.self_times[index],
            ))
        profiles[method] = MethodProfile(
            method=method,
            count=len(ordered),
            total_times=tuple(records[i].duration for i in ordered),
            self_times=tuple(nesting.self_times[i] for i in ordered),
            groups={key: tuple(observations) for key, observations in groups.items()},
            inputs=inputs,
            sessions=frozenset(records[i].session for i in ordered),
        )
    logger.debug(f"Built {len(profiles)} method profiles from {len(records)} records")
    return profiles


def suggest_ttl(profile, percentile=90) -> Optional[int]:
    """TTL (ns) under which the given percentile of observed reuse gaps would hit; None without reuse."""
    if not profile.reuse_gaps:
        return None
    return int(np.percentile(profile.reuse_gaps, percentile)) + 1


class CallGraph:
    """Methods and (caller, callee, occurrence count) edges observed in a trace."""

    def __init__(self, graph):
        self.graph = graph

    @property
    def nodes(self):
        return sorted(self.graph.nodes)

    def edges(self):
        return sorted((caller, callee, data['count']) for caller, callee, data in self.graph.edges(data=True))

    def count(self, caller, callee):
        if not self.graph.has_edge(caller, callee):
            return 0
        return self.graph[caller][callee]['count']

    def callers(self, method):
        return sorted(self.graph.predecessors(method)) if method in self.graph else []

    def callees(self, method):
        return sorted(self.graph.successors(method)) if method in self.graph else []


def build_callgraph(records, nesting=None):
    records = list(records)
    nesting = nesting or analyze_nesting(records)
    graph = nx.DiGraph()
    graph.add_nodes_from(sorted({record.method for record in records}))
    for index, parent in enumerate(nesting.parents):
        if parent is None:
            continue
        caller, callee = records[parent].method, records[index].method
        if graph.has_edge(caller, callee):
            graph[caller][callee]['count'] += 1
        else:
            graph.add_edge(caller, callee, count=1)
    return CallGraph(graph)


def profile_summary(profile):
    return {
        'method': profile.method,
        'count': profile.count,
        'mean_total_ns': profile.mean_total,
        'std_total_ns': profile.std_total,
        'mean_self_ns': profile.mean_self,
        'input_groups': len(profile.groups),
        'unstable_groups': sum(1 for key in profile.groups if len(profile.distinct_outputs(key)) > 1),
        'sessions': len(profile.sessions),
        'suggested_ttl_ns': suggest_ttl(profile),
    }


def write_profile_dump(profiles, stream):
    for profile in profiles.values():
        stream.write(json.dumps(profile_summary(profile), separators=(',', ':')) + '\n')
