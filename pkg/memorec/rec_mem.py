"""
Memoization recommender based on input-output invariance.

Pipeline: keep frequent and expensive methods, drop every method that ever
produced two different outputs for the same input, merge callers with the
memoizable callees they always wrap, rank by potential saved time and
suggest a cache shape.

Two comparison kernels exist. The exhaustive kernel compares full canonical
trees. The iterative kernel compares trees pruned at a depth that doubles
from initial_depth up to max_depth; every candidate is judged afresh at each
depth and the verdict of the deepest evaluated depth is returned, so a deep
enough schedule agrees with the exhaustive kernel while a shallow one shows
its false discards and false accepts.

A discard is therefore not final: a method dropped at depth 1 comes back if
its input classes split at depth 2. Stopping as soon as one round changes
nothing, which can leave such an early false discard in place, is available
through stop_when_stable (MEM.STOP_WHEN_STABLE); it is off by default.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

from .conf import memorec_settings
from .models import CacheImplHint, Kernel, Recommendation, RecommendationSet, Scope, Size, Source
from .profiler import analyze_nesting, build_callgraph, build_profiles

logger = logging.getLogger(__name__)


def _mem_setting(name):
    return field(default_factory=lambda: memorec_settings.MEM[name])


@dataclass(frozen=True)
class MemConfig:
    min_mean_time_ns: float = _mem_setting('MIN_MEAN_TIME_NS')
    kernel: str = _mem_setting('KERNEL')
    initial_depth: int = _mem_setting('INITIAL_DEPTH')
    max_depth: Optional[int] = _mem_setting('MAX_DEPTH')
    cost_basis: str = _mem_setting('COST_BASIS')
    stop_when_stable: bool = _mem_setting('STOP_WHEN_STABLE')
    size_penalty_ns: float = _mem_setting('SIZE_PENALTY_NS')

    def __post_init__(self):
        if self.kernel not in Kernel.values:
            raise ValueError(f"Unknown kernel '{self.kernel}'")
        if self.cost_basis not in ('total', 'self'):
            raise ValueError(f"Unknown cost basis '{self.cost_basis}'")
        if self.initial_depth < 1:
            raise ValueError("initial_depth must be at least 1")
        if self.max_depth is not None and self.max_depth < self.initial_depth:
            raise ValueError("initial_depth must not exceed max_depth")
        if self.min_mean_time_ns < 0 or self.size_penalty_ns < 0:
            raise ValueError("time thresholds must be non-negative")


@dataclass(frozen=True)
class RankedMethod:
    method: str
    saved_ns: float
    subsumes: tuple = ()


def profile_filter(profiles, config=None):
    config = config or MemConfig()
    return [
        method for method, profile in sorted(profiles.items())
        if profile.count >= 2 and profile.mean_time(config.cost_basis) >= config.min_mean_time_ns
    ]


def _invariant_exhaustive(profile):
    return all(len(profile.distinct_outputs(key)) == 1 for key in profile.groups)


def _classes_at(profile, depth, memo):
    """Depth-pruned input class -> set of depth-pruned outputs."""
    def pruned(value):
        rendering = value.rendering
        if rendering not in memo:
            memo[rendering] = value.pruned(depth)
        return memo[rendering]

    classes = {}
    for key, observations in profile.groups.items():
        pruned_key = tuple(pruned(value) for value in profile.inputs[key])
        outputs = classes.setdefault(pruned_key, set())
        outputs.update(pruned(obs.output) for obs in observations)
    return classes


def _max_height(profiles, methods):
    height = 1
    for method in methods:
        profile = profiles[method]
        for key, observations in profile.groups.items():
            for value in profile.inputs[key]:
                height = max(height, value.height)
            for obs in observations:
                height = max(height, obs.output.height)
    return height


def _iterative(candidates, profiles, config):
    deepest = _max_height(profiles, candidates)
    depth = config.initial_depth
    previous = None
    while True:
        memo = {}
        partitions = {method: _classes_at(profiles[method], depth, memo) for method in candidates}
        survivors = {
            method for method, classes in partitions.items()
            if all(len(outputs) == 1 for outputs in classes.values())
        }
        logger.debug(f"Iterative kernel depth {depth}: {len(survivors)} of {len(candidates)} invariant")

        if config.max_depth is not None and depth >= config.max_depth:
            return survivors
        if depth >= deepest:
            # Nothing is pruned any more
            return survivors
        if config.stop_when_stable:
            state = (frozenset(survivors), tuple(sorted((m, len(c)) for m, c in partitions.items())))
            if state == previous:
                return survivors
            previous = state
        depth = depth * 2 if config.max_depth is None else min(depth * 2, config.max_depth)


def io_profile(candidates, profiles, config=None):
    config = config or MemConfig()
    candidates = sorted(candidates)
    if config.kernel == Kernel.ITERATIVE:
        return _iterative(candidates, profiles, config)
    return {method for method in candidates if _invariant_exhaustive(profiles[method])}


def saved_time(profile, basis='total'):
    return sum((len(observations) - 1) * profile.group_mean(key, basis) for key, observations in profile.groups.items())


def cluster_and_rank(memoizable, callgraph, profiles, config=None):
    """Ranked cluster heads; a memoizable callee always nested in one memoizable caller joins its cluster."""
    config = config or MemConfig()
    memoizable = set(memoizable)
    absorbed_by = {}
    for callee in sorted(memoizable):
        for caller in callgraph.callers(callee):
            if caller != callee and caller in memoizable and callgraph.count(caller, callee) == profiles[callee].count:
                absorbed_by[callee] = caller
                break

    def head(method):
        seen = {method}
        while method in absorbed_by and absorbed_by[method] not in seen:
            method = absorbed_by[method]
            seen.add(method)
        return method

    members = {}
    for method in sorted(memoizable):
        members.setdefault(head(method), []).append(method)

    ranked = [
        RankedMethod(
            method=root,
            saved_ns=saved_time(profiles[root], config.cost_basis),
            subsumes=tuple(m for m in group if m != root),
        )
        for root, group in members.items()
    ]
    ranked.sort(key=lambda item: (-item.saved_ns, item.method))
    return ranked


def _sequence_hits_saved(calls, capacity_one):
    saved = 0
    held = None
    entries = set()
    for key, cost in calls:
        if capacity_one:
            if key == held:
                saved += cost
            held = key
        else:
            if key in entries:
                saved += cost
            entries.add(key)
    return saved


def suggest_implementation(method, profile, config=None):
    config = config or MemConfig()
    if set(profile.groups) == {()}:
        return CacheImplHint(scope=Scope.GLOBAL, size=Size.SINGLE, getter=True)
    calls = sorted(
        ((obs.start, key, obs.total if config.cost_basis == 'total' else obs.self_time)
         for key, observations in profile.groups.items() for obs in observations),
        key=lambda item: item[0],
    )
    sequence = [(key, cost) for _, key, cost in calls]
    single = _sequence_hits_saved(sequence, capacity_one=True)
    multi = _sequence_hits_saved(sequence, capacity_one=False)
    holding = config.size_penalty_ns * len(profile.groups)
    size = Size.SINGLE if single >= multi - holding else Size.MULTI
    return CacheImplHint(scope=Scope.GLOBAL, size=size, getter=False)


def recommend_mem(records, config=None, profiles=None, callgraph=None):
    config = config or MemConfig()
    if profiles is None or callgraph is None:
        records = list(records)
        nesting = analyze_nesting(records)
        profiles = profiles if profiles is not None else build_profiles(records, nesting)
        callgraph = callgraph if callgraph is not None else build_callgraph(records, nesting)

    candidates = profile_filter(profiles, config)
    memoizable = io_profile(candidates, profiles, config)
    ranked = cluster_and_rank(memoizable, callgraph, profiles, config)
    recommendations = tuple(
        Recommendation(
            method=item.method,
            score=item.saved_ns,
            source=Source.MEM,
            hint=suggest_implementation(item.method, profiles[item.method], config),
            subsumes=item.subsumes,
        )
        for item in ranked
    )
    logger.info(
        f"MEM ({config.kernel}): {len(candidates)} candidates, {len(memoizable)} memoizable, "
        f"{len(recommendations)} recommended"
    )
    return RecommendationSet(Source.MEM, recommendations)
