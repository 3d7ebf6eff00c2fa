"""
Application-level cache recommender driven by five cacheability metrics.

A method is selected when its output rarely changes for a given input and it
stands out (mean + k standard deviations across all methods) in call
frequency, mean total time or cross-session reuse. Only the method's
dominant, stable inputs are recommended for caching.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .conf import memorec_settings
from .models import Recommendation, RecommendationSet, Source
from .profiler import build_profiles

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AplConfig:
    k: float = field(default_factory=lambda: memorec_settings.APL['K'])
    changeability_ceiling: float = field(default_factory=lambda: memorec_settings.APL['CHANGEABILITY_CEILING'])
    min_input_occurrences: int = field(default_factory=lambda: memorec_settings.APL['MIN_INPUT_OCCURRENCES'])

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if not 0.0 <= self.changeability_ceiling <= 1.0:
            raise ValueError("changeability_ceiling must lie in [0, 1]")
        if self.min_input_occurrences < 2:
            raise ValueError("min_input_occurrences must be at least 2")


@dataclass(frozen=True)
class AplMetrics:
    method: str
    frequency: int
    expensiveness: float
    shareability: int
    staticity: float
    changeability: float


def _method_metrics(profile):
    shared_sessions = set()
    changed_calls = 0
    stable_groups = 0
    for observations in profile.groups.values():
        seen = set()
        for observation in observations:
            output = observation.output.rendering
            if output in seen:
                shared_sessions.add(observation.session)
            if seen - {output}:
                changed_calls += 1
            seen.add(output)
        if len(seen) == 1:
            stable_groups += 1
    return AplMetrics(
        method=profile.method,
        frequency=profile.count,
        expensiveness=profile.mean_total,
        shareability=len(shared_sessions),
        staticity=stable_groups / len(profile.groups),
        changeability=changed_calls / profile.count,
    )


def compute_metrics(profiles):
    return {method: _method_metrics(profile) for method, profile in profiles.items()}


def cutoff(values, k):
    """Population mean + k * sigma."""
    values = np.asarray(values, dtype=float)
    return float(values.mean() + k * values.std(ddof=0))


def at_or_above(values, threshold):
    values = np.asarray(values, dtype=float)
    # Inclusive, with float noise from the std computation absorbed
    return (values >= threshold) | np.isclose(values, threshold, rtol=1e-9, atol=0.0)


def select_methods(metrics, config=None):
    config = config or AplConfig()
    if not metrics:
        return set()
    names = sorted(metrics)
    passes = np.zeros(len(names), dtype=bool)
    for attribute in ('frequency', 'expensiveness', 'shareability'):
        values = [getattr(metrics[name], attribute) for name in names]
        passes |= at_or_above(values, cutoff(values, config.k))
    return {
        name for name, ok in zip(names, passes)
        if ok and metrics[name].changeability <= config.changeability_ceiling
    }


def select_inputs(method, profile, config=None):
    """Whitelisted input tuples of a selected method, or None when no input deserves caching."""
    config = config or AplConfig()
    keys = sorted(profile.groups)
    counts = [len(profile.groups[key]) for key in keys]
    stable = [len(profile.distinct_outputs(key)) == 1 for key in keys]

    threshold = max(config.min_input_occurrences, cutoff(counts, config.k))
    eligible = at_or_above(counts, threshold) & np.asarray(stable, dtype=bool)
    chosen = [key for key, ok in zip(keys, eligible) if ok]

    if not chosen:
        repeated = [
            (count, key) for key, count, is_stable in zip(keys, counts, stable)
            if is_stable and count >= config.min_input_occurrences
        ]
        if not repeated:
            logger.debug(f"{method}: no stable repeated input, dropped")
            return None
        best = max(count for count, _ in repeated)
        chosen = [min(key for count, key in repeated if count == best)]
    return frozenset(profile.inputs[key] for key in chosen)


def whitelist_score(profile, whitelist):
    """Whitelisted call count times the mean total time of those calls."""
    keys = {tuple(value.rendering for value in inputs) for inputs in whitelist}
    totals = [obs.total for key in keys for obs in profile.groups[key]]
    return len(totals) * float(np.mean(totals))


def recommend_apl(records, config=None, profiles=None):
    config = config or AplConfig()
    if profiles is None:
        profiles = build_profiles(records)
    if not profiles:
        return RecommendationSet(Source.APL, ())

    metrics = compute_metrics(profiles)
    selected = select_methods(metrics, config)
    recommendations = []
    for method in sorted(selected):
        whitelist = select_inputs(method, profiles[method], config)
        if whitelist is None:
            continue
        recommendations.append(Recommendation(
            method=method,
            score=whitelist_score(profiles[method], whitelist),
            source=Source.APL,
            whitelist=whitelist,
        ))
    recommendations.sort(key=lambda rec: (-rec.score, rec.method))
    logger.info(f"APL selected {len(selected)} of {len(profiles)} methods, recommending {len(recommendations)}")
    return RecommendationSet(Source.APL, tuple(recommendations))
