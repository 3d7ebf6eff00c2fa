"""
Shared choices and recommendation types.

Nothing here is stored in a database; the choices classes are used for their
value/label pairs and validation in the serializers.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

from django.db import models


class NodeKind(models.TextChoices):
    SCALAR = 'scalar', 'Scalar'
    COMPOSITE = 'composite', 'Composite'
    CYCLE = 'cycle', 'Cycle marker'
    TRUNCATED = 'truncated', 'Truncated leaf'


class RequestKind(models.TextChoices):
    READ = 'read', 'Read (GET)'
    WRITE = 'write', 'Write (POST/PUT/DELETE)'


class Behavior(models.TextChoices):
    PURE = 'pure', 'Pure'
    TIME_VARYING = 'time-varying', 'Time-varying'
    RANDOM = 'random', 'Random'
    SIDE_EFFECTING = 'side-effecting', 'Side-effecting'
    GETTER = 'getter', 'Getter'


class SideEffect(models.TextChoices):
    DB_WRITE = 'db-write', 'Database write'
    EXTERNAL_CALL = 'external-call', 'External service call'
    FILE_WRITE = 'file-write', 'File write'
    STATIC_MUTATION = 'static-mutation', 'Static field mutation'
    PARAMETER_MUTATION = 'parameter-mutation', 'Parameter mutation'


class Category(models.TextChoices):
    """Purity manifest categories: behavior kinds with side effects spelled out."""
    PURE = 'pure', 'Pure'
    DB_WRITE = 'db-write', 'Database write'
    EXTERNAL_CALL = 'external-call', 'External service call'
    FILE_WRITE = 'file-write', 'File write'
    STATIC_MUTATION = 'static-mutation', 'Static field mutation'
    PARAMETER_MUTATION = 'parameter-mutation', 'Parameter mutation'
    TIME_VARYING = 'time-varying', 'Time-varying'
    RANDOM = 'random', 'Random'
    GETTER = 'getter', 'Getter'


# Plain strings: enum members hash by name, manifest values are raw strings
INVALID_CATEGORIES = frozenset(category.value for category in (
    Category.DB_WRITE,
    Category.EXTERNAL_CALL,
    Category.FILE_WRITE,
    Category.STATIC_MUTATION,
    Category.PARAMETER_MUTATION,
    Category.RANDOM,
))


class Source(models.TextChoices):
    APL = 'APL', 'APLCache-style'
    MEM = 'MEM', 'MemoizeIt-style'
    DEV = 'DEV', 'Developer'


class Admission(models.TextChoices):
    ALL_INPUTS = 'ALL_INPUTS', 'All inputs'
    INPUT_WHITELIST = 'INPUT_WHITELIST', 'Whitelisted inputs'
    SINGLE_INSTANCE = 'SINGLE_INSTANCE', 'Single instance'
    NONE = 'NONE', 'Not cached'


class Scope(models.TextChoices):
    INSTANCE = 'instance', 'Instance map'
    GLOBAL = 'global', 'Global (static) map'


class Size(models.TextChoices):
    SINGLE = 'single', 'Single entry'
    MULTI = 'multi', 'Multiple entries'


class Label(models.TextChoices):
    NOVEL = 'novel', 'Novel'
    EXISTING = 'existing', 'Existing'
    INVALID = 'invalid', 'Invalid'


class Kernel(models.TextChoices):
    EXHAUSTIVE = 'exhaustive', 'Exhaustive'
    ITERATIVE = 'iterative', 'Iterative'


@dataclass(frozen=True)
class CacheImplHint:
    scope: str = Scope.GLOBAL
    size: str = Size.SINGLE
    getter: bool = False

    def __post_init__(self):
        if self.getter and self.size != Size.SINGLE:
            # Getters hold one value by convention
            object.__setattr__(self, 'size', Size.SINGLE)


@dataclass(frozen=True)
class Recommendation:
    """One recommended method.

    whitelist is None when every input may be cached; otherwise it is a
    non-empty frozenset of input tuples (tuples of CanonicalValue).
    """
    method: str
    score: float
    source: str
    whitelist: Optional[frozenset] = None
    hint: Optional[CacheImplHint] = None
    subsumes: tuple = ()

    def __post_init__(self):
        if self.whitelist is not None and not self.whitelist:
            raise ValueError(f"{self.method}: whitelist must be non-empty when present")
        if not math.isfinite(self.score):
            raise ValueError(f"{self.method}: rank score must be finite")


@dataclass(frozen=True)
class RecommendationSet:
    source: str
    recommendations: tuple = field(default_factory=tuple)

    def __iter__(self):
        return iter(self.recommendations)

    def __len__(self):
        return len(self.recommendations)

    def __contains__(self, method):
        return method in self.methods

    @property
    def methods(self):
        return frozenset(rec.method for rec in self.recommendations)

    def get(self, method):
        for rec in self.recommendations:
            if rec.method == method:
                return rec
        return None
