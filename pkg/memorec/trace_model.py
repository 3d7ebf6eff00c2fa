"""
Trace records, canonical value serialization and trace file I/O.

A trace file is UTF-8 JSON lines. The first line is a header
({"format": "memorec-trace", "version": 1, "epoch_ns": ...}); every other line
is one method invocation whose inputs and output are canonical renderings
produced by canonicalize().
"""
import hashlib
import io
import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional

from .conf import memorec_settings
from .exceptions import TraceFormatError
from .models import NodeKind

logger = logging.getLogger(__name__)

TRACE_FORMAT = 'memorec-trace'
TRACE_VERSION = 1

ESCAPED = frozenset('\\{},:@/')
REF_PREFIX = '@ref:'
PRUNED = '@pruned'


def escape(text):
    return ''.join('\\' + char if char in ESCAPED else char for char in text)


def render_scalar(value):
    """Text rendering of a primitive."""
    if value is None:
        return 'null'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(eq=False)
class ObjectNode:
    """A raw object in a value graph: typed, tagged with its package, fields in declaration order.

    text is what the object renders to when it is truncated.
    """
    type_name: str
    package: Optional[str] = None
    fields: dict = field(default_factory=dict)
    text: Optional[str] = None


def _normalize_prefix(prefix):
    return prefix.strip().strip('.')


def _package_matches(package, prefix):
    return package == prefix or package.startswith(prefix + '.')


@dataclass(frozen=True)
class TruncationPolicy:
    """Which packages are explored field by field and which become text leaves."""
    application_packages: tuple = ()
    internal_packages: tuple = ()

    def __post_init__(self):
        app = tuple(p for p in (_normalize_prefix(p) for p in self.application_packages) if p)
        internal = tuple(p for p in (_normalize_prefix(p) for p in self.internal_packages) if p)
        for a in app:
            for i in internal:
                if _package_matches(a, i) or _package_matches(i, a):
                    raise ValueError(f"Package prefixes overlap: application '{a}' and internal '{i}'")
        object.__setattr__(self, 'application_packages', app)
        object.__setattr__(self, 'internal_packages', internal)

    @classmethod
    def from_settings(cls):
        trace = memorec_settings.TRACE
        return cls(tuple(trace['APPLICATION_PACKAGES']), tuple(trace['INTERNAL_PACKAGES']))

    def is_application(self, package):
        if not package:
            return False
        return any(_package_matches(package, prefix) for prefix in self.application_packages)


@dataclass(frozen=True)
class CanonicalNode:
    kind: str
    text: str = ''
    fields: tuple = ()
    ref: tuple = ()

    def render(self):
        if self.kind == NodeKind.COMPOSITE:
            inner = ','.join(f'{escape(name)}:{child.render()}' for name, child in self.fields)
            return '{' + inner + '}'
        if self.kind == NodeKind.CYCLE:
            return REF_PREFIX + '/' + '/'.join(escape(segment) for segment in self.ref)
        return escape(self.text)

    def pruned(self, depth):
        """Rendering with every subtree below depth replaced by a marker."""
        if depth <= 0:
            return PRUNED
        if self.kind == NodeKind.COMPOSITE:
            inner = ','.join(f'{escape(name)}:{child.pruned(depth - 1)}' for name, child in self.fields)
            return '{' + inner + '}'
        return self.render()

    @cached_property
    def height(self):
        if self.kind != NodeKind.COMPOSITE:
            return 1
        return 1 + max((child.height for _, child in self.fields), default=0)

    def to_value_tree(self):
        """A raw value tree that canonicalizes back to this node."""
        return self._to_value(ancestors=[])

    def _to_value(self, ancestors):
        if self.kind == NodeKind.CYCLE:
            return ancestors[len(self.ref)] if len(self.ref) < len(ancestors) else self.render()
        if self.kind != NodeKind.COMPOSITE:
            return self.text
        value = {}
        ancestors.append(value)
        for name, child in self.fields:
            value[name] = child._to_value(ancestors)
        ancestors.pop()
        return value


class _RenderingParser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def parse(self):
        node = self.value()
        if self.pos != len(self.text):
            raise ValueError(f"Unexpected '{self.text[self.pos]}' at offset {self.pos}")
        return node

    def value(self):
        if self.text.startswith('{', self.pos):
            return self.composite()
        if self.text.startswith(REF_PREFIX, self.pos):
            self.pos += len(REF_PREFIX)
            raw = self.read_until(',}', unescape=False)
            return CanonicalNode(NodeKind.CYCLE, ref=_split_ref(raw))
        return CanonicalNode(NodeKind.SCALAR, text=self.read_until(',}'))

    def composite(self):
        self.pos += 1
        fields = []
        if self.text.startswith('}', self.pos):
            self.pos += 1
            return CanonicalNode(NodeKind.COMPOSITE, fields=())
        while True:
            name = self.read_until(':,}')
            if not self.text.startswith(':', self.pos):
                raise ValueError(f"Expected ':' after field '{name}' at offset {self.pos}")
            self.pos += 1
            fields.append((name, self.value()))
            if self.text.startswith(',', self.pos):
                self.pos += 1
            elif self.text.startswith('}', self.pos):
                self.pos += 1
                return CanonicalNode(NodeKind.COMPOSITE, fields=tuple(fields))
            else:
                raise ValueError(f"Unterminated composite at offset {self.pos}")

    def read_until(self, stops, unescape=True):
        out = []
        text = self.text
        while self.pos < len(text) and text[self.pos] not in stops:
            char = text[self.pos]
            if char == '\\' and self.pos + 1 < len(text):
                if not unescape:
                    out.append(char)
                self.pos += 1
                char = text[self.pos]
            out.append(char)
            self.pos += 1
        return ''.join(out)


def _split_ref(raw):
    segments, current, index = [], [], 0
    while index < len(raw):
        char = raw[index]
        if char == '\\' and index + 1 < len(raw):
            current.append(raw[index + 1])
            index += 2
            continue
        if char == '/':
            segments.append(''.join(current))
            current = []
        else:
            current.append(char)
        index += 1
    segments.append(''.join(current))
    # "/" is the root, "/a/b" is root.a.b
    return tuple(segments[1:]) if segments[1:] != [''] else ()


@lru_cache(maxsize=65536)
def parse_rendering(text):
    return _RenderingParser(text).parse()


@dataclass(frozen=True)
class CanonicalValue:
    """A canonical value, identified by its rendering."""
    rendering: str

    @classmethod
    def from_node(cls, node):
        value = cls(node.render())
        value.__dict__['node'] = node
        return value

    @cached_property
    def node(self):
        return parse_rendering(self.rendering)

    @property
    def height(self):
        return self.node.height

    def pruned(self, depth):
        return self.node.pruned(depth)

    def __str__(self):
        return self.rendering


def canonicalize(value, policy):
    """Turn a possibly cyclic raw value graph into a finite canonical value.

    Objects outside the application packages become text leaves; a reference
    back to an object on the current path becomes a cycle marker naming that
    ancestor's path.
    """
    return CanonicalValue.from_node(_canonical_node(value, policy, (), {}))


def _canonical_node(value, policy, path, ancestors):
    if value is None or isinstance(value, (bool, int, float, str)):
        return CanonicalNode(NodeKind.SCALAR, text=render_scalar(value))
    if id(value) in ancestors:
        return CanonicalNode(NodeKind.CYCLE, ref=ancestors[id(value)])

    if isinstance(value, ObjectNode):
        if not policy.is_application(value.package):
            return CanonicalNode(NodeKind.TRUNCATED, text=value.text if value.text is not None else value.type_name)
        items = list(value.fields.items())
    elif isinstance(value, Mapping):
        items = [(str(key), child) for key, child in value.items()]
    elif isinstance(value, (list, tuple)):
        items = [(str(index), child) for index, child in enumerate(value)]
    elif isinstance(value, (set, frozenset)):
        ordered = sorted(value, key=lambda item: _canonical_node(item, policy, path, ancestors).render())
        items = [(str(index), child) for index, child in enumerate(ordered)]
    elif hasattr(value, '__dict__'):
        if not policy.is_application(type(value).__module__):
            return CanonicalNode(NodeKind.TRUNCATED, text=str(value))
        items = list(vars(value).items())
    else:
        return CanonicalNode(NodeKind.TRUNCATED, text=str(value))

    ancestors[id(value)] = path
    try:
        fields = tuple(
            (name, _canonical_node(child, policy, path + (name,), ancestors))
            for name, child in items
        )
    finally:
        del ancestors[id(value)]
    return CanonicalNode(NodeKind.COMPOSITE, fields=fields)


@dataclass(frozen=True)
class CallRecord:
    """One observed method invocation."""
    session: str
    method: str
    inputs: tuple
    output: CanonicalValue
    start: int
    end: int
    depth: int
    line: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"end ({self.end}) precedes start ({self.start})")
        if self.depth < 0:
            raise ValueError(f"depth must be non-negative, got {self.depth}")

    @property
    def duration(self):
        return self.end - self.start

    @property
    def key(self):
        return tuple(value.rendering for value in self.inputs)


@dataclass(frozen=True)
class Trace:
    records: tuple
    epoch_ns: int = 0
    skipped: int = 0

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class TraceDigest:
    records: int
    methods: int
    sessions: int
    span: Optional[tuple]


def _iter_lines(stream):
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    yield from enumerate(stream, start=1)


def _decode(lineno, raw):
    if isinstance(raw, (bytes, bytearray)):
        try:
            raw = raw.decode('utf-8')
        except UnicodeDecodeError as exc:
            raise TraceFormatError(lineno, f"not UTF-8 ({exc.reason})") from exc
    return raw.rstrip('\r\n')


def _load_json(lineno, text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(lineno, f"invalid JSON ({exc.msg})") from exc


def _first_error(errors):
    name, messages = next(iter(errors.items()))
    message = messages[0] if isinstance(messages, list) else messages
    if isinstance(message, dict):
        message = _first_error(message)
    return f"{name}: {message}" if name != 'non_field_errors' else str(message)


def iter_trace(stream, on_error=None):
    """Yield (epoch_ns, CallRecord) pairs in file order.

    Malformed record lines raise TraceFormatError, or are skipped and counted
    (returned through the generator's StopIteration value) when on_error is "skip".
    """
    from .serializers import CallRecordSerializer, TraceHeaderSerializer

    on_error = on_error or memorec_settings.TRACE['ON_ERROR']
    epoch_ns = None
    skipped = 0
    for lineno, raw in _iter_lines(stream):
        if epoch_ns is None:
            text = _decode(lineno, raw)
            if not text.strip():
                continue
            header = TraceHeaderSerializer(data=_load_json(lineno, text))
            if not header.is_valid():
                raise TraceFormatError(lineno, f"bad header ({_first_error(header.errors)})")
            epoch_ns = header.validated_data['epoch_ns']
            continue
        try:
            text = _decode(lineno, raw)
            if not text.strip():
                continue
            obj = _load_json(lineno, text)
            serializer = CallRecordSerializer(data=obj)
            if not serializer.is_valid():
                raise TraceFormatError(lineno, _first_error(serializer.errors))
            yield epoch_ns, serializer.to_record(line=lineno)
        except TraceFormatError as exc:
            if on_error != 'skip':
                raise
            skipped += 1
            logger.warning(f"Skipping malformed trace line: {exc}")
    return skipped


def parse_trace_stream(stream, on_error=None):
    """Parse a whole trace; an empty stream gives an empty trace."""
    records = []
    epoch_ns = 0
    reader = iter_trace(stream, on_error=on_error)
    skipped = 0
    while True:
        try:
            epoch_ns, record = next(reader)
        except StopIteration as stop:
            skipped = stop.value or 0
            break
        records.append(record)
    logger.debug(f"Parsed {len(records)} trace records ({skipped} skipped)")
    return Trace(records=tuple(records), epoch_ns=epoch_ns, skipped=skipped)


def read_trace(path, on_error=None):
    with open(path, 'rb') as handle:
        return parse_trace_stream(handle, on_error=on_error)


def header_line(epoch_ns=0):
    return json.dumps(
        {'format': TRACE_FORMAT, 'version': TRACE_VERSION, 'epoch_ns': epoch_ns},
        separators=(',', ':'),
    )


def record_line(record):
    return json.dumps(
        {
            'session': record.session,
            'method': record.method,
            'inputs': [value.rendering for value in record.inputs],
            'output': record.output.rendering,
            'start_ns': record.start,
            'end_ns': record.end,
            'depth': record.depth,
        },
        separators=(',', ':'),
        ensure_ascii=False,
    )


def write_trace(records, stream, epoch_ns=0):
    stream.write(header_line(epoch_ns) + '\n')
    for record in records:
        stream.write(record_line(record) + '\n')


def trace_fingerprint(records):
    """Identity of a trace: sha256 of its normalized rendering."""
    digest = hashlib.sha256()
    for record in records:
        digest.update(record_line(record).encode('utf-8'))
        digest.update(b'\n')
    return digest.hexdigest()


def trace_digest(records):
    records = list(records)
    if not records:
        return TraceDigest(0, 0, 0, None)
    return TraceDigest(
        records=len(records),
        methods=len({record.method for record in records}),
        sessions=len({record.session for record in records}),
        span=(min(record.start for record in records), max(record.end for record in records)),
    )
