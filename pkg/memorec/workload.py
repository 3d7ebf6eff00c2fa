"""
Navigation graphs, workload generation and the synthetic application model.

generate_workload() walks the navigation graph once per simulated user and
merges the users' requests by issue time; execute_synthetic() turns such a
request log into a labelled execution trace.
"""
import hashlib
import heapq
import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx

from .conf import memorec_settings
from .exceptions import (
    AppModelError, CyclicPrerequisiteError, DanglingReferenceError, DocumentError,
    EmptyEntryError, NavigationError, UnknownRequestError, WorkloadGenerationError,
)
from .models import Behavior, RequestKind
from .serializers import (
    AppSpecSerializer, NavigationSerializer, RequestEntrySerializer, RequestLogHeaderSerializer,
)
from .trace_model import CallRecord, canonicalize
from .utils import load_json_document

logger = logging.getLogger(__name__)

REQUEST_LOG_FORMAT = 'memorec-requests'


@dataclass(frozen=True)
class NavigationSpec:
    """Requests (vertices), allowed successors (next) and required predecessors (requires)."""
    vertices: dict
    next_graph: nx.DiGraph = field(compare=False, repr=False)
    requires_graph: nx.DiGraph = field(compare=False, repr=False)
    entries: tuple = ()

    def kind(self, request):
        return self.vertices[request]

    def successors(self, request):
        return sorted(self.next_graph.successors(request))

    def prerequisites(self, request):
        return set(self.requires_graph.predecessors(request))


def load_navigation(document):
    """Validate a navigation document (path, JSON text or dict) into a NavigationSpec."""
    serializer = NavigationSerializer(data=load_json_document(document, 'navigation spec'))
    if not serializer.is_valid():
        raise DocumentError('navigation spec', serializer.errors)
    data = serializer.validated_data

    vertices = {vertex['id']: str(vertex['kind']) for vertex in data['vertices']}
    for relation in ('next', 'requires'):
        for pair in data[relation]:
            for vertex in pair:
                if vertex not in vertices:
                    raise DanglingReferenceError(relation, vertex)
    for vertex in data['entries'] or ():
        if vertex not in vertices:
            raise DanglingReferenceError('entries', vertex)

    next_graph = nx.DiGraph()
    next_graph.add_nodes_from(vertices)
    next_graph.add_edges_from(tuple(pair) for pair in data['next'])
    requires_graph = nx.DiGraph()
    requires_graph.add_nodes_from(vertices)
    requires_graph.add_edges_from(tuple(pair) for pair in data['requires'])

    try:
        cycle = nx.find_cycle(requires_graph)
    except nx.NetworkXNoCycle:
        cycle = None
    if cycle:
        raise CyclicPrerequisiteError(cycle)

    if data['entries'] is None:
        entries = tuple(v for v in vertices if requires_graph.in_degree(v) == 0)
    else:
        entries = tuple(dict.fromkeys(data['entries']))
    if not entries:
        raise EmptyEntryError()
    for vertex in entries:
        if requires_graph.in_degree(vertex):
            raise NavigationError(f"Entry request '{vertex}' has prerequisites")

    return NavigationSpec(vertices=vertices, next_graph=next_graph, requires_graph=requires_graph, entries=entries)


@dataclass(frozen=True)
class WorkloadConfig:
    seed: int
    users: int = 1
    request_count: Optional[int] = None
    duration_ns: Optional[int] = None
    read_fraction: float = field(default_factory=lambda: memorec_settings.WORKLOAD['READ_FRACTION'])
    close_probability: float = field(default_factory=lambda: memorec_settings.WORKLOAD['CLOSE_PROBABILITY'])
    think_time_ns: int = field(default_factory=lambda: memorec_settings.WORKLOAD['THINK_TIME_NS'])

    def __post_init__(self):
        if (self.request_count is None) == (self.duration_ns is None):
            raise ValueError("Exactly one of request_count and duration_ns must be set")
        if self.users < 1:
            raise ValueError("users must be positive")
        if (self.request_count or self.duration_ns or 0) < 1:
            raise ValueError("request_count/duration_ns must be positive")
        if not 0.0 <= self.read_fraction <= 1.0:
            raise ValueError("read_fraction must lie in [0, 1]")
        if not 0.0 <= self.close_probability < 1.0:
            raise ValueError("close_probability must lie in [0, 1)")


@dataclass(frozen=True)
class RequestEntry:
    user: int
    session: str
    request: str
    params: tuple
    issued_ns: int


@dataclass(frozen=True)
class RequestLog:
    entries: tuple
    seed: int = 0

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


class _UserStream:
    """One simulated user clicking through the navigation graph."""

    def __init__(self, spec, config, user, domains):
        self.spec = spec
        self.config = config
        self.user = user
        self.domains = domains
        self.rng = random.Random(f"{config.seed}:{user}")
        self.session = None
        self.sessions_started = 0
        self.current = None
        self.history = set()
        self.reads = 0
        self.emitted = 0
        self.next_time = int(self.rng.random() * config.think_time_ns)

    def emit(self, issued):
        if self.session is None:
            self.session = f"u{self.user}-s{self.sessions_started}"
            self.sessions_started += 1
            self.current = None
            self.history = set()

        candidates = self.spec.entries if self.current is None else self.spec.successors(self.current)
        eligible = [v for v in candidates if self.spec.prerequisites(v) <= self.history]
        if not eligible:
            raise WorkloadGenerationError(self.session, self.current, self.history)
        request = self._pick(eligible)

        params = tuple(
            (name, self.rng.choice(values))
            for name, values in sorted(self.domains.get(request, {}).items())
        )
        entry = RequestEntry(self.user, self.session, request, params, issued)

        self.history.add(request)
        self.current = request
        self.emitted += 1
        if self.spec.kind(request) == RequestKind.READ:
            self.reads += 1
        if self.rng.random() < self.config.close_probability:
            self.session = None
        self.next_time = issued + max(1, int(self.config.think_time_ns * (0.5 + self.rng.random())))
        return entry

    def _pick(self, eligible):
        """Choose among eligible requests, steering this user's mix toward read_fraction.

        When both tags are eligible the tag that is behind its target share wins,
        so read-only stretches (before a write becomes reachable) are paid back later.
        """
        reads = [v for v in eligible if self.spec.kind(v) == RequestKind.READ]
        writes = [v for v in eligible if self.spec.kind(v) == RequestKind.WRITE]
        if reads and writes:
            group = reads if self.reads < self.config.read_fraction * (self.emitted + 1) else writes
        else:
            group = reads or writes
        return self.rng.choice(group)


def generate_workload(spec, config, domains=None):
    """Deterministic multi-user request log for a navigation spec.

    domains maps request id -> {parameter name: candidate values}; the app
    model declares them (SyntheticApp.parameter_domains()).
    """
    domains = domains or {}
    kinds = set(spec.vertices.values())
    if 0.0 < config.read_fraction < 1.0 and len(kinds) < 2:
        logger.warning(f"Navigation spec only has {'/'.join(sorted(kinds))} requests; read fraction cannot be honoured")

    streams = [_UserStream(spec, config, user, domains) for user in range(config.users)]
    heap = [(stream.next_time, stream.user) for stream in streams]
    heapq.heapify(heap)
    entries = []
    while heap:
        issued, user = heapq.heappop(heap)
        if config.duration_ns is not None and issued >= config.duration_ns:
            break
        stream = streams[user]
        entries.append(stream.emit(issued))
        if config.request_count is not None and len(entries) >= config.request_count:
            break
        heapq.heappush(heap, (stream.next_time, user))

    logger.info(f"Generated {len(entries)} requests for {config.users} user(s) (seed {config.seed})")
    return RequestLog(entries=tuple(entries), seed=config.seed)


def find_prerequisite_violations(spec, log):
    """(session, request) pairs whose prerequisites were not visited earlier in the session."""
    seen = defaultdict(set)
    violations = []
    for entry in log:
        if not spec.prerequisites(entry.request) <= seen[entry.session]:
            violations.append((entry.session, entry.request))
        seen[entry.session].add(entry.request)
    return violations


def write_request_log(log, stream):
    header = {'format': REQUEST_LOG_FORMAT, 'version': 1, 'seed': log.seed}
    stream.write(json.dumps(header, separators=(',', ':')) + '\n')
    for entry in log:
        line = {
            'user': entry.user,
            'session': entry.session,
            'request': entry.request,
            'params': dict(entry.params),
            'issued_ns': entry.issued_ns,
        }
        stream.write(json.dumps(line, separators=(',', ':'), ensure_ascii=False) + '\n')


def read_request_log(stream):
    entries = []
    seed = 0
    for lineno, text in enumerate(stream, start=1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DocumentError('request log', f"line {lineno}: {exc.msg}") from exc
        if lineno == 1:
            header = RequestLogHeaderSerializer(data=obj)
            if not header.is_valid():
                raise DocumentError('request log header', header.errors)
            seed = header.validated_data['seed']
            continue
        serializer = RequestEntrySerializer(data=obj)
        if not serializer.is_valid():
            raise DocumentError('request log', f"line {lineno}: {serializer.errors}")
        data = serializer.validated_data
        entries.append(RequestEntry(
            data['user'], data['session'], data['request'], tuple(data['params'].items()), data['issued_ns'],
        ))
    return RequestLog(entries=tuple(entries), seed=seed)


@dataclass(frozen=True)
class MethodNode:
    method: str
    behavior: str
    cost_ns: int
    inputs: tuple = ()
    period_ns: Optional[int] = None
    category: Optional[str] = None
    fn: str = 'digest'
    returns: str = 'value'
    children: tuple = ()

    @property
    def category_label(self):
        """Purity-manifest category of this node."""
        return self.category if self.behavior == Behavior.SIDE_EFFECTING else self.behavior

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class RequestModel:
    request: str
    params: dict
    calls: tuple


@dataclass(frozen=True)
class SyntheticApp:
    requests: dict
    developer_cache: tuple = ()

    def parameter_domains(self):
        return {request: dict(model.params) for request, model in self.requests.items()}

    def nodes(self):
        for model in self.requests.values():
            for call in model.calls:
                yield from call.walk()

    def ground_truth(self):
        """Purity manifest: signature -> behavior category."""
        return {node.method: node.category_label for node in sorted(self.nodes(), key=lambda n: n.method)}


def _build_node(data):
    return MethodNode(
        method=data['method'],
        behavior=str(data['behavior']),
        cost_ns=data['cost_ns'],
        inputs=tuple(data['inputs']),
        period_ns=data['period_ns'],
        category=str(data['category']) if data['category'] else None,
        fn=data['fn'],
        returns=data['returns'],
        children=tuple(_build_node(child) for child in data['children']),
    )


def load_app(document):
    """Validate a synthetic application document into a SyntheticApp."""
    serializer = AppSpecSerializer(data=load_json_document(document, 'application spec'))
    if not serializer.is_valid():
        raise DocumentError('application spec', serializer.errors)
    data = serializer.validated_data

    requests = {}
    for request, body in data['requests'].items():
        calls = tuple(_build_node(call) for call in body['calls'])
        params = {name: tuple(values) for name, values in body['params'].items()}
        requests[request] = RequestModel(request, params, calls)
    app = SyntheticApp(
        requests=requests,
        developer_cache=tuple(
            (entry['method'], entry['ttl_ns'], str(entry['admission'])) for entry in data['developer_cache']
        ),
    )

    seen = {}
    for model in app.requests.values():
        for call in model.calls:
            for node in call.walk():
                missing = [name for name in node.inputs if name not in model.params]
                if missing:
                    raise AppModelError(
                        f"{node.method} in '{model.request}' reads undeclared parameters: {', '.join(missing)}"
                    )
                if node.returns != 'value' and node.behavior != Behavior.SIDE_EFFECTING:
                    raise AppModelError(f"{node.method}: only side-effecting nodes may return '{node.returns}'")
                shape = (node.behavior, node.category, node.period_ns, node.fn, node.returns, len(node.inputs))
                if seen.setdefault(node.method, shape) != shape:
                    raise AppModelError(f"{node.method} is declared with conflicting behaviors")
    return app


class _SyntheticRun:
    """Executes request call trees on a simulated clock."""

    def __init__(self, app, policy, seed, jitter_fraction):
        self.app = app
        self.policy = policy
        self.rng = random.Random(seed)
        self.jitter_fraction = jitter_fraction
        self.counters = defaultdict(int)
        self.records = []

    def request(self, entry, clock):
        model = self.app.requests.get(entry.request)
        if model is None:
            raise UnknownRequestError(entry.request)
        params = dict(entry.params)
        for call in model.calls:
            clock = self.call(call, entry.session, params, 0, clock)
        return clock

    def call(self, node, session, params, depth, clock):
        raw_inputs = [params[name] for name in node.inputs]
        inputs = tuple(canonicalize(value, self.policy) for value in raw_inputs)
        start = clock
        jitter = int(node.cost_ns * self.jitter_fraction * self.rng.random())
        own = node.cost_ns + jitter
        if node.children:
            # children sit strictly inside the parent: at least 1 ns of own time on each side
            lead = max(1, own // 2)
            clock += lead
            for child in node.children:
                clock = self.call(child, session, params, depth + 1, clock)
            own = max(1, own - lead)
        end = clock + own
        output = canonicalize(self.output(node, inputs, raw_inputs, start), self.policy)
        self.records.append(CallRecord(session, node.method, inputs, output, start, end, depth))
        return end

    def output(self, node, inputs, raw_inputs, start):
        if node.behavior == Behavior.RANDOM:
            return format(self.rng.getrandbits(64), '016x')
        if node.returns == 'constant':
            return 'ok'
        if node.returns == 'counter':
            self.counters[node.method] += 1
            return self.counters[node.method]
        value = self.compute(node, inputs, raw_inputs)
        if node.behavior == Behavior.TIME_VARYING:
            return f"{value}@{start // node.period_ns}"
        return value

    def compute(self, node, inputs, raw_inputs):
        renderings = [value.rendering for value in inputs]
        if node.fn == 'identity':
            return raw_inputs[0] if raw_inputs else None
        if node.fn == 'increment':
            try:
                return int(raw_inputs[0]) + 1
            except (IndexError, TypeError, ValueError) as exc:
                raise AppModelError(f"{node.method}: 'increment' needs one integer input") from exc
        if node.fn == 'length':
            return len(renderings[0]) if renderings else 0
        if node.fn == 'concat':
            return ''.join(renderings)
        key = '|'.join([node.method, *renderings]).encode('utf-8')
        return hashlib.sha1(key).hexdigest()[:12]


def execute_synthetic(app, log, policy, seed, jitter_fraction=None):
    """Run every request of the log through the app model and return the trace records.

    Records come back in start-time order (parents before their children).
    The ground-truth labels are app.ground_truth().
    """
    if jitter_fraction is None:
        jitter_fraction = memorec_settings.WORKLOAD['JITTER_FRACTION']
    run = _SyntheticRun(app, policy, seed, jitter_fraction)
    busy_until = {}
    for entry in log:
        clock = max(entry.issued_ns, busy_until.get(entry.user, 0))
        busy_until[entry.user] = run.request(entry, clock)

    order = sorted(
        range(len(run.records)),
        key=lambda i: (run.records[i].start, run.records[i].session, run.records[i].depth, i),
    )
    records = tuple(run.records[i] for i in order)
    logger.info(f"Synthetic execution produced {len(records)} records from {len(log)} requests")
    return records
