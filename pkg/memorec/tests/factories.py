"""Record builders and random trace generators shared by the test modules."""
from pathlib import Path

from memorec.trace_model import CallRecord, CanonicalValue

CORPUS = Path(__file__).resolve().parent.parent / 'corpus'
NAV_PATH = CORPUS / 'nav.json'
APP_PATH = CORPUS / 'app.json'


def call(method, inputs=(), output='', start=0, duration=10, depth=0, session='s1', end=None):
    return CallRecord(
        session=session,
        method=method,
        inputs=tuple(CanonicalValue(str(value)) for value in inputs),
        output=CanonicalValue(str(output)),
        start=start,
        end=start + duration if end is None else end,
        depth=depth,
    )


def flat(calls, session='s1', gap=100, duration=10):
    """Top-level calls from (method, inputs, output) triples, gap ns apart."""
    return [
        call(method, inputs, output, start=index * gap, duration=duration, session=session)
        for index, (method, inputs, output) in enumerate(calls)
    ]


def random_rendering(rng, depth=2):
    """A composite or scalar rendering up to the given height."""
    if depth <= 1 or rng.random() < 0.4:
        return str(rng.randint(0, 2))
    fields = ','.join(f'{name}:{random_rendering(rng, depth - 1)}' for name in rng.sample('abc', rng.randint(1, 2)))
    return '{' + fields + '}'


def random_flat_trace(rng, methods=4, calls=40, max_height=1, pure_bias=0.7):
    """Sequential top-level calls in one or two sessions.

    Some methods are pure functions of their rendering, the rest draw
    outputs from a tiny domain so input classes sometimes disagree.
    """
    names = [f'app.M{index}.run()' for index in range(methods)]
    pure = {name: rng.random() < pure_bias for name in names}
    records = []
    clock = 0
    for _ in range(calls):
        name = rng.choice(names)
        rendering = random_rendering(rng, max_height)
        output = '{r:' + rendering + '}' if pure[name] else str(rng.randint(0, 1))
        duration = rng.randint(1, 10_000)
        records.append(call(
            name, [rendering], output, start=clock, duration=duration, session=rng.choice(['s1', 's2']),
        ))
        clock += duration + rng.randint(0, 50)
    return records


def random_nested_trace(rng, methods=4, calls=50, sessions=2, input_domain=3):
    """Up to `calls` records forming call trees in interleaved sessions, in start order."""
    names = [f'app.M{index}.run()' for index in range(methods)]
    records = []
    clocks = {f's{index}': rng.randint(0, 20) for index in range(sessions)}

    def emit(session, depth, start):
        name = rng.choice(names)
        rendering = str(rng.randrange(input_domain))
        output = str(rng.randrange(2)) if rng.random() < 0.3 else f'{name}:{rendering}'
        index = len(records)
        records.append(None)
        clock = start
        if depth < 2:
            for _ in range(rng.randint(0, 2)):
                if len(records) >= calls:
                    break
                clock = emit(session, depth + 1, clock + rng.randint(1, 3))
        end = clock + rng.randint(1, 20)
        records[index] = call(name, [rendering], output, start=start, depth=depth, session=session, end=end)
        return end

    while len(records) < calls:
        session = rng.choice(sorted(clocks))
        clocks[session] = emit(session, 0, clocks[session] + rng.randint(0, 30)) + 1
    return sorted(records, key=lambda record: (record.start, record.depth, record.session, record.method))


def random_pure_trace(rng, roots=12, sessions=2, levels=3, input_domain=3):
    """Call trees where each (method, input) always has the same output and the same callees.

    Methods live on fixed levels and only call the next level down; durations stay random.
    """
    names = [[f'app.L{level}M{index}.run()' for index in range(2)] for level in range(levels)]
    shapes = {}
    records = []
    clocks = {f's{index}': rng.randint(0, 20) for index in range(sessions)}

    def shape(level, name, value):
        if (name, value) not in shapes:
            children = []
            if level + 1 < levels:
                for _ in range(rng.randint(0, 2)):
                    children.append((level + 1, rng.choice(names[level + 1]), str(rng.randrange(input_domain))))
            shapes[(name, value)] = children
        return shapes[(name, value)]

    def emit(session, level, name, value, depth, start):
        index = len(records)
        records.append(None)
        clock = start
        for child_level, child, child_value in shape(level, name, value):
            clock = emit(session, child_level, child, child_value, depth + 1, clock + rng.randint(1, 3))
        end = clock + rng.randint(1, 20)
        records[index] = call(name, [value], f'{name}:{value}', start=start, depth=depth, session=session, end=end)
        return end

    for _ in range(roots):
        session = rng.choice(sorted(clocks))
        level = rng.randrange(levels)
        name = rng.choice(names[level])
        clocks[session] = emit(session, level, name, str(rng.randrange(input_domain)), 0, clocks[session] + rng.randint(0, 30)) + 1
    return sorted(records, key=lambda record: (record.start, record.depth, record.session, record.method))
