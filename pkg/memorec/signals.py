import hashlib
import logging
from contextlib import contextmanager
from pathlib import Path

from django.dispatch import Signal, receiver

logger = logging.getLogger(__name__)

# sender: the writing module; kwargs: path
artifact_written = Signal()

# sender: the replay module; kwargs: plan, metrics
plan_replayed = Signal()

# Ledgers currently recording; study opens one per run
_ACTIVE_LEDGERS = []


class ArtifactLedger:
    """Files written during a run, with their sha256 digests."""

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else None
        self.entries = {}

    def add(self, path):
        path = Path(path)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        name = path.relative_to(self.root).as_posix() if self.root else path.as_posix()
        self.entries[name] = digest

    def as_list(self):
        return [{'path': name, 'sha256': digest} for name, digest in sorted(self.entries.items())]


@contextmanager
def recording(root=None):
    ledger = ArtifactLedger(root)
    _ACTIVE_LEDGERS.append(ledger)
    try:
        yield ledger
    finally:
        _ACTIVE_LEDGERS.remove(ledger)


def announce(path, sender=None):
    artifact_written.send(sender=sender, path=Path(path))


@receiver(artifact_written)
def handle_artifact_written(sender, path, **kwargs):
    logger.debug(f"Wrote {path}")
    for ledger in _ACTIVE_LEDGERS:
        try:
            ledger.add(path)
        except (OSError, ValueError) as exc:
            logger.warning(f"Artifact ledger skipped {path}: {exc}")


@receiver(plan_replayed)
def handle_plan_replayed(sender, plan, metrics, **kwargs):
    total = metrics.total
    logger.info(
        f"Replayed plan {plan.name}: {total.hits} hits, {total.misses} misses, "
        f"{total.additions} additions, {total.discards} discards, "
        f"relative throughput {metrics.relative_throughput:+.4f}"
    )
