"""
Recommendation quality: validity labels, usefulness, overlap between recommenders and the report files.

Validity comes from a purity manifest (signature -> category). Methods
with side effects or random output are invalid; time-varying methods are
valid since a cache may serve stale data for its TTL.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import pandas as pd

from .exceptions import DocumentError, UnknownMethodError
from .models import INVALID_CATEGORIES, Label
from .replay_sim import METRICS_COLUMNS, metrics_rows, simulate_throughput
from .serializers import PurityManifestSerializer
from .utils import (
    CSVExporter, ExcelExporter, PDFExporter, ensure_directory, format_cell, load_json_document, markdown_table,
    write_text,
)

logger = logging.getLogger(__name__)

CLASSIFICATION_COLUMNS = ['approach', 'method', 'label', 'useful', 'hits']
SUMMARY_COLUMNS = ['approach', 'novel', 'existing', 'invalid', 'useful', 'usefulness_rate', 'total']
OVERLAP_COLUMNS = ['set_a', 'set_b', 'method', 'in_a', 'in_b', 'whitelist_size_a', 'whitelist_size_b']
THROUGHPUT_COLUMNS = [
    'users', 'plan', 'baseline_ns', 'cached_ns', 'hits', 'misses', 'additions', 'discards', 'relative_throughput',
]
DISCARD_COLUMNS = ['users', 'plan', 'method', 'cached_inputs', 'uncached_inputs', 'uncached_occurrences']
REPORT_FORMATS = ('csv', 'md', 'xlsx', 'pdf')


@dataclass(frozen=True)
class PurityManifest:
    categories: dict

    def __contains__(self, method):
        return method in self.categories

    def category(self, method):
        return self.categories[method]

    def as_document(self):
        return {'methods': dict(sorted(self.categories.items()))}


def load_manifest(document):
    serializer = PurityManifestSerializer(data=load_json_document(document, 'purity manifest'))
    if not serializer.is_valid():
        raise DocumentError('purity manifest', serializer.errors)
    return PurityManifest({method: str(category) for method, category in serializer.validated_data['methods'].items()})


@dataclass(frozen=True)
class ClassifiedRecommendation:
    approach: str
    method: str
    label: str
    useful: bool
    hits: int


@dataclass(frozen=True)
class Classification:
    approach: str
    rows: tuple = ()

    def count(self, label):
        return sum(1 for row in self.rows if row.label == label)

    @property
    def useful(self):
        return sum(1 for row in self.rows if row.useful)

    @property
    def usefulness_rate(self) -> Optional[float]:
        valid = self.count(Label.NOVEL) + self.count(Label.EXISTING)
        return self.useful / valid if valid else None

    def summary_row(self):
        return [
            self.approach, self.count(Label.NOVEL), self.count(Label.EXISTING), self.count(Label.INVALID),
            self.useful, self.usefulness_rate, len(self.rows),
        ]


def classify(recommendations, dev, manifest, metrics, approach=None):
    unknown = [method for method in recommendations.methods if method not in manifest]
    if unknown:
        raise UnknownMethodError(unknown)
    developer_methods = set(dev.rules) if dev is not None else set()
    rows = []
    for rec in sorted(recommendations, key=lambda r: r.method):
        if manifest.category(rec.method) in INVALID_CATEGORIES:
            label = Label.INVALID
        elif rec.method in developer_methods:
            label = Label.EXISTING
        else:
            label = Label.NOVEL
        replayed = metrics.per_method.get(rec.method) if metrics is not None else None
        hits = replayed.hits if replayed is not None else 0
        rows.append(ClassifiedRecommendation(
            approach=approach or str(recommendations.source),
            method=rec.method,
            label=label.value,
            useful=label != Label.INVALID and hits > 0,
            hits=hits,
        ))
    return Classification(approach or str(recommendations.source), tuple(rows))


@dataclass(frozen=True)
class OverlapReport:
    name_a: str
    name_b: str
    shared: frozenset
    only_a: frozenset
    only_b: frozenset
    whitelist_sizes_a: dict = field(default_factory=dict)
    whitelist_sizes_b: dict = field(default_factory=dict)

    def rows(self):
        rows = []
        for method in sorted(self.shared | self.only_a | self.only_b):
            rows.append([
                self.name_a, self.name_b, method, method not in self.only_b, method not in self.only_a,
                self.whitelist_sizes_a.get(method), self.whitelist_sizes_b.get(method),
            ])
        return rows


def _whitelist_sizes(recommendations):
    return {rec.method: len(rec.whitelist) for rec in recommendations if rec.whitelist is not None}


def compare(a, b, name_a=None, name_b=None):
    methods_a, methods_b = a.methods, b.methods
    return OverlapReport(
        name_a=name_a or str(a.source),
        name_b=name_b or str(b.source),
        shared=methods_a & methods_b,
        only_a=methods_a - methods_b,
        only_b=methods_b - methods_a,
        whitelist_sizes_a=_whitelist_sizes(a),
        whitelist_sizes_b=_whitelist_sizes(b),
    )


def _throughput_rows(metrics_by_users):
    rows = []
    for users, metrics_set in metrics_by_users:
        frame = simulate_throughput(metrics_set)
        for record in frame.to_dict('records'):
            rows.append([users] + [record[column] for column in THROUGHPUT_COLUMNS[1:]])
    return rows


def _discard_rows(metrics_by_users):
    rows = []
    for users, metrics_set in metrics_by_users:
        for metrics in metrics_set:
            for method, stats in sorted(metrics.discarded_inputs.items()):
                rows.append([
                    users, metrics.plan, method, stats.cached_inputs, stats.uncached_inputs,
                    stats.uncached_occurrences,
                ])
    return rows


def report_tables(classifications=(), comparisons=(), metrics_by_users=()):
    """Every report table as (name, headers, rows), in output order."""
    metrics_by_users = [(str(users), list(metrics_set)) for users, metrics_set in metrics_by_users]
    classification_rows = [
        [row.approach, row.method, row.label, row.useful, row.hits]
        for classification in classifications for row in classification.rows
    ]
    replay_rows = [
        [users] + row
        for users, metrics_set in metrics_by_users for metrics in metrics_set for row in metrics_rows(metrics)
    ]
    return [
        ('classification', CLASSIFICATION_COLUMNS, classification_rows),
        ('summary', SUMMARY_COLUMNS, [c.summary_row() for c in classifications]),
        ('overlap', OVERLAP_COLUMNS, [row for comparison in comparisons for row in comparison.rows()]),
        ('replay_metrics', ['users'] + METRICS_COLUMNS, replay_rows),
        ('throughput', THROUGHPUT_COLUMNS, _throughput_rows(metrics_by_users)),
        ('discarded_inputs', DISCARD_COLUMNS, _discard_rows(metrics_by_users)),
    ]


def _text_summary(tables):
    parts = []
    for name, headers, rows in tables:
        frame = pd.DataFrame([[format_cell(v) for v in row] for row in rows], columns=headers)
        body = frame.to_string(index=False) if rows else '(no rows)'
        parts.append(f"== {name} ==\n{body}\n")
    return '\n'.join(parts)


def _markdown_summary(tables):
    parts = ['# memorec report\n']
    for name, headers, rows in tables:
        parts.append(f"## {name.replace('_', ' ')}\n")
        parts.append((markdown_table(headers, rows) if rows else '_no rows_') + '\n')
    return '\n'.join(parts)


def emit_report(destination, classifications=(), comparisons=(), metrics_by_users=(), fmt='csv'):
    """Write one CSV per table plus a summary in the requested format; returns the written paths."""
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"Unknown report format '{fmt}'")
    destination = ensure_directory(destination)
    tables = report_tables(classifications, comparisons, metrics_by_users)

    written = []
    for name, headers, rows in tables:
        exporter = CSVExporter(destination / f'{name}.csv', headers)
        for row in rows:
            exporter.add_row(row)
        written.append(exporter.save())

    if fmt == 'csv':
        written.append(write_text(destination / 'summary.txt', _text_summary(tables)))
    elif fmt == 'md':
        written.append(write_text(destination / 'summary.md', _markdown_summary(tables)))
    elif fmt == 'xlsx':
        workbook = ExcelExporter()
        for name, headers, rows in tables:
            workbook.add_sheet(name, headers, rows)
        written.append(workbook.save(destination / 'report.xlsx'))
    else:
        pdf = PDFExporter(destination / 'report.pdf')
        pdf.add_title('memorec report')
        for name, headers, rows in tables:
            pdf.add_heading(name.replace('_', ' ').capitalize())
            if rows:
                pdf.add_table(headers, rows)
            else:
                pdf.add_paragraph('No rows.')
        written.append(pdf.save())
    logger.info(f"Report written to {destination} ({len(written)} files)")
    return written
