"""
Common helpers: JSON document loading and the table exporters every report uses.

Exporters write to files (CSV, Excel workbook, PDF) and announce each file
through the artifact_written signal.
"""
import csv
import json
import math
from collections.abc import Mapping
from pathlib import Path

import openpyxl
from openpyxl.styles import Alignment, Font, PatternFill
from reportlab.lib import colors
from reportlab.lib.pagesizes import landscape, letter
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from .exceptions import DocumentError, ReportDestinationError
from .signals import announce


def load_json_document(source, name):
    """Return the parsed JSON of source: a dict, a path, JSON text or bytes."""
    if isinstance(source, Mapping):
        return source
    if isinstance(source, (bytes, bytearray)):
        source = source.decode('utf-8')
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith(('{', '['))):
        try:
            source = Path(source).read_text(encoding='utf-8')
        except OSError as exc:
            raise DocumentError(name, f"cannot read {source}: {exc.strerror or exc}") from exc
    try:
        return json.loads(source)
    except json.JSONDecodeError as exc:
        raise DocumentError(name, f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def write_json(path, data):
    return write_text(path, json.dumps(data, indent=2, ensure_ascii=False) + '\n')


def write_text(path, text):
    path = Path(path)
    try:
        path.write_text(text, encoding='utf-8')
    except OSError as exc:
        raise ReportDestinationError(f"Cannot write {path}: {exc.strerror or exc}") from exc
    announce(path)
    return path


def ensure_directory(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportDestinationError(f"Cannot create report directory {path}: {exc.strerror or exc}") from exc
    if not path.is_dir():
        raise ReportDestinationError(f"Report destination {path} is not a directory")
    return path


def format_cell(value):
    """Stable text for a table cell."""
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        if math.isnan(value):
            return ''
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return f'{value:.6f}'
    return str(value)


class CSVExporter:
    """Fixed-column CSV table written to a file."""

    def __init__(self, path, headers):
        self.path = Path(path)
        self.headers = list(headers)
        self.rows = []

    def add_row(self, data):
        self.rows.append([format_cell(value) for value in data])

    def save(self):
        try:
            with open(self.path, 'w', newline='', encoding='utf-8') as handle:
                writer = csv.writer(handle, lineterminator='\n')
                writer.writerow(self.headers)
                writer.writerows(self.rows)
        except OSError as exc:
            raise ReportDestinationError(f"Cannot write {self.path}: {exc.strerror or exc}") from exc
        announce(self.path)
        return self.path


def markdown_table(headers, rows):
    lines = ['| ' + ' | '.join(headers) + ' |', '|' + '|'.join('---' for _ in headers) + '|']
    for row in rows:
        lines.append('| ' + ' | '.join(format_cell(value).replace('|', '\\|') for value in row) + ' |')
    return '\n'.join(lines)


class ExcelExporter:
    """Workbook with one formatted sheet per table."""

    def __init__(self):
        self.wb = openpyxl.Workbook()
        self.wb.remove(self.wb.active)

    def add_sheet(self, title, headers, rows):
        ws = self.wb.create_sheet(title=title[:31])
        for col_num, header in enumerate(headers, 1):
            cell = ws.cell(row=1, column=col_num, value=header)
            cell.font = Font(bold=True, color="FFFFFF")
            cell.fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
            cell.alignment = Alignment(horizontal='center', vertical='center', wrap_text=True)
        for row_num, row in enumerate(rows, 2):
            for col_num, value in enumerate(row, 1):
                if isinstance(value, float) and not math.isfinite(value):
                    value = format_cell(value)
                ws.cell(row=row_num, column=col_num, value=value)
        self._auto_adjust_columns(ws)
        return ws

    @staticmethod
    def _auto_adjust_columns(ws):
        for column in ws.columns:
            width = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
            ws.column_dimensions[column[0].column_letter].width = min(width + 2, 60)

    def save(self, path):
        path = Path(path)
        try:
            self.wb.save(path)
        except OSError as exc:
            raise ReportDestinationError(f"Cannot write {path}: {exc.strerror or exc}") from exc
        announce(path)
        return path


class PDFExporter:
    """Landscape PDF report built with ReportLab."""

    def __init__(self, path, title="memorec report"):
        self.path = Path(path)
        self.doc = SimpleDocTemplate(
            str(self.path),
            pagesize=landscape(letter),
            topMargin=0.5 * inch,
            bottomMargin=0.5 * inch,
            title=title,
            invariant=1,
        )
        self.styles = getSampleStyleSheet()
        self.story = []

    def add_title(self, text):
        self.story.append(Paragraph(f"<b>{text}</b>", self.styles['Title']))
        self.story.append(Spacer(1, 12))

    def add_heading(self, text):
        self.story.append(Paragraph(f"<b>{text}</b>", self.styles['Heading2']))
        self.story.append(Spacer(1, 10))

    def add_paragraph(self, text):
        self.story.append(Paragraph(text, self.styles['Normal']))

    def add_table(self, headers, rows):
        data = [list(headers)] + [[format_cell(value) for value in row] for row in rows]
        table = Table(data, repeatRows=1)
        table.setStyle(TableStyle([
            ('BACKGROUND', (0, 0), (-1, 0), colors.grey),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTSIZE', (0, 0), (-1, -1), 7),
            ('ALIGN', (1, 1), (-1, -1), 'RIGHT'),
            ('BACKGROUND', (0, 1), (-1, -1), colors.beige),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.black),
        ]))
        self.story.append(table)
        self.story.append(Spacer(1, 12))

    def save(self):
        try:
            self.doc.build(self.story)
        except OSError as exc:
            raise ReportDestinationError(f"Cannot write {self.path}: {exc.strerror or exc}") from exc
        announce(self.path)
        return self.path
