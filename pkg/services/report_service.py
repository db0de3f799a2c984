"""
Report Service for TrajGuard

Handles every report artifact of a run:
- Deterministic CSV tables (fixed float format, sorted rows, no timestamps)
- ROC curves rendered as SVG and PDF
- Histograms rendered as SVG and PDF

Drawings are built with reportlab.graphics and written through its SVG and
PDF renderers.

Author: TrajGuard Development Team
"""

import csv
import logging
import os

import numpy as np
from reportlab import rl_config
from reportlab.graphics import renderPDF, renderSVG
from reportlab.graphics.shapes import Drawing, Line, PolyLine, Rect, String
from reportlab.lib import colors

logger = logging.getLogger(__name__)

# Keep PDF bytes free of creation dates and random ids
rl_config.invariant = 1

FLOAT_FORMAT = "{:.6f}"
PLOT_WIDTH = 360
PLOT_HEIGHT = 300
MARGIN = 45
SERIES_COLORS = [colors.HexColor(c) for c in ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")]


def format_value(value):
    """Render a cell: floats with a fixed format, everything else as str."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            return "nan" if np.isnan(value) else ("inf" if value > 0 else "-inf")
        return FLOAT_FORMAT.format(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return "" if value is None else str(value)


class ReportService:
    """Writes the tables and figures of one report directory."""

    def __init__(self, directory):
        """
        Initialize the report service.

        Args:
            directory: Output directory (created on demand)
        """
        self.directory = directory

    def _path(self, name):
        os.makedirs(self.directory, exist_ok=True)
        return os.path.join(self.directory, name)

    def write_table(self, name, columns, rows, sort=True):
        """
        Write a CSV table.

        Args:
            name: File name inside the report directory
            columns: Header names
            rows: Iterable of dicts or sequences
            sort: Sort rows by their formatted cells

        Returns:
            str: Path of the written file
        """
        cells = []
        for row in rows:
            values = [row.get(c) for c in columns] if isinstance(row, dict) else list(row)
            cells.append([format_value(v) for v in values])
        if sort:
            cells.sort()
        path = self._path(name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            writer.writerows(cells)
        logger.debug(f"Wrote {len(cells)} rows to {path}")
        return path

    # ------------------------------------------------------------------
    # Figures
    # ------------------------------------------------------------------

    def _frame(self, title, x_label, y_label):
        drawing = Drawing(PLOT_WIDTH, PLOT_HEIGHT)
        drawing.add(Rect(MARGIN, MARGIN, PLOT_WIDTH - 2 * MARGIN, PLOT_HEIGHT - 2 * MARGIN,
                         fillColor=None, strokeColor=colors.black, strokeWidth=0.8))
        drawing.add(String(PLOT_WIDTH / 2, PLOT_HEIGHT - MARGIN / 2, title, fontSize=10, textAnchor="middle"))
        drawing.add(String(PLOT_WIDTH / 2, MARGIN / 3, x_label, fontSize=8, textAnchor="middle"))
        drawing.add(String(MARGIN / 3, PLOT_HEIGHT / 2, y_label, fontSize=8, textAnchor="middle"))
        return drawing

    @staticmethod
    def _to_canvas(x, y, x_range, y_range):
        (x0, x1), (y0, y1) = x_range, y_range
        span_x = (x1 - x0) or 1.0
        span_y = (y1 - y0) or 1.0
        cx = MARGIN + (np.asarray(x, dtype=np.float64) - x0) / span_x * (PLOT_WIDTH - 2 * MARGIN)
        cy = MARGIN + (np.asarray(y, dtype=np.float64) - y0) / span_y * (PLOT_HEIGHT - 2 * MARGIN)
        return cx, cy

    def _save(self, drawing, stem):
        svg_path = self._path(f"{stem}.svg")
        pdf_path = self._path(f"{stem}.pdf")
        renderSVG.drawToFile(drawing, svg_path)
        renderPDF.drawToFile(drawing, pdf_path)
        return svg_path, pdf_path

    def plot_roc(self, stem, curves, title="ROC"):
        """
        Draw one or more ROC curves with a chance diagonal.

        Args:
            stem: File name without extension
            curves: dict label -> RocCurve
            title: Plot title

        Returns:
            tuple: (svg path, pdf path)
        """
        drawing = self._frame(title, "false positive rate", "true positive rate")
        unit = ((0.0, 1.0), (0.0, 1.0))
        dx, dy = self._to_canvas([0, 1], [0, 1], *unit)
        drawing.add(Line(dx[0], dy[0], dx[1], dy[1], strokeColor=colors.grey, strokeDashArray=[3, 3]))
        for i, label in enumerate(sorted(curves)):
            curve = curves[label]
            color = SERIES_COLORS[i % len(SERIES_COLORS)]
            cx, cy = self._to_canvas(curve.fpr, curve.tpr, *unit)
            drawing.add(PolyLine(list(np.column_stack([cx, cy]).ravel()), strokeColor=color, strokeWidth=1.2))
            drawing.add(String(PLOT_WIDTH - MARGIN - 4, MARGIN + 6 + 11 * i, f"{label} ({curve.auc:.3f})",
                               fontSize=7, fillColor=color, textAnchor="end"))
        return self._save(drawing, stem)

    def plot_histograms(self, stem, samples, bins=20, title="Histogram", x_label="value"):
        """
        Overlay step histograms of several samples on shared bins.

        Args:
            stem: File name without extension
            samples: dict label -> 1-D array
            bins: Number of bins

        Returns:
            tuple: (svg path, pdf path)
        """
        drawing = self._frame(title, x_label, "fraction")
        values = [np.asarray(v, dtype=np.float64) for v in samples.values() if len(v)]
        if not values:
            return self._save(drawing, stem)
        lo = min(v.min() for v in values)
        hi = max(v.max() for v in values)
        edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
        heights = {label: np.histogram(samples[label], bins=edges)[0] / max(len(samples[label]), 1)
                   for label in sorted(samples) if len(samples[label])}
        top = max(h.max() for h in heights.values()) or 1.0
        for i, (label, h) in enumerate(heights.items()):
            color = SERIES_COLORS[i % len(SERIES_COLORS)]
            xs = np.repeat(edges, 2)[1:-1]
            ys = np.repeat(h, 2)
            cx, cy = self._to_canvas(xs, ys, (edges[0], edges[-1]), (0.0, top))
            drawing.add(PolyLine(list(np.column_stack([cx, cy]).ravel()), strokeColor=color, strokeWidth=1.0))
            drawing.add(String(PLOT_WIDTH - MARGIN - 4, PLOT_HEIGHT - MARGIN - 10 - 11 * i, label,
                               fontSize=7, fillColor=color, textAnchor="end"))
        return self._save(drawing, stem)
