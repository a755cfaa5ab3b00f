"""
SVG Constructor Module.

Builds the standalone SVG charts of the reports (return histograms, confusion-matrix heatmaps
and predicted-versus-true histograms) as BeautifulSoup XML documents.
"""

import logging
from pathlib import Path

import numpy as np
from bs4 import BeautifulSoup

logger = logging.getLogger(__name__)

WIDTH = 640
HEIGHT = 400
MARGIN = 50
SERIES_COLOURS = ["#4c72b0", "#dd8452"]


def _fmt(value: float) -> str:
    return f"{value:.2f}"


class SVGConstructor:
    @staticmethod
    def _document(title: str, width: int = WIDTH, height: int = HEIGHT) -> BeautifulSoup:
        """
        Creates an empty SVG document with a white background and a title line.
        """
        document = BeautifulSoup(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}"></svg>', "xml")
        document.svg.append(document.new_tag("rect", attrs={"x": "0", "y": "0", "width": str(width),
                                                            "height": str(height), "fill": "white"}))
        heading = document.new_tag("text", attrs={"x": str(width // 2), "y": "24", "text-anchor": "middle",
                                                  "font-family": "sans-serif", "font-size": "16"})
        heading.string = title
        document.svg.append(heading)
        return document

    @staticmethod
    def _label(document: BeautifulSoup, x: float, y: float, text: str, size: int = 11, anchor: str = "middle"):
        label = document.new_tag("text", attrs={"x": _fmt(x), "y": _fmt(y), "text-anchor": anchor,
                                                "font-family": "sans-serif", "font-size": str(size)})
        label.string = text
        document.svg.append(label)

    @staticmethod
    def _axes(document: BeautifulSoup, x_label: str, y_label: str):
        bottom = HEIGHT - MARGIN
        for x1, y1, x2, y2 in ((MARGIN, bottom, WIDTH - MARGIN, bottom), (MARGIN, MARGIN, MARGIN, bottom)):
            document.svg.append(document.new_tag("line", attrs={"x1": str(x1), "y1": str(y1), "x2": str(x2),
                                                                "y2": str(y2), "stroke": "black"}))
        SVGConstructor._label(document, WIDTH / 2, HEIGHT - 12, x_label)
        SVGConstructor._label(document, 14, HEIGHT / 2, y_label, anchor="start")

    @staticmethod
    def construct_histogram(edges, counts_by_series: dict, title: str, x_label: str = "value",
                            density=None) -> str:
        """
        Draws one or more histograms over shared bin edges, optionally with a density curve.

        Args:
            edges (array-like): Bin edges, one more than the number of bins.
            counts_by_series (dict): Series name to per-bin counts.
            title (str): Chart title.
            x_label (str): Label of the horizontal axis.
            density (array-like | None): Expected count per bin, drawn as a polyline.

        Returns:
            str: The SVG document.
        """
        document = SVGConstructor._document(title)
        SVGConstructor._axes(document, x_label, "count")
        edges = np.asarray(edges, dtype=float)
        n_bins = len(edges) - 1
        if n_bins < 1:
            return str(document)

        peak = max([float(np.max(counts)) for counts in counts_by_series.values() if len(counts)] + [1.0])
        if density is not None and len(density):
            peak = max(peak, float(np.max(density)))
        plot_width = WIDTH - 2 * MARGIN
        plot_height = HEIGHT - 2 * MARGIN
        bar_width = plot_width / n_bins / max(len(counts_by_series), 1)

        for series_index, (name, counts) in enumerate(counts_by_series.items()):
            colour = SERIES_COLOURS[series_index % len(SERIES_COLOURS)]
            for i, count in enumerate(counts):
                height = plot_height * float(count) / peak
                x = MARGIN + plot_width * i / n_bins + series_index * bar_width
                document.svg.append(document.new_tag("rect", attrs={
                    "x": _fmt(x), "y": _fmt(HEIGHT - MARGIN - height), "width": _fmt(bar_width),
                    "height": _fmt(height), "fill": colour, "fill-opacity": "0.8"}))
            SVGConstructor._label(document, WIDTH - MARGIN, MARGIN + 14 * series_index, name, anchor="end")

        if density is not None and len(density):
            points = " ".join(
                f"{_fmt(MARGIN + plot_width * (i + 0.5) / n_bins)},"
                f"{_fmt(HEIGHT - MARGIN - plot_height * float(value) / peak)}"
                for i, value in enumerate(density))
            document.svg.append(document.new_tag("polyline", attrs={"points": points, "fill": "none",
                                                                    "stroke": "#c44e52", "stroke-width": "2"}))

        SVGConstructor._label(document, MARGIN, HEIGHT - MARGIN + 16, f"{edges[0]:.4g}")
        SVGConstructor._label(document, WIDTH - MARGIN, HEIGHT - MARGIN + 16, f"{edges[-1]:.4g}")
        return str(document)

    @staticmethod
    def construct_heatmap(matrix, labels: list, title: str) -> str:
        """
        Draws a confusion matrix; rows are true classes, columns predicted classes.
        """
        matrix = np.asarray(matrix, dtype=float)
        size = len(labels)
        cell = (min(WIDTH, HEIGHT) - 2 * MARGIN) / max(size, 1)
        document = SVGConstructor._document(title, WIDTH, HEIGHT + MARGIN)
        peak = float(matrix.max()) if matrix.size and matrix.max() > 0 else 1.0
        left = 160
        for i in range(size):
            SVGConstructor._label(document, left - 6, MARGIN + cell * (i + 0.5), labels[i], anchor="end")
            SVGConstructor._label(document, left + cell * (i + 0.5), MARGIN + cell * size + 16, labels[i][:10])
            for j in range(size):
                shade = int(255 - 200 * matrix[i, j] / peak)
                document.svg.append(document.new_tag("rect", attrs={
                    "x": _fmt(left + cell * j), "y": _fmt(MARGIN + cell * i), "width": _fmt(cell),
                    "height": _fmt(cell), "fill": f"rgb({shade},{shade},255)", "stroke": "white"}))
                SVGConstructor._label(document, left + cell * (j + 0.5), MARGIN + cell * (i + 0.5) + 4,
                                      str(int(matrix[i, j])))
        SVGConstructor._label(document, left + cell * size / 2, HEIGHT + MARGIN - 10, "predicted")
        return str(document)

    @staticmethod
    def write(svg: str, path: Path) -> Path:
        path = Path(path)
        path.write_text(svg)
        logger.info(f"Wrote chart {path}")
        return path
