"""Convergence tables, time series and rank-evolution plots."""

import logging
import math
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd
from lxml import etree

from lowrank_sdc.lowrank import TruncationMode
from models import ConvergenceRow

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["scheme", "Nt", "l2_error", "rate", "wall_seconds"]
FLOAT_FORMAT = "%.6g"

Series = Sequence[Tuple[float, float]]

SVG_NS = "http://www.w3.org/2000/svg"
SVG_WIDTH, SVG_HEIGHT = 640, 400
SVG_MARGIN = 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def scheme_label(order: int, mode: Union[str, TruncationMode]) -> str:
    """``SDC-mBUG-{order}-{H|S}``"""
    return f"SDC-mBUG-{order}-{TruncationMode.parse(mode).label}"


def compute_rates(rows: List[ConvergenceRow]) -> List[ConvergenceRow]:
    """Fill ``rate`` per scheme from consecutive step counts.

    ``rate = log(e_prev / e) / log(Nt / Nt_prev)``, which is
    ``log2(err(Nt/2) / err(Nt))`` when the step counts double. The first
    row of each scheme and rows next to a failed cell get no rate.
    """
    by_scheme: Dict[str, List[ConvergenceRow]] = {}
    for row in rows:
        by_scheme.setdefault(row.scheme, []).append(row)
    out: List[ConvergenceRow] = []
    for scheme_rows in by_scheme.values():
        scheme_rows = sorted(scheme_rows, key=lambda r: r.nt)
        previous: Optional[ConvergenceRow] = None
        for row in scheme_rows:
            rate = None
            if (
                previous is not None
                and previous.l2_error is not None
                and row.l2_error is not None
                and previous.l2_error > 0
                and row.l2_error > 0
            ):
                rate = math.log(previous.l2_error / row.l2_error) / math.log(row.nt / previous.nt)
            out.append(row.model_copy(update={"rate": rate}))
            previous = row
    return out


def rows_to_frame(rows: Sequence[ConvergenceRow]) -> pd.DataFrame:
    records = [
        {
            "scheme": row.scheme,
            "Nt": row.nt,
            "l2_error": row.l2_error,
            "rate": row.rate,
            "wall_seconds": row.wall_seconds,
        }
        for row in rows
    ]
    return pd.DataFrame.from_records(records, columns=CSV_COLUMNS)


def emit_csv(rows: Sequence[ConvergenceRow], path: Union[str, Path]) -> Path:
    """Write the convergence table with 6 significant digits and LF line ends."""
    path = Path(path)
    frame = rows_to_frame(rows)
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    except OSError as exc:
        raise OSError(f"Could not write convergence table {path}: {exc}") from exc
    logger.info(f"✓ Convergence table saved to: {path}")
    return path


def read_convergence_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path)


def emit_series_csv(series: Series, path: Union[str, Path], value_name: str = "rank") -> Path:
    """Two-column ``t,<value_name>`` file."""
    path = Path(path)
    frame = pd.DataFrame.from_records(list(series), columns=["t", value_name])
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    except OSError as exc:
        raise OSError(f"Could not write series {path}: {exc}") from exc
    return path


def _axis_mapper(all_points: List[Tuple[float, float]]):
    ts = [t for t, _ in all_points]
    vs = [v for _, v in all_points]
    t_min, t_max = min(ts), max(ts)
    v_max = max(max(vs), 1.0)
    t_span = t_max - t_min if t_max > t_min else 1.0
    plot_w = SVG_WIDTH - 2 * SVG_MARGIN
    plot_h = SVG_HEIGHT - 2 * SVG_MARGIN

    def to_xy(t: float, v: float) -> Tuple[float, float]:
        x = SVG_MARGIN + (t - t_min) / t_span * plot_w
        y = SVG_HEIGHT - SVG_MARGIN - v / (1.05 * v_max) * plot_h
        return x, y

    return to_xy, (t_min, t_max, v_max)


def _text(parent, x: float, y: float, content: str, **attrs) -> None:
    node = etree.SubElement(parent, f"{{{SVG_NS}}}text", x=f"{x:.1f}", y=f"{y:.1f}", **attrs)
    node.text = content


def emit_rank_svg(
    series: Mapping[str, Series],
    path: Union[str, Path],
    references: Optional[Mapping[str, Series]] = None,
    title: Optional[str] = None,
) -> Path:
    """Standalone SVG: solid polyline per scheme, dashed polyline per reference curve."""
    references = dict(references or {})
    if not series or not any(len(points) for points in series.values()):
        raise ValueError("emit_rank_svg needs at least one nonempty series")
    path = Path(path)
    all_points = [p for points in list(series.values()) + list(references.values()) for p in points]
    to_xy, (t_min, t_max, v_max) = _axis_mapper(all_points)

    root = etree.Element(
        f"{{{SVG_NS}}}svg",
        nsmap={None: SVG_NS},
        width=str(SVG_WIDTH),
        height=str(SVG_HEIGHT),
        viewBox=f"0 0 {SVG_WIDTH} {SVG_HEIGHT}",
    )
    left, bottom = SVG_MARGIN, SVG_HEIGHT - SVG_MARGIN
    etree.SubElement(root, f"{{{SVG_NS}}}line", x1=str(left), y1=str(bottom), x2=str(SVG_WIDTH - SVG_MARGIN),
                     y2=str(bottom), stroke="black")
    etree.SubElement(root, f"{{{SVG_NS}}}line", x1=str(left), y1=str(bottom), x2=str(left),
                     y2=str(SVG_MARGIN), stroke="black")
    _text(root, SVG_WIDTH / 2, SVG_HEIGHT - 16, "t", **{"text-anchor": "middle"})
    _text(root, 18, SVG_HEIGHT / 2, "rank", **{"text-anchor": "middle",
                                              "transform": f"rotate(-90 18 {SVG_HEIGHT / 2:.1f})"})
    _text(root, left, bottom + 16, f"{t_min:.3g}", **{"text-anchor": "middle"})
    _text(root, SVG_WIDTH - SVG_MARGIN, bottom + 16, f"{t_max:.3g}", **{"text-anchor": "middle"})
    _text(root, left - 6, to_xy(t_min, v_max)[1], f"{v_max:.0f}", **{"text-anchor": "end"})
    if title:
        _text(root, SVG_WIDTH / 2, 24, title, **{"text-anchor": "middle"})

    def polyline(points: Series, color: str, dashed: bool, label: str) -> None:
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in (to_xy(t, v) for t, v in points))
        attrs = {"points": coords, "fill": "none", "stroke": color, "stroke-width": "1.5"}
        if dashed:
            attrs["stroke-dasharray"] = "6,4"
        node = etree.SubElement(root, f"{{{SVG_NS}}}polyline", **attrs)
        etree.SubElement(node, f"{{{SVG_NS}}}title").text = label

    legend_y = SVG_MARGIN
    for i, (label, points) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        polyline(points, color, False, label)
        _text(root, SVG_WIDTH - SVG_MARGIN - 4, legend_y, label, fill=color, **{"text-anchor": "end"})
        legend_y += 14
        reference = references.pop(label, None)
        if reference is not None:
            polyline(reference, color, True, label.replace("SDC-mBUG-", "Ref-"))
    for label, points in references.items():
        polyline(points, "gray", True, label)

    try:
        etree.ElementTree(root).write(str(path), xml_declaration=True, encoding="utf-8", pretty_print=True)
    except OSError as exc:
        raise OSError(f"Could not write rank plot {path}: {exc}") from exc
    logger.info(f"✓ Rank plot saved to: {path}")
    return path
