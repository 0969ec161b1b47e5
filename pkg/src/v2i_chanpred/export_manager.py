"""Static export of plotly figures.

Figures are written as PNG (kaleido) or self-contained HTML. WebGL traces
are swapped for their SVG counterparts at export time so static snapshots keep
every marker.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import plotly.graph_objects as go

from v2i_chanpred.errors import ChanPredError

logger = logging.getLogger(__name__)


class ExportError(ChanPredError):
    """Raised when a requested export fails."""


# ─── Core class ───────────────────────────────────────────────────────────────
class ExportManager:
    """Centralises all export related helpers."""

    DEFAULT_LAYOUT: dict[str, Any] = {
        "width": 1000,
        "height": 600,
        "margin": {"l": 80, "r": 40, "t": 60, "b": 60},
        "font_family": "Arial",
        "font_size": 14,
        "font_color": "#000",
    }

    # ── Private helpers ────────────────────────────────────────────────────
    @staticmethod
    def _vectorise_traces(fig: go.Figure) -> go.Figure:
        """Return a copy of ``fig`` with WebGL traces swapped to SVG ones."""
        fig_dict = fig.to_plotly_json()
        for trace in fig_dict.get("data", []):
            t_type: str = trace.get("type", "")
            if t_type.endswith("gl"):
                trace["type"] = t_type[:-2]
        return go.Figure(fig_dict)

    @staticmethod
    def _prepare(fig: go.Figure, cfg: dict[str, Any] | None = None) -> go.Figure:
        new_fig = go.Figure(fig.to_plotly_json())
        layout_cfg = ExportManager.DEFAULT_LAYOUT.copy()
        if cfg:
            layout_cfg.update(cfg)
        new_fig.update_layout(**layout_cfg)
        return new_fig

    @staticmethod
    def _target(path: Path, suffix: str) -> Path:
        path = Path(path)
        if path.suffix != suffix:
            path = path.with_suffix(suffix)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    # ── Public API ─────────────────────────────────────────────────────────
    @staticmethod
    def export_png(
        fig: go.Figure, path: Path, cfg: dict[str, Any] | None = None
    ) -> Path:
        """Write a PNG snapshot with all symbols intact."""
        target = ExportManager._target(path, ".png")
        try:
            fig_out = ExportManager._vectorise_traces(ExportManager._prepare(fig, cfg))
            target.write_bytes(fig_out.to_image(format="png", engine="kaleido"))
        except Exception as exc:
            logger.exception("PNG export to %s failed", target)
            raise ExportError(str(exc)) from exc
        return target

    @staticmethod
    def export_html(
        fig: go.Figure, path: Path, cfg: dict[str, Any] | None = None
    ) -> Path:
        target = ExportManager._target(path, ".html")
        try:
            fig_out = ExportManager._prepare(fig, cfg)
            html = fig_out.to_html(
                include_plotlyjs="inline",
                config={"displayModeBar": True, "displaylogo": False},
            )
            target.write_text(html, encoding="utf-8")
        except Exception as exc:
            logger.exception("HTML export to %s failed", target)
            raise ExportError(str(exc)) from exc
        return target


def save_figure(fig: go.Figure, path: Path) -> Path | None:
    """Export a PNG, falling back to HTML; returns None when both fail."""
    try:
        return ExportManager.export_png(fig, path)
    except ExportError:
        logger.warning("falling back to HTML for %s", path)
    try:
        return ExportManager.export_html(fig, path)
    except ExportError:
        logger.warning("could not export %s", path)
        return None
