"""Plotly figures for training curves, prediction traces and APS results."""

from __future__ import annotations

from typing import TYPE_CHECKING
from typing import Any

import numpy as np
import plotly.graph_objects as go

from v2i_chanpred.palette import SERIES_STYLES
from v2i_chanpred.palette import series_color

if TYPE_CHECKING:
    from collections.abc import Mapping

    import pandas as pd
    from numpy.typing import ArrayLike

    from v2i_chanpred.metrics import CosineSummary

AXIS_STYLE: dict[str, Any] = {
    "title_font": {"size": 18, "color": "#111111"},
    "tickfont": {"size": 14, "color": "#111111"},
    "linecolor": "#000000",
    "mirror": True,
    "showline": True,
    "ticks": "inside",
    "ticklen": 6,
    "tickwidth": 1,
    "tickcolor": "#000000",
    "gridcolor": "rgba(0,0,0,0.15)",
    "minor_showgrid": True,
    "minor_gridwidth": 0.5,
    "minor_gridcolor": "rgba(0,0,0,0.05)",
}


def _style(fig: go.Figure, x_title: str, y_title: str, title: str = "") -> go.Figure:
    fig.update_layout(
        title=title,
        plot_bgcolor="#ffffff",
        paper_bgcolor="#ffffff",
        font={"color": "#000000"},
        legend={"font": {"color": "#000000"}},
    )
    fig.update_xaxes(title_text=x_title, **AXIS_STYLE)
    fig.update_yaxes(title_text=y_title, **AXIS_STYLE)
    return fig


def _line(
    name: str, x: ArrayLike, y: ArrayLike, label: str | None = None
) -> go.Scatter:
    style = SERIES_STYLES.get(name, SERIES_STYLES["target"])
    return go.Scatter(
        x=np.asarray(x),
        y=np.asarray(y),
        mode="lines+markers",
        name=label or name,
        line={"color": series_color(name), "dash": style["dash"]},
        marker={"symbol": style["symbol"], "size": 5},
    )


def loss_curves_figure(curves: pd.DataFrame, title: str = "") -> go.Figure:
    """Training and validation loss per epoch of one run."""
    fig = go.Figure(
        [
            _line("train", curves["epoch"], curves["train_loss"], "train loss"),
            _line("val", curves["epoch"], curves["val_loss"], "validation loss"),
        ]
    )
    return _style(fig, "epoch", "loss", title)


def error_curves_figure(
    runs: Mapping[str, pd.DataFrame],
    column: str = "train_error",
    y_title: str = "training error",
    title: str = "",
) -> go.Figure:
    """One error curve per run; series names pick the palette style."""
    fig = go.Figure(
        [_line(name, df["epoch"], df[column], name) for name, df in runs.items()]
    )
    return _style(fig, "epoch", y_title, title)


def prediction_trace_figure(
    predictions: pd.DataFrame, unit: str, title: str = ""
) -> go.Figure:
    """Ground truth and prediction over the test snapshots in trajectory order."""
    ordered = predictions.sort_values(["area_id", "timestamp_s"], kind="stable")
    x = np.arange(len(ordered))
    fig = go.Figure(
        [
            _line("target", x, ordered["target"], "measured"),
            _line("prediction", x, ordered["prediction"], "predicted"),
        ]
    )
    return _style(fig, "snapshot", unit, title)


def cosine_histogram_figure(summary: CosineSummary, title: str = "") -> go.Figure:
    edges = np.asarray(summary.edges)
    centers = (edges[:-1] + edges[1:]) / 2
    fig = go.Figure(
        go.Bar(
            x=centers,
            y=np.asarray(summary.counts),
            width=float(edges[1] - edges[0]),
            marker={"color": series_color("prediction")},
            name="samples",
        )
    )
    fig.add_vline(x=summary.mean, line={"color": "#000000", "dash": "dash"})
    fig.add_vline(x=summary.median, line={"color": "#ff0000", "dash": "dot"})
    return _style(fig, "cosine similarity", "count", title)


def aps_overlay_figure(
    target: ArrayLike, prediction: ArrayLike, title: str = ""
) -> go.Figure:
    """Target and predicted APS over the 360 azimuth bins."""
    bins = np.arange(np.asarray(target).shape[-1])
    fig = go.Figure(
        [
            _line("target", bins, target, "measured"),
            _line("prediction", bins, prediction, "predicted"),
        ]
    )
    fig.update_traces(mode="lines")
    return _style(fig, "azimuth [deg]", "normalized power", title)
