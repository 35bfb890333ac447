"""Static figures of a run: W and A heatmaps, the reconstruction gallery and the delta chart."""

import logging
from pathlib import Path

import numpy as np
import pandas as pd
import plotly.graph_objects as go
from PIL import Image

logger = logging.getLogger(__name__)

HEATMAP_CELL = 24
_WHITE = np.array([255.0, 255.0, 255.0])
_RED = np.array([178.0, 24.0, 43.0])
_BLUE = np.array([33.0, 102.0, 172.0])


def weight_frames(W, A, factor_names):
    """
    Tabular views of the trained weights.

    Returns:
        tuple[pd.DataFrame, pd.DataFrame]: ``W`` as an ``n x 1`` frame indexed by
        concept and ``A`` transposed to ``n x m`` (concept rows, factor columns).
    """
    W = np.asarray(W, dtype=np.float64).reshape(-1)
    A = np.asarray(A, dtype=np.float64)
    concepts = [f"c{i + 1}" for i in range(W.size)]
    w_frame = pd.DataFrame({"weight": W}, index=pd.Index(concepts, name="concept"))
    a_frame = pd.DataFrame(A.T, index=pd.Index(concepts, name="concept"), columns=list(factor_names))
    return w_frame, a_frame


def _heatmap(frame, title):
    figure = go.Figure(
        go.Heatmap(
            z=frame.to_numpy(),
            x=list(frame.columns),
            y=list(frame.index),
            colorscale="RdBu",
            zmid=0.0,
            text=np.round(frame.to_numpy(), 2),
            texttemplate="%{text}",
        )
    )
    figure.update_layout(title=title, yaxis={"autorange": "reversed"})
    return figure


def _heatmap_png(frame, path, cell=HEATMAP_CELL):
    """Draw a frame as a diverging grid scaled by its largest magnitude: positive red, negative blue."""
    values = frame.to_numpy(dtype=np.float64)
    peak = np.abs(values).max() if values.size else 0.0
    t = (values / peak if peak > 0 else np.zeros_like(values))[..., None]
    rgb = np.where(t >= 0, _WHITE + t * (_RED - _WHITE), _WHITE - t * (_BLUE - _WHITE))
    pixels = np.repeat(np.repeat(rgb.round().astype(np.uint8), cell, axis=0), cell, axis=1)
    Image.fromarray(pixels).save(path)
    return Path(path)


def write_heatmaps(W, A, factor_names, out_dir):
    """
    Export W (n x 1) and A transposed (n x m) as CSV tables, HTML heatmaps and PNG images.

    Args:
        W (array-like): Predictor weights, one per concept.
        A (array-like): ``m x n`` causal matrix.
        factor_names (list[str]): Names of the m factors, used as A columns.
        out_dir (str | Path): Created if missing.

    Returns:
        Path: ``out_dir``, holding ``W.csv``, ``A.csv``, ``W.html``, ``A.html``,
        ``W.png`` and ``A.png``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    w_frame, a_frame = weight_frames(W, A, factor_names)
    w_frame.to_csv(out_dir / "W.csv")
    a_frame.to_csv(out_dir / "A.csv")
    _heatmap(w_frame, "Predictor weights W").write_html(out_dir / "W.html", include_plotlyjs="cdn")
    _heatmap(a_frame, "Causal matrix A (transposed)").write_html(out_dir / "A.html", include_plotlyjs="cdn")
    _heatmap_png(w_frame, out_dir / "W.png")
    _heatmap_png(a_frame, out_dir / "A.png")
    return out_dir


def write_gallery(originals, reconstructions, path, scale=2):
    """
    Save originals (top row) above their reconstructions (bottom row) as one PNG.

    Args:
        originals (np.ndarray): ``k x H x W x C`` images in [0, 1].
        reconstructions (np.ndarray): Same shape as ``originals``.
        path (str | Path): Output PNG file.
        scale (int): Integer upscaling factor applied to every tile.
    """
    originals = np.asarray(originals, dtype=np.float32)
    reconstructions = np.asarray(reconstructions, dtype=np.float32)
    rows = np.concatenate(
        [np.concatenate(list(originals), axis=1), np.concatenate(list(reconstructions), axis=1)], axis=0
    )
    pixels = (np.clip(rows, 0.0, 1.0) * 255).round().astype(np.uint8)
    if pixels.shape[-1] == 1:
        image = Image.fromarray(pixels[..., 0])
    else:
        image = Image.fromarray(pixels)
    if scale > 1:
        image = image.resize((image.width * scale, image.height * scale), Image.Resampling.NEAREST)
    image.save(path)
    return Path(path)


def write_delta_chart(frame, path):
    """Accuracy and MIC score against delta, one line pair per condition."""
    figure = go.Figure()
    for condition, group in frame.groupby("condition"):
        group = group.sort_values("delta")
        for metric in ("accuracy", "mic_score"):
            figure.add_trace(
                go.Scatter(
                    x=group["delta"],
                    y=group[f"{metric}_mean"],
                    error_y={"type": "data", "array": group[f"{metric}_std"].fillna(0.0)},
                    mode="lines+markers",
                    name=f"{metric} ({condition})",
                )
            )
    figure.update_layout(title="Task accuracy and MIC against delta", xaxis_title="delta", yaxis_title="value")
    figure.write_html(path, include_plotlyjs="cdn")
    logger.info("delta chart written to %s", path)
    return Path(path)
