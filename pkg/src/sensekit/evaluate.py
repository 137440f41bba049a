"""Trajectory fitting and evaluation metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .csi import AREA_X, AREA_Y
from .errors import DataError

# x-variance below this fraction of y-variance triggers the vertical-line fit
_VERTICAL_RATIO = 1e-6


@dataclass(frozen=True)
class TrajectoryFit:
    """Least-squares line through predicted (x, y) points.

    Non-degenerate fits use ordinary least squares of y on x; when the x
    spread collapses (vertical paths) the fit is the line x = x_value.
    """

    points: np.ndarray
    slope: float | None
    intercept: float | None
    x_value: float | None
    residuals: np.ndarray

    @property
    def vertical(self) -> bool:
        return self.slope is None

    @property
    def angle_degrees(self) -> float:
        """Direction of the fitted line, in [0, 180)."""
        if self.vertical:
            return 90.0
        return float(np.degrees(np.arctan(self.slope))) % 180.0


def fit_trajectory(points) -> TrajectoryFit:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 2:
        raise DataError(f"need >= 2 (x, y) points, got shape {points.shape}")
    x, y = points[:, 0], points[:, 1]
    var_x, var_y = x.var(), y.var()
    if var_x == 0 and var_y == 0:
        raise DataError("all points identical; no line is defined")
    if var_x < _VERTICAL_RATIO * var_y:
        xv = float(x.mean())
        return TrajectoryFit(points=points, slope=None, intercept=None,
                             x_value=xv, residuals=x - xv)
    slope, intercept = np.polyfit(x, y, 1)
    return TrajectoryFit(points=points, slope=float(slope), intercept=float(intercept),
                         x_value=None, residuals=y - (slope * x + intercept))


@dataclass(frozen=True)
class CoordinateError:
    """Per-axis prediction error; headline figure is the RMSE in cm."""

    rmse: tuple[float, float]
    mse: tuple[float, float]
    mae: tuple[float, float]


def coordinate_mse(predictions, ground_truth) -> CoordinateError:
    pred = np.asarray(predictions, dtype=np.float64)
    true = np.asarray(ground_truth, dtype=np.float64)
    if pred.shape != true.shape:
        raise DataError(f"length mismatch: {pred.shape} vs {true.shape}")
    diff = pred - true
    mse = (diff ** 2).mean(axis=0)
    mae = np.abs(diff).mean(axis=0)
    return CoordinateError(rmse=tuple(np.sqrt(mse)), mse=tuple(mse), mae=tuple(mae))


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    confusion: np.ndarray          # [K, K], rows = true class
    per_class_error: np.ndarray    # [K]
    precision: float               # macro
    recall: float                  # macro
    support: np.ndarray            # [K]
    coordinate_error: CoordinateError | None = None

    def to_dict(self) -> dict:
        d = {
            "accuracy": self.accuracy,
            "precision_macro": self.precision,
            "recall_macro": self.recall,
            "per_class_error": self.per_class_error.tolist(),
            "support": self.support.tolist(),
            "confusion": self.confusion.tolist(),
        }
        if self.coordinate_error is not None:
            ce = self.coordinate_error
            d["coordinate_rmse_cm"] = list(ce.rmse)
            d["coordinate_mse_cm2"] = list(ce.mse)
            d["coordinate_mae_cm"] = list(ce.mae)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def classification_metrics(pred_labels, true_labels, num_classes: int,
                           ) -> MetricsReport:
    pred = np.asarray(pred_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape or pred.size == 0:
        raise DataError("label sequences must be equal-length and non-empty")
    if pred.min() < 0 or pred.max() >= num_classes or true.min() < 0 \
            or true.max() >= num_classes:
        raise DataError(f"labels outside [0, {num_classes})")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    support = confusion.sum(axis=1)
    diag = np.diag(confusion).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class_error = np.where(support > 0, 1.0 - diag / support, 0.0)
        recall_k = np.where(support > 0, diag / support, 0.0)
        pred_support = confusion.sum(axis=0)
        precision_k = np.where(pred_support > 0, diag / pred_support, 0.0)
    present = support > 0
    predicted = pred_support > 0
    return MetricsReport(
        accuracy=float(diag.sum() / confusion.sum()),
        confusion=confusion,
        per_class_error=per_class_error,
        precision=float(precision_k[predicted].mean()) if predicted.any() else 0.0,
        recall=float(recall_k[present].mean()),
        support=support,
    )


# ---------------------------------------------------------------------------
# Trajectory figure (SVG) and CSV export
# ---------------------------------------------------------------------------

_SVG_W, _SVG_H, _SVG_PAD = 680.0, 500.0, 40.0


def _to_svg(p):
    sx = (_SVG_W - 2 * _SVG_PAD) / AREA_X
    sy = (_SVG_H - 2 * _SVG_PAD) / AREA_Y
    # y axis flipped so the origin sits at the bottom-left corner
    return (_SVG_PAD + p[0] * sx, _SVG_H - _SVG_PAD - p[1] * sy)


def _fit_endpoints(fit: TrajectoryFit) -> tuple[tuple, tuple]:
    if fit.vertical:
        return (fit.x_value, 0.0), (fit.x_value, AREA_Y)
    x0, x1 = fit.points[:, 0].min(), fit.points[:, 0].max()
    return ((x0, fit.slope * x0 + fit.intercept),
            (x1, fit.slope * x1 + fit.intercept))


def trajectory_svg(fit: TrajectoryFit, ground_truth_line=None, title: str = "") -> str:
    """Ground-truth line (solid), predicted points (circles) and the fitted
    line (dashed) over the sensing area."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W:.0f}" '
        f'height="{_SVG_H:.0f}" viewBox="0 0 {_SVG_W:.0f} {_SVG_H:.0f}">',
        f'<rect x="{_SVG_PAD}" y="{_SVG_PAD}" width="{_SVG_W - 2 * _SVG_PAD}" '
        f'height="{_SVG_H - 2 * _SVG_PAD}" fill="none" stroke="black"/>',
    ]
    if title:
        parts.append(f'<text x="{_SVG_W / 2}" y="24" text-anchor="middle" '
                     f'font-family="sans-serif">{title}</text>')
    if ground_truth_line is not None:
        (a, b) = ground_truth_line
        (x0, y0), (x1, y1) = _to_svg(a), _to_svg(b)
        parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
                     f'stroke="blue" stroke-width="2"/>')
    for p in fit.points:
        (cx, cy) = _to_svg(p)
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="none" '
                     f'stroke="gray"/>')
    (a, b) = _fit_endpoints(fit)
    (x0, y0), (x1, y1) = _to_svg(a), _to_svg(b)
    parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
                 f'stroke="red" stroke-width="2" stroke-dasharray="8,5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def trajectory_csv(fit: TrajectoryFit) -> str:
    lines = ["x_cm,y_cm,residual_cm"]
    for p, r in zip(fit.points, fit.residuals):
        lines.append(f"{p[0]:.6f},{p[1]:.6f},{r:.6f}")
    if fit.vertical:
        lines.append(f"# fit: vertical x = {fit.x_value:.6f}")
    else:
        lines.append(f"# fit: y = {fit.slope:.6f} * x + {fit.intercept:.6f}")
    return "\n".join(lines) + "\n"
