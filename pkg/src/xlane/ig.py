"""Integrated-gradients attribution baseline.

Attribution = (x - x') * mean gradient along the straight path from the
baseline x' to the input, midpoint Riemann sum with a configurable number of
steps. The default baseline is the sentinel "absent traffic" window; a
zero window is kept as an option.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError
from .features import CLASS_NAMES, ObservationWindow, sentinel_window
from .lrp import RelevanceMap
from .model import LnLstmParams, forward_batch, gradient_from_trace

BASELINES = ("sentinel-window", "zero-window")


@dataclass
class IgConfig:
    steps: int = 50
    baseline: str = "sentinel-window"

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")
        if self.baseline not in BASELINES:
            raise ValidationError(f"baseline must be one of {BASELINES}")


def baseline_for(window: ObservationWindow, cfg: IgConfig) -> np.ndarray:
    if cfg.baseline == "zero-window":
        return np.zeros_like(window.frames)
    return sentinel_window(window).frames


def path_attributions(grad_fn, x: np.ndarray, baselines: np.ndarray,
                      steps: int) -> np.ndarray:
    """(x - x') times the midpoint-Riemann mean of grad_fn along the
    straight path from x' to x. grad_fn maps a point batch to gradients of
    the same shape."""
    x = np.asarray(x, dtype=np.float64)
    baselines = np.asarray(baselines, dtype=np.float64)
    diff = x - baselines
    acc = np.zeros_like(x)
    for k in range(steps):
        alpha = (k + 0.5) / steps
        grad = grad_fn(baselines + alpha * diff)
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite gradient on the integration path")
        acc += grad
    return diff * (acc / steps)


def integrated_gradients_batch(x: np.ndarray, baselines: np.ndarray,
                               p: LnLstmParams, classes, steps: int) -> np.ndarray:
    """Batched attributions, (B, 4, 49)."""
    classes = np.asarray(classes, dtype=int)

    def grad_fn(points):
        trace = forward_batch(points, p)
        return gradient_from_trace(trace, p, classes)

    return path_attributions(grad_fn, x, baselines, steps)


def integrated_gradients(window: ObservationWindow, p: LnLstmParams, class_c,
                         cfg: IgConfig = None) -> RelevanceMap:
    """Attribution map of one window for one class."""
    cfg = cfg or IgConfig()
    window.validate()
    c = CLASS_NAMES.index(class_c) if isinstance(class_c, str) else int(class_c)
    values = integrated_gradients_batch(
        window.frames[None], baseline_for(window, cfg)[None], p,
        np.array([c]), cfg.steps)[0]
    return RelevanceMap(values=values, target_class=CLASS_NAMES[c])


def completeness_gap(window: ObservationWindow, p: LnLstmParams, class_c,
                     cfg: IgConfig = None) -> float:
    """|sum of attributions - (f_c(x) - f_c(x'))|, the step-count quality monitor."""
    cfg = cfg or IgConfig()
    c = CLASS_NAMES.index(class_c) if isinstance(class_c, str) else int(class_c)
    rmap = integrated_gradients(window, p, c, cfg)
    x0 = baseline_for(window, cfg)
    pair = np.stack([window.frames, x0])
    logits = forward_batch(pair, p).logits
    return float(abs(rmap.values.sum() - (logits[0, c] - logits[1, c])))
