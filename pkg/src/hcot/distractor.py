"""Distractor handling: perceive, respond, rectify.

Perceiving scores each frame's classification map with a decision confidence
(DC), a peak-to-correlation-energy statistic that collapses when the map has
no single dominant peak (occlusion, clutter). Responding replaces unreliable
model outputs with a constant-velocity Kalman prediction over the state
[cx, cy, area, aspect, vx, vy, va]. Rectifying catches the "confident error"
case, where a look-alike distractor keeps DC high while the box jumps: a
large inter-frame offset combined with a falling DC moving average hands the
frame to the motion filter as well.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .numerics import mat_inv
from .types import BBox, TrackerConfig

__all__ = [
    "decision_confidence",
    "MotionState",
    "KalmanParams",
    "kalman_predict",
    "kalman_update",
    "box_to_obs",
    "obs_to_box",
    "DcHistory",
    "StepResult",
    "DistractorAwareModule",
]

# Constant-velocity transition: positions and area advance by their rates;
# aspect ratio and the rates themselves are fixed points.
TRANSITION = np.array(
    [
        [1, 0, 0, 0, 1, 0, 0],
        [0, 1, 0, 0, 0, 1, 0],
        [0, 0, 1, 0, 0, 0, 1],
        [0, 0, 0, 1, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 0, 1, 0],
        [0, 0, 0, 0, 0, 0, 1],
    ],
    dtype=np.float64,
)

# Observation picks out (cx, cy, area, aspect).
OBSERVATION = np.array(
    [
        [1, 0, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 1, 0, 0, 0],
    ],
    dtype=np.float64,
)


def decision_confidence(cm: np.ndarray, use_mean_denominator: bool = False) -> float:
    """Peak-to-correlation energy of a classification map.

    DC = |max - min|^2 / sum((cm_i - min)^2) over all map values. A constant
    map is defined to score 0 (fully unreliable). With use_mean_denominator
    the sum is replaced by the mean, the conventional APCE form.
    """
    cm = np.asarray(cm, dtype=np.float64)
    if cm.size == 0:
        raise ValueError("decision confidence of an empty map")
    if not np.all(np.isfinite(cm)):
        raise ValueError("classification map contains non-finite values")
    lo = cm.min()
    hi = cm.max()
    dev = cm - lo
    denom = float((dev * dev).sum())
    if denom == 0.0:
        return 0.0
    if use_mean_denominator:
        denom /= cm.size
    return float((hi - lo) ** 2 / denom)


@dataclass(frozen=True)
class MotionState:
    """Kalman state: 7-vector [cx, cy, area, aspect, vx, vy, va] + covariance."""

    s: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.float64)
        e = np.asarray(self.covariance, dtype=np.float64)
        if s.shape != (7,):
            raise ValueError(f"state must be a 7-vector, got shape {s.shape}")
        if e.shape != (7, 7):
            raise ValueError(f"covariance must be 7x7, got shape {e.shape}")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(e))):
            raise ValueError("state contains non-finite values")
        if s[2] <= 0 or s[3] <= 0:
            raise ValueError(f"area and aspect must stay positive, got {s[2]}, {s[3]}")
        if np.abs(e - e.T).max() > 1e-9:
            raise ValueError("covariance is not symmetric")
        if np.diag(e).min() < 0:
            raise ValueError("covariance has a negative diagonal entry")
        s.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "covariance", e)

    @property
    def box(self) -> BBox:
        return obs_to_box(self.s[:4])


@dataclass(frozen=True)
class KalmanParams:
    """Filter matrices: transition f, observation h, noises q/r, injection g/w."""

    f: np.ndarray
    h: np.ndarray
    q: np.ndarray
    r: np.ndarray
    g: np.ndarray
    w: np.ndarray

    @classmethod
    def from_config(cls, cfg: TrackerConfig) -> "KalmanParams":
        return cls.default(cfg.process_noise_diag, cfg.observation_noise_diag)

    @classmethod
    def default(cls, process_diag=(1.0, 1.0, 1.0, 1e-4, 10.0, 10.0, 1.0),
                observation_diag=(1.0, 1.0, 10.0, 1e-2)) -> "KalmanParams":
        return cls(
            f=TRANSITION.copy(),
            h=OBSERVATION.copy(),
            q=np.diag(np.asarray(process_diag, dtype=np.float64)),
            r=np.diag(np.asarray(observation_diag, dtype=np.float64)),
            g=np.zeros((7, 1)),
            w=np.zeros(1),
        )


def kalman_predict(state: MotionState, params: KalmanParams) -> MotionState:
    """Time update: s <- f s + g w, E <- f E f^T + q."""
    s = params.f @ state.s + params.g @ params.w
    e = params.f @ state.covariance @ params.f.T + params.q
    return MotionState(s, (e + e.T) / 2.0)


def kalman_update(state: MotionState, z: np.ndarray, params: KalmanParams) -> MotionState:
    """Measurement update with observation z = (cx, cy, area, aspect).

    Gain k = E h^T (h E h^T + r)^-1; posterior s + k (z - h s) with
    covariance (I - k h) E, symmetrized. Raises if the innovation covariance
    is singular.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (4,):
        raise ValueError(f"observation must be a 4-vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("observation contains non-finite values")
    if z[2] <= 0 or z[3] <= 0:
        raise ValueError("observed area and aspect must be positive")
    e = state.covariance
    innovation_cov = params.h @ e @ params.h.T + params.r
    gain = e @ params.h.T @ mat_inv(innovation_cov)
    s = state.s + gain @ (z - params.h @ state.s)
    e_post = (np.eye(7) - gain @ params.h) @ e
    return MotionState(s, (e_post + e_post.T) / 2.0)


def box_to_obs(box: BBox) -> np.ndarray:
    """Box -> observation vector (cx, cy, area, aspect)."""
    cx, cy = box.center
    return np.array([cx, cy, box.w * box.h, box.w / box.h], dtype=np.float64)


def obs_to_box(z) -> BBox:
    """Observation vector -> box; exact inverse of box_to_obs for w, h > 0."""
    cx, cy, area, aspect = (float(v) for v in np.asarray(z, dtype=np.float64))
    if area <= 0 or aspect <= 0:
        raise ValueError(f"area and aspect must be positive, got {area}, {aspect}")
    w = float(np.sqrt(area * aspect))
    h = float(np.sqrt(area / aspect))
    return BBox.from_center(cx, cy, w, h)


class DcHistory:
    """Ring buffer of (frame_index, dc) pairs with strictly increasing frames."""

    def __init__(self, capacity: int):
        if capacity < 2:
            raise ValueError("history capacity must be >= 2")
        self._buf: deque[tuple[int, float]] = deque(maxlen=capacity)

    def append(self, frame_index: int, dc: float) -> None:
        if self._buf and frame_index <= self._buf[-1][0]:
            raise ValueError(
                f"frame indices must increase: got {frame_index} after {self._buf[-1][0]}"
            )
        self._buf.append((int(frame_index), float(dc)))

    def __len__(self) -> int:
        return len(self._buf)

    def values(self) -> list[float]:
        return [dc for _, dc in self._buf]

    def trend_decreasing(self, window: int) -> bool:
        """True when the mean DC of the last `window` entries is below the
        mean of the `window` entries before them. False until 2*window
        entries exist."""
        if len(self._buf) < 2 * window:
            return False
        vals = self.values()
        recent = np.mean(vals[-window:])
        previous = np.mean(vals[-2 * window : -window])
        return bool(recent < previous)


@dataclass(frozen=True)
class StepResult:
    """Per-frame audit record of one distractor-aware decision."""

    final_box: BBox
    source: str  # "model" | "kalman"
    reason: str  # "nominal" | "low_dc" | "confident_error"
    dc: float
    offset: float


class DistractorAwareModule:
    """Per-sequence stateful perceive/respond/rectify loop.

    One instance per sequence; not thread-safe across sequences. The filter
    time-advances every frame but is measurement-updated only on frames the
    model output is trusted, so occluded spans coast on the motion model.
    """

    def __init__(self, cfg: TrackerConfig, init_box: BBox):
        self.cfg = cfg
        self.params = KalmanParams.from_config(cfg)
        s = np.zeros(7)
        s[:4] = box_to_obs(init_box)
        cov = cfg.initial_covariance_scale * self.params.q
        self.state = MotionState(s, cov)
        self.history = DcHistory(capacity=2 * cfg.rectify_window)
        self.prev_box = init_box

    def step(self, raw_box: BBox, cm: np.ndarray, frame_index: int) -> StepResult:
        cfg = self.cfg
        dc = decision_confidence(cm, cfg.dc_use_mean_denominator)
        self.history.append(frame_index, dc)
        predicted = kalman_predict(self.state, self.params)
        rx, ry = raw_box.center
        px, py = self.prev_box.center
        offset = float(np.hypot(rx - px, ry - py))

        if dc < cfg.dc_threshold:
            source, reason = "kalman", "low_dc"
            final = predicted.box
            self.state = predicted
        elif (
            cfg.rectify_enabled
            and offset > cfg.offset_threshold
            and self.history.trend_decreasing(cfg.rectify_window)
        ):
            source, reason = "kalman", "confident_error"
            final = predicted.box
            self.state = predicted
        else:
            source, reason = "model", "nominal"
            final = raw_box
            self.state = kalman_update(predicted, box_to_obs(raw_box), self.params)

        self.prev_box = final
        return StepResult(final_box=final, source=source, reason=reason, dc=dc, offset=offset)
