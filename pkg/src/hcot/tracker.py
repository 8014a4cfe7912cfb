"""End-to-end tracking loop over a sequence.

Initialization takes the first frame's annotation: the template patch is
cropped once and never updated, and the motion filter is seeded from the box
with zero velocities. Every later frame is processed as crop search window ->
generate response maps -> decode the raw box -> distractor-aware step ->
emit, with the next search window re-centered on the final (corrected) box.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .distractor import DistractorAwareModule, decision_confidence
from .response import decode_box, make_generator
from .types import BBox, HsiCube, SequenceRecord, TrackerConfig, crop_patch

__all__ = ["FrameTrace", "TrackRun", "Tracker", "track_sequence"]


@dataclass(frozen=True)
class FrameTrace:
    """Audit record for one tracked frame."""

    frame: int
    box: BBox
    raw_box: BBox
    dc: float
    offset: float
    source: str
    reason: str


@dataclass
class TrackRun:
    """Result of tracking one sequence: per-frame outputs plus provenance."""

    sequence: str
    generator: str
    config: dict
    traces: list[FrameTrace] = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def boxes(self) -> list[BBox]:
        return [t.box for t in self.traces]


class Tracker:
    """Stateful single-sequence tracker; one instance per sequence."""

    def __init__(self, seq: SequenceRecord, cfg: TrackerConfig):
        if seq.n_frames < 1:
            raise ValueError("sequence has no frames")
        first = seq.frames[0]
        init_box = seq.annotations[0]
        self.cfg = cfg
        self.frame_shape = (first.height, first.width)
        self.template_box_size = (init_box.w, init_box.h)
        self.template = crop_patch(first, init_box, cfg.template_size)
        self.generator = make_generator(cfg)
        self.generator.initialize(self.template)
        self.dam = DistractorAwareModule(cfg, init_box) if cfg.use_dam else None
        self.last_box = init_box
        self.frame_index = 0

    def _search_window(self) -> BBox:
        """Square window around the last box, clamped fully inside the frame."""
        h, w = self.frame_shape
        side = self.cfg.search_scale * max(self.template_box_size)
        side_x = min(side, float(w))
        side_y = min(side, float(h))
        cx, cy = self.last_box.center
        x0 = float(np.clip(cx - side_x / 2.0, 0.0, w - side_x))
        y0 = float(np.clip(cy - side_y / 2.0, 0.0, h - side_y))
        return BBox(x0, y0, side_x, side_y)

    def _clamp_to_frame(self, box: BBox) -> BBox:
        """Keep the box center inside the frame so outputs always intersect it."""
        h, w = self.frame_shape
        cx, cy = box.center
        return BBox.from_center(float(np.clip(cx, 0.0, w)), float(np.clip(cy, 0.0, h)),
                                box.w, box.h)

    def track_frame(self, frame: HsiCube) -> tuple[BBox, FrameTrace]:
        if frame.data.shape[1:] != self.frame_shape:
            raise ValueError("frame geometry differs from the initialization frame")
        self.frame_index += 1
        cfg = self.cfg
        window = self._search_window()
        patch = crop_patch(frame, window, cfg.search_size)
        size_norm = (self.template_box_size[0] / window.w,
                     self.template_box_size[1] / window.h)
        maps = self.generator.respond(patch, size_norm)
        raw_patch = decode_box(maps, cfg.downsample)
        scale_x = window.w / cfg.search_size
        scale_y = window.h / cfg.search_size
        raw_box = BBox(
            window.x + raw_patch.x * scale_x,
            window.y + raw_patch.y * scale_y,
            raw_patch.w * scale_x,
            raw_patch.h * scale_y,
        )

        if self.dam is not None:
            step = self.dam.step(raw_box, maps.cm, self.frame_index)
            final = self._clamp_to_frame(step.final_box)
            trace = FrameTrace(
                frame=self.frame_index, box=final, raw_box=raw_box,
                dc=step.dc, offset=step.offset, source=step.source, reason=step.reason,
            )
        else:
            px, py = self.last_box.center
            rx, ry = raw_box.center
            final = self._clamp_to_frame(raw_box)
            trace = FrameTrace(
                frame=self.frame_index, box=final, raw_box=raw_box,
                dc=decision_confidence(maps.cm, cfg.dc_use_mean_denominator),
                offset=float(np.hypot(rx - px, ry - py)),
                source="model", reason="nominal",
            )
        self.last_box = final
        return final, trace


def track_sequence(seq: SequenceRecord, cfg: TrackerConfig) -> TrackRun:
    """Track frames 2..N from the frame-1 annotation; N-1 outputs."""
    start = time.perf_counter()
    tracker = Tracker(seq, cfg)
    run = TrackRun(sequence=seq.name, generator=tracker.generator.name, config=cfg.to_dict())
    for frame in seq.frames[1:]:
        _, trace = tracker.track_frame(frame)
        run.traces.append(trace)
    run.wall_time_s = time.perf_counter() - start
    return run
