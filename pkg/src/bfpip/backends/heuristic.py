"""Offline smoke-test predictor based on box motion toward the image centre."""

from __future__ import annotations

from ..clipper import ObservationWindow
from ..dataset import PedestrianInstance
from ..errors import MissingAnnotation
from .cache import RawResponse


def centerline_displacement(instance: PedestrianInstance, window: ObservationWindow) -> float:
    """Pixels the box centroid moved toward the vertical centerline over the window."""
    first, last = window.start_frame, window.end_frame
    boxes = []
    for idx in (first, last):
        fa = instance.frame(idx)
        if fa is None or fa.bbox is None:
            raise MissingAnnotation(idx, "bbox")
        boxes.append(fa.bbox)
    if instance.frame_dims is None:
        raise MissingAnnotation(first, "frame_dims")
    mid = instance.frame_dims[0] / 2.0
    c0, c1 = boxes[0].centroid[0], boxes[1].centroid[0]
    return abs(c0 - mid) - abs(c1 - mid)


def heuristic_predict(instance: PedestrianInstance, window: ObservationWindow, threshold: float) -> RawResponse:
    label = "cross" if centerline_displacement(instance, window) >= threshold else "not_cross"
    return RawResponse(f'{{"intention": "{label}"}}', 0.0, "ok", 1)
