"""Clutter removal on channel tensors ``[antenna, subcarrier, symbol]``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, DimensionTooSmall, ValidationError
from .sensing import delay_profile

METHODS = ("none", "reference", "dynamic")


@dataclass(frozen=True)
class ClutterMethod:
    """Which clutter removal to apply.

    ``reference`` needs a tensor ``H_ref`` of the empty scene; ``dynamic``
    uses ``epsilon`` (fraction of the strongest symbol-0 tap).
    """

    kind: str = "none"
    epsilon: float = 0.01
    reference: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in METHODS:
            raise ValidationError(f"unknown clutter method {self.kind!r}", field="kind")
        if self.kind == "dynamic" and not 0.0 < self.epsilon < 1.0:
            raise ValidationError("epsilon must lie in (0, 1)", field="epsilon")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def dynamic(cls, epsilon=0.01):
        return cls("dynamic", epsilon=epsilon)

    @classmethod
    def with_reference(cls, H_ref):
        return cls("reference", reference=np.asarray(H_ref))

    def apply(self, H):
        if self.kind == "none":
            return np.array(H, copy=True)
        if self.kind == "reference":
            if self.reference is None:
                raise ValidationError("reference method needs H_ref", field="reference")
            return remove_reference(H, self.reference)
        return remove_dynamic(H, self.epsilon)


def remove_reference(H, H_ref):
    """Background subtraction ``H - H_ref``."""
    H = np.asarray(H)
    H_ref = np.asarray(H_ref)
    if H.shape != H_ref.shape:
        raise DimensionMismatch(f"H {H.shape} vs H_ref {H_ref.shape}")
    return H - H_ref


def dynamic_mask(H, epsilon):
    """Boolean ``[antenna, tap]`` mask of taps judged static.

    A tap is static when the change of its delay-profile value between the
    first and last symbol is at most ``epsilon`` times the largest
    symbol-0 tap magnitude of that antenna.
    """
    H = np.asarray(H)
    if H.ndim != 3:
        raise DimensionMismatch("expected [antenna, subcarrier, symbol]")
    if H.shape[2] < 2:
        raise DimensionTooSmall("dynamic clutter removal needs >= 2 symbols")
    first = delay_profile(H[:, :, 0], axis=1)
    last = delay_profile(H[:, :, -1], axis=1)
    dh = np.abs(first - last)
    ref = np.max(np.abs(first), axis=1, keepdims=True)
    return dh <= epsilon * ref


def remove_dynamic(H, epsilon=0.01):
    """Zero delay taps whose phase does not move over the frame.

    Per antenna, taps flagged by :func:`dynamic_mask` are zeroed for every
    symbol in the delay domain, then transformed back to subcarriers.
    """
    if not epsilon > 0:
        raise ValidationError("epsilon must be > 0", field="epsilon")
    H = np.asarray(H)
    mask = dynamic_mask(H, epsilon)
    n = H.shape[1]
    prof = delay_profile(H, axis=1)
    prof[np.broadcast_to(mask[:, :, None], prof.shape)] = 0.0
    return np.fft.fft(prof, axis=1) / n
