"""Frame-to-model-input preprocessing: overlapping windows rendered as
S x S x 3 tensors of amplitude, phase, and interleaved I/Q rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .modem import FRAME_LEN, IqFrame


@dataclass(frozen=True)
class WindowPlan:
    window_len: int = 224
    stride: int = 112
    count: int = 8

    def validate(self, frame_len: int = FRAME_LEN):
        if self.window_len < 1 or self.stride < 1 or self.count < 1:
            raise ConfigurationError(f"window plan fields must be positive: {self}")
        last = self.window_len + (self.count - 1) * self.stride
        if last > frame_len:
            raise ConfigurationError(
                f"window plan overflows frame: {self.window_len} + {self.count - 1}*{self.stride}"
                f" = {last} > {frame_len}")

    def offsets(self) -> np.ndarray:
        return np.arange(self.count) * self.stride


@dataclass(frozen=True)
class FeatureTensor:
    """One S x S x 3 window rendering; channels: 0=amplitude, 1=phase, 2=I/Q rows."""

    data: np.ndarray
    source_window: int


def segment(frame: IqFrame, plan: WindowPlan) -> list:
    """Split a frame into `plan.count` windows; trailing samples are discarded."""
    plan.validate(len(frame.samples))
    return [frame.samples[off:off + plan.window_len] for off in plan.offsets()]


def amplitude(window: np.ndarray) -> np.ndarray:
    """Envelope sqrt(I^2 + Q^2) per sample."""
    return np.abs(window)


def phase(window: np.ndarray) -> np.ndarray:
    """Quadrant-aware instantaneous phase atan2(Q, I) in [-pi, pi]; phase(0, 0) = 0."""
    return np.arctan2(window.imag, window.real)


def tensorize(window: np.ndarray, side: int) -> FeatureTensor:
    """Render one window as an S x S x 3 tensor.

    Channels 0 and 1 tile the amplitude and phase vectors as every row
    (columns are the time axis). Channel 2 alternates I rows (even row
    indices) and Q rows (odd), packing both components at full resolution.
    """
    if len(window) != side:
        raise ConfigurationError(f"window length {len(window)} != tensor side {side}")
    data = np.empty((side, side, 3))
    data[:, :, 0] = amplitude(window)[None, :]
    data[:, :, 1] = phase(window)[None, :]
    data[0::2, :, 2] = window.real[None, :]
    data[1::2, :, 2] = window.imag[None, :]
    return FeatureTensor(data=data, source_window=-1)


def frame_to_input(frame: IqFrame, plan: WindowPlan = WindowPlan(), side: int | None = None) -> list:
    """segment -> (amplitude, phase, I/Q) -> tensorize, in window order."""
    side = plan.window_len if side is None else side
    tensors = []
    for k, window in enumerate(segment(frame, plan)):
        t = tensorize(window, side)
        tensors.append(FeatureTensor(data=t.data, source_window=k))
    return tensors


def stack_input(tensors) -> np.ndarray:
    """(T, 3, S, S) channel-first array for the network, in window order."""
    return np.stack([t.data.transpose(2, 0, 1) for t in tensors])
