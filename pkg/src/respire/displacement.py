"""Clutter suppression, target localization and phase-based displacement recovery."""

import csv
import io
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .beamform import RadarImage
from .exceptions import NoTargetError, ParameterError, UndefinedPhaseError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class DisplacementWaveform:
    """Body displacement in millimetres sampled at ``fs_slow``."""

    samples: np.ndarray
    fs_slow: float
    origin_cell: tuple = (np.nan, np.nan)
    lambda_m: float = 3.8e-3

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ParameterError("displacement samples must be 1-D")
        if not np.all(np.isfinite(samples)):
            raise ParameterError("displacement samples must be finite")
        if not self.fs_slow > 0:
            raise ParameterError("fs_slow must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def t(self):
        return np.arange(self.samples.size) / self.fs_slow


@dataclass(frozen=True)
class ClutterConfig:
    """Static clutter removal.

    ``window_T_s=None`` means the full record (only meaningful for
    ``mode="full-record"``).
    """

    window_T_s: float = None
    mode: str = "full-record"

    def __post_init__(self):
        if self.mode not in ("full-record", "sliding"):
            raise ParameterError(f"unknown clutter mode {self.mode!r}")
        if self.window_T_s is not None and not self.window_T_s > 0:
            raise ParameterError("window_T_s must be positive")
        if self.mode == "sliding" and self.window_T_s is None:
            raise ParameterError("sliding mode needs window_T_s")


def remove_clutter(image, cfg=None):
    """Subtract the time average of each cell.

    Full-record mode subtracts the per-cell mean over the whole record.
    Sliding mode subtracts, at each sample, the mean over the trailing window
    of ``window_T_s`` seconds; the first samples use the prefix available.
    """
    cfg = cfg or ClutterConfig()
    data = image.data
    n = data.shape[-1]
    record_s = n / image.fs_slow
    if cfg.window_T_s is not None and cfg.window_T_s > record_s + 1e-12:
        raise ParameterError(
            f"clutter window {cfg.window_T_s} s exceeds record length {record_s} s"
        )

    if cfg.mode == "full-record":
        cleaned = data - data.mean(axis=-1, keepdims=True)
    else:
        width = max(1, int(round(cfg.window_T_s * image.fs_slow)))
        csum = np.cumsum(data, axis=-1)
        csum = np.concatenate([np.zeros(data.shape[:-1] + (1,), csum.dtype), csum], axis=-1)
        stop = np.arange(1, n + 1)
        start = np.maximum(0, stop - width)
        trailing = (csum[..., stop] - csum[..., start]) / (stop - start)
        cleaned = data - trailing
    return replace(image, data=cleaned)


def locate_target(image):
    """Cell with the largest time-integrated power.

    Returns ``((range_index, azimuth_index), (range, azimuth))``. Ties go to
    the smallest range index, then the smallest azimuth index.
    """
    power = np.sum(np.abs(image.data) ** 2, axis=-1)
    peak = power.max()
    if not peak > 0:
        raise NoTargetError("image carries no energy")
    # row-major flat argmax already implements the tie-break order
    ri, ai = np.unravel_index(int(np.argmax(power)), power.shape)
    return (int(ri), int(ai)), (float(image.range_axis[ri]), float(image.azimuth_axis[ai]))


def wrap(phases):
    """Principal value of phases in (-pi, pi]."""
    phases = np.asarray(phases, dtype=np.float64)
    return phases - TWO_PI * np.ceil((phases - np.pi) / TWO_PI)


def unwrap(phases):
    """Continuous-phase reconstruction of a wrapped phase series.

    The first sample is kept; each successive difference is shifted by the
    integer multiple of 2*pi that brings it into (-pi, pi].
    """
    phases = np.asarray(phases, dtype=np.float64)
    if phases.size == 0:
        raise ParameterError("cannot unwrap an empty series")
    steps = np.diff(phases)
    turns = -np.ceil((steps - np.pi) / TWO_PI)
    return phases + TWO_PI * np.concatenate([[0.0], np.cumsum(turns)])


def extract_displacement(image, cell, lambda_m=3.8e-3):
    """``(lambda / 4 pi) * unwrap(phase)`` at one image cell, in millimetres.

    The value is not demeaned. Increasing range gives increasing phase and
    therefore positive displacement.
    """
    ri, ai = cell
    series = image.data[ri, ai, :]
    dead = np.flatnonzero(np.abs(series) == 0)
    if dead.size:
        raise UndefinedPhaseError(dead)
    phase = unwrap(np.angle(series))
    samples = 1e3 * lambda_m / (4.0 * np.pi) * phase
    origin = (float(image.range_axis[ri]), float(image.azimuth_axis[ai]))
    return DisplacementWaveform(samples, image.fs_slow, origin, lambda_m)


def waveform_to_csv(waveform, path=None):
    """Write ``t_s,d_mm`` rows with 9 significant digits; returns the text."""
    buf = io.StringIO()
    buf.write("t_s,d_mm\n")
    for t, d in zip(waveform.t, waveform.samples):
        buf.write(f"{t:.9g},{d:.9g}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def waveform_from_csv(path, lambda_m=3.8e-3):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t_s", "d_mm"]:
            raise ParameterError(f"unexpected waveform header {header}")
        rows = np.array([[float(a), float(b)] for a, b in reader])
    if rows.shape[0] < 2:
        raise ParameterError("waveform CSV needs at least two rows")
    fs = 1.0 / np.median(np.diff(rows[:, 0]))
    return DisplacementWaveform(rows[:, 1], float(np.round(fs, 9)), lambda_m=lambda_m)


class DisplacementExtractor(TransformerMixin, BaseEstimator):
    """Radar images to displacement waveforms.

    The target cell is located on the clutter-suppressed image. The phase is
    read from the image selected by ``phase_source``: ``"raw"`` uses the
    beamformed image before clutter removal, ``"clutter_removed"`` uses the
    suppressed one. Mean subtraction pulls the target's own circular I/Q
    trajectory off-centre, so ``"clutter_removed"`` distorts d(t) whenever the
    phase excursion is below a few radians.

    A located cell whose integrated power is below ``detection_ratio`` times
    the median cell power is treated as no target at all.
    """

    def __init__(self, clutter_mode="full-record", clutter_window_s=None,
                 phase_source="raw", lambda_m=3.8e-3, detection_ratio=10.0):
        self.clutter_mode = clutter_mode
        self.clutter_window_s = clutter_window_s
        self.phase_source = phase_source
        self.lambda_m = lambda_m
        self.detection_ratio = detection_ratio

    def fit(self, X=None, y=None):
        if self.phase_source not in ("raw", "clutter_removed"):
            raise ParameterError(f"unknown phase_source {self.phase_source!r}")
        self.clutter_config_ = ClutterConfig(self.clutter_window_s, self.clutter_mode)
        return self

    def extract_one(self, image):
        if not hasattr(self, "clutter_config_"):
            self.fit()
        cleaned = remove_clutter(image, self.clutter_config_)
        cell, _ = locate_target(cleaned)
        if self.detection_ratio:
            power = np.sum(np.abs(cleaned.data) ** 2, axis=-1)
            if power[cell] < self.detection_ratio * np.median(power):
                raise NoTargetError(
                    f"peak cell power is below {self.detection_ratio}x the median cell power"
                )
        source = image if self.phase_source == "raw" else cleaned
        return extract_displacement(source, cell, self.lambda_m)

    def transform(self, X):
        return [self.extract_one(image) for image in X]


__all__ = [
    "ClutterConfig",
    "DisplacementExtractor",
    "DisplacementWaveform",
    "RadarImage",
    "extract_displacement",
    "locate_target",
    "remove_clutter",
    "unwrap",
    "wrap",
    "waveform_from_csv",
    "waveform_to_csv",
]
