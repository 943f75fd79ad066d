"""Drift estimation and removal via optical-image cross-correlation.

Each sample carries a structure-only optical image next to its response
image.  The translation between a sample's optical image and one fixed
reference optical image is estimated by normalized cross-correlation with
parabolic sub-pixel refinement, then both images of the sample are shifted
back by the estimate.  Translation-only on purpose: the simulator injects
rigid stage drift, nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .simcore import Dataset, SampleRecord, apply_drift


class RegistrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ShiftEstimate:
    dx: float
    dy: float
    peak_score: float


def _log_parabolic_offset(m1: float, c0: float, p1: float) -> float:
    """Sub-pixel offset of a peak from three samples at -1, 0, +1.

    Fits a parabola to the log of the (positive) correlation values; exact
    for locally Gaussian peaks, which is what blurred spot images produce.
    """
    floor = 1e-12 * max(c0, 1e-300)
    lm, lc, lp = (np.log(max(v, floor)) for v in (m1, c0, p1))
    denom = lm - 2.0 * lc + lp
    if denom >= 0:
        return 0.0
    off = 0.5 * (lm - lp) / denom
    return float(np.clip(off, -0.5, 0.5))


def estimate_shift(reference: np.ndarray, moving: np.ndarray) -> ShiftEstimate:
    """Translation (dx, dy) such that `moving` ~ `reference` shifted by it.

    Cross-correlation of the mean-subtracted, zero-padded images, computed
    via FFT, normalized by the global L2 norms so identical images score
    exactly 1 at (0, 0).
    """
    if reference.shape != moving.shape:
        raise RegistrationError(
            f"image dimensions differ: {reference.shape} vs {moving.shape}")
    ref = reference.astype(np.float64) - float(np.mean(reference))
    mov = moving.astype(np.float64) - float(np.mean(moving))
    nref, nmov = np.linalg.norm(ref), np.linalg.norm(mov)
    if nref == 0.0 or nmov == 0.0:
        raise RegistrationError("constant image: correlation undefined")
    H, W = ref.shape
    fh, fw = 2 * H, 2 * W
    corr = np.fft.irfft2(np.fft.rfft2(mov, (fh, fw))
                         * np.conj(np.fft.rfft2(ref, (fh, fw))), (fh, fw))
    corr /= nref * nmov
    # displacement axes: index s corresponds to shift s (wrapped negatives)
    shifts_y = np.fft.fftfreq(fh, 1.0 / fh).astype(int)
    shifts_x = np.fft.fftfreq(fw, 1.0 / fw).astype(int)
    valid_y = np.abs(shifts_y) <= H // 2
    valid_x = np.abs(shifts_x) <= W // 2
    masked = np.where(np.outer(valid_y, valid_x), corr, -np.inf)
    iy, ix = np.unravel_index(np.argmax(masked), masked.shape)
    peak = corr[iy, ix]
    off_y = _log_parabolic_offset(corr[(iy - 1) % fh, ix], peak, corr[(iy + 1) % fh, ix])
    off_x = _log_parabolic_offset(corr[iy, (ix - 1) % fw], peak, corr[iy, (ix + 1) % fw])
    return ShiftEstimate(dx=float(shifts_x[ix] + off_x),
                         dy=float(shifts_y[iy] + off_y),
                         peak_score=float(peak))


def correct_sample(record: SampleRecord, reference: np.ndarray,
                   fill_response: float = 0.0, fill_optical: float = 0.0) -> SampleRecord:
    """Undo the estimated drift on both images; labels and id are untouched."""
    est = estimate_shift(reference, record.optical)
    response = apply_drift(record.response, -est.dx, -est.dy, fill=fill_response)
    optical = apply_drift(record.optical, -est.dx, -est.dy, fill=fill_optical)
    return replace(record, response=response, optical=optical,
                   applied_shift=(est.dx, est.dy))


def register_dataset(dataset: Dataset, reference: np.ndarray | None = None) -> Dataset:
    """Correct every record against one fixed optical reference.

    The reference defaults to the first record's optical image.  Any record
    whose shift cannot be estimated aborts the whole run with its id.
    """
    if not dataset.records:
        raise RegistrationError("dataset holds no records")
    if reference is None:
        reference = dataset.records[0].optical
    from .simcore import OPTICAL_BACKGROUND_FRACTION
    fill_r = dataset.optics.background_level
    fill_o = OPTICAL_BACKGROUND_FRACTION * dataset.layout.geometry.amplitude
    corrected = []
    for rec in dataset.records:
        try:
            corrected.append(correct_sample(rec, reference,
                                            fill_response=fill_r, fill_optical=fill_o))
        except RegistrationError as e:
            raise RegistrationError(f"record {rec.id}: {e}") from e
    return Dataset(layout=dataset.layout, keymap=dataset.keymap,
                   optics=dataset.optics, scenario=dataset.scenario,
                   records=corrected)
