"""Constant-velocity Kalman filter over (cx, cy, w, h).

State is ``(cx, cy, w, h, vcx, vcy, vw, vh)``; velocities are per frame.
Noise standard deviations scale with the box height, so the filter behaves
the same for near and far players.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import BBox

STD_POSITION = 1.0 / 20
STD_VELOCITY = 1.0 / 160
# A fresh track knows its box but not its motion: inflate the initial
# uncertainty so velocity is learned within a few frames.
INIT_POSITION_SCALE = 2.0
INIT_VELOCITY_SCALE = 40.0

_NDIM = 4
_F = np.eye(2 * _NDIM)
_F[:_NDIM, _NDIM:] = np.eye(_NDIM)
_H = np.eye(_NDIM, 2 * _NDIM)


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        # freeze the arrays so states behave as values
        self.mean.setflags(write=False)
        self.covariance.setflags(write=False)


def kf_initiate(box: BBox, std_position: float = STD_POSITION,
                std_velocity: float = STD_VELOCITY) -> KalmanState:
    cx, cy = box.center
    mean = np.array([cx, cy, box.w, box.h, 0.0, 0.0, 0.0, 0.0])
    std = np.array([INIT_POSITION_SCALE * std_position * box.h] * _NDIM
                   + [INIT_VELOCITY_SCALE * std_velocity * box.h] * _NDIM)
    return KalmanState(mean, np.diag(std ** 2))


def kf_predict(s: KalmanState, std_position: float = STD_POSITION,
               std_velocity: float = STD_VELOCITY) -> KalmanState:
    h = s.mean[3]
    std = np.array([std_position * h] * _NDIM + [std_velocity * h] * _NDIM)
    mean = _F @ s.mean
    cov = _F @ s.covariance @ _F.T + np.diag(std ** 2)
    return KalmanState(mean, 0.5 * (cov + cov.T))


def kf_update(s: KalmanState, z: BBox, std_position: float = STD_POSITION) -> KalmanState:
    """Measurement update with a detection box.

    Uses the Joseph form so the posterior covariance stays symmetric PSD.

    Raises:
        np.linalg.LinAlgError: the innovation covariance is not positive definite.
    """
    cx, cy = z.center
    meas = np.array([cx, cy, z.w, z.h])
    r = np.diag(np.full(_NDIM, (std_position * s.mean[3]) ** 2))
    p = s.covariance
    innov_cov = _H @ p @ _H.T + r
    try:
        factor = scipy.linalg.cho_factor(innov_cov, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise np.linalg.LinAlgError(f"degenerate innovation covariance: {exc}") from exc
    gain = scipy.linalg.cho_solve(factor, (p @ _H.T).T).T
    mean = s.mean + gain @ (meas - _H @ s.mean)
    ikh = np.eye(2 * _NDIM) - gain @ _H
    cov = ikh @ p @ ikh.T + gain @ r @ gain.T
    return KalmanState(mean, 0.5 * (cov + cov.T))


def kf_box(s: KalmanState) -> BBox:
    cx, cy, w, h = (float(v) for v in s.mean[:4])
    if w <= 0 or h <= 0:
        raise ValueError(f"state has non-positive size w={w}, h={h}")
    return BBox.from_center(cx, cy, w, h)
