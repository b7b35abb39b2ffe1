"""MMSE receive beamforming, per-user SINR and the sum-rate objective.

Every function works on channel matrices with optional leading batch axes,
``H`` of shape (..., M, K). User indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:  # pragma: no cover - package-relative imports
    from .channel import Scenario, channel_matrix
except ImportError:  # pragma: no cover - fallback for direct script execution
    from channel import Scenario, channel_matrix


class DegenerateChannelError(ValueError):
    """Raised when a user's channel is zero and no receive direction exists."""


@dataclass(frozen=True, eq=False)
class BeamformingResult:
    beamformers: np.ndarray
    sinrs: np.ndarray
    rates: np.ndarray
    sum_rate: float


def _check_user(H: np.ndarray, k: int) -> None:
    num_users = H.shape[-1]
    if not 0 <= k < num_users:
        raise IndexError(f"user index {k} out of range for {num_users} users")


def interference_covariances(H: np.ndarray, snr: float) -> np.ndarray:
    """C_k = snr * sum_{i != k} h_i h_i^H + I for every user, shape (..., K, M, M)."""
    H = np.asarray(H, dtype=complex)
    num_antennas, num_users = H.shape[-2:]
    others = 1.0 - np.eye(num_users)
    spread = np.einsum("...mi,ki,...ni->...kmn", H, others, H.conj())
    return snr * spread + np.eye(num_antennas)


def interference_covariance(H: np.ndarray, k: int, snr: float) -> np.ndarray:
    _check_user(H, k)
    return interference_covariances(H, snr)[..., k, :, :]


def mmse_beamformers(H: np.ndarray, snr: float) -> np.ndarray:
    """Unit-norm C_k^{-1} h_k for all users, returned column-wise as (..., M, K)."""
    H = np.asarray(H, dtype=complex)
    covariances = interference_covariances(H, snr)
    # (..., K, M, 1): one right-hand side per user
    targets = np.swapaxes(H, -1, -2)[..., None]
    directions = np.linalg.solve(covariances, targets)[..., 0]
    norms = np.linalg.norm(directions, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise DegenerateChannelError("a user channel is identically zero; the MMSE direction is undefined")
    return np.swapaxes(directions / norms, -1, -2)


def mmse_beamformer(H: np.ndarray, k: int, snr: float) -> np.ndarray:
    _check_user(H, k)
    return mmse_beamformers(H, snr)[..., :, k]


def sinr_values(H: np.ndarray, V: np.ndarray, snr: float) -> np.ndarray:
    """Explicit SINR quotient for column beamformers ``V`` (..., M, K); returns (..., K)."""
    # gains[..., k, i] = v_k^H h_i
    gains = np.abs(np.einsum("...mk,...mi->...ki", np.asarray(V).conj(), H)) ** 2
    signal = np.diagonal(gains, axis1=-2, axis2=-1)
    leakage = gains.sum(axis=-1) - signal
    return snr * signal / (snr * leakage + 1.0)


def user_sinr(H: np.ndarray, v: np.ndarray, k: int, snr: float) -> float:
    _check_user(H, k)
    H = np.asarray(H, dtype=complex)
    gains = np.abs(np.asarray(v).conj() @ H) ** 2
    signal = gains[k]
    leakage = gains.sum() - signal
    return float(snr * signal / (snr * leakage + 1.0))


def sum_rate_batch(positions: np.ndarray, scenario: Scenario) -> np.ndarray:
    """Sum-rate under MMSE beamforming for positions of shape (..., M)."""
    H = channel_matrix(scenario, positions)
    sinrs = sinr_values(H, mmse_beamformers(H, scenario.snr), scenario.snr)
    return np.log2(1.0 + sinrs).sum(axis=-1)


def sum_rate_optimal(positions: np.ndarray, scenario: Scenario) -> BeamformingResult:
    H = channel_matrix(scenario, np.asarray(positions, dtype=float)[None, :])
    V = mmse_beamformers(H, scenario.snr)
    sinrs = sinr_values(H, V, scenario.snr)[0]
    rates = np.log2(1.0 + sinrs)
    return BeamformingResult(beamformers=V[0], sinrs=sinrs, rates=rates, sum_rate=float(rates.sum()))
