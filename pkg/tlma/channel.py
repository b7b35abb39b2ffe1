"""Far-field multipath channels as functions of antenna positions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCENARIO_SCHEMA_VERSION = 1


class SchemaVersionError(ValueError):
    """Stored record was written under a different schema or for a different system size."""


@dataclass(frozen=True, eq=False)
class Scenario:
    """One channel realization.

    ``angles`` and ``gains`` are (K, N_PA) arrays; ``snr`` is the linear transmit
    SNR P_t / sigma^2 and ``avg_power`` the gain normalization varpi^2.
    """

    angles: np.ndarray
    gains: np.ndarray
    snr: float
    avg_power: float = 1.0

    def __post_init__(self) -> None:
        angles = np.array(self.angles, dtype=float, ndmin=2)
        gains = np.array(self.gains, dtype=complex, ndmin=2)
        if angles.shape != gains.shape:
            raise ValueError(f"angles {angles.shape} and gains {gains.shape} must have the same shape")
        if self.snr <= 0 or self.avg_power <= 0:
            raise ValueError(f"snr and avg_power must be positive, got {self.snr} and {self.avg_power}")
        angles.setflags(write=False)
        gains.setflags(write=False)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "snr", float(self.snr))
        object.__setattr__(self, "avg_power", float(self.avg_power))

    @property
    def num_users(self) -> int:
        return self.angles.shape[0]

    @property
    def num_paths(self) -> int:
        return self.angles.shape[1]

    def to_record(self) -> dict:
        return {
            "schema_version": SCENARIO_SCHEMA_VERSION,
            "num_users": self.num_users,
            "num_paths": self.num_paths,
            "snr": self.snr,
            "avg_power": self.avg_power,
            "angles": self.angles.tolist(),
            "gains": [[[g.real, g.imag] for g in row] for row in self.gains.tolist()],
        }

    @classmethod
    def from_record(cls, record: dict) -> "Scenario":
        version = record.get("schema_version", SCENARIO_SCHEMA_VERSION)
        if version != SCENARIO_SCHEMA_VERSION:
            raise SchemaVersionError(f"scenario schema_version {version} != {SCENARIO_SCHEMA_VERSION}")
        gains = np.array(record["gains"], dtype=float)
        return cls(
            angles=np.asarray(record["angles"], dtype=float),
            gains=gains[..., 0] + 1j * gains[..., 1],
            snr=record["snr"],
            avg_power=record.get("avg_power", 1.0),
        )


def steering_vector(theta: float | np.ndarray, positions: np.ndarray) -> np.ndarray:
    """exp(-j 2 pi delta_m theta) with positions in wavelengths; broadcasts over both inputs."""
    return np.exp(-2j * np.pi * np.multiply.outer(np.asarray(positions, dtype=float), theta))


def channel_matrix(scenario: Scenario, positions: np.ndarray) -> np.ndarray:
    """H with shape (..., M, K) for positions of shape (..., M)."""
    positions = np.asarray(positions, dtype=float)
    # (..., M, K, N)
    responses = steering_vector(scenario.angles, positions)
    return np.einsum("...mkn,kn->...mk", responses, scenario.gains.conj())


def user_channel(scenario: Scenario, k: int, positions: np.ndarray) -> np.ndarray:
    """h_k = sum_n conj(beta_kn) b(theta_kn); ``k`` is 0-based."""
    if not 0 <= k < scenario.num_users:
        raise IndexError(f"user index {k} out of range for {scenario.num_users} users")
    responses = steering_vector(scenario.angles[k], positions)
    return responses @ scenario.gains[k].conj()


def sample_scenario(
    num_users: int,
    num_paths: int,
    avg_power: float,
    snr: float,
    rng: np.random.Generator,
) -> Scenario:
    angles = rng.uniform(-0.5, 0.5, size=(num_users, num_paths))
    scale = np.sqrt(avg_power / (2 * num_paths))
    gains = (rng.standard_normal((num_users, num_paths)) + 1j * rng.standard_normal((num_users, num_paths))) * scale
    return Scenario(angles=angles, gains=gains, snr=snr, avg_power=avg_power)
