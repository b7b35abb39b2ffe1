"""Deterministic random streams keyed by (master seed, trial, scheme, PSO call, iteration, particle).

The first four fields are hashed with BLAKE2b into 128 bits of entropy; the
iteration and particle indices become the spawn key of a numpy
``SeedSequence``. Both steps are stable across numpy and Python versions, so a
stream depends only on its key and never on scheduling order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

SCENARIO_SCHEME = "scenario"


def _entropy(master_seed: int, trial: int, scheme: str, call: int) -> int:
    payload = json.dumps([int(master_seed), int(trial), str(scheme), int(call)]).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=16).digest(), "little")


def seed_sequence(
    master_seed: int,
    trial: int,
    scheme: str,
    call: int,
    iteration: int,
    particle: int,
) -> np.random.SeedSequence:
    return np.random.SeedSequence(_entropy(master_seed, trial, scheme, call), spawn_key=(iteration, particle))


def derive_seed(
    master_seed: int,
    trial: int,
    scheme: str,
    call: int = 0,
    iteration: int = 0,
    particle: int = 0,
) -> int:
    """A 128-bit integer identifying the stream, suitable for logging and CSV output."""
    state = seed_sequence(master_seed, trial, scheme, call, iteration, particle).generate_state(4, np.uint32)
    return sum(int(word) << (32 * i) for i, word in enumerate(state))


@dataclass(frozen=True)
class SeedPath:
    """A partially bound stream key; call it with (iteration, particle) to get a generator."""

    master_seed: int
    trial: int = 0
    scheme: str = ""
    call: int = 0

    def for_scheme(self, scheme: str) -> "SeedPath":
        return replace(self, scheme=scheme, call=0)

    def for_call(self, call: int) -> "SeedPath":
        return replace(self, call=call)

    def generator(self, iteration: int = 0, particle: int = 0) -> np.random.Generator:
        return np.random.default_rng(
            seed_sequence(self.master_seed, self.trial, self.scheme, self.call, iteration, particle)
        )

    def __call__(self, iteration: int, particle: int) -> np.random.Generator:
        return self.generator(iteration, particle)

    @property
    def seed(self) -> int:
        return derive_seed(self.master_seed, self.trial, self.scheme, self.call)


def scenario_generator(master_seed: int, trial: int) -> np.random.Generator:
    """Scenario draws depend on the trial only, so every scheme sees the same channel."""
    return SeedPath(master_seed, trial, SCENARIO_SCHEME).generator()
