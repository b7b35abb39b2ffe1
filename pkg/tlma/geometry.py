"""Two-layer movable-antenna geometry: layouts, constraints, penalties and displacement.

All lengths are expressed in wavelengths unless an architecture is built with an
explicit ``wavelength``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

WAVELENGTH = 1.0
MAX_SAMPLER_RETRIES = 100

SUBARRAY_SPACING = "subarray_spacing"
SUBARRAY_BOUNDS = "subarray_bounds"
ANTENNA_BOUNDS = "antenna_bounds"
ANTENNA_SPACING = "antenna_spacing"


class LayoutShapeError(ValueError):
    """Raised when array shapes disagree with the architecture."""


class GeometryError(ValueError):
    """Raised when an architecture cannot host its antennas."""


class SamplerError(RuntimeError):
    """Raised when a feasible sampler keeps producing infeasible draws."""


def _hinge(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class ArrayArchitecture:
    num_subarrays: int
    antennas_per_subarray: int
    region_length: float
    subarray_length: float
    wavelength: float = WAVELENGTH

    @classmethod
    def from_alpha(
        cls,
        num_subarrays: int,
        antennas_per_subarray: int,
        region_length: float,
        alpha: float,
        wavelength: float = WAVELENGTH,
    ) -> "ArrayArchitecture":
        subarray_length = alpha * region_length / num_subarrays
        tight = antennas_per_subarray * wavelength / 2
        # snap the array-wise case so the half-wavelength grid stays exactly feasible
        if math.isclose(subarray_length, tight, rel_tol=1e-12, abs_tol=0.0):
            subarray_length = tight
        return cls(num_subarrays, antennas_per_subarray, region_length, subarray_length, wavelength)

    @classmethod
    def array_wise(
        cls,
        num_subarrays: int,
        antennas_per_subarray: int,
        region_length: float,
        wavelength: float = WAVELENGTH,
    ) -> "ArrayArchitecture":
        return cls(
            num_subarrays,
            antennas_per_subarray,
            region_length,
            antennas_per_subarray * wavelength / 2,
            wavelength,
        )

    @property
    def num_antennas(self) -> int:
        return self.num_subarrays * self.antennas_per_subarray

    @property
    def alpha(self) -> float:
        return self.subarray_length * self.num_subarrays / self.region_length

    @property
    def min_alpha(self) -> float:
        return self.num_antennas * self.wavelength / (2 * self.region_length)

    @property
    def is_array_wise(self) -> bool:
        return self.subarray_length == self.antennas_per_subarray * self.wavelength / 2

    def violations(self) -> list[str]:
        problems: list[str] = []
        if self.num_subarrays < 1:
            problems.append(f"num_subarrays must be positive, got {self.num_subarrays}")
        if self.antennas_per_subarray < 1:
            problems.append(f"antennas_per_subarray must be positive, got {self.antennas_per_subarray}")
        if self.region_length <= 0 or self.wavelength <= 0:
            problems.append("region_length and wavelength must be positive")
        if problems:
            return problems
        if self.num_subarrays * self.subarray_length > self.region_length:
            problems.append(
                f"packing: {self.num_subarrays} subarrays of length {self.subarray_length:g} "
                f"exceed the region length {self.region_length:g}"
            )
        if self.subarray_length < self.antennas_per_subarray * self.wavelength / 2:
            problems.append(
                f"hosting: subarray length {self.subarray_length:g} cannot hold "
                f"{self.antennas_per_subarray} antennas at half-wavelength spacing "
                f"(alpha {self.alpha:g} below {self.min_alpha:g})"
            )
        return problems

    def validate(self) -> "ArrayArchitecture":
        problems = self.violations()
        if problems:
            raise GeometryError("; ".join(problems))
        return self


@dataclass(frozen=True, eq=False)
class TwoLayerLayout:
    """Subarray origins ``q`` (length M_S) and per-subarray offsets ``d`` (M_S x M_A)."""

    q: np.ndarray
    d: np.ndarray

    def __post_init__(self) -> None:
        q = np.array(self.q, dtype=float).reshape(-1)
        d = np.array(self.d, dtype=float)
        if d.ndim == 1:
            d = d.reshape(1, -1)
        if d.ndim != 2 or d.shape[0] != q.shape[0]:
            raise LayoutShapeError(f"offsets of shape {d.shape} do not match {q.shape[0]} subarray origins")
        q.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "d", d)

    @property
    def shape(self) -> tuple[int, int]:
        return self.d.shape

    def flatten(self) -> tuple[np.ndarray, np.ndarray]:
        """Return the q-space and d-space coordinate vectors (subarray-major)."""
        return self.q.copy(), self.d.reshape(-1).copy()

    @classmethod
    def unflatten(cls, q: np.ndarray, d_flat: np.ndarray, arch: ArrayArchitecture) -> "TwoLayerLayout":
        q = np.asarray(q, dtype=float)
        d_flat = np.asarray(d_flat, dtype=float)
        if q.shape != (arch.num_subarrays,):
            raise LayoutShapeError(f"expected {arch.num_subarrays} subarray origins, got shape {q.shape}")
        if d_flat.shape != (arch.num_antennas,):
            raise LayoutShapeError(f"expected {arch.num_antennas} offsets, got shape {d_flat.shape}")
        return cls(q, d_flat.reshape(arch.num_subarrays, arch.antennas_per_subarray))

    def to_vector(self) -> np.ndarray:
        return np.concatenate(self.flatten())

    @classmethod
    def from_vector(cls, vector: np.ndarray, arch: ArrayArchitecture) -> "TwoLayerLayout":
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (arch.num_subarrays + arch.num_antennas,):
            raise LayoutShapeError(
                f"expected a joint vector of length {arch.num_subarrays + arch.num_antennas}, got {vector.shape}"
            )
        return cls.unflatten(vector[: arch.num_subarrays], vector[arch.num_subarrays :], arch)

    def to_record(self) -> dict[str, list]:
        return {"q": self.q.tolist(), "d": self.d.tolist()}

    @classmethod
    def from_record(cls, record: dict) -> "TwoLayerLayout":
        return cls(np.asarray(record["q"], dtype=float), np.asarray(record["d"], dtype=float))


class Feasibility(NamedTuple):
    feasible: bool
    violations: tuple[str, ...]


def _check_shape(layout: TwoLayerLayout, arch: ArrayArchitecture) -> None:
    if layout.shape != (arch.num_subarrays, arch.antennas_per_subarray):
        raise LayoutShapeError(
            f"layout of shape {layout.shape} does not match architecture "
            f"({arch.num_subarrays}, {arch.antennas_per_subarray})"
        )


def absolute_positions(layout: TwoLayerLayout, arch: ArrayArchitecture) -> np.ndarray:
    _check_shape(layout, arch)
    return (layout.q[:, None] + layout.d).reshape(-1)


def positions_from_coordinates(q: np.ndarray, d: np.ndarray, arch: ArrayArchitecture) -> np.ndarray:
    """Batched absolute positions: ``q`` is (..., M_S), ``d`` is (..., M) or (..., M_S, M_A)."""
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    tail = (arch.num_subarrays, arch.antennas_per_subarray)
    if d.ndim == q.ndim and d.shape[-1] == arch.num_antennas:
        d = d.reshape(d.shape[:-1] + tail)
    if q.shape[-1] != arch.num_subarrays or d.ndim < 2 or d.shape[-2:] != tail:
        raise LayoutShapeError(f"coordinates {q.shape} / {d.shape} do not match the architecture")
    delta = q[..., :, None] + d
    return delta.reshape(delta.shape[:-2] + (arch.num_antennas,))


def check_feasible(layout: TwoLayerLayout, arch: ArrayArchitecture) -> Feasibility:
    _check_shape(layout, arch)
    q, d = layout.q, layout.d
    half_l = arch.region_length / 2
    quarter = arch.wavelength / 4
    violated: list[str] = []
    if np.any(np.diff(q) < arch.subarray_length):
        violated.append(SUBARRAY_SPACING)
    if np.any(q < -half_l) or np.any(q > half_l - arch.subarray_length):
        violated.append(SUBARRAY_BOUNDS)
    if np.any(d < quarter) or np.any(d > arch.subarray_length - quarter):
        violated.append(ANTENNA_BOUNDS)
    if np.any(np.diff(d, axis=1) < arch.wavelength / 2):
        violated.append(ANTENNA_SPACING)
    return Feasibility(not violated, tuple(violated))


def subarray_penalty(q: np.ndarray, arch: ArrayArchitecture) -> np.ndarray | float:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != arch.num_subarrays:
        raise LayoutShapeError(f"expected {arch.num_subarrays} subarray origins, got {q.shape[-1]}")
    half_l = arch.region_length / 2
    overlap = _hinge(arch.subarray_length - np.diff(q, axis=-1)).sum(axis=-1)
    bounds = (_hinge(-half_l - q) + _hinge(q - (half_l - arch.subarray_length))).sum(axis=-1)
    penalty = overlap + bounds
    return float(penalty) if penalty.ndim == 0 else penalty


def _spacing_penalty(points: np.ndarray, lower: float, upper: float, min_gap: float) -> np.ndarray:
    bounds = (_hinge(points - upper) + _hinge(lower - points)).sum(axis=-1)
    spacing = _hinge(min_gap - np.diff(points, axis=-1)).sum(axis=-1)
    return bounds + spacing


def antenna_penalty(d: np.ndarray, arch: ArrayArchitecture) -> np.ndarray | float:
    """Hinge penalty of the per-subarray offsets; ``d`` is (..., M_S, M_A) or flat (..., M)."""
    d = np.asarray(d, dtype=float)
    tail = (arch.num_subarrays, arch.antennas_per_subarray)
    if d.ndim >= 2 and d.shape[-2:] == tail:
        pass
    elif d.shape[-1] == arch.num_antennas:
        d = d.reshape(d.shape[:-1] + tail)
    else:
        raise LayoutShapeError(f"offsets of shape {d.shape} do not match the architecture {tail}")
    quarter = arch.wavelength / 4
    per_subarray = _spacing_penalty(d, quarter, arch.subarray_length - quarter, arch.wavelength / 2)
    penalty = per_subarray.sum(axis=-1)
    return float(penalty) if penalty.ndim == 0 else penalty


def single_layer_penalty(delta: np.ndarray, region_length: float, wavelength: float = WAVELENGTH) -> np.ndarray | float:
    delta = np.asarray(delta, dtype=float)
    half_l = region_length / 2
    penalty = _spacing_penalty(delta, -half_l, half_l, wavelength / 2)
    return float(penalty) if penalty.ndim == 0 else penalty


def check_single_layer_feasible(delta: np.ndarray, region_length: float, wavelength: float = WAVELENGTH) -> bool:
    delta = np.asarray(delta, dtype=float)
    half_l = region_length / 2
    return bool(
        np.all(delta >= -half_l) and np.all(delta <= half_l) and np.all(np.diff(delta) >= wavelength / 2)
    )


def sum_displacement(initial: TwoLayerLayout, final: TwoLayerLayout) -> tuple[float, float]:
    if initial.shape != final.shape:
        raise LayoutShapeError(f"cannot compare layouts of shape {initial.shape} and {final.shape}")
    subarray_cost = float(np.abs(initial.q - final.q).sum())
    antenna_cost = float(np.abs(initial.d - final.d).sum())
    return subarray_cost, antenna_cost


def position_displacement(initial: np.ndarray, final: np.ndarray) -> float:
    initial = np.asarray(initial, dtype=float)
    final = np.asarray(final, dtype=float)
    if initial.shape != final.shape:
        raise LayoutShapeError(f"cannot compare positions of shape {initial.shape} and {final.shape}")
    return float(np.abs(initial - final).sum())


def _even_points(count: int, lower: float, upper: float) -> np.ndarray:
    if count == 1:
        return np.array([(lower + upper) / 2])
    return np.linspace(lower, upper, count)


def offset_grid(arch: ArrayArchitecture) -> np.ndarray:
    """The half-wavelength offsets lambda/4 + a*lambda/2, the only feasible d in the array-wise case."""
    grid = arch.wavelength / 4 + np.arange(arch.antennas_per_subarray) * arch.wavelength / 2
    return np.tile(grid, (arch.num_subarrays, 1))


def uniform_initial_layout(arch: ArrayArchitecture) -> TwoLayerLayout:
    arch.validate()
    half_l = arch.region_length / 2
    if arch.num_subarrays == 1:
        q = np.array([-arch.subarray_length / 2])
    else:
        q = np.linspace(-half_l, half_l - arch.subarray_length, arch.num_subarrays)
    quarter = arch.wavelength / 4
    if arch.is_array_wise:
        d = offset_grid(arch)
    else:
        row = _even_points(arch.antennas_per_subarray, quarter, arch.subarray_length - quarter)
        d = np.tile(row, (arch.num_subarrays, 1))
    return TwoLayerLayout(q, d)


def uniform_linear_positions(num_antennas: int, wavelength: float = WAVELENGTH) -> np.ndarray:
    """Half-wavelength uniform linear array centered at the origin."""
    return (np.arange(num_antennas) - (num_antennas - 1) / 2) * wavelength / 2


def embed_positions(delta: np.ndarray, arch: ArrayArchitecture) -> Optional[TwoLayerLayout]:
    """Decompose sorted absolute positions into a feasible two-layer layout, or None."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (arch.num_antennas,):
        raise LayoutShapeError(f"expected {arch.num_antennas} positions, got shape {delta.shape}")
    groups = delta.reshape(arch.num_subarrays, arch.antennas_per_subarray)
    quarter = arch.wavelength / 4
    half_l = arch.region_length / 2
    origins: list[float] = []
    previous = -math.inf
    for group in groups:
        origin = max(previous + arch.subarray_length, -half_l, group[-1] - (arch.subarray_length - quarter))
        if origin > group[0] - quarter or origin > half_l - arch.subarray_length:
            return None
        origins.append(origin)
        previous = origin
    q = np.array(origins)
    layout = TwoLayerLayout(q, groups - q[:, None])
    return layout if check_feasible(layout, arch).feasible else None


def sample_spaced_points(
    rng: np.random.Generator,
    count: int,
    lower: float,
    upper: float,
    min_gap: float,
) -> np.ndarray:
    """Draw ``count`` sorted points in [lower, upper] with gaps >= min_gap, uniform over that set."""
    slack = (upper - lower) - (count - 1) * min_gap
    if slack < 0:
        raise GeometryError(f"cannot place {count} points with gap {min_gap:g} in [{lower:g}, {upper:g}]")
    free = np.sort(rng.uniform(0.0, slack, size=count)) if slack > 0 else np.zeros(count)
    return lower + free + np.arange(count) * min_gap


def _retry(draw: Callable[[], np.ndarray], penalty: Callable[[np.ndarray], float], what: str) -> np.ndarray:
    for _ in range(MAX_SAMPLER_RETRIES):
        candidate = draw()
        if penalty(candidate) == 0.0:
            return candidate
    raise SamplerError(f"{what} sampler produced no feasible point in {MAX_SAMPLER_RETRIES} attempts")


def sample_subarray_origins(rng: np.random.Generator, arch: ArrayArchitecture) -> np.ndarray:
    half_l = arch.region_length / 2
    return _retry(
        lambda: sample_spaced_points(
            rng, arch.num_subarrays, -half_l, half_l - arch.subarray_length, arch.subarray_length
        ),
        lambda q: subarray_penalty(q, arch),
        "subarray",
    )


def sample_antenna_offsets(rng: np.random.Generator, arch: ArrayArchitecture) -> np.ndarray:
    """Flat (M,) offsets, each subarray drawn independently."""
    quarter = arch.wavelength / 4

    def draw() -> np.ndarray:
        rows = [
            sample_spaced_points(
                rng, arch.antennas_per_subarray, quarter, arch.subarray_length - quarter, arch.wavelength / 2
            )
            for _ in range(arch.num_subarrays)
        ]
        return np.concatenate(rows)

    return _retry(draw, lambda d: antenna_penalty(d, arch), "antenna")


def group_layout(delta: np.ndarray, arch: ArrayArchitecture) -> TwoLayerLayout:
    """Split positions into consecutive groups of M_A with origins a quarter wavelength before each group.

    Unlike ``embed_positions`` the result need not satisfy the two-layer constraints.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (arch.num_antennas,):
        raise LayoutShapeError(f"expected {arch.num_antennas} positions, got shape {delta.shape}")
    groups = delta.reshape(arch.num_subarrays, arch.antennas_per_subarray)
    q = groups[:, 0] - arch.wavelength / 4
    return TwoLayerLayout(q, groups - q[:, None])
