"""Ready-made analytic scenes (array ATF + spherical-head HRTF on a shared grid)."""

from __future__ import annotations

from dataclasses import dataclass

from .acoustics import (
    RigidSphereArraySpec,
    SphericalHeadHrtfSpec,
    circular_layout,
    rigid_sphere_steering,
    semicircular_layout,
    spherical_head_hrtf,
)
from .core import DirectionGrid, FrequencyGrid, TransferFunctionSet, ring_and_caps_grid


@dataclass(frozen=True)
class Scene:
    grid: FrequencyGrid
    directions: DirectionGrid
    array: RigidSphereArraySpec
    head: SphericalHeadHrtfSpec
    atf: TransferFunctionSet
    hrtf: TransferFunctionSet

    def on(self, directions: DirectionGrid) -> "Scene":
        """Same models evaluated on another direction grid."""
        return build_scene(self.array, self.head, self.grid, directions)


def build_scene(array: RigidSphereArraySpec, head: SphericalHeadHrtfSpec, grid: FrequencyGrid,
                directions: DirectionGrid) -> Scene:
    atf = rigid_sphere_steering(array, grid, directions)
    hrtf = spherical_head_hrtf(head, grid, directions)
    return Scene(grid, directions, array, head, atf, hrtf)


def semicircle_scene(sample_rate: float = 48000.0, fft_size: int = 1024, ring_step: float = 2.0,
                     radius: float = 0.1, mics: int = 6) -> Scene:
    """Six microphones on a horizontal half circle of a rigid sphere, spherical head."""
    array = RigidSphereArraySpec(radius, semicircular_layout(mics))
    return build_scene(array, SphericalHeadHrtfSpec(), FrequencyGrid(sample_rate, fft_size),
                       ring_and_caps_grid(ring_step))


def circle_scene(sample_rate: float = 48000.0, fft_size: int = 1024, ring_step: float = 2.0,
                 radius: float = 0.1, mics: int = 12) -> Scene:
    array = RigidSphereArraySpec(radius, circular_layout(mics))
    return build_scene(array, SphericalHeadHrtfSpec(), FrequencyGrid(sample_rate, fft_size),
                       ring_and_caps_grid(ring_step))
