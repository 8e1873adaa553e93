"""Physical parameters, lattice topology and the drive switch-on protocol.

Everything in this module is immutable after construction and safe to share
across concurrent trajectory workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

GEOMETRIES = ("square-periodic", "square-open", "open-chain", "single-site")


@dataclass(frozen=True)
class ModelParams:
    """Constants of the driven-dissipative Bose-Hubbard model.

    gamma    one-photon loss rate (sets the global time scale, usually 1)
    eta      two-photon loss rate
    u_kerr   Kerr photon-photon interaction energy
    j_hop    hopping strength (divided by the coordination number z in use)
    delta    detuning of half the drive frequency from the cavity resonance
    g_target final two-photon drive amplitude
    """

    gamma: float = 1.0
    eta: float = 0.0
    u_kerr: float = 0.0
    j_hop: float = 0.0
    delta: float = 0.0
    g_target: float = 0.0

    def __post_init__(self):
        values = (self.gamma, self.eta, self.u_kerr, self.j_hop, self.delta,
                  self.g_target)
        if not all(math.isfinite(x) for x in values):
            raise ConfigError(f"model parameters must be finite, got {values}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.g_target < 0:
            raise ConfigError(f"g_target must be >= 0, got {self.g_target}")

    def rate_scale(self) -> float:
        """Largest rate in the problem; used for timestep stiffness warnings."""
        return max(abs(self.delta), self.u_kerr, abs(self.j_hop),
                   self.g_target, self.gamma, self.eta)


@dataclass(frozen=True)
class Lattice:
    """Site graph with symmetric neighbor lists and coordination number z."""

    geometry: str
    n_sites: int
    neighbors: tuple[tuple[int, ...], ...]
    z: int
    length: int | None = None

    def __post_init__(self):
        if len(self.neighbors) != self.n_sites:
            raise ConfigError("neighbor table length does not match n_sites")
        for i, nbrs in enumerate(self.neighbors):
            for j in nbrs:
                if i not in self.neighbors[j]:
                    raise ConfigError(
                        f"neighbor relation not symmetric: {i} -> {j}")

    @property
    def n_bonds(self) -> int:
        return sum(len(nbrs) for nbrs in self.neighbors) // 2

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix (float64)."""
        a = np.zeros((self.n_sites, self.n_sites))
        for i, nbrs in enumerate(self.neighbors):
            a[i, list(nbrs)] = 1.0
        return a


def build_lattice(geometry: str, size: int) -> Lattice:
    """Construct a lattice.

    ``size`` is the linear dimension L for the square geometries and the
    site count N for "open-chain" / "single-site".  Periodic squares need
    L >= 3: wrapping a smaller square would put duplicate edges on the same
    site pair, silently changing the physics, so it is rejected instead.
    The open 2x2 square degenerates to a 4-site ring with z = 2.
    """
    if geometry == "square-periodic":
        if size < 3:
            raise ConfigError(
                "square-periodic needs L >= 3; L < 3 would duplicate "
                "wrap-around bonds (use square-open for a 2x2 plaquette)")
        nbrs = _square_neighbors(size, periodic=True)
        return Lattice(geometry, size * size, nbrs, z=4, length=size)
    if geometry == "square-open":
        if size < 2:
            raise ConfigError("square-open needs L >= 2")
        nbrs = _square_neighbors(size, periodic=False)
        return Lattice(geometry, size * size, nbrs, z=(2 if size == 2 else 4),
                       length=size)
    if geometry == "open-chain":
        if size != 2:
            raise ConfigError("open-chain supports exactly N = 2 (the dimer)")
        return Lattice(geometry, 2, ((1,), (0,)), z=1)
    if geometry == "single-site":
        if size != 1:
            raise ConfigError("single-site means N = 1")
        return Lattice(geometry, 1, ((),), z=1)
    raise ConfigError(f"unknown geometry {geometry!r}; expected one of "
                      f"{GEOMETRIES}")


def _square_neighbors(L, periodic):
    def idx(r, c):
        return (r % L) * L + (c % L)

    nbrs = [set() for _ in range(L * L)]
    for r in range(L):
        for c in range(L):
            here = idx(r, c)
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if not periodic and not (0 <= rr < L and 0 <= cc < L):
                    continue
                there = idx(rr, cc)
                if there != here:
                    nbrs[here].add(there)
    return tuple(tuple(sorted(s)) for s in nbrs)


@dataclass(frozen=True)
class DriveProtocol:
    """Two-photon drive switch-on: linear ramp over t_ramp, then constant.

    The ramp keeps the turn-on slow enough to avoid seeding quench defects;
    t_ramp = 0 or shape "instant" switches the drive on at full strength.
    """

    g_target: float
    t_ramp: float = 10.0
    shape: str = "linear"

    def __post_init__(self):
        if self.shape not in ("linear", "instant"):
            raise ConfigError(f"unknown drive shape {self.shape!r}")
        if self.t_ramp < 0:
            raise ConfigError(f"t_ramp must be >= 0, got {self.t_ramp}")
        if self.g_target < 0:
            raise ConfigError(f"g_target must be >= 0, got {self.g_target}")


def drive_amplitude(protocol: DriveProtocol, t: float) -> float:
    """Drive amplitude G(t); non-decreasing, in [0, g_target]."""
    if protocol.shape == "instant" or protocol.t_ramp == 0.0:
        return protocol.g_target
    return protocol.g_target * min(1.0, t / protocol.t_ramp)
