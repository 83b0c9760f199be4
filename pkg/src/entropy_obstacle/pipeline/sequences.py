"""Smooth approximations f_n of L^1 data, normalised by ||f_n||_1 <= ||f||_1 + 1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mesh import GridFunction, Mesh, integrate, truncate

__all__ = ["SpikeData", "ApproxSequence", "build_sequence", "l1_distance"]


@dataclass(frozen=True)
class SpikeData:
    """Point mass ``mass`` at ``center``, approximated by bumps of width w0 / n."""

    mesh: Mesh
    mass: float = 1.0
    w0: float = 0.5
    center: tuple | None = None

    @property
    def l1_norm(self) -> float:
        return abs(self.mass)

    def center_point(self) -> np.ndarray:
        if self.center is not None:
            return np.asarray(self.center, dtype=float)
        return np.array([0.5 * (a + b) for a, b in self.mesh.extent])


@dataclass(frozen=True)
class ApproxSequence:
    n: int
    f_n: GridFunction
    l1_norm: float


def l1_distance(a: GridFunction, b: GridFunction) -> float:
    return integrate(a.mesh, np.abs(a.values - b.values), "nodes")


def build_sequence(source, kind: str, n: int) -> ApproxSequence:
    """n-th member of a ``TruncateData`` (f_n = T_n f) or ``MollifySpike`` sequence."""
    # local import keeps the config module free of a cycle
    from .config import spike_profile

    if n < 1:
        raise ValueError("sequence index n must be >= 1")
    if kind == "TruncateData":
        if not isinstance(source, GridFunction):
            raise TypeError("TruncateData needs nodal data")
        f_n = truncate(source, float(n))
        limit = integrate(source.mesh, np.abs(source.values), "nodes")
    elif kind == "MollifySpike":
        if not isinstance(source, SpikeData):
            raise TypeError("MollifySpike needs a SpikeData descriptor")
        m = source.mesh
        width = source.w0 / n
        c = source.center_point()
        room = min(min(ci - a, b - ci) for ci, (a, b) in zip(c, m.extent))
        if width >= room:
            raise ValueError(f"bump of width {width:g} around {c.tolist()} leaves the domain")
        f_n = GridFunction(m, spike_profile(m, source.mass, width, c))
        limit = source.l1_norm
    else:
        raise ValueError(f"unknown sequence kind {kind!r}")
    l1 = integrate(f_n.mesh, np.abs(f_n.values), "nodes")
    if not l1 <= limit + 1.0:
        raise AssertionError(f"||f_{n}||_1 = {l1:g} exceeds ||f||_1 + 1 = {limit + 1:g}")
    return ApproxSequence(n=n, f_n=f_n, l1_norm=l1)
