"""Far-field predictors.

Point defects use the identity deformation.  The anti-plane screw
dislocation uses the sheared elastic field

    u0(x) = F . (x - x_core) + arg(x - x_core) / (2 pi)

with ``arg`` taking values in ``[0, 2 pi)`` so that the jump of ``u0`` sits on
the half-line ``{x_core + (t, 0) : t > 0}`` (the branch cut).  Crossing the
cut from above to below raises ``u0`` by the Burgers vector ``b = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScrewPredictor:
    core: tuple[float, float]
    shear: tuple[float, float] = (0.0, 0.0)
    burgers: float = 1.0

    def u0(self, x):
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.core)
        if np.any(np.all(np.abs(d) < 1e-14, axis=-1)):
            raise ValueError("predictor is singular at the dislocation core")
        angle = np.mod(np.arctan2(d[..., 1], d[..., 0]), 2 * np.pi)
        return d @ np.asarray(self.shear) + self.burgers * angle / (2 * np.pi)

    def crossing(self, xa, xb):
        """Signed crossing of the segments ``xa -> xb`` with the branch cut.

        ``+1`` when the segment passes from above the cut to below it, ``-1``
        for the reverse direction and ``0`` if it misses the cut.
        """
        xa = np.asarray(xa, dtype=float)
        xb = np.asarray(xb, dtype=float)
        cx, cy = self.core
        ya, yb = xa[..., 1] - cy, xb[..., 1] - cy
        straddle = ya * yb < 0
        with np.errstate(invalid="ignore", divide="ignore"):
            t = ya / (ya - yb)
        xcross = xa[..., 0] + np.where(straddle, t, 0.0) * (xb[..., 0] - xa[..., 0])
        hit = straddle & (xcross > cx)
        return np.where(hit, np.sign(ya), 0.0).astype(int)

    def raw_bond_differences(self, xa, xb, za=0.0, zb=0.0):
        """``D(y0 + z)`` with the jump across the cut retained."""
        return self.u0(xb) - self.u0(xa) + np.asarray(zb) - np.asarray(za)

    def elastic_bond_differences(self, xa, xb, za=0.0, zb=0.0):
        """Slip-corrected differences: the raw value minus ``b`` per crossing."""
        return self.raw_bond_differences(xa, xb, za, zb) - self.burgers * self.crossing(xa, xb)

    def cut_triangles(self, points, triangles):
        """Mask of triangles with an edge crossing the branch cut."""
        p = np.asarray(points)[np.asarray(triangles)]
        hit = np.zeros(len(p), dtype=bool)
        for a, b in ((0, 1), (1, 2), (2, 0)):
            hit |= self.crossing(p[:, a], p[:, b]) != 0
        return hit

    def corrected_nodal(self, points, triangles):
        """Per-triangle nodal values of ``u0`` made continuous across the cut.

        Returns an array of shape ``(ntri, 3)``; on triangles cut by the branch
        cut the values below the cut are lowered by ``b``.
        """
        points = np.asarray(points)
        triangles = np.asarray(triangles)
        vals = self.u0(points)[triangles]
        cut = self.cut_triangles(points, triangles)
        below = points[triangles][..., 1] < self.core[1]
        return vals - self.burgers * (cut[:, None] & below)


def elastic_bond_diff(predictor, xa, xb, za=0.0, zb=0.0, corrected=False):
    """Bond difference of ``y0 + z`` from ``xa`` to ``xb``.

    The raw value keeps the Burgers jump, which the periodic potential
    absorbs; ``corrected=True`` returns the slip-corrected value.
    """
    if corrected:
        return predictor.elastic_bond_differences(xa, xb, za, zb)
    return predictor.raw_bond_differences(xa, xb, za, zb)


def screw_u0(x, core, shear=(0.0, 0.0)):
    return ScrewPredictor(tuple(core), tuple(shear)).u0(x)
