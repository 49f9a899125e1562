"""
Lattice Green's function and discrete divergence form
=====================================================

Tabulate differences of the homogeneous-lattice Green's function by
Brillouin-zone quadrature, compare with a periodic FFT solve, then write a
mean-zero field as a discrete divergence.
"""

import numpy as np

from latticebc.checks import dipole_field
from latticebc.greens import LatticeGreens, divergence, divergence_form, second_difference_decay, torus_difference, torus_greens
from latticebc.lattice import hexagon_coords

greens = LatticeGreens()
pts = hexagon_coords(6)
tab = greens.first_difference(pts, (1, 0))
print("quadrature level", tab.level, "converged", tab.converged)

# a large torus approximates the infinite lattice well away from its images
g = torus_greens(256)
print("max |quadrature - torus| =", np.max(np.abs(tab.values - torus_difference(g, pts, (1, 0)))))

slope, radii, amp, _ = second_difference_decay(greens)
print(f"second differences decay like r^{slope:+.2f}")

# divergence form of a dipole-like field with |f| ~ |n|^-4
f = dipole_field(81)
h, history = divergence_form(f, p=4)
print("identity error", np.max(np.abs(divergence(h) - f)))
print("seminorm of the iterates", ["%.1e" % v for v in history[:5]])
