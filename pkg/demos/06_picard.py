"""Picard iteration on a short time window.

Each iterate transports the density and the divergence with the velocity
of the previous iterate.  On a short window the iteration contracts; the
script prints the successive sup-norm differences and their ratios.

Run with ``python demos/06_picard.py``.
"""

import numpy as np

from meanvort.elliptic import EllipticOptions
from meanvort.evolution import StepOptions, initial_state, picard_local
from meanvort.fields import Grid2D, ModelParams, make_pinning
from meanvort.presets import cosine_potential, preset_forcing, preset_initial

grid = Grid2D(64, 8.0)
pin = make_pinning(grid, cosine_potential(grid, 0.3))
params = ModelParams(1.0, 0.5, 0.5, "compressible")
omega, zeta = preset_initial(grid, "gaussian", c=1.0, sigma=0.8, zeta_amplitude=0.2)
psi = preset_forcing(grid, "cosine", 0.2, pin)
eopts = EllipticOptions(tol=1e-11)
s0 = initial_state(omega, zeta, pin, params, eopts)

traj, rep = picard_local(s0, pin, psi, params, 0.1, 6, StepOptions(), eopts)
d = np.array(rep.sup_diffs)
for k, value in enumerate(d, start=1):
    ratio = f"{value / d[k - 2]:.3f}" if k > 1 else "-"
    print(f"iterate {k}: sup difference {value:.3e}  ratio {ratio}")
