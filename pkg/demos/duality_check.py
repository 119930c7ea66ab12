"""
Primal and dual views of the same capacity
==========================================

The minimizer lambda lives at plate masses a; gamma = cap * lambda is the
capacitary distribution.  Every feasible primal measure mu (plate masses a)
pairs with gamma to at least 1, and gamma's energy equals cap.  Here we test
that on random feasible measures and show the scaling identities.
"""

import numpy as np

from condcap import PlateSpec, SphereShell, discretize, solve_capacity, solve_min_energy
from condcap.measures import CondenserMeasure, flatten
from condcap.solver import SolveOptions

c = discretize([PlateSpec(1, 1, SphereShell((0, 0, 0), 1.0), 300, 1.0),
                PlateSpec(2, -1, SphereShell((0, 0, 0), 2.0), 300, 1.0)])
rep, res, K = solve_capacity(c, opts=SolveOptions(gap_tolerance=1e-10))
omega = flatten(c, rep.gamma)
print("cap =", rep.cap, "  ||gamma||^2 =", omega @ K.entries @ omega)

# %%
for t in rep.duality.tests[:5]:
    print(f"seed {t['seed']}: pairing {t['pairing']:.6f} <= {t['cauchy_schwarz_product']:.6f}")

# %%
# A uniform primal is almost optimal on concentric spheres.
mu = flatten(c, CondenserMeasure.uniform(c))
print("uniform pairing:", omega @ K.entries @ mu)

# %%
# Doubling the masses divides cap by 4 and doubles the minimizer.
res2 = solve_min_energy(c.with_masses(2 * c.masses), K, SolveOptions(gap_tolerance=1e-10))
print("cap(2a) * 4 / cap(a) =", 4 / res2.minimal_energy / rep.cap)
print("max |lambda(2a) - 2 lambda(a)| =", np.abs(res2.minimizer.concat() - 2 * res.minimizer.concat()).max())
