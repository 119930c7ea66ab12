"""
Exhaustion and infinite families of plates
==========================================

Capacity is continuous along increasing sequences of plates.  We watch it
grow with a ball's radius, then look at rows of unit spheres placed at
(4k, 0, 0): with equal masses the capacity decays toward zero, while with
masses 1/k^2 the series sum a_k^2 / C(A_k) converges and the capacity
settles at a positive value.
"""

from condcap import BallVolume, PlateSpec, exhaustion_sequence, shell_row_family
from condcap.capacity import exhaustion_study, family_positivity_study
from condcap.solver import SolveOptions

opts = SolveOptions(gap_tolerance=1e-10)

# %%
# A ball of radius 1 grown from radius 0.5.  The Newtonian capacity of a ball
# equals its radius.
levels = [0.5, 0.75, 1.0]
seq = exhaustion_sequence([PlateSpec(1, 1, BallVolume((0, 0, 0), 1.0), 400)], levels=levels, mode="radius")
table = exhaustion_study(seq, opts=opts, levels=levels)
print(table.columns)
for row in table.rows:
    print(row)

# %%
# Equal masses: partial sums of a_k^2 / C(A_k) diverge and 1/cap follows them.
unit = family_positivity_study(shell_row_family(points=100), range(1, 9), opts=opts)
for N, cap, psum, *_ in unit.rows:
    print(f"N = {N}:  cap = {cap:.4f}   1/cap = {1 / cap:.3f}   partial sum = {psum:.3f}")

# %%
# Masses 1/k^2: the capacity stabilizes.
sq = family_positivity_study(shell_row_family(points=100, mass_rule=lambda k: 1.0 / k ** 2), range(1, 9), opts=opts)
for N, cap, psum, rel, _ in sq.rows:
    print(f"N = {N}:  cap = {cap:.5f}   relative change = {rel:.2e}")
