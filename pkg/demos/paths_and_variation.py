"""Sample fBm, lift it, and look at its p-variation and greedy partition."""
import numpy as np

from fbmsync.paths import TimeGrid, lift_geometric, sample_fbm
from fbmsync.variation import PVar, greedy_times, p_variation

# %% a Young path and a rough one from the same seed
grid = TimeGrid(0.0, 1.0, 1024)
young = sample_fbm(0.7, grid, 1, seed=0)
rough = sample_fbm(0.4, grid, 1, seed=0)
print("endpoints:", young.values[-1, 0], rough.values[-1, 0])

# %% the lift: Chen's relation holds up to round-off
lift = lift_geometric(sample_fbm(0.4, grid, 2, seed=1))
s, u, t = 100, 500, 900
chen = lift.area(s, t) - lift.area(s, u) - lift.area(u, t) \
    - np.outer(lift.base.increment(s, u), lift.base.increment(u, t))
print("Chen residual:", np.abs(chen).max())

# %% p-variation for a few exponents
for p in (1.5, 2.0, 3.0):
    print(f"p = {p}:  young {p_variation(young, p):8.4f}   rough {p_variation(rough, p):8.4f}")

# %% greedy partition: intervals with p-variation at most gamma
flavor = PVar(1 / 0.55)
for gamma in (0.5, 0.25, 0.1):
    part = greedy_times(young, gamma, flavor)
    print(f"gamma = {gamma}: {part.count} intervals, largest block {part.block_values.max():.3f}")
