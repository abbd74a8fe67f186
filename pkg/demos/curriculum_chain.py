"""Follow the level curriculum for agents that solve with a fixed probability.

An agent that always solves climbs to the top and is then reshuffled to a
uniform level, so it occupies level k with probability proportional to k + 1.
Agents that fail sometimes settle lower.
"""

import numpy as np

from attnloco.terrain import NUM_LEVELS, stationary_distribution
from attnloco.terrain.curriculum import advance_levels

rng = np.random.default_rng(0)
agents, steps = 1000, 20000
for p_solve in (1.0, 0.9, 0.7, 0.5):
    level = rng.integers(0, NUM_LEVELS, agents)
    total = 0.0
    for t in range(steps):
        level = advance_levels(level, rng.random(agents) < p_solve, rng)
        if t >= steps // 10:
            total += level.mean()
    print(f"solve prob {p_solve:.1f}: mean level {total / (steps - steps // 10):.2f}")
expected = (np.arange(NUM_LEVELS) * stationary_distribution()).sum()
print(f"closed form for always-solving agents: {expected:.2f}")
