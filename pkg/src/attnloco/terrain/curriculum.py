"""Per-agent terrain curriculum.

Each agent keeps a terrain family for the whole run and a difficulty level in
``[0, 9]``. Solving a tile moves the agent up one level; at the top level a
solve sends it to a uniformly random level instead. Failing moves it down
one level, clamped at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .generators import FAMILIES, NUM_LEVELS

TOP = NUM_LEVELS - 1


@dataclass
class CurriculumState:
    families: tuple[str, ...]
    family: np.ndarray  # (N,) index into ``families``
    level: np.ndarray  # (N,) int in [0, 9]
    rng: np.random.Generator
    frozen: bool = False  # levels never change (fixed-level experiments)

    def __post_init__(self):
        for fam in self.families:
            if fam not in FAMILIES:
                raise ConfigurationError(f"unknown terrain family {fam!r}")
        self.family = np.asarray(self.family, dtype=np.int64)
        self.level = np.clip(np.asarray(self.level, dtype=np.int64), 0, TOP)

    def __len__(self) -> int:
        return len(self.level)

    def family_name(self, i: int) -> str:
        return self.families[self.family[i]]

    def mean_level(self) -> float:
        return float(self.level.mean())

    def copy(self) -> "CurriculumState":
        rng = np.random.default_rng()
        rng.bit_generator.state = self.rng.bit_generator.state
        return CurriculumState(self.families, self.family.copy(), self.level.copy(), rng, self.frozen)


def init_curriculum(
    n_agents: int,
    families: tuple[str, ...],
    rng: np.random.Generator,
    max_start_level: int = TOP,
    frozen: bool = False,
) -> CurriculumState:
    """Random family per agent and a uniformly random start level in ``[0, max_start_level]``."""
    if not 0 <= max_start_level <= TOP:
        raise ConfigurationError(f"max_start_level must be in [0, {TOP}]")
    family = rng.integers(0, len(families), n_agents)
    level = rng.integers(0, max_start_level + 1, n_agents)
    return CurriculumState(tuple(families), family, level, rng, frozen)


def advance_levels(level: np.ndarray, solved: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """The level rule on bare arrays: up on a solve, down on a failure, random restart from the top."""
    solved = np.asarray(solved, dtype=bool)
    new = level + (2 * solved.astype(np.int64) - 1)
    top = new > TOP  # only a solve at the top level overshoots
    n_top = int(np.count_nonzero(top))
    if n_top:
        new[top] = rng.integers(0, NUM_LEVELS, n_top)
    np.maximum(new, 0, out=new)
    return new


def curriculum_update(state: CurriculumState, solved, agents=None) -> CurriculumState:
    """Apply one outcome per listed agent (all agents when ``agents`` is None).

    Returns a new state; the input is left untouched except that its RNG
    stream is shared (and advanced) with the result.
    """
    solved = np.asarray(solved, dtype=bool)
    idx = np.arange(len(state)) if agents is None else np.asarray(agents, dtype=np.int64)
    if solved.shape != idx.shape:
        raise ConfigurationError(f"{solved.shape[0]} outcomes for {idx.shape[0]} agents")
    level = state.level.copy()
    if not state.frozen and idx.size:
        level[idx] = advance_levels(level[idx], solved, state.rng)
    return CurriculumState(state.families, state.family.copy(), level, state.rng, state.frozen)


def stationary_distribution(num_levels: int = NUM_LEVELS) -> np.ndarray:
    """Always-solving chain: occupancy proportional to ``level + 1``."""
    w = np.arange(1, num_levels + 1, dtype=np.float64)
    return w / w.sum()
