"""Height fields, procedural terrain families and the level curriculum."""

from .curriculum import CurriculumState, curriculum_update, init_curriculum, stationary_distribution
from .field import VOID_HEIGHT, HeightField, load_heightfield, sample_map_scan, save_heightfield, scan_grid
from .generators import (
    BASE_TERRAINS,
    DEFAULT_RAMPS,
    FAMILIES,
    FINE_TUNING_TERRAINS,
    NUM_LEVELS,
    TerrainSpec,
    build_terrain,
    generate,
    level_params,
    terrain_families,
)
