"""Render level 0, 5 and 9 of every terrain family and print the governing parameter.

Writes PGM images to ``demos_out/terrain`` (or $ATTNLOCO_OUTPUT_DIR/terrain).
"""

import os
from pathlib import Path

import numpy as np

from attnloco.terrain import FAMILIES, TerrainSpec, generate, level_params
from attnloco.terrain.field import to_grayscale, write_pgm

out = Path(os.environ.get("ATTNLOCO_OUTPUT_DIR", "demos_out")) / "terrain"
out.mkdir(parents=True, exist_ok=True)

for family in FAMILIES:
    row = []
    for level in (0, 5, 9):
        field = generate(TerrainSpec(family, level, seed=0))
        write_pgm(out / f"{family}_level{level}.pgm", to_grayscale(field))
        void = 1.0 - field.support.mean()
        params = level_params(family, level)
        row.append(f"L{level}: void {void:4.0%} " + " ".join(f"{k}={v:.3g}" for k, v in params.items()))
    print(f"{family:22s} | " + " | ".join(row))
print(f"images in {out}")
