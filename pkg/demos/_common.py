"""Small helpers shared by the demo scripts."""

import tempfile
from pathlib import Path

import numpy as np

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def out_dir(name):
    """A fresh scratch directory for demo output."""
    return Path(tempfile.mkdtemp(prefix=f"phasedamage-{name}-"))


def ascii_field(values, n, levels=" .:-=+*#%@", lo=0.0, hi=1.0):
    """Render an ``(n+1)**2`` nodal field as rows of characters (top row = top edge)."""
    grid = np.asarray(values).reshape(n + 1, n + 1)[::-1]
    idx = np.clip(((grid - lo) / (hi - lo) * (len(levels) - 1)).round().astype(int),
                  0, len(levels) - 1)
    return "\n".join("".join(levels[i] * 2 for i in row) for row in idx)
