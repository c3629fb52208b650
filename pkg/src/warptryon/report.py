"""Result grids (person | cloth | output per row) with a metrics JSON alongside."""
import json
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .imageio import write_image


def _as_array(img):
    if hasattr(img, "detach"):
        img = img.detach().cpu().numpy()
    return np.asarray(img, dtype=np.float32)


def tile_rows(rows):
    if not rows:
        raise ContractViolation("emit_report needs at least one row")
    arrays = [[_as_array(im) for im in row] for row in rows]
    shapes = {im.shape for row in arrays for im in row}
    if len(shapes) != 1:
        raise ContractViolation(f"mixed image resolutions in report: {sorted(shapes)}")
    if any(len(row) != 3 for row in arrays):
        raise ContractViolation("each report row must be (reference, cloth, output)")
    return np.concatenate([np.concatenate(row, axis=2) for row in arrays], axis=1)


def emit_report(rows, out_path, metrics=None):
    """Write the grid PNG to ``out_path`` and ``metrics`` to the same stem + .json."""
    grid = tile_rows(rows)
    out_path = Path(out_path)
    write_image(out_path, grid)
    metrics_path = out_path.with_suffix(".json")
    payload = {"rows": len(rows), **(metrics or {})}
    metrics_path.write_text(json.dumps(payload, indent=2))
    return out_path, metrics_path
