import json

import numpy as np
import pytest
import torch

from warptryon.errors import ContractViolation
from warptryon.imageio import read_image
from warptryon.report import emit_report, tile_rows


def row(seed, h=16, w=12):
    rng = np.random.default_rng(seed)
    return [rng.uniform(-1, 1, (3, h, w)).astype(np.float32) for _ in range(3)]


@pytest.mark.parametrize("n", [1, 3])
def test_grid_shape(n):
    assert tile_rows([row(i) for i in range(n)]).shape == (3, 16 * n, 36)


def test_tiles_in_order():
    rows = [row(0), row(1)]
    grid = tile_rows(rows)
    assert np.array_equal(grid[:, 16:32, 12:24], rows[1][1])


def test_errors():
    with pytest.raises(ContractViolation):
        tile_rows([])
    with pytest.raises(ContractViolation):
        tile_rows([row(0), row(1, h=32)])
    with pytest.raises(ContractViolation):
        tile_rows([row(0)[:2]])


def test_emit_writes_png_and_metrics(tmp_path):
    rows = [[torch.from_numpy(im) for im in row(i)] for i in range(2)]
    png, js = emit_report(rows, tmp_path / "grid.png", {"lpips": 0.25})
    assert read_image(png).shape == (3, 32, 36)
    assert json.loads(js.read_text()) == {"rows": 2, "lpips": 0.25}
