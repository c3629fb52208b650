import json
import math

import numpy as np
import pytest
import torch
from scipy.ndimage import gaussian_filter

from warptryon.data import sample_triplet
from warptryon.errors import ContractViolation
from warptryon.imageio import write_image
from warptryon.metric import LpipsWeights, lpips, lpips_directory, unit_normalize
from warptryon.objectives import PerceptualExtractor


@pytest.fixture(scope="module")
def extractor():
    return PerceptualExtractor.from_seed(0)


def lpips_loops(a, b, extractor, weights):
    """Per-position python loops in float64 over the extractor's feature maps."""
    total = 0.0
    for fa, fb, w in zip(extractor(a[None]), extractor(b[None]), weights):
        fa, fb = fa[0].double().numpy(), fb[0].double().numpy()
        c, h, wd = fa.shape
        acc = 0.0
        for i in range(h):
            for j in range(wd):
                va, vb = fa[:, i, j], fb[:, i, j]
                na = math.sqrt(float((va ** 2).sum())) + 1e-10
                nb = math.sqrt(float((vb ** 2).sum())) + 1e-10
                acc += sum((w[k] * (va[k] / na - vb[k] / nb)) ** 2 for k in range(c))
        total += acc / (h * wd)
    return total


def test_matches_loop_oracle(extractor):
    gen = torch.Generator().manual_seed(0)
    rng = np.random.default_rng(0)
    a = torch.rand(3, 32, 32, generator=gen) * 2 - 1
    b = torch.rand(3, 32, 32, generator=gen) * 2 - 1
    weights = [rng.uniform(0, 2, c) for c in extractor.channels]
    got = lpips(a, b, extractor, LpipsWeights(weights)).item()
    assert got == pytest.approx(lpips_loops(a, b, extractor, weights), abs=1e-6)
    ones = [np.ones(c) for c in extractor.channels]
    assert lpips(a, b, extractor).item() == pytest.approx(lpips_loops(a, b, extractor, ones), abs=1e-6)


def test_identity_zero_weights_and_symmetry(extractor):
    gen = torch.Generator().manual_seed(1)
    a = torch.rand(2, 3, 64, 64, generator=gen) * 2 - 1
    b = torch.rand(2, 3, 64, 64, generator=gen) * 2 - 1
    assert torch.equal(lpips(a, a, extractor), torch.zeros(2))
    zero = LpipsWeights([np.zeros(c) for c in extractor.channels])
    assert torch.equal(lpips(a, b, extractor, zero), torch.zeros(2))
    d = lpips(a, b, extractor).double()
    assert (d - lpips(b, a, extractor).double()).abs().max() <= 1e-9
    assert (d > 0).all()


def test_unit_normalization():
    f = torch.randn(2, 16, 5, 5)
    f[0, :, 0, 0] = 0
    n = unit_normalize(f).norm(dim=1)
    assert torch.isfinite(n).all()
    mask = f.norm(dim=1) > 1e-10
    assert (n[mask] - 1).abs().max() <= 1e-5
    assert n[0, 0, 0] == 0


def test_weight_checks(extractor):
    with pytest.raises(ContractViolation):
        LpipsWeights([[-1.0]])
    with pytest.raises(ContractViolation):
        lpips(torch.zeros(3, 32, 32), torch.zeros(3, 32, 32), extractor, LpipsWeights.ones((1, 2, 3, 4, 5)))
    with pytest.raises(ContractViolation):
        lpips(torch.zeros(3, 32, 32), torch.zeros(3, 32, 16), extractor)


def test_weights_load_json(tmp_path, extractor):
    path = tmp_path / "w.json"
    path.write_text(json.dumps([[0.5] * c for c in extractor.channels]))
    w = LpipsWeights.load(path)
    w.check(extractor.channels)
    assert float(w.vectors[2][0]) == 0.5


def blur(img, sigma):
    return torch.from_numpy(gaussian_filter(img.numpy(), sigma=(0, sigma, sigma), mode="nearest"))


def test_blur_monotonicity_on_synthetic_images(extractor):
    hits = 0
    for i in range(100):
        x = torch.from_numpy(sample_triplet(123, i).person)
        d1 = lpips(x, blur(x, 0.5), extractor).item()
        d2 = lpips(x, blur(x, 1.5), extractor).item()
        hits += d1 < d2
    assert hits >= 90


def _write_pairs(tmp_path, images_a, images_b):
    da, db = tmp_path / "a", tmp_path / "b"
    for name, img in images_a.items():
        write_image(da / name, img)
    for name, img in images_b.items():
        write_image(db / name, img)
    return da, db


def test_directory_against_itself(tmp_path, extractor):
    imgs = {f"{i}.png": sample_triplet(0, i).person for i in range(3)}
    da, _ = _write_pairs(tmp_path, imgs, {})
    rep = lpips_directory(da, da, extractor)
    assert rep["count"] == 3 and rep["mean"] == 0 and rep["std"] == 0 and rep["errors"] == []


def test_directory_mean_std_arithmetic(tmp_path, extractor):
    a = {f"{i}.png": sample_triplet(0, i).person for i in range(3)}
    b = {f"{i}.png": sample_triplet(1, i).person for i in range(3)}
    da, db = _write_pairs(tmp_path, a, b)
    rep = lpips_directory(da, db, extractor)
    scores = [rep["pairs"][f"{i}.png"] for i in range(3)]
    mean = (scores[0] + scores[1] + scores[2]) / 3
    std = math.sqrt(sum((s - mean) ** 2 for s in scores) / 3)
    assert rep["mean"] == pytest.approx(mean, rel=1e-12)
    assert rep["std"] == pytest.approx(std, rel=1e-9)


def test_directory_reports_missing_and_shape_errors(tmp_path, extractor):
    a = {"x.png": np.zeros((3, 32, 32)), "y.png": np.zeros((3, 32, 32)), "z.png": np.zeros((3, 32, 32))}
    b = {"x.png": np.zeros((3, 32, 32)), "y.png": np.zeros((3, 64, 32))}
    da, db = _write_pairs(tmp_path, a, b)
    rep = lpips_directory(da, db, extractor)
    assert rep["count"] == 1
    kinds = {e["name"]: e["kind"] for e in rep["errors"]}
    assert kinds == {"y.png": "shape", "z.png": "missing"}
    with pytest.raises(FileNotFoundError):
        lpips_directory(tmp_path / "nope", db, extractor)
