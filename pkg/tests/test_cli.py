import json
import subprocess
import sys

import numpy as np
import pytest

from warptryon.cli import checkerboard, main, read_theta_file
from warptryon.data import sample_triplet
from warptryon.errors import ContractViolation
from warptryon.imageio import read_image, write_image, write_mask
from warptryon.tps import default_lattice


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--out-dir", str(out), "--set", "iterations=1", "--set", "batch_size=2",
                 "--set", "dataset_size=2", "--set", "log_interval=0"])
    assert code == 0
    return out / "final.pt"


def test_train_writes_checkpoint_and_config(trained):
    assert trained.is_file()
    assert "lambda_adv = 1.0" in (trained.parent / "config.txt").read_text()
    assert len((trained.parent / "losses.jsonl").read_text().splitlines()) == 1


def test_train_rejects_bad_override(tmp_path, capsys):
    assert main(["train", "--out-dir", str(tmp_path), "--set", "batch_size=zero"]) == 1
    assert main(["train", "--out-dir", str(tmp_path), "--set", "nokey"]) == 1
    assert "contract violation" in capsys.readouterr().err


def test_train_missing_resume_is_io_error(tmp_path):
    assert main(["train", "--out-dir", str(tmp_path), "--resume", str(tmp_path / "none.pt")]) == 2


def write_inputs(tmp_path, size=(64, 64)):
    t = sample_triplet(0, 1, size=size)
    write_image(tmp_path / "person.png", t.person)
    write_image(tmp_path / "cloth.png", t.alt_cloth)
    write_mask(tmp_path / "mask.png", np.where(t.mask, 128, 0).astype(np.uint8))
    return [f"--person={tmp_path / 'person.png'}", f"--cloth={tmp_path / 'cloth.png'}",
            f"--mask={tmp_path / 'mask.png'}"]


def test_infer_deterministic(tmp_path, trained):
    args = write_inputs(tmp_path)
    for name in ("a.png", "b.png"):
        code = main(["infer", "--ckpt", str(trained), *args, "--out", str(tmp_path / name),
                     "--theta-out", str(tmp_path / (name + ".json"))])
        assert code == 0
    a, b = read_image(tmp_path / "a.png"), read_image(tmp_path / "b.png")
    assert a.shape == (3, 64, 64) and np.array_equal(a, b)
    assert len(json.loads((tmp_path / "a.png.json").read_text())) == 50


def test_infer_errors(tmp_path, trained):
    args = write_inputs(tmp_path, size=(32, 32))
    assert main(["infer", "--ckpt", str(trained), *args, "--out", str(tmp_path / "o.png")]) == 1
    bad = tmp_path / "bad.pt"
    bad.write_bytes(b"nope")
    assert main(["infer", "--ckpt", str(bad), *args, "--out", str(tmp_path / "o.png")]) == 2


def test_eval_lpips(tmp_path, trained):
    da, db = tmp_path / "a", tmp_path / "b"
    for i in range(2):
        write_image(da / f"{i}.png", sample_triplet(0, i).person)
        write_image(db / f"{i}.png", sample_triplet(1, i).person)
    out = tmp_path / "report.json"
    assert main(["eval-lpips", "--dir-a", str(da), "--dir-b", str(da), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["mean"] == 0 and rep["std"] == 0 and rep["count"] == 2
    assert main(["eval-lpips", "--dir-a", str(da), "--dir-b", str(db), "--out", str(out),
                 "--ckpt", str(trained)]) == 0
    assert json.loads(out.read_text())["mean"] > 0
    write_image(db / "2.png", np.zeros((3, 64, 64)))
    assert main(["eval-lpips", "--dir-a", str(da), "--dir-b", str(db), "--out", str(out)]) == 2
    (db / "2.png").unlink()
    write_image(db / "1.png", np.zeros((3, 32, 64)))
    assert main(["eval-lpips", "--dir-a", str(da), "--dir-b", str(db), "--out", str(out)]) == 1
    assert json.loads(out.read_text())["count"] == 1


def test_gen_data(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "d"), "--count", "2", "--seed", "4"]) == 0
    lines = (tmp_path / "d" / "manifest.csv").read_text().splitlines()
    assert lines[0] == "person,cloth,mask,view" and len(lines) == 3
    assert np.array_equal(read_image(tmp_path / "d" / "cloth" / "00001.png").shape, (3, 64, 64))


def test_warp_demo(tmp_path):
    theta = default_lattice().points.ravel()
    path = tmp_path / "theta.txt"
    path.write_text(" ".join(str(v) for v in theta))
    assert main(["warp-demo", "--theta-file", str(path), "--out", str(tmp_path / "w.png")]) == 0
    img = read_image(tmp_path / "w.png")
    ref = read_image_roundtrip(checkerboard(256, 192), tmp_path)
    assert img.shape == (3, 256, 192)
    assert np.abs(img - ref).max() <= 1 / 127.5 + 1e-6
    path.write_text(json.dumps([0.0] * 49))
    assert main(["warp-demo", "--theta-file", str(path), "--out", str(tmp_path / "w.png")]) == 1
    assert main(["warp-demo", "--theta-file", str(tmp_path / "missing"), "--out", str(tmp_path / "w.png")]) == 2


def read_image_roundtrip(img, tmp_path):
    write_image(tmp_path / "ref.png", img)
    return read_image(tmp_path / "ref.png")


def test_read_theta_file_formats(tmp_path):
    p = tmp_path / "t.json"
    p.write_text(json.dumps(list(range(50))))
    assert read_theta_file(p)[49] == 49
    p.write_text(",".join(["1"] * 50))
    assert read_theta_file(p).sum() == 50
    p.write_text("nan " * 50)
    with pytest.raises(ContractViolation):
        read_theta_file(p)


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "warptryon", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("train", "infer", "eval-lpips", "gen-data", "warp-demo"):
        assert cmd in res.stdout
