import numpy as np
from pbrgen.cli import main
from pbrgen.groundtruth import encode_normal
from pbrgen.image_io import write_gray8, write_gray16, write_rgb8


def unit_map(rng, h, w):
    v = rng.normal(size=(h, w, 3))
    return v / np.linalg.norm(v, axis=2, keepdims=True)


def test_eval_normals(tmp_path, capsys):
    rng = np.random.default_rng(0)
    pred_dir = tmp_path / "pred"
    gt_dir = tmp_path / "gt"
    pred_dir.mkdir()
    gt_dir.mkdir()
    n = unit_map(rng, 16, 16)
    write_rgb8(pred_dir / "a.png", encode_normal(n))
    write_rgb8(gt_dir / "a.png", encode_normal(n))
    out = tmp_path / "m.csv"
    assert main(["eval-normals", "--pred", str(pred_dir), "--gt", str(gt_dir),
                 "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "mean" in text
    assert out.exists()
    # encode/decode round-trip keeps the error under the quantization bound
    mean_deg = float(out.read_text().splitlines()[1].split(",")[0])
    assert mean_deg < 0.5


def test_eval_seg(tmp_path, capsys):
    rng = np.random.default_rng(1)
    pred_dir = tmp_path / "p"
    gt_dir = tmp_path / "g"
    pred_dir.mkdir()
    gt_dir.mkdir()
    m = rng.integers(1, 4, size=(12, 12)).astype(np.uint16)
    write_gray16(pred_dir / "x.png", m)
    write_gray16(gt_dir / "x.png", m)
    assert main(["eval-seg", "--pred", str(pred_dir), "--gt", str(gt_dir)]) == 0
    assert "mean IoU 1.0000" in capsys.readouterr().out


def test_eval_boundary(tmp_path, capsys):
    rng = np.random.default_rng(2)
    pred_dir = tmp_path / "p"
    gt_dir = tmp_path / "g"
    pred_dir.mkdir()
    gt_dir.mkdir()
    mask = (rng.random((20, 20)) < 0.1).astype(np.uint8) * 255
    write_gray8(pred_dir / "x.png", mask)
    write_gray8(gt_dir / "x.png", mask)
    assert main(["eval-boundary", "--pred", str(pred_dir),
                 "--gt", str(gt_dir)]) == 0
    out = capsys.readouterr().out
    assert "ODS 1.0000" in out and "OIS 1.0000" in out


def test_eval_requires_matching_files(tmp_path):
    (tmp_path / "p").mkdir()
    (tmp_path / "g").mkdir()
    assert main(["eval-normals", "--pred", str(tmp_path / "p"),
                 "--gt", str(tmp_path / "g")]) == 1


def test_bench_kernels_smoke(capsys):
    assert main(["bench-kernels", "--spp", "2", "--width", "12",
                 "--height", "9"]) == 0
    out = capsys.readouterr().out
    assert "backend" in out


def test_bench_integrator_smoke(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    assert main(["bench-integrator", "--spp", "2,4", "--width", "12",
                 "--height", "9", "--out", str(out)]) == 0
    assert out.exists()
    lines = out.read_text().splitlines()
    assert lines[0] == "spp,seconds,variance"
    assert len(lines) == 3
