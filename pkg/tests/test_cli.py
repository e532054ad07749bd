import json

import numpy as np
import pytest

from smcfuse.cli import (EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_SHAPE, EXIT_USAGE, main,
                         rgb_to_ycbcr, ycbcr_to_rgb)
from smcfuse.netpbm import read_pnm, write_pnm
from smcfuse.synth import make_pair

TINY = ["--set", "width=4", "--set", "state=2", "--set", "experts=2"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def pair(tmp_path):
    a, b = make_pair(np.random.default_rng(0), 16)
    write_pnm(tmp_path / "a.pgm", a)
    write_pnm(tmp_path / "b.pgm", b)
    return tmp_path / "a.pgm", tmp_path / "b.pgm"


def test_scan_dump_goldens(capsys):
    assert run(capsys, "scan-dump", "spatial", 2, 2)[1] == "[0, 1, 2, 3]\n"
    assert json.loads(run(capsys, "scan-dump", "frequency-rotational", 3, 3)[1]) == [0, 2, 3, 1, 6, 8, 5, 4, 7]
    cm = json.loads(run(capsys, "scan-dump", "cross-modal", 2)[1])
    assert cm == [{"modality": 1, "index": 0}, {"modality": 2, "index": 0},
                  {"modality": 1, "index": 1}, {"modality": 2, "index": 1}]


def test_resolved_config_goes_to_stderr(capsys, pair, tmp_path):
    code, out, err = run(capsys, "--seed", 7, "fuse", *pair, tmp_path / "f.pgm", *TINY)
    assert code == EXIT_OK
    assert "seed = 7" in err and "width = 4" in err
    json.loads(out)


def test_fuse_writes_image_and_sidecar(capsys, pair, tmp_path):
    out_path = tmp_path / "f.pgm"
    code, out, _ = run(capsys, "fuse", pair[0], pair[0], out_path, *TINY)
    assert code == EXIT_OK
    fused = read_pnm(out_path)
    assert fused.shape == (1, 16, 16) and fused.min() >= 0 and fused.max() <= 1
    sidecar = json.loads((tmp_path / "f.pgm.json").read_text())
    assert sidecar == json.loads(out)
    assert set(sidecar) >= {"MI", "SF", "AG", "CC", "SCD", "MS_SSIM"}


def test_fused_file_is_pixel_identical_after_reread(capsys, pair, tmp_path):
    run(capsys, "fuse", *pair, tmp_path / "f.pgm", *TINY)
    first = (tmp_path / "f.pgm").read_bytes()
    write_pnm(tmp_path / "g.pgm", read_pnm(tmp_path / "f.pgm"))
    assert (tmp_path / "g.pgm").read_bytes() == first


def test_fuse_is_deterministic(capsys, pair, tmp_path):
    run(capsys, "fuse", *pair, tmp_path / "1.pgm", *TINY)
    run(capsys, "fuse", *pair, tmp_path / "2.pgm", *TINY)
    assert (tmp_path / "1.pgm").read_bytes() == (tmp_path / "2.pgm").read_bytes()


def test_fuse_size_mismatch(capsys, pair, tmp_path):
    write_pnm(tmp_path / "small.pgm", np.zeros((1, 16, 18)))
    code, _, err = run(capsys, "fuse", pair[0], tmp_path / "small.pgm", tmp_path / "f.pgm", *TINY)
    assert code == EXIT_SHAPE and "differ" in err
    assert not (tmp_path / "f.pgm").exists()


def test_fuse_io_errors(capsys, pair, tmp_path):
    assert run(capsys, "fuse", tmp_path / "missing.pgm", pair[1], tmp_path / "f.pgm")[0] == EXIT_IO
    (tmp_path / "junk.pgm").write_bytes(b"GIF89a")
    assert run(capsys, "fuse", tmp_path / "junk.pgm", pair[1], tmp_path / "f.pgm")[0] == EXIT_IO
    (tmp_path / "bad.ckpt").write_bytes(b"not a checkpoint")
    code, _, err = run(capsys, "fuse", *pair, tmp_path / "f.pgm", "--model", tmp_path / "bad.ckpt")
    assert code == EXIT_IO and "malformed" in err


def test_colour_fusion_keeps_chroma(capsys, tmp_path, rng):
    rgb = rng.uniform(0, 1, (3, 16, 16))
    np.testing.assert_allclose(ycbcr_to_rgb(rgb_to_ycbcr(rgb)), rgb, atol=2e-3)
    write_pnm(tmp_path / "a.ppm", rgb)
    write_pnm(tmp_path / "b.ppm", rng.uniform(0, 1, (3, 16, 16)))
    code, _, _ = run(capsys, "fuse", tmp_path / "a.ppm", tmp_path / "b.ppm", tmp_path / "f.ppm", *TINY)
    assert code == EXIT_OK
    assert read_pnm(tmp_path / "f.ppm").shape == (3, 16, 16)


def test_usage_errors(capsys, pair, tmp_path):
    assert run(capsys, "bogus")[0] == EXIT_USAGE
    assert run(capsys, "fuse", *pair, tmp_path / "f.pgm", "--unknown")[0] == EXIT_USAGE
    assert run(capsys, "fuse", *pair, tmp_path / "f.pgm", "--set", "nope=1")[0] == EXIT_USAGE
    assert run(capsys, "fuse", *pair, tmp_path / "f.pgm", "--set", "width")[0] == EXIT_USAGE
    assert run(capsys, "scan-dump", "zigzag", 2)[0] == EXIT_USAGE


def test_evaluate(capsys, pair, tmp_path):
    code, out, _ = run(capsys, "evaluate", pair[0], *pair)
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["source_a"] == str(pair[0])
    write_pnm(tmp_path / "odd.pgm", np.zeros((1, 12, 16)))
    assert run(capsys, "evaluate", tmp_path / "odd.pgm", *pair)[0] == EXIT_SHAPE


def test_synth_is_byte_identical(capsys, tmp_path):
    assert run(capsys, "synth", tmp_path / "x", "--count", 3, "--size", 16)[0] == EXIT_OK
    run(capsys, "synth", tmp_path / "y", "--count", 3, "--size", 16)
    names = sorted(p.name for p in (tmp_path / "x").iterdir())
    assert len(names) == 6
    assert all((tmp_path / "x" / n).read_bytes() == (tmp_path / "y" / n).read_bytes() for n in names)
    assert run(capsys, "synth", tmp_path / "z", "--size", 15)[0] == EXIT_SHAPE


def test_gradcheck_scope_and_negative_control(capsys):
    code, out, _ = run(capsys, "gradcheck", "bscl")
    assert code == EXIT_OK and "L_fcl" in out
    assert run(capsys, "gradcheck", "bscl", "--tolerance", 1e-30)[0] == EXIT_NUMERIC


def train_logs(capsys, tmp_path):
    run(capsys, "synth", tmp_path / "c", "--count", 4, "--size", 16)
    code, out, _ = run(capsys, "train", tmp_path / "c", tmp_path / "o", "--steps", 4, "--holdout", 1,
                       *TINY, "--set", "checkpoint_every=2")
    assert code == EXIT_OK
    return json.loads(out), (tmp_path / "o" / "train_log.jsonl").read_text().splitlines()


def test_train_outputs_and_resume(capsys, tmp_path):
    summary, log = train_logs(capsys, tmp_path)
    assert summary["steps"] == 4 and summary["pairs"] == 1 and "CC" in summary
    assert len(log) == 4 and json.loads(log[0])["step"] == 0
    out = tmp_path / "o"
    assert {"final.ckpt", "heldout_metrics.json", "step_000002.ckpt", "step_000004.ckpt"} <= {
        p.name for p in out.iterdir()}
    # continue from step 2 in a fresh directory and compare with the straight run
    resumed = tmp_path / "r"
    resumed.mkdir()
    (resumed / "train_log.jsonl").write_text("\n".join(log[:2]) + "\n")
    code, _, _ = run(capsys, "train", tmp_path / "c", resumed, "--steps", 2, "--holdout", 1,
                     "--resume", out / "step_000002.ckpt")
    assert code == EXIT_OK
    assert (resumed / "train_log.jsonl").read_text().splitlines() == log
    assert (resumed / "final.ckpt").read_bytes() == (out / "final.ckpt").read_bytes()


def test_train_log_is_deterministic(capsys, tmp_path):
    _, first = train_logs(capsys, tmp_path / "1")
    _, second = train_logs(capsys, tmp_path / "2")
    assert first == second


def test_train_errors(capsys, tmp_path):
    assert run(capsys, "train", tmp_path / "none", tmp_path / "o")[0] == EXIT_IO
    run(capsys, "synth", tmp_path / "c", "--count", 2, "--size", 16)
    assert run(capsys, "train", tmp_path / "c", tmp_path / "o", "--holdout", 2)[0] == EXIT_USAGE


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exit_code(capsys, tmp_path):
    run(capsys, "synth", tmp_path / "c", "--count", 2, "--size", 16)
    code, _, err = run(capsys, "train", tmp_path / "c", tmp_path / "o", "--steps", 3, *TINY,
                       "--set", "lr=1e300")
    assert code == EXIT_NUMERIC and "non-finite" in err
