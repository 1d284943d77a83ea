import csv
import hashlib
import shutil
from pathlib import Path

import numpy as np
import pytest

from thermoface.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, QUALITY_COLUMNS, main
from thermoface.enhance import enhance
from thermoface.formats import read_image, write_image
from thermoface.image import Image
from thermoface.pipeline import DATA

CORPUS = DATA / "corpus"


@pytest.fixture
def faces(tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    for i in (1, 2, 3):
        shutil.copy(CORPUS / f"face{i}.pgm", src / f"face{i}.pgm")
    return src


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_enhance_directory(faces, tmp_path, capsys):
    (faces / "notes.txt").write_text("not an image")
    out = tmp_path / "out"
    assert main(["enhance", str(faces), "--out", str(out), "--strip"]) == EXIT_OK
    assert "3 processed, 0 failed" in capsys.readouterr().out
    refined = sorted(p.name for p in out.glob("*_refined.pgm"))
    assert refined == ["face1_refined.pgm", "face2_refined.pgm", "face3_refined.pgm"]
    strip = read_image(out / "face1_strip.png")
    assert strip.width == 2 * read_image(faces / "face1.pgm").width


def test_enhance_empty_directory(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["enhance", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert "0 processed" in capsys.readouterr().out


def test_enhance_corrupt_file(faces, tmp_path, capsys):
    (faces / "broken.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x01")
    code = main(["enhance", str(faces), "--out", str(tmp_path / "o")])
    cap = capsys.readouterr()
    assert code == EXIT_INPUT
    assert "3 processed, 1 failed" in cap.out
    assert "broken.pgm" in cap.err
    assert not (tmp_path / "o" / "broken_refined.pgm").exists()


def test_enhance_matches_library(faces, tmp_path):
    main(["enhance", str(faces / "face2.pgm"), "--out", str(tmp_path / "o")])
    got = read_image(tmp_path / "o" / "face2_refined.pgm").data
    want = enhance(read_image(faces / "face2.pgm")).data
    assert np.abs(got - want).max() <= 0.5 / 255 + 1e-12


def test_quality_bundled_corpus(tmp_path, capsys):
    assert main(["quality", str(CORPUS), "--out", str(tmp_path)]) == EXIT_OK
    table = rows(tmp_path / "quality.csv")
    assert len(table) == 3
    assert list(table[0]) == QUALITY_COLUMNS
    assert all(r["niqe_improved"] == "true" and r["brisque_improved"] == "true" for r in table)
    assert capsys.readouterr().out == (tmp_path / "quality.csv").read_text()


def test_quality_self_comparison(tmp_path):
    f = str(CORPUS / "face1.pgm")
    assert main(["quality", "--pair", f, f, "--out", str(tmp_path)]) == EXIT_OK
    (r,) = rows(tmp_path / "quality.csv")
    assert r["niqe_original"] == r["niqe_processed"]
    assert r["brisque_original"] == r["brisque_processed"]
    assert r["niqe_improved"] == r["brisque_improved"] == "false"


def test_quality_empty_has_header(tmp_path):
    assert main(["quality", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "quality.csv").read_text() == ",".join(QUALITY_COLUMNS) + "\n"


def test_quality_missing_member(faces, tmp_path):
    shutil.copy(CORPUS / "face1_refined.pgm", faces / "face1_refined.pgm")
    assert main(["quality", str(faces), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    table = rows(tmp_path / "o" / "quality.csv")
    assert [Path(r["file"]).name for r in table] == ["face1.pgm", "face2.pgm", "face3.pgm"]
    assert table[0]["error"] == "" and "face2_refined.pgm" in table[1]["error"]


def test_quality_processed_dir_and_refit(faces, tmp_path):
    proc = tmp_path / "proc"
    assert main(["enhance", str(faces), "--out", str(proc)]) == EXIT_OK
    assert main(["quality", str(faces), "--processed-dir", str(proc), "--out", str(tmp_path / "q")]) == EXIT_OK
    assert len(rows(tmp_path / "q" / "quality.csv")) == 3
    code = main(["quality", "--fit", str(DATA / "pristine"), "--out", str(tmp_path / "fit")])
    assert code == EXIT_OK
    assert (tmp_path / "fit" / "niqe.tqm").read_bytes() == (DATA / "niqe.tqm").read_bytes()
    assert (tmp_path / "fit" / "brisque.tqm").read_bytes() == (DATA / "brisque.tqm").read_bytes()


def test_quality_missing_model(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("quality.niqe_model = nowhere.tqm\n")
    assert main(["quality", str(CORPUS), "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "nowhere.tqm" in capsys.readouterr().err


def test_reconstruct_default_poses(tmp_path):
    out = tmp_path / "o"
    assert main(["reconstruct", str(CORPUS / "face3_refined.pgm"), "--out", str(out)]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(
        ["face3_refined.obj", "face3_refined_depth.png"]
        + [f"face3_refined_yaw{d}.png" for d in ("-30", "-15", "+0", "+15", "+30")]
    )


def test_reconstruct_custom_poses_and_format(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("output.format = pgm\nreconstruct.render_mode = shaded\n")
    code = main(["reconstruct", str(CORPUS / "face1.pgm"), "--poses", "-90", "45.5",
                 "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == [
        "face1.obj", "face1_depth.pgm", "face1_yaw+45.5.pgm", "face1_yaw-90.pgm",
    ]


def test_reconstruct_missing_checkpoint(tmp_path, capsys):
    missing = tmp_path / "absent.tprn"
    code = main(["reconstruct", str(CORPUS / "face1.pgm"), "--checkpoint", str(missing), "--out", str(tmp_path)])
    assert code == EXIT_INPUT
    assert str(missing) in capsys.readouterr().err


def test_reconstruct_bad_checkpoint(tmp_path, capsys):
    bad = tmp_path / "bad.tprn"
    bad.write_bytes(b"TPRN" + b"\x00" * 10)
    code = main(["reconstruct", str(CORPUS / "face1.pgm"), "--checkpoint", str(bad), "--out", str(tmp_path)])
    assert code == EXIT_INPUT
    assert "bad.tprn" in capsys.readouterr().err


def small_train_cfg(path, **extra):
    lines = {"train.iterations": "40", "train.input_size": "8", "train.residual_blocks": "2",
             "train.transposed_blocks": "3", "train.base_channels": "2", "train.learning_rate": "1e-6"}
    lines.update(extra)
    path.write_text("".join(f"{k}={v}\n" for k, v in lines.items()))
    return str(path)


def test_train_is_byte_identical(tmp_path):
    cfg = small_train_cfg(tmp_path / "t.cfg")
    for name in ("a", "b"):
        assert main(["train", "--config", cfg, "--out", str(tmp_path / name)]) == EXIT_OK
    for f in ("checkpoint.tprn", "losses.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    lines = (tmp_path / "a" / "losses.csv").read_text().splitlines()
    assert lines[0] == "iteration,loss" and len(lines) == 41


def test_train_default_ratio(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path)]) == EXIT_OK
    ratio = float(capsys.readouterr().out.strip().rsplit(":", 1)[1])
    assert ratio <= 0.1
    losses = [float(line.split(",")[1]) for line in (tmp_path / "losses.csv").read_text().splitlines()[1:]]
    assert len(losses) == 500 and losses[-1] / losses[0] == pytest.approx(ratio, abs=1e-6)


def test_train_rejects_zero_iterations(tmp_path):
    assert main(["train", "--iterations", "0", "--out", str(tmp_path)]) == EXIT_INPUT
    cfg = small_train_cfg(tmp_path / "t.cfg", **{"train.iterations": "0"})
    assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == EXIT_INPUT


def test_train_divergence_exit_code(tmp_path, capsys):
    cfg = small_train_cfg(tmp_path / "t.cfg", **{"train.learning_rate": "1e30", "train.warmup": "0"})
    assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == EXIT_NUMERIC
    assert "iteration" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("enhance.clahe_tiles = 8\nenhance.tile = 3\n")
    assert main(["enhance", str(CORPUS), "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "line 2" in capsys.readouterr().err
    assert main(["enhance", str(CORPUS), "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == EXIT_INPUT


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as err:
        main(["explode"])
    assert err.value.code == 2


def test_thread_bound(faces, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("THERMOFACE_THREADS", "zero")
    assert main(["enhance", str(faces), "--out", str(tmp_path / "x")]) == EXIT_INPUT
    monkeypatch.setenv("THERMOFACE_THREADS", "0")
    assert main(["enhance", str(faces), "--out", str(tmp_path / "x")]) == EXIT_INPUT
    outputs = []
    for n in ("1", "3"):
        monkeypatch.setenv("THERMOFACE_THREADS", n)
        out = tmp_path / f"q{n}"
        shutil.copy(CORPUS / "face1_refined.pgm", faces)
        shutil.copy(CORPUS / "face3_refined.pgm", faces)
        main(["quality", str(faces), "--out", str(out)])
        outputs.append((out / "quality.csv").read_text())
    assert outputs[0] == outputs[1]


def test_demo_manifest(tmp_path, capsys):
    out = tmp_path / "demo"
    assert main(["demo", "--out", str(out)]) == EXIT_OK
    manifest = (out / "manifest.txt").read_text().splitlines()
    listed = {}
    for line in manifest:
        digest, name = line.split("  ")
        listed[name] = digest
    on_disk = {p.name for p in out.iterdir()} - {"manifest.txt"}
    assert set(listed) == on_disk
    for name, digest in listed.items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    stages = sorted(n for n in listed if n.startswith("stage_"))
    assert [n.split("_")[1] for n in stages] == list("abcdefgh")


def test_demo_missing_input(tmp_path):
    assert main(["demo", str(tmp_path / "nope.pgm"), "--out", str(tmp_path)]) == EXIT_INPUT


def test_demo_colour_input(tmp_path):
    rng = np.random.default_rng(0)
    src = tmp_path / "rgb.png"
    write_image(src, Image(rng.random((3, 40, 48))))
    assert main(["demo", str(src), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert read_image(tmp_path / "o" / "stage_b_white_balance.png").channels == 3
    assert (tmp_path / "o" / "rgb.obj").is_file()
