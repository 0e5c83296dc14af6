import hashlib

import pytest

from surfdec.cli import main
from surfdec.pipeline import EVAL_COLUMNS


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_no_command_is_usage_error(capsys):
    code, _, _ = run(capsys)
    assert code == 1


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "decode", "--bogus", "1")
    assert code == 1


def test_layout(capsys):
    code, out, _ = run(capsys, "layout", "--distance", "3")
    assert code == 0
    assert "8 checks" in out and "logical Z support" in out


def test_layout_rejects_even_distance(capsys):
    code, _, err = run(capsys, "layout", "--distance", "4")
    assert code == 1 and "error" in err


def test_sample_requires_seed(capsys, tmp_path):
    code, _, err = run(capsys, "sample", "--distance", "3", "--p", "0.01",
                       "--shots", "10", "--out", str(tmp_path / "a.tqec"))
    assert code == 1 and "seed" in err


def test_sample_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.tqec", tmp_path / "b.tqec"
    for path in (a, b):
        code, _, _ = run(capsys, "sample", "--distance", "3", "--p", "0.01",
                         "--shots", "1000", "--seed", "7", "--out", str(path))
        assert code == 0
    assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()


def test_decode_zero_noise(capsys):
    code, out, _ = run(capsys, "decode", "--decoder", "mwpm", "--distance", "3",
                       "--p", "0", "--shots", "100", "--seed", "1")
    assert code == 0
    header, row = out.strip().splitlines()
    assert header == ",".join(EVAL_COLUMNS)
    cells = dict(zip(header.split(","), row.split(",")))
    assert cells["ler"] == "0" and cells["failures"] == "0"


def test_config_file_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("decoder=mwpm\ndistance=3\np=0.0\nshots=50\n# comment\n")
    code, out, _ = run(capsys, "decode", "--config", str(cfg), "--seed", "2")
    assert code == 0 and ",50," in out
    # flag overrides config
    code, out, _ = run(capsys, "decode", "--config", str(cfg), "--seed", "2",
                       "--shots", "25")
    assert code == 0 and ",25," in out


def test_config_unknown_key_rejected(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("nonsense=1\n")
    code, _, err = run(capsys, "decode", "--config", str(cfg), "--seed", "1")
    assert code == 1 and "nonsense" in err


def test_missing_dataset_is_data_error(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--data", str(tmp_path / "nope.tqec"),
                       "--epochs", "1", "--seed", "1",
                       "--out", str(tmp_path / "m.tqck"))
    assert code == 2


def test_corrupt_dataset_is_data_error(capsys, tmp_path):
    bad = tmp_path / "bad.tqec"
    bad.write_bytes(b"not a dataset at all")
    code, _, err = run(capsys, "train", "--data", str(bad), "--epochs", "1",
                       "--seed", "1", "--out", str(tmp_path / "m.tqck"))
    assert code == 2


def test_train_eval_threshold_end_to_end(capsys, tmp_path):
    data = tmp_path / "d3.tqec"
    code, _, _ = run(capsys, "sample", "--distance", "3", "--p", "0.02",
                     "--shots", "400", "--seed", "3", "--out", str(data))
    assert code == 0

    ckpt = tmp_path / "m.tqck"
    curve = tmp_path / "curve.csv"
    code, _, _ = run(capsys, "train", "--data", str(data), "--epochs", "1",
                     "--seed", "4", "--layers", "1", "--d-model", "12",
                     "--heads", "2", "--ffn-dim", "16", "--out", str(ckpt),
                     "--curve", str(curve))
    assert code == 0
    assert ckpt.exists()
    assert curve.read_text().startswith("epoch,step,lr,")

    code, out, _ = run(capsys, "eval", "--model", str(ckpt), "--global", "mwpm",
                       "--distance", "3", "--p", "0.02", "--shots", "200",
                       "--seed", "5")
    assert code == 0
    header, row = out.strip().splitlines()
    assert header == ",".join(EVAL_COLUMNS)
    assert len(row.split(",")) == len(EVAL_COLUMNS)

    ck2 = tmp_path / "m2.tqck"
    code, _, _ = run(capsys, "transfer", "--source", str(ckpt), "--data",
                     str(data), "--epochs", "1", "--seed", "6",
                     "--out", str(ck2))
    assert code == 0 and ck2.exists()

    out_csv = tmp_path / "thr.csv"
    code, _, _ = run(capsys, "threshold", "--decoder", "uf", "--distances",
                     "3,5", "--ps", "0.01,0.04", "--shots", "200", "--seed", "7",
                     "--out", str(out_csv))
    assert code == 0
    lines = out_csv.read_text().strip().splitlines()
    assert lines[0] == "decoder,distance,p,ler,ci_lo,ci_hi"
    assert len(lines) == 5


def test_ablate_class_accuracy(capsys, tmp_path):
    data = tmp_path / "d3.tqec"
    run(capsys, "sample", "--distance", "3", "--p", "0.02", "--shots", "300",
        "--seed", "8", "--out", str(data))
    ckpt = tmp_path / "m.tqck"
    run(capsys, "train", "--data", str(data), "--epochs", "1", "--seed", "9",
        "--layers", "1", "--d-model", "12", "--heads", "2", "--ffn-dim", "16",
        "--out", str(ckpt))
    code, out, _ = run(capsys, "ablate", "--mode", "class-accuracy", "--model",
                       str(ckpt), "--distance", "3", "--ps", "0.01,0.03",
                       "--shots", "100", "--seed", "10")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "p,class0,class1" and len(lines) == 3


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as e:
        main(["decode", "--help"])
    assert e.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--decoder", "--distance", "--p", "--shots", "--seed",
                 "--workers", "--config", "--out"):
        assert flag in out
    assert "default" in out
