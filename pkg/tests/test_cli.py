import io
import subprocess
import sys

import pytest

from mccnn.cli import RunConfig, main, read_config_file

from conftest import toy_olid_rows, write_olid

FAST = ["--embedding-dim", "8", "--filter-sizes", "1,2", "--groups-per-size", "2,1",
        "--group-size", "3", "--hidden-size", "4", "--ensemble-size", "2", "--max-epochs", "3",
        "--learning-rate", "0.02", "--batch-size", "4"]


def run(argv, environ=None):
    out = io.StringIO()
    code = main(argv, out=out, environ={} if environ is None else environ)
    return code, out.getvalue()


@pytest.fixture
def files(tmp_path):
    train = write_olid(tmp_path / "train.tsv", toy_olid_rows(40, seed=0))
    test = write_olid(tmp_path / "test.tsv", toy_olid_rows(12, seed=1))
    return tmp_path, train, test


@pytest.fixture
def trained(files):
    tmp, train, test = files
    ckpt = tmp / "m.ckpt"
    code, out = run(["train", "--dataset", str(train), "--checkpoint", str(ckpt),
                     "--deterministic-output", *FAST])
    assert code == 0, out
    return tmp, train, test, ckpt, out


def test_train_writes_artifacts(trained):
    tmp, _, _, ckpt, out = trained
    for suffix in ("", ".config", ".vocab", ".history.tsv"):
        assert (tmp / ("m.ckpt" + suffix)).is_file()
    assert "member 0:" in out and "member 1:" in out and "macro-F1" in out
    assert "elapsed_seconds" not in out
    history = (tmp / "m.ckpt.history.tsv").read_text()
    assert history.count("# member") == 2


def test_config_echo_reproduces_run(trained, tmp_path):
    tmp, _, _, ckpt, _ = trained
    echoed = read_config_file(tmp / "m.ckpt.config")
    assert echoed["vocabulary"] == str(ckpt) + ".vocab"
    assert echoed["filter_sizes"] == (1, 2)
    # re-running from the echoed config reproduces the checkpoint byte for byte
    again = tmp_path / "again.ckpt"
    code, _ = run(["train", "--config", str(tmp / "m.ckpt.config"), "--checkpoint", str(again),
                   "--deterministic-output"])
    assert code == 0
    assert again.read_bytes() == ckpt.read_bytes()


def test_parallel_members_do_not_change_checkpoint(trained):
    tmp, train, _, ckpt, _ = trained
    par = tmp / "par.ckpt"
    code, _ = run(["train", "--dataset", str(train), "--checkpoint", str(par), "--vocabulary",
                   str(ckpt) + ".vocab", "--parallel-members", "2", "--deterministic-output", *FAST])
    assert code == 0
    assert par.read_bytes() == ckpt.read_bytes()


def test_predict_and_evaluate(trained):
    tmp, _, test, ckpt, _ = trained
    common = ["--checkpoint", str(ckpt), "--vocabulary", str(ckpt) + ".vocab",
              "--embedding-dim", "8", "--deterministic-output"]
    code, out = run(["predict", "--dataset", str(test), *common])
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "id\tlabel\tp_NOT\tp_OFF"
    assert len(lines) == 13
    for line in lines[1:]:
        _, label, *probs = line.split("\t")
        assert label in ("NOT", "OFF")
        assert abs(sum(map(float, probs)) - 1) <= 1e-12
    dest = tmp / "pred.tsv"
    code, out2 = run(["predict", "--dataset", str(test), "--output", str(dest), *common])
    assert code == 0 and out2 == "" and dest.read_text() == out
    code, out = run(["evaluate", "--dataset", str(test), *common])
    assert code == 0 and "accuracy" in out and "gold distribution: NOT=6, OFF=6" in out


@pytest.mark.parametrize("extra", [
    ["--baseline", "mfc"],
    ["--baseline", "constant", "--constant-label", "OFF"],
    ["--baseline", "linear-tfidf"],
])
def test_baseline_commands(files, extra):
    _, train, test = files
    code, out = run(["baseline", "--dataset", str(train), "--eval-dataset", str(test),
                     "--deterministic-output", *extra])
    assert code == 0
    assert "scored on 12" in out
    code, out = run(["evaluate", "--dataset", str(test), "--train-dataset", str(train),
                     "--deterministic-output", *extra])
    assert code == 0 and "macro-F1" in out


def test_constant_off_baseline_scores(files):
    _, train, test = files
    _, out = run(["baseline", "--dataset", str(train), "--eval-dataset", str(test),
                  "--baseline", "constant", "--constant-label", "OFF", "--deterministic-output"])
    # half the test rows are OFF: F1(OFF) = 2/3, F1(NOT) = 0
    assert "macro-F1  0.3333" in out and "accuracy  0.5000" in out


def test_baseline_subtask_c_and_dev_split(files):
    _, train, _ = files
    code, out = run(["baseline", "--dataset", str(train), "--subtask", "c", "--dev-fraction", "0.3",
                     "--deterministic-output"])
    assert code == 0 and "IND" in out and "OTH" in out


def test_gradcheck_and_reproduce_baselines():
    code, out = run(["gradcheck", "--deterministic-output"])
    assert code == 0
    assert out.count("case ") == 3 and out.splitlines()[-1].startswith("PASS max_relative_error=")
    code, out = run(["reproduce-baselines", "--deterministic-output"])
    assert code == 0
    assert out.count("PASS") == 8 and "FAIL" not in out


def test_timing_line_only_without_flag():
    _, out = run(["reproduce-baselines"])
    assert out.splitlines()[-1].startswith("elapsed_seconds=")


def test_environment_and_precedence(files, tmp_path):
    _, train, test = files
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# toy\ndataset={train}\neval_dataset={test}\nbaseline=constant\nconstant_label=NOT\n")
    _, out = run(["baseline", "--config", str(cfg), "--deterministic-output"])
    assert "constant baseline" in out and "accuracy  0.5000" in out
    # env beats file, flag beats env
    _, out = run(["baseline", "--config", str(cfg), "--deterministic-output"],
                 environ={"MCCNN_BASELINE": "mfc"})
    assert out.startswith("mfc baseline")
    _, out = run(["baseline", "--config", str(cfg), "--baseline", "linear-tfidf",
                  "--deterministic-output"], environ={"MCCNN_BASELINE": "mfc"})
    assert out.startswith("linear-tfidf baseline")


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("learning_rat=0.1\n")
    code, _ = run(["gradcheck", "--config", str(cfg)])
    err = capsys.readouterr().err
    assert code == 1 and err.startswith("error: config:") and "learning_rat" in err
    assert err.count("\n") == 1


@pytest.mark.parametrize("argv, code, kind", [
    (["train"], 2, "usage"),
    (["predict", "--dataset", "/nonexistent.tsv", "--checkpoint", "x", "--vocabulary", "y"], 1, "path"),
    (["baseline", "--dataset", "/nonexistent.tsv"], 1, "path"),
    (["gradcheck", "--seed", "abc"], 1, "config"),
    (["baseline", "--dataset", "TRAIN", "--baseline", "svm"], 1, "config"),
    (["baseline", "--dataset", "TRAIN", "--baseline", "constant", "--constant-label", "MAYBE"],
     1, "ValueError"),
])
def test_error_exit_codes(files, capsys, argv, code, kind):
    _, train, _ = files
    argv = [str(train) if a == "TRAIN" else a for a in argv]
    got, _ = run(argv)
    err = capsys.readouterr().err
    assert got == code
    assert err.startswith(f"error: {kind}:") and err.count("\n") == 1


def test_bad_rows_name_the_line(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("id\ttweet\tsubtask_a\tsubtask_b\tsubtask_c\n1\thi\tOFF\tTIN\n")
    code, _ = run(["baseline", "--dataset", str(bad)])
    assert code == 1 and "line 2" in capsys.readouterr().err


def test_corrupt_checkpoint(trained, capsys):
    tmp, _, test, ckpt, _ = trained
    bad = tmp / "bad.ckpt"
    bad.write_text(ckpt.read_text().replace("mccnn-checkpoint 1", "mccnn-checkpoint 9"))
    code, _ = run(["predict", "--dataset", str(test), "--checkpoint", str(bad),
                   "--vocabulary", str(ckpt) + ".vocab", "--embedding-dim", "8"])
    assert code == 1 and capsys.readouterr().err.startswith("error: checkpoint:")


def test_usage_errors_from_argparse(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert err.startswith("error: usage:") and err.count("\n") == 1


def test_static_and_precomputed_embeddings(files, tmp_path):
    _, train, test = files
    static = tmp_path / "static.txt"
    static.write_text("3 2\n<unk> 0 0\nidiot 1 0\nlovely 0 1\n")
    ckpt = tmp_path / "s.ckpt"
    base = [*FAST, "--embedding-dim", "2", "--deterministic-output"]
    code, _ = run(["train", "--dataset", str(train), "--checkpoint", str(ckpt),
                   "--embedding-kind", "static", "--embeddings", str(static), *base])
    assert code == 0
    vocab = str(ckpt) + ".vocab"
    # one row per token for each test id
    from mccnn.text_pipeline import SubwordVocabulary, load_dataset, tokenize
    voc = SubwordVocabulary.load(vocab)
    rows = []
    for ex in load_dataset(test, "olid"):
        toks = tokenize(ex.text, voc).tokens
        rows.append(f"{ex.id} {len(toks)} 2")
        rows += ["0.5 -0.5"] * len(toks)
    pre = tmp_path / "pre.txt"
    pre.write_text("\n".join(rows) + "\n")
    code, out = run(["predict", "--dataset", str(test), "--checkpoint", str(ckpt), "--vocabulary", vocab,
                     "--embedding-kind", "precomputed", "--embeddings", str(pre), *base])
    assert code == 0 and len(out.splitlines()) == 13
    code, _ = run(["predict", "--dataset", str(test), "--checkpoint", str(ckpt), "--vocabulary", vocab,
                   "--embedding-kind", "static", "--embeddings", str(static), "--embedding-dim", "2"])
    assert code == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mccnn", "reproduce-baselines", "--deterministic-output"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.count("PASS") == 8


def test_run_config_dump_roundtrip(tmp_path):
    cfg = RunConfig(filter_sizes=(2, 3), learning_rate=0.1 + 0.2, dataset="x.tsv")
    path = tmp_path / "c.cfg"
    path.write_text(cfg.dump())
    assert RunConfig(**read_config_file(path)) == cfg
