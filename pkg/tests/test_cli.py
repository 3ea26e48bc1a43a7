"""
Test the timelyrec command line
"""
import os

import pytest

from timelyrec import cli
from timelyrec.data import load_dataset
from timelyrec.model import ModelConfig, TimelyRec, save_checkpoint
from timelyrec.synth import SyntheticSpec, write_synthetic
from timelyrec.utils import sha256_lines

TRAIN_ARGS = [
    "--dim",
    "4",
    "--history-length",
    "2",
    "--max-epochs",
    "1",
    "--batch-size",
    "128",
    "--set",
    "model.hidden=8",
]


@pytest.fixture(scope="module")
def trained(tmpdir_factory):
    """(dataset dir, checkpoint) of a one epoch run on a small planted log"""
    root = tmpdir_factory.mktemp("pipeline")
    tsv = str(root.join("log.tsv"))
    write_synthetic(
        SyntheticSpec(n_users=15, n_items=25, interactions_per_user=10, weeks=10, seed=1), tsv
    )
    dataset_dir = str(root.join("dataset"))
    checkpoint = str(root.join("model.ckpt"))
    assert cli.main(["ingest", tsv, dataset_dir]) == 0
    assert cli.main(["train", dataset_dir, checkpoint, *TRAIN_ARGS]) == 0
    return dataset_dir, checkpoint


def test_ingest(write_lines, tmpdir):
    path = write_lines(["a\tx\t30", "a\ty\t10", "b\tx\t20"])
    out = str(tmpdir.join("dataset"))
    assert cli.main(["ingest", path, out]) == 0
    assert tmpdir.join("dataset", "users.vocab").read_text("utf-8") == "a\nb\n"
    assert tmpdir.join("dataset", "items.vocab").read_text("utf-8") == "y\nx\n"
    assert tmpdir.join("dataset", "interactions.tsv").read_text("utf-8") == (
        "a\ty\t10\na\tx\t30\nb\tx\t20\n"
    )


def test_ingest_filters(write_lines, tmpdir):
    path = write_lines(["a\tx\t1", "a\ty\t2", "b\tx\t3"])
    out = str(tmpdir.join("dataset"))
    assert cli.main(["ingest", path, out, "--min-user-interactions", "2"]) == 0
    dataset = load_dataset(out)
    assert dataset.user_vocab == ("a",)
    assert len(dataset) == 2


def test_ingest_idempotent(small_dataset, tmpdir):
    raw = str(tmpdir.join("raw.tsv"))
    small_dataset.to_frame().sample(frac=1.0, random_state=3).to_csv(
        raw, sep="\t", header=False, index=False
    )
    assert cli.main(["ingest", raw, str(tmpdir.join("first"))]) == 0
    again = str(tmpdir.join("first", "interactions.tsv"))
    assert cli.main(["ingest", again, str(tmpdir.join("second"))]) == 0
    for name in ("interactions.tsv", "users.vocab", "items.vocab"):
        assert tmpdir.join("first", name).read_binary() == tmpdir.join("second", name).read_binary()


def test_ingest_filtered_idempotent(write_lines, tmpdir):
    # dropping user a's rows moves item z ahead of item y
    path = write_lines(["a\ty\t1", "b\tz\t2", "b\ty\t3", "c\tz\t4", "c\ty\t5"])
    first = str(tmpdir.join("first"))
    assert cli.main(["ingest", path, first, "--min-user-interactions", "2"]) == 0
    assert tmpdir.join("first", "items.vocab").read_text("utf-8") == "z\ny\n"
    again = os.path.join(first, "interactions.tsv")
    assert cli.main(["ingest", again, str(tmpdir.join("second"))]) == 0
    for name in ("interactions.tsv", "users.vocab", "items.vocab"):
        assert tmpdir.join("first", name).read_binary() == tmpdir.join("second", name).read_binary()


def test_ingest_malformed(write_lines, tmpdir):
    path = write_lines(["a\tx\t1", "a\tx\tnoon"])
    assert cli.main(["ingest", path, str(tmpdir.join("dataset"))]) == 2


def test_ingest_undecodable_or_overflowing(write_lines, tmpdir, caplog):
    latin1 = tmpdir.join("latin1.tsv")
    latin1.write_binary(b"caf\xe9\tx\t1\n")
    assert cli.main(["ingest", str(latin1), str(tmpdir.join("one"))]) == 2
    assert "line 1: not valid UTF-8" in caplog.text
    huge = write_lines(["a\tx\t1", "a\tx\t1", "a\tx\t" + "9" * 30])
    assert cli.main(["ingest", huge, str(tmpdir.join("two"))]) == 2
    assert "line 3" in caplog.text


def test_ingest_missing_file(tmpdir):
    assert cli.main(["ingest", str(tmpdir.join("nope.tsv")), str(tmpdir.join("out"))]) == 2


def test_train_writes_epoch_log(trained):
    _, checkpoint = trained
    with open(checkpoint + ".epochs") as f:
        lines = f.read().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("epoch=1 loss=")
    assert "best=yes" in lines[0]


def test_eval_is_deterministic(trained, capsys):
    dataset_dir, checkpoint = trained
    assert cli.main(["eval", checkpoint, dataset_dir, "--scenario", "item-timing"]) == 0
    first = capsys.readouterr().out
    assert cli.main(["eval", checkpoint, dataset_dir, "--scenario", "item-timing"]) == 0
    assert capsys.readouterr().out == first
    lines = first.splitlines()
    assert lines[:3] == ["scenario: item-timing", "users_evaluated: 15", "seed: 42"]
    assert [line.split(":")[0] for line in lines[3:]] == [
        "hr@1",
        "hr@5",
        "ndcg@5",
        "hr@10",
        "ndcg@10",
    ]


def test_eval_other_dataset(trained, write_lines, tmpdir):
    _, checkpoint = trained
    other = str(tmpdir.join("other"))
    cli.main(["ingest", write_lines(["a\tx\t1", "a\ty\t2", "a\tz\t3"]), other])
    assert cli.main(["eval", checkpoint, other]) == 2


def test_eval_missing_checkpoint(trained, tmpdir):
    dataset_dir, _ = trained
    assert cli.main(["eval", str(tmpdir.join("missing.ckpt")), dataset_dir]) == 2


def test_explain(trained, capsys):
    dataset_dir, checkpoint = trained
    dataset = load_dataset(dataset_dir)
    items, times = dataset.sequence(0)
    t = int(times[-1]) + 60
    user, item = dataset.user_vocab[0], dataset.item_vocab[items[-1]]
    assert cli.main(["explain", checkpoint, dataset_dir, user, item, str(t)]) == 0
    out = capsys.readouterr().out
    assert out.startswith(f"user {user}  item {item}  time {t}")
    assert "importance" in out
    history = out.split("\nhistory\n")[1].splitlines()
    assert history[0].startswith(f"1  item {dataset.item_vocab[items[-1]]}  time {times[-1]}")
    assert history[1].startswith("2  item")


def test_explain_unknown_user(trained):
    dataset_dir, checkpoint = trained
    assert cli.main(["explain", checkpoint, dataset_dir, "nobody", "i0", "100"]) == 2


def test_explain_zero_radius(small_dataset, tmpdir):
    dataset_dir = str(tmpdir.join("dataset"))
    checkpoint = str(tmpdir.join("model.ckpt"))
    small_dataset.to_directory(dataset_dir)
    config = ModelConfig(
        n_users=small_dataset.n_users,
        n_items=small_dataset.n_items,
        dim=4,
        history_length=2,
        window_radius={"month": 0, "day_of_week": 0, "date": 0, "hour": 0},
        hidden=(4,),
    )
    save_checkpoint(
        checkpoint,
        TimelyRec(config),
        {
            "users_sha256": sha256_lines(small_dataset.user_vocab),
            "items_sha256": sha256_lines(small_dataset.item_vocab),
        },
    )
    out = cli.cmd_explain(
        checkpoint, dataset_dir, small_dataset.user_vocab[1], small_dataset.item_vocab[0], 10
    )
    rows = out.split("\n\n")[1].splitlines()[1:5]
    assert [row.split()[0] for row in rows] == ["month", "day_of_week", "date", "hour"]
    for row in rows:
        assert "target 1.0000 / 1.0000  importance" in row
        assert "+-1" not in row
    assert "(empty)" in out


def test_explain_slot_similarity(trained):
    dataset_dir, checkpoint = trained
    dataset = load_dataset(dataset_dir)
    out = cli.cmd_explain(
        checkpoint,
        dataset_dir,
        dataset.user_vocab[0],
        dataset.item_vocab[0],
        10**9,
        slot_similarity="day_of_week",
    )
    block = out.split("slot similarity for day_of_week\n")[1].splitlines()
    assert block[0].split() == ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]
    assert block[1].split()[:2] == ["Mon", "1.000"]


def test_synth(tmpdir):
    out = str(tmpdir.join("synthetic.tsv"))
    assert cli.main(["synth", out, "--users", "3", "--items", "5", "--favorites", "2"]) == 0
    assert len(tmpdir.join("synthetic.tsv").read_text("utf-8").splitlines()) == 150
    assert tmpdir.join("synthetic.tsv.truth.yaml").check()


def test_synth_infeasible(tmpdir):
    out = str(tmpdir.join("synthetic.tsv"))
    assert cli.main(["synth", out, "--granularities", "month"]) == 2
    assert cli.main(["synth", out, "--start", "0"]) == 2


def test_train_invalid_setting(trained, tmpdir):
    dataset_dir, _ = trained
    checkpoint = str(tmpdir.join("model.ckpt"))
    assert cli.main(["train", dataset_dir, checkpoint, *TRAIN_ARGS, "--dropout", "1.0"]) == 3


def test_train_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        cli.main(["train", "--help"])
    out = " ".join(capsys.readouterr().out.split())
    assert "model.dim (default: 32)" in out
    assert "train.learning_rate (default: 0.001)" in out
    assert "model.window_radius.hour (default: 5)" in out


def test_eval_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        cli.main(["eval", "--help"])
    out = " ".join(capsys.readouterr().out.split())
    assert "(default: 42)" in out
    assert "(default: item)" in out


def test_config_precedence(tmpdir):
    config_file = tmpdir.join("config.yaml")
    config_file.write_text("model:\n  dim: 8\n  dropout: 0.3\ntrain:\n  seed: 3\n", "utf-8")
    args = cli._build_parser().parse_args(
        [
            "train",
            "dataset",
            "model.ckpt",
            "--config",
            str(config_file),
            "--set",
            "train.seed=5",
            "--set",
            "model.dim=12",
            "--dim",
            "16",
        ]
    )
    config = cli.train_config_from_args(args)
    assert config["model"]["dim"] == 16
    assert config["model"]["dropout"] == 0.3
    assert config["train"]["seed"] == 5
    assert config["train"]["patience"] == 10


def test_no_action(capsys):
    assert cli.main([]) == 1
    assert "usage" in capsys.readouterr().out
