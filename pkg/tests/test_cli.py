import json

import numpy as np
import pytest

from sgcap.cli import main
from sgcap.inspection import read_records


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "corpus"
    rc = main(["make-corpus", "--out", str(path), "--videos", "8",
               "--concepts", "8", "--segments", "2", "--frames-per-segment", "2",
               "--sigma", "0.05", "--seed", "3",
               "--d-appearance", "4", "--d-motion", "4"])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def config_file(tmp_path_factory, corpus_dir):
    from sgcap.datamodel import Config

    path = tmp_path_factory.mktemp("cli") / "run.cfg"
    Config(n_frames=4, d_appearance=4, d_motion=4, d_word=12, d_hidden=12,
           max_len=6, seed=9, batch_size=4, learning_rate=3e-3,
           epochs=25).save(path)
    return path


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, corpus_dir, config_file):
    out = tmp_path_factory.mktemp("cli") / "run"
    rc = main(["train", "--config", str(config_file), "--corpus",
               str(corpus_dir), "--out", str(out), "--quiet"])
    assert rc == 0
    assert (out / "checkpoint_best.npz").exists()
    assert (out / "metrics.jsonl").exists()
    return out


def test_make_corpus_layout(corpus_dir):
    assert (corpus_dir / "manifest.tsv").exists()
    assert (corpus_dir / "alignments.json").exists()
    features = list((corpus_dir / "features").glob("*.fbin"))
    assert len(features) == 8


def test_metrics_log_is_json_lines(trained_dir):
    lines = (trained_dir / "metrics.jsonl").read_text().splitlines()
    records = [json.loads(line) for line in lines]
    assert any(r["kind"] == "step" for r in records)
    assert any(r["kind"] == "epoch" for r in records)


def test_generate_beam_one_equals_greedy(trained_dir, corpus_dir, tmp_path):
    model = str(trained_dir / "checkpoint_best.npz")
    out_a = tmp_path / "beam1.tsv"
    out_b = tmp_path / "greedy.tsv"
    assert main(["generate", "--model", model, "--features", str(corpus_dir),
                 "--beam", "1", "--out", str(out_a)]) == 0
    assert main(["generate", "--model", model, "--features", str(corpus_dir),
                 "--greedy", "--out", str(out_b)]) == 0
    assert out_a.read_text() == out_b.read_text()
    lines = out_a.read_text().strip().splitlines()
    assert len(lines) == 8
    assert all("\t" in line for line in lines)


def test_generate_dump_attn_round_trips(trained_dir, corpus_dir, tmp_path):
    model = str(trained_dir / "checkpoint_best.npz")
    dump = tmp_path / "attn"
    assert main(["generate", "--model", model, "--features", str(corpus_dir),
                 "--greedy", "--out", str(tmp_path / "c.tsv"),
                 "--dump-attn", str(dump)]) == 0
    files = sorted(dump.glob("*.jsonl"))
    assert len(files) == 8
    records = read_records(files[0])
    assert records
    for rec in records:
        assert {"video_id", "t", "prefix", "kept", "beta", "predicted"} <= set(rec)
        assert np.isclose(sum(rec["beta"]), 1.0, atol=1e-5)
        if "alpha" in rec:
            for row in rec["alpha"]:
                assert np.isclose(sum(row), 1.0, atol=1e-4)


def test_eval_cli_round_trip(trained_dir, corpus_dir, tmp_path):
    model = str(trained_dir / "checkpoint_best.npz")
    cand = tmp_path / "cand.tsv"
    assert main(["generate", "--model", model, "--features", str(corpus_dir),
                 "--greedy", "--out", str(cand)]) == 0
    report_path = tmp_path / "report.json"
    assert main(["eval", "--candidates", str(cand),
                 "--references", str(corpus_dir / "manifest.tsv"),
                 "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["n_videos"] == 8
    assert 0.0 <= report["scores"]["cider_d"] <= 10.0


def test_inspect_writes_parseable_records(trained_dir, corpus_dir, tmp_path):
    model = str(trained_dir / "checkpoint_best.npz")
    feature = sorted((corpus_dir / "features").glob("*.fbin"))[0]
    out = tmp_path / "inspect.jsonl"
    assert main(["inspect", "--model", model, "--features", str(feature),
                 "--out", str(out)]) == 0
    records = read_records(out)
    assert all(rec["video_id"] == records[0]["video_id"] for rec in records)
    assert [rec["t"] for rec in records] == list(range(1, len(records) + 1))


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--frobnicate"])
    assert exc.value.code == 2


def test_missing_file_exits_3(tmp_path):
    rc = main(["generate", "--model", str(tmp_path / "missing.npz"),
               "--features", str(tmp_path)])
    assert rc == 3


def test_bad_corpus_exits_3(tmp_path, config_file):
    rc = main(["train", "--config", str(config_file),
               "--corpus", str(tmp_path), "--out", str(tmp_path / "o")])
    assert rc == 3
