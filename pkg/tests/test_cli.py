import json
import subprocess
import sys

import pytest

from ptext.cli import run

SMALL = {"dim": 8, "bucket_count": 64, "n_prompt": 2, "epochs": 3, "captions_per_class": 4}


@pytest.fixture
def workdir(tmp_path, pipeline_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    return tmp_path, pipeline_dir, cfg


def collect(tmp, pipe, cfg, out="corpus.jsonl", *extra):
    return run(
        ["collect", "--raw", str(pipe / "raw.txt"), "--synonyms", str(pipe / "synonyms.json"),
         "--out", str(tmp / out), "--config", str(cfg), "--task", "single", *extra]
    )


def test_collect_matches_golden(workdir):
    tmp, pipe, cfg = workdir
    assert collect(tmp, pipe, cfg) == 0
    assert (tmp / "corpus.jsonl").read_bytes() == (pipe / "corpus.golden.jsonl").read_bytes()
    manifest = json.loads((tmp / "corpus.jsonl.manifest.json").read_text())
    assert manifest["command"] == "collect" and len(manifest["inputs"]) == 3


def test_full_pipeline_is_idempotent(workdir):
    tmp, pipe, cfg = workdir
    outputs = []
    for tag in ("a", "b"):
        assert collect(tmp, pipe, cfg, f"c_{tag}.jsonl") == 0
        assert run(["train", "--corpus", str(tmp / f"c_{tag}.jsonl"), "--config", str(cfg), "--out", str(tmp / f"b_{tag}.ptxt")]) == 0
        for mode in ("coarse", "fine", "ensemble"):
            assert run(["eval", "--bank", str(tmp / f"b_{tag}.ptxt"), "--corpus", str(tmp / f"c_{tag}.jsonl"),
                        "--out", str(tmp / f"r_{tag}_{mode}.json"), "--mode", mode]) == 0
        outputs.append([(tmp / f"c_{tag}.jsonl").read_bytes(), (tmp / f"b_{tag}.ptxt").read_bytes(),
                        (tmp / f"b_{tag}.ptxt.report.json").read_bytes()]
                       + [(tmp / f"r_{tag}_{m}.json").read_bytes() for m in ("coarse", "fine", "ensemble")])
    assert outputs[0] == outputs[1]
    result = json.loads((tmp / "r_a_ensemble.json").read_text())
    assert result["metric"] == "accuracy" and result["M"] == 12


def test_seed_flag_overrides_config(workdir):
    tmp, pipe, cfg = workdir
    collect(tmp, pipe, cfg)
    run(["train", "--corpus", str(tmp / "corpus.jsonl"), "--config", str(cfg), "--out", str(tmp / "s0.ptxt")])
    run(["train", "--corpus", str(tmp / "corpus.jsonl"), "--config", str(cfg), "--out", str(tmp / "s1.ptxt"), "--seed", "1"])
    assert (tmp / "s0.ptxt").read_bytes() != (tmp / "s1.ptxt").read_bytes()


def test_held_out_split(workdir):
    tmp, pipe, cfg = workdir
    assert collect(tmp, pipe, cfg, "train.jsonl", "--held-out", str(tmp / "held.jsonl"), "--held-out-fraction", "0.25") == 0
    held = (tmp / "held.jsonl").read_text().splitlines()
    assert len(held) - 1 == 3  # one caption per class
    assert (tmp / "held.jsonl.manifest.json").exists()


def test_zero_shot_transfer_and_sweep(workdir):
    tmp, pipe, cfg = workdir
    collect(tmp, pipe, cfg)
    corpus = str(tmp / "corpus.jsonl")
    assert run(["zero-shot", "--corpus", corpus, "--config", str(cfg), "--out", str(tmp / "zs.json")]) == 0
    assert run(["zero-shot", "--corpus", corpus, "--config", str(cfg), "--out", str(tmp / "zs2.json"),
                "--template", "[CLASS] noise"]) == 0
    run(["train", "--corpus", corpus, "--config", str(cfg), "--out", str(tmp / "b.ptxt")])
    target = tmp / "target.jsonl"
    target.write_text(
        '{"classes": ["bird", "dog"], "task": "single"}\n'
        '{"text": "a bird sings", "labels": [0], "source": "collected"}\n'
        '{"text": "the dog barks", "labels": [1], "source": "collected"}\n'
    )
    assert run(["transfer", "--bank", str(tmp / "b.ptxt"), "--corpus", str(target), "--out", str(tmp / "t.json")]) == 0
    assert json.loads((tmp / "t.json").read_text())["M"] == 2
    assert run(["sweep", "--corpus", corpus, "--config", str(cfg), "--lengths", "1,2", "--out", str(tmp / "sw.json")]) == 0
    table = json.loads((tmp / "sw.json").read_text())
    assert [r["n_prompt"] for r in table["rows"]] == [1, 2]
    assert "zero_shot" in table


def test_unknown_flag(capsys):
    assert run(["train", "--corpus", "x", "--out", "y", "--frobnicate"]) == 1
    assert "--frobnicate" in capsys.readouterr().err


def test_missing_bank_leaves_no_output(workdir):
    tmp, pipe, cfg = workdir
    collect(tmp, pipe, cfg)
    out = tmp / "result.json"
    assert run(["eval", "--bank", str(tmp / "nope.ptxt"), "--corpus", str(tmp / "corpus.jsonl"), "--out", str(out)]) == 1
    assert not out.exists()


def test_bad_config_key(workdir):
    tmp, pipe, _ = workdir
    bad = tmp / "bad.json"
    bad.write_text('{"learning_rate": 1}')
    assert collect(tmp, pipe, bad) == 1


def test_bad_lengths(workdir):
    tmp, pipe, cfg = workdir
    collect(tmp, pipe, cfg)
    assert run(["sweep", "--corpus", str(tmp / "corpus.jsonl"), "--lengths", "0,4", "--out", str(tmp / "s.json")]) == 1


def test_non_finite_loss_is_runtime_error(workdir):
    tmp, pipe, _ = workdir
    cfg = tmp / "hot.json"
    cfg.write_text(json.dumps({**SMALL, "tau": 1e-320}))
    collect(tmp, pipe, cfg)
    with pytest.warns(RuntimeWarning):
        code = run(["train", "--corpus", str(tmp / "corpus.jsonl"), "--config", str(cfg), "--out", str(tmp / "b.ptxt")])
    assert code == 2
    assert not (tmp / "b.ptxt").exists()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ptext.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("ptext ")
    proc = subprocess.run([sys.executable, "-m", "ptext.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 1
