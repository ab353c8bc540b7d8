import json

import numpy as np
import pytest

from hiacg.cli import main
from hiacg.pianoroll import load_roll, midi_to_pianoroll
from hiacg.tokens import load_tokens


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["make-corpus", "--n", "3", "--min-measures", "4", "--max-measures", "4",
                 "--out", str(root / "corpus"), "--seed", "1"]) == 0
    tiny = {"hidden": 16, "heads": 2, "sem-layers": 1, "rec_layers": 1, "steps": 2}
    (root / "tiny.json").write_text(json.dumps(tiny))
    for cmd in ("train-sketch", "train-refine", "train-acg", "train-baseline"):
        assert main([cmd, "--config", str(root / "tiny.json"), "--corpus", str(root / "corpus"),
                     "--out", str(root / f"{cmd}.ckpt")]) == 0
    return root


def test_encode_decode(workdir):
    src = workdir / "corpus" / "piece_0000.mid"
    assert main(["encode", "--in", str(src), "--out", str(workdir / "p.ptok")]) == 0
    assert load_tokens((workdir / "p.ptok").read_bytes()).shape == (16, 44)
    assert main(["decode", "--in", str(workdir / "p.ptok"), "--out", str(workdir / "p.mid")]) == 0
    assert midi_to_pianoroll((workdir / "p.mid").read_bytes()) == midi_to_pianoroll(src.read_bytes())


def test_training_writes_manifest(workdir):
    manifest = json.loads((workdir / "train-acg.ckpt.manifest.json").read_text())
    assert manifest["command"] == "train-acg" and manifest["config"]["hidden"] == 16
    assert manifest["config"]["steps"] == 2 and len(manifest["checkpoints"]["output"]) == 16


def test_flags_override_config(workdir):
    out = workdir / "override.ckpt"
    assert main(["train-acg", "--config", str(workdir / "tiny.json"), "--corpus", str(workdir / "corpus"),
                 "--out", str(out), "--steps", "1"]) == 0
    assert json.loads((workdir / "override.ckpt.manifest.json").read_text())["config"]["steps"] == 1


@pytest.mark.parametrize("args, steps", [(["--measures", "3"], 48), (["--minutes", "0.1", "--bpm", "120"], 48),
                                         (["--seconds", "10", "--bpm", "90"], 64)])
def test_generate(workdir, args, steps):
    out = workdir / "gen.prol"
    assert main(["generate", "--sketch-ckpt", str(workdir / "train-sketch.ckpt"),
                 "--refine-ckpt", str(workdir / "train-refine.ckpt"), "--out", str(out), "--seed", "3"] + args) == 0
    assert load_roll(out.read_bytes()).n_steps == steps
    assert (workdir / "gen.prol.manifest.json").exists()


def test_generate_midi_with_prompt(workdir):
    out = workdir / "cont.mid"
    assert main(["generate", "--sketch-ckpt", str(workdir / "train-sketch.ckpt"),
                 "--refine-ckpt", str(workdir / "train-refine.ckpt"), "--out", str(out), "--measures", "2",
                 "--prompt", str(workdir / "corpus" / "piece_0000.mid")]) == 0
    prompt = midi_to_pianoroll((workdir / "corpus" / "piece_0000.mid").read_bytes())
    got = midi_to_pianoroll(out.read_bytes())
    np.testing.assert_array_equal(got.grid[:, :64], prompt.grid)


def test_evaluate(workdir, capsys):
    assert main(["evaluate", "--in", str(workdir / "corpus"), "--out", str(workdir / "report.json")]) == 0
    report = json.loads((workdir / "report.json").read_text())
    assert len(report["pieces"]) == 3
    assert set(report["mean"]) == {"Pitch", "Rhythm", "Harmony", "Melody"}
    assert main(["evaluate", "--in", str(workdir / "corpus" / "piece_0001.mid")]) == 0
    assert json.loads(capsys.readouterr().out)["pieces"][0]["name"] == "piece_0001.mid"


def test_drift(workdir):
    out = workdir / "drift.json"
    assert main(["drift", "--acg-ckpt", str(workdir / "train-acg.ckpt"),
                 "--baseline-ckpt", str(workdir / "train-baseline.ckpt"), "--corpus", str(workdir / "corpus"),
                 "--steps", "4", "--prompt-blocks", "2", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert len(data["acg"]) == 4 and "reduction" in data and data["manifest"]["command"] == "drift"


def test_bench(workdir):
    out = workdir / "bench.json"
    assert main(["bench", "--lengths", "88", "176", "352", "--hidden", "8", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["baseline_counts"] == [4 * 8 * L * L for L in (88, 176, 352)]


def test_ablate(workdir, capsys):
    out = workdir / "ablate.json"
    cfg = workdir / "ablate_cfg.json"
    cfg.write_text(json.dumps({"steps": 1, "hidden": 8, "measures": 2, "samples": 1}))
    # full 3x3 grid with one step each; large layer counts at width 8 stay quick
    assert main(["ablate", "--config", str(cfg), "--corpus", str(workdir / "corpus"), "--out", str(out)]) == 0
    rows = json.loads(out.read_text())["rows"]
    assert len(rows) == 10 and rows[0]["label"] == "GT"
    assert "| GT |" in capsys.readouterr().out


def test_validation_errors_exit_2(workdir, tmp_path):
    sk, rf = str(workdir / "train-sketch.ckpt"), str(workdir / "train-refine.ckpt")
    assert main(["generate", "--sketch-ckpt", sk, "--refine-ckpt", rf, "--measures", "0",
                 "--out", str(tmp_path / "x.mid")]) == 2
    assert main(["generate", "--sketch-ckpt", sk, "--refine-ckpt", rf, "--out", str(tmp_path / "x.mid")]) == 2
    assert main(["encode", "--in", str(tmp_path / "missing.mid"), "--out", str(tmp_path / "x")]) == 2
    assert main(["train-acg", "--corpus", str(workdir / "corpus"), "--out", str(tmp_path / "x"),
                 "--hidden", "30", "--heads", "4"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"no_such_option": 1}))
    assert main(["evaluate", "--config", str(bad), "--in", str(workdir / "corpus")]) == 2
    (tmp_path / "junk.mid").write_bytes(b"not midi")
    assert main(["encode", "--in", str(tmp_path / "junk.mid"), "--out", str(tmp_path / "x")]) == 2
    assert main(["no-such-command"]) == 2
    assert main(["generate", "--sketch-ckpt", str(tmp_path / "gone.ckpt"), "--refine-ckpt", rf,
                 "--measures", "1", "--out", str(tmp_path / "x.mid")]) == 2


def test_seed_is_everywhere():
    from hiacg.cli import build_parser
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    assert len(sub) == 12
    for name, p in sub.items():
        assert any(a.dest == "seed" for a in p._actions), name
