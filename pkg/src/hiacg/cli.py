"""Command-line entry point: ``hiacg <subcommand> ...``.

Every subcommand accepts ``--config file.json`` (a flat key/value object whose
keys are the long option names with dashes or underscores); explicit flags
override it. Exit status is 0 on success and 2 on invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .acg import AcgConfig, AcgModel, TrainConfig
from .baseline import BaselineConfig, FlatArModel, matched_config
from .errors import HiAcgError
from .harness.ablation import ablation_sweep, format_table
from .harness.complexity import complexity_bench
from .harness.corpus import load_corpus, load_piece, make_toy_corpus, write_corpus
from .harness.drift import drift_experiment
from .harness.manifest import build_manifest, write_manifest
from .harness.training import train
from .hierarchy import HiAcg, refine_training_data, sketch_training_data
from .metrics import corpus_mean, evaluate, table_row
from .pianoroll import pianoroll_to_midi, save_roll
from .sampling import SamplerConfig
from .tokens import PatchConfig, decode, encode, load_tokens, save_tokens

log = logging.getLogger("hiacg")


def _add_model_args(p, hidden=128, heads=4):
    g = p.add_argument_group("model")
    g.add_argument("--hidden", type=int, default=hidden)
    g.add_argument("--heads", type=int, default=heads)
    g.add_argument("--sem-layers", type=int, default=2)
    g.add_argument("--rec-layers", type=int, default=2)
    g.add_argument("--reemb-layers", type=int, default=3)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--t", type=int, default=4)
    g.add_argument("--max-blocks", type=int, default=256)


def _add_train_args(p):
    g = p.add_argument_group("training")
    g.add_argument("--corpus", required=True, help="directory of .mid/.prol files")
    g.add_argument("--out", required=True, help="checkpoint path")
    g.add_argument("--steps", type=int, default=500)
    g.add_argument("--batch-size", type=int, default=1)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--warmup", type=int, default=20)
    g.add_argument("--crop-blocks", type=int, default=None)


def _add_sampler_args(p):
    g = p.add_argument_group("sampling")
    g.add_argument("--temperature", type=float, default=1.0)
    g.add_argument("--top-k", type=int, default=16)
    g.add_argument("--greedy", action="store_true")


def _acg_config(a, **extra):
    return AcgConfig(hidden_dim=a.hidden, heads=a.heads, sem_layers=a.sem_layers, rec_layers=a.rec_layers,
                     reemb_layers=a.reemb_layers, d=a.d, t=a.t, max_blocks=a.max_blocks, seed=a.seed, **extra)


def _train_config(a):
    return TrainConfig(lr=a.lr, warmup=a.warmup, crop_blocks=a.crop_blocks, seed=a.seed)


def _sampler(a):
    return SamplerConfig(a.temperature, a.top_k, a.greedy)


def _json_out(path, payload):
    text = json.dumps(payload, indent=2, sort_keys=True, default=float)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _finish_training(a, model, losses, command):
    model.save(a.out)
    manifest = build_manifest(command, a.seed, {k: v for k, v in vars(a).items() if k != "func"},
                              {"output": a.out})
    manifest["final_loss"] = float(np.mean(losses[-20:]))
    write_manifest(f"{a.out}.manifest.json", manifest)
    print(f"{command}: {len(losses)} steps, final loss {manifest['final_loss']:.4f} -> {a.out}")


# -- subcommands --------------------------------------------------------------

def cmd_make_corpus(a):
    rolls = make_toy_corpus(a.n, a.seed, a.min_measures, a.max_measures)
    paths = write_corpus(rolls, a.out, a.format)
    write_manifest(Path(a.out) / "manifest.json",
                   build_manifest("make-corpus", a.seed, {"n": a.n, "min_measures": a.min_measures,
                                                          "max_measures": a.max_measures}))
    print(f"wrote {len(paths)} pieces to {a.out}")


def cmd_encode(a):
    roll = load_piece(a.input)
    tokens = encode(roll.padded(a.t), PatchConfig(a.d, a.t))
    Path(a.out).write_bytes(save_tokens(tokens))
    print(f"{a.input}: {tokens.shape[0]} blocks x {tokens.shape[1]} tokens -> {a.out}")


def cmd_decode(a):
    roll = decode(load_tokens(Path(a.input).read_bytes()))
    roll = type(roll)(roll.grid, tempo_bpm=a.tempo)
    Path(a.out).write_bytes(pianoroll_to_midi(roll))
    print(f"{a.input}: {roll.n_steps} steps -> {a.out}")


def cmd_train_acg(a):
    rolls = load_corpus(a.corpus)
    cfg = _acg_config(a)
    model = AcgModel(cfg, _train_config(a))
    data = [encode(r.padded(cfg.t), cfg.patch) for r in rolls]
    _finish_training(a, model, train(model, data, a.steps, a.batch_size, a.seed, log_every=50), "train-acg")


def cmd_train_sketch(a):
    rolls = load_corpus(a.corpus)
    cfg = _acg_config(a)
    model = AcgModel(cfg, _train_config(a))
    data = sketch_training_data(rolls, cfg.patch)
    _finish_training(a, model, train(model, data, a.steps, a.batch_size, a.seed, log_every=50), "train-sketch")


def cmd_train_refine(a):
    rolls = load_corpus(a.corpus)
    cfg = _acg_config(a, cond_block=True)
    model = AcgModel(cfg, _train_config(a))
    data = refine_training_data(rolls, cfg.patch, a.context_blocks)
    _finish_training(a, model, train(model, data, a.steps, a.batch_size, a.seed, log_every=50), "train-refine")


def cmd_train_baseline(a):
    rolls = load_corpus(a.corpus)
    acg_cfg = _acg_config(a)
    if a.layers:
        cfg = BaselineConfig(a.hidden, a.layers, a.heads, a.d, a.t, a.max_blocks, seed=a.seed)
    else:
        cfg = matched_config(acg_cfg)
    model = FlatArModel(cfg, _train_config(a))
    data = [encode(r.padded(cfg.t), cfg.patch) for r in rolls]
    _finish_training(a, model, train(model, data, a.steps, a.batch_size, a.seed, log_every=50), "train-baseline")


def cmd_generate(a):
    sketch = AcgModel.load(a.sketch_ckpt)
    refine = AcgModel.load(a.refine_ckpt)
    pipeline = HiAcg(sketch, refine, a.context_blocks)
    prompt = load_piece(a.prompt) if a.prompt else None
    kwargs = {}
    if a.measures is not None:
        kwargs["measures"] = a.measures
    elif a.minutes is not None:
        kwargs["seconds"] = 60.0 * a.minutes
    elif a.seconds is not None:
        kwargs["seconds"] = a.seconds
    else:
        raise ValueError("give --measures, --minutes or --seconds")
    roll = pipeline.generate_piece(**kwargs, bpm=a.bpm, prompt=prompt, sampler=_sampler(a), rng=a.seed)
    # .prol keeps the exact grid (MIDI cannot represent trailing silence)
    data = save_roll(roll) if Path(a.out).suffix == ".prol" else pianoroll_to_midi(roll)
    Path(a.out).write_bytes(data)
    write_manifest(f"{a.out}.manifest.json",
                   build_manifest("generate", a.seed, {k: v for k, v in vars(a).items() if k != "func"},
                                  {"sketch": a.sketch_ckpt, "refine": a.refine_ckpt}))
    print(f"generated {roll.n_measures} measures ({roll.n_steps} steps) -> {a.out}")


def cmd_evaluate(a):
    src = Path(a.input)
    files = [src] if src.is_file() else sorted(p for p in src.iterdir()
                                               if p.suffix.lower() in (".mid", ".midi", ".prol"))
    if not files:
        raise FileNotFoundError(f"no pieces under {src}")
    pieces, reports = [], []
    for path in files:
        rep = evaluate(load_piece(path))
        reports.append(rep)
        pieces.append({"name": path.name, **table_row(rep), "key": rep.key_name})
    _json_out(a.out, {"pieces": pieces, "mean": corpus_mean(reports)})


def cmd_drift(a):
    acg = AcgModel.load(a.acg_ckpt)
    base = FlatArModel.load(a.baseline_ckpt)
    pieces = load_corpus(a.corpus)
    curve = drift_experiment(acg, base, pieces, a.steps, a.prompt_blocks, _sampler(a), a.seed)
    payload = curve.as_dict()
    payload["manifest"] = build_manifest("drift", a.seed, {"steps": a.steps, "prompt_blocks": a.prompt_blocks},
                                         {"acg": a.acg_ckpt, "baseline": a.baseline_ckpt})
    _json_out(a.out, payload)


def cmd_bench(a):
    acg_cfg = AcgConfig(hidden_dim=a.hidden, heads=a.heads, sem_layers=a.sem_layers, rec_layers=a.rec_layers,
                        d=a.d, t=a.t)
    base_cfg = BaselineConfig(hidden_dim=a.hidden, layers=a.baseline_layers, heads=a.heads, d=a.d, t=a.t)
    report = complexity_bench(acg_cfg, base_cfg, a.lengths, a.seed)
    payload = report.as_dict()
    payload["manifest"] = build_manifest("bench", a.seed, report.notes)
    _json_out(a.out, payload)


def cmd_ablate(a):
    corpus = load_corpus(a.corpus) if a.corpus else make_toy_corpus(a.n_pieces, a.seed)
    rows = ablation_sweep(corpus, steps=a.steps, hidden=a.hidden, heads=a.heads, measures=a.measures,
                          n_samples=a.samples, seed=a.seed)
    print(format_table(rows))
    _json_out(a.out, {"rows": rows, "manifest": build_manifest("ablate", a.seed, vars(a) | {"func": None})})


# -- parser -------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="hiacg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        return p

    p = add("make-corpus", cmd_make_corpus, "write a procedural toy corpus")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--min-measures", type=int, default=4)
    p.add_argument("--max-measures", type=int, default=16)
    p.add_argument("--format", choices=("mid", "prol"), default="mid")
    p.add_argument("--out", required=True)

    p = add("encode", cmd_encode, "MIDI or roll file -> piano-token file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--t", type=int, default=4)

    p = add("decode", cmd_decode, "piano-token file -> MIDI")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tempo", type=float, default=120.0)

    for name, func, help_ in (("train-acg", cmd_train_acg, "train a flat-resolution ACG model"),
                              ("train-sketch", cmd_train_sketch, "train the sketch loop"),
                              ("train-refine", cmd_train_refine, "train the refinement loop"),
                              ("train-baseline", cmd_train_baseline, "train the flat autoregressive baseline")):
        p = add(name, func, help_)
        _add_model_args(p)
        _add_train_args(p)
        if name == "train-refine":
            p.add_argument("--context-blocks", type=int, default=8)
        if name == "train-baseline":
            p.add_argument("--layers", type=int, default=0,
                           help="decoder depth; 0 matches the parameter count of the ACG flags")

    p = add("generate", cmd_generate, "generate a piece with the sketch + refinement loops")
    dur = p.add_mutually_exclusive_group()
    dur.add_argument("--measures", type=int)
    dur.add_argument("--minutes", type=float)
    dur.add_argument("--seconds", type=float)
    p.add_argument("--bpm", type=float, default=None)
    p.add_argument("--prompt")
    p.add_argument("--sketch-ckpt", required=True)
    p.add_argument("--refine-ckpt", required=True)
    p.add_argument("--context-blocks", type=int, default=8)
    p.add_argument("--out", required=True, help=".mid, or .prol for the exact roll")
    _add_sampler_args(p)

    p = add("evaluate", cmd_evaluate, "objective metrics for a file or directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default="-")

    p = add("drift", cmd_drift, "feature drift of ACG vs baseline")
    p.add_argument("--acg-ckpt", required=True)
    p.add_argument("--baseline-ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--prompt-blocks", type=int, default=4)
    p.add_argument("--out", default="-")
    _add_sampler_args(p)

    p = add("bench", cmd_bench, "attention-cost benchmark")
    p.add_argument("--lengths", type=int, nargs="+", default=[256, 512, 1024, 2048])
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--sem-layers", type=int, default=2)
    p.add_argument("--rec-layers", type=int, default=2)
    p.add_argument("--baseline-layers", type=int, default=4)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--t", type=int, default=4)
    p.add_argument("--out", default="-")

    p = add("ablate", cmd_ablate, "model-size x patch-size sweep")
    p.add_argument("--corpus")
    p.add_argument("--n-pieces", type=int, default=20)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--measures", type=int, default=4)
    p.add_argument("--samples", type=int, default=2)
    p.add_argument("--out", default="-")
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        overrides = json.loads(Path(args.config).read_text())
        if not isinstance(overrides, dict):
            raise ValueError("config file must hold a JSON object")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        cleaned = {}
        for key, value in overrides.items():
            dest = key.replace("-", "_")
            if dest not in known:
                raise ValueError(f"unknown config key {key!r} for {args.command}")
            cleaned[dest] = value
        subparser.set_defaults(**cleaned)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (HiAcgError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
