"""Command-line entry point.

Subcommands: make-corpus, train, generate, eval, inspect, ablate, bench.
Exit codes: 0 ok, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import run_bench
from .corpus import (
    SyntheticSpec,
    generate_corpus,
    load_corpus,
    load_features,
    save_corpus,
)
from .datamodel import Config, DataError, NumericError, Rng
from .decoder import decode_beam, decode_greedy
from .inspection import inspect_video, plot_attention, write_records
from .metrics import evaluate, read_caption_file
from .model import AblationFlags
from .trainer import load_checkpoint, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_config(path: str | None) -> Config:
    return Config.load(path) if path else Config()


def _split(examples, fraction: float, seed: int):
    if fraction <= 0:
        return examples, []
    rng = Rng(seed)
    order = rng.permutation(len(examples))
    n_val = max(1, int(round(fraction * len(examples))))
    val_idx = set(int(i) for i in order[:n_val])
    train_set = [ex for i, ex in enumerate(examples) if i not in val_idx]
    val_set = [ex for i, ex in enumerate(examples) if i in val_idx]
    return train_set, val_set


def cmd_make_corpus(args) -> int:
    spec = SyntheticSpec(
        n_concepts=args.concepts,
        segments_per_video=args.segments,
        frames_per_segment=args.frames_per_segment,
        noise_sigma=args.sigma,
        n_videos=args.videos,
        d_appearance=args.d_appearance,
        d_motion=args.d_motion,
    )
    corpus = generate_corpus(spec, args.seed)
    save_corpus(args.out, corpus)
    print(f"wrote {len(corpus.examples)} videos to {args.out} "
          f"(N={spec.n_frames}, d_video={spec.d_video})")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    flags = AblationFlags.from_spec(args.ablation)
    examples, vocab = load_corpus(args.corpus, config)
    train_set, val_set = _split(examples, args.val_fraction, config.seed)
    result = train(
        train_set, vocab, config, flags,
        val_examples=val_set or None,
        out_dir=args.out,
        epochs=args.epochs,
        pretrained_embeddings=args.embeddings,
        log_cb=None if args.quiet else
        (lambda e, tr, va: print(f"epoch {e:4d}  train_ce {tr:.4f}  val_ce {va:.4f}")),
    )
    print(f"[{flags.label()}] best val CE {result.best_val:.4f}; "
          f"checkpoint at {result.checkpoint_path}")
    return EXIT_OK


def _iter_feature_files(path: Path):
    if path.is_dir():
        feature_dir = path / "features" if (path / "features").is_dir() else path
        files = sorted(p for p in feature_dir.iterdir()
                       if p.suffix in (".fbin", ".txt"))
        if not files:
            raise DataError(f"{path}: no feature files found")
        yield from files
        return
    if not path.exists():
        raise DataError(f"{path}: not found")
    with path.open("rb") as fh:
        head = fh.read(4)
    if head == b"SGFB":
        yield path
        return
    first = path.read_text().splitlines()
    if first and len(first[0].split()) == 4:
        try:
            [int(x) for x in first[0].split()[1:]]
            yield path
            return
        except ValueError:
            pass
    for line in first:  # manifest of feature-file paths
        line = line.strip()
        if line:
            yield Path(line)


def cmd_generate(args) -> int:
    model, _ = load_checkpoint(args.model)
    max_len = args.max_len or model.config.max_len
    lines = []
    for feat_path in _iter_feature_files(Path(args.features)):
        video = load_features(feat_path, model.config)
        if args.greedy or args.beam == 1:
            caption = decode_greedy(video, model, max_len=max_len)
        else:
            caption = decode_beam(video, model, beam_size=args.beam,
                                  max_len=max_len)
        words = model.vocab.decode(caption.tokens)
        lines.append(f"{video.video_id}\t{' '.join(words)}")
        if args.dump_attn:
            _, records = inspect_video(model, video, max_len=max_len)
            out_dir = Path(args.dump_attn)
            out_dir.mkdir(parents=True, exist_ok=True)
            write_records(out_dir / f"{video.video_id}.jsonl", records)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    candidates_multi = read_caption_file(args.candidates)
    references = read_caption_file(args.references)
    candidates = {vid: caps[0] for vid, caps in candidates_multi.items()}
    report = evaluate(candidates, references)
    blob = json.dumps(report.to_dict(), indent=1)
    if args.out:
        Path(args.out).write_text(blob)
    else:
        print(blob)
    return EXIT_OK


def cmd_inspect(args) -> int:
    model, _ = load_checkpoint(args.model)
    video = load_features(Path(args.features), model.config)
    caption, records = inspect_video(model, video, max_len=args.max_len,
                                     top_k=args.top_k)
    if args.out:
        write_records(args.out, records)
    else:
        for rec in records:
            print(json.dumps(rec))
    if args.plot:
        path = plot_attention(records, args.plot)
        if path is None:
            print("plot skipped (matplotlib not installed or no alpha data)",
                  file=sys.stderr)
    words = " ".join(model.vocab.decode(caption.tokens))
    print(f"# {video.video_id}: {words}", file=sys.stderr)
    return EXIT_OK


ABLATION_LADDER = ["", "sa", "sa,ps", "sa,ps,ca"]


def cmd_ablate(args) -> int:
    config = _load_config(args.config)
    if args.epochs:
        config = config.replace(epochs=args.epochs)
    examples, vocab = load_corpus(args.corpus, config)
    train_set, val_set = _split(examples, args.val_fraction, config.seed)
    if not val_set:
        val_set = train_set
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = []
    for spec in ABLATION_LADDER:
        flags = AblationFlags.from_spec(spec)
        scores = []
        for seed in seeds:
            cfg = config.replace(seed=seed)
            result = train(train_set, vocab, cfg, flags, val_examples=val_set)
            candidates, references = {}, {}
            for ex in val_set:
                vid = ex.video.video_id
                caption = decode_beam(ex.video, result.model)
                candidates[vid] = result.model.vocab.decode(caption.tokens)
                references[vid] = [result.model.vocab.decode(c.tokens)
                                   for c in ex.captions]
            report = evaluate(candidates, references)
            scores.append(report.scores)
        rows.append((flags.label(), scores))
    print(f"{'model':<16} {'B@4':>8} {'CIDEr-D':>9} {'ROUGE_L':>9}  (mean over seeds)")
    out_rows = []
    for label, scores in rows:
        mean = {k: float(np.mean([s[k] for s in scores])) for k in scores[0]}
        print(f"{label:<16} {mean['bleu4']:>8.4f} {mean['cider_d']:>9.4f} "
              f"{mean['rouge_l']:>9.4f}")
        out_rows.append({"label": label, "mean": mean, "per_seed": scores})
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "ablation.json").write_text(json.dumps(out_rows, indent=1))
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _load_config(args.config)
    report = run_bench(config, max_len=args.max_len, repeats=args.repeats,
                       seed=args.seed)
    print(json.dumps(report.to_dict(), indent=1))
    g, b = report.grouped, report.baseline
    print(f"# grouped slope {g.slope:.3e} s/step (p={g.p_value:.2e}); "
          f"baseline slope {b.slope:.3e} s/step (p={b.p_value:.2e}); "
          f"step-time ratio {report.step_time_ratio:.2f}x", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgcap",
        description="Caption videos by grouping frames around phrases of the "
                    "partially decoded caption.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-corpus", help="write a synthetic corpus directory")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=24)
    p.add_argument("--concepts", type=int, default=10)
    p.add_argument("--segments", type=int, default=4)
    p.add_argument("--frames-per-segment", type=int, default=3)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--d-appearance", type=int, default=8)
    p.add_argument("--d-motion", type=int, default=8)
    p.set_defaults(func=cmd_make_corpus)

    p = sub.add_parser("train", help="train a model on a corpus directory")
    p.add_argument("--config")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ablation", default="sa,ps,ca",
                   help="enabled parts: comma list from {sa,ps,ca,gw}, or 'none'")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--val-fraction", type=float, default=0.0)
    p.add_argument("--embeddings", help="optional pretrained word-vector file")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="caption feature files with a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True,
                   help="feature file, corpus dir, or manifest of paths")
    p.add_argument("--out")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--max-len", type=int)
    p.add_argument("--dump-attn", help="directory for per-step attention dumps")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score candidates against references")
    p.add_argument("--candidates", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="dump per-step grouping records")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out")
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--max-len", type=int)
    p.add_argument("--plot", help="directory for an attention heatmap png")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("ablate", help="train and score the component ladder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--epochs", type=int)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="per-step decode latency vs step index")
    p.add_argument("--config")
    p.add_argument("--max-len", type=int, default=20)
    p.add_argument("--repeats", type=int, default=25)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"sgcap: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"sgcap: missing file: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"sgcap: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
