"""Command-line surface: training, transduction, evaluation, pretraining,
tuning, OOV correction, the WX codec, synthetic data generation, and error
reports.
"""

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import data_io, devanagari, embeddings, metrics, oov, synthetic, training
from .devanagari import (
    CharVocab,
    build_vocab,
    classify_errors,
    strip_trailing_repeats,
    wx_decode,
    wx_encode,
)
from .errors import CogtransError
from .models import ModelConfig, build_model, transduce_greedy
from .training import (
    Checkpoint,
    OptimizerSpec,
    TrainConfig,
    average_checkpoints,
    load_checkpoint,
    restore_model,
    save_checkpoint,
    train,
)


class CogtransArgumentParser(argparse.ArgumentParser):
    pass


def _model_config(args, extra=None):
    fields = {f.name for f in dataclasses.fields(ModelConfig)}
    kwargs = {}
    for name in ("architecture", "cell", "hidden_dim", "embed_dim", "dropout",
                 "l2", "num_layers", "num_heads", "d_model", "ffn_dim",
                 "chunk_size", "max_decode_len"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    for key, value in (extra or {}).items():
        if key in fields:
            kwargs[key] = value
    return ModelConfig(**kwargs).validate()


def _train_config(args, extra=None):
    kwargs = {}
    for name in ("batch_size", "max_epochs", "patience", "l2", "seed",
                 "val_fraction", "metrics_every"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    for key, value in (extra or {}).items():
        if key in fields:
            kwargs[key] = value
    return TrainConfig(**kwargs).validate()


def _opt_spec(args, extra=None):
    kwargs = {}
    if getattr(args, "optimizer", None) is not None:
        kwargs["kind"] = args.optimizer
    for name in ("lr", "decay", "momentum"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    fields = {f.name for f in dataclasses.fields(OptimizerSpec)}
    for key, value in (extra or {}).items():
        if key in fields:
            kwargs[key] = value
    return OptimizerSpec(**kwargs).normalized()


def _maybe_wx(pairs, script):
    """Corpus arrives in the declared script; modelling always runs on WX."""
    if script == "devanagari":
        return [(wx_encode(s), wx_encode(t)) for s, t in pairs]
    return pairs


def _default_ckpt_path(name):
    directory = os.environ.get(data_io.CHECKPOINT_DIR_ENV, ".")
    return os.path.join(directory, name)


def _loss_curve_svg(history, path):
    """Minimal SVG line chart of train/validation loss per epoch."""
    width, height, pad = 640, 400, 45
    xs = [c.epoch for c in history]
    series = {
        "train": [c.train_loss for c in history],
        "validation": [c.val_loss for c in history],
    }
    lo = min(min(v) for v in series.values())
    hi = max(max(v) for v in series.values())
    span = (hi - lo) or 1.0
    xspan = (max(xs) - min(xs)) or 1

    def pt(x, y):
        px = pad + (x - min(xs)) / xspan * (width - 2 * pad)
        py = height - pad - (y - lo) / span * (height - 2 * pad)
        return f"{px:.1f},{py:.1f}"

    colors = {"train": "#1f77b4", "validation": "#d62728"}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2:.0f}" y="20" text-anchor="middle" '
        f'font-size="14">loss per epoch</text>',
    ]
    for name, values in series.items():
        points = " ".join(pt(x, y) for x, y in zip(xs, values))
        parts.append(
            f'<polyline fill="none" stroke="{colors[name]}" '
            f'stroke-width="1.5" points="{points}"/>'
        )
    parts.append(
        f'<text x="{pad}" y="{height-10}" font-size="11">'
        f'epochs {min(xs)}..{max(xs)}; loss {lo:.4f}..{hi:.4f} '
        f'(blue train, red validation)</text>'
    )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))


# ---------------------------------------------------------------------------
# subcommands

def _cmd_train(args):
    run_cfg = data_io.load_config(args.config) if args.config else None
    pairs = data_io.load_cognate_tsv(args.data)
    script = args.script or (run_cfg.script if run_cfg else "raw")
    pairs = _maybe_wx(pairs, script)
    split = data_io.split_dataset(pairs, seed=args.split_seed)
    model_cfg = _model_config(args, run_cfg.model if run_cfg else None)
    train_cfg = _train_config(args, run_cfg.train if run_cfg else None)
    opt = _opt_spec(args, run_cfg.optimizer if run_cfg else None)
    embedding = None
    if args.embed_vectors:
        store = embeddings.WordVectorStore.load(args.embed_vectors)
        vocab = build_vocab(split.train + split.validation)
        table = np.zeros((len(vocab), store.dim))
        for i, sym in enumerate(vocab.symbols):
            if sym in store:
                table[i] = store[sym]
        if store.dim != model_cfg.embed_dim:
            raise CogtransError(
                f"embedding vectors have dimension {store.dim}, "
                f"model expects {model_cfg.embed_dim}"
            )
        embedding = table
    post = strip_trailing_repeats if model_cfg.architecture == "han" else None
    result = train(model_cfg, train_cfg, opt, split, embedding=embedding,
                   postprocess=post)
    ckpt = result.best
    if args.avg_last and args.avg_last > 1:
        avg = average_checkpoints(result.history, args.avg_last)
        ckpt = dataclasses.replace(result.best, params=avg)
    out = args.out or _default_ckpt_path(f"{model_cfg.architecture}.ckpt")
    save_checkpoint(ckpt, out)
    if args.plot:
        _loss_curve_svg(result.history, args.plot)
    test_metrics = {}
    if split.test:
        model = restore_model(ckpt)
        test_metrics = training.evaluate_model(model, split.test,
                                               postprocess=post)
    print(f"checkpoint: {out}")
    print(f"epochs run: {len(result.history)}  best epoch: {result.best.epoch}")
    print(f"best validation loss: {result.best.val_loss:.6f}")
    for key, value in sorted(test_metrics.items()):
        print(f"test {key}: {value:.4f}")
    return 0


def _cmd_transduce(args):
    ckpt = load_checkpoint(args.model)
    model = restore_model(ckpt)
    word = args.word
    if args.script == "devanagari":
        word = wx_encode(word)
    result = transduce_greedy(model, word)
    out = result.word
    if ckpt.model_config.architecture == "han":
        out = strip_trailing_repeats(out)
    if args.script == "devanagari":
        out = wx_decode(out)
    print(out)
    if args.attention:
        for row in result.attention:
            print("\t".join(f"{x:.4f}" for x in row))
    if result.truncated:
        print("warning: decode truncated at max length", file=sys.stderr)
    return 0


def _predictions(model, pairs, architecture):
    post = strip_trailing_repeats if architecture == "han" else None
    triples = []
    for src, gold in pairs:
        pred = transduce_greedy(model, src).word
        if post:
            pred = post(pred)
        triples.append((src, gold, pred))
    return triples


def _cmd_evaluate(args):
    pairs = _maybe_wx(data_io.load_cognate_tsv(args.data), args.script)
    reports = {}
    for path in args.model:
        ckpt = load_checkpoint(path)
        model = restore_model(ckpt)
        arch = ckpt.model_config.architecture
        triples = _predictions(model, pairs, arch)
        tags_fn = None
        if args.script in ("devanagari", "wx"):
            def tags_fn(s, g, p):
                return classify_errors(s, g, p, script="wx")
        report = metrics.score_items(triples, tags_fn=tags_fn)
        name = arch if arch not in reports else os.path.basename(path)
        reports[name] = report
        if args.report:
            base, ext = os.path.splitext(args.report)
            out = args.report if len(args.model) == 1 else f"{base}-{name}{ext}"
            metrics.write_report_tsv(report, out)
    print(metrics.summary_table(reports))
    return 0


def _cmd_pretrain_embed(args):
    if args.mode == "lm":
        with open(args.corpus, "r", encoding="utf-8") as fh:
            text = fh.read()
        cfg = embeddings.CharLMConfig(
            window=args.window, hidden=args.hidden, dropout=args.dropout,
            direction=args.direction, embed_dim=args.embed_dim,
            max_epochs=args.max_epochs, seed=args.seed,
        )
        lm, table, ppl = embeddings.train_char_lm(text, cfg)
        vocab = lm.vocab
        print(f"held-out perplexity: {ppl:.4f}")
    else:
        store = embeddings.WordVectorStore.load(args.vectors)
        with open(args.corpus, "r", encoding="utf-8") as fh:
            tokens = fh.read().split()
        table, missing = embeddings.ft_avg_embed(store, tokens)
        vocab = CharVocab({c for t in tokens for c in t})
        table, missing = embeddings.ft_avg_embed(store, tokens, vocab=vocab)
        real = [m for m in missing if m not in CharVocab.SPECIALS]
        if real:
            print(f"uncovered characters: {' '.join(real)}", file=sys.stderr)
    out_store = embeddings.WordVectorStore({
        sym: table.table.data[i]
        for i, sym in enumerate(vocab.symbols)
        if sym not in CharVocab.SPECIALS
    })
    out_store.save(args.out)
    print(f"wrote {len(out_store)} character vectors to {args.out}")
    return 0


def _cmd_tune(args):
    pairs = _maybe_wx(data_io.load_cognate_tsv(args.data), args.script)
    split = data_io.split_dataset(pairs, seed=args.split_seed)
    space = {}
    for axis in args.axis:
        if "=" not in axis:
            raise CogtransError(f"--axis expects name=v1,v2,..., got {axis!r}")
        name, values = axis.split("=", 1)
        space[name] = [data_io._coerce(v) for v in values.split(",")]
    rows, skipped = training.grid_search(
        space, _model_config(args), _train_config(args), _opt_spec(args),
        split, base_seed=args.seed or 0,
    )
    print(training.grid_table(rows, sorted(space), metric=args.metric))
    for entry in skipped:
        reason = entry.pop("reason")
        print(f"skipped {entry}: {reason}", file=sys.stderr)
    return 0


def _cmd_oov_correct(args):
    records = oov.load_pipeline_file(args.sentences, args.matrices)
    ckpt = load_checkpoint(args.model)
    model = restore_model(ckpt)
    post = (strip_trailing_repeats
            if ckpt.model_config.architecture == "han" else None)

    def transducer(word):
        out = transduce_greedy(model, word).word
        return post(out) if post else out

    with open(args.shortlist_corpus, "r", encoding="utf-8") as fh:
        corpus = fh.read().splitlines()
    sizes = [int(s) for s in args.sizes.split(",")]
    if args.references:
        refs = [line.split() for line in
                open(args.references, "r", encoding="utf-8").read().splitlines()
                if line.strip()]
        rows = oov.evaluate_pipeline(records, refs, corpus, sizes, transducer)
        print("K\tbaseline\tcorrected\tdelta")
        for row in rows:
            print(f"{row['K']}\t{row['baseline']:.2f}\t"
                  f"{row['corrected']:.2f}\t{row['delta']:+.2f}")
    else:
        shortlist = oov.build_shortlist(corpus, sizes[0])
        out_path = args.out or "corrected.tsv"
        with open(out_path, "w", encoding="utf-8") as fh:
            for rec in records:
                corrected, _ = oov.correct_translation(
                    rec, oov.detect_oov(rec.source, shortlist), transducer)
                fh.write(" ".join(rec.source) + "\t" + " ".join(corrected) + "\n")
        print(f"wrote corrected corpus to {out_path}")
    return 0


def _cmd_wx(args):
    convert = wx_encode if args.mode == "encode" else wx_decode
    words = args.word if args.word else sys.stdin.read().split()
    for word in words:
        print(convert(word))
    return 0


def _cmd_synth_gen(args):
    pairs = synthetic.generate_pairs(args.seed, args.n)
    data_io.save_cognate_tsv(pairs, args.out)
    stats = synthetic.dataset_stats(pairs)
    print(f"wrote {stats['n']} pairs to {args.out} "
          f"({stats['identity']} identity)")
    return 0


def _cmd_error_report(args):
    triples = []
    with open(args.predictions, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise CogtransError(
                    f"line {line_no}: expected source<TAB>gold<TAB>prediction"
                )
            triples.append(tuple(parts))

    def tags_fn(s, g, p):
        return classify_errors(s, g, p, script=args.script)

    report = metrics.score_items(triples, tags_fn=tags_fn)
    metrics.write_report_tsv(report, args.out)
    counts = {}
    for item in report.items:
        for tag in item.tags:
            counts[tag] = counts.get(tag, 0) + 1
    print(f"wrote {report.n_items} records to {args.out}")
    for tag in sorted(counts):
        print(f"{tag}\t{counts[tag]}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = CogtransArgumentParser(prog="cogtrans")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p):
        p.add_argument("--arch", dest="architecture",
                       choices=("seq2seq", "am", "han", "tn"), default=None)
        p.add_argument("--cell", choices=("lstm", "gru"), default=None)
        p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
        p.add_argument("--embed-dim", dest="embed_dim", type=int)
        p.add_argument("--dropout", type=float)
        p.add_argument("--num-layers", dest="num_layers", type=int)
        p.add_argument("--num-heads", dest="num_heads", type=int)
        p.add_argument("--d-model", dest="d_model", type=int)
        p.add_argument("--ffn-dim", dest="ffn_dim", type=int)
        p.add_argument("--max-decode-len", dest="max_decode_len", type=int)

    def add_train_flags(p):
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--epochs", dest="max_epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--l2", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--val-fraction", dest="val_fraction", type=float)
        p.add_argument("--metrics-every", dest="metrics_every", type=int)
        p.add_argument("--optimizer", choices=training.OPTIMIZER_KINDS)
        p.add_argument("--lr", type=float)
        p.add_argument("--decay", type=float)
        p.add_argument("--momentum", type=float)
        p.add_argument("--split-seed", dest="split_seed", type=int, default=0)

    p = sub.add_parser("train", help="fit a transduction model")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--script", choices=("devanagari", "wx", "raw"))
    p.add_argument("--embed-vectors", dest="embed_vectors")
    p.add_argument("--avg-last", dest="avg_last", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--plot")
    add_model_flags(p)
    add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("transduce", help="transduce one word")
    p.add_argument("--model", required=True)
    p.add_argument("--word", required=True)
    p.add_argument("--script", choices=("devanagari", "wx", "raw"),
                   default="raw")
    p.add_argument("--attention", action="store_true")
    p.set_defaults(func=_cmd_transduce)

    p = sub.add_parser("evaluate", help="score checkpoints on a cognate file")
    p.add_argument("--model", action="append", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--script", choices=("devanagari", "wx", "raw"),
                   default="raw")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("pretrain-embed", help="pretrain character embeddings")
    p.add_argument("mode", choices=("lm", "ftavg"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", help="word-vector file (ftavg mode)")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--hidden", type=int, default=75)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--direction", choices=("forward", "bidirectional"),
                   default="forward")
    p.add_argument("--embed-dim", dest="embed_dim", type=int, default=32)
    p.add_argument("--epochs", dest="max_epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_pretrain_embed)

    p = sub.add_parser("tune", help="hyperparameter grid search")
    p.add_argument("--data", required=True)
    p.add_argument("--axis", action="append", required=True,
                   help="name=v1,v2,... (repeatable)")
    p.add_argument("--script", choices=("devanagari", "wx", "raw"),
                   default="raw")
    p.add_argument("--metric", choices=("bleu", "ss", "wa"), default="bleu")
    add_model_flags(p)
    add_train_flags(p)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("oov-correct", help="correct OOV words in MT output")
    p.add_argument("--sentences", required=True)
    p.add_argument("--matrices", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--shortlist-corpus", dest="shortlist_corpus",
                   required=True)
    p.add_argument("--sizes", default="15000")
    p.add_argument("--references")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_oov_correct)

    p = sub.add_parser("wx", help="convert between Devanagari and WX")
    p.add_argument("mode", choices=("encode", "decode"))
    p.add_argument("word", nargs="*")
    p.set_defaults(func=_cmd_wx)

    p = sub.add_parser("synth-gen", help="generate a synthetic cognate corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth_gen)

    p = sub.add_parser("error-report", help="tag and aggregate prediction errors")
    p.add_argument("--predictions", required=True,
                   help="TSV of source, gold, prediction")
    p.add_argument("--script", choices=("devanagari", "wx"),
                   default="devanagari")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_error_report)

    return parser


def run_cli(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CogtransError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    raise SystemExit(run_cli())
