"""Command line entry points: run experiments, aggregate results, make corpora."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .corpus import generate_markov_corpus, write_token_lines
from .harness import format_summary, run_experiment, summarize_rows, write_plot_data


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokencom",
        description="Context-aware wireless token communication simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment from a YAML config")
    run.add_argument("config", help="path to YAML config file")
    run.add_argument("--seed", type=int, help="override: master seed")
    run.add_argument(
        "--snr", help="override: comma-separated SNR sweep in dB, e.g. '0,5,10'"
    )
    run.add_argument("--ratio", type=float, help="override: masking ratio r")
    run.add_argument("--iters", type=int, help="override: detector max iterations")
    run.add_argument("--detector", choices=("ml", "iterative"), help="override: detector")
    run.add_argument(
        "--masking", choices=("none", "random", "context_aware"), help="override: masking mode"
    )
    run.add_argument(
        "--model", choices=("uniform", "ngram", "external"), help="override: context model"
    )
    run.add_argument("--trials", type=int, help="override: trials per sweep point")
    run.add_argument("--out", help="override: results CSV path")
    run.add_argument("--corpus", help="override: corpus path")
    run.add_argument(
        "--fading", choices=("block", "per_token"),
        help="override: fading granularity (default block: one draw per packet)",
    )
    run.add_argument("--quiet", action="store_true", help="suppress progress/summary output")

    plot = sub.add_parser("plot", help="aggregate a results CSV into plot data")
    plot.add_argument("results", help="results CSV produced by `run`")
    plot.add_argument("--out", required=True, help="aggregated plot-data CSV path")
    plot.add_argument("--png", help="also render a PNG (requires matplotlib)")

    gen = sub.add_parser("gen-corpus", help="generate a synthetic Markov corpus")
    gen.add_argument("--vocab", type=int, required=True, help="vocabulary size")
    gen.add_argument("--tokens", type=int, required=True, help="number of tokens")
    gen.add_argument(
        "--entropy", type=float, default=2.0, help="transition entropy in bits (default 2.0)"
    )
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output corpus path")
    gen.add_argument("--tokens-per-line", type=int, default=128)
    return parser


def _run(args) -> int:
    overrides = {
        "seed": args.seed,
        "masking_ratio": args.ratio,
        "max_iters": args.iters,
        "detector": args.detector,
        "masking_mode": args.masking,
        "model": args.model,
        "trials": args.trials,
        "out_path": args.out,
        "corpus_path": args.corpus,
        "fading": args.fading,
    }
    if args.snr is not None:
        overrides["snr_sweep_db"] = [float(s) for s in args.snr.split(",")]
    try:
        config = load_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = run_experiment(config, verbose=not args.quiet)
    if args.quiet:
        print(result.csv_path)
    else:
        print(f"run {result.run_id}: wrote {result.csv_path}")
        if result.mask_trace_path:
            print(f"mask trace: {result.mask_trace_path}")
    return 0


def _plot(args) -> int:
    summary = summarize_rows(args.results)
    write_plot_data(summary, args.out)
    for line in format_summary(summary):
        print(line)
    if args.png:
        from .harness import render_plot

        render_plot(summary, args.png)
        print(f"wrote {args.png}")
    print(f"wrote {args.out}")
    return 0


def _gen_corpus(args) -> int:
    ids = generate_markov_corpus(
        args.vocab, args.tokens, transition_entropy_bits=args.entropy, seed=args.seed
    )
    write_token_lines(ids, args.out, tokens_per_line=args.tokens_per_line)
    print(f"wrote {args.tokens} tokens (V={args.vocab}) to {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    if args.command == "plot":
        return _plot(args)
    return _gen_corpus(args)


if __name__ == "__main__":
    raise SystemExit(main())
