#!/usr/bin/env python3
"""Transmitter-strategy comparison: context-aware vs random masking.

Runs both masking policies at the given ratios through the harness
(iterative detection at the receiver) and reports masked-token recovery.

    python scripts/masking_comparison.py --out-dir runs/masking --snr 5,10
"""

import argparse
from pathlib import Path

from tokencom import ExperimentConfig, generate_markov_corpus
from tokencom.corpus import write_token_lines
from tokencom.harness import format_summary, run_experiment, write_plot_data


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/masking")
    ap.add_argument("--corpus", help="pre-tokenized corpus; default: generate synthetic")
    ap.add_argument("--vocab", type=int, default=256)
    ap.add_argument("--ratios", default="0.1,0.3")
    ap.add_argument("--snr", default="100")
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--iters", type=int, default=6)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = args.corpus
    if corpus is None:
        corpus = out_dir / "markov.ids"
        if not Path(corpus).exists():
            ids = generate_markov_corpus(args.vocab, args.trials * 128, seed=1)
            write_token_lines(ids, corpus)
            print(f"generated {corpus}")

    snrs = [float(s) for s in args.snr.split(",")]
    for ratio in (float(r) for r in args.ratios.split(",")):
        for mode in ("context_aware", "random"):
            config = ExperimentConfig(
                vocab_size=args.vocab,
                corpus_path=str(corpus),
                snr_sweep_db=snrs,
                masking_mode=mode,
                masking_ratio=ratio,
                detector="iterative",
                max_iters=args.iters,
                model="ngram",
                ngram_alpha=1.0,
                trials=args.trials,
                seed=args.seed,
                out_path=str(out_dir / f"{mode}_r{ratio}.csv"),
            )
            result = run_experiment(config, verbose=False)
            write_plot_data(result.summary, out_dir / f"{mode}_r{ratio}_agg.csv")
            finals = [e for e in result.summary if e["iteration"] == args.iters]
            print(f"{mode} r={ratio}:")
            for line in format_summary(finals):
                print(" ", line)


if __name__ == "__main__":
    main()
