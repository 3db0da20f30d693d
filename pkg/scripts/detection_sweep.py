#!/usr/bin/env python3
"""Receiver-strategy sweep: iterative MAP detection vs plain ML.

Generates a synthetic Markov corpus (unless one is given), runs both
detectors across an SNR sweep through the Monte Carlo harness, and
writes raw results plus aggregated plot data.

    python scripts/detection_sweep.py --out-dir runs/detection
"""

import argparse
from pathlib import Path

from tokencom import ExperimentConfig, generate_markov_corpus
from tokencom.corpus import write_token_lines
from tokencom.harness import format_summary, run_experiment, write_plot_data


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/detection")
    ap.add_argument("--corpus", help="pre-tokenized corpus; default: generate synthetic")
    ap.add_argument("--vocab", type=int, default=256)
    ap.add_argument("--entropy", type=float, default=2.0)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--snr", default="0,5,10,15,20")
    ap.add_argument("--iters", type=int, default=6)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = args.corpus
    if corpus is None:
        corpus = out_dir / "markov.ids"
        if not Path(corpus).exists():
            ids = generate_markov_corpus(
                args.vocab, args.trials * 128, transition_entropy_bits=args.entropy, seed=1
            )
            write_token_lines(ids, corpus)
            print(f"generated {corpus}")

    snrs = [float(s) for s in args.snr.split(",")]
    for detector in ("ml", "iterative"):
        config = ExperimentConfig(
            vocab_size=args.vocab,
            corpus_path=str(corpus),
            snr_sweep_db=snrs,
            detector=detector,
            max_iters=args.iters,
            model="ngram",
            ngram_alpha=1.0,
            trials=args.trials,
            seed=args.seed,
            out_path=str(out_dir / f"{detector}.csv"),
        )
        result = run_experiment(config, verbose=True)
        write_plot_data(result.summary, out_dir / f"{detector}_agg.csv")
        print(f"{detector}: {result.csv_path}")
        for line in format_summary([e for e in result.summary if e["iteration"] in (1, args.iters)]):
            print(" ", line)


if __name__ == "__main__":
    main()
