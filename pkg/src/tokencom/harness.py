"""Monte Carlo experiment orchestration over SNR sweeps and masking modes.

One trial: draw a fading block, mask the packet per the configured
strategy, transmit the unmasked tokens, build the token likelihood
table, run the configured detector, and score every iteration against
the ground truth. One CSV row is appended per (snr, trial, iteration);
iterations past a detector fixed point repeat the converged estimate so
the table stays rectangular.

Reproducibility contract: identical config + seed produce byte-identical
CSV output except for the wall_ms column. Per-trial generators are
derived as SeedSequence(seed, spawn_key=(snr_index, trial)) so results
do not depend on execution order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import (
    noise_variance_for_snr_db,
    sample_fading,
    square_qam,
    token_loglik_table,
    transmit_packet,
)
from .codec import Vocabulary, symbols_per_token
from .config import ExperimentConfig
from .corpus import load_corpus
from .detect import detect, ml_detect
from .masking import MaskSet, context_aware_mask, mask_budget, random_mask
from .priors import MASK, PriorError, UniformModel, train_ngram
from .sidecar_client import ExternalModel, SidecarClient

RESULT_COLUMNS = [
    "run_id",
    "snr_db",
    "trial",
    "iteration",
    "masking_mode",
    "ratio",
    "detector",
    "token_acc",
    "masked_recovery_acc",
    "exact_match",
    "sim",
    "symbols_tx",
    "wall_ms",
]

MASK_TRACE_COLUMNS = ["run_id", "packet", "step", "position", "entropy_bits", "chosen"]

P_TX = 1.0


@dataclass
class RunResult:
    run_id: str
    csv_path: Path
    mask_trace_path: Path | None
    summary: list[dict]


def derive_run_id(config: ExperimentConfig) -> str:
    # The id names the experiment, not the destination file.
    payload = {k: v for k, v in config.to_dict().items() if k != "out_path"}
    canon = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def _build_model(config: ExperimentConfig, packets: np.ndarray, client: SidecarClient | None):
    if config.model == "uniform":
        return UniformModel(config.vocab_size)
    if config.model == "ngram":
        return train_ngram(list(packets), config.vocab_size, alpha=config.ngram_alpha)
    return ExternalModel(client, config.vocab_size, config.mask_token_id)


def _make_client(config: ExperimentConfig) -> SidecarClient | None:
    if not config.sidecar_url:
        return None
    client = SidecarClient(config.sidecar_url, timeout=config.sidecar_timeout)
    # Fail fast: nothing should start burning trials against a dead sidecar.
    client.health()
    return client


def _iteration_estimates(state, max_iters: int) -> list[np.ndarray]:
    ests = [rec.estimate for rec in state.trace]
    while len(ests) < max_iters:
        ests.append(ests[-1])
    return ests


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def compute_sim(client: SidecarClient, reference_text: str, detected_text: str) -> float | None:
    """Sentence-embedding cosine similarity via the sidecar; None on failure.

    SIM is an optional metric: any sidecar error is recorded as an absent
    value and the run continues.
    """
    try:
        return client.embed_sim(reference_text, detected_text)
    except PriorError:
        return None


def _trial_sim(client: SidecarClient | None, config: ExperimentConfig, truth, estimate):
    if client is None or not config.compute_sim:
        return None
    est = np.asarray(estimate)
    if (est == MASK).any():
        if config.mask_token_id is None:
            return None
        est = np.where(est == MASK, config.mask_token_id, est)
    try:
        ref_text = client.detokenize([int(t) for t in truth])
        det_text = client.detokenize([int(t) for t in est])
    except PriorError:
        return None
    return compute_sim(client, ref_text, det_text)


def run_experiment(config: ExperimentConfig, verbose: bool = False) -> RunResult:
    run_id = derive_run_id(config)
    client = _make_client(config)
    tokenizer = client.tokenize if (client and config.corpus_format == "text") else None
    packets = load_corpus(config.corpus_path, config.packet_len, config.vocab_size, tokenizer)
    model = _build_model(config, packets, client)
    vocab = Vocabulary(config.vocab_size, mask_token_id=config.mask_token_id)
    constellation = square_qam(config.bits_per_symbol)
    k = symbols_per_token(vocab, config.bits_per_symbol)
    t = config.packet_len
    budget = mask_budget(t, config.masking_ratio)

    ctx_mask_cache: dict[int, MaskSet] = {}
    rows: list[list[str]] = []
    trace_rows: list[list[str]] = []

    for si, snr in enumerate(config.snr_sweep_db):
        sigma2 = noise_variance_for_snr_db(snr, p_tx=P_TX, mean_h2=1.0)
        for trial in range(config.trials):
            t0 = time.perf_counter()
            rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(si, trial)))
            packet_idx = trial % len(packets)
            truth = packets[packet_idx]

            if config.masking_mode == "none":
                mask_set = MaskSet(frozenset(), 0.0, ())
            elif config.masking_mode == "random":
                mask_set = random_mask(truth, config.masking_ratio, rng)
            else:
                mask_set = ctx_mask_cache.get(packet_idx)
                if mask_set is None:
                    mask_set = context_aware_mask(
                        truth, config.masking_ratio, model, one_shot=config.one_shot_masking
                    )
                    ctx_mask_cache[packet_idx] = mask_set
                    for rec in mask_set.entropy_records:
                        trace_rows.append(
                            [
                                run_id,
                                str(packet_idx),
                                str(rec.step),
                                str(rec.position),
                                repr(rec.entropy_bits),
                                "1" if rec.chosen else "0",
                            ]
                        )
            if config.masking_mode != "none" and len(mask_set.positions) != budget:
                raise AssertionError(
                    f"mask budget violated: {len(mask_set.positions)} != {budget}"
                )

            masked = sorted(mask_set.positions)
            h = sample_fading(rng, size=t if config.fading == "per_token" else None)
            block = transmit_packet(
                truth, masked, vocab, constellation, h, P_TX, sigma2, rng
            )
            table = token_loglik_table(block, vocab, constellation, masked)

            if config.detector == "ml":
                estimates = [ml_detect(table)]
            else:
                state = detect(
                    table,
                    model,
                    masked,
                    max_iters=config.max_iters,
                    sequential=config.sequential_updates,
                    prior_weight=config.prior_weight,
                )
                estimates = _iteration_estimates(state, config.max_iters)

            sim = _trial_sim(client, config, truth, estimates[-1])
            wall_ms = (time.perf_counter() - t0) * 1e3
            symbols_tx = (t - len(masked)) * k

            for it, est in enumerate(estimates, start=1):
                token_acc = float(np.mean(est == truth))
                if masked:
                    recovery = float(np.mean(est[masked] == truth[masked]))
                else:
                    recovery = None
                rows.append(
                    [
                        run_id,
                        _fmt(float(snr)),
                        str(trial),
                        str(it),
                        config.masking_mode,
                        _fmt(float(config.masking_ratio)),
                        config.detector,
                        _fmt(token_acc),
                        _fmt(recovery),
                        _fmt(bool(np.array_equal(est, truth))),
                        _fmt(sim if it == len(estimates) else None),
                        str(symbols_tx),
                        _fmt(wall_ms),
                    ]
                )
        if verbose:
            print(f"[{run_id}] snr={snr} dB done ({config.trials} trials)")

    out_path = Path(config.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        writer.writerows(rows)

    mask_trace_path = None
    if config.masking_mode == "context_aware":
        mask_trace_path = out_path.with_suffix(out_path.suffix + ".mask_trace.csv")
        with open(mask_trace_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(MASK_TRACE_COLUMNS)
            writer.writerows(trace_rows)

    summary = summarize_rows(out_path)
    if verbose:
        for line in format_summary(summary):
            print(line)
    return RunResult(run_id, out_path, mask_trace_path, summary)


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, stderr


def summarize_rows(csv_path: str | Path) -> list[dict]:
    """Aggregate a results CSV: mean and stderr per sweep point and iteration."""
    groups: dict[tuple, dict[str, list[float]]] = {}
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULT_COLUMNS:
            raise ValueError(f"unexpected results schema: {reader.fieldnames}")
        for row in reader:
            key = (
                float(row["snr_db"]),
                row["masking_mode"],
                float(row["ratio"]),
                row["detector"],
                int(row["iteration"]),
            )
            bucket = groups.setdefault(
                key, {"token_acc": [], "masked_recovery_acc": [], "sim": [], "exact": []}
            )
            bucket["token_acc"].append(float(row["token_acc"]))
            if row["masked_recovery_acc"]:
                bucket["masked_recovery_acc"].append(float(row["masked_recovery_acc"]))
            if row["sim"]:
                bucket["sim"].append(float(row["sim"]))
            bucket["exact"].append(float(row["exact_match"]))
    out = []
    for key in sorted(groups):
        snr, mode, ratio, detector, iteration = key
        bucket = groups[key]
        acc_mean, acc_se = _mean_stderr(bucket["token_acc"])
        entry = {
            "snr_db": snr,
            "masking_mode": mode,
            "ratio": ratio,
            "detector": detector,
            "iteration": iteration,
            "n": len(bucket["token_acc"]),
            "token_acc_mean": acc_mean,
            "token_acc_stderr": acc_se,
            "exact_match_rate": float(np.mean(bucket["exact"])),
        }
        if bucket["masked_recovery_acc"]:
            rec_mean, rec_se = _mean_stderr(bucket["masked_recovery_acc"])
            entry["masked_recovery_mean"] = rec_mean
            entry["masked_recovery_stderr"] = rec_se
        if bucket["sim"]:
            sim_mean, sim_se = _mean_stderr(bucket["sim"])
            entry["sim_mean"] = sim_mean
            entry["sim_stderr"] = sim_se
        out.append(entry)
    return out


def format_summary(summary: list[dict]) -> list[str]:
    lines = []
    for entry in summary:
        parts = [
            f"snr={entry['snr_db']:g}dB",
            f"{entry['masking_mode']}(r={entry['ratio']:g})",
            f"{entry['detector']}@{entry['iteration']}",
            f"acc={entry['token_acc_mean']:.4f}+/-{entry['token_acc_stderr']:.4f}",
        ]
        if "masked_recovery_mean" in entry:
            parts.append(
                f"recov={entry['masked_recovery_mean']:.4f}"
                f"+/-{entry['masked_recovery_stderr']:.4f}"
            )
        if "sim_mean" in entry:
            parts.append(f"sim={entry['sim_mean']:.4f}")
        lines.append("  ".join(parts))
    return lines


def write_plot_data(summary: list[dict], out_path: str | Path):
    """Aggregated plot-ready CSV derived from a results file."""
    columns = [
        "snr_db",
        "masking_mode",
        "ratio",
        "detector",
        "iteration",
        "n",
        "token_acc_mean",
        "token_acc_stderr",
        "exact_match_rate",
        "masked_recovery_mean",
        "masked_recovery_stderr",
        "sim_mean",
        "sim_stderr",
    ]
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for entry in summary:
            writer.writerow([_fmt(entry.get(col)) for col in columns])


def render_plot(summary: list[dict], png_path: str | Path):
    """Token accuracy vs SNR, one line per (masking, detector, iteration)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series: dict[tuple, list[tuple[float, float, float]]] = {}
    for entry in summary:
        key = (entry["masking_mode"], entry["ratio"], entry["detector"], entry["iteration"])
        series.setdefault(key, []).append(
            (entry["snr_db"], entry["token_acc_mean"], entry["token_acc_stderr"])
        )
    fig, ax = plt.subplots(figsize=(7, 5))
    for key, pts in sorted(series.items()):
        pts.sort()
        snrs, means, errs = zip(*pts)
        mode, ratio, det, it = key
        label = f"{det} it{it} {mode}" + (f" r={ratio:g}" if mode != "none" else "")
        ax.errorbar(snrs, means, yerr=errs, marker="o", capsize=2, label=label)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("token accuracy")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
