#!/usr/bin/env python3
"""Build the pinned tiny test-double snapshot used by the sidecar tests.

A 64-token WordPiece vocabulary, a 2-layer BERT-style masked LM with
deterministically seeded (never trained) weights, and a matching
sentence-embedding model (mean pooling over the same tiny encoder). A
model.lock file records the sha256 of every weight/config file; golden
fixtures are only valid against a snapshot with the same lock.

    python sidecar/scripts/make_tiny_snapshot.py sidecar/tests/tiny_snapshot
"""

import hashlib
import json
import sys
from pathlib import Path

VOCAB = (
    "[PAD] [UNK] [CLS] [SEP] [MASK] "
    "the a an and is was on in of to cat dog bird sat ran sun moon day night "
    "man woman child big small old new good bad red blue tree house said went "
    "came one two mat fast slow . , ! ? ##s ##ed ##ing ##er ##ly it he she "
    "they we you i this that black"
).split()


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build(root: Path, seed: int = 20240801):
    import torch
    from sentence_transformers import SentenceTransformer, models
    from transformers import BertConfig, BertForMaskedLM, BertTokenizerFast

    assert len(VOCAB) == 64, f"vocabulary must stay at 64 entries, got {len(VOCAB)}"
    root.mkdir(parents=True, exist_ok=True)
    mlm_dir = root / "mlm"
    embed_dir = root / "embed"
    mlm_dir.mkdir(exist_ok=True)

    vocab_file = mlm_dir / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n")
    tokenizer = BertTokenizerFast(vocab=str(vocab_file), do_lower_case=True)
    if tokenizer.vocab_size != 64:
        raise RuntimeError(f"tokenizer loaded {tokenizer.vocab_size} entries, expected 64")
    tokenizer.save_pretrained(mlm_dir)

    config = BertConfig(
        vocab_size=64,
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=192,
    )
    torch.manual_seed(seed)
    model = BertForMaskedLM(config)
    model.eval()
    model.save_pretrained(mlm_dir)

    encoder = models.Transformer(str(mlm_dir), max_seq_length=192)
    pooling = models.Pooling(encoder.get_word_embedding_dimension(), pooling_mode="mean")
    SentenceTransformer(modules=[encoder, pooling]).save(str(embed_dir))

    lock = {
        "seed": seed,
        "files": {
            str(p.relative_to(root)): sha256_file(p)
            for p in sorted(root.rglob("*"))
            if p.is_file() and p.suffix in (".safetensors", ".bin", ".json", ".txt")
        },
    }
    (root / "model.lock").write_text(json.dumps(lock, indent=2, sort_keys=True) + "\n")
    print(f"snapshot at {root} ({len(lock['files'])} files locked)")


if __name__ == "__main__":
    build(Path(sys.argv[1] if len(sys.argv) > 1 else "sidecar/tests/tiny_snapshot"))
