#!/usr/bin/env python3
"""Benchmark the char-level bidirectional LSTM against a count-based bigram
oracle on a synthetic Markov-chain dialect task.

Generates `samples` strings per class from per-class bigram chains, splits
60/20/20, fits the add-one-smoothed bigram oracle on the training split,
trains the recurrent model with early stopping on dev, and reports test
accuracies for both.  The defaults reproduce the separability check in the
acceptance suite (oracle at 1.0, recurrent model within 0.02 of it).
"""
import argparse
import sys
import time

from dialectid import (
    ModelConfig,
    TrainConfig,
    build_vocab,
    encode_dataset,
    init_model,
    train,
)
from dialectid.data import tokenize
from dialectid.synth import BigramOracle, SynthSpec, gen_synthetic, split_dataset
from dialectid.training import evaluate_split


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--classes", type=int, default=3)
    parser.add_argument("--alphabet", type=int, default=8)
    parser.add_argument("--concentration", type=float, default=0.1)
    parser.add_argument("--samples", type=int, default=1000,
                        help="samples per class")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--embed-dim", type=int, default=16)
    parser.add_argument("--hidden-dim", type=int, default=16)
    parser.add_argument("--epochs", type=int, default=50)
    args = parser.parse_args(argv)

    spec = SynthSpec(classes=args.classes, alphabet=args.alphabet,
                     concentration=args.concentration,
                     samples_per_class=args.samples, seed=args.seed)
    started = time.perf_counter()
    full = gen_synthetic(spec)
    train_ds, dev_ds, test_ds = split_dataset(full, (0.6, 0.2, 0.2))
    print(f"generated {len(full)} samples "
          f"(splits {len(train_ds)}/{len(dev_ds)}/{len(test_ds)}) "
          f"in {time.perf_counter() - started:.1f}s")

    oracle_acc = BigramOracle(full.labels).fit(train_ds).accuracy(test_ds)
    print(f"bigram oracle test accuracy: {oracle_acc:.4f}")

    vocab = build_vocab(tokenize(s.text, "char") for s in train_ds.samples)
    model = init_model(
        ModelConfig(mode="char", cell="lstm", bidirectional=True,
                    embed_dim=args.embed_dim, hidden_dim=args.hidden_dim),
        train_ds.labels, vocab=vocab, seed=args.seed,
    )
    started = time.perf_counter()
    model, rep = train(
        model,
        encode_dataset(train_ds, vocab, "char"),
        encode_dataset(dev_ds, vocab, "char"),
        TrainConfig(epochs=args.epochs, seed=args.seed),
    )
    test_acc, _ = evaluate_split(model, encode_dataset(test_ds, vocab, "char"))
    print(f"blstm test accuracy: {test_acc:.4f} "
          f"(best epoch {rep.best_epoch}, {rep.epochs_run} epochs, "
          f"{time.perf_counter() - started:.1f}s)")
    print(f"gap to oracle: {oracle_acc - test_acc:+.4f}")
    return 0 if test_acc >= 0.95 and test_acc >= oracle_acc - 0.02 else 1


if __name__ == "__main__":
    sys.exit(main())
