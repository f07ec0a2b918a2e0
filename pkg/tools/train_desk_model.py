#!/usr/bin/env python3
"""Train the bundled desk classifier and write its weight file.

This is a one-off: the repository ships the resulting .npz under
src/tilefool/modelzoo/weights/, so nothing at test or run time ever trains a
model. Re-run it only to regenerate those weights (or to train on real
CIFAR-10 batches by passing --source cifar10 with CIFAR10_DIR set).

The training set is the first --per-class items of each class (index order,
not random sampling), so a given argument tuple always reproduces the same
weights bit-for-bit.

Usage:
    python tools/train_desk_model.py
    python tools/train_desk_model.py --epochs 10 --per-class 500
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from tilefool.modelzoo.data import get_data_source
from tilefool.modelzoo.smallcnn import accuracy, desk_architecture, train_classifier

DESK_MEAN = 0.5
DESK_STD = 0.5


def load_split(source, split: str, per_class: int) -> tuple[np.ndarray, np.ndarray]:
    images, labels = [], []
    for cls in range(source.class_count):
        available = source.per_class_count(split, cls)
        if available < per_class:
            raise SystemExit(f"class {cls} has only {available} {split} items, "
                             f"need {per_class}")
        for i in range(per_class):
            images.append(source.load_item(split, cls, i))
            labels.append(cls)
    return np.stack(images), np.asarray(labels)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--source", default="synth10", help="dataset source id")
    ap.add_argument("--per-class", type=int, default=300,
                    help="training items per class (default 300)")
    ap.add_argument("--val-per-class", type=int, default=100)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--model-seed", type=int, default=42,
                    help="weight initialization seed")
    ap.add_argument("--train-seed", type=int, default=1,
                    help="batch shuffling seed")
    ap.add_argument("-o", "--output",
                    default="src/tilefool/modelzoo/weights/desk_cnn_cifar10.npz")
    args = ap.parse_args()

    source = get_data_source(args.source)
    print(f"[desk] loading {args.source}: {args.per_class}/class train, "
          f"{args.val_per_class}/class validation")
    train_x, train_y = load_split(source, "train", args.per_class)
    val_x, val_y = load_split(source, "validation", args.val_per_class)

    net = desk_architecture(np.random.default_rng(args.model_seed))
    t0 = time.time()
    train_classifier(net, (train_x - DESK_MEAN) / DESK_STD, train_y,
                     epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                     seed=args.train_seed, log_every=1)
    print(f"[desk] trained in {time.time() - t0:.0f}s")

    train_acc = accuracy(net, (train_x - DESK_MEAN) / DESK_STD, train_y)
    val_acc = accuracy(net, (val_x - DESK_MEAN) / DESK_STD, val_y)
    print(f"[desk] train accuracy {train_acc:.3f}  validation accuracy {val_acc:.3f}")
    if val_acc < 0.60:
        print("[desk] validation accuracy below 0.60; NOT writing weights",
              file=sys.stderr)
        return 1

    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    np.savez(out, **net.state_dict())
    print(f"[desk] wrote {out} ({out.stat().st_size / 1024:.0f} KiB)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
