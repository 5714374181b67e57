"""Train BiLSTM(G) with and without position embeddings on a constructed corpus
where the opinion word always follows the target, and print both test F1s.

Only the target position separates the two labelings of each sentence, so the
model without position embeddings cannot tell them apart.
"""

import argparse
import logging

from towe.config import EncoderConfig, GcnConfig, InputConfig, ModelConfig, TrainConfig
from towe.model import Predictor, train
from towe.synthetic import adjacent_corpus


def run(use_posn: bool, args) -> float:
    cfg = ModelConfig(InputConfig(use_posn=use_posn), EncoderConfig(kind=args.encoder), GcnConfig(args.gcn_layers))
    ck = train(adjacent_corpus(args.train_sentences, seed=args.seed, name="synthetic-train"), cfg,
               TrainConfig(epochs=args.epochs, patience=args.patience, seed=args.seed))
    test = adjacent_corpus(args.test_sentences, seed=args.seed + 1000, name="synthetic-test")
    f1 = 100 * Predictor(ck).evaluate(test).f1
    print(f"{'with' if use_posn else 'without':>7} POSN: best dev F1 {100 * ck.best_dev_f1:6.2f} "
          f"at epoch {ck.best_epoch:2d}, test F1 {f1:6.2f}")
    return f1


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--encoder", default="bilstm", choices=("cnn", "transformer", "bilstm", "onlstm"))
    p.add_argument("--gcn-layers", type=int, default=0)
    p.add_argument("--train-sentences", type=int, default=100)
    p.add_argument("--test-sentences", type=int, default=50)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    run(True, args)
    run(False, args)


if __name__ == "__main__":
    main()
