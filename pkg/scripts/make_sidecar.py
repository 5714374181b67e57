"""Write frozen contextual vectors for a structured split as an ``.npz`` sidecar.

Each word gets the mean of its sub-word vectors from the last hidden layer of a
pretrained encoder (``pip install transformers``; pass a local model directory
when offline):

    python scripts/make_sidecar.py data/res14/train.jsonl data/res14/train.contextual.npz \
        --model /models/bert-base-uncased
"""

import argparse

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from towe.corpus import distinct_sentences, load_split
from towe.featurize import save_contextual


def word_vectors(words, tokenizer, model, max_length=512) -> np.ndarray:
    enc = tokenizer(words, is_split_into_words=True, return_tensors="pt", truncation=True, max_length=max_length)
    with torch.no_grad():
        hidden = model(**enc).last_hidden_state[0]
    word_ids = enc.word_ids(0)
    out = np.zeros((len(words), hidden.shape[-1]), dtype=np.float32)
    for i in range(len(words)):
        rows = [k for k, w in enumerate(word_ids) if w == i]
        if not rows:
            raise SystemExit(f"word {i} ({words[i]!r}) lost to truncation; sentence too long for the encoder")
        out[i] = hidden[rows].mean(0).numpy()
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("split", help="structured .jsonl split")
    p.add_argument("out", help="output .npz path")
    p.add_argument("--model", default="bert-base-uncased", help="model name or local directory")
    args = p.parse_args()

    tokenizer = AutoTokenizer.from_pretrained(args.model)
    model = AutoModel.from_pretrained(args.model).eval()
    split = load_split(args.split)
    vectors = {}
    for key, idx in distinct_sentences(split).items():
        vectors[key] = word_vectors(list(split.instances[idx[0]].words), tokenizer, model)
    save_contextual(args.out, vectors)
    print(f"{len(vectors)} sentences -> {args.out}")


if __name__ == "__main__":
    main()
