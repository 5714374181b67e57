"""Small constructed corpora with known answers.

``adjacent_corpus``: every sentence holds two targets, each immediately
followed by an opinion word. One instance per target, so the same sentence
appears with two different labelings and only the target position tells
them apart.

``food_service_corpus``: "The X is A but the Y is ADV B" sentences where the
first target's opinion is A and the second's is "ADV B".
"""

from __future__ import annotations

import numpy as np

from .corpus import ROOT, DatasetSplit, Instance, Token, bio_encode

FILLERS = [f"w{i}" for i in range(40)]
NOUNS = [f"n{i}" for i in range(12)]
OPINIONS = [f"a{i}" for i in range(10)]


def _chain_heads(n: int) -> list[int]:
    return [ROOT] + list(range(n - 1))


def _make_instances(words, tags, heads, targets, opinions, name, sid):
    out = []
    for target, ops in zip(targets, opinions):
        labels = bio_encode(ops, len(words))
        tokens = tuple(Token(i, w, tags[i], heads[i]) for i, w in enumerate(words))
        out.append(Instance(tokens, target, tuple(labels), split_id=name, sentence_id=sid))
    return out


def adjacent_corpus(num_sentences: int, seed: int = 0, name: str = "synthetic",
                    min_len: int = 8, max_len: int = 14) -> DatasetSplit:
    if min_len < 5:
        raise ValueError("sentences need at least 5 tokens to hold two separated target/opinion pairs")
    rng = np.random.default_rng(seed)
    split = DatasetSplit(name)
    for s in range(num_sentences):
        n = int(rng.integers(min_len, max_len + 1))
        words = [FILLERS[k] for k in rng.integers(0, len(FILLERS), n)]
        tags = ["X"] * n
        # two target positions with room for the following opinion word and a gap between pairs
        while True:
            t1, t2 = sorted(rng.choice(n - 1, size=2, replace=False).tolist())
            if t2 - t1 >= 3:
                break
        for t in (t1, t2):
            words[t] = NOUNS[int(rng.integers(len(NOUNS)))]
            words[t + 1] = OPINIONS[int(rng.integers(len(OPINIONS)))]
            tags[t], tags[t + 1] = "NN", "JJ"
        targets = [(t1, t1 + 1), (t2, t2 + 1)]
        opinions = [[(t1 + 1, t1 + 2)], [(t2 + 1, t2 + 2)]]
        split.instances += _make_instances(words, tags, _chain_heads(n), targets, opinions, name, f"{name}-{s}")
    return split


FOOD_SERVICE_SENTENCE = "The food is good but the service is extremely slow".split()


def food_service_corpus(num_sentences: int, seed: int = 0, name: str = "food-service") -> DatasetSplit:
    rng = np.random.default_rng(seed)
    nouns = NOUNS + ["food", "service"]
    adjs = OPINIONS + ["good", "slow"]
    advs = ["very", "extremely", "quite", "really"]
    tags = ["DT", "NN", "VBZ", "JJ", "CC", "DT", "NN", "VBZ", "RB", "JJ"]
    # hand-made tree rooted at the first "is"
    heads = [1, 2, ROOT, 2, 2, 6, 7, 2, 9, 7]
    split = DatasetSplit(name)
    for s in range(num_sentences):
        n1, n2 = rng.choice(len(nouns), size=2, replace=False)
        words = ["The", nouns[n1], "is", adjs[int(rng.integers(len(adjs)))], "but", "the", nouns[n2], "is",
                 advs[int(rng.integers(len(advs)))], adjs[int(rng.integers(len(adjs)))]]
        split.instances += _make_instances(words, tags, heads, [(1, 2), (6, 7)], [[(3, 4)], [(8, 10)]],
                                           name, f"{name}-{s}")
    return split


def food_service_instances() -> list[Instance]:
    """The food/service sentence with its two gold labelings."""
    split = food_service_corpus(1)
    return [Instance(tuple(Token(i, w, t.pos_tag, t.head) for i, (w, t) in enumerate(zip(FOOD_SERVICE_SENTENCE, inst.tokens))),
                     inst.target_span, inst.gold_labels, sentence_id="food-service")
            for inst in split.instances]
