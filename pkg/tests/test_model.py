import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from towe.config import EncoderConfig, GcnConfig, InputConfig, ModelConfig, TrainConfig
from towe.corpus import ROOT, Instance, Token, bio_decode
from towe.featurize import FeatureTables, Vocab
from towe.gradcheck import check_gradients
from towe.model import (Checkpoint, Encoded, InferenceError, Predictor, TOWEModel, TrainingError, classify, decide,
                        dev_split, loss, predict, train)
from towe.synthetic import adjacent_corpus, food_service_corpus, food_service_instances


def tiny_config(kind="bilstm", gcn=0, mode="G", dropout=0.0, **inp):
    if mode == "G":
        inp_cfg = InputConfig(**{"word_dim": 8, "posn_dim": 4, "post_dim": 4, "dropout_rate": dropout, "max_distance": 10, **inp})
    else:
        inp_cfg = InputConfig.for_mode("B", **{"contextual_dim": 6, "posn_dim": 4, "dropout_rate": dropout, "max_distance": 10, **inp})
    enc = EncoderConfig(kind=kind, hidden_dim=8, cnn_channels=3, transformer_layers=1, transformer_heads=2,
                        transformer_ff_dim=8, transformer_dropout=0.0, onlstm_chunk_size=2)
    return ModelConfig(inp_cfg, enc, GcnConfig(gcn))


# ---------------------------------------------------------------- classify / loss

def test_classify_uniform():
    p = classify(torch.zeros(4, 5), torch.zeros(3, 5), torch.zeros(3))
    torch.testing.assert_close(p, torch.full((4, 3), 1 / 3))


def test_classify_shift_invariance():
    h = torch.randn(2, 4)
    w = torch.randn(3, 4)
    b = torch.randn(3)
    torch.testing.assert_close(classify(h, w, b), classify(h, w, b + 7.5))


def test_classify_matches_scalar_softmax():
    rng = np.random.default_rng(0)
    H, M = rng.normal(size=(2, 4)), rng.normal(size=(4, 3))
    got = classify(torch.from_numpy(H), torch.from_numpy(M.T)).numpy()
    for i in range(2):
        logits = [sum(H[i, k] * M[k, j] for k in range(4)) for j in range(3)]
        z = sum(math.exp(v) for v in logits)
        for j in range(3):
            assert abs(got[i, j] - math.exp(logits[j]) / z) < 1e-12
    assert np.all(np.abs(got.sum(1) - 1) < 1e-6) and np.all((got > 0) & (got < 1))


@given(st.integers(0, 10_000))
def test_classify_rows_sum_to_one(seed):
    g = torch.Generator().manual_seed(seed)
    p = classify(torch.randn(5, 6, generator=g) * 5, torch.randn(3, 6, generator=g))
    assert torch.all((p.sum(-1) - 1).abs() < 1e-6)


def test_loss_values():
    assert loss(torch.full((4, 3), 1 / 3), torch.tensor([0, 1, 2, 0])).item() == pytest.approx(math.log(3))
    assert loss(torch.eye(3), torch.tensor([0, 1, 2])).item() == 0
    assert loss(torch.tensor([[0.7, 0.2, 0.1]]), torch.tensor([0])).item() == pytest.approx(-math.log(0.7))


def test_classify_gradient_check():
    torch.manual_seed(0)
    h = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
    w = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
    b = torch.randn(3, dtype=torch.float64, requires_grad=True)
    gold = torch.tensor([0, 2, 1])
    errors = check_gradients(lambda: loss(classify(h, w, b), gold), [("h", h), ("w", w), ("b", b)])
    assert max(errors.values()) < 1e-4, errors


# ---------------------------------------------------------------- decisions

def test_ties_prefer_o_then_b():
    assert decide(np.array([[1 / 3] * 3, [0.4, 0.4, 0.2], [0.2, 0.4, 0.4], [0.1, 0.2, 0.7]])) == ["O", "O", "B", "I"]


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(0.1, 10))
def test_scaling_logits_keeps_label(logits, lam):
    lg = torch.tensor(logits, dtype=torch.float64)
    assert decide(torch.softmax(lg, 0).numpy()[None]) == decide(torch.softmax(lam * lg, 0).numpy()[None])


# ---------------------------------------------------------------- end-to-end gradient

@pytest.mark.parametrize("kind", ["cnn", "transformer", "bilstm", "onlstm"])
def test_end_to_end_gradient_check(kind):
    torch.manual_seed(0)
    split = adjacent_corpus(1, seed=0, min_len=5, max_len=5)
    cfg = tiny_config(kind, gcn=1, train_word_vectors=True, max_distance=3)
    tables = FeatureTables.build(cfg.input, Vocab.from_instances(split), Vocab.from_instances(split, "tag"))
    model = TOWEModel(cfg, tables).double().eval()
    for m in model.modules():
        if isinstance(m, torch.nn.LayerNorm):
            torch.nn.init.normal_(m.weight)
    data = Encoded(split.instances[:2], cfg, tables)
    batch = data.batch([0, 1], torch.float64)

    def f():
        logits = model(batch)
        return torch.nn.functional.cross_entropy(logits.reshape(-1, 3), batch["labels"].reshape(-1), ignore_index=-100)

    errors = check_gradients(f, [(n, p) for n, p in model.named_parameters() if p.requires_grad])
    assert max(errors.values()) < 1e-4, errors


# ---------------------------------------------------------------- training

def test_dev_split_is_seeded_fraction():
    tr, dev = dev_split(50, 0.2, seed=3)
    assert len(dev) == 10 and not set(tr) & set(dev) and len(tr) + len(dev) == 50
    assert dev_split(50, 0.2, seed=3) == (tr, dev)
    assert dev_split(50, 0.2, seed=4) != (tr, dev)


def test_toy_corpus_learned():
    # 10 instances; the opinion is always the token after the target
    split = adjacent_corpus(5, seed=0)
    assert len(split) == 10
    cfg = ModelConfig(InputConfig(), EncoderConfig(), GcnConfig(0))
    # 8 training instances: one per step so 50 epochs are 400 updates
    ck = train(split, cfg, TrainConfig(epochs=50, batch_size=1, seed=1))
    assert ck.best_dev_f1 >= 0.95
    assert ck.best_dev_f1 == max(r["dev_f1"] for r in ck.history)


def test_zero_learning_rate_changes_nothing():
    split = adjacent_corpus(10, seed=1)
    cfg = tiny_config(dropout=0.5)
    ck = train(split, cfg, TrainConfig(learning_rate=0.0, epochs=3, seed=2))
    torch.manual_seed(2)
    tables = FeatureTables.build(cfg.input, Vocab.from_instances(split), Vocab.from_instances(split, "tag"), seed=2)
    fresh = TOWEModel(cfg, tables)
    for k, v in fresh.state_dict().items():
        assert torch.equal(v, ck.state[k]), k
    assert len({r["dev_f1"] for r in ck.history}) == 1


def test_same_seed_same_trajectory():
    split = adjacent_corpus(10, seed=1)
    cfg = tiny_config(dropout=0.3)
    a = train(split, cfg, TrainConfig(epochs=4, seed=5))
    b = train(split, cfg, TrainConfig(epochs=4, seed=5))
    assert a.history == b.history
    for k in a.state:
        assert torch.equal(a.state[k], b.state[k])


def test_nonfinite_loss_aborts():
    split = adjacent_corpus(6, seed=1)
    ctx = {i.sentence_id: np.full((len(i), 6), np.inf, dtype=np.float32) for i in split}
    with pytest.raises(TrainingError, match="non-finite"):
        train(split, tiny_config(mode="B"), TrainConfig(epochs=1, seed=1), contextual=ctx)


def test_patience_stops_early():
    split = adjacent_corpus(10, seed=1)
    ck = train(split, tiny_config(), TrainConfig(learning_rate=0.0, epochs=20, patience=2, seed=1))
    assert len(ck.history) == 3  # epoch 0 plus two stale epochs


# ---------------------------------------------------------------- checkpoints and prediction

def random_instances(vocab_words, k, seed):
    rng = np.random.default_rng(seed)
    out = []
    for s in range(k):
        n = int(rng.integers(2, 12))
        words = [vocab_words[j] for j in rng.integers(0, len(vocab_words), n)]
        t = int(rng.integers(0, n))
        heads = [ROOT] + [int(rng.integers(0, i)) for i in range(1, n)]
        out.append(Instance(tuple(Token(i, w, "X", heads[i]) for i, w in enumerate(words)), (t, t + 1), ("O",) * n))
    return out


def test_checkpoint_roundtrip(tmp_path):
    split = adjacent_corpus(10, seed=2)
    ck = train(split, tiny_config("bilstm", gcn=2), TrainConfig(epochs=2, seed=3))
    before = Predictor(ck)
    ck.save(tmp_path / "m.pt")
    loaded = Checkpoint.load(tmp_path / "m.pt")
    assert loaded.config == ck.config and loaded.seed == 3 and loaded.history == ck.history
    after = Predictor(loaded)
    insts = random_instances(split.instances[0].words + ["never-seen"], 100, seed=0)
    assert before.predict_many(insts) == after.predict_many(insts)
    for a, b in zip(predict_probs_all(before, insts), predict_probs_all(after, insts)):
        np.testing.assert_array_equal(a, b)


def predict_probs_all(predictor, insts):
    from towe.model import predict_probs
    return predict_probs(predictor.model, predictor.encoded(insts))


def test_checkpoint_detects_tampered_vocab(tmp_path):
    split = adjacent_corpus(4, seed=2)
    ck = train(split, tiny_config(), TrainConfig(epochs=1, seed=3))
    ck.save(tmp_path / "m.pt")
    blob = torch.load(tmp_path / "m.pt", weights_only=True)
    blob["word_vocab"][3] = "changed"
    torch.save(blob, tmp_path / "bad.pt")
    with pytest.raises(ValueError, match="hash"):
        Checkpoint.load(tmp_path / "bad.pt")


def test_zero_loss_model_predicts_gold():
    split = adjacent_corpus(20, seed=4)
    ck = train(split, tiny_config(), TrainConfig(epochs=40, seed=1, learning_rate=1e-2))
    pred = Predictor(ck)
    from towe.model import predict_probs
    probs = predict_probs(pred.model, pred.encoded(split.instances))
    for inst, p in zip(split.instances, probs):
        gold = np.array([{"O": 0, "B": 1, "I": 2}[lab] for lab in inst.gold_labels])
        if -np.log(p[np.arange(len(gold)), gold]).mean() < 1e-3:
            assert predict(pred, inst) == list(inst.gold_labels)


def test_missing_contextual_is_inference_error():
    split = adjacent_corpus(4, seed=1)
    ctx = {i.sentence_id: np.zeros((len(i), 6), dtype=np.float32) for i in split}
    ck = train(split, tiny_config(mode="B"), TrainConfig(epochs=1, seed=1), contextual=ctx)
    with pytest.raises(InferenceError, match="contextual"):
        predict(ck, split.instances[0])
    assert len(predict(ck, split.instances[0], ctx)) == len(split.instances[0])


def test_gcn_needs_parses():
    split = adjacent_corpus(4, seed=1)
    ck = train(split, tiny_config(gcn=1), TrainConfig(epochs=1, seed=1))
    bare = Instance(tuple(Token(i, w) for i, w in enumerate(split.instances[0].words)), (0, 1),
                    ("O",) * len(split.instances[0]))
    with pytest.raises(InferenceError):
        predict(ck, bare)


@pytest.mark.slow
def test_target_sensitivity_on_food_service_sentence():
    corpus = food_service_corpus(60, seed=0)
    cfg = ModelConfig(InputConfig(word_dim=50, dropout_rate=0.5), EncoderConfig(hidden_dim=50), GcnConfig(0))
    ck = train(corpus, cfg, TrainConfig(epochs=15, seed=1))
    food, service = food_service_instances()
    pred = Predictor(ck)
    food_labels = predict(pred, food)
    service_labels = predict(pred, service)
    assert bio_decode(food_labels) == {(3, 4)}  # "good" only
    assert (8, 10) not in bio_decode(food_labels)
    assert bio_decode(service_labels) == {(8, 10)}
    assert food_labels != service_labels
