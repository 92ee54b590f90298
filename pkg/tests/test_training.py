import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kglink.graph import holdout_split, ingest_triples
from kglink.latent import ModelConfig, init_model
from kglink.sampling import EpochSampler
from kglink.seeding import derive_seed
from kglink.training import (
    TrainConfig,
    TrainingDiverged,
    auc_pr,
    auc_roc,
    cross_validate,
    evaluate,
    fold_assignment,
    hits_at,
    labeled_eval_set,
    log_loss,
    loss_value,
    margin_loss,
    mrr,
    rank_entities,
    sgd_train,
)

from kgfixtures import grid_translation_lines, random_graph

seeds = st.integers(0, 2**32 - 1)


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def threshold_auc_pr(scores, labels):
    """Trapezoid over (recall, precision) at each distinct threshold, from recall 0."""
    scores, labels = np.asarray(scores), np.asarray(labels, bool)
    points = []
    for thr in sorted(set(scores.tolist()), reverse=True):
        pred = scores >= thr
        tp = np.sum(pred & labels)
        points.append((tp / labels.sum(), tp / pred.sum()))
    points.insert(0, (0.0, points[0][1]))
    return sum((r1 - r0) * (p0 + p1) / 2 for (r0, p0), (r1, p1) in zip(points, points[1:]))


def scored_sets(min_size=2, max_size=100):
    return st.integers(min_size, max_size).flatmap(lambda n: st.tuples(
        st.lists(st.integers(-5, 5).map(float), min_size=n, max_size=n),
        st.lists(st.booleans(), min_size=n, max_size=n),
    )).filter(lambda sl: 0 < sum(sl[1]) < len(sl[1]))


class TestLosses:
    def test_margin_examples(self):
        assert margin_loss(2.0, 0.5) == 0.0
        assert margin_loss(0.2, 0.5) == pytest.approx(1.3)

    def test_log_loss_half(self):
        assert log_loss(0.5, 1) == pytest.approx(math.log(2))

    def test_log_loss_clamped(self):
        with pytest.warns(RuntimeWarning):
            value = log_loss(0.0, 1)
        assert value == pytest.approx(-math.log(1e-12))

    def test_dispatch(self):
        assert loss_value("squared", 0.25, 1) == 0.5625
        with pytest.raises(ValueError):
            loss_value("hinge", 1, 0)
        with pytest.raises(ValueError):
            margin_loss(1, 0, margin=0)

    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_margin_zero_iff_separated(self, fp, fn):
        assert (margin_loss(fp, fn) == 0.0) == (fp >= fn + 1.0)


class TestMetrics:
    def test_separated(self):
        assert auc_roc([3, 2, 1, 0], [1, 1, 0, 0]) == 1.0
        assert auc_pr([3, 2, 1, 0], [1, 1, 0, 0]) == 1.0

    def test_mrr_example(self):
        assert mrr([1, 2, 4]) == pytest.approx(0.58333333333333333, abs=1e-15)

    def test_hits(self):
        assert hits_at([1, 3, 11], 10) == pytest.approx(2 / 3)

    @given(scored_sets())
    def test_auc_roc_oracle(self, sl):
        scores, labels = sl
        assert auc_roc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)

    @given(scored_sets())
    def test_auc_pr_oracle(self, sl):
        scores, labels = sl
        assert auc_pr(scores, labels) == pytest.approx(threshold_auc_pr(scores, labels), abs=1e-12)

    @given(scored_sets())
    def test_monotone_invariance(self, sl):
        scores, labels = sl
        s = np.array(scores)
        base = auc_roc(s, labels)
        assert auc_roc(np.exp(s), labels) == pytest.approx(base)
        assert auc_roc(3 * s - 7, labels) == pytest.approx(base)

    def test_imbalanced_pr_below_roc(self):
        # 10 positives spread evenly among 1000 negatives, shifted slightly up
        rng = np.random.default_rng(0)
        neg = rng.normal(0.0, 1.0, 1000)
        pos = rng.normal(1.0, 1.0, 10)
        s = np.r_[pos, neg]
        y = np.r_[np.ones(10), np.zeros(1000)]
        assert auc_pr(s, y) < auc_roc(s, y)

    @pytest.mark.parametrize("labels", [[1, 1], [0, 0]])
    def test_single_class(self, labels):
        with pytest.raises(ValueError):
            auc_roc([0.1, 0.2], labels)
        with pytest.raises(ValueError):
            auc_pr([0.1, 0.2], labels)

    def test_bad_ranks(self):
        with pytest.raises(ValueError):
            mrr([])
        with pytest.raises(ValueError):
            mrr([0.5])


class TestRanking:
    def setup_method(self):
        self.kg = random_graph(np.random.default_rng(0), 6, 2, 12)

    def test_true_highest(self):
        t = tuple(self.kg.triples[0])
        scorer = lambda x: np.where((x == t).all(axis=1), 1.0, 0.0)
        assert rank_entities(scorer, self.kg, t) == 1.0

    def test_all_equal_mid_rank(self):
        t = tuple(self.kg.triples[0])
        flat = lambda x: np.zeros(len(x))
        m = self.kg.num_entities
        assert rank_entities(flat, self.kg, t, filtered=False) == (m + 1) / 2

    @given(seeds)
    def test_filtered_not_above_raw(self, seed):
        kg = random_graph(np.random.default_rng(seed), 6, 2, 18)
        m = init_model(ModelConfig("rescal", 2), 6, 2, seed=seed % 50)
        for t in kg.triples:
            for side in ("object", "subject"):
                assert rank_entities(m, kg, t, side, True) <= rank_entities(m, kg, t, side, False)

    def test_bad_side(self):
        with pytest.raises(ValueError):
            rank_entities(lambda x: np.zeros(len(x)), self.kg, self.kg.triples[0], "relation")

    def test_oracle_mrr_one(self):
        kg = self.kg
        oracle = lambda x: kg.contains_many(x).astype(float)
        report = evaluate(oracle, kg.triples, kg)
        assert report.mrr == 1.0
        assert report.auc_roc == 1.0

    def test_labeled_eval_set(self):
        triples, labels = labeled_eval_set(self.kg.triples, self.kg, seed=1)
        assert labels.sum() == len(self.kg)
        assert not self.kg.contains_many(triples[labels == 0]).any()


class TestSgd:
    def test_zero_learning_rate(self):
        kg = random_graph(np.random.default_rng(1), 8, 2, 20)
        for kind, loss in [("transe", "margin"), ("rescal", "log")]:
            m = init_model(ModelConfig(kind, 3), 8, 2, seed=2)
            out, _ = sgd_train(m, kg, cfg=TrainConfig(loss=loss, learning_rate=0.0, epochs=2))
            assert all(np.array_equal(m.params[n], out.params[n]) for n in m.params)

    def test_strong_l2_shrinks(self):
        kg = random_graph(np.random.default_rng(1), 8, 2, 20)
        m = init_model(ModelConfig("rescal", 3), 8, 2, seed=2)
        norms = [np.linalg.norm(m.params["W"])]
        cfg = TrainConfig(loss="log", learning_rate=0.01, epochs=1, l2=1e6)
        for epoch in range(4):
            m, _ = sgd_train(m, kg, cfg=TrainConfig(**{**cfg.to_dict(), "seed": epoch}))
            norms.append(np.linalg.norm(m.params["W"]))
        assert all(b < a for a, b in zip(norms, norms[1:]))
        assert norms[-1] < 1e-6 * norms[0]

    @pytest.mark.parametrize("loss", ["margin", "log", "squared"])
    def test_deterministic(self, loss):
        kg = random_graph(np.random.default_rng(2), 10, 3, 30)
        m = init_model(ModelConfig("ermlp", 3, relation_dim=2, hidden_c=3), 10, 3, seed=0)
        cfg = TrainConfig(loss=loss, learning_rate=0.05, epochs=3, seed=11)
        a, ta = sgd_train(m, kg, cfg=cfg)
        b, tb = sgd_train(m, kg, cfg=cfg)
        assert ta == tb
        assert all(np.array_equal(a.params[n], b.params[n]) for n in a.params)

    def test_loss_decreases(self):
        kg = random_graph(np.random.default_rng(3), 12, 2, 40)
        m = init_model(ModelConfig("rescal", 4), 12, 2, seed=0)
        _, trace = sgd_train(m, kg, cfg=TrainConfig(loss="log", learning_rate=0.1, epochs=40))
        assert trace[-1] < trace[0]

    def test_kernel_matches_generic(self):
        kg = random_graph(np.random.default_rng(4), 10, 2, 25)
        m = init_model(ModelConfig("transe", 3), 10, 2, seed=1)
        base = dict(loss="margin", learning_rate=0.05, epochs=3, l2=0.01, seed=5)
        a, ta = sgd_train(m, kg, cfg=TrainConfig(**base, use_kernels=True))
        b, tb = sgd_train(m, kg, cfg=TrainConfig(**base, use_kernels=False))
        assert np.allclose(ta, tb, atol=1e-10)
        assert all(np.allclose(a.params[n], b.params[n], atol=1e-10) for n in a.params)

    def test_divergence_checkpoint(self):
        kg = random_graph(np.random.default_rng(5), 6, 1, 15)
        m = init_model(ModelConfig("rescal", 3), 6, 1, seed=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(TrainingDiverged) as err:
                sgd_train(m, kg, cfg=TrainConfig(loss="log", learning_rate=1e150, epochs=5))
        assert all(np.all(np.isfinite(v)) for v in err.value.checkpoint.params.values())

    @pytest.mark.parametrize("kwargs", [{"loss": "hinge"}, {"learning_rate": -1}, {"epochs": 0},
                                        {"l2": -1}, {"margin": 0}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_transe_planted_translation(self):
        kg = ingest_triples(line.split("\t") for line in grid_translation_lines(5, 4))
        assert kg.num_entities == 20
        train, _, test = holdout_split(kg, (0.8, 0.1, 0.1), seed=0)
        cfg = ModelConfig("transe", 6)
        untrained = init_model(cfg, kg.num_entities, kg.num_relations, seed=1)
        trained, _ = sgd_train(untrained, kg.with_triples(train),
                               EpochSampler(kg.with_triples(train), "perturb", known=kg),
                               TrainConfig(learning_rate=0.05, epochs=200, seed=2))
        base = evaluate(untrained, test, kg).mrr
        assert evaluate(trained, test, kg).mrr >= 5 * base


class TestCrossValidation:
    def test_folds_reproducible(self):
        a, b = fold_assignment(50, 4, 3), fold_assignment(50, 4, 3)
        assert np.array_equal(a, b)
        assert np.bincount(a).tolist() == [13, 13, 12, 12]

    def test_single_config(self):
        kg = random_graph(np.random.default_rng(0), 10, 2, 30)
        factory = lambda p, train, seed: (lambda x: np.zeros(len(x)))
        best, table = cross_validate(factory, kg, [{"a": 1}], folds=2)
        assert best == {"a": 1}
        assert len(table) == 3

    def test_dominant_wins(self):
        kg = random_graph(np.random.default_rng(0), 10, 2, 30)

        def factory(params, train, seed):
            if params["good"]:
                return lambda x: kg.contains_many(x).astype(float)
            rng = np.random.default_rng(seed)
            return lambda x: rng.random(len(x))

        best, table = cross_validate(factory, kg, [{"good": False}, {"good": True}], folds=3)
        assert best == {"good": True}
        per_fold = {(r["config"], r["fold"]): r["auc_pr"] for r in table}
        assert all(per_fold[1, f] > per_fold[0, f] for f in range(3))

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            cross_validate(None, random_graph(np.random.default_rng(0), 4, 1, 5), [])

    def test_seed_labels(self):
        assert derive_seed(1, "cv", 0, 0) != derive_seed(1, "cv", 0, 1)
        assert derive_seed(1, "x") == derive_seed(1, "x")
