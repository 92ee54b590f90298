import warnings

import numpy as np
import pytest
from scipy.special import expit, logit

from kglink.fusion import (
    AdditiveModel,
    AreConfig,
    AreDiverged,
    AreModel,
    PlattCalibrator,
    StackedModel,
    additive_score,
    are_score,
    fit_additive,
    fit_are,
    fit_stacker,
    init_additive,
    load_additive,
    load_are,
    neighbor_features,
    platt_calibrate,
    save_additive,
    save_are,
)
from kglink.graph import KnowledgeGraph
from kglink.graphfeat import FORWARD, PraModel, fit_pra, path
from kglink.latent import ModelConfig, init_model, score_many
from kglink.training import auc_roc, labeled_eval_set

from kgfixtures import fig1_graph, planted_rule_graph, random_graph


def born_lived_graph(seed=0, people=24, cities=5):
    """Most people live where they were born; person 0 only has a birthplace."""
    rng = np.random.default_rng(seed)
    names = [f"p{i}" for i in range(people)] + [f"c{c}" for c in range(cities)]
    triples = []
    for i in range(people):
        born = people + int(rng.integers(cities))
        triples.append((i, 0, born))
        if i > 0 and rng.random() < 0.9:
            triples.append((i, 1, born))
        else:
            triples.append((i, 1, people + int(rng.integers(cities))))
    triples = [t for t in triples if not (t[0] == 0 and t[1] == 1)]
    return KnowledgeGraph(names, ["bornIn", "livedIn"], triples)


class TestAreScore:
    def setup_method(self):
        self.kg = fig1_graph()
        self.latent = init_model(ModelConfig("rescal", 3), self.kg.num_entities,
                                 self.kg.num_relations, seed=0)
        k = self.kg.relation_id("starredIn")
        t = path((self.kg.relation_id("played"), FORWARD),
                 (self.kg.relation_id("characterIn"), FORWARD))
        self.pra = {k: PraModel(k, [t], [1.7], -0.4)}

    def test_decomposition(self):
        m = AreModel(self.latent, self.pra, self.kg)
        lat, pra = m.components(self.kg.triples)
        assert np.allclose(m.score_many(self.kg.triples), lat + pra, atol=1e-12)
        assert np.array_equal(lat, score_many(self.latent, self.kg.triples))
        nimoy = self.kg.triple("LeonardNimoy", "starredIn", "StarTrek")
        by_hand = score_many(self.latent, [nimoy])[0] + 1.7 * 1.0 - 0.4
        assert are_score(m, nimoy) == pytest.approx(by_hand, abs=1e-12)

    def test_zero_pra_weights(self):
        k = next(iter(self.pra))
        zeroed = {k: PraModel(k, self.pra[k].path_types, [0.0], 0.0)}
        m = AreModel(self.latent, zeroed, self.kg)
        assert np.array_equal(m.score_many(self.kg.triples), score_many(self.latent, self.kg.triples))

    def test_zero_latent(self):
        lat = self.latent.copy()
        lat.params["E"][:] = 0.0
        m = AreModel(lat, self.pra, self.kg)
        k = next(iter(self.pra))
        pairs = self.kg.triples[self.kg.triples[:, 1] == k]
        expected = self.pra[k].linear_score(self.kg, pairs[:, [0, 2]])
        assert np.array_equal(m.score_many(pairs), expected)

    def test_missing_pra_flagged(self):
        m = AreModel(self.latent, self.pra, self.kg)
        m.score_many(self.kg.triples)
        assert m.missing == set(range(self.kg.num_relations)) - set(self.pra)

    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            AreModel(init_model(ModelConfig("rescal", 2), 3, 1), {}, self.kg)
        with pytest.raises(ValueError):
            AreModel(init_model(ModelConfig("transe", 2), 7, 3), {}, self.kg)


class TestFitAre:
    def test_trace_non_increasing(self):
        kg = random_graph(np.random.default_rng(0), 15, 3, 60)
        _, trace = fit_are(kg, config=AreConfig(rank=4, rounds=15, seed=2))
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))

    def test_latent_disabled_matches_pra(self):
        kg, k, train, _, all_k = planted_rule_graph(seed=0)
        rng = np.random.default_rng(3)
        pos = np.array([(x, k, y) for x, y in train])
        from kgfixtures import non_k_pairs
        neg = non_k_pairs(rng, kg.num_entities, all_k, len(pos), k)
        triples = np.r_[pos, neg]
        labels = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
        cfg = AreConfig(rank=0, l1=1e-3, tol=1e-10, max_length=2)
        model, _ = fit_are(kg, (triples, labels), cfg)
        assert model.latent is None
        alone = fit_pra(kg, k, pos, neg, l1_strength=1e-3, tol=1e-11, max_length=2)
        assert np.allclose(model.score_many(triples), alone.linear_score(kg, triples[:, [0, 2]]),
                           atol=1e-4)

    def test_no_paths_is_latent_training(self):
        # no relation has any path linking its pairs except itself
        kg = KnowledgeGraph([str(i) for i in range(6)], ["r"], [(0, 0, 1), (2, 0, 3), (4, 0, 5)])
        triples = np.array([(0, 0, 1), (2, 0, 3), (4, 0, 5), (1, 0, 0), (3, 0, 2), (5, 0, 4)])
        labels = np.r_[np.ones(3), np.zeros(3)]
        model, trace = fit_are(kg, (triples, labels), AreConfig(rank=2, rounds=5, init="random"))
        assert all(len(m.path_types) == 0 for m in model.pra.values())
        assert trace[-1] < trace[0]

    def test_one_class_rejected(self):
        kg = fig1_graph()
        with pytest.raises(ValueError):
            fit_are(kg, (kg.triples, np.ones(len(kg))))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            AreConfig(rank=-1)
        with pytest.raises(ValueError):
            AreConfig(init="svd")

    def test_diverged_carries_trace(self):
        err = AreDiverged("boom", [1.0, 2.0])
        assert err.trace == [1.0, 2.0]

    def test_save_load(self, tmp_path):
        kg = random_graph(np.random.default_rng(1), 10, 2, 30)
        model, _ = fit_are(kg, config=AreConfig(rank=3, rounds=3))
        save_are(tmp_path, model)
        back = load_are(tmp_path, kg)
        assert np.allclose(back.score_many(kg.triples), model.score_many(kg.triples), atol=1e-12)


class TestAdditive:
    def test_neighbor_feature_shape(self):
        kg = fig1_graph()
        for k in range(kg.num_relations):
            assert len(neighbor_features(kg, 0, 1, k)) == kg.num_relations - 1

    def test_excludes_own_relation(self):
        kg = KnowledgeGraph(["a", "b"], ["r", "s"], [(0, 0, 1)])
        assert neighbor_features(kg, 0, 1, 0).tolist() == [0.0]
        assert neighbor_features(kg, 0, 1, 1).tolist() == [1.0]

    def test_zero_weights(self):
        kg = fig1_graph()
        m = init_additive(kg, 3)
        zero = AdditiveModel(m.sub, m.obj, 0 * m.w1, 0 * m.w2, 0 * m.w3, kg)
        assert np.all(zero.score_many(kg.triples) == 0.0)

    def test_born_in_raises_lived_in(self):
        kg = born_lived_graph()
        model, trace = fit_additive(kg, dim=3, epochs=60, seed=1)
        assert trace[-1] < trace[0]
        assert model.w3[1, 0] > 0
        boston = kg.triples[(kg.triples[:, 0] == 0) & (kg.triples[:, 1] == 0)][0, 2]
        t = (0, 1, int(boston))
        without = kg.with_triples(kg.triples[~((kg.triples[:, 0] == 0) & (kg.triples[:, 1] == 0))])
        gain = additive_score(model, t) - additive_score(model, t, without)
        assert gain == pytest.approx(model.w3[1, 0], abs=1e-12)

    def test_save_load(self, tmp_path):
        kg = fig1_graph()
        m = init_additive(kg, 2, seed=3)
        save_additive(tmp_path / "a.npz", m)
        back = load_additive(tmp_path / "a.npz", kg)
        assert np.array_equal(back.score_many(kg.triples), m.score_many(kg.triples))
        with pytest.raises(ValueError):
            load_additive(tmp_path / "a.npz", random_graph(np.random.default_rng(0), 3, 1, 2))


class TestStacking:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.y = (rng.random(400) < 0.4).astype(float)
        self.noisy = self.y + rng.normal(0, 0.8, 400)

    def test_identical_inputs(self):
        m = fit_stacker(np.column_stack([self.noisy, self.noisy]), self.y)
        fused = m.fuse(np.column_stack([self.noisy, self.noisy]))
        assert np.array_equal(np.argsort(fused, kind="stable"), np.argsort(self.noisy, kind="stable"))

    def test_perfect_plus_random(self):
        rng = np.random.default_rng(1)
        perfect = self.y * 2 - 1 + rng.normal(0, 0.01, 400)
        S = np.column_stack([perfect, rng.random(400)])
        m = fit_stacker(S[:200], self.y[:200])
        held = m.fuse(S[200:])
        assert auc_roc(held, self.y[200:]) >= auc_roc(S[200:, 0], self.y[200:]) - 0.01

    def test_extra_features_and_binding(self):
        kg = random_graph(np.random.default_rng(2), 8, 2, 20)
        a = init_model(ModelConfig("rescal", 2), 8, 2, seed=0)
        b = init_model(ModelConfig("transe", 2), 8, 2, seed=1)
        triples, labels = labeled_eval_set(kg.triples, kg, seed=0)
        S = np.column_stack([score_many(a, triples), score_many(b, triples)])
        extra = lambda t: np.asarray(t)[:, 1:2].astype(float)
        m = fit_stacker(S, labels, extra(triples), names=["a", "b"]).bind([a, b], extra)
        assert m.score_many(triples).shape == (len(triples),)
        back = StackedModel.from_json(m.to_json()).bind([a, b], extra)
        assert np.allclose(back.score_many(triples), m.score_many(triples))

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_stacker(self.noisy[:, None], self.y)
        with pytest.raises(ValueError):
            fit_stacker(np.column_stack([self.noisy, self.noisy]), np.ones(400))
        m = fit_stacker(np.column_stack([self.noisy, self.noisy]), self.y)
        with pytest.raises(ValueError):
            m.bind([None])
        with pytest.raises(RuntimeError):
            m.score_many([(0, 0, 0)])


class TestPlatt:
    def test_recovers_identity(self):
        rng = np.random.default_rng(0)
        s = rng.normal(0, 2, 10_000)
        y = (rng.random(10_000) < expit(s)).astype(float)
        cal = platt_calibrate(s, y)
        assert abs(cal.a - 1) < 0.05 and abs(cal.b) < 0.05
        assert not cal.capped

    def test_constant_scores(self):
        y = np.r_[np.ones(30), np.zeros(70)]
        cal = platt_calibrate(np.full(100, 3.0), y)
        assert cal.a * 3.0 + cal.b == pytest.approx(logit(0.3), abs=1e-5)

    def test_order_preserved(self):
        rng = np.random.default_rng(1)
        s = rng.normal(size=200)
        y = (s + rng.normal(size=200) > 0).astype(float)
        cal = platt_calibrate(s, y)
        assert cal.a > 0
        p = cal(s)
        assert np.all((p > 0) & (p < 1))
        assert np.array_equal(np.argsort(p, kind="stable"), np.argsort(s, kind="stable"))

    def test_reversed_scores(self):
        rng = np.random.default_rng(2)
        s = rng.normal(size=300)
        y = (s + rng.normal(size=300) > 0).astype(float)
        cal = platt_calibrate(-s, y)
        assert cal.a < 0
        assert auc_roc(cal(-s), y) == pytest.approx(auc_roc(s, y))

    def test_separable_capped(self):
        with pytest.warns(RuntimeWarning):
            cal = platt_calibrate([-2.0, -1.0, 1.0, 2.0], [0, 0, 1, 1])
        assert cal.capped and abs(cal.a) == pytest.approx(1e3)

    def test_finite(self):
        with pytest.raises(ValueError):
            PlattCalibrator(np.nan, 0.0)
