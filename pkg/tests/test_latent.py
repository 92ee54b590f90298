import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kglink.latent import (
    KINDS,
    LatentModel,
    ModelConfig,
    dense_gradient,
    init_model,
    load_model,
    loss_and_gradient,
    nearest_relations,
    ntn_from_rescal,
    param_count,
    param_shapes,
    save_model,
    score,
    score_many,
    transe_rewritten_score,
)

from kgfixtures import finite_difference_error, random_config

seeds = st.integers(0, 2**32 - 1)


def all_triples(ne, nr):
    return np.array(list(itertools.product(range(ne), range(nr), range(ne))))


def rescal(E, W):
    E, W = np.asarray(E, float), np.asarray(W, float)
    if W.ndim == 2:
        W = W[None]
    return LatentModel(ModelConfig("rescal", E.shape[1]), {"E": E, "W": W}, len(E), len(W))


class TestScores:
    def test_rescal_worked_example(self):
        m = rescal([[0.9, 0.2], [0.2, 0.8]], [[0.1, 0.9], [0.1, 0.1]])
        # e_s^T W e_o evaluated by hand
        es, eo = np.array([0.9, 0.2]), np.array([0.2, 0.8])
        by_hand = es[0] * (0.1 * eo[0] + 0.9 * eo[1]) + es[1] * (0.1 * eo[0] + 0.1 * eo[1])
        assert score(m, (0, 0, 1)) == pytest.approx(by_hand, abs=1e-12)
        assert score(m, (0, 0, 1)) == pytest.approx(0.686, abs=1e-12)

    def test_transe_zero_distance(self):
        cfg = ModelConfig("transe", 2)
        E = np.array([[1.0, 0.0], [0.0, 1.0]])
        m = LatentModel(cfg, {"E": E, "R": np.array([[-1.0, 1.0]])}, 2, 1)
        assert score(m, (0, 0, 1)) == 0.0
        assert score(m, (1, 0, 0)) < 0.0

    def test_se_identity_projections(self):
        cfg = ModelConfig("se", 3, hidden_a=3)
        eye = np.eye(3)[None]
        E = np.array([[0.3, -1.0, 2.0]] * 2)
        m = LatentModel(cfg, {"E": E, "As": eye.copy(), "Ao": eye.copy()}, 2, 1)
        assert score(m, (0, 0, 1)) == 0.0

    def test_rescal_zero_embeddings(self):
        m = init_model(ModelConfig("rescal", 3), 4, 2, seed=1)
        m.params["E"][:] = 0.0
        assert np.all(score_many(m, all_triples(4, 2)) == 0.0)

    @pytest.mark.parametrize("kind", ["se", "transe"])
    def test_distance_scores_non_positive(self, kind):
        rng = np.random.default_rng(0)
        m = init_model(random_config(rng, kind), 5, 2, seed=3)
        assert np.all(score_many(m, all_triples(5, 2)) <= 0.0)

    @pytest.mark.parametrize("kind", KINDS)
    def test_out_of_range(self, kind):
        m = init_model(random_config(np.random.default_rng(1), kind), 3, 2)
        with pytest.raises(IndexError):
            score(m, (0, 2, 1))
        with pytest.raises(IndexError):
            score(m, (3, 0, 1))

    @pytest.mark.parametrize("kind", KINDS)
    def test_single_matches_batch(self, kind):
        m = init_model(random_config(np.random.default_rng(2), kind), 4, 3, seed=5)
        t = all_triples(4, 3)
        assert np.allclose(score_many(m, t), [score(m, x) for x in t], atol=1e-12)

    @given(seeds, st.floats(-3, 3))
    def test_rescal_bilinear(self, seed, alpha):
        rng = np.random.default_rng(seed)
        m = rescal(rng.normal(size=(3, 2)), rng.normal(size=(1, 2, 2)))
        base = score(m, (0, 0, 1))
        m.params["E"][0] *= alpha
        assert score(m, (0, 0, 1)) == pytest.approx(alpha * base, abs=1e-10)

    @given(seeds)
    def test_rescal_linear_in_w(self, seed):
        rng = np.random.default_rng(seed)
        E = rng.normal(size=(3, 2))
        W1, W2 = rng.normal(size=(1, 2, 2)), rng.normal(size=(1, 2, 2))
        lhs = score(rescal(E, W1 + 2 * W2), (0, 0, 2))
        rhs = score(rescal(E, W1), (0, 0, 2)) + 2 * score(rescal(E, W2), (0, 0, 2))
        assert lhs == pytest.approx(rhs, abs=1e-10)

    @pytest.mark.parametrize("kind", KINDS)
    def test_shared_entity_rows(self, kind):
        ne, nr = 5, 2
        m = init_model(random_config(np.random.default_rng(3), kind), ne, nr, seed=4)
        t = all_triples(ne, nr)
        before = score_many(m, t)
        m.params["E"][2] += 0.5
        changed = ~np.isclose(score_many(m, t), before, rtol=0, atol=1e-14)
        touches = (t[:, 0] == 2) | (t[:, 2] == 2)
        assert not changed[~touches].any()
        assert changed[touches].any()


class TestTranseRewrite:
    @given(seeds)
    def test_constant_offset(self, seed):
        m = init_model(ModelConfig("transe", 4), 6, 2, seed=seed % 1000)
        rng = np.random.default_rng(seed)
        t = tuple(int(x) for x in (rng.integers(6), rng.integers(2), rng.integers(6)))
        assert transe_rewritten_score(m, t) - score(m, t) == pytest.approx(2.0, abs=1e-10)

    def test_zero_case(self):
        cfg = ModelConfig("transe", 2)
        m = LatentModel(cfg, {"E": np.array([[0.6, 0.8]]), "R": np.zeros((1, 2))}, 1, 1)
        assert score(m, (0, 0, 0)) == 0.0
        assert transe_rewritten_score(m, (0, 0, 0)) == pytest.approx(2.0, abs=1e-12)

    def test_same_ranking(self):
        m = init_model(ModelConfig("transe", 3), 10, 2, seed=0)
        for s, k in itertools.product(range(10), range(2)):
            direct = [score(m, (s, k, o)) for o in range(10)]
            rewritten = [transe_rewritten_score(m, (s, k, o)) for o in range(10)]
            assert np.argsort(direct, kind="stable").tolist() == \
                np.argsort(rewritten, kind="stable").tolist()

    def test_requires_unit_norm(self):
        m = init_model(ModelConfig("transe", 3), 4, 1, seed=0)
        m.params["E"][1] *= 2
        with pytest.raises(ValueError):
            transe_rewritten_score(m, (1, 0, 0))

    def test_requires_squared_distance(self):
        m = init_model(ModelConfig("transe", 3, distance="l1"), 4, 1)
        with pytest.raises(ValueError):
            transe_rewritten_score(m, (1, 0, 0))


class TestGradients:
    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("draw", range(4))
    def test_finite_differences(self, kind, draw):
        rng = np.random.default_rng(100 * draw + KINDS.index(kind))
        m = init_model(random_config(rng, kind), 4, 3, seed=draw)
        t = tuple(int(x) for x in (rng.integers(4), rng.integers(3), rng.integers(4)))
        assert finite_difference_error(m, t, int(rng.integers(2))) < 1e-4

    def test_zero_rescal_entity_gradient(self):
        m = init_model(ModelConfig("rescal", 3), 4, 2, seed=1)
        m.params["E"][:] = 0.0
        g = dense_gradient(m, loss_and_gradient(m, (0, 1, 2), "log", 1)[1])
        assert np.all(g["E"] == 0.0)

    @pytest.mark.parametrize("kind", KINDS)
    def test_sparsity_pattern(self, kind):
        m = init_model(random_config(np.random.default_rng(7), kind), 6, 3, seed=2)
        grad = loss_and_gradient(m, (1, 2, 4), "log", 1)[1]
        owners = m.layout()
        for name, idx in grad:
            if owners[name] == "entity":
                assert idx in (1, 4)
            elif owners[name] == "relation":
                assert idx == 2
            else:
                assert idx is Ellipsis

    def test_margin_inactive(self):
        m = init_model(ModelConfig("transe", 2), 3, 1, seed=0)
        m.params["R"][0] = m.params["E"][1] - m.params["E"][0]
        value, grad = loss_and_gradient(m, (0, 0, 1), "margin", negative=(0, 0, 2), margin=0.0)
        if score(m, (0, 0, 2)) < 0:
            assert value == 0.0 and grad == {}

    def test_margin_matches_difference(self):
        m = init_model(ModelConfig("rescal", 2), 3, 1, seed=4)
        value, grad = loss_and_gradient(m, (0, 0, 1), "margin", negative=(2, 0, 1), margin=10.0)
        assert value == pytest.approx(10 + score(m, (2, 0, 1)) - score(m, (0, 0, 1)))
        g = dense_gradient(m, grad)
        h = 1e-6
        m.params["W"][0, 0, 1] += h
        up = 10 + score(m, (2, 0, 1)) - score(m, (0, 0, 1))
        assert (up - value) / h == pytest.approx(g["W"][0, 0, 1], abs=1e-5)

    @pytest.mark.parametrize("bad", [{"loss": "hinge", "label": 1}, {"loss": "log", "label": 2},
                                     {"loss": "margin"}])
    def test_bad_arguments(self, bad):
        m = init_model(ModelConfig("rescal", 2), 3, 1)
        with pytest.raises(ValueError):
            loss_and_gradient(m, (0, 0, 1), **bad)


class TestParamCount:
    @pytest.mark.parametrize("cfg,expected", [
        (ModelConfig("rescal", 4), 88),
        (ModelConfig("transe", 4), 52),
        (ModelConfig("ermlp", 4, relation_dim=2, hidden_c=5), 101),
    ])
    def test_worked_values(self, cfg, expected):
        assert param_count(cfg, 10, 3) == expected

    @given(seeds, st.sampled_from(KINDS), st.integers(1, 9), st.integers(1, 4))
    def test_matches_materialized(self, seed, kind, ne, nr):
        cfg = random_config(np.random.default_rng(seed), kind)
        shapes = param_shapes(cfg, ne, nr)
        assert param_count(cfg, ne, nr) == sum(int(np.prod(s)) for s in shapes.values())
        assert init_model(cfg, ne, nr, seed=0).size() == param_count(cfg, ne, nr)


class TestNtnFromRescal:
    @given(seeds)
    def test_scores_preserved(self, seed):
        rng = np.random.default_rng(seed)
        m = init_model(ModelConfig("rescal", int(rng.integers(1, 5))), 6, 2, seed=seed % 997)
        ntn = ntn_from_rescal(m)
        t = all_triples(6, 2)
        assert np.max(np.abs(score_many(ntn, t) - score_many(m, t))) < 1e-12

    def test_one_dimensional(self):
        m = rescal([[2.0], [3.0]], [[[0.5]]])
        ntn = ntn_from_rescal(m)
        assert ntn.params["B"].shape == (1, 1, 1, 1)
        assert ntn.params["w"].tolist() == [[0.5]]

    def test_slices_sum_to_ones(self):
        ntn = ntn_from_rescal(init_model(ModelConfig("rescal", 3), 4, 2))
        assert np.array_equal(ntn.params["B"][1].sum(axis=0), np.ones((3, 3)))
        assert ntn.config.hidden_a == 0 and ntn.config.nonlinearity == "identity"

    def test_rejects_other_kinds(self):
        with pytest.raises(ValueError):
            ntn_from_rescal(init_model(ModelConfig("transe", 2), 2, 1))


class TestNearestRelations:
    def test_identical_rows(self):
        m = init_model(ModelConfig("ermlp", 2, relation_dim=3, hidden_c=2), 3, 4, seed=0)
        m.params["R"][3] = m.params["R"][1]
        assert nearest_relations(m, 1, top=1) == [(3, 0.0)]

    @given(seeds)
    def test_brute_force(self, seed):
        m = init_model(ModelConfig("ermlp", 2, relation_dim=2, hidden_c=2), 3, 6, seed=seed % 991)
        R = m.params["R"]
        brute = sorted((float(np.sum((R[j] - R[0]) ** 2)), j) for j in range(1, 6))
        assert nearest_relations(m, 0, top=10) == [(j, d) for d, j in brute]

    def test_truncates(self):
        m = init_model(ModelConfig("transe", 2), 3, 3)
        assert len(nearest_relations(m, 0, top=10)) == 2

    def test_no_relation_embeddings(self):
        with pytest.raises(ValueError):
            nearest_relations(init_model(ModelConfig("rescal", 2), 3, 3), 0)


class TestInit:
    @pytest.mark.parametrize("kind", KINDS)
    def test_deterministic(self, kind):
        cfg = random_config(np.random.default_rng(0), kind)
        a, b = init_model(cfg, 5, 2, seed=9), init_model(cfg, 5, 2, seed=9)
        assert all(np.array_equal(a.params[n], b.params[n]) for n in a.params)

    def test_transe_unit_rows(self):
        m = init_model(ModelConfig("transe", 7), 50, 2, seed=3)
        assert np.allclose(np.linalg.norm(m.params["E"], axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("dims", [(0, 1), (1, 0)])
    def test_zero_dimensions(self, dims):
        with pytest.raises(ValueError):
            init_model(ModelConfig("rescal", 2), *dims)

    @pytest.mark.parametrize("kwargs", [
        {"kind": "cp", "entity_dim": 2},
        {"kind": "rescal", "entity_dim": 0},
        {"kind": "emlp", "entity_dim": 2},
        {"kind": "ntn", "entity_dim": 2},
        {"kind": "rescal", "entity_dim": 2, "nonlinearity": "relu"},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            ModelConfig(**kwargs)


class TestSerialization:
    @pytest.mark.parametrize("kind", KINDS)
    def test_round_trip(self, kind, tmp_path):
        m = init_model(random_config(np.random.default_rng(1), kind), 4, 3, seed=8)
        save_model(tmp_path / "m.kglm", m)
        back = load_model(tmp_path / "m.kglm")
        assert back.config == m.config and back.meta["seed"] == 8
        assert all(np.array_equal(back.params[n], m.params[n]) for n in m.params)

    def test_truncated(self, tmp_path):
        path = tmp_path / "m.kglm"
        save_model(path, init_model(ModelConfig("rescal", 3), 4, 2))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError):
            load_model(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.kglm"
        path.write_bytes(b"nope")
        with pytest.raises(ValueError):
            load_model(path)
