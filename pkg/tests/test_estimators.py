import numpy as np
import pytest
from sklearn.base import clone

from dqcluster.errors import StructureError
from dqcluster.estimators import DeepQCommunities, KtJets, LouvainCommunities
from dqcluster.validation import as_graph, check_particles

from oracles import ring_of_cliques, two_cliques


def two_clique_matrix():
    g = two_cliques(4)
    A = np.zeros((8, 8))
    for u in range(8):
        for v, w in g.adjacency[u]:
            A[u, v] = w
    return A


class TestValidation:
    def test_graph_passthrough(self):
        g = two_cliques(3)
        assert as_graph(g) is g

    def test_dense_matrix_round_trip(self):
        A = two_clique_matrix()
        g = as_graph(A)
        assert g.node_count == 8
        assert g.total_weight == pytest.approx(13.0)  # 2 cliques of 6 + bridge

    def test_dense_diagonal_becomes_loop(self):
        A = np.array([[2.0, 1.0], [1.0, 0.0]])
        g = as_graph(A)
        assert g.loop_weight[0] == 2.0

    def test_asymmetric_matrix_rejected(self):
        A = np.array([[0.0, 1.0], [2.0, 0.0]])
        with pytest.raises(StructureError):
            as_graph(A)

    def test_sparse_duck_typing(self):
        scipy_sparse = pytest.importorskip("scipy.sparse")
        A = scipy_sparse.coo_matrix(two_clique_matrix())
        g = as_graph(A)
        assert g.total_weight == pytest.approx(13.0)

    def test_check_particles_shape(self):
        with pytest.raises(ValueError):
            check_particles(np.zeros((3, 2)))

    def test_check_particles_values(self):
        ps = check_particles(np.array([[1.0, 0.5, 1.0], [2.0, -0.5, 4.0]]))
        assert len(ps) == 2
        assert ps[1].pt == 2.0


class TestLouvainEstimator:
    def test_fit_two_cliques(self):
        est = LouvainCommunities()
        est.fit(two_clique_matrix())
        labels = est.labels_
        assert len(set(labels[:4])) == 1
        assert len(set(labels[4:])) == 1
        assert labels[0] != labels[7]
        assert est.n_communities_ == 2
        assert est.modularity_ > 0

    def test_fit_predict_equals_labels(self):
        A = two_clique_matrix()
        est = LouvainCommunities()
        pred = est.fit_predict(A)
        np.testing.assert_array_equal(pred, est.labels_)

    def test_get_set_params_and_clone(self):
        est = LouvainCommunities(min_gain=0.5, normalize=True)
        assert est.get_params() == {"min_gain": 0.5, "normalize": True}
        copy = clone(est)
        assert copy.get_params() == est.get_params()

    def test_normalize_flag(self):
        g = two_cliques(4, w=250.0)
        est = LouvainCommunities(normalize=True).fit(g)
        assert max(w for u in range(8) for _, w in est.graph_.adjacency[u]) <= 1.0


class TestKtJetsEstimator:
    def test_sequential_labels_partition_particles(self):
        rng = np.random.default_rng(0)
        X = np.column_stack(
            [rng.uniform(0.5, 5, 8), rng.uniform(-2, 2, 8), rng.uniform(0, 6.28, 8)]
        )
        est = KtJets(p=1).fit(X)
        assert est.labels_.shape == (8,)
        assert est.n_jets_ == len(set(est.labels_))
        assert est.jets_.shape[1] == 3

    def test_hierarchical_method(self):
        X = np.array([[1.0, 0.0, 0.0], [1.0, 0.05, 0.0]])
        est = KtJets(method="hierarchical").fit(X)
        assert est.n_jets_ == 1
        np.testing.assert_array_equal(est.labels_, [0, 0])

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            KtJets(method="cone").fit(np.array([[1.0, 0.0, 0.0]]))

    def test_params_round_trip(self):
        est = KtJets(p=-1, method="hierarchical", r=0.4)
        assert clone(est).get_params() == {"p": -1, "method": "hierarchical", "r": 0.4}


class TestDeepQEstimator:
    def test_fit_sets_attributes_and_is_deterministic(self):
        g, _ = ring_of_cliques(3, 4)
        est = DeepQCommunities(epochs=3, batch_size=8, seed=5)
        est.fit(g)
        assert len(est.history_) == 3
        assert est.labels_.shape == (12,)
        assert -1.0 <= est.modularity_ < 1.0
        again = DeepQCommunities(epochs=3, batch_size=8, seed=5).fit(g)
        np.testing.assert_array_equal(est.labels_, again.labels_)

    def test_score_is_precision(self):
        g, _ = ring_of_cliques(3, 4)
        est = DeepQCommunities(epochs=2, batch_size=8, seed=0).fit(g)
        score = est.score()
        assert 0.0 <= score <= 1.0

    def test_score_before_fit_raises(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            DeepQCommunities().score()

    def test_clone_preserves_params(self):
        est = DeepQCommunities(epochs=9, action_size=6, seed=3)
        params = clone(est).get_params()
        assert params["epochs"] == 9
        assert params["action_size"] == 6
        assert params["seed"] == 3
