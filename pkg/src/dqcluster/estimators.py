"""Scikit-learn style estimators wrapping the clustering engines.

All three estimators follow the fit/fit_predict convention with ``labels_``
set after ``fit``, support ``get_params``/``set_params``/``clone``, and
accept either package-native objects (Graph, Particle lists) or plain
arrays via the validation helpers.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.exceptions import NotFittedError

from . import dql, jets, louvain as lv
from .graph import normalize_weights
from .validation import as_graph, check_particles


class LouvainCommunities(BaseEstimator, ClusterMixin):
    """Community detection by multi-phase greedy modularity optimization.

    Parameters
    ----------
    min_gain : float
        Stop a level (and the phase loop) once a sweep gains less than this.
    normalize : bool
        Min-max map edge weights into [0.000001, 1] before clustering.
    """

    def __init__(self, min_gain=1e-7, normalize=False):
        self.min_gain = min_gain
        self.normalize = normalize

    def fit(self, X, y=None):
        g = as_graph(X)
        if self.normalize:
            g = normalize_weights(g)
        self.graph_ = g
        self.dendrogram_ = lv.louvain(g, min_gain=self.min_gain)
        self.labels_ = self.dendrogram_.final_assignment()
        self.level_modularities_ = [lvl.quality for lvl in self.dendrogram_.levels]
        self.modularity_ = self.level_modularities_[-1]
        self.n_communities_ = int(self.labels_.max()) + 1 if len(self.labels_) else 0
        return self


class KtJets(BaseEstimator, ClusterMixin):
    """Jet clustering with the kt-family distances.

    Parameters
    ----------
    p : int
        Distance exponent: 1 (kt), -1 (anti-kt) or 0 (angle only).
    method : str
        "sequential" pair recombination or "hierarchical" graph clustering.
    r : float or None
        Optional radius; pairwise distances are divided by r**2 when set.
    """

    def __init__(self, p=1, method="sequential", r=None):
        self.p = p
        self.method = method
        self.r = r

    def fit(self, X, y=None):
        particles = check_particles(X)
        if self.method == "sequential":
            seq = jets.sequential_cluster(particles, self.p, self.r)
            self.sequence_ = seq
            finals = seq.jets
            constituents = seq.constituents
        elif self.method == "hierarchical":
            dendro, finals, constituents = jets.hierarchical_cluster(
                particles, self.p, self.r
            )
            self.dendrogram_ = dendro
        else:
            raise ValueError(f"unknown method {self.method!r}")
        labels = np.empty(len(particles), dtype=int)
        for jet_id, cons in enumerate(constituents):
            for i in cons:
                labels[i] = jet_id
        self.labels_ = labels
        self.jets_ = np.array([[j.pt, j.y, j.phi] for j in finals])
        self.n_jets_ = len(finals)
        return self


class DeepQCommunities(BaseEstimator, ClusterMixin):
    """First-level community assignment predicted by a deep Q-learning agent.

    ``fit`` trains the agent against the greedy modularity oracle on the
    first ``node_limit`` nodes, then labels every node with one agent-driven
    sweep. ``score`` returns the agent's precision against the oracle.
    """

    def __init__(
        self,
        action_size=4,
        gamma=0.001,
        learning_rate=0.001,
        epsilon_start=1.0,
        epsilon_min=0.01,
        epsilon_decay=0.995,
        batch_size=32,
        replay_capacity=100_000,
        reward_hit=10_000.0,
        reward_miss=-1_000.0,
        epochs=70,
        node_limit=10_000,
        normalize=True,
        seed=0,
    ):
        self.action_size = action_size
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.epsilon_start = epsilon_start
        self.epsilon_min = epsilon_min
        self.epsilon_decay = epsilon_decay
        self.batch_size = batch_size
        self.replay_capacity = replay_capacity
        self.reward_hit = reward_hit
        self.reward_miss = reward_miss
        self.epochs = epochs
        self.node_limit = node_limit
        self.normalize = normalize
        self.seed = seed

    def _config(self):
        return dql.AgentConfig(
            action_size=self.action_size,
            gamma=self.gamma,
            learning_rate=self.learning_rate,
            epsilon_start=self.epsilon_start,
            epsilon_min=self.epsilon_min,
            epsilon_decay=self.epsilon_decay,
            batch_size=self.batch_size,
            replay_capacity=self.replay_capacity,
            reward_hit=self.reward_hit,
            reward_miss=self.reward_miss,
            epochs=self.epochs,
        ).validate()

    def fit(self, X, y=None):
        g = as_graph(X)
        if self.normalize:
            g = normalize_weights(g)
        cfg = self._config()
        limit = min(self.node_limit, g.node_count)
        model, history, adam = dql.train(g, cfg, node_limit=limit, seed=self.seed)
        self.graph_ = g
        self.model_ = model
        self.adam_ = adam
        self.history_ = history
        cs, q = dql.cluster_with_agent(model, g, cfg)
        assignment, _ = lv._renumber(cs.community, g.node_count)
        self.labels_ = assignment
        self.modularity_ = q
        return self

    def score(self, X=None, y=None):
        """Fraction of nodes where the greedy agent matches the oracle."""
        if not hasattr(self, "model_"):
            raise NotFittedError("fit the estimator before calling score")
        g = self.graph_ if X is None else as_graph(X)
        if X is not None and self.normalize:
            g = normalize_weights(g)
        positives, negatives = dql.evaluate_precision(self.model_, g, self._config())
        return positives / (positives + negatives)
