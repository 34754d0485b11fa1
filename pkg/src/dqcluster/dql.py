"""Clustering environment and deep Q-learning agent.

Each environment step presents one node as a (state_size x action_size)
feature matrix: slot 0 is the node itself, the remaining slots its first
neighbors in dataset order, surplus slots a dummy column of -1. The agent
answers with a slot index. The environment scores the answer against the
greedy modularity oracle over the same slots and, by default, advances the
partition along the oracle's move (teacher forcing), so the training
trajectory matches what a Louvain sweep restricted to the visible slots
would do regardless of the agent's mistakes.

Rewards are +10000 when the chosen slot's community equals the oracle's
choice and -1000 otherwise; the comparison is by community id, so any slot
holding a member of the oracle community is correct.
"""

import time
from dataclasses import dataclass

import numpy as np

from .graph import DUMMY_ID, is_normalized, neighbor_slots
from .louvain import CommunityState, apply_move, best_community, modularity
from .nn import AdamState, build_q_network, train_on_batch

FEATURE_COUNT = 5


@dataclass
class AgentConfig:
    """Hyperparameters for the environment, agent and training loop."""

    action_size: int = 4
    state_size: int = FEATURE_COUNT
    gamma: float = 0.001
    learning_rate: float = 0.001
    epsilon_start: float = 1.0
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.995
    batch_size: int = 32
    replay_capacity: int = 100_000
    reward_hit: float = 10_000.0
    reward_miss: float = -1_000.0
    epochs: int = 70

    def validate(self):
        if self.action_size < 2:
            raise ValueError("action_size must be >= 2")
        if self.state_size != FEATURE_COUNT:
            raise ValueError(f"state encoding has {FEATURE_COUNT} features per slot")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        for name in ("epsilon_start", "epsilon_min"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError("epsilon_decay must be in (0, 1]")
        if self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ValueError("need batch_size >= 1 and replay_capacity >= batch_size")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for name in ("reward_hit", "reward_miss"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        return self


def encode_state(g, cs, node, cfg):
    """Feature matrix for one node; column j describes neighbor slot j.

    Rows: weight from the node into the slot community (loops excluded),
    the slot community's degree sum, the node's degree, the node's loop
    weight, and 2W. Dummy slots are all -1.
    """
    if not 0 <= node < g.node_count:
        raise ValueError(f"node {node} out of range [0, {g.node_count})")
    slots = neighbor_slots(g, node, cfg.action_size)
    w_to = cs.weight_to_communities(g, node)
    state = np.full((FEATURE_COUNT, cfg.action_size), -1.0)
    degree = g.degree(node)
    loop = g.loop_weight[node]
    two_w = 2.0 * g.total_weight
    for j, (nbr, _) in enumerate(slots.slots):
        if nbr == DUMMY_ID:
            continue
        c = cs.community[nbr]
        state[0, j] = w_to.get(c, 0.0)
        state[1, j] = cs.deg_c[c]
        state[2, j] = degree
        state[3, j] = loop
        state[4, j] = two_w
    return state


def reward(chosen, oracle, cfg):
    """Hit reward when the chosen community is the oracle's, else miss."""
    return cfg.reward_hit if chosen is not None and chosen == oracle else cfg.reward_miss


@dataclass
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayMemory:
    """Bounded ring buffer; the oldest experience is evicted first."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items = []
        self._next = 0

    def push(self, experience):
        if len(self._items) < self.capacity:
            self._items.append(experience)
        else:
            self._items[self._next] = experience
        self._next = (self._next + 1) % self.capacity

    def sample(self, rng, k):
        if k > len(self._items):
            raise RuntimeError(f"cannot sample {k} from memory of size {len(self._items)}")
        idx = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in idx]

    def __len__(self):
        return len(self._items)


class ClusteringEnv:
    """One episode sweeps the selected nodes once, in dataset order.

    ``agent_moves=False`` (default) applies the oracle's move after every
    step; ``agent_moves=True`` applies the agent's chosen move instead and
    leaves the node in place on a dummy choice.

    The terminal step returns an all-zero matrix as the next state; replay
    never bootstraps from it (terminal targets are the bare reward).
    """

    def __init__(self, g, cfg, node_limit=None, agent_moves=False):
        if not is_normalized(g):
            raise ValueError("environment requires a weight-normalized graph")
        cfg.validate()
        self.g = g
        self.cfg = cfg
        self.agent_moves = agent_moves
        count = g.node_count if node_limit is None else min(node_limit, g.node_count)
        if count < 1:
            raise ValueError("need at least one node to sweep")
        self.nodes = list(range(count))
        self.cs = None
        self.pos = 0

    def reset(self):
        self.cs = CommunityState.singletons(self.g)
        self.pos = 0
        return encode_state(self.g, self.cs, self.nodes[0], self.cfg)

    def _slot_communities(self, node):
        slots = neighbor_slots(self.g, node, self.cfg.action_size)
        return [
            None if nbr == DUMMY_ID else self.cs.community[nbr]
            for nbr, _ in slots.slots
        ]

    def _oracle(self, node, slot_comms):
        candidates = [c for c in slot_comms[1:] if c is not None]
        return best_community(self.g, self.cs, node, candidates)

    def oracle_slot(self):
        """Slot index realizing the oracle's community for the current node."""
        node = self.nodes[self.pos]
        slot_comms = self._slot_communities(node)
        oracle = self._oracle(node, slot_comms)
        for j, c in enumerate(slot_comms):
            if c == oracle:
                return j
        raise RuntimeError("oracle community not reachable from any slot")

    def step(self, action):
        """Apply one agent decision; returns (next_state, reward, done)."""
        if not 0 <= action < self.cfg.action_size:
            raise ValueError(f"action {action} outside [0, {self.cfg.action_size})")
        node = self.nodes[self.pos]
        slot_comms = self._slot_communities(node)
        oracle = self._oracle(node, slot_comms)
        chosen = slot_comms[action]
        r = reward(chosen, oracle, self.cfg)
        if self.agent_moves:
            if chosen is not None:
                apply_move(self.g, self.cs, node, chosen)
        else:
            apply_move(self.g, self.cs, node, oracle)
        self.pos += 1
        done = self.pos >= len(self.nodes)
        if done:
            next_state = np.zeros((FEATURE_COUNT, self.cfg.action_size))
        else:
            next_state = encode_state(self.g, self.cs, self.nodes[self.pos], self.cfg)
        return next_state, r, done


def act(model, state, epsilon, rng):
    """Epsilon-greedy slot choice; greedy ties break to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    action_size = state.shape[-1]
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(action_size))
    q = model.predict(state)
    return int(np.argmax(q))


def replay(model, memory, adam, cfg, rng):
    """One experience-replay update on a uniformly sampled mini-batch.

    Target vectors start from the model's own predictions and only the taken
    action is overwritten: with the immediate reward for terminal steps,
    otherwise reward + gamma * max_a Q(next_state).
    """
    if len(memory) < cfg.batch_size:
        raise RuntimeError(
            f"replay needs at least batch_size={cfg.batch_size} experiences, "
            f"have {len(memory)}"
        )
    batch = memory.sample(rng, cfg.batch_size)
    states = np.stack([e.state for e in batch])
    next_states = np.stack([e.next_state for e in batch])
    stacked = model.predict(np.concatenate([states, next_states]))
    targets = stacked[: len(batch)].copy()
    q_next = stacked[len(batch):]
    for k, e in enumerate(batch):
        if e.terminal:
            targets[k, e.action] = e.reward
        else:
            targets[k, e.action] = e.reward + cfg.gamma * float(np.max(q_next[k]))
    return train_on_batch(model, states, targets, adam)


def compute_return(rewards, gamma):
    """Discounted return sum_k gamma^k * rewards[k]."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    total = 0.0
    factor = 1.0
    for r in rewards:
        total += factor * r
        factor *= gamma
    return total


def train(g, cfg, node_limit=None, seed=0, agent_moves=False):
    """Train the agent; returns (model, per-epoch metrics, adam state).

    One epoch is one sweep over the first ``node_limit`` nodes starting from
    singleton communities. Epsilon decays multiplicatively after each epoch.
    Fully deterministic for a given seed (wall time aside).
    """
    cfg.validate()
    if node_limit is not None and node_limit < 1:
        raise ValueError("node_limit must be >= 1")
    root = np.random.SeedSequence(seed)
    model_ss, act_ss, replay_ss = root.spawn(3)
    model_seed = int(model_ss.generate_state(1)[0])
    model = build_q_network(cfg.state_size, cfg.action_size, seed=model_seed)
    adam = AdamState(lr=cfg.learning_rate)
    act_rng = np.random.default_rng(act_ss)
    replay_rng = np.random.default_rng(replay_ss)
    memory = ReplayMemory(cfg.replay_capacity)
    env = ClusteringEnv(g, cfg, node_limit=node_limit, agent_moves=agent_moves)
    epsilon = cfg.epsilon_start
    metrics = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        state = env.reset()
        done = False
        hits = 0
        steps = 0
        losses = []
        while not done:
            action = act(model, state, epsilon, act_rng)
            next_state, r, done = env.step(action)
            memory.push(Experience(state, action, r, next_state, done))
            if r == cfg.reward_hit:
                hits += 1
            steps += 1
            if len(memory) >= cfg.batch_size:
                losses.append(replay(model, memory, adam, cfg, replay_rng))
            state = next_state
        epsilon = max(cfg.epsilon_min, epsilon * cfg.epsilon_decay)
        metrics.append(
            {
                "epoch": epoch,
                "loss": float(np.mean(losses)) if losses else float("nan"),
                "hit_rate": hits / steps,
                "epsilon": epsilon,
                "wall_time_ms": (time.perf_counter() - t0) * 1000.0,
            }
        )
    return model, metrics, adam


def _greedy_action(model, env, state):
    if model is None:
        return env.oracle_slot()
    return act(model, state, 0.0, None)


def evaluate_precision(model, g, cfg):
    """Greedy sweep over all nodes against the oracle; (positives, negatives).

    The partition evolves along the oracle's moves exactly as during
    training. ``model=None`` plays the oracle itself (a self-consistency
    mode that must score zero negatives).
    """
    env = ClusteringEnv(g, cfg)
    state = env.reset()
    positives = 0
    negatives = 0
    done = False
    while not done:
        action = _greedy_action(model, env, state)
        state, r, done = env.step(action)
        if r == cfg.reward_hit:
            positives += 1
        else:
            negatives += 1
    return positives, negatives


def cluster_with_agent(model, g, cfg):
    """One first-level sweep applying the agent's own moves.

    Starts from singletons; every node moves to its chosen slot's community
    (staying put on a dummy choice). Returns the resulting community state
    and its modularity. ``model=None`` substitutes the oracle.
    """
    env = ClusteringEnv(g, cfg, agent_moves=True)
    state = env.reset()
    done = False
    while not done:
        action = _greedy_action(model, env, state)
        state, _, done = env.step(action)
    return env.cs, modularity(g, env.cs)
