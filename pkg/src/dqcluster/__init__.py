"""Graph community detection with Louvain, a deep Q-learning agent trained
against it, and kt-family jet clustering on particle graphs."""

from .dql import (
    AgentConfig,
    ClusteringEnv,
    Experience,
    ReplayMemory,
    cluster_with_agent,
    compute_return,
    encode_state,
    evaluate_precision,
    train,
)
from .errors import ParseError, ShapeError, StructureError
from .estimators import DeepQCommunities, KtJets, LouvainCommunities
from .graph import (
    DUMMY_ID,
    DUMMY_WEIGHT,
    Graph,
    load_edge_list,
    load_matrix_market,
    neighbor_slots,
    normalize_weights,
)
from .jets import (
    ClusterSequence,
    Particle,
    beam_distance,
    build_particle_graph,
    delta_r2,
    hierarchical_kt,
    kt_distance,
    sequential_cluster,
)
from .louvain import (
    CommunityState,
    Dendrogram,
    aggregate,
    best_community,
    louvain,
    modularity,
    modularity_gain,
    one_level,
)
from .nn import (
    AdamState,
    MlpModel,
    adam_step,
    build_q_network,
    load_model,
    mse_loss,
    save_model,
    train_on_batch,
)

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "AdamState",
    "ClusterSequence",
    "ClusteringEnv",
    "CommunityState",
    "DeepQCommunities",
    "Dendrogram",
    "DUMMY_ID",
    "DUMMY_WEIGHT",
    "Experience",
    "Graph",
    "KtJets",
    "LouvainCommunities",
    "MlpModel",
    "Particle",
    "ParseError",
    "ReplayMemory",
    "ShapeError",
    "StructureError",
    "adam_step",
    "aggregate",
    "beam_distance",
    "best_community",
    "build_particle_graph",
    "build_q_network",
    "cluster_with_agent",
    "compute_return",
    "delta_r2",
    "encode_state",
    "evaluate_precision",
    "hierarchical_kt",
    "kt_distance",
    "load_edge_list",
    "load_matrix_market",
    "load_model",
    "louvain",
    "modularity",
    "modularity_gain",
    "mse_loss",
    "neighbor_slots",
    "normalize_weights",
    "one_level",
    "save_model",
    "sequential_cluster",
    "train",
    "train_on_batch",
]
