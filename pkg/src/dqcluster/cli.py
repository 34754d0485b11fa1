"""Command line interface: ingest, cluster-louvain, train, eval, jet.

Runs are reproducible: every subcommand honors --seed (falling back to the
DQCLUSTER_SEED environment variable, then 0) and all outputs are written
atomically (temp file + rename), so failures leave no partial files.

Exit codes: 0 success, 1 usage/config error, 2 input or parse error,
3 runtime numeric error.
"""

import argparse
import json
import os
import sys
import tempfile

from . import dql, jets
from .errors import ParseError, StructureError
from .graph import load_edge_list, load_matrix_market, normalize_weights
from .louvain import CommunityState, louvain, modularity, one_level
from .nn import load_model, model_to_dict

SEED_ENV_VAR = "DQCLUSTER_SEED"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2) + "\n")


def _load_config_file(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ParseError(f"config {path}: expected a JSON object")
    return cfg


def _merged(args, key, default):
    """Flag value if given, else config file value, else the default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if args.config_data and key in args.config_data:
        return args.config_data[key]
    return default


def _resolve_seed(args):
    seed = _merged(args, "seed", None)
    if seed is None:
        seed = os.environ.get(SEED_ENV_VAR)
    return int(seed) if seed is not None else 0


def _load_graph(args):
    path = _merged(args, "input", None)
    if path is None:
        raise UsageError("--input is required")
    fmt = _merged(args, "format", None)
    if fmt is None:
        base = str(path)[:-3] if str(path).endswith(".gz") else str(path)
        fmt = "mtx" if base.endswith(".mtx") else "edgelist"
    if fmt == "mtx":
        return load_matrix_market(path)
    if fmt == "edgelist":
        return load_edge_list(path, index_base=int(_merged(args, "index_base", 0)))
    raise UsageError(f"format {fmt!r} is not a graph format")


def _agent_config(args):
    cfg = dql.AgentConfig(
        action_size=int(_merged(args, "action_size", 4)),
        gamma=float(_merged(args, "gamma", 0.001)),
        learning_rate=float(_merged(args, "learning_rate", 0.001)),
        epsilon_start=float(_merged(args, "epsilon_start", 1.0)),
        epsilon_min=float(_merged(args, "epsilon_min", 0.01)),
        epsilon_decay=float(_merged(args, "epsilon_decay", 0.995)),
        batch_size=int(_merged(args, "batch_size", 32)),
        replay_capacity=int(_merged(args, "replay_capacity", 100_000)),
        reward_hit=float(_merged(args, "reward_hit", 10_000.0)),
        reward_miss=float(_merged(args, "reward_miss", -1_000.0)),
        epochs=int(_merged(args, "epochs", 70)),
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _metrics_csv(rows):
    lines = ["epoch,loss,hit_rate,epsilon,wall_time_ms"]
    for row in rows:
        lines.append(
            f"{row['epoch']},{row['loss']!r},{row['hit_rate']!r},"
            f"{row['epsilon']!r},{row['wall_time_ms']!r}"
        )
    return "\n".join(lines) + "\n"


def cmd_ingest(args):
    g = _load_graph(args)
    g.check_symmetry()
    summary = {
        "nodes": g.node_count,
        "edges": g.num_edges,
        "total_weight": g.total_weight,
        "degree_sum": sum(g.degrees),
        "loops": sum(1 for w in g.loop_weight if w > 0),
    }
    out = os.path.join(args.out_dir, "graph_summary.json")
    _atomic_write_json(out, summary)
    print(f"ingested {g.node_count} nodes, {g.num_edges} edges, W={g.total_weight}")
    return EXIT_OK


def cmd_cluster_louvain(args):
    g = _load_graph(args)
    if _merged(args, "normalize", False):
        g = normalize_weights(g)
    min_gain = float(_merged(args, "min_gain", 1e-7))
    dendro = louvain(g, min_gain=min_gain)
    text_path = os.path.join(args.out_dir, "dendrogram.txt")
    metrics_path = os.path.join(args.out_dir, "louvain_metrics.json")
    metrics = dendro.metrics()
    for entry in metrics["levels"]:
        entry["modularity_unnormalized"] = 2.0 * g.total_weight * entry["modularity"]
    final = dendro.final_assignment()
    cs = CommunityState.from_assignment(g, final.tolist())
    metrics["final_modularity_on_original"] = modularity(g, cs)
    metrics["final_communities"] = int(final.max()) + 1 if len(final) else 0
    _atomic_write(text_path, dendro.to_text())
    _atomic_write_json(metrics_path, metrics)
    print(
        f"louvain: {len(dendro.levels)} levels, "
        f"final modularity {dendro.levels[-1].quality:.6f}, "
        f"{metrics['final_communities']} communities"
    )
    return EXIT_OK


def cmd_train(args):
    g = _load_graph(args)
    g = normalize_weights(g)
    cfg = _agent_config(args)
    seed = _resolve_seed(args)
    node_limit = int(_merged(args, "node_limit", 10_000))
    if node_limit > g.node_count:
        print(
            f"warning: node limit {node_limit} exceeds graph size "
            f"{g.node_count}; clamping",
            file=sys.stderr,
        )
        node_limit = g.node_count
    model, metrics, adam = dql.train(
        g, cfg, node_limit=node_limit, seed=seed,
        agent_moves=bool(_merged(args, "agent_moves", False)),
    )
    checkpoint_path = os.path.join(args.out_dir, "checkpoint.json")
    csv_path = os.path.join(args.out_dir, "metrics.csv")
    _atomic_write(checkpoint_path, json.dumps(model_to_dict(model, adam)) + "\n")
    _atomic_write(csv_path, _metrics_csv(metrics))
    final_hit = metrics[-1]["hit_rate"] if metrics else float("nan")
    print(f"trained {cfg.epochs} epochs on {node_limit} nodes; final hit-rate {final_hit:.4f}")
    return EXIT_OK


def cmd_eval(args):
    g = _load_graph(args)
    g = normalize_weights(g)
    oracle_mode = bool(getattr(args, "oracle_mode", False))
    model = None
    if not oracle_mode:
        checkpoint = _merged(args, "checkpoint", None)
        if checkpoint is None:
            raise UsageError("--checkpoint is required unless --oracle-mode is set")
        model, _ = load_model(checkpoint)
        meta = model.meta or {}
        found = (meta.get("state_size"), meta.get("action_size"))
        configured = _merged(args, "action_size", None)
        if configured is not None:
            expected = (dql.FEATURE_COUNT, int(configured))
            if found != expected:
                print(
                    f"error: checkpoint architecture mismatch: expected "
                    f"(state_size, action_size)={expected}, found {found}",
                    file=sys.stderr,
                )
                return EXIT_USAGE
        args.action_size = found[1]
    cfg = _agent_config(args)
    positives, negatives = dql.evaluate_precision(model, g, cfg)
    _, q_agent = dql.cluster_with_agent(model, g, cfg)
    first_sweep, _ = one_level(
        g, CommunityState.singletons(g), min_gain=0.0, max_sweeps=1
    )
    q_louvain = modularity(g, first_sweep)
    report = {
        "positives": positives,
        "negatives": negatives,
        "precision": positives / (positives + negatives),
        "modularity_agent": q_agent,
        "modularity_louvain": q_louvain,
        "modularity_ratio": q_agent / q_louvain if q_louvain != 0 else float("nan"),
    }
    _atomic_write_json(os.path.join(args.out_dir, "eval_report.json"), report)
    print(
        f"precision {report['precision']:.4f} "
        f"({positives} positive / {negatives} negative), "
        f"agent modularity {q_agent:.6f} vs louvain first sweep {q_louvain:.6f}"
    )
    return EXIT_OK


def cmd_jet(args):
    path = _merged(args, "input", None)
    if path is None:
        raise UsageError("--input is required")
    particles = jets.load_particles(path)
    if not particles:
        print(f"error: {path}: empty event", file=sys.stderr)
        return EXIT_INPUT
    p = int(_merged(args, "p", 1))
    r = _merged(args, "r", None)
    r = float(r) if r is not None else None
    method = _merged(args, "method", "both")
    ran_sequential = method in ("sequential", "both")
    ran_hierarchical = method in ("hierarchical", "both")
    if ran_sequential:
        seq = jets.sequential_cluster(particles, p, r)
        _atomic_write_json(os.path.join(args.out_dir, "jets_sequential.json"), seq.to_dict())
        print(f"sequential: {len(seq.jets)} jets from {len(particles)} particles")
        if getattr(args, "oracle_check", False):
            ref = jets.sequential_cluster_reference(particles, p, r)
            if seq.to_dict() == ref.to_dict():
                print("oracle: match")
            else:
                print("oracle: MISMATCH", file=sys.stderr)
                return EXIT_NUMERIC
    if ran_hierarchical:
        dendro, finals, constituents = jets.hierarchical_cluster(particles, p, r)
        doc = {
            "levels": dendro.metrics()["levels"],
            "jets": [
                {"pt": jet.pt, "y": jet.y, "phi": jet.phi, "constituents": cons}
                for jet, cons in zip(finals, constituents)
            ],
        }
        _atomic_write_json(os.path.join(args.out_dir, "jets_hierarchical.json"), doc)
        print(f"hierarchical: {len(finals)} jets in {len(dendro.levels)} levels")
    if ran_sequential and ran_hierarchical:
        agreement = jets.compare_methods(particles, p, r)
        _atomic_write_json(os.path.join(args.out_dir, "jets_agreement.json"), agreement)
        print(
            f"agreement: identical={agreement['identical_partition']} "
            f"rand_index={agreement['rand_index']:.4f}"
        )
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dqcluster",
        description="Graph clustering: Louvain, a deep Q-learning agent, and kt jets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--input", help="input file (graph or particle list)")
        sp.add_argument(
            "--format", choices=["mtx", "edgelist", "particles"], help="input format"
        )
        sp.add_argument("--seed", type=int, help=f"RNG seed (default ${SEED_ENV_VAR} or 0)")
        sp.add_argument("--out-dir", default=".", help="output directory")
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--index-base", type=int, choices=[0, 1], help="edge list id base")

    sp = sub.add_parser("ingest", help="load a graph and write a summary")
    common(sp)
    sp.set_defaults(handler=cmd_ingest)

    sp = sub.add_parser("cluster-louvain", help="full Louvain clustering")
    common(sp)
    sp.add_argument("--min-gain", type=float, help="per-phase gain threshold")
    sp.add_argument("--normalize", action="store_const", const=True, help="normalize weights")
    sp.set_defaults(handler=cmd_cluster_louvain)

    def agent_flags(sp):
        sp.add_argument("--action-size", type=int)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--learning-rate", type=float)
        sp.add_argument("--epsilon-start", type=float)
        sp.add_argument("--epsilon-min", type=float)
        sp.add_argument("--epsilon-decay", type=float)
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--replay-capacity", type=int)
        sp.add_argument("--reward-hit", type=float)
        sp.add_argument("--reward-miss", type=float)
        sp.add_argument("--epochs", type=int)

    sp = sub.add_parser("train", help="train the deep Q-learning agent")
    common(sp)
    agent_flags(sp)
    sp.add_argument("--node-limit", type=int, help="train on the first N nodes")
    sp.add_argument(
        "--agent-moves",
        action="store_const",
        const=True,
        help="advance the environment with the agent's move instead of the oracle's",
    )
    sp.set_defaults(handler=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint against the oracle")
    common(sp)
    agent_flags(sp)
    sp.add_argument("--checkpoint", help="model checkpoint to evaluate")
    sp.add_argument(
        "--oracle-mode",
        action="store_const",
        const=True,
        help="replace the model with the oracle itself (self test)",
    )
    sp.set_defaults(handler=cmd_eval)

    sp = sub.add_parser("jet", help="kt-family jet clustering")
    common(sp)
    sp.add_argument("--p", type=int, choices=[-1, 0, 1], help="distance exponent")
    sp.add_argument("--r", type=float, help="optional radius divisor")
    sp.add_argument("--method", choices=["sequential", "hierarchical", "both"])
    sp.add_argument(
        "--oracle-check",
        action="store_const",
        const=True,
        help="verify the sequence against the naive recompute oracle",
    )
    sp.set_defaults(handler=cmd_jet)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        try:
            args.config_data = _load_config_file(args.config) if args.config else None
            return args.handler(args)
        except UsageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except (ParseError, StructureError, FileNotFoundError, IsADirectoryError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        except (ValueError, RuntimeError, FloatingPointError, ZeroDivisionError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
    finally:
        sys.stdout.flush()
        sys.stderr.flush()


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
