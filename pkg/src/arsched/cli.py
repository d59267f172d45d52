"""Command-line entry point.

Subcommands: topo, trees, simulate, baseline, train, eval, bench, validate.
Every command is deterministic given its config file and seeds. A JSON config
file can predefine any flag; explicit flags win. Exit codes: 0 success,
1 validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .baselines import METHODS
from .presets import PRESETS, get_preset
from .topology import TopologyGraph, build_bcube, build_dcell, build_jellyfish
from .workload import (
    WorkloadError,
    build_all_trees,
    check_tree,
    forest_to_dict,
    load_forest,
    merge_workloads,
    save_forest,
)


class UsageError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}")


def _resolve(args, config, key, default=None):
    """Flag value if given, else config file value, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in config:
        return config[key]
    return default


def _build_topology(args, config) -> TopologyGraph:
    preset = _resolve(args, config, "preset")
    topo_path = _resolve(args, config, "topo")
    if topo_path:
        return TopologyGraph.load(topo_path)
    if preset is None:
        raise UsageError("either --topo or --preset is required")
    if preset in PRESETS:
        return get_preset(preset).build()
    seed = int(_resolve(args, config, "seed", 0))
    if preset == "bcube":
        return build_bcube(int(_resolve(args, config, "n", 3)), int(_resolve(args, config, "k", 1)))
    if preset == "dcell":
        return build_dcell(int(_resolve(args, config, "n", 4)), int(_resolve(args, config, "level", 1)))
    if preset == "jellyfish":
        return build_jellyfish(
            int(_resolve(args, config, "switches", 10)),
            int(_resolve(args, config, "degree", 4)),
            int(_resolve(args, config, "servers", 10)),
            seed,
        )
    raise UsageError(f"unknown preset {preset!r}")


def _say(args, *msg):
    if not getattr(args, "quiet", False):
        print(*msg)


# -- commands -----------------------------------------------------------------


def cmd_topo(args, config):
    g = _build_topology(args, config)
    out = _resolve(args, config, "out")
    if out is None:
        raise UsageError("--out is required")
    g.save(out)
    _say(args, f"{g.name}: {len(g.nodes)} nodes ({g.num_servers} servers), {g.num_links} links -> {out}")
    return 0


def cmd_trees(args, config):
    g = _build_topology(args, config)
    forest = build_all_trees(g)
    out = _resolve(args, config, "out")
    if out is None:
        raise UsageError("--out is required")
    save_forest(forest, out)
    _say(
        args,
        f"{len(forest.trees)} trees, {forest.pre_merge_total} pre-merge -> "
        f"{forest.num_workloads} workloads, {forest.num_flows} flows -> {out}",
    )
    return 0


def cmd_simulate(args, config):
    g = _build_topology(args, config)
    scheduler = _resolve(args, config, "scheduler", "greedy")
    if scheduler not in METHODS:
        raise UsageError(f"unknown scheduler {scheduler!r}")
    seed = int(_resolve(args, config, "seed", 0))
    dump = _resolve(args, config, "workloads")
    if dump is not None:
        # run a previously dumped workload set instead of rebuilding it
        if scheduler != "greedy":
            raise UsageError("--workloads applies to the greedy scheduler only")
        from .baselines import greedy_schedule

        metrics, sim = greedy_schedule(g, seed, forest=load_forest(dump))
    else:
        metrics, sim = METHODS[scheduler](g, seed)
    log = _resolve(args, config, "log")
    if log:
        sim.write_log(log)
    _say(
        args,
        f"{scheduler} seed={seed}: {metrics.total_rounds} rounds, "
        f"{metrics.total_sent} workloads, mean direction utilization "
        f"{metrics.mean_direction_utilization:.4f}",
    )
    return 0


def cmd_baseline(args, config):
    g = _build_topology(args, config)
    method = _resolve(args, config, "method")
    if method not in METHODS:
        raise UsageError(f"--method must be one of {sorted(METHODS)}")
    n_seeds = int(_resolve(args, config, "seeds", 10))
    rows = []
    for seed in range(n_seeds):
        metrics, _ = METHODS[method](g, seed)
        rows.append((method, g.name, seed, metrics.total_rounds,
                     metrics.mean_direction_utilization))
    csv_path = _resolve(args, config, "csv")
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "topology", "seed", "rounds", "mean_utilization"])
            for m, t, s, r, u in rows:
                writer.writerow([m, t, s, r, f"{u:.6f}"])
    mean = sum(r[3] for r in rows) / len(rows)
    _say(args, f"{method} on {g.name}: mean {mean:.1f} rounds over {n_seeds} seeds")
    return 0


def cmd_train(args, config):
    from .rl import TrainConfig, iterative_train
    from .rl.training import write_curves

    g = _build_topology(args, config)
    out_dir = Path(_resolve(args, config, "out_dir", "runs"))
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(
        outer_iters=int(_resolve(args, config, "outer_iters", 10)),
        tree_phases=int(_resolve(args, config, "tree_phases", 5)),
        pick_phases=int(_resolve(args, config, "pick_phases", 5)),
        episodes_per_phase=int(_resolve(args, config, "episodes", 16)),
        gamma=float(_resolve(args, config, "gamma", 0.99)),
        lr=float(_resolve(args, config, "lr", 3e-4)),
        value_lr=float(_resolve(args, config, "value_lr", 1e-3)),
        clip_ratio=float(_resolve(args, config, "clip_ratio", 0.2)),
        entropy_coef=float(_resolve(args, config, "entropy", 0.01)),
        seed=int(_resolve(args, config, "seed", 0)),
    )
    tree_p, pick_p, curves, trainer = iterative_train(
        g, cfg, out_dir=out_dir, quiet=getattr(args, "quiet", False)
    )
    write_curves(out_dir / "training_log.csv", curves)
    _say(args, f"trained {cfg.outer_iters} outer iterations -> {out_dir}")
    return 0


def cmd_eval(args, config):
    from .envs import TreeSelectEnv
    from .rl import evaluate, load_checkpoint

    ckpt = _resolve(args, config, "checkpoint")
    if ckpt is None:
        raise UsageError("--checkpoint is required")
    g = _build_topology(args, config)
    forest = build_all_trees(g)
    tree_p, pick_p, meta = load_checkpoint(ckpt)
    env = TreeSelectEnv(g, forest)
    if env.obs_dim != tree_p.obs_dim or env.num_trees != tree_p.num_trees:
        raise UsageError(
            f"checkpoint was trained for obs_dim={tree_p.obs_dim}/trees={tree_p.num_trees}, "
            f"this topology needs {env.obs_dim}/{env.num_trees}"
        )
    episodes = int(_resolve(args, config, "episodes", 1))
    seeds = _parse_seeds(_resolve(args, config, "seeds", "0"))
    res = evaluate(tree_p, pick_p, env, episodes=episodes, seeds=seeds)
    csv_path = _resolve(args, config, "csv")
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["topology", "episodes", "mean_rounds", "std_rounds", "completed"])
            writer.writerow([
                g.name, len(res["rounds"]), f"{res['mean_rounds']:.4f}",
                f"{res['std_rounds']:.4f}", res["all_completed"],
            ])
    _say(args, f"rl eval on {g.name}: mean {res['mean_rounds']:.1f} rounds "
               f"(completed={res['all_completed']})")
    return 0


def _parse_seeds(raw):
    if isinstance(raw, (list, tuple)):
        return [int(s) for s in raw]
    return [int(s) for s in str(raw).replace(",", " ").split()]


def _parse_checkpoints(raw):
    """label=path pairs for RL rows in the bench table."""
    out = {}
    for item in raw or []:
        if "=" not in item:
            raise UsageError(f"--checkpoint expects LABEL=PATH, got {item!r}")
        label, path = item.split("=", 1)
        out[label] = path
    return out


def cmd_bench(args, config):
    labels = _resolve(args, config, "presets") or list(PRESETS)
    if isinstance(labels, str):
        labels = [l for l in labels.split(",") if l]
    methods_raw = _resolve(args, config, "methods", "ps,ring,greedy")
    methods = [m for m in (methods_raw.split(",") if isinstance(methods_raw, str) else methods_raw) if m]
    for m in methods:
        if m not in ("ps", "ring", "greedy", "rl"):
            raise UsageError(f"unknown method {m!r}")
    checkpoints = _parse_checkpoints(_resolve(args, config, "checkpoint"))
    if "rl" in methods and not checkpoints:
        raise UsageError("method 'rl' requires at least one --checkpoint LABEL=PATH")
    n_seeds = int(_resolve(args, config, "seeds", 10))
    seeds = list(range(n_seeds))

    rows = []
    cells = {}
    for label in labels:
        preset = get_preset(label)
        g = preset.build()
        forest = build_all_trees(g)
        base = {
            "topology": label,
            "n_node": len(g.nodes),
            "n_edge": g.num_links,
            "workloads": forest.num_workloads,
            "flows": forest.num_flows,
        }
        for method in methods:
            if method == "rl":
                if label not in checkpoints:
                    continue
                stats = _bench_rl(g, forest, checkpoints[label], seeds)
            else:
                per = [METHODS[method](g, s)[0].total_rounds for s in seeds]
                stats = {
                    "mean": sum(per) / len(per),
                    "std": _std(per),
                    "n": len(per),
                }
            ref = preset.ref_rounds.get(method)
            rows.append({
                **base,
                "method": method,
                "mean_rounds": stats["mean"],
                "std_rounds": stats["std"],
                "seeds": stats["n"],
                "ref_rounds": "" if ref is None else ref,
            })
            cells[(label, method)] = stats["mean"]

    csv_path = _resolve(args, config, "csv")
    if csv_path:
        _write_bench_csv(csv_path, rows)
    if not getattr(args, "quiet", False):
        _print_bench_table(labels, methods, cells)
    return 0


def _bench_rl(g, forest, ckpt, seeds):
    from .envs import TreeSelectEnv
    from .rl import evaluate, load_checkpoint

    tree_p, pick_p, _ = load_checkpoint(ckpt)
    env = TreeSelectEnv(g, forest)
    res = evaluate(tree_p, pick_p, env, episodes=1, seeds=seeds)
    return {"mean": res["mean_rounds"], "std": res["std_rounds"], "n": len(res["rounds"])}


def _std(xs):
    m = sum(xs) / len(xs)
    return (sum((x - m) ** 2 for x in xs) / len(xs)) ** 0.5


def _write_bench_csv(path, rows):
    cols = ["method", "topology", "n_node", "n_edge", "workloads", "flows",
            "mean_rounds", "std_rounds", "seeds", "ref_rounds"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([
                row["method"], row["topology"], row["n_node"], row["n_edge"],
                row["workloads"], row["flows"], f"{row['mean_rounds']:.1f}",
                f"{row['std_rounds']:.2f}", row["seeds"], row["ref_rounds"],
            ])


def _print_bench_table(labels, methods, cells):
    """Aligned text table: one column per preset, one row per method."""
    presets = [get_preset(l) for l in labels]
    head = [""] + labels
    lines = [head]
    lines.append(["(N_node, N_edge)"] + [f"({p.ref_nodes}, {p.ref_edges})" for p in presets])
    meta = []
    for label in labels:
        g = get_preset(label).build()
        f = build_all_trees(g)
        meta.append(f"{f.num_workloads} / {f.num_flows}")
    lines.append(["workloads / flows"] + meta)
    lines.append(["reference workloads"] + [str(p.ref_workloads) for p in presets])
    for method in methods:
        row = [method]
        for label in labels:
            v = cells.get((label, method))
            row.append("-" if v is None else f"{v:.1f}")
        lines.append(row)
    widths = [max(len(str(line[i])) for line in lines) for i in range(len(head))]
    for line in lines:
        print("  ".join(str(c).ljust(w) for c, w in zip(line, widths)).rstrip())


def cmd_validate(args, config):
    topo_path = _resolve(args, config, "topo")
    dump_path = _resolve(args, config, "workloads")
    if topo_path is None or dump_path is None:
        raise UsageError("validate requires --topo and --workloads")
    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        mark = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        print(f"[{mark}] {name}{(': ' + detail) if detail else ''}")

    try:
        g = TopologyGraph.load(topo_path)
    except Exception as e:
        report("topology file", False, str(e))
        return 1
    report("topology file", True, f"{len(g.nodes)} nodes, {g.num_links} links")
    report("topology family counts", *_check_family_counts(g))

    try:
        forest = load_forest(dump_path)
    except Exception as e:
        report("workload dump", False, str(e))
        return 1
    report("workload dump", True,
           f"{len(forest.trees)} trees, {forest.num_workloads} workloads")

    ok, detail = True, ""
    for tree in forest.trees:
        try:
            check_tree(g, tree)
        except WorkloadError as e:
            ok, detail = False, str(e)
            break
    report("tree invariants (endpoints, acyclicity, merge shape, delivery)", ok, detail)

    rebuilt = build_all_trees(g)
    report(
        "deterministic rebuild matches dump",
        forest_to_dict(rebuilt)["trees"] == forest_to_dict(forest)["trees"],
    )

    idempotent = all(
        merge_workloads(g, t, id_start=min(w.wid for w in t.workloads)) == t
        for t in forest.trees if t.workloads
    )
    report("merge idempotence", idempotent)

    label = _label_for(g)
    if label is not None:
        ref = PRESETS[label].ref_workloads
        report(
            "workload count vs reference",
            True,
            f"{label}: reference {ref}, schedulable {forest.num_workloads}, "
            f"merged flows {forest.num_flows}",
        )
    return 1 if failures else 0


def _check_family_counts(g):
    p = g.params
    if g.name == "bcube":
        n, k = p["n"], p["k"]
        want_servers = n ** (k + 1)
        want_nodes = want_servers + (k + 1) * n ** k
        want_links = (k + 1) * n ** (k + 1)
    elif g.name == "dcell":
        n = p["n"]
        want_servers = n * (n + 1)
        want_nodes = want_servers + n + 1
        want_links = n * (n + 1) + (n + 1) * n // 2
    elif g.name == "jellyfish":
        want_servers = p["num_servers"]
        want_nodes = want_servers + p["num_switches"]
        want_links = want_servers + p["num_switches"] * p["switch_degree"] // 2
    else:
        return True, "unknown family, skipped"
    ok = (
        g.num_servers == want_servers
        and len(g.nodes) == want_nodes
        and g.num_links == want_links
    )
    return ok, f"nodes {len(g.nodes)}/{want_nodes}, links {g.num_links}/{want_links}"


def _label_for(g):
    for label, preset in PRESETS.items():
        if preset.family == g.name and all(g.params.get(k) == v for k, v in preset.params.items() if k != "seed"):
            return label
    return None


# -- argument wiring -----------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file; explicit flags win")
    sub.add_argument("--seed", type=int, help="root seed (default 0)")
    sub.add_argument("--out-dir", dest="out_dir", help="output directory")
    sub.add_argument("--quiet", action="store_true")


def _add_topology_args(sub):
    sub.add_argument("--topo", help="topology JSON file")
    sub.add_argument("--preset", help="family (bcube/dcell/jellyfish) or preset label")
    sub.add_argument("--n", type=int)
    sub.add_argument("--k", type=int)
    sub.add_argument("--level", type=int)
    sub.add_argument("--switches", type=int)
    sub.add_argument("--degree", type=int)
    sub.add_argument("--servers", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="arsched", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("topo", help="generate a topology file")
    _add_common(sp); _add_topology_args(sp)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_topo)

    sp = subs.add_parser("trees", help="build and dump merged workload trees")
    _add_common(sp); _add_topology_args(sp)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_trees)

    sp = subs.add_parser("simulate", help="run one scheduler to completion")
    _add_common(sp); _add_topology_args(sp)
    sp.add_argument("--scheduler", choices=sorted(METHODS))
    sp.add_argument("--workloads", help="run this workload dump (greedy only)")
    sp.add_argument("--log", help="round log (JSON lines)")
    sp.set_defaults(fn=cmd_simulate)

    sp = subs.add_parser("baseline", help="seed sweep for one baseline method")
    _add_common(sp); _add_topology_args(sp)
    sp.add_argument("--method", choices=sorted(METHODS))
    sp.add_argument("--seeds", type=int, help="number of seeds (default 10)")
    sp.add_argument("--csv")
    sp.set_defaults(fn=cmd_baseline)

    sp = subs.add_parser("train", help="alternating training of both policies")
    _add_common(sp); _add_topology_args(sp)
    for flag, typ in [
        ("--outer-iters", int), ("--tree-phases", int), ("--pick-phases", int),
        ("--episodes", int), ("--gamma", float), ("--lr", float),
        ("--value-lr", float), ("--clip-ratio", float), ("--entropy", float),
    ]:
        sp.add_argument(flag, dest=flag[2:].replace("-", "_"), type=typ)
    sp.set_defaults(fn=cmd_train)

    sp = subs.add_parser("eval", help="evaluate a checkpoint with mode actions")
    _add_common(sp); _add_topology_args(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--seeds", help="seed list, e.g. '0,1,2'")
    sp.add_argument("--csv")
    sp.set_defaults(fn=cmd_eval)

    sp = subs.add_parser("bench", help="reference comparison table over presets")
    _add_common(sp)
    sp.add_argument("--presets", help="comma-separated preset labels (default: all)")
    sp.add_argument("--methods", help="comma-separated from ps,ring,greedy,rl")
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--csv")
    sp.add_argument("--checkpoint", action="append", help="LABEL=PATH, repeatable")
    sp.set_defaults(fn=cmd_bench)

    sp = subs.add_parser("validate", help="re-check invariants of dumped artifacts")
    _add_common(sp)
    sp.add_argument("--topo")
    sp.add_argument("--workloads")
    sp.set_defaults(fn=cmd_validate)
    return parser


def main(argv=None):
    from .topology import TopologyError
    from .workload import WorkloadError as _WorkloadError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.fn(args, config)
    except (UsageError, TopologyError, _WorkloadError, KeyError,
            OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
