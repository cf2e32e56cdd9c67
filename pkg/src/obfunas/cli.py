"""Command-line entry point: ``obfunas <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (invalid architecture, failed
equivalence check, infeasible search, unreadable file) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from obfunas.arch_ir.build import INIT_POLICIES, build_network
from obfunas.arch_ir.codec import canonical_hash, canonicalize, parse_architecture, serialize_architecture
from obfunas.arch_ir.enumerate import enumerate_space
from obfunas.arch_ir.graph import Architecture, CellGraph, validate_architecture
from obfunas.arch_ir.ops import INPUT, OUTPUT, OpLabel, resolve_kind
from obfunas.arch_ir.sidecar import load_network, load_weights, save_network
from obfunas.errors import ObfunasError, SchemaError
from obfunas.flops import flops_of_network
from obfunas.oracle import SyntheticOracle, format_accuracy_table, load_accuracy_table
from obfunas.search import SearchConfig, brute_force_search, evolve, reachable_masks
from obfunas.tensor_core.network import ConcreteNetwork
from obfunas.transforms import ObfuscationPlan, apply_plan, apply_plan_structure, check_function_preserving, loads_plan
from obfunas.transforms.candidates import PRESETS


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ObfunasError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _load_arch(path: str | Path) -> Architecture:
    path = Path(path)
    if path.is_dir():
        path = path / "arch.json"
    return parse_architecture(_read_text(path))


def _load_victim(path: str, weights: str | None, init: str, seed: int) -> ConcreteNetwork:
    """Victims are always put in canonical node order, so plan node ids are reproducible."""
    p = Path(path)
    if p.is_dir() and weights is None and (p / "weights.bin").exists():
        return load_network(p)
    arch = canonicalize(_load_arch(path))
    if weights is not None:
        if not Path(weights).exists():
            raise ObfunasError(f"cannot read {weights}: no such file")
        return load_weights(arch, weights)
    return build_network(arch, init=init, seed=seed)


def _load_plan(path: str) -> ObfuscationPlan:
    text = _read_text(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("plan", f"invalid JSON: {exc}") from exc
    if isinstance(doc, dict) and "best_plan" in doc:  # a search report
        return ObfuscationPlan.from_doc(doc["best_plan"])
    return loads_plan(text)


def _threads() -> int:
    raw = os.environ.get("OBFUNAS_THREADS", "0")
    try:
        value = int(raw)
    except ValueError:
        raise ObfunasError(f"OBFUNAS_THREADS must be a non-negative integer, got {raw!r}") from None
    if value < 0:
        raise ObfunasError(f"OBFUNAS_THREADS must be a non-negative integer, got {raw!r}")
    return value


# -- subcommands ----------------------------------------------------------------


def cmd_validate(args) -> int:
    arch = _load_arch(args.input)
    report = validate_architecture(arch, args.max_nodes, args.max_edges)
    print(report)
    if report.ok:
        print(f"hash={canonical_hash(arch).hex}")
    return 0 if report.ok else 1


def cmd_obfuscate(args) -> int:
    victim = _load_victim(args.input, args.weights, args.init, args.seed)
    plan = _load_plan(args.plan) if args.plan else ObfuscationPlan()
    mask = apply_plan(victim, plan)
    save_network(mask, args.output)
    print(f"applications={len(plan)}")
    print(f"victim_hash={canonical_hash(victim.arch).hex}")
    print(f"mask_hash={canonical_hash(mask.arch).hex}")
    print(f"mflops_victim={flops_of_network(victim).format_mflops()} mflops_mask={flops_of_network(mask).format_mflops()}")
    return 0


def cmd_verify(args) -> int:
    a, b = load_network(args.a), load_network(args.b)
    report = check_function_preserving(a, b, args.n, args.seed, args.tol)
    print(report)
    return 0 if report.passed else 1


def cmd_flops(args) -> int:
    arch = _load_arch(args.input)
    flops = flops_of_network(build_network(arch))
    print(f"{flops.format_mflops()} MFLOPs ({int(flops)} FLOPs)")
    return 0


def _template(args) -> Architecture:
    return Architecture(
        cell=CellGraph((OpLabel(INPUT), OpLabel(OUTPUT)), ((0, 1),)),
        stem_channels=args.stem_channels,
        num_stacks=args.num_stacks,
        cells_per_stack=args.cells_per_stack,
        input_shape=tuple(args.input_shape),
        num_classes=args.num_classes,
    )


def cmd_enumerate(args) -> int:
    ops = [resolve_kind(name) for name in args.ops.split(",") if name]
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for arch in enumerate_space(args.max_nodes, args.max_edges, ops, _template(args)):
        _write_text(out / f"{canonical_hash(arch).hex}.json", serialize_architecture(arch) + "\n")
        count += 1
    print(f"architectures={count}")
    return 0


def _oracle_from(spec: str, seed: int):
    if spec == "synthetic":
        return SyntheticOracle(seed)
    return load_accuracy_table(spec)


def cmd_gen_table(args) -> int:
    if args.oracle != "synthetic":
        raise ObfunasError("gen-table only supports --oracle synthetic")
    oracle = SyntheticOracle(args.seed)
    archs: list[Architecture] = []
    if args.space:
        space = Path(args.space)
        if not space.is_dir():
            raise ObfunasError(f"cannot read {space}: not a directory")
        archs += [parse_architecture(_read_text(p)) for p in sorted(space.glob("*.json"))]
    if args.victim:
        victim = build_network(canonicalize(_load_arch(args.victim)))
        seen = reachable_masks(victim, args.strategies, args.max_plan_length)
        archs += [apply_plan_structure(victim.topology, plan).arch for plan in seen.values()]
    rows = {canonical_hash(a).hex: oracle.query(a) for a in archs}
    _write_text(args.output, format_accuracy_table(rows.items()))
    print(f"rows={len(rows)}")
    return 0


def cmd_search(args, parser) -> int:
    victim = _load_victim(args.victim, None, "uniform", 0)
    oracle = _oracle_from(args.oracle, args.oracle_seed)
    try:
        config = SearchConfig(
            population_size=args.pop,
            cycles=args.cycles,
            tournament_size=args.tournament,
            seed=args.seed,
            tau=args.tau,
            tau_mult=args.tau_mult,
            strategy_set=args.strategies,
            max_plan_length=args.max_plan_length,
            debug=args.debug,
            threads=_threads(),
        )
    except ValueError as exc:
        parser.error(str(exc))
    if args.brute_force:
        tau = config.resolve_tau(flops_of_network(victim))
        report = brute_force_search(victim, oracle, tau, config.strategy_set, config.max_plan_length)
    else:
        report = evolve(victim, oracle, config)
    if args.output:
        _write_text(args.output, report.dumps() + "\n")
    if args.history:
        _write_text(args.history, report.history_csv())
    print(report.summary())
    print(f"mask_hash={report.best_arch_hash}")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="obfunas", description="Architecture obfuscation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an architecture document")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--max-nodes", type=int)
    p.add_argument("--max-edges", type=int)

    p = sub.add_parser("obfuscate", help="apply a plan and write the mask network")
    p.add_argument("-i", "--input", required=True, help="victim arch.json (or a saved network directory)")
    p.add_argument("-w", "--weights", help="victim weights.bin; default: build from --seed")
    p.add_argument("-p", "--plan", help="plan document or search report; default: empty plan")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--init", choices=INIT_POLICIES, default="uniform")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify", help="compare two saved networks on random inputs")
    p.add_argument("-a", required=True)
    p.add_argument("-b", required=True)
    p.add_argument("-n", type=int, default=100)
    p.add_argument("--tol", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("flops", help="report MFLOPs of an architecture")
    p.add_argument("-i", "--input", required=True)

    p = sub.add_parser("enumerate", help="write every cell in a small space")
    p.add_argument("--max-nodes", type=int, required=True)
    p.add_argument("--max-edges", type=int)
    p.add_argument("--ops", default="conv3x3-bn-relu,conv1x1-bn-relu,maxpool3x3")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--stem-channels", type=int, default=4)
    p.add_argument("--num-stacks", type=int, default=1)
    p.add_argument("--cells-per-stack", type=int, default=1)
    p.add_argument("--input-shape", type=int, nargs=3, default=(3, 8, 8))
    p.add_argument("--num-classes", type=int, default=10)

    p = sub.add_parser("gen-table", help="write an accuracy table for a space")
    p.add_argument("--space", help="directory of architecture documents")
    p.add_argument("--victim", help="also include every mask reachable from this victim")
    p.add_argument("--strategies", default="nb101")
    p.add_argument("--max-plan-length", type=int, default=2)
    p.add_argument("--oracle", default="synthetic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("search", help="find the worst-accuracy mask under a FLOPs bound")
    p.add_argument("--victim", required=True)
    p.add_argument("--oracle", required=True, help="accuracy table CSV, or 'synthetic'")
    p.add_argument("--oracle-seed", type=int, default=0)
    tau = p.add_mutually_exclusive_group(required=True)
    tau.add_argument("--tau", type=float, help="absolute FLOPs bound")
    tau.add_argument("--tau-mult", type=float, help="bound as a multiple of victim FLOPs")
    p.add_argument("--pop", type=int, default=32)
    p.add_argument("--cycles", type=int, default=2000)
    p.add_argument("--tournament", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strategies", default="nb101", help=f"kinds or presets {sorted(PRESETS)}, comma separated")
    p.add_argument("--max-plan-length", type=int, default=3)
    p.add_argument("--brute-force", action="store_true", help="exhaustive reference search")
    p.add_argument("--debug", action="store_true", help="verify every accepted mask numerically")
    p.add_argument("-o", "--output")
    p.add_argument("--history")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-table" and not (args.space or args.victim):
        parser.error("gen-table needs --space and/or --victim")
    handlers = {
        "validate": cmd_validate,
        "obfuscate": cmd_obfuscate,
        "verify": cmd_verify,
        "flops": cmd_flops,
        "enumerate": cmd_enumerate,
        "gen-table": cmd_gen_table,
    }
    try:
        if args.command == "search":
            return cmd_search(args, parser)
        return handlers[args.command](args)
    except (ObfunasError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
