"""Command-line front end.

Every subcommand writes its results to stdout or ``--out`` and reports
failures as a single ``error: <kind>: <message>`` line on stderr with a
nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from contextlib import contextmanager
from typing import Iterator, Sequence

import numpy as np

from . import dendritic, growth, kernels, metric, plane_tree, sampler
from .ip_tree import load_ip, validate_ip
from .rng import default_seed, generator

EXIT_OK = 0
EXIT_FAIL = 1


class CliError(Exception):
    """An input problem that is reported without a traceback."""


@contextmanager
def _output(path: str | None):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _read_lines(path: str) -> Iterator[tuple[int, object]]:
    fh = sys.stdin if path == "-" else open(path, encoding="utf-8")
    try:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CliError(f"{path}:{lineno}: not valid JSON ({exc.msg})") from None
    finally:
        if fh is not sys.stdin:
            fh.close()


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: not valid JSON ({exc.msg})") from None


def _read_space(path: str) -> metric.FiniteMMSpace:
    """A finite space, or the last trimmed tree of a JSONL file, rescaled."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise CliError(f"{path}: empty file")
    text = "\n".join(lines)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        try:
            obj = json.loads(lines[-1])
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: not valid JSON ({exc.msg})") from None
    if isinstance(obj, dict) and "counts" in obj:
        return metric.ip_rescale(metric.TrimmedTree.from_json(obj)).to_finite()
    if isinstance(obj, dict) and "dist" in obj:
        return metric.FiniteMMSpace.from_json(obj)
    raise CliError(f"{path}: expected a finite space or a trimmed tree")


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def _tree_of(obj) -> plane_tree.PlaneTree:
    if isinstance(obj, dict) and "tree" in obj:
        return plane_tree.labelled_from_json(obj).tree
    return plane_tree.from_json(obj)


def _sizes(text: str) -> list[int]:
    try:
        ns = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ns or any(n < 1 for n in ns):
        raise argparse.ArgumentTypeError("sizes must be positive")
    return ns


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned value")
    return v


def _pairs(text: str) -> list[tuple[int, int]]:
    out = []
    for item in text.split(","):
        try:
            a, b = item.split("-")
            out.append((int(a), int(b)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"pairs look like 1-2,3-4; got {item!r}") from None
    return out


# subcommands ----------------------------------------------------------------------

def cmd_grow(args) -> int:
    if args.model == "marchal":
        trees = growth.marchal_chain(args.n, args.alpha, args.seed)
    elif args.model == "patricia":
        trees = growth.patricia_chain(args.ell, None, args.n, args.seed)
    else:
        if not args.config:
            raise CliError("--model line needs --config")
        trees = growth.line_chain(load_ip(args.config), args.n, args.seed)
    if args.final:
        trees = trees[-1:]
    with _output(args.out) as fh:
        for t in trees:
            fh.write(_dump(plane_tree.to_json(t, args.compact)) + "\n")
    return EXIT_OK


def cmd_sample(args) -> int:
    tree = load_ip(args.ip_config)
    chain = sampler.grow_chain(tree, args.n, args.seed)
    out = chain.labelled[-1:] if args.final else chain.labelled
    with _output(args.out) as fh:
        for lt in out:
            obj = plane_tree.labelled_to_json(lt, args.compact) if args.labelled \
                else plane_tree.to_json(lt.tree, args.compact)
            fh.write(_dump(obj) + "\n")
    return EXIT_OK


def _skipped(count: int, what: str) -> None:
    if count:
        print(f"note: skipped {count} tree(s) with fewer than 2 leaves, which cannot be {what}",
              file=sys.stderr)


def cmd_backward(args) -> int:
    rng = generator(args.seed, 2)
    skipped = 0
    with _output(args.out) as fh:
        for _, obj in _read_lines(args.trees):
            t = _tree_of(obj)
            if t.n_leaves() < 2:
                skipped += 1
                continue
            if args.leaf is not None:
                t = plane_tree.backward_step(t, args.leaf)
            else:
                t = plane_tree.uniform_backward_step(t, rng)
            fh.write(_dump(plane_tree.to_json(t, args.compact)) + "\n")
    _skipped(skipped, "shrunk")
    return EXIT_OK


def cmd_trim(args) -> int:
    skipped = 0
    with _output(args.out) as fh:
        for _, obj in _read_lines(args.trees):
            t = _tree_of(obj)
            if t.n_leaves() < 2:
                skipped += 1
                continue
            fh.write(_dump(metric.trim(t).to_json()) + "\n")
    _skipped(skipped, "trimmed")
    return EXIT_OK


def cmd_gp(args) -> int:
    X = _read_space(args.first)
    Y = _read_space(args.second)
    if args.exact:
        value = metric.gp_exact_small(X, Y)
    else:
        coupling = _read_json(args.coupling) if args.coupling else None
        value = metric.gp_upper_bound(X, Y, args.strategy, coupling)
    print(repr(float(value)))
    return EXIT_OK


def cmd_dendritic_check(args) -> int:
    failures = 0
    previous = None
    for lineno, obj in _read_lines(args.trees):
        if isinstance(obj, dict) and "pair_class" in obj:
            d = dendritic.DendriticSystem.from_json(obj)
        else:
            if not (isinstance(obj, dict) and "tree" in obj):
                raise CliError(f"{args.trees}:{lineno}: expected a labelled tree or a dendritic system")
            d = dendritic.from_labelled_tree(plane_tree.labelled_from_json(obj))
        problems = dendritic.check_axioms(d)
        if not problems and previous is not None and previous.n < d.n:
            if dendritic.restrict(d, previous.n) != previous:
                problems = [f"restriction to {previous.n} labels differs from the previous line"]
        status = "ok" if not problems else problems[0]
        print(f"{lineno}\tn={d.n}\t{status}")
        failures += bool(problems)
        previous = d
    return EXIT_OK if failures == 0 else EXIT_FAIL


def cmd_dendritic_ultrametric(args) -> int:
    tree = load_ip(args.ip_config)
    lt, state = sampler.sample_tree(tree, args.n, args.seed)
    index = dendritic.LeafIndex(lt)
    pairs = args.pairs or [(1, 2)]
    tree.separate(state.points)
    with _output(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "estimate", "exact"])
        for i, j in pairs:
            if not (1 <= i <= args.n and 1 <= j <= args.n):
                raise CliError(f"pair {i}-{j} is out of range for n={args.n}")
            exact = dendritic.ultrametric_exact(tree, state.points[i - 1], state.points[j - 1], i == j)
            w.writerow([i, j, repr(index.estimate(i, j)), repr(exact)])
    return EXIT_OK


def cmd_dendritic_coalescent(args) -> int:
    with open(args.matrix, encoding="utf-8") as fh:
        rows = [[float(x) for x in r] for r in csv.reader(fh) if r]
    ct = dendritic.coalescent_tree(np.array(rows))
    for c, h in sorted(zip(ct.clusters, ct.heights), key=lambda ch: (ch[1], sorted(ch[0]))):
        print(f"{h!r}\t" + ",".join(str(i + 1) for i in sorted(c)))
    return EXIT_OK


def cmd_validate_ip(args) -> int:
    tree = load_ip(args.config)
    problems = validate_ip(tree)
    if problems:
        for p in problems:
            print(f"violation: {p}")
        return EXIT_FAIL
    print(f"ok: {tree!r}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    load_ip(args.config)  # fail early on a bad configuration
    rows = metric.convergence_experiment(args.config, args.ns, args.reps, args.seed, args.threads)
    with _output(args.csv) as fh:
        metric.write_csv(rows, fh)
    if args.csv not in (None, "-"):
        for n, s in metric.summarize(rows).items():
            print(f"n={n}\tmedian_discrepancy={s['median_discrepancy']:.6g}"
                  f"\tmedian_gp_bound={s['median_gp_bound']:.6g}\tpass_rate={s['pass_rate']:.6g}")
    return EXIT_OK


# argument parsing -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="treegrowth", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=_positive, default=1, help="worker processes for replicate runs")
    p.add_argument("--version", action="version", version=f"%(prog)s ({kernels.BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", required=True)
    seed_help = "run seed (default: $TREEGROWTH_SEED or 0)"

    g = sub.add_parser("grow", help="grow T_1..T_n of a named chain")
    g.add_argument("--model", choices=["marchal", "patricia", "line"], required=True)
    g.add_argument("--n", type=_positive, required=True)
    g.add_argument("--alpha", type=float, default=2.0)
    g.add_argument("--ell", type=int, default=2)
    g.add_argument("--config", help="IP-tree file or preset for --model line")
    g.add_argument("--seed", type=_seed, default=None, help=seed_help)
    g.add_argument("--final", action="store_true", help="emit only T_n")
    g.add_argument("--compact", action="store_true", help="degree-sequence encoding")
    g.add_argument("--out")
    g.set_defaults(func=cmd_grow)

    s = sub.add_parser("sample", help="sample a chain from an IP-tree")
    s.add_argument("--ip-config", required=True)
    s.add_argument("--n", type=_positive, required=True)
    s.add_argument("--seed", type=_seed, default=None, help=seed_help)
    s.add_argument("--labelled", action="store_true")
    s.add_argument("--final", action="store_true")
    s.add_argument("--compact", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    b = sub.add_parser("backward", help="one backward step on every tree of a JSONL file")
    b.add_argument("trees")
    b.add_argument("--leaf", type=int, help="remove this leaf (0-based planar index) instead of a uniform one")
    b.add_argument("--seed", type=_seed, default=None, help=seed_help)
    b.add_argument("--compact", action="store_true")
    b.add_argument("--out")
    b.set_defaults(func=cmd_backward)

    t = sub.add_parser("trim", help="trim and rescale every tree of a JSONL file")
    t.add_argument("trees")
    t.add_argument("--out")
    t.set_defaults(func=cmd_trim)

    q = sub.add_parser("gp", help="Gromov-Prokhorov distance of two finite spaces")
    mode = q.add_mutually_exclusive_group(required=True)
    mode.add_argument("--exact", action="store_true")
    mode.add_argument("--bound", action="store_true")
    q.add_argument("--strategy", choices=["natural", "greedy"], default="greedy")
    q.add_argument("--coupling", help="JSON coupling matrix or correspondence list for --strategy natural")
    q.add_argument("first", help="finite space JSON or trimmed-tree JSONL (last line is used)")
    q.add_argument("second")
    q.set_defaults(func=cmd_gp)

    d = sub.add_parser("dendritic", help="dendritic systems and ultrametrics")
    dsub = d.add_subparsers(dest="action", required=True)
    dc = dsub.add_parser("check", help="check the axioms of every labelled tree or system")
    dc.add_argument("trees")
    dc.set_defaults(func=cmd_dendritic_check)
    du = dsub.add_parser("ultrametric", help="estimated and exact d(i, j) from one sampled run")
    du.add_argument("--ip-config", required=True)
    du.add_argument("--n", type=_positive, required=True)
    du.add_argument("--pairs", type=_pairs)
    du.add_argument("--seed", type=_seed, default=None, help=seed_help)
    du.add_argument("--out")
    du.set_defaults(func=cmd_dendritic_ultrametric)
    dk = dsub.add_parser("coalescent", help="merge tree of an ultrametric CSV matrix")
    dk.add_argument("matrix")
    dk.set_defaults(func=cmd_dendritic_coalescent)

    v = sub.add_parser("validate-ip", help="check the IP-tree conditions")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate_ip)

    e = sub.add_parser("experiment", help="convergence experiment, one CSV row per (n, rep)")
    e.add_argument("--config", required=True)
    e.add_argument("--ns", type=_sizes, required=True)
    e.add_argument("--reps", type=_positive, default=100)
    e.add_argument("--seed", type=_seed, default=None, help=seed_help)
    e.add_argument("--csv")
    e.add_argument("--threads", type=_positive, default=argparse.SUPPRESS)
    e.set_defaults(func=cmd_experiment)
    return p


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", 0) is None:
        try:
            args.seed = default_seed()
        except ValueError as exc:
            parser.error(str(exc))
    if args.command == "grow":
        if not 1.0 < args.alpha <= 2.0:
            parser.error(f"argument --alpha: must lie in (1, 2], got {args.alpha}")
        if args.ell < 2:
            parser.error(f"argument --ell: alphabet size must be at least 2, got {args.ell}")
    return args


def run(args: argparse.Namespace) -> int:
    try:
        return args.func(args)
    except (CliError, ValueError, KeyError, IndexError, RuntimeError, OSError) as exc:
        kind = "input" if isinstance(exc, CliError) else type(exc).__name__
        msg = str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"error: {kind}: {' '.join(msg.split())}", file=sys.stderr)
        return EXIT_FAIL


def main(argv: Sequence[str] | None = None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
