"""Command-line benchmark harness.

    bench run --mode {thunder|lightning|scratch} --envset NAME
              --problems N --budget SECS --seed S --out DIR
              [--env ID] [--config FILE]
    bench render --db FILE --env ID --out FILE.svg
    bench summarize FILES... [--out DIR]

run executes a campaign and writes metrics.csv, stats.json, and the
final database into the output directory. render draws a saved database
over its environment. summarize compares metrics files and emits a JSON
report plus a text table.
"""

from __future__ import annotations

import argparse
import sys

from .bench import CampaignSpec, run_campaign, summarize
from .environments import environment_by_id
from .lightning import load_store
from .sparsdb import load_roadmap
from .svg import render_roadmap_svg, render_store_svg
from .thunder import ThunderConfig


def _cmd_run(args) -> int:
    config = ThunderConfig.from_file(args.config) if args.config else ThunderConfig()
    config = config.with_overrides(seed=args.seed)
    spec = CampaignSpec(mode=args.mode, envset=args.envset, problems=args.problems,
                        budget=args.budget, seed=args.seed, out_dir=args.out,
                        env_id=args.env, config=config)
    step = max(1, args.problems // 10)

    out = run_campaign(spec)
    for row in out.rows[::step]:  # sample of the stream, newest last
        print(f"problem {row.problem:>5}  env={row.environment:<12} "
              f"solver={row.solver:<15} t={row.wall_time_s:.4f}s "
              f"nodes={row.db_nodes}")
    solved = sum(1 for r in out.rows if not r.discarded)
    recalls = sum(r.recall for r in out.rows)
    print(f"done: {solved}/{len(out.rows)} solved, {recalls} recalled; "
          f"metrics at {out.csv_path}"
          + (f", database at {out.db_path}" if out.db_path else ""))
    return 0


def _cmd_render(args) -> int:
    env = environment_by_id(args.env)
    with open(args.db, "rb") as fh:
        magic = fh.read(4)
    if magic == b"THDR":
        rm = load_roadmap(args.db, env.space, env.invariant_mask)
        counts = render_roadmap_svg(rm, env, args.out)
        print(f"wrote {args.out}: {counts['nodes']} nodes, "
              f"{counts['edges']} edges, {counts['obstacles']} obstacles")
    elif magic == b"LGHT":
        store = load_store(args.db, dim=env.space.dim)
        counts = render_store_svg(store, env, args.out)
        print(f"wrote {args.out}: {counts['paths']} paths, "
              f"{counts['obstacles']} obstacles")
    else:
        raise ValueError(f"{args.db}: unknown database format (magic {magic!r})")
    return 0


def _cmd_summarize(args) -> int:
    report = summarize(args.files, out_dir=args.out)
    from .bench import _text_table
    print(_text_table(report), end="")
    if args.out:
        print(f"reports written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench", description="experience-based planning benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a planning campaign")
    p_run.add_argument("--mode", required=True,
                       choices=["thunder", "lightning", "scratch"])
    p_run.add_argument("--envset", required=True,
                       help="built-in environment set (point2d-five, arm4-five)")
    p_run.add_argument("--problems", type=int, required=True)
    p_run.add_argument("--budget", type=float, required=True,
                       help="per-problem time budget in seconds")
    p_run.add_argument("--seed", type=int, required=True)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--env", default=None,
                       help="pin one environment id (static campaign)")
    p_run.add_argument("--config", default=None,
                       help="key = value planner configuration file")
    p_run.set_defaults(fn=_cmd_run)

    p_render = sub.add_parser("render", help="draw a saved database as SVG")
    p_render.add_argument("--db", required=True)
    p_render.add_argument("--env", required=True, help="environment id")
    p_render.add_argument("--out", required=True, help="output .svg path")
    p_render.set_defaults(fn=_cmd_render)

    p_sum = sub.add_parser("summarize", help="compare metrics files")
    p_sum.add_argument("files", nargs="+")
    p_sum.add_argument("--out", default=None, help="directory for reports")
    p_sum.set_defaults(fn=_cmd_summarize)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
