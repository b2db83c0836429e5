"""Command line entry point: ``metades run|tables|stats|generate``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .bench import ExperimentConfig, RunResult, emit_tables, format_summary, run_experiment
from .dataset import GENERATORS
from .stats import AccuracyTable, friedman_mean_ranks, kruskal_wallis, wilcoxon_signed_rank


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.output_dir is not None:
        cfg = ExperimentConfig.from_dict({**cfg.snapshot(), "output_dir": args.output_dir})
    result = run_experiment(cfg)
    out = args.out
    if out is None:
        out = Path(cfg.output_dir or ".") / f"{cfg.name}_results.json"
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    result.save(out)
    print(format_summary(result))
    print(f"results written to {out}")
    return 0


def _cmd_tables(args) -> int:
    results = [RunResult.load(p) for p in args.inputs]
    text = emit_tables(results, args.format, reference=args.reference, ranks=not args.no_ranks)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_stats(args) -> int:
    table = AccuracyTable.from_csv(args.table)
    if args.test == "friedman":
        for m, r in zip(table.methods, friedman_mean_ranks(table)):
            print(f"{m}\t{r:.4f}")
    elif args.test == "wilcoxon":
        ref = args.reference or table.methods[0]
        if ref not in table.methods:
            raise ValueError(f"method {ref!r} not in table")
        for m in table.methods:
            if m == ref:
                continue
            w = wilcoxon_signed_rank(table.column(ref), table.column(m))
            print(f"{ref} vs {m}\tW={w.statistic:g}\tp={w.p_value:.6g}\t{w.direction}\tn={w.n}")
    else:
        k = kruskal_wallis(*(table.column(m) for m in table.methods))
        print(f"H={k.statistic:.6g}\tp={k.p_value:.6g}")
    return 0


def _cmd_generate(args) -> int:
    data = GENERATORS[args.name](args.n, args.seed)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(data.n_features)] + ["label"])
        for row, y in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in row] + [int(y)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metades", description="META-DES benchmark harness")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a replicated experiment from a key = value config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="results JSON path (default <output_dir>/<name>_results.json)")
    r.add_argument("--output-dir", help="override the config's output_dir (diagnostics go here)")
    r.set_defaults(func=_cmd_run)

    t = sub.add_parser("tables", help="render mean(std) tables from result files")
    t.add_argument("--in", dest="inputs", nargs="+", required=True)
    t.add_argument("--format", choices=("md", "markdown", "csv"), default="md")
    t.add_argument("--reference", help="method compared against every other column by Wilcoxon")
    t.add_argument("--no-ranks", action="store_true", help="omit the Friedman mean rank row")
    t.add_argument("--out")
    t.set_defaults(func=_cmd_tables)

    s = sub.add_parser("stats", help="rank tests on an accuracy table CSV")
    s.add_argument("--table", required=True)
    s.add_argument("--test", choices=("wilcoxon", "friedman", "kruskal"), required=True)
    s.add_argument("--reference", help="wilcoxon: method to compare against the others (default first)")
    s.set_defaults(func=_cmd_stats)

    g = sub.add_parser("generate", help="write a synthetic dataset to CSV")
    g.add_argument("name", choices=sorted(GENERATORS))
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"metades: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
