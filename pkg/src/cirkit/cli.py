"""Command-line entry point.

Subcommands: pair, synth, train, eval, build-dataset, refine, oracle.
Exit codes: 0 success, 1 usage error, 2 data error (or failed oracle),
3 judge error. Diagnostics go to stderr; file outputs are byte-reproducible
for a fixed --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .composer import load_checkpoint, save_checkpoint
from .config import describe_defaults, load_run_config
from .errors import CirkitError, DataError, JudgeError, UsageError
from .evaluation import QueryRecord, RetrievalIndex, evaluate
from .judge import judge_from_spec
from .oracles import run_suite
from .pairing import ImageRecord, biometric_filter, build_groups, pairs_from_group, parse_generation_response
from .refinement import BenchmarkTriplet, refine
from .storage import read_embeddings, read_jsonl, write_jsonl
from .synthesis import CaptionedItem, SynthConfig, synthesize_batch, triplet_to_row, triplet_from_row
from .training import train_on_items, train_on_triplets


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cirkit", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)

    p = sub.add_parser("pair",
                       help="group images by embedding similarity and emit groups")
    p.add_argument("--embeddings", required=True, help="CIRF embedding file")
    p.add_argument("--low", type=float, default=0.5, help="similarity lower bound (default 0.5)")
    p.add_argument("--high", type=float, default=0.95, help="similarity upper bound (default 0.95)")
    p.add_argument("--interval", type=float, default=0.03, help="minimum similarity spacing (default 0.03)")
    p.add_argument("--group-size", type=int, default=6, help="members per group (default 6)")
    p.add_argument("--out", required=True, help="output groups JSONL")
    p.set_defaults(func=_cmd_pair)

    p = sub.add_parser("synth",
                       help="synthesize training triplets from caption-embedding pairs")
    p.add_argument("--embeddings", required=True, help="CIRF file; sidecar must carry captions")
    p.add_argument("--out", required=True, help="output triplets JSONL")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--alpha", type=float, default=0.5, help="interpolation strength toward the target (default 0.5)")
    p.add_argument("--text-ratio", type=float, default=0.75, help="text synthesis probability (default 0.75)")
    p.add_argument("--noise-sigma", type=float, default=0.05, help="augmentation noise std (default 0.05)")
    p.add_argument("--neighbor", choices=("nearest", "random"), default="nearest",
                   help="neighbor selection strategy (default nearest)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train",
                       help="train the composer model",
                       epilog="config keys and defaults:\n" + describe_defaults(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", required=True, help="run-config JSON (see README)")
    p.add_argument("--out", required=True, help="output checkpoint manifest path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--trace", default=None, help="optional loss-trace JSON output")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval",
                       help="evaluate a checkpoint on a query set")
    p.add_argument("--index", required=True, help="CIRF gallery file")
    p.add_argument("--queries", required=True, help="queries JSONL")
    p.add_argument("--ckpt", required=True, help="checkpoint manifest")
    p.add_argument("--k", default="1,5,10,50", help="comma-separated cutoffs (default 1,5,10,50)")
    p.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("build-dataset",
                       help="assemble a modification-text dataset from groups and parsed responses")
    p.add_argument("--groups", required=True, help="groups JSONL from `pair`")
    p.add_argument("--responses", required=True,
                   help="directory of <ref>__<tgt>.json generation responses")
    p.add_argument("--out", required=True, help="output dataset JSONL")
    p.add_argument("--no-biometric-filter", action="store_true",
                   help="keep texts that mention human attributes")
    p.set_defaults(func=_cmd_build_dataset)

    p = sub.add_parser("refine",
                       help="validate/regenerate/re-validate a benchmark with a judge")
    p.add_argument("--benchmark", required=True, help="benchmark JSONL {ref_id, target_id, text}")
    p.add_argument("--index", required=True, help="CIRF gallery file for hard negatives")
    p.add_argument("--judge", required=True, help="mock:<fixture.json> or http:<url>")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", default=None, help="refined benchmark JSONL")
    p.add_argument("--stats", default=None, help="stats JSON path (default: stdout)")
    p.add_argument("--workers", type=int, default=4, help="concurrent triplets (default 4)")
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("oracle",
                       help="run a brute-force oracle suite (slerp, rank, metrics, gradcheck)")
    p.add_argument("suite", choices=("slerp", "rank", "metrics", "gradcheck"))
    p.add_argument("--cases", type=int, default=None, help="number of randomized cases")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.set_defaults(func=_cmd_oracle)

    return parser


def _load_index(path) -> RetrievalIndex:
    ids, _, matrix = read_embeddings(path)
    return RetrievalIndex(ids=ids, embeddings=matrix)


def _load_items(path):
    ids, captions, matrix = read_embeddings(path)
    if captions is None:
        raise DataError(f"{path}: sidecar must carry captions for every row")
    return [
        CaptionedItem(id=i, caption=c, embedding=row)
        for i, c, row in zip(ids, captions, matrix)
    ]


def _cmd_pair(args) -> int:
    ids, _, matrix = read_embeddings(args.embeddings)
    records = [ImageRecord(id=i, embedding=row) for i, row in zip(ids, matrix)]
    groups = build_groups(
        records, low=args.low, high=args.high,
        interval=args.interval, group_size=args.group_size,
    )
    rows = [{"members": list(g.member_ids)} for g in groups]
    write_jsonl(args.out, rows)
    print(f"pair: {len(groups)} groups from {len(records)} images -> {args.out}",
          file=sys.stderr)
    return 0


def _cmd_synth(args) -> int:
    items = _load_items(args.embeddings)
    cfg = SynthConfig(
        alpha=args.alpha,
        text_synthesis_ratio=args.text_ratio,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        neighbor_strategy=args.neighbor,
    )
    triplets = synthesize_batch(items, cfg)
    write_jsonl(args.out, [triplet_to_row(t) for t in triplets])
    synthesized = sum(t.text_was_synthesized for t in triplets)
    print(f"synth: {len(triplets)} triplets ({synthesized} with synthesized text) "
          f"-> {args.out}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    run = load_run_config(args.config)
    if args.seed is not None:
        run.seed = args.seed
        run.synth.seed = args.seed
        run.train.seed = args.seed
    settings = run.train
    if settings.data is None:
        raise UsageError("config train.data must point at the training file")
    cfg = run.train_config()

    if settings.mode == "pretrain":
        items = _load_items(settings.data)
        result = train_on_items(items, run.model, cfg)
    elif settings.mode == "triplet":
        if settings.index is None:
            raise UsageError("config train.index is required in triplet mode")
        index = _load_index(settings.index)
        rows = [triplet_from_row(r) for r in read_jsonl(settings.data)]
        data = [
            (t.reference_embedding, t.modification_text, index.get(t.target_id))
            for t in rows
        ]
        result = train_on_triplets(data, run.model, cfg)
    else:
        raise UsageError(f"train.mode must be pretrain or triplet, got {settings.mode!r}")

    save_checkpoint(args.out, result.params, seed=cfg.seed, step=cfg.steps)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as f:
            json.dump({"losses": result.losses}, f)
            f.write("\n")
    first = result.losses[0] if result.losses else float("nan")
    last = result.losses[-1] if result.losses else float("nan")
    print(f"train: {cfg.steps} steps, loss {first:.4f} -> {last:.4f}, "
          f"checkpoint {args.out}", file=sys.stderr)
    return 0


def _parse_queries(rows):
    queries = []
    for row in rows:
        try:
            queries.append(
                QueryRecord(
                    query_id=row["query_id"],
                    reference_id=row.get("reference_id"),
                    text=row.get("text"),
                    gt_ids=frozenset(row["gt_ids"]),
                    subset_ids=row.get("subset_ids"),
                )
            )
        except KeyError as exc:
            raise DataError(f"query row missing key {exc}") from exc
    return queries


def _cmd_eval(args) -> int:
    try:
        ks = tuple(int(k) for k in args.k.split(","))
    except ValueError as exc:
        raise UsageError(f"--k must be comma-separated integers: {exc}") from exc
    params, _ = load_checkpoint(args.ckpt)
    index = _load_index(args.index)
    queries = _parse_queries(read_jsonl(args.queries))
    report = evaluate(params, queries, index, ks)
    payload = report.to_dict()
    payload["config"] = {
        "index": str(args.index),
        "queries": str(args.queries),
        "ckpt": str(args.ckpt),
        "ks": list(ks),
    }
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"eval: report -> {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_build_dataset(args) -> int:
    from .pairing import PairGroup

    responses_dir = Path(args.responses)
    if not responses_dir.is_dir():
        raise DataError(f"{responses_dir}: not a directory")
    groups = []
    for row in read_jsonl(args.groups):
        if "members" not in row:
            raise DataError("group row missing 'members'")
        groups.append(PairGroup(tuple(row["members"])))

    records = []
    missing = 0
    rejected = 0
    n_pairs = 0
    for group in groups:
        for ref_id, tgt_id in pairs_from_group(group):
            n_pairs += 1
            path = responses_dir / f"{ref_id}__{tgt_id}.json"
            if not path.exists():
                missing += 1
                continue
            kept, bad = parse_generation_response(
                path.read_text(encoding="utf-8"), ref_id, tgt_id
            )
            records.extend(kept)
            rejected += len(bad)

    removed = []
    if not args.no_biometric_filter:
        records, removed = biometric_filter(records)
    write_jsonl(
        args.out,
        [
            {"ref_id": r.ref_id, "tgt_id": r.tgt_id, "direction": r.direction,
             "category": r.category, "text": r.text}
            for r in records
        ],
    )
    print(
        f"build-dataset: {len(records)} texts from {n_pairs} pairs "
        f"({missing} missing responses, {rejected} rejected entries, "
        f"{len(removed)} removed by biometric filter) -> {args.out}",
        file=sys.stderr,
    )
    return 0


def _cmd_refine(args) -> int:
    rows = read_jsonl(args.benchmark)
    try:
        triplets = [
            BenchmarkTriplet(row["ref_id"], row["target_id"], row["text"])
            for row in rows
        ]
    except KeyError as exc:
        raise DataError(f"benchmark row missing key {exc}") from exc
    index = _load_index(args.index)
    judge = judge_from_spec(args.judge)
    refined, _, stats = refine(
        triplets, index, judge, seed=args.seed, workers=args.workers
    )
    if args.out:
        write_jsonl(
            args.out,
            [{"ref_id": t.ref_id, "target_id": t.target_id, "text": t.mod_text}
             for t in refined],
        )
    stats_text = json.dumps(stats.to_dict(), indent=2) + "\n"
    if args.stats:
        Path(args.stats).write_text(stats_text, encoding="utf-8")
    else:
        sys.stdout.write(stats_text)
    print(
        f"refine: {stats.good} good, {sum(stats.regenerated.values())} regenerated, "
        f"{stats.removed_ambiguous} ambiguous and {stats.removed_harmful} harmful removed",
        file=sys.stderr,
    )
    return 0


def _cmd_oracle(args) -> int:
    kwargs = {"seed": args.seed}
    if args.cases is not None:
        key = {"slerp": "cases", "rank": "galleries",
               "metrics": "galleries", "gradcheck": "configs"}[args.suite]
        kwargs[key] = args.cases
    ok, lines = run_suite(args.suite, **kwargs)
    for line in lines:
        print(f"oracle {args.suite}: {line}")
    print(f"oracle {args.suite}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 2


def main(argv=None) -> int:
    parser = _build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if not argv:
        parser.print_usage(sys.stderr)
        print("cirkit: a subcommand is required (see --help)", file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"cirkit: usage error: {exc}", file=sys.stderr)
        return 1
    except JudgeError as exc:
        print(f"cirkit: judge error: {exc}", file=sys.stderr)
        return 3
    except CirkitError as exc:
        print(f"cirkit: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
