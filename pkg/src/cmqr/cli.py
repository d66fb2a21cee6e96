"""Command-line pipeline: index, encode, rewrite, retrieve, evaluate.

Every subcommand is deterministic: identical inputs and configuration
produce byte-identical outputs. Exit codes: 0 success, 1 usage error,
2 data error (malformed or invalid content), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import dense, evaluation, rewriting, sparse
from .config import PipelineConfig, resolve_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3

SPARSE_TAG = "cmqr-sparse"
DENSE_TAG = "cmqr-dense"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON config file; flags override it")
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="print the resolved configuration as JSON and exit",
    )


def _resolve(args: argparse.Namespace, **overrides) -> PipelineConfig:
    config = resolve_config(args.config, overrides)
    if args.print_config:
        print(json.dumps(config.as_dict(), indent=2, sort_keys=True))
        raise SystemExit(EXIT_OK)
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cmqr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build and persist the inverted index")
    p_index.add_argument("--collection", required=True,
                         help="passages as JSONL {id, contents} or TSV id<TAB>text")
    p_index.add_argument("--index-dir", required=True, help="output directory")
    _add_config_flags(p_index)

    p_encode = sub.add_parser(
        "encode", help="embed the collection with the hash encoder into a CMQE file"
    )
    p_encode.add_argument("--collection", required=True)
    p_encode.add_argument("--output", required=True, help="CMQE embedding file")
    p_encode.add_argument("--encoder-dim", type=int)
    p_encode.add_argument("--encoder-seed", type=int)
    _add_config_flags(p_encode)

    p_rewrite = sub.add_parser(
        "rewrite",
        help="generate rewrites with the built-in n-gram model, or validate "
        "an externally produced rewrite file",
    )
    p_rewrite.add_argument("--conversations", help="conversation JSONL file")
    p_rewrite.add_argument("--external",
                           help="externally produced rewrite JSONL to validate")
    p_rewrite.add_argument("--output", help="rewrite JSONL output")
    p_rewrite.add_argument("--beam-width", type=int)
    p_rewrite.add_argument("--num-rewrites", type=int)
    p_rewrite.add_argument("--max-context-tokens", type=int)
    p_rewrite.add_argument("--max-rewrite-tokens", type=int)
    _add_config_flags(p_rewrite)

    p_retrieve = sub.add_parser("retrieve", help="run retrieval, one query per turn")
    p_retrieve.add_argument("--mode", choices=["sparse", "dense"], required=True)
    p_retrieve.add_argument("--rewrites", required=True, help="rewrite JSONL file")
    p_retrieve.add_argument("--index-dir", help="index directory (sparse mode)")
    p_retrieve.add_argument("--embeddings", help="CMQE embedding file (dense mode)")
    p_retrieve.add_argument("--output", required=True, help="TREC run file")
    p_retrieve.add_argument("--top-k", type=int, dest="top_k_results")
    p_retrieve.add_argument("--k1", type=float, dest="bm25_k1")
    p_retrieve.add_argument("--b", type=float, dest="bm25_b")
    p_retrieve.add_argument("--dense-normalize-rs", action="store_const", const=True,
                            default=None, dest="dense_normalize_rs")
    p_retrieve.add_argument("--encoder-seed", type=int)
    _add_config_flags(p_retrieve)

    p_eval = sub.add_parser("evaluate", help="score a run file against qrels")
    p_eval.add_argument("--run", required=True)
    p_eval.add_argument("--qrels", required=True)
    p_eval.add_argument("--subsets", help="whitespace query_id/label map file")
    p_eval.add_argument("--output", help="write the JSON report here instead of stdout")
    _add_config_flags(p_eval)

    return parser


def cmd_index(args: argparse.Namespace) -> int:
    _resolve(args)
    index = sparse.build_index(sparse.read_collection(args.collection))
    index.save(args.index_dir)
    print(
        f"indexed {index.doc_count} passages, "
        f"{index.vocabulary_size} terms, avgdl {index.avg_doc_length:.4f}"
    )
    return EXIT_OK


def cmd_encode(args: argparse.Namespace) -> int:
    config = _resolve(args, encoder_dim=args.encoder_dim,
                      encoder_seed=args.encoder_seed)
    encoder = dense.HashProjectionEncoder(config.encoder_dim, config.encoder_seed)
    store = dense.build_store(
        (
            (passage.passage_id, encoder.encode(passage.text))
            for passage in sparse.read_collection(args.collection)
        ),
        dimension=encoder.dimension,
    )
    dense.write_embeddings(store, args.output)
    print(f"encoded {store.count} passages at dimension {store.dimension}")
    return EXIT_OK


def cmd_rewrite(args: argparse.Namespace) -> int:
    config = _resolve(
        args,
        beam_width=args.beam_width,
        num_rewrites=args.num_rewrites,
        max_context_tokens=args.max_context_tokens,
        max_rewrite_tokens=args.max_rewrite_tokens,
    )
    if (args.conversations is None) == (args.external is None):
        raise ValueError("exactly one of --conversations or --external is required")

    if args.external is not None:
        rewrite_sets = rewriting.load_rewrites(args.external)
        if args.output:
            rewriting.save_rewrites(rewrite_sets, args.output)
        print(f"validated {len(rewrite_sets)} turns from {args.external}")
        return EXIT_OK

    conversations = rewriting.load_conversations(args.conversations)
    corpus = []
    for conversation in conversations:
        for turn in conversation.turns:
            tokens = rewriting.tokenize(turn.raw_query)
            if tokens:
                corpus.append(tokens)
            if turn.system_response:
                tokens = rewriting.tokenize(turn.system_response)
                if tokens:
                    corpus.append(tokens)
    model = rewriting.NGramLM(order=3, smoothing_alpha=0.1).fit(corpus)
    rewrite_sets = []
    for conversation in conversations:
        for turn in conversation.turns:
            rewrite_set = rewriting.rewrite_turn(
                conversation,
                turn.turn_index,
                model,
                beam_width=config.beam_width,
                num_rewrites=config.num_rewrites,
                max_length=config.max_rewrite_tokens,
                max_context_tokens=config.max_context_tokens,
            )
            conversation.add_rewrites(rewrite_set)
            rewrite_sets.append(rewrite_set)
    if not args.output:
        raise ValueError("--output is required with --conversations")
    rewriting.save_rewrites(rewrite_sets, args.output)
    print(f"rewrote {len(rewrite_sets)} turns from {len(conversations)} conversations")
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace) -> int:
    config = _resolve(
        args,
        top_k_results=args.top_k_results,
        bm25_k1=args.bm25_k1,
        bm25_b=args.bm25_b,
        dense_normalize_rs=args.dense_normalize_rs,
        encoder_seed=args.encoder_seed,
    )
    rewrite_sets = rewriting.load_rewrites(args.rewrites)
    results: list[tuple[str, list[tuple[str, float]]]] = []
    if args.mode == "sparse":
        if not args.index_dir:
            raise ValueError("sparse mode requires --index-dir")
        index = sparse.InvertedIndex.load(args.index_dir)
        for rewrite_set in rewrite_sets:
            query = sparse.aggregate_rewrites(rewrite_set)
            ranked = sparse.search_sparse(
                index, query, config.top_k_results, config.bm25_k1, config.bm25_b
            )
            query_id = f"{rewrite_set.conversation_id}_{rewrite_set.turn_index}"
            results.append((query_id, ranked))
        tag = SPARSE_TAG
    else:
        if not args.embeddings:
            raise ValueError("dense mode requires --embeddings")
        store = dense.read_embeddings(args.embeddings)
        encoder = dense.HashProjectionEncoder(store.dimension, config.encoder_seed)
        for rewrite_set in rewrite_sets:
            pooled = dense.pool_rewrites(rewrite_set, encoder,
                                         config.dense_normalize_rs)
            ranked = dense.search_dense(store, pooled, config.top_k_results)
            query_id = f"{rewrite_set.conversation_id}_{rewrite_set.turn_index}"
            results.append((query_id, ranked))
        tag = DENSE_TAG
    with open(args.output, "w", encoding="utf-8", newline="\n") as handle:
        evaluation.write_run(results, handle, tag)
    print(f"retrieved {len(results)} queries into {args.output}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    _resolve(args)
    run = evaluation.load_run(args.run)
    qrels = evaluation.load_qrels(args.qrels)
    subset_map = evaluation.load_subset_map(args.subsets) if args.subsets else None
    report = evaluation.evaluate(run, qrels, subset_map)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    rendered = json.dumps(report.as_dict(), indent=2)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(rendered)
            handle.write("\n")
    else:
        print(rendered)
    return EXIT_OK


_COMMANDS = {
    "index": cmd_index,
    "encode": cmd_encode,
    "rewrite": cmd_rewrite,
    "retrieve": cmd_retrieve,
    "evaluate": cmd_evaluate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse --help / usage errors / --print-config
        return int(exc.code or 0)
    except (ValueError, KeyError) as exc:
        print(f"cmqr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"cmqr: io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
