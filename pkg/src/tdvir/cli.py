"""Command-line pipeline: index -> train -> prune -> search -> eval -> bench.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import gzip
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import compare_report, time_retrieval
from .corpus import (
    PreprocessConfig,
    SurfaceForms,
    default_stopwords,
    load_stopwords,
    parse_qrels,
    parse_trec_documents,
    parse_trec_topics,
    preprocess,
    preprocess_with_surface,
)
from .embeddings import align, load_vectors
from .evaluation import evaluate, paired_t_test
from .index import Bow, SparseIndex, WeightedIndex, apply_tdv, bow, build_index, load_index, prune, save_index
from .ranking import RANKERS, RankerParams, ranker_stats, read_run, retrieve, write_run
from .tdvmodel import load_model, save_model, tdv_forward
from .training import TRAIN_RANKERS, TrainConfig, fd_check_random, train

logger = logging.getLogger("tdvir")

RANKER_ALIASES = {"tfidf": "tfidf_smooth"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n\n{self.format_usage()}")


def _open_text(path: str):
    p = Path(path)
    if p.suffix == ".gz":
        return gzip.open(p, "rt", encoding="utf-8", errors="replace")
    return open(p, encoding="utf-8", errors="replace")


def _read_bytes(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _corpus_files(root: str) -> list[Path]:
    p = Path(root)
    if p.is_file():
        return [p]
    if not p.is_dir():
        raise DataError(f"corpus path {root} does not exist")
    files = sorted(f for f in p.rglob("*") if f.is_file() and not f.name.startswith("."))
    if not files:
        raise DataError(f"no files under {root}")
    return files


def _preprocess_config(index) -> PreprocessConfig:
    return index.preprocess if index.preprocess is not None else PreprocessConfig.english()


def _load_topics(path: str, index) -> dict[str, Bow]:
    cfg = _preprocess_config(index)
    with _open_text(path) as fh:
        topics = parse_trec_topics(fh)
    if not topics:
        raise DataError(f"no topics found in {path}")
    return {t.qid: bow(preprocess(t.title, cfg), index.vocab) for t in topics}


def _load_raw_index(path: str) -> SparseIndex:
    index = load_index(path)
    if not isinstance(index, SparseIndex):
        raise DataError(f"{path} is a weighted index; this command needs the raw index")
    return index


def _load_model_tdv(path: str, index) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        _, _, terms, tdv = load_model(fh)
    if tuple(terms) != index.vocab.terms:
        raise DataError("model TDV snapshot does not match the index vocabulary")
    return tdv


def _ranker(name: str) -> str:
    return RANKER_ALIASES.get(name, name)


def cmd_index(args) -> int:
    stop = load_stopwords(args.stopwords) if args.stopwords else default_stopwords()
    cfg = PreprocessConfig(stop, args.stemmer, True)
    surfaces = SurfaceForms()
    docs = []
    for f in _corpus_files(args.corpus):
        for raw in parse_trec_documents(_read_bytes(f)):
            pairs = preprocess_with_surface(raw.text, cfg)
            surfaces.update(pairs)
            docs.append((raw.docno, [t for t, _ in pairs]))
    _, index = build_index(docs, surface_forms=surfaces.most_common(), preprocess=cfg)
    size = save_index(index, args.out)
    print(f"indexed {index.n_docs} documents, {index.n_terms} terms, {index.entry_count} postings ({size} bytes)")
    return 0


def cmd_train(args) -> int:
    index = _load_raw_index(args.index)
    queries = _load_topics(args.topics, index)
    with _open_text(args.qrels) as fh:
        qrels = parse_qrels(fh)
    queries = {q: b for q, b in queries.items() if q in qrels}
    if not queries:
        raise DataError("no topic has judgments in the qrels file")
    overrides = dict(
        ranker=args.ranker, lam=args.lam, lr=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
        patience=args.patience, neg_per_pos=args.neg_per_pos, seed=args.seed,
        zero_init=True if args.zero_init else None,
    )
    cfg = TrainConfig.from_file(args.config, **overrides) if args.config else TrainConfig(
        **{k: v for k, v in overrides.items() if v is not None})
    with _open_text(args.embeddings) as fh:
        table = load_vectors(fh)
    emb = align(index.vocab, table, args.oov_policy, surface_forms=index.surface_forms, seed=cfg.seed)
    log = open(args.history, "w", encoding="utf-8") if args.history else sys.stdout
    try:
        params, history = train(index, emb, queries, qrels, cfg, log=log)
    finally:
        if args.history:
            log.close()
    tdv = tdv_forward(emb, params)
    with open(args.out_model, "w", encoding="utf-8") as fh:
        save_model(fh, params, seed=cfg.seed, terms=index.vocab.terms, tdv=tdv)
    best = next(h for h in history if h["best"])
    print(f"best epoch {best['epoch']}: ndcg@5 {best['ndcg@5']:.4f}, "
          f"{int(np.sum(tdv == 0))}/{index.n_terms} terms with zero TDV", file=sys.stderr)
    return 0


def cmd_prune(args) -> int:
    index = _load_raw_index(args.index)
    weighted, report = prune(apply_tdv(index, _load_model_tdv(args.model, index)))
    size = save_index(weighted, args.out)
    print(f"posting entries {report.entries_before} -> {report.entries_after} "
          f"({0.0 - report.reduction_percent:+.2f}%), {size} bytes")
    return 0


def _search_index(args):
    index = load_index(args.index)
    if args.model:
        if isinstance(index, WeightedIndex):
            raise DataError("index is already weighted; drop --model")
        index = apply_tdv(index, _load_model_tdv(args.model, index))
    return index


def cmd_search(args) -> int:
    index = _search_index(args)
    ranker = _ranker(args.ranker)
    params = RankerParams(args.k1, args.b, args.mu)
    stats = ranker_stats(index, ranker)
    queries = _load_topics(args.topics, index)
    runs = [retrieve(index, ranker, stats, q, args.k, qid=qid, params=params) for qid, q in queries.items()]
    with open(args.out, "w", encoding="utf-8") as fh:
        write_run(runs, fh, args.tag)
    return 0


def cmd_eval(args) -> int:
    with _open_text(args.qrels) as fh:
        qrels = parse_qrels(fh)
    with _open_text(args.run) as fh:
        run = read_run(fh)
    other = None
    if args.compare:
        with _open_text(args.compare) as fh:
            other = read_run(fh)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for metric in [m for m in args.metric.split(",") if m.strip()]:
            report = evaluate(run, qrels, metric, tag=args.run)
            report.write_tsv(out)
            if other is not None:
                base = evaluate(other, qrels, metric, tag=args.compare)
                common = sorted(set(report.per_query) & set(base.per_query))
                if len(common) < 2:
                    raise DataError("need at least two common queries for the t-test")
                res = paired_t_test([report.per_query[q] for q in common],
                                    [base.per_query[q] for q in common], args.comparisons)
                out.write(f"{report.metric}\tcompare\t{report.mean:.4f}\t{base.mean:.4f}\t"
                          f"t={res.t:.4f}\tp={res.p_raw:.4g}\tp_bonferroni={res.p_bonferroni:.4g}"
                          f"{chr(9) + 'degenerate' if res.degenerate else ''}\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_bench(args) -> int:
    index = _search_index(args)
    ranker = _ranker(args.ranker)
    params = RankerParams(args.k1, args.b, args.mu)
    queries = _load_topics(args.topics, index)
    report = time_retrieval(index, ranker, queries, k=args.k, repeats=args.repeats, warmup=args.warmup, params=params)
    if args.baseline_index:
        base_index = load_index(args.baseline_index)
        if base_index.vocab != index.vocab:
            raise DataError("baseline index has a different vocabulary")
        base = time_retrieval(base_index, ranker, queries, k=args.k, repeats=args.repeats,
                              warmup=args.warmup, params=params)
        report = compare_report(base, report)
    print(report.to_json())
    print(report.table(), file=sys.stderr)
    return 0


def cmd_fdcheck(args) -> int:
    index = _load_raw_index(args.index)
    with _open_text(args.embeddings) as fh:
        table = load_vectors(fh)
    emb = align(index.vocab, table, args.oov_policy, surface_forms=index.surface_forms, seed=args.seed)
    cfg = TrainConfig(ranker=args.ranker, lam=args.lam)
    errors = fd_check_random(index, emb, cfg, batches=args.batches, pairs=args.pairs, seed=args.seed,
                             h=args.h, coords=args.coords)
    for i, e in enumerate(errors):
        print(f"batch {i}\tmax_rel_err {e:.3e}")
    worst = max(errors)
    print(f"{args.ranker}\tmax_rel_err {worst:.3e}\t{'ok' if worst < args.tol else 'FAILED'}")
    return 0 if worst < args.tol else 2


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tdvir", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", dest="global_seed", type=int, default=None,
                        help="seed for every stochastic step")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def ranker_flags(p, choices):
        p.add_argument("--ranker", required=True, choices=choices)
        p.add_argument("--k1", type=float, default=1.2)
        p.add_argument("--b", type=float, default=0.75, help="BM25 length normalization")
        p.add_argument("--mu", type=float, default=2000.0)

    p = sub.add_parser("index", help="build an inverted index from TREC documents")
    p.add_argument("--corpus", required=True, help="TREC file or directory of files")
    p.add_argument("--stopwords", help="stop-word file (default: built-in English list)")
    p.add_argument("--stemmer", choices=["porter", "none"], default="porter")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("train", help="learn TDVs")
    p.add_argument("--index", required=True)
    p.add_argument("--embeddings", required=True, help="fastText .vec file")
    p.add_argument("--topics", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--ranker", required=True, choices=sorted(TRAIN_RANKERS))
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--neg-per-pos", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--zero-init", action="store_true", help="start from w=0, bias=1")
    p.add_argument("--oov-policy", choices=["zeros", "hash_uniform"], default="zeros")
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--history", help="write per-epoch JSON records here (default stdout)")
    p.add_argument("--out-model", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("prune", help="weight an index with a model's TDVs and drop zero-TDV lists")
    p.add_argument("--index", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("search", help="rank documents for TREC topics")
    p.add_argument("--index", required=True)
    p.add_argument("--model")
    ranker_flags(p, RANKERS + tuple(RANKER_ALIASES))
    p.add_argument("--topics", required=True)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("--tag", default="tdvir")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="nDCG / recall of a run, optional paired t-test")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metric", default="ndcg@5,recall@1000")
    p.add_argument("--compare", help="second run for a paired t-test")
    p.add_argument("--comparisons", type=int, default=1, help="Bonferroni factor")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time retrieval and measure index footprint")
    p.add_argument("--index", required=True)
    p.add_argument("--model")
    ranker_flags(p, RANKERS + tuple(RANKER_ALIASES))
    p.add_argument("--topics", required=True)
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--baseline-index", help="report changes relative to this index")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fdcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--index", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--ranker", required=True, choices=sorted(TRAIN_RANKERS))
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--pairs", type=int, default=8)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=32, help="embedding coordinates checked per batch")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--oov-policy", choices=["zeros", "hash_uniform"], default="zeros")
    p.set_defaults(func=cmd_fdcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "seed") and args.seed is None:
        # train falls back to its config file, everything else to 0
        args.seed = args.global_seed
        if args.seed is None and args.command != "train":
            args.seed = 0
    try:
        return args.func(args)
    except (DataError, ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"tdvir {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
