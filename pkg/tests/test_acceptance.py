"""Acceptance criteria 1-8, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line (shown in the
pytest terminal summary and with ``-s``) before asserting.
"""

import io
import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from metric_fixtures import FIXTURES, run_of
from oracles import dense_matrix, dense_ranking, dense_scores
from tdvir.bench import time_retrieval
from tdvir.datasets import TOY_CORPUS, make_planted_corpus, make_random_corpus
from tdvir.embeddings import EmbeddingMatrix, align
from tdvir.evaluation import ndcg_at_k, paired_t_test, recall_at_k
from tdvir.index import Bow, apply_tdv, bow, build_index, dumps_index, loads_index, prune
from tdvir.ranking import RankerParams, ranker_stats, retrieve, score_all, write_run
from tdvir.tdvmodel import TdvParams, load_model, save_model, tdv_forward
from tdvir.training import TrainConfig, evaluate_ndcg, fd_check_random, random_params, train

RANKERS = ("tfidf_smooth", "bm25", "lm")
PARAMS = RankerParams(mu=50.0)


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def random_queries(n_terms, n, rng, max_terms=4):
    out = []
    for _ in range(n):
        size = int(rng.integers(1, max_terms + 1))
        ids = rng.choice(n_terms, size=min(size, n_terms), replace=False)
        out.append(Bow.from_counts({int(t): int(rng.integers(1, 3)) for t in ids}))
    return out


def test_criterion_1_identity_at_initialization():
    start = time.perf_counter()
    corpora = [TOY_CORPUS] + [make_random_corpus(100, 50, seed=s) for s in range(10)]
    worst = 0.0
    rng = np.random.default_rng(1)
    for docs in corpora:
        vocab, index = build_index(docs)
        emb = EmbeddingMatrix(rng.normal(size=(len(vocab), 8)), frozenset())
        tdv = tdv_forward(emb, TdvParams(np.zeros(8), 1.0))
        weighted = apply_tdv(index, tdv)
        queries = [Bow.from_counts({t: 1}) for t in range(len(vocab))] + random_queries(len(vocab), 30, rng)
        for ranker in RANKERS:
            raw_stats, w_stats = ranker_stats(index, ranker), ranker_stats(weighted, ranker)
            for q in queries:
                a, hit_a = score_all(index, ranker, raw_stats, q, PARAMS)
                b, hit_b = score_all(weighted, ranker, w_stats, q, PARAMS)
                assert np.array_equal(hit_a, hit_b)
                worst = max(worst, float(np.max(np.abs(a - b))))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-12 and elapsed < 5.0, f"max |TDV - base| = {worst:.2e} (<= 1e-12), {elapsed:.2f} s (< 5 s)")


def test_criterion_2_gradient_check():
    start = time.perf_counter()
    vocab, index = build_index(make_random_corpus(100, 50, seed=7))
    emb = EmbeddingMatrix(np.random.default_rng(7).normal(size=(len(vocab), 8)), frozenset())
    worst = {}
    for ranker in ("tfidf", "bm25", "lm"):
        cfg = TrainConfig(ranker=ranker, lam=0.1, mu=50.0)
        worst[ranker] = max(fd_check_random(index, emb, cfg, batches=20, pairs=8, seed=0, h=1e-4))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-3 and elapsed < 60.0
    detail = ", ".join(f"{r} {e:.1e}" for r, e in worst.items())
    report(2, ok, f"max relative error {detail} (< 1e-3), 20 batches each, {elapsed:.1f} s (< 60 s)")


def test_criterion_3_dense_oracle():
    rng = np.random.default_rng(3)
    worst, rank_mismatch = 0.0, 0
    for seed in range(10):
        docs = make_random_corpus(100, 50, seed=100 + seed)
        vocab, index = build_index(docs)
        variants = [(index, None)]
        tdv = np.where(rng.random(len(vocab)) < 0.3, 0.0, rng.uniform(0.1, 2.0, len(vocab)))
        variants.append((apply_tdv(index, tdv), tdv))
        for idx, t in variants:
            S = dense_matrix(docs, vocab.terms, t)
            rankers = ("tfidf_classic", "tfidf_smooth", "bm25", "lm") if t is None else RANKERS
            for ranker in rankers:
                stats = ranker_stats(idx, ranker)
                for q in random_queries(len(vocab), 10, rng):
                    want, cand = dense_scores(S, q.as_dict(), ranker, mu=PARAMS.mu)
                    got, hit = score_all(idx, ranker, stats, q, PARAMS)
                    if not np.array_equal(hit, cand):
                        rank_mismatch += 1
                        continue
                    if cand.any():
                        worst = max(worst, float(np.max(np.abs(got[hit] - want[cand]))))
                    run = retrieve(idx, ranker, stats, q, 20, params=PARAMS)
                    rank_mismatch += list(run.docnos) != dense_ranking(idx.docnos, want, cand, 20)
    report(3, worst <= 1e-9 and rank_mismatch == 0,
           f"max |posting - dense| = {worst:.2e} (<= 1e-9), {rank_mismatch} ranking mismatches, 10 corpora")


@pytest.fixture(scope="module")
def planted_run():
    start = time.perf_counter()
    data = make_planted_corpus(seed=0)
    vocab, index = build_index(data.docs)
    queries = {q: bow(t, vocab) for q, t in data.queries.items()}
    emb = align(vocab, data.vectors)
    cfg = TrainConfig(ranker="bm25", lam=0.01, lr=0.01, zero_init=True, seed=0)
    params, history = train(index, emb, queries, data.qrels, cfg)
    return dict(data=data, vocab=vocab, index=index, queries=queries, emb=emb, cfg=cfg,
                params=params, history=history, seconds=time.perf_counter() - start)


def test_criterion_4_pruning_invariance(planted_run):
    rng = np.random.default_rng(4)
    models = []
    for seed in range(4):
        vocab, index = build_index(make_random_corpus(100, 50, seed=200 + seed))
        emb = EmbeddingMatrix(rng.normal(size=(len(vocab), 8)), frozenset())
        models.append((index, tdv_forward(emb, random_params(8, rng)), random_queries(len(vocab), 200, rng)))
    p = planted_run
    models.append((p["index"], tdv_forward(p["emb"], p["params"]), random_queries(len(p["vocab"]), 200, rng)))

    n_queries, worst, list_changes, zero_terms = 0, 0.0, 0, 0
    for index, tdv, queries in models:
        zero_terms += int(np.sum(tdv == 0))
        full = apply_tdv(index, tdv)
        pruned, _ = prune(full)
        for q in queries:
            n_queries += 1
            for ranker in RANKERS:
                a = retrieve(full, ranker, None, q, 1000, params=PARAMS)
                b = retrieve(pruned, ranker, None, q, 1000, params=PARAMS)
                list_changes += a.docnos != b.docnos
                if a.docnos == b.docnos and len(a):
                    worst = max(worst, float(np.max(np.abs(np.subtract(a.scores, b.scores)))))
    ok = n_queries >= 1000 and list_changes == 0 and worst <= 1e-9 and zero_terms > 0
    report(4, ok, f"{n_queries} queries x 3 rankers, {list_changes} changed lists, max score change {worst:.1e} "
                  f"(<= 1e-9), {zero_terms} zero-TDV terms pruned")


def test_criterion_5_planted_training(planted_run):
    p = planted_run
    history = p["history"]
    best = next(h for h in history if h["best"])
    baseline = evaluate_ndcg(p["index"], "bm25", p["queries"], p["data"].qrels, 5, p["cfg"].ranker_params)
    zero_frac = best["zero_tdv"] / best["vocab"]
    ok = (best["loss"] < history[0]["loss"] and zero_frac >= 0.2
          and best["ndcg@5"] >= baseline and p["seconds"] < 600)
    report(5, ok, f"loss {history[0]['loss']:.4f} -> {best['loss']:.4f} (epoch {best['epoch']}), "
                  f"zero TDV {zero_frac:.1%} (>= 20%), nDCG@5 {baseline:.4f} -> {best['ndcg@5']:.4f}, "
                  f"{p['seconds']:.1f} s (< 600 s)")


def test_criterion_6_pruned_is_not_slower(planted_run):
    p = planted_run
    tdv = tdv_forward(p["emb"], p["params"])
    full = apply_tdv(p["index"], tdv)
    pruned, rep = prune(full)
    # the 50 training topics plus a random query log drawn from the whole vocabulary
    rng = np.random.default_rng(6)
    load = dict(p["queries"])
    for i, q in enumerate(random_queries(len(p["vocab"]), 950, rng, max_terms=5)):
        load[f"r{i}"] = q
    before = time_retrieval(full, "bm25", load, k=1000, repeats=3, warmup=1)
    after = time_retrieval(pruned, "bm25", load, k=1000, repeats=3, warmup=1)
    report(6, after.mean_ms <= before.mean_ms,
           f"mean ms/query unpruned {before.mean_ms:.4f} vs pruned {after.mean_ms:.4f}, "
           f"posting entries -{rep.reduction_percent:.1f}%")


def test_criterion_7_metric_oracles():
    exact = 0
    for name, docnos, judged, want_ndcg, want_recall in FIXTURES:
        run = run_of(name, docnos)
        exact += abs(ndcg_at_k(run, judged, 5) - want_ndcg) <= 1e-15
        exact += abs(recall_at_k(run, judged, 1000) - want_recall) <= 1e-15
    worked = round(ndcg_at_k(run_of("q", FIXTURES[0][1]), FIXTURES[0][2], 5), 4)
    t = paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    ok = exact == 2 * len(FIXTURES) and worked == 0.7039 and abs(t.t - 4.2426) <= 1e-3 and abs(t.p_raw - 0.0132) <= 1e-3
    report(7, ok, f"{exact}/{2 * len(FIXTURES)} fixture values, worked example {worked}, "
                  f"t = {t.t:.4f}, p = {t.p_raw:.4f}")


def test_criterion_8_determinism_and_round_trips(planted_run):
    p = planted_run
    cfg = TrainConfig(ranker="lm", lam=0.05, lr=0.01, max_epochs=3, batch_size=32, mu=200.0, seed=8)
    data = make_planted_corpus(n_docs=150, n_topic=30, n_noise=120, n_queries=15, seed=8)
    vocab, index = build_index(data.docs)
    queries = {q: bow(t, vocab) for q, t in data.queries.items()}
    emb = align(vocab, data.vectors)

    def once():
        log = io.StringIO()
        params, _ = train(index, emb, queries, data.qrels, cfg, log=log)
        weighted = apply_tdv(index, tdv_forward(emb, params))
        runs = io.StringIO()
        write_run([retrieve(weighted, "lm", None, q, 100, qid=qid, params=cfg.ranker_params)
                   for qid, q in queries.items()], runs)
        return params, log.getvalue(), runs.getvalue()

    first, second = once(), once()
    same_history = first[1] == second[1] and len(first[1].splitlines()) >= 2
    same_runs = first[2] == second[2] and len(first[2]) > 0
    same_params = first[0] == second[0]

    tdv = tdv_forward(p["emb"], p["params"])
    pruned, _ = prune(apply_tdv(p["index"], tdv))
    blobs_ok = all(
        loads_index(dumps_index(obj)) == obj and dumps_index(loads_index(dumps_index(obj))) == dumps_index(obj)
        for obj in (p["index"], apply_tdv(p["index"], tdv), pruned)
    )
    buf = io.StringIO()
    save_model(buf, p["params"], seed=0, terms=p["vocab"].terms, tdv=tdv)
    params2, seed2, terms2, tdv2 = load_model(io.StringIO(buf.getvalue()))
    again = io.StringIO()
    save_model(again, params2, seed=seed2, terms=terms2, tdv=tdv2)
    model_ok = params2 == p["params"] and tdv2.tobytes() == tdv.tobytes() and again.getvalue() == buf.getvalue()
    ok = same_history and same_runs and same_params and blobs_ok and model_ok
    report(8, ok, f"history identical={same_history}, runs identical={same_runs}, params identical={same_params}, "
                  f"index round-trip={blobs_ok}, model round-trip={model_ok}")
