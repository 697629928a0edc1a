import json

import numpy as np
import pytest

from tdvir.cli import main
from tdvir.datasets import make_planted_corpus
from tdvir.index import load_index
from tdvir.ranking import read_run


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    data = make_planted_corpus(n_docs=90, n_topic=15, n_noise=60, n_queries=8, dim=8, seed=4)
    with open(d / "docs.trec", "w") as f:
        for no, toks in data.docs:
            f.write(f"<DOC>\n<DOCNO> {no} </DOCNO>\n<TEXT>\n{' '.join(toks)}\n</TEXT>\n</DOC>\n")
    with open(d / "topics.txt", "w") as f:
        for q, toks in data.queries.items():
            f.write(f"<top>\n<num> Number: {int(q):03d}\n<title> {' '.join(toks)}\n</top>\n")
    with open(d / "qrels.txt", "w") as f:
        for q, judged in data.qrels.items():
            for doc, g in judged.items():
                f.write(f"{q} 0 {doc} {g}\n")
    with open(d / "vec.vec", "w") as f:
        f.write(f"{len(data.vectors)} {data.vectors.dim}\n")
        for t, v in data.vectors.vectors.items():
            f.write(t + " " + " ".join(repr(float(x)) for x in v) + "\n")
    (d / "stop.txt").write_text("")
    return d


def run(d, *args):
    return main([str(a) for a in args])


def test_full_pipeline(files, capsys):
    d = files
    assert run(d, "index", "--corpus", d / "docs.trec", "--stopwords", d / "stop.txt", "--stemmer", "none",
               "--out", d / "raw.tdvi") == 0
    assert "indexed 90 documents" in capsys.readouterr().out
    assert run(d, "--seed", 1, "train", "--index", d / "raw.tdvi", "--embeddings", d / "vec.vec",
               "--topics", d / "topics.txt", "--qrels", d / "qrels.txt", "--ranker", "bm25", "--lambda", 0.05,
               "--lr", 0.02, "--epochs", 3, "--zero-init", "--out-model", d / "m.txt") == 0
    history = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert history[0]["epoch"] == 0
    assert history[-1]["best_epoch"] in {h["epoch"] for h in history[:-1]}
    assert run(d, "prune", "--index", d / "raw.tdvi", "--model", d / "m.txt", "--out", d / "p.tdvi") == 0
    assert "posting entries" in capsys.readouterr().out
    assert load_index(d / "p.tdvi").pruned

    for name, extra in [("pruned", ["--index", d / "p.tdvi"]),
                        ("weighted", ["--index", d / "raw.tdvi", "--model", d / "m.txt"]),
                        ("base", ["--index", d / "raw.tdvi"])]:
        assert run(d, "search", *extra, "--ranker", "bm25", "--topics", d / "topics.txt",
                   "--k", 50, "--out", d / f"{name}.run") == 0
    pruned = read_run(open(d / "pruned.run"))
    weighted = read_run(open(d / "weighted.run"))
    assert pruned.keys() == weighted.keys() == {str(i) for i in range(1, 9)}
    for q in pruned:
        assert pruned[q].docnos == weighted[q].docnos
        np.testing.assert_allclose(pruned[q].scores, weighted[q].scores, rtol=0, atol=1e-9)

    assert run(d, "eval", "--run", d / "pruned.run", "--qrels", d / "qrels.txt", "--metric", "ndcg@5",
               "--compare", d / "base.run", "--comparisons", 2) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[-2].startswith("ndcg@5\tall\t") and "p_bonferroni=" in out[-1]

    assert run(d, "bench", "--index", d / "p.tdvi", "--ranker", "tfidf", "--topics", d / "topics.txt",
               "--baseline-index", d / "raw.tdvi") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["repeats"] == 3 and report["entries_change_percent"] <= 0


def test_fdcheck_command(files, capsys):
    d = files
    if not (d / "raw.tdvi").exists():
        run(d, "index", "--corpus", d / "docs.trec", "--stemmer", "none", "--out", d / "raw.tdvi")
    assert run(d, "fdcheck", "--index", d / "raw.tdvi", "--embeddings", d / "vec.vec", "--ranker", "lm",
               "--batches", 3) == 0
    assert capsys.readouterr().out.splitlines()[-1].endswith("ok")


def test_usage_and_data_errors(files, capsys):
    d = files
    assert main([]) == 1
    assert main(["search", "--ranker", "bm25"]) == 1
    assert main(["train", "--ranker", "dfr"]) == 1
    assert main(["search", "--index", str(d / "missing"), "--ranker", "bm25", "--topics", "x", "--out", "y"]) == 2
    bad = d / "bad.trec"
    bad.write_text("<DOC><TEXT>no docno</TEXT></DOC>")
    assert main(["index", "--corpus", str(bad), "--out", str(d / "bad.tdvi")]) == 2
    assert "byte offset" in capsys.readouterr().err


def test_train_config_file_seed_and_overrides(files, capsys):
    d = files
    if not (d / "raw.tdvi").exists():
        run(d, "index", "--corpus", d / "docs.trec", "--stemmer", "none", "--out", d / "raw.tdvi")
    (d / "train.cfg").write_text("ranker = lm\nseed = 5\nmax_epochs = 1\nmu = 100\n")
    common = ["--index", d / "raw.tdvi", "--embeddings", d / "vec.vec", "--topics", d / "topics.txt",
              "--qrels", d / "qrels.txt", "--ranker", "lm", "--config", d / "train.cfg"]
    assert run(d, "train", *common, "--out-model", d / "c1.txt", "--history", d / "h.jsonl") == 0
    assert "seed 5" in (d / "c1.txt").read_text().splitlines()
    assert run(d, "train", *common, "--seed", 9, "--out-model", d / "c2.txt", "--history", d / "h.jsonl") == 0
    assert "seed 9" in (d / "c2.txt").read_text().splitlines()
