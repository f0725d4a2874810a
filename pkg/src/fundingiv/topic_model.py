"""Latent Dirichlet allocation over grant titles and abstracts.

Inference is collapsed Gibbs sampling.  The sampler kernel is compiled with
numba; the uniforms it consumes are drawn up front from a NumPy ``PCG64``
generator, so a fit is a deterministic function of (corpus, K, alpha, eta,
iterations, burn_in, seed).
"""

from __future__ import annotations

import itertools
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numba
import numpy as np
from scipy.special import gammaln

TOKEN_RE = re.compile(r"[a-z0-9]+")


class NotFittedError(RuntimeError):
    pass


def load_stopwords(path=None) -> frozenset[str]:
    """One token per line, UTF-8; defaults to the bundled English list."""
    if path is None:
        text = resources.files("fundingiv").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return frozenset(t.strip().lower() for t in text.splitlines() if t.strip() and not t.startswith("#"))


@dataclass
class Corpus:
    docs: list[list[str]]
    vocab: dict[str, int]
    doc_ids: list[str]
    empty_docs: list[str] = field(default_factory=list)

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def id_list(self) -> list[str]:
        inv = [""] * len(self.vocab)
        for w, i in self.vocab.items():
            inv[i] = w
        return inv

    def encoded(self) -> list[np.ndarray]:
        return [np.array([self.vocab[w] for w in doc], dtype=np.int64) for doc in self.docs]

    @classmethod
    def from_token_ids(cls, docs: Sequence[Sequence[int]], vocab_size: int,
                       doc_ids: Sequence[str] | None = None) -> "Corpus":
        vocab = {f"w{j}": j for j in range(vocab_size)}
        toks = [[f"w{int(j)}" for j in d] for d in docs]
        ids = list(doc_ids) if doc_ids is not None else [str(i) for i in range(len(docs))]
        return cls(toks, vocab, ids, [i for i, d in zip(ids, toks) if not d])


def tokenize(text: str) -> list[str]:
    return TOKEN_RE.findall(text.lower())


def preprocess(raw_docs: Sequence[str], stopwords: Iterable[str] | None = None,
               doc_ids: Sequence[str] | None = None) -> Corpus:
    """Lowercase, split on non-alphanumerics, drop stop words, index the vocabulary.

    Documents left without tokens stay in the corpus and are listed in
    ``Corpus.empty_docs``.  Vocabulary indices follow first appearance.
    """
    if len(raw_docs) == 0:
        raise ValueError("no documents supplied")
    stop = load_stopwords() if stopwords is None else frozenset(s.lower() for s in stopwords)
    ids = [str(i) for i in range(len(raw_docs))] if doc_ids is None else [str(i) for i in doc_ids]
    if len(ids) != len(raw_docs):
        raise ValueError("doc_ids must align with raw_docs")
    docs, vocab, empty = [], {}, []
    for did, text in zip(ids, raw_docs):
        toks = [t for t in tokenize(text or "") if t not in stop]
        for t in toks:
            vocab.setdefault(t, len(vocab))
        if not toks:
            empty.append(did)
        docs.append(toks)
    if len(empty) == len(docs):
        raise ValueError("every document is empty after preprocessing")
    return Corpus(docs, vocab, ids, empty)


@numba.njit(cache=True)
def _gibbs_sweep(words, docs, z, ndk, nkw, nk, alpha, eta, v_eta, uniforms):
    K = nk.shape[0]
    p = np.empty(K)
    for i in range(words.shape[0]):
        w = words[i]
        d = docs[i]
        k = z[i]
        ndk[d, k] -= 1
        nkw[k, w] -= 1
        nk[k] -= 1
        total = 0.0
        for t in range(K):
            total += (ndk[d, t] + alpha[t]) * (nkw[t, w] + eta) / (nk[t] + v_eta)
            p[t] = total
        u = uniforms[i] * total
        k = 0
        while k < K - 1 and p[k] <= u:
            k += 1
        z[i] = k
        ndk[d, k] += 1
        nkw[k, w] += 1
        nk[k] += 1


@dataclass
class TopicModel:
    K: int
    vocab: list[str]
    alpha: np.ndarray
    eta: float
    seed: int
    iterations: int
    burn_in: int = 0
    topic_word: np.ndarray | None = None
    doc_topic: np.ndarray | None = None
    doc_ids: list[str] = field(default_factory=list)
    assignments: list[np.ndarray] = field(default_factory=list)

    @property
    def fitted(self) -> bool:
        return self.topic_word is not None and self.doc_topic is not None

    def _require_fit(self) -> None:
        if not self.fitted:
            raise NotFittedError("topic model has not been fitted")

    def to_dict(self) -> dict:
        self._require_fit()
        return {
            "K": self.K,
            "vocab": list(self.vocab),
            "topic_word": self.topic_word.tolist(),
            "doc_topic": self.doc_topic.tolist(),
            "doc_ids": list(self.doc_ids),
            "config": {"alpha": self.alpha.tolist(), "eta": self.eta, "iterations": self.iterations,
                       "burn_in": self.burn_in},
            "seed": self.seed,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "TopicModel":
        cfg = data["config"]
        return cls(K=int(data["K"]), vocab=list(data["vocab"]), alpha=np.asarray(cfg["alpha"], dtype=float),
                   eta=float(cfg["eta"]), seed=int(data["seed"]), iterations=int(cfg["iterations"]),
                   burn_in=int(cfg.get("burn_in", 0)),
                   topic_word=np.asarray(data["topic_word"], dtype=float),
                   doc_topic=np.asarray(data["doc_topic"], dtype=float), doc_ids=list(data.get("doc_ids", [])))


def fit_lda(corpus: Corpus, K: int = 30, alpha: float | Sequence[float] | None = None, eta: float = 0.01,
            iterations: int = 1000, seed: int = 0, burn_in: int | None = None, thin: int = 10) -> TopicModel:
    """Collapsed Gibbs sampling for LDA.

    ``topic_word`` and ``doc_topic`` are posterior-mean estimates averaged
    over every ``thin``-th sweep after ``burn_in``; ``assignments`` hold the
    final sample.  ``alpha`` defaults to the symmetric 50/K.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    V = corpus.vocab_size
    if V < K:
        warnings.warn(f"vocabulary ({V}) is smaller than the number of topics ({K})", stacklevel=2)
    if alpha is None:
        alpha_v = np.full(K, 50.0 / K)
    else:
        alpha_v = np.broadcast_to(np.asarray(alpha, dtype=float), (K,)).copy()
    if np.any(alpha_v <= 0) or eta <= 0:
        raise ValueError("Dirichlet priors must be positive")
    if burn_in is None:
        burn_in = min(200, iterations - 1)
    burn_in = max(0, min(burn_in, iterations - 1))

    enc = corpus.encoded()
    M = len(enc)
    lengths = np.array([len(d) for d in enc], dtype=np.int64)
    words = np.concatenate(enc) if lengths.sum() else np.zeros(0, dtype=np.int64)
    docs = np.repeat(np.arange(M, dtype=np.int64), lengths)
    rng = np.random.Generator(np.random.PCG64(seed))
    z = rng.integers(0, K, size=words.shape[0]).astype(np.int64)
    ndk = np.zeros((M, K), dtype=np.int64)
    nkw = np.zeros((K, V), dtype=np.int64)
    np.add.at(ndk, (docs, z), 1)
    np.add.at(nkw, (z, words), 1)
    nk = nkw.sum(axis=1)

    tw_acc = np.zeros((K, V))
    dt_acc = np.zeros((M, K))
    n_acc = 0
    for it in range(iterations):
        u = rng.random(words.shape[0])
        _gibbs_sweep(words, docs, z, ndk, nkw, nk, alpha_v, float(eta), float(V * eta), u)
        if it >= burn_in and ((it - burn_in) % thin == 0 or it == iterations - 1):
            tw_acc += (nkw + eta) / (nk[:, None] + V * eta)
            dt_acc += (ndk + alpha_v) / (lengths[:, None] + alpha_v.sum())
            n_acc += 1
    topic_word = tw_acc / n_acc
    doc_topic = dt_acc / n_acc
    # renormalise away accumulated rounding
    topic_word /= topic_word.sum(axis=1, keepdims=True)
    doc_topic /= doc_topic.sum(axis=1, keepdims=True)
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    assignments = [z[offsets[m]:offsets[m + 1]].copy() for m in range(M)]
    return TopicModel(K=K, vocab=corpus.id_list(), alpha=alpha_v, eta=float(eta), seed=seed,
                      iterations=iterations, burn_in=burn_in, topic_word=topic_word, doc_topic=doc_topic,
                      doc_ids=list(corpus.doc_ids), assignments=assignments)


def assign_topic(model: TopicModel, doc_index: int) -> int:
    """Most probable topic of a document; ties go to the lowest topic index."""
    model._require_fit()
    return int(np.argmax(model.doc_topic[doc_index]))


def assign_topics(model: TopicModel) -> np.ndarray:
    model._require_fit()
    return np.argmax(model.doc_topic, axis=1)


def top_keywords(model: TopicModel, k: int = 5) -> list[list[str]]:
    """The ``k`` most probable vocabulary items of each topic, descending.

    Equal probabilities are ordered by vocabulary index.
    """
    model._require_fit()
    V = len(model.vocab)
    if k > V:
        warnings.warn(f"k={k} exceeds vocabulary size {V}; clamping", stacklevel=2)
        k = V
    out = []
    for row in model.topic_word:
        order = np.lexsort((np.arange(V), -row))[:k]
        out.append([model.vocab[j] for j in order])
    return out


def joint_log_likelihood(docs: Sequence[np.ndarray], assignments: Sequence[np.ndarray], K: int, V: int,
                         alpha: np.ndarray, eta: float) -> float:
    """log p(w, z | alpha, eta) with topic-word and doc-topic proportions integrated out."""
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (K,))
    nkw = np.zeros((K, V))
    ll = 0.0
    for w, z in zip(docs, assignments):
        np.add.at(nkw, (z, w), 1)
        ndk = np.bincount(z, minlength=K)
        ll += gammaln(alpha.sum()) - gammaln(alpha).sum() + gammaln(ndk + alpha).sum() - gammaln(len(w) + alpha.sum())
    nk = nkw.sum(axis=1)
    ll += K * (gammaln(V * eta) - V * gammaln(eta))
    ll += float(gammaln(nkw + eta).sum() - gammaln(nk + V * eta).sum())
    return float(ll)


def model_log_likelihood(model: TopicModel, corpus: Corpus) -> float:
    """Joint log-likelihood of the corpus under the model's final sample."""
    model._require_fit()
    return joint_log_likelihood(corpus.encoded(), model.assignments, model.K, len(model.vocab),
                                model.alpha, model.eta)


def document_log_marginal(doc: Sequence[int], topic_word: np.ndarray, alpha: Sequence[float],
                          max_states: int = 2_000_000) -> float:
    """log p(w_d | alpha, topic_word): topic proportions integrated, topics summed.

    Exact enumeration over the K^N topic sequences, grouped by token
    counts per topic (Dirichlet-multinomial weights), so only short
    documents are tractable.
    """
    doc = list(doc)
    K = topic_word.shape[0]
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (K,))
    if K ** len(doc) > max_states:
        raise ValueError(f"enumeration over {K}^{len(doc)} states exceeds max_states")
    a0 = alpha.sum()
    n = len(doc)
    logs = []
    for zs in itertools.product(range(K), repeat=n):
        counts = np.bincount(np.array(zs, dtype=int), minlength=K)
        lw = sum(math.log(topic_word[z, w]) for z, w in zip(zs, doc))
        lp = (gammaln(a0) - gammaln(n + a0) + float(np.sum(gammaln(counts + alpha) - gammaln(alpha))))
        logs.append(lw + lp)
    logs = np.array(logs)
    m = logs.max()
    return float(m + math.log(np.exp(logs - m).sum()))


def corpus_log_marginal(docs: Sequence[Sequence[int]], topic_word: np.ndarray, alpha) -> float:
    return float(sum(document_log_marginal(d, topic_word, alpha) for d in docs))


def keyword_table(model: TopicModel, k: int = 5, assignments: np.ndarray | None = None) -> list[dict]:
    """Rows of (topic, keywords, document count, share) for reporting."""
    words = top_keywords(model, k)
    topics = assign_topics(model) if assignments is None else np.asarray(assignments)
    counts = np.bincount(topics, minlength=model.K)
    total = max(1, int(counts.sum()))
    return [{"topic": t, "keywords": words[t], "count": int(counts[t]), "share": counts[t] / total}
            for t in range(model.K)]
