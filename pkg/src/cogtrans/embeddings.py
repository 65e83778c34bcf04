"""Character-embedding pretraining: averaging word vectors per character
(ft-Avg) and next-character language-model training (LM-LSTM), plus
perplexity evaluation.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .cells import EmbeddingTable, dropout, init_cell_params, cell_step, zero_state
from .devanagari import CharVocab
from .errors import EmptyInput, InvalidArgument
from .metrics import nfc


class WordVectorStore:
    """word -> fixed-dimension vector map, loadable from the common text
    release format ("word v1 v2 ... vD", optional "count dim" first line)."""

    def __init__(self, vectors):
        self.vectors = {}
        self.dim = None
        for word, vec in vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.ndim != 1:
                raise InvalidArgument(f"vector for {word!r} is not 1-D")
            if self.dim is None:
                self.dim = vec.shape[0]
            elif vec.shape[0] != self.dim:
                raise InvalidArgument(
                    f"vector for {word!r} has dimension {vec.shape[0]}, "
                    f"expected {self.dim}"
                )
            self.vectors[nfc(word)] = vec

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, word):
        return nfc(word) in self.vectors

    def __getitem__(self, word):
        return self.vectors[nfc(word)]

    @classmethod
    def load(cls, path):
        vectors = {}
        with open(path, "r", encoding="utf-8") as fh:
            first = fh.readline()
            parts = first.split()
            # optional "count dim" header line
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                if parts:
                    vectors[parts[0]] = [float(x) for x in parts[1:]]
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                vectors[parts[0]] = [float(x) for x in parts[1:]]
        return cls(vectors)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.vectors)} {self.dim or 0}\n")
            for word in sorted(self.vectors):
                nums = " ".join(repr(float(x)) for x in self.vectors[word])
                fh.write(f"{word} {nums}\n")


def ft_avg_embed(store, corpus, vocab=None, token_frequency=False):
    """Character embeddings as count-weighted means of word vectors.

    e_c = sum_w count(c, w) * v_w / sum_w count(c, w), where count(c, w) is
    the number of occurrences of c in w.  By default each word type counts
    once; token_frequency=True additionally weights by corpus frequency.
    Characters never seen in any stored word get zero vectors and are
    reported in the returned missing list.
    """
    if len(store) == 0:
        raise EmptyInput("empty word-vector store")
    word_freq = {}
    for token in corpus:
        token = nfc(token)
        word_freq[token] = word_freq.get(token, 0) + 1
    if vocab is None:
        vocab = CharVocab({c for w in word_freq for c in w})
    dim = store.dim
    table = np.zeros((len(vocab), dim))
    totals = np.zeros(len(vocab))
    for word, freq in word_freq.items():
        if word not in store:
            continue
        weight = freq if token_frequency else 1
        vec = store[word]
        for ch in set(word):
            idx = vocab.index.get(ch)
            if idx is None:
                continue
            count = weight * word.count(ch)
            table[idx] += count * vec
            totals[idx] += count
    covered = totals > 0
    table[covered] /= totals[covered, None]
    missing = [vocab.symbols[i] for i in range(len(vocab)) if not covered[i]]
    real_missing = [s for s in missing if s not in CharVocab.SPECIALS]
    if real_missing:
        warnings.warn(
            f"{len(real_missing)} characters absent from every stored word: "
            f"{real_missing[:10]}"
        )
    return EmbeddingTable(T.Tensor(table, requires_grad=True), True), missing


# ---------------------------------------------------------------------------
# character language model

@dataclass
class CharLMConfig:
    window: int = 30
    hidden: int = 75
    dropout: float = 0.5
    direction: str = "forward"
    embed_dim: int = 32
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 7
    seed: int = 0
    holdout_fraction: float = 0.1

    def validate(self):
        if self.window < 2:
            raise InvalidArgument("window must be >= 2")
        if self.direction not in ("forward", "bidirectional"):
            raise InvalidArgument(f"unknown direction {self.direction!r}")
        return self


class CharLM:
    """LSTM next-character predictor over sliding windows."""

    def __init__(self, cfg, vocab, seed=0):
        cfg.validate()
        self.cfg = cfg
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        V = len(vocab)
        scale = 0.08
        self.embedding = T.Tensor(
            rng.uniform(-scale, scale, size=(V, cfg.embed_dim)),
            requires_grad=True,
        )
        self.fwd = init_cell_params("lstm", cfg.embed_dim, cfg.hidden, rng,
                                    prefix="fwd_")
        self.cells = [self.fwd]
        out_dim = cfg.hidden
        if cfg.direction == "bidirectional":
            self.bwd = init_cell_params("lstm", cfg.embed_dim, cfg.hidden,
                                        rng, prefix="bwd_")
            self.cells.append(self.bwd)
            out_dim = 2 * cfg.hidden
        self.W_out = T.Tensor(rng.uniform(-scale, scale, size=(out_dim, V)),
                              requires_grad=True)
        self.b_out = T.Tensor(np.zeros(V), requires_grad=True)

    @property
    def params(self):
        out = {"embedding": self.embedding, "W_out": self.W_out,
               "b_out": self.b_out}
        for cell in self.cells:
            out.update(cell.weights)
        return out

    def zero_grads(self):
        for t in self.params.values():
            t.zero_grad()

    def _final_state(self, ids, train, rng):
        emb = T.embedding(self.embedding, ids)
        if train and self.cfg.dropout > 0:
            emb = dropout(emb, self.cfg.dropout, "train", rng)
        steps = [emb[:, t] for t in range(ids.shape[1])]
        state = zero_state(self.fwd, batch=ids.shape[0])
        for x in steps:
            h, state = cell_step(x, state, self.fwd)
        if self.cfg.direction == "bidirectional":
            bstate = zero_state(self.bwd, batch=ids.shape[0])
            for x in reversed(steps):
                hb, bstate = cell_step(x, bstate, self.bwd)
            h = T.concat([h, hb], axis=-1)
        if train and self.cfg.dropout > 0:
            h = dropout(h, self.cfg.dropout, "train", rng)
        return h

    def loss_batch(self, ids, targets, train=True, rng=None):
        h = self._final_state(ids, train, rng)
        probs = T.softmax(h @ self.W_out + self.b_out, axis=-1)
        weights = np.full(len(targets), 1.0 / len(targets))
        return T.cross_entropy_rows(probs, targets, weights)

    def nll(self, ids, targets):
        """Total negative log-likelihood of the targets, in nats."""
        with T.no_grad():
            h = self._final_state(ids, False, None)
            probs = T.softmax(h @ self.W_out + self.b_out, axis=-1)
        p = probs.data[np.arange(len(targets)), targets]
        return float(-np.log(np.maximum(p, 1e-12)).sum())


def _windows(ids, window):
    """Sliding (window-1)-char contexts and their next-char targets."""
    ctx = window - 1
    n = len(ids) - ctx
    if n <= 0:
        return np.zeros((0, ctx), dtype=np.intp), np.zeros(0, dtype=np.intp)
    idx = np.arange(ctx)[None, :] + np.arange(n)[:, None]
    return np.asarray(ids, dtype=np.intp)[idx], np.asarray(ids[ctx:], dtype=np.intp)


def train_char_lm(corpus, cfg, vocab=None):
    """Fit the LM on a raw text corpus; returns (lm, held-out perplexity).

    The corpus tail (cfg.holdout_fraction) is held out for the perplexity
    estimate; early stopping uses the same held-out NLL with cfg.patience.
    """
    cfg.validate()
    text = nfc(corpus)
    if len(text) <= cfg.window:
        raise InvalidArgument("corpus shorter than the LM window")
    if vocab is None:
        vocab = CharVocab(set(text))
    ids = [vocab.index.get(c, CharVocab.UNK) for c in text]
    cut = max(cfg.window, int(len(ids) * (1.0 - cfg.holdout_fraction)))
    train_x, train_y = _windows(ids[:cut], cfg.window)
    held_x, held_y = _windows(ids[cut - cfg.window + 1:], cfg.window)
    if len(held_y) == 0:
        held_x, held_y = train_x, train_y
    lm = CharLM(cfg, vocab, seed=cfg.seed)
    from .training import Optimizer, OptimizerSpec  # local: avoids cycle at import

    opt = Optimizer(OptimizerSpec("adam", lr=cfg.lr))
    rng = np.random.default_rng(cfg.seed)
    best = math.inf
    best_params = None
    stale = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_y))
        for i in range(0, len(order), cfg.batch_size):
            sel = order[i : i + cfg.batch_size]
            lm.zero_grads()
            with T.Graph() as g:
                loss = lm.loss_batch(train_x[sel], train_y[sel], train=True,
                                     rng=rng)
                T.backward(g, loss)
            opt.step(lm.params, epoch=epoch)
        nll = lm.nll(held_x, held_y)
        if nll < best - 1e-9:
            best = nll
            best_params = {k: t.data.copy() for k, t in lm.params.items()}
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                break
    if best_params is not None:
        for k, t in lm.params.items():
            t.data[...] = best_params[k]
    ppl = math.exp(best / max(len(held_y), 1))
    return lm, EmbeddingTable(lm.embedding, True), ppl


def perplexity(lm, held_out):
    """exp(mean negative log-likelihood per predicted character)."""
    text = nfc(held_out)
    ids = [lm.vocab.index.get(c, CharVocab.UNK) for c in text]
    x, y = _windows(ids, lm.cfg.window)
    if len(y) == 0:
        raise EmptyInput("held-out text shorter than the LM window")
    return math.exp(lm.nll(x, y) / len(y))
