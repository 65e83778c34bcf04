"""The four transduction architectures and greedy decoding.

* seq2seq  - encoder-decoder where the encoder summary is fed ("peeked") to
             the decoder at every step
* am       - additive-attention alignment model: a fresh context per step
* han      - hierarchical attention: char-level attention pools fixed-size
             chunks, chunk-level attention feeds the decoder
* tn       - transformer: multi-head self-attention, residuals, layer norm

All models share the taped tensor core, train on padded batches with loss
masks, and decode greedily one word at a time.
"""

from dataclasses import dataclass, field

import numpy as np

from . import cells, tensor as T
from .cells import CellParams, cell_step, init_cell_params, init_embedding, zero_state
from .devanagari import CharVocab
from .errors import EmptyInput, InvalidArgument, InvalidShape
from .tensor import Tensor

NEG_INF = -1e9

ARCHITECTURES = ("seq2seq", "am", "han", "tn")


@dataclass
class ModelConfig:
    architecture: str
    cell: str = "lstm"
    hidden_dim: int = 32
    encoder_layers: int = 1
    decoder_layers: int = 1
    embed_dim: int = 32
    dropout: float = 0.0
    l2: float = 0.0
    # transformer-only
    num_layers: int = 2
    num_heads: int = 4
    d_model: int = 64
    ffn_dim: int = 128
    # han-only
    chunk_size: int = 3
    max_decode_len: int = 32
    beam_width: int = 1

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise InvalidArgument(f"unknown architecture {self.architecture!r}")
        if self.cell not in ("lstm", "gru"):
            raise InvalidArgument(f"unknown cell {self.cell!r}")
        if self.architecture == "tn":
            if self.d_model % 2 != 0:
                raise InvalidArgument("d_model must be even")
            if self.d_model % self.num_heads != 0:
                raise InvalidArgument("d_model must be divisible by num_heads")
        if self.architecture == "han" and self.chunk_size < 1:
            raise InvalidArgument("chunk_size must be >= 1")
        return self


@dataclass
class DecoderState:
    layers: list                    # per decoder layer: (h, c) or (h,)
    prev_symbol: int
    context: Tensor | None = None


@dataclass
class Transduction:
    word: str
    attention: np.ndarray           # decoder steps x encoder steps
    truncated: bool = False


def encode_batch(vocab, words):
    """Pad a list of words to a (B, T) id array plus lengths and 0/1 mask."""
    ids = [vocab.encode(w) for w in words]
    lens = np.array([len(x) for x in ids], dtype=np.intp)
    tmax = int(lens.max())
    out = np.full((len(ids), tmax), CharVocab.PAD, dtype=np.intp)
    for b, x in enumerate(ids):
        out[b, : len(x)] = x
    mask = (np.arange(tmax)[None, :] < lens[:, None]).astype(np.float64)
    return out, lens, mask


def positional_encoding(length, d_model):
    """Sinusoidal position matrix (length, d_model)."""
    if d_model % 2 != 0:
        raise InvalidArgument("d_model must be even")
    pos = np.arange(length)[:, None].astype(np.float64)
    div = np.power(10000.0, np.arange(0, d_model, 2) / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(pos / div)
    pe[:, 1::2] = np.cos(pos / div)
    return pe


def attend_bahdanau(s_prev, H, p, mask=None):
    """Additive attention: energies_j = v.tanh(W_s s + W_h h_j).

    s_prev: (h_dec,) or (B, h_dec); H: (T, d_enc) or (B, T, d_enc).
    Returns (context, alpha) with alpha on the simplex per row.
    """
    single = s_prev.ndim == 1
    if single:
        s_prev = T.reshape(s_prev, (1, -1))
        H = T.reshape(H, (1,) + tuple(H.shape))
    if H.shape[1] == 0:
        raise EmptyInput("attention over empty encoder states")
    hw = H @ p["W_h"]                                   # (B, T, a)
    q = T.reshape(s_prev @ p["W_s"], (s_prev.shape[0], 1, -1))
    e = T.reshape(T.tanh(hw + q) @ p["v"], (H.shape[0], H.shape[1]))
    add_mask = None if mask is None else np.where(mask > 0, 0.0, NEG_INF)
    alpha = T.softmax(e, axis=-1, mask=add_mask)
    ctx = T.reshape(
        T.reshape(alpha, (H.shape[0], 1, H.shape[1])) @ H, (H.shape[0], H.shape[2])
    )
    if single:
        return T.reshape(ctx, (-1,)), T.reshape(alpha, (-1,))
    return ctx, alpha


def multi_head_attention(Q, K, V, heads, p, causal=False, key_mask=None,
                         return_weights=False):
    """Scaled dot-product attention over projected head slices.

    Q/K/V: (Tq, d) / (Tk, d) matrices or (B, ...) batches.  The causal flag
    masks position i from attending beyond i (decoder self-attention).
    """
    single = Q.ndim == 2
    if single:
        Q = T.reshape(Q, (1,) + tuple(Q.shape))
        K = T.reshape(K, (1,) + tuple(K.shape))
        V = T.reshape(V, (1,) + tuple(V.shape))
    d = Q.shape[-1]
    if d % heads != 0:
        raise InvalidArgument("model dim not divisible by head count")
    dk = d // heads
    B, tq, tk = Q.shape[0], Q.shape[1], K.shape[1]

    def split(x, name, t):
        return T.transpose(T.reshape(x @ p[name], (B, t, heads, dk)), (0, 2, 1, 3))

    q = split(Q, "W_q", tq)
    k = split(K, "W_k", tk)
    v = split(V, "W_v", tk)
    scores = q @ T.transpose(k, (0, 1, 3, 2)) * (1.0 / np.sqrt(dk))
    mask = np.zeros((B, 1, tq, tk))
    if causal:
        mask += np.triu(np.full((tq, tk), NEG_INF), k=1)[None, None]
    if key_mask is not None:
        mask += np.where(key_mask > 0, 0.0, NEG_INF)[:, None, None, :]
    weights = T.softmax(scores, axis=-1, mask=mask)
    out = T.reshape(T.transpose(weights @ v, (0, 2, 1, 3)), (B, tq, d))
    out = out @ p["W_o"]
    if single:
        out = T.reshape(out, (tq, d))
    if return_weights:
        return out, weights.data.mean(axis=1)  # head-averaged, (B, tq, tk)
    return out


def _uniform(rng, *shape):
    return rng.uniform(-cells.INIT_SCALE, cells.INIT_SCALE, size=shape)


class TransductionModel:
    """Common parameter registry, batching and greedy decoding."""

    def __init__(self, cfg, vocab, seed=0, embedding=None):
        cfg.validate()
        self.cfg = cfg
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        self.params = {}
        self._build(rng, embedding)

    # -- parameter registry ------------------------------------------------
    def _add(self, name, array):
        t = Tensor(array, requires_grad=True)
        self.params[name] = t
        return t

    def _add_cell(self, in_dim, prefix):
        p = init_cell_params(self.cfg.cell, in_dim, self.cfg.hidden_dim,
                             self._rng, prefix=prefix)
        self.params.update(p.weights)
        return p

    def zero_grads(self):
        for t in self.params.values():
            t.zero_grad()

    def export_params(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_params(self, arrays):
        for k, t in self.params.items():
            if k not in arrays or arrays[k].shape != t.data.shape:
                raise InvalidShape(f"parameter {k} missing or mis-shaped")
            t.data[...] = arrays[k]

    # -- shared pieces -----------------------------------------------------
    def _embed(self, table, ids, train, rng):
        x = T.embedding(table, ids)
        if train and self.cfg.dropout > 0:
            x = cells.dropout(x, self.cfg.dropout, "train", rng)
        return x

    def _masked_step(self, x, state, cell, mask_col):
        """Advance the cell but freeze state where mask is 0 (padding)."""
        h, new_state = cell_step(x, state, cell)
        if mask_col is None:
            return h, new_state
        m = Tensor(mask_col[:, None])
        keep = Tensor(1.0 - mask_col[:, None])
        merged = tuple(m * ns + keep * os for ns, os in zip(new_state, state))
        return merged[0], merged

    def _run_birnn(self, xs, mask, fwd_cell, bwd_cell):
        """xs: list of (B, d) step inputs -> list of (B, 2h) states."""
        n = len(xs)
        state = zero_state(fwd_cell, batch=xs[0].shape[0])
        fwd = []
        for t in range(n):
            h, state = self._masked_step(xs[t], state, fwd_cell,
                                         None if mask is None else mask[:, t])
            fwd.append(h)
        state = zero_state(bwd_cell, batch=xs[0].shape[0])
        bwd = [None] * n
        for t in range(n - 1, -1, -1):
            h, state = self._masked_step(xs[t], state, bwd_cell,
                                         None if mask is None else mask[:, t])
            bwd[t] = h
        states = [T.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)]
        return states, fwd[-1], bwd[0]

    def _output_dist(self, h_top, context):
        vec = T.concat([h_top, context], axis=-1)
        logits = vec @ self.params["W_out"] + self.params["b_out"]
        return T.softmax(logits, axis=-1)

    # -- public API --------------------------------------------------------
    def loss_batch(self, src, src_len, src_mask, tgt, tgt_len, tgt_mask,
                   train=True, rng=None):
        raise NotImplementedError

    def transduce_ids(self, ids):
        raise NotImplementedError

    def loss_words(self, pairs, train=True, rng=None):
        src, sl, sm = encode_batch(self.vocab, [p[0] for p in pairs])
        tgt, tl, tm = encode_batch(self.vocab, [p[1] for p in pairs])
        return self.loss_batch(src, sl, sm, tgt, tl, tm, train=train, rng=rng)

    def _loss_from_probs(self, probs_flat, tgt, tgt_len, tgt_mask):
        """Mean CE over real target chars per word, then mean over words."""
        B, steps = tgt.shape[0], tgt.shape[1] - 1
        targets = tgt[:, 1:].reshape(-1)
        w = tgt_mask[:, 1:] / (tgt_len - 1.0)[:, None] / B
        return T.cross_entropy_rows(probs_flat, targets, w.reshape(-1))


def build_model(cfg, vocab, seed=0, embedding=None):
    cls = {
        "seq2seq": Seq2SeqPeekModel,
        "am": AlignmentModel,
        "han": HierarchicalAttentionModel,
        "tn": TransformerModel,
    }[cfg.validate().architecture]
    return cls(cfg, vocab, seed=seed, embedding=embedding)


# ---------------------------------------------------------------------------
# recurrent family

class _RecurrentModel(TransductionModel):
    uses_attention = False
    builds_encoder = True

    def _build(self, rng, embedding):
        cfg = self.cfg
        self._rng = rng
        V = len(self.vocab)
        emb = init_embedding(V, cfg.embed_dim, rng,
                             pretrained=None if embedding is None else embedding)
        self.params["embedding"] = emb.table
        self.enc_cells = []
        if self.builds_encoder:
            in_dim = cfg.embed_dim
            for l in range(cfg.encoder_layers):
                self.enc_cells.append(
                    (self._add_cell(in_dim, f"enc{l}_fwd_"),
                     self._add_cell(in_dim, f"enc{l}_bwd_"))
                )
                in_dim = 2 * cfg.hidden_dim
        ctx_dim = self._context_dim()
        self.dec_cells = []
        in_dim = cfg.embed_dim + ctx_dim
        for l in range(cfg.decoder_layers):
            self.dec_cells.append(self._add_cell(in_dim, f"dec{l}_"))
            in_dim = cfg.hidden_dim
        self._add("W_init", _uniform(rng, 2 * cfg.hidden_dim, cfg.hidden_dim))
        self._add("b_init", np.zeros(cfg.hidden_dim))
        self._add("W_out", _uniform(rng, cfg.hidden_dim + ctx_dim, len(self.vocab)))
        self._add("b_out", np.zeros(len(self.vocab)))
        if self.uses_attention:
            self._add("W_s", _uniform(rng, cfg.hidden_dim, cfg.hidden_dim))
            self._add("W_h", _uniform(rng, 2 * cfg.hidden_dim, cfg.hidden_dim))
            self._add("v", _uniform(rng, cfg.hidden_dim, 1))
        del self._rng

    def _context_dim(self):
        return 2 * self.cfg.hidden_dim

    def _encode(self, src, src_mask, train, rng):
        xs = None
        emb = self._embed(self.params["embedding"], src, train, rng)
        steps = [emb[:, t] for t in range(src.shape[1])]
        for fwd_cell, bwd_cell in self.enc_cells:
            states, f_fin, b_fin = self._run_birnn(steps, src_mask, fwd_cell, bwd_cell)
            steps = states
        H = T.stack(states, axis=1)                     # (B, T, 2h)
        final = T.concat([f_fin, b_fin], axis=-1)       # (B, 2h)
        return H, final

    def _init_dec_state(self, final, batch):
        s0 = T.tanh(final @ self.params["W_init"] + self.params["b_init"])
        layers = []
        for l, cell in enumerate(self.dec_cells):
            st = list(zero_state(cell, batch=batch))
            st[0] = s0 if l == 0 else st[0]
            layers.append(tuple(st))
        return layers

    def _attn_params(self):
        return {k: self.params[k] for k in ("W_s", "W_h", "v")}

    def _context(self, dec_layers, H, src_mask, cache):
        raise NotImplementedError

    def _run_dec_stack(self, x, layers, train, rng):
        new_layers = []
        h = x
        for cell, state in zip(self.dec_cells, layers):
            h, st = cell_step(h, state, cell)
            new_layers.append(st)
        if train and self.cfg.dropout > 0:
            h = cells.dropout(h, self.cfg.dropout, "train", rng)
        return h, new_layers

    def loss_batch(self, src, src_len, src_mask, tgt, tgt_len, tgt_mask,
                   train=True, rng=None):
        rng = rng or np.random.default_rng(0)
        B = src.shape[0]
        H, final = self._encode(src, src_mask, train, rng)
        layers = self._init_dec_state(final, B)
        cache = self._make_cache(H, final)
        emb_in = self._embed(self.params["embedding"], tgt[:, :-1], train, rng)
        prob_rows = []
        for t in range(tgt.shape[1] - 1):
            ctx, _ = self._context(layers, H, src_mask, cache)
            x = T.concat([emb_in[:, t], ctx], axis=-1)
            h, layers = self._run_dec_stack(x, layers, train, rng)
            prob_rows.append(self._output_dist(h, ctx))
        probs = T.reshape(T.stack(prob_rows, axis=1), (-1, len(self.vocab)))
        return self._loss_from_probs(probs, tgt, tgt_len, tgt_mask)

    def decode_step(self, y_prev, state, context):
        """One greedy-decoding step: distribution over chars + next state."""
        if not 0 <= y_prev < len(self.vocab):
            raise IndexError(f"symbol id {y_prev} outside vocabulary")
        emb = T.embedding(self.params["embedding"], np.array([y_prev]))
        x = T.concat([emb, T.reshape(context, (1, -1))], axis=-1)
        h, layers = self._run_dec_stack(x, state.layers, False, None)
        dist = self._output_dist(h, T.reshape(context, (1, -1)))
        return T.reshape(dist, (-1,)), DecoderState(layers, y_prev, context)

    def transduce_ids(self, ids):
        if len(ids) == 0:
            raise EmptyInput("cannot transduce an empty word")
        src = np.array([ids], dtype=np.intp)
        with T.no_grad():
            H, final = self._encode(src, None, False, None)
            layers = self._init_dec_state(final, 1)
            cache = self._make_cache(H, final)
            state = DecoderState(layers, CharVocab.BOS)
            out = []
            rows = []
            truncated = True
            for _ in range(self.cfg.max_decode_len):
                ctx, alpha = self._context(state.layers, H, None, cache)
                dist, state = self.decode_step(state.prev_symbol, state, ctx)
                rows.append(self._attention_row(alpha, len(ids)))
                sym = int(np.argmax(dist.data))
                state.prev_symbol = sym
                if sym == CharVocab.EOS:
                    truncated = False
                    break
                out.append(sym)
        att = np.vstack(rows) if rows else np.zeros((0, len(ids)))
        return out, att, truncated

    def _attention_row(self, alpha, n_src):
        if alpha is None:
            return np.full((1, n_src), 1.0 / n_src)
        return alpha.data.reshape(1, -1)


class Seq2SeqPeekModel(_RecurrentModel):
    """No attention: the encoder summary is re-fed at every decoder step."""

    uses_attention = False

    def _make_cache(self, H, final):
        return final

    def _context(self, dec_layers, H, src_mask, cache):
        return cache, None


class AlignmentModel(_RecurrentModel):
    """Bahdanau-style additive attention over raw encoder states."""

    uses_attention = True

    def _make_cache(self, H, final):
        return None

    def _context(self, dec_layers, H, src_mask, cache):
        s_prev = dec_layers[-1][0]
        return attend_bahdanau(s_prev, H, self._attn_params(), mask=src_mask)


class HierarchicalAttentionModel(_RecurrentModel):
    """Two attention levels: char-level pooling per chunk, then an
    attention-equipped decoder over chunk-level states."""

    uses_attention = True
    builds_encoder = False

    def _build(self, rng, embedding):
        self._rng = rng
        super()._build(rng, embedding)
        self._rng = rng
        cfg = self.cfg
        h2 = 2 * cfg.hidden_dim
        self.char_cells = (self._add_cell(cfg.embed_dim, "chr_fwd_"),
                           self._add_cell(cfg.embed_dim, "chr_bwd_"))
        self.chunk_cells = (self._add_cell(h2, "chk_fwd_"),
                            self._add_cell(h2, "chk_bwd_"))
        self._add("W_c", _uniform(rng, h2, cfg.hidden_dim))
        self._add("b_c", np.zeros(cfg.hidden_dim))
        self._add("v_c", _uniform(rng, cfg.hidden_dim, 1))
        del self._rng

    def _char_attention(self, states, mask):
        """states: (N, cs, 2h) step list -> pooled (N, 2h) + weights (N, cs)."""
        S = T.stack(states, axis=1)
        e = T.reshape(
            T.tanh(S @ self.params["W_c"] + self.params["b_c"]) @ self.params["v_c"],
            (S.shape[0], S.shape[1]),
        )
        add = None if mask is None else np.where(mask > 0, 0.0, NEG_INF)
        if add is not None:
            # keep all-pad chunks numerically sane: let them go uniform
            dead = mask.sum(axis=1) == 0
            add[dead] = 0.0
        alpha = T.softmax(e, axis=-1, mask=add)
        pooled = T.reshape(
            T.reshape(alpha, (S.shape[0], 1, S.shape[1])) @ S,
            (S.shape[0], S.shape[2]),
        )
        return pooled, alpha

    def _encode(self, src, src_mask, train, rng):
        cfg = self.cfg
        B, tmax = src.shape
        cs = cfg.chunk_size
        K = -(-tmax // cs)
        pad = K * cs - tmax
        src_p = np.pad(src, ((0, 0), (0, pad)), constant_values=CharVocab.PAD)
        mask_p = (
            np.pad(src_mask, ((0, 0), (0, pad)))
            if src_mask is not None
            else np.ones((B, K * cs))
        )
        emb = self._embed(self.params["embedding"], src_p, train, rng)
        flat = T.reshape(emb, (B * K, cs, cfg.embed_dim))
        char_mask = mask_p.reshape(B * K, cs)
        steps = [flat[:, t] for t in range(cs)]
        states, _, _ = self._run_birnn(steps, char_mask, *self.char_cells)
        pooled, char_alpha = self._char_attention(states, char_mask)
        chunk_in = T.reshape(pooled, (B, K, 2 * cfg.hidden_dim))
        chunk_mask = (mask_p.reshape(B, K, cs).sum(axis=2) > 0).astype(np.float64)
        steps = [chunk_in[:, k] for k in range(K)]
        states, f_fin, b_fin = self._run_birnn(steps, chunk_mask, *self.chunk_cells)
        H = T.stack(states, axis=1)                     # (B, K, 2h)
        final = T.concat([f_fin, b_fin], axis=-1)
        self._last_chunk_mask = chunk_mask
        self._last_char_alpha = char_alpha.data.reshape(B, K, cs)
        self._last_tmax = tmax
        return H, final

    def _make_cache(self, H, final):
        return None

    def _context(self, dec_layers, H, src_mask, cache):
        s_prev = dec_layers[-1][0]
        mask = self._last_chunk_mask
        return attend_bahdanau(s_prev, H, self._attn_params(), mask=mask)

    def _attention_row(self, alpha, n_src):
        # expand chunk weights to char columns through the char-level weights
        chunk_w = alpha.data.reshape(-1)                 # (K,)
        char_w = self._last_char_alpha[0]                # (K, cs)
        row = (chunk_w[:, None] * char_w).reshape(-1)[: self._last_tmax]
        total = row.sum()
        return (row / total if total > 0 else row).reshape(1, -1)

    def han_encode(self, word_ids):
        """Chunk-level contexts plus the char-level attention (K, chunk)."""
        if len(word_ids) == 0:
            raise EmptyInput("empty word")
        src = np.array([word_ids], dtype=np.intp)
        with T.no_grad():
            H, _ = self._encode(src, np.ones_like(src, dtype=np.float64), False, None)
        return H.data[0], self._last_char_alpha[0]


# ---------------------------------------------------------------------------
# transformer

class TransformerModel(TransductionModel):
    def _build(self, rng, embedding):
        cfg = self.cfg
        self._rng = rng
        V = len(self.vocab)
        d, f = cfg.d_model, cfg.ffn_dim
        emb = init_embedding(V, d, rng,
                            pretrained=None if embedding is None else embedding)
        self.params["embedding"] = emb.table
        for side, n in (("enc", cfg.num_layers), ("dec", cfg.num_layers)):
            for l in range(n):
                blocks = ["self"] if side == "enc" else ["self", "cross"]
                for blk in blocks:
                    for w in ("W_q", "W_k", "W_v", "W_o"):
                        self._add(f"{side}{l}_{blk}_{w}", _uniform(rng, d, d))
                for i, _ in enumerate(blocks + ["ffn"]):
                    self._add(f"{side}{l}_ln{i}_g", np.ones(d))
                    self._add(f"{side}{l}_ln{i}_b", np.zeros(d))
                self._add(f"{side}{l}_ffn_W1", _uniform(rng, d, f))
                self._add(f"{side}{l}_ffn_b1", np.zeros(f))
                self._add(f"{side}{l}_ffn_W2", _uniform(rng, f, d))
                self._add(f"{side}{l}_ffn_b2", np.zeros(d))
        self._add("W_out", _uniform(rng, d, V))
        self._add("b_out", np.zeros(V))
        del self._rng

    def _mha_params(self, side, l, blk):
        return {w: self.params[f"{side}{l}_{blk}_{w}"]
                for w in ("W_q", "W_k", "W_v", "W_o")}

    def _ln(self, x, side, l, i):
        return T.layer_norm(x, self.params[f"{side}{l}_ln{i}_g"],
                            self.params[f"{side}{l}_ln{i}_b"])

    def _ffn(self, x, side, l):
        p = self.params
        h = T.relu(x @ p[f"{side}{l}_ffn_W1"] + p[f"{side}{l}_ffn_b1"])
        return h @ p[f"{side}{l}_ffn_W2"] + p[f"{side}{l}_ffn_b2"]

    def _embed_pos(self, ids, train, rng):
        d = self.cfg.d_model
        x = T.embedding(self.params["embedding"], ids) * np.sqrt(d)
        x = x + Tensor(positional_encoding(ids.shape[1], d))
        if train and self.cfg.dropout > 0:
            x = cells.dropout(x, self.cfg.dropout, "train", rng)
        return x

    def _encode(self, src, src_mask, train, rng):
        x = self._embed_pos(src, train, rng)
        for l in range(self.cfg.num_layers):
            a = multi_head_attention(x, x, x, self.cfg.num_heads,
                                     self._mha_params("enc", l, "self"),
                                     key_mask=src_mask)
            x = self._ln(x + a, "enc", l, 0)
            x = self._ln(x + self._ffn(x, "enc", l), "enc", l, 1)
        return x

    def _decode(self, tgt_in, enc_out, src_mask, train, rng, want_weights=False):
        y = self._embed_pos(tgt_in, train, rng)
        cross_w = None
        for l in range(self.cfg.num_layers):
            a = multi_head_attention(y, y, y, self.cfg.num_heads,
                                     self._mha_params("dec", l, "self"), causal=True)
            y = self._ln(y + a, "dec", l, 0)
            if want_weights and l == self.cfg.num_layers - 1:
                a, cross_w = multi_head_attention(
                    y, enc_out, enc_out, self.cfg.num_heads,
                    self._mha_params("dec", l, "cross"), key_mask=src_mask,
                    return_weights=True)
            else:
                a = multi_head_attention(y, enc_out, enc_out, self.cfg.num_heads,
                                         self._mha_params("dec", l, "cross"),
                                         key_mask=src_mask)
            y = self._ln(y + a, "dec", l, 1)
            y = self._ln(y + self._ffn(y, "dec", l), "dec", l, 2)
        return y, cross_w

    def forward(self, src, tgt_in, src_mask=None, train=False, rng=None,
                want_weights=False):
        """Next-char distributions (B, T_tgt, V) under teacher forcing."""
        if src.shape[1] == 0:
            raise EmptyInput("empty source")
        rng = rng or np.random.default_rng(0)
        enc = self._encode(src, src_mask, train, rng)
        y, cross_w = self._decode(tgt_in, enc, src_mask, train, rng,
                                  want_weights=want_weights)
        logits = y @ self.params["W_out"] + self.params["b_out"]
        probs = T.softmax(logits, axis=-1)
        if want_weights:
            return probs, cross_w
        return probs

    def loss_batch(self, src, src_len, src_mask, tgt, tgt_len, tgt_mask,
                   train=True, rng=None):
        probs = self.forward(src, tgt[:, :-1], src_mask=src_mask,
                             train=train, rng=rng)
        flat = T.reshape(probs, (-1, len(self.vocab)))
        return self._loss_from_probs(flat, tgt, tgt_len, tgt_mask)

    def transduce_ids(self, ids):
        if len(ids) == 0:
            raise EmptyInput("cannot transduce an empty word")
        src = np.array([ids], dtype=np.intp)
        out = [CharVocab.BOS]
        truncated = True
        with T.no_grad():
            for _ in range(self.cfg.max_decode_len):
                probs, cross = self.forward(src, np.array([out], dtype=np.intp),
                                            want_weights=True)
                sym = int(np.argmax(probs.data[0, -1]))
                if sym == CharVocab.EOS:
                    truncated = False
                    break
                out.append(sym)
        n_emit = len(out) - 1
        att = cross[0][:n_emit] if n_emit > 0 else np.zeros((0, len(ids)))
        return out[1:], att, truncated


# ---------------------------------------------------------------------------
# word-level convenience

def transduce_greedy(model, word):
    """Greedy transduction of one word; returns the string, the decoder-over-
    encoder attention matrix, and a truncation flag."""
    if not word:
        raise EmptyInput("empty word")
    ids = model.vocab.encode(word)
    out_ids, att, truncated = model.transduce_ids(ids)
    return Transduction(model.vocab.decode(out_ids), att, truncated)
