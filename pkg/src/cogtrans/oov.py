"""OOV correction for MT output: frequency shortlist, attention-based word
alignment, transduction splice-in, and before/after corpus BLEU.
"""

import struct
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, InvalidArgument, InvalidAttention
from .metrics import corpus_bleu, nfc

ROW_SUM_TOL = 1e-3

# Devanagari danda, double danda, and common ASCII punctuation detached
# before alignment and re-attached after replacement
_PUNCT = set("।॥.,!?;:\"'()[]{}")


@dataclass
class FrequencyShortlist:
    """Top-K words by corpus frequency, counts non-increasing in rank."""

    words: list
    counts: list
    K: int

    def __post_init__(self):
        self._set = set(self.words)

    def __contains__(self, word):
        return nfc(word) in self._set

    def __len__(self):
        return len(self.words)


def tokenize(sentence):
    """Whitespace split with punctuation detached into separate tokens."""
    tokens = []
    for chunk in sentence.split():
        head = 0
        while head < len(chunk) and chunk[head] in _PUNCT:
            tokens.append(chunk[head])
            head += 1
        tail = len(chunk)
        trailing = []
        while tail > head and chunk[tail - 1] in _PUNCT:
            trailing.append(chunk[tail - 1])
            tail -= 1
        if tail > head:
            tokens.append(chunk[head:tail])
        tokens.extend(reversed(trailing))
    return tokens


def build_shortlist(corpus, K):
    """Top-K by token frequency; ties at equal count break lexicographically."""
    if K < 1:
        raise InvalidArgument("K must be >= 1")
    counts = Counter()
    for sentence in corpus:
        tokens = tokenize(sentence) if isinstance(sentence, str) else sentence
        counts.update(nfc(t) for t in tokens)
    if not counts:
        raise EmptyInput("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:K]
    return FrequencyShortlist(
        words=[w for w, _ in ranked], counts=[c for _, c in ranked], K=K
    )


def detect_oov(tokens, shortlist):
    """Positions of tokens absent from the shortlist (punctuation exempt)."""
    return {
        i for i, t in enumerate(tokens)
        if t not in shortlist and t not in _PUNCT
    }


@dataclass
class AlignedSentencePair:
    source: list
    target: list
    attention: np.ndarray  # rows = target positions, cols = source positions
    alignment: dict = field(default_factory=dict)  # source -> [target...]


def align_from_attention(att):
    """source position -> target positions claimed by each target row's argmax.

    Rows must be stochastic within ROW_SUM_TOL; argmax ties take the lowest
    source index.  A source word may map to zero or several target words.
    """
    att = np.asarray(att, dtype=np.float64)
    if att.ndim != 2:
        raise InvalidAttention(f"attention must be 2-D, got shape {att.shape}")
    mapping = {}
    for row_idx in range(att.shape[0]):
        row = att[row_idx]
        if abs(row.sum() - 1.0) > ROW_SUM_TOL:
            raise InvalidAttention(
                f"row {row_idx} sums to {row.sum():.6f}, not 1"
            )
        src_idx = int(np.argmax(row))  # argmax takes the lowest index on ties
        mapping.setdefault(src_idx, []).append(row_idx)
    return mapping


def correct_translation(pair, oov_positions, transducer):
    """Replace target tokens aligned to OOV source positions by transductions.

    Returns (corrected tokens, log): the log records unaligned OOV words and
    transducer failures (the affected tokens are left unchanged).
    """
    if not pair.alignment:
        pair.alignment = align_from_attention(pair.attention)
    corrected = list(pair.target)
    log = []
    for pos in sorted(oov_positions):
        word = pair.source[pos]
        targets = pair.alignment.get(pos, [])
        if not targets:
            log.append(("unaligned", pos, word))
            continue
        try:
            replacement = transducer(word)
        except Exception as exc:  # a failing transducer must not kill the run
            log.append(("transducer-error", pos, f"{word}: {exc}"))
            continue
        for t_pos in targets:
            corrected[t_pos] = replacement
    return corrected, log


def evaluate_pipeline(records, references, shortlist_corpus, shortlist_sizes,
                      transducer):
    """One (K, baseline BLEU, corrected BLEU, delta) row per shortlist size.

    records are AlignedSentencePairs; references are token lists aligned with
    them.
    """
    if len(records) != len(references):
        raise InvalidArgument("record/reference counts differ")
    if not references:
        raise InvalidArgument("missing references")
    baseline = corpus_bleu([r.target for r in records], references)
    rows = []
    for K in shortlist_sizes:
        shortlist = build_shortlist(shortlist_corpus, K)
        corrected_all = []
        for rec in records:
            oov = detect_oov(rec.source, shortlist)
            corrected, _ = correct_translation(rec, oov, transducer)
            corrected_all.append(corrected)
        corrected_bleu = corpus_bleu(corrected_all, references)
        rows.append({
            "K": K,
            "baseline": baseline,
            "corrected": corrected_bleu,
            "delta": corrected_bleu - baseline,
        })
    return rows


# ---------------------------------------------------------------------------
# pipeline file format: sentences TSV + sidecar binary attention matrices

def save_pipeline_file(records, tsv_path, matrix_path):
    """TSV rows "source tokens<TAB>target tokens" (space-joined) plus a
    sidecar of per-record matrices: uint32 rows, uint32 cols, then row-major
    little-endian float64 entries."""
    with open(tsv_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(" ".join(rec.source) + "\t" + " ".join(rec.target) + "\n")
    with open(matrix_path, "wb") as fh:
        for rec in records:
            att = np.ascontiguousarray(rec.attention, dtype="<f8")
            fh.write(struct.pack("<II", att.shape[0], att.shape[1]))
            fh.write(att.tobytes())


def load_pipeline_file(tsv_path, matrix_path):
    records = []
    with open(tsv_path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    with open(matrix_path, "rb") as fh:
        blob = fh.read()
    off = 0
    for line in lines:
        parts = line.split("\t")
        if len(parts) != 2:
            raise InvalidArgument(f"malformed pipeline line {line!r}")
        if off + 8 > len(blob):
            raise InvalidArgument("matrix sidecar shorter than the TSV")
        rows, cols = struct.unpack_from("<II", blob, off)
        off += 8
        count = rows * cols
        if off + count * 8 > len(blob):
            raise InvalidArgument("matrix sidecar shorter than the TSV")
        att = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
        off += count * 8
        records.append(AlignedSentencePair(
            source=parts[0].split(),
            target=parts[1].split(),
            attention=att.reshape(rows, cols).copy(),
        ))
    if off != len(blob):
        raise InvalidArgument("matrix sidecar longer than the TSV")
    return records
