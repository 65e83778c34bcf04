"""Patch out-of-vocabulary words in machine-translation output: find them
with a frequency shortlist, align them through attention, and splice in
transduced cognates."""

import numpy as np

from cogtrans.oov import (AlignedSentencePair, build_shortlist,
                          correct_translation, detect_oov)

monolingual = ["the cat sat", "the cat ran", "a dog ran"]
shortlist = build_shortlist(monolingual, K=10)
print("shortlist:", list(zip(shortlist.words, shortlist.counts)))

pair = AlignedSentencePair(
    source=["the", "katt", "sat"],
    target=["the", "katt", "sat"],     # MT passed the unknown word through
    attention=np.eye(3),               # rows: target, cols: source
)
oov = detect_oov(pair.source, shortlist)
print("OOV positions:", sorted(oov))

corrected, log = correct_translation(pair, oov, lambda w: w.replace("k", "c")
                                     .replace("tt", "t"))
print("corrected:", corrected)
print("log:", log)
