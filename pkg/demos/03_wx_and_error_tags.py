"""Round-trip Devanagari through the WX transliteration and tag the
linguistic error classes of some imperfect predictions."""

from cogtrans.devanagari import classify_errors, wx_decode, wx_encode

for word in ("भेंट", "कृष्ण", "दर्शन", "बड़ा"):
    wx = wx_encode(word)
    print(f"{word} -> {wx} -> {wx_decode(wx)}")

examples = [
    ("BeMta", "Beta", "Benta"),    # nasal handled wrongly
    ("vqkRa", "vqkRa", "vqkaRa"),  # halant dropped
    ("nadI", "nadI", "nadi"),      # identical pair still missed
]
for source, gold, predicted in examples:
    tags = classify_errors(source, gold, predicted, script="wx")
    names = ", ".join(sorted(t.value for t in tags)) or "clean"
    print(f"gold={gold!r} predicted={predicted!r}: {names}")
