"""Rule-based cognate-pair generator: a public, deterministic benchmark with
a known transduction oracle, used by the end-to-end tests and the CLI.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

ALPHABET = tuple("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMN")
MIN_LEN = 2
MAX_LEN = 12
IDENTITY_FRACTION = 0.10


@dataclass(frozen=True)
class RewriteRule:
    """Positional string rewrite: src -> repl anchored at initial/final/anywhere."""

    anchor: str
    src: str
    repl: str
    prob: float = 1.0

    def __post_init__(self):
        if self.anchor not in ("initial", "final", "anywhere"):
            raise InvalidArgument(f"unknown anchor {self.anchor!r}")
        if not self.src:
            raise InvalidArgument("rule source must be nonempty")
        if not 0.0 <= self.prob <= 1.0:
            raise InvalidArgument("rule probability must be in [0, 1]")

    def apply(self, word):
        if self.anchor == "initial":
            if word.startswith(self.src):
                return self.repl + word[len(self.src):]
            return word
        if self.anchor == "final":
            if word.endswith(self.src):
                return word[: len(word) - len(self.src)] + self.repl
            return word
        return word.replace(self.src, self.repl)


DEFAULT_RULESET = (
    RewriteRule("initial", "y", "j"),
    RewriteRule("final", "nA", "lA"),
    RewriteRule("anywhere", "M", "na"),
)


def oracle_transduce(word, ruleset=DEFAULT_RULESET):
    """Apply every rule left-to-right in ruleset order (probabilities ignored)."""
    for rule in ruleset:
        word = rule.apply(word)
    return word


def _touched(word, ruleset):
    return oracle_transduce(word, ruleset) != word


def _random_word(rng, alphabet, length):
    return "".join(alphabet[i] for i in rng.integers(0, len(alphabet), size=length))


def generate_pairs(seed, n, ruleset=DEFAULT_RULESET,
                   identity_fraction=IDENTITY_FRACTION):
    """n seeded (source, target) pairs with target == oracle_transduce(source).

    Roughly identity_fraction of the pairs use rule-clean sources (target
    equals source); the rest are boosted so each rule's pattern appears with
    useful frequency instead of the tiny natural rate of uniform sampling.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if not ruleset:
        raise InvalidArgument("empty ruleset")
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < n:
        length = int(rng.integers(MIN_LEN, MAX_LEN + 1))
        word = _random_word(rng, ALPHABET, length)
        want_identity = rng.random() < identity_fraction
        if want_identity:
            # resample until no rule fires, so source == target exactly
            while _touched(word, ruleset):
                word = _random_word(rng, ALPHABET, length)
        else:
            # plant the pattern of a random rule so transductions dominate
            rule = ruleset[int(rng.integers(0, len(ruleset)))]
            if rule.anchor == "initial":
                word = rule.src + word[len(rule.src):]
            elif rule.anchor == "final":
                word = word[: max(0, len(word) - len(rule.src))] + rule.src
            else:
                pos = int(rng.integers(0, max(1, len(word) - len(rule.src) + 1)))
                word = word[:pos] + rule.src + word[pos + len(rule.src):]
        pairs.append((word, oracle_transduce(word, ruleset)))
    return pairs


def dataset_stats(pairs, ruleset=DEFAULT_RULESET):
    """Reproducible summary: length histogram, identity and per-rule counts."""
    lengths = {}
    identity = 0
    rule_hits = {i: 0 for i in range(len(ruleset))}
    for src, tgt in pairs:
        lengths[len(src)] = lengths.get(len(src), 0) + 1
        if src == tgt:
            identity += 1
        for i, rule in enumerate(ruleset):
            if rule.apply(src) != src:
                rule_hits[i] += 1
    return {
        "n": len(pairs),
        "lengths": dict(sorted(lengths.items())),
        "identity": identity,
        "rule_hits": rule_hits,
    }
