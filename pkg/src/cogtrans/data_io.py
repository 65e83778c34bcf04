"""Cognate-corpus ingestion, the 3:1-then-0.1 dataset split, and line-based
key=value run configuration.
"""

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, ParseError
from .metrics import nfc

CHECKPOINT_DIR_ENV = "COGTRANS_CHECKPOINT_DIR"


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list
    seed: int = 0

    def __iter__(self):
        return iter((self.train, self.validation, self.test))


def load_cognate_tsv(path):
    """Read "source<TAB>target" lines into NFC-normalized pairs.

    Blank lines are skipped; duplicate pairs are kept (a source word may have
    several legitimate cognates).  A malformed line raises ParseError with
    its 1-based line number.
    """
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(line_no,
                                 f"expected 'source<TAB>target', got {line!r}")
            pairs.append((nfc(parts[0]), nfc(parts[1])))
    return pairs


def save_cognate_tsv(pairs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for src, tgt in pairs:
            fh.write(f"{src}\t{tgt}\n")


def split_dataset(pairs, seed=0):
    """Seeded shuffle; floor-quarter test cut, then round(0.1) validation cut.

    round() is Python's banker's rounding: 4220 pairs give the canonical
    2849/316/1055 split.
    """
    if len(pairs) < 4:
        raise InvalidArgument("need at least 4 pairs to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    n_test = len(shuffled) // 4
    rest = shuffled[: len(shuffled) - n_test]
    test = shuffled[len(shuffled) - n_test:]
    n_val = int(round(0.1 * len(rest)))
    n_val = min(n_val, len(rest) - 1)
    validation = rest[len(rest) - n_val:] if n_val else []
    train = rest[: len(rest) - n_val]
    return DatasetSplit(train=train, validation=validation, test=test, seed=seed)


# ---------------------------------------------------------------------------
# run configuration

@dataclass
class RunConfig:
    """Paths plus sectioned hyperparameters parsed from key=value lines."""

    data_path: str = ""
    vectors_path: str = ""
    checkpoint_dir: str = ""
    report_dir: str = ""
    script: str = "raw"
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.script not in ("devanagari", "wx", "raw"):
            raise InvalidArgument(f"unknown script mode {self.script!r}")
        if not self.checkpoint_dir:
            self.checkpoint_dir = os.environ.get(CHECKPOINT_DIR_ENV, ".")


_PATH_KEYS = {
    "data": "data_path",
    "vectors": "vectors_path",
    "checkpoints": "checkpoint_dir",
    "reports": "report_dir",
}


def _coerce(value):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def parse_config(text):
    """Parse "section.key = value" lines into a RunConfig.

    Sections: paths.*, model.*, train.*, optimizer.*, and the bare key
    "script".  Comments (#) and blank lines are ignored.
    """
    kwargs = {"model": {}, "train": {}, "optimizer": {}}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(line_no, f"expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "script":
            kwargs["script"] = value
        elif key.startswith("paths."):
            sub = key[len("paths."):]
            if sub not in _PATH_KEYS:
                raise ParseError(line_no, f"unknown path key {sub!r}")
            kwargs[_PATH_KEYS[sub]] = value
        elif key.startswith(("model.", "train.", "optimizer.")):
            section, sub = key.split(".", 1)
            kwargs[section][sub] = _coerce(value)
        else:
            raise ParseError(line_no, f"unknown config key {key!r}")
    try:
        return RunConfig(**kwargs)
    except InvalidArgument:
        raise
    except TypeError as exc:
        raise ParseError(0, str(exc)) from None


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
