import pytest

from cogtrans.data_io import (
    load_cognate_tsv,
    load_config,
    parse_config,
    save_cognate_tsv,
    split_dataset,
)
from cogtrans.errors import InvalidArgument, ParseError


class TestCognateTsv:
    def test_round_trip(self, tmp_path):
        pairs = [("भेंट", "भेट"), ("नदी", "नदी"), ("भेंट", "भेट")]
        path = tmp_path / "c.tsv"
        save_cognate_tsv(pairs, path)
        assert load_cognate_tsv(path) == pairs  # duplicates kept

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("a\tb\n\n  \nc\td\n", encoding="utf-8")
        assert load_cognate_tsv(path) == [("a", "b"), ("c", "d")]

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("a\tb\nbad line\n", encoding="utf-8")
        with pytest.raises(ParseError) as exc:
            load_cognate_tsv(path)
        assert exc.value.line_no == 2

    def test_empty_field_rejected(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("a\t\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_cognate_tsv(path)

    def test_normalization_unifies_qa_forms(self, tmp_path):
        import unicodedata
        path = tmp_path / "c.tsv"
        path.write_text("\u0958\tx\n", encoding="utf-8")  # precomposed qa
        (src, _), = load_cognate_tsv(path)
        assert src == unicodedata.normalize("NFC", "\u0958")


class TestSplit:
    def test_canonical_sizes(self):
        pairs = [(str(i), str(i)) for i in range(4220)]
        split = split_dataset(pairs, seed=0)
        assert (len(split.train), len(split.validation), len(split.test)) == \
            (2849, 316, 1055)

    def test_partition_no_loss_no_overlap(self):
        pairs = [(str(i), str(i)) for i in range(101)]
        split = split_dataset(pairs, seed=3)
        merged = split.train + split.validation + split.test
        assert sorted(merged) == sorted(pairs)

    def test_deterministic_per_seed(self):
        pairs = [(str(i), str(i)) for i in range(50)]
        assert split_dataset(pairs, 1).train == split_dataset(pairs, 1).train
        assert split_dataset(pairs, 1).train != split_dataset(pairs, 2).train

    def test_too_small(self):
        with pytest.raises(InvalidArgument):
            split_dataset([("a", "b")] * 3)


class TestConfig:
    TEXT = """
# run setup
script = wx
paths.data = corpus.tsv
paths.checkpoints = ckpts
model.architecture = am
model.hidden_dim = 64
train.batch_size = 20
train.val_fraction = 0.1
optimizer.kind = adam
optimizer.lr = 1e-3
train.shuffle_each_epoch = true
"""

    def test_sections_and_coercion(self):
        cfg = parse_config(self.TEXT)
        assert cfg.script == "wx"
        assert cfg.data_path == "corpus.tsv"
        assert cfg.checkpoint_dir == "ckpts"
        assert cfg.model == {"architecture": "am", "hidden_dim": 64}
        assert cfg.train["batch_size"] == 20
        assert cfg.train["val_fraction"] == 0.1
        assert cfg.train["shuffle_each_epoch"] is True
        assert cfg.optimizer == {"kind": "adam", "lr": 1e-3}

    def test_env_fallback_for_checkpoint_dir(self, monkeypatch):
        monkeypatch.setenv("COGTRANS_CHECKPOINT_DIR", "/tmp/ckpt-env")
        cfg = parse_config("script = raw")
        assert cfg.checkpoint_dir == "/tmp/ckpt-env"

    def test_unknown_key_rejected(self):
        with pytest.raises(ParseError):
            parse_config("decoder.size = 4")
        with pytest.raises(ParseError):
            parse_config("paths.logs = x")

    def test_missing_equals(self):
        with pytest.raises(ParseError) as exc:
            parse_config("just some words")
        assert exc.value.line_no == 1

    def test_bad_script(self):
        with pytest.raises(InvalidArgument):
            parse_config("script = latin")

    def test_load_config(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(self.TEXT, encoding="utf-8")
        assert load_config(path).model["architecture"] == "am"
