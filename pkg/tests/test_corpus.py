import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptext.corpus import (
    BUCKET_COUNT,
    TEMPLATES,
    LabeledCaption,
    LabeledCorpus,
    build_synonym_dict,
    collect_captions,
    fnv1a_64,
    generate_template_captions,
    load_synonym_json,
    matched_classes,
    normalize_words,
    split_corpus,
    tokenize,
)
from ptext.errors import ClassTooSmall, DuplicateClass, EmptyText, NoCaptionsForClass


class TestTokenize:
    def test_simple_sentence(self):
        seq = tokenize("A dog barks.")
        assert seq.surface == ("a", "dog", "barks")
        assert len(seq) == 3

    def test_deterministic(self):
        assert tokenize("Sirens wail downtown") == tokenize("Sirens wail downtown")

    def test_whitespace_and_punctuation(self):
        seq = tokenize("  Rain,   rain  ")
        assert seq.surface == ("rain", "rain")
        assert seq.tokens[0] == seq.tokens[1]

    def test_empty_after_normalization(self):
        with pytest.raises(EmptyText):
            tokenize(" ?! ")

    def test_fnv_reference_values(self):
        # published FNV-1a 64-bit test vectors
        assert fnv1a_64(b"") == 0xCBF29CE484222325
        assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a_64(b"foobar") == 0x85944171F73967E8

    def test_ids_in_range(self):
        assert all(0 <= t < BUCKET_COUNT for t in tokenize("the quick brown fox").tokens)

    @given(st.text(min_size=1, max_size=40))
    def test_normalization_is_idempotent(self, text):
        words = normalize_words(text)
        assert normalize_words(" ".join(words)) == words


class TestSynonymDict:
    def test_union_with_own_name(self):
        syn = build_synonym_dict(["dog"], {"dog": ["bark"]})
        assert syn.phrases("dog") == {("dog",), ("bark",)}

    def test_default_singletons(self):
        syn = build_synonym_dict(["dog", "cat"])
        assert syn.phrases("dog") == {("dog",)}
        assert syn.phrases("cat") == {("cat",)}

    def test_duplicate_after_normalization(self):
        with pytest.raises(DuplicateClass):
            build_synonym_dict(["Dog", "dog "])

    def test_load_json_keeps_key_order(self, tmp_path):
        p = tmp_path / "syn.json"
        p.write_text(json.dumps({"rain": ["drizzle"], "dog": []}))
        assert load_synonym_json(p).class_names == ("rain", "dog")


class TestCollect:
    def test_single_match(self):
        syn = build_synonym_dict(["dog", "rain"], {"dog": ["bark"]})
        corpus = collect_captions(["a dog barks loudly"], syn, "single_label", 1)
        collected = [c for c in corpus.captions if c.source == "collected"]
        assert collected == [LabeledCaption("a dog barks loudly", (0,), "collected")]

    def test_two_class_caption_is_excluded(self):
        syn = build_synonym_dict(["dog", "cat"])
        corpus = collect_captions(["dog chases cat"], syn, "single_label", 1)
        assert all(c.source == "template" for c in corpus.captions)

    def test_multi_label_keeps_cooccurrence(self):
        syn = build_synonym_dict(["dog", "cat"])
        corpus = collect_captions(["dog chases cat"], syn, "multi_label", 1)
        assert corpus.captions[0].labels == (0, 1)

    def test_whole_word_only(self):
        syn = build_synonym_dict(["cat"])
        assert matched_classes(normalize_words("a category of sounds"), syn) == []

    def test_multiword_names_need_consecutive_words(self):
        syn = build_synonym_dict(["car horn"])
        assert matched_classes(normalize_words("the car horn blares"), syn) == [0]
        assert matched_classes(normalize_words("a horn on the car"), syn) == []

    def test_top_up_counts_on_ten_line_fixture(self):
        raw = [
            "a dog barks",
            "people talk",
            "rain on the roof",
            "a puppy whines",
            "wind in trees",
            "heavy rain again",
            "more rain",
            "dog and rain",
            "quiet room",
            "rain rain rain",
        ]
        syn = build_synonym_dict(["dog", "rain"], {"dog": ["puppy"]})
        corpus = collect_captions(raw, syn, "single_label", 16)
        # independent count: lines mentioning exactly one class
        dog_lines = [r for r in raw if ("dog" in r.split() or "puppy" in r.split()) and "rain" not in r.split()]
        rain_lines = [r for r in raw if "rain" in r.split() and not ({"dog", "puppy"} & set(r.split()))]
        counts = corpus.class_counts()
        assert counts["dog"] == {"collected": len(dog_lines), "template": 16 - len(dog_lines)}
        assert counts["rain"] == {"collected": len(rain_lines), "template": 16 - len(rain_lines)}
        assert len(dog_lines) == 2

    def test_truncates_in_input_order(self):
        syn = build_synonym_dict(["dog"])
        corpus = collect_captions([f"dog {i}" for i in range(5)], syn, "single_label", 3)
        assert [c.text for c in corpus.captions] == ["dog 0", "dog 1", "dog 2"]

    def test_pipeline_fixture_semantics(self, pipeline_dir):
        syn = load_synonym_json(pipeline_dir / "synonyms.json")
        raw = (pipeline_dir / "raw.txt").read_text().splitlines()
        corpus = collect_captions(raw, syn, "single_label", 4)
        assert corpus.class_counts() == {
            "dog": {"collected": 4, "template": 0},
            "rain": {"collected": 4, "template": 0},
            "car horn": {"collected": 2, "template": 2},
        }
        texts = [c.text for c in corpus.captions]
        assert "The dog runs through the rain" not in texts
        assert "Another dog joins the chorus" not in texts  # balancing drops the fifth dog caption

    def test_jsonl_round_trip(self, pipeline_dir):
        golden = (pipeline_dir / "corpus.golden.jsonl").read_text()
        assert LabeledCorpus.from_jsonl(golden).to_jsonl() == golden


class TestTemplates:
    def test_first_template(self):
        assert generate_template_captions("siren", 1) == ["siren sound in the background"]

    def test_zero(self):
        assert generate_template_captions("dog", 0) == []

    def test_cycles(self):
        k = len(TEMPLATES) + 3
        out = generate_template_captions("dog", k)
        assert len(out) == k
        assert out[len(TEMPLATES)] == out[0]

    def test_empty_name(self):
        with pytest.raises(NoCaptionsForClass):
            generate_template_captions(" ", 2)


def _corpus(per_class, classes=("a", "b")):
    caps = [LabeledCaption(f"{c} {i}", (k,)) for k, c in enumerate(classes) for i in range(per_class)]
    return LabeledCorpus(caps, classes)


class TestSplit:
    def test_counts(self):
        train, held = split_corpus(_corpus(10), 0.2, seed=3)
        for k in range(2):
            assert sum(c.labels == (k,) for c in train.captions) == 8
            assert sum(c.labels == (k,) for c in held.captions) == 2

    def test_deterministic(self):
        assert split_corpus(_corpus(10), 0.3, 5) == split_corpus(_corpus(10), 0.3, 5)

    def test_class_too_small(self):
        with pytest.raises(ClassTooSmall):
            split_corpus(_corpus(1), 0.5, 0)

    def test_templates_stay_in_train(self):
        syn = build_synonym_dict(["dog"])
        corpus = collect_captions(["dog one", "dog two"], syn, "single_label", 6)
        train, held = split_corpus(corpus, 0.5, 0)
        assert all(c.source == "collected" for c in held.captions)
        assert sum(c.source == "template" for c in train.captions) == 4

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 12), st.floats(0.05, 0.95), st.integers(0, 2**32))
    def test_partition(self, n, frac, seed):
        corpus = _corpus(n, ("x", "y", "z"))
        train, held = split_corpus(corpus, frac, seed)
        assert sorted(train.captions + held.captions, key=lambda c: c.text) == sorted(
            corpus.captions, key=lambda c: c.text
        )
        assert len(train) + len(held) == len(corpus)
