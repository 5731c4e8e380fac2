import json

import numpy as np
import pytest

from hapcap.dataset import (
    CATEGORIES,
    CaptionRecord,
    Category,
    agreement_scores,
    build_pairs,
    diversity_stats,
    filter_low_agreement,
    load_captions,
    split_dataset,
    surviving_signal_ids,
    tokenize,
    write_captions,
)
from hapcap.errors import CorpusFormatError, InvalidInputError
from hapcap.synth import make_corpus


def cap(signal="s1", participant="p1", category=Category.SENSORY, text="a buzz"):
    return CaptionRecord(signal, participant, category, text)


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")


def row(signal_id="s1", participant_id="p1", category="sensory", text="rough buzz"):
    return {"signal_id": signal_id, "participant_id": participant_id,
            "category": category, "text": text}


class TestLoadCaptions:
    def test_drops_na_rows(self, tmp_path):
        path = tmp_path / "caps.jsonl"
        write_jsonl(path, [row(text=t) for t in
                           ["fine", "NA", "also fine", "good one", "nice"]])
        assert len(load_captions(path)) == 4

    @pytest.mark.parametrize("na", ["NA", "na", "n/a", "Not Applicable", "  ", ""])
    def test_na_spellings(self, tmp_path, na):
        path = tmp_path / "caps.jsonl"
        write_jsonl(path, [row(text=na), row(text="kept")])
        assert [c.text for c in load_captions(path)] == ["kept"]

    @pytest.mark.parametrize("raw,expected", [
        ("Sensory", Category.SENSORY),
        ("EMOTIONAL", Category.EMOTIONAL),
        ("emotion", Category.EMOTIONAL),
        ("Association", Category.ASSOCIATIVE),
        ("associative", Category.ASSOCIATIVE),
    ])
    def test_category_normalization(self, tmp_path, raw, expected):
        path = tmp_path / "caps.jsonl"
        write_jsonl(path, [row(category=raw)])
        assert load_captions(path)[0].category is expected

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "caps.jsonl"
        path.write_text(json.dumps(row()) + "\nnot json\n")
        with pytest.raises(CorpusFormatError, match=":2"):
            load_captions(path)

    def test_unknown_category(self, tmp_path):
        path = tmp_path / "caps.jsonl"
        write_jsonl(path, [row(category="tactile")])
        with pytest.raises(CorpusFormatError, match="tactile"):
            load_captions(path)

    def test_missing_key(self, tmp_path):
        path = tmp_path / "caps.jsonl"
        path.write_text(json.dumps({"signal_id": "s", "text": "x"}) + "\n")
        with pytest.raises(CorpusFormatError):
            load_captions(path)

    def test_round_trip(self, tmp_path):
        caps = [cap(text="one"), cap(participant="p2", text="two")]
        path = tmp_path / "caps.jsonl"
        write_captions(path, caps)
        assert load_captions(path) == caps


class TestBuildPairs:
    def test_pairs_share_label(self):
        caps = [cap(participant=f"p{i}") for i in range(3)]
        pairs = build_pairs(caps, ["s1"])
        assert len(pairs) == 3
        assert len({p.label for p in pairs}) == 1

    def test_categories_make_distinct_labels(self):
        caps = [cap(category=c) for c in CATEGORIES]
        pairs = build_pairs(caps, ["s1"])
        assert len({p.label for p in pairs}) == 3

    def test_pair_count_matches_caption_count(self, rng):
        caps = [cap(signal=f"s{rng.integers(5)}", participant=f"p{i}") for i in range(40)]
        pairs = build_pairs(caps, [f"s{i}" for i in range(5)])
        assert len(pairs) == len(caps)

    def test_accepts_signal_objects(self, ten_second_signal):
        caps = [cap(signal=ten_second_signal.id)]
        assert len(build_pairs(caps, [ten_second_signal])) == 1

    def test_dangling_signal_raises(self):
        with pytest.raises(InvalidInputError, match="s-missing"):
            build_pairs([cap(signal="s-missing")], ["s1"])


def planted_embedder(mapping):
    return lambda texts: np.array([mapping[t] for t in texts], dtype=np.float64)


class TestAgreementScores:
    def test_identical_texts_score_one(self):
        caps = [cap(participant="p1", text="same"), cap(participant="p2", text="same")]
        scores = agreement_scores(caps, planted_embedder({"same": [1.0, 0.0]}))
        assert scores[caps[0]] == pytest.approx(1.0)
        assert scores[caps[1]] == pytest.approx(1.0)

    def test_orthogonal_scores_zero(self):
        caps = [cap(participant="p1", text="x"), cap(participant="p2", text="y"),
                cap(participant="p3", text="z")]
        emb = planted_embedder({"x": [1, 0, 0], "y": [0, 1, 0], "z": [0, 0, 1]})
        scores = agreement_scores(caps, emb)
        assert scores[caps[0]] == pytest.approx(0.0)

    def test_hand_computed_group_of_three(self):
        # pairwise cosines: (a,b)=1.0, (a,c)=0.5, (b,c)=0.5
        caps = [cap(participant="p1", text="a"), cap(participant="p2", text="b"),
                cap(participant="p3", text="c")]
        emb = planted_embedder({
            "a": [1.0, 0.0],
            "b": [1.0, 0.0],
            "c": [0.5, np.sqrt(3) / 2],
        })
        scores = agreement_scores(caps, emb)
        assert scores[caps[0]] == pytest.approx(0.75)
        assert scores[caps[1]] == pytest.approx(0.75)
        assert scores[caps[2]] == pytest.approx(0.5)

    def test_singleton_group_unscored(self):
        caps = [cap(participant="p1", text="solo")]
        scores = agreement_scores(caps, planted_embedder({"solo": [1.0]}))
        assert scores[caps[0]] is None

    def test_same_participant_not_compared(self):
        caps = [cap(participant="p1", text="a"), cap(participant="p1", text="b")]
        emb = planted_embedder({"a": [1, 0], "b": [0, 1]})
        scores = agreement_scores(caps, emb)
        assert scores[caps[0]] is None and scores[caps[1]] is None

    def test_permutation_invariant(self, rng):
        caps = [cap(participant=f"p{i}", text=f"t{i}") for i in range(4)]
        emb = planted_embedder({f"t{i}": rng.normal(size=3) for i in range(4)})
        scores = agreement_scores(caps, emb)
        shuffled = agreement_scores(caps[::-1], emb)
        for c in caps:
            assert scores[c] == pytest.approx(shuffled[c])

    def test_groups_are_per_signal_and_category(self):
        caps = [
            cap(signal="s1", participant="p1", text="a"),
            cap(signal="s2", participant="p2", text="b"),
        ]
        emb = planted_embedder({"a": [1, 0], "b": [1, 0]})
        scores = agreement_scores(caps, emb)
        assert scores[caps[0]] is None  # different signals never compared


class TestFilterLowAgreement:
    def test_threshold_is_strictly_less_than(self):
        caps = [cap(participant=f"p{i}") for i in range(2)]
        kept, removed = filter_low_agreement(caps, {caps[0]: 0.5, caps[1]: 0.49}, 0.5)
        assert kept == [caps[0]] and removed == [caps[1]]

    def test_identical_corpus_keeps_everything(self):
        caps = [cap(participant=f"p{i}", text="same") for i in range(5)]
        scores = agreement_scores(caps, planted_embedder({"same": [0.3, 0.7]}))
        kept, removed = filter_low_agreement(caps, scores, 0.5)
        assert removed == [] and len(kept) == 5

    def test_unscored_always_kept(self):
        caps = [cap(participant="p1")]
        kept, removed = filter_low_agreement(caps, {caps[0]: None}, 0.99)
        assert kept == caps and removed == []

    def test_monotone_in_threshold(self, rng):
        caps = [cap(participant=f"p{i}", text=f"t{i}") for i in range(30)]
        scores = {c: float(rng.uniform(0, 1)) for c in caps}
        removed_sets = []
        for threshold in (0.3, 0.5, 0.7):
            _, removed = filter_low_agreement(caps, scores, threshold)
            removed_sets.append(set(removed))
        assert removed_sets[0] <= removed_sets[1] <= removed_sets[2]

    def test_surviving_signals(self):
        caps = [cap(signal="s1", participant="p1"), cap(signal="s2", participant="p2")]
        kept, _ = filter_low_agreement(caps, {caps[0]: 0.9, caps[1]: 0.1}, 0.5)
        assert surviving_signal_ids(kept) == {"s1"}


class TestSplitDataset:
    def make_pairs(self, count, category=Category.SENSORY):
        caps = [cap(signal=f"s{i}", participant="p1", category=category,
                    text=f"text {i}") for i in range(count)]
        return build_pairs(caps, [f"s{i}" for i in range(count)])

    def test_sizes_70_10_20(self):
        split = split_dataset(self.make_pairs(100), seed=0)
        assert (len(split.train), len(split.valid), len(split.test)) == (70, 10, 20)

    def test_deterministic(self):
        pairs = self.make_pairs(50)
        a = split_dataset(pairs, seed=3)
        b = split_dataset(pairs, seed=3)
        assert a.train == b.train and a.valid == b.valid and a.test == b.test

    def test_different_seed_differs(self):
        pairs = self.make_pairs(50)
        a = split_dataset(pairs, seed=3)
        b = split_dataset(pairs, seed=4)
        assert a.train != b.train

    def test_union_and_disjointness(self, rng):
        corpus = make_corpus(n_classes=3, signals_per_class=4, captions_per_signal=3, seed=1)
        pairs = corpus.pairs()
        split = split_dataset(pairs, seed=9)
        buckets = [set(split.train), set(split.valid), set(split.test)]
        assert buckets[0] | buckets[1] | buckets[2] == set(pairs)
        assert not (buckets[0] & buckets[1])
        assert not (buckets[0] & buckets[2])
        assert not (buckets[1] & buckets[2])

    def test_stratified_category_mix(self):
        corpus = make_corpus(n_classes=4, signals_per_class=10, captions_per_signal=5, seed=2)
        pairs = corpus.pairs()
        split = split_dataset(pairs, seed=1)
        overall = {c: sum(1 for p in pairs if p.label.category == c) / len(pairs)
                   for c in CATEGORIES}
        for bucket in split:
            for c in CATEGORIES:
                frac = sum(1 for p in bucket if p.label.category == c) / len(bucket)
                assert abs(frac - overall[c]) <= 0.02

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(InvalidInputError):
            split_dataset(self.make_pairs(10), seed=0, fractions=(0.5, 0.2, 0.2))

    def test_too_few_pairs(self):
        with pytest.raises(InvalidInputError):
            split_dataset(self.make_pairs(2), seed=0)

    def test_empty_input(self):
        with pytest.raises(InvalidInputError):
            split_dataset([], seed=0)


class TestDiversityStats:
    def test_distinct_one(self):
        stats = diversity_stats([cap(text="a a b")], 1)
        distinct, mean = stats[Category.SENSORY]
        assert distinct == pytest.approx(2 / 3)
        assert mean == pytest.approx(3.0)

    def test_mean_unigrams(self):
        stats = diversity_stats([cap(text="one two three four five six seven eight")], 1)
        assert stats[Category.SENSORY][1] == pytest.approx(8.0)

    def test_hand_built_corpus(self):
        caps = [
            cap(participant="p1", text="soft soft buzz"),
            cap(participant="p2", text="soft buzz"),
            cap(participant="p3", category=Category.EMOTIONAL, text="calm calm"),
        ]
        stats2 = diversity_stats(caps, 2)
        # sensory bigrams: (soft,soft), (soft,buzz) | (soft,buzz) -> 2 unique / 3
        distinct, mean = stats2[Category.SENSORY]
        assert distinct == pytest.approx(2 / 3)
        assert mean == pytest.approx(1.5)
        # emotional bigrams: (calm,calm) -> 1 unique / 1
        assert stats2[Category.EMOTIONAL][0] == pytest.approx(1.0)

    def test_n_larger_than_captions_warns(self):
        with pytest.warns(UserWarning):
            stats = diversity_stats([cap(text="one two")], 3)
        assert stats[Category.SENSORY] == (0.0, 0.0)

    def test_invalid_n(self):
        with pytest.raises(InvalidInputError):
            diversity_stats([cap()], 0)


def test_tokenize_lowercases_and_splits_punctuation():
    assert tokenize("It's a Buzz-like feel!") == ["it", "s", "a", "buzz", "like", "feel"]
