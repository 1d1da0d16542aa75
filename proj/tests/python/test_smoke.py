# Copyright 2026 The Storygen Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Smoke tests for the python bindings."""

import json
import math

import pytest

import storygen


def test_version():
    assert storygen.__version__


def test_parse_term_roundtrip():
    t = storygen.parse_term("dog_NOUN")
    assert t.lemma == "dog"
    assert t.kind == storygen.TermKind.NOUN
    assert t.render() == "dog_NOUN"
    assert storygen.parse_term("ice_cream_NOUN").lemma == "ice_cream"
    with pytest.raises(storygen.DataError):
        storygen.parse_term("no_suffix")


def test_term_ordering_and_hash():
    a = storygen.parse_term("ant_NOUN")
    b = storygen.parse_term("bee_NOUN")
    assert a < b
    assert a == storygen.parse_term("ant_NOUN")
    assert len({a, b, storygen.parse_term("ant_NOUN")}) == 2


def test_lexicon_and_extraction(tmp_path):
    lex = tmp_path / "lexicon.tsv"
    lex.write_text("noun\tdog\nnoun\tpark\nframe\truns to\tSelf_motion\npronoun\tit\n")
    lexicon = storygen.Lexicon.load_file(str(lex))
    assert lexicon.is_noun("dog")
    assert lexicon.is_pronoun("it")
    terms = storygen.extract_terms(["the", "Dog", "saw", "a", "park", "dog"], lexicon)
    assert [t.render() for t in terms] == ["dog_NOUN", "park_NOUN"]


def test_kg_queries(tmp_path):
    tsv = tmp_path / "tuples.tsv"
    tsv.write_text(
        "dog_NOUN\truns to\tpark_NOUN\n"
        "dog_NOUN\tchases\tball_NOUN\n"
        "ball_NOUN\tlies in\tpark_NOUN\n"
    )
    kg = storygen.KnowledgeGraph()
    added = kg.ingest_file(str(tsv), "other")
    assert added == 3
    assert kg.tuple_count() == 3

    one = kg.one_hop(storygen.parse_term("dog_NOUN"), storygen.parse_term("park_NOUN"))
    assert len(one) == 1
    assert one[0].rela == "runs to"
    assert one[0].source == "other"

    two = kg.two_hop(storygen.parse_term("dog_NOUN"), storygen.parse_term("park_NOUN"))
    assert len(two) == 1
    assert two[0].middle.render() == "ball_NOUN"

    saved = tmp_path / "kg.json"
    kg.save_file(str(saved))
    again = storygen.KnowledgeGraph.load_file(str(saved))
    assert again.tuple_count() == 3


def test_ngram_fixture():
    lm = storygen.NGramModel.train([["a", "b"], ["a", "b"]], 2, 0.75)
    assert math.isclose(lm.perplexity(["a", "b"]), 256.0 / 189.0, rel_tol=0, abs_tol=1e-12)
    assert math.isclose(lm.log_prob(["a", "b"]), 3.0 * math.log(189.0 / 256.0), abs_tol=1e-12)
    uni = storygen.NGramModel.uniform(["a", "b"])
    assert uni.vocab_size() == 4
    assert math.isclose(uni.perplexity(["b", "a"]), 4.0, abs_tol=1e-9)
    with pytest.raises(storygen.ConfigError):
        storygen.NGramModel.train([["a"]], 1, 0.75)


def test_positional_encodings():
    enc = storygen.sinusoid_encoding(3, 4)
    assert math.isclose(enc[0], math.sin(3.0), abs_tol=1e-15)
    assert math.isclose(enc[1], math.cos(3.0), abs_tol=1e-15)
    assert math.isclose(enc[2], math.sin(3.0 / 100.0), abs_tol=1e-15)
    assert storygen.ldpe(4, 4, 4) == storygen.sinusoid_encoding(0, 4)
    with pytest.raises(storygen.ConfigError):
        storygen.sinusoid_encoding(1, 3)


def test_beam_search_with_python_scorer():
    def scorer(prefix):
        return [-5.0, -0.105, -2.303, -6.0]

    cfg = storygen.DecodeConfig()
    cfg.beam_width = 2
    cfg.term_penalty = 1e19
    cfg.eos_id = 3
    result = storygen.beam_search_terms(scorer, cfg, 2)
    assert result.tokens == [1, 2]
    assert math.isclose(result.raw_logprob, -0.105 - 2.303, abs_tol=1e-12)
    replay = storygen.replay_score_terms(result.tokens, scorer, cfg)
    assert math.isclose(replay, result.penalized_score, abs_tol=1e-12)


def test_story_beam_and_replay():
    def scorer(prefix, target_len):
        return [-5.0, -0.105, -2.303, -6.0]

    cfg = storygen.DecodeConfig()
    cfg.beam_width = 2
    cfg.alpha = 20.0
    cfg.gamma = 5.0
    cfg.max_len = 4
    cfg.sentence_end_id = 0
    cfg.eos_id = 3
    result = storygen.beam_search_story(scorer, cfg, 4)
    assert result.tokens
    assert math.isclose(
        storygen.replay_score(result.tokens, scorer, cfg, 4),
        result.penalized_score,
        abs_tol=1e-9,
    )


def test_metric_fixtures():
    assert math.isclose(storygen.bleu_n(["a", "b", "c"], [["a", "b", "d"]], 1), 2.0 / 3.0)
    assert math.isclose(storygen.distinct_n([["a", "a", "a"]], 1), 1.0 / 3.0)
    assert math.isclose(storygen.rouge_l(["a", "b", "c", "d"], [["a", "c", "d"]]), 6.0 / 7.0)
    with pytest.raises(storygen.ConfigError):
        storygen.bleu_n(["a"], [["a"]], 5)
    with pytest.raises(storygen.DataError):
        storygen.bleu_n(["a"], [], 1)


def test_evaluate_files(tmp_path):
    cand = tmp_path / "cand.jsonl"
    ref = tmp_path / "ref.jsonl"
    cand.write_text(json.dumps({"id": "s1", "sentences": [["a", "b", "c"]]}) + "\n")
    ref.write_text(json.dumps({"id": "s1", "sentences": [["a", "b", "d"]]}) + "\n")
    report = json.loads(storygen.evaluate_files(str(cand), str(ref)))
    assert report["format_version"] == 1
    assert math.isclose(report["corpus"]["bleu_1"], 2.0 / 3.0)


def test_gradient_control():
    assert storygen.grad_check_linear_control(1e-5) < 1e-7


def test_error_types_map(tmp_path):
    with pytest.raises(storygen.DataError):
        storygen.KnowledgeGraph.load_file(str(tmp_path / "missing.json"))
    with pytest.raises(storygen.ConfigError):
        cfg = storygen.DecodeConfig()
        cfg.beam_width = 0
        storygen.beam_search_terms(lambda p: [0.0], cfg, 1)
