"""The bundled fixture files must stay in sync with their generators."""

import json

from dstkit import fixturegen
from dstkit.bundled import fixture_path, fixture_text
from dstkit.corpus import load_corpus, serialize_corpus
from dstkit.ontology import serialize_ontology


def test_ontology_fixture_matches_generator():
    assert fixture_text("ontology.json") == serialize_ontology(
        fixturegen.build_demo_ontology())


def test_lexicon_fixture_matches_generator(demo_ontology):
    expected = json.dumps(fixturegen.build_demo_lexicon(demo_ontology),
                          ensure_ascii=False, indent=2)
    assert fixture_text("lexicon.json") == expected


def test_prompts_fixture_matches_generator():
    expected = json.dumps(fixturegen.build_prompt_library(),
                          ensure_ascii=False, indent=2)
    assert fixture_text("prompts.json") == expected


def test_retrieval_fixture_matches_generator():
    expected = json.dumps(fixturegen.build_retrieval_rows(),
                          ensure_ascii=False, indent=2)
    assert fixture_text("retrieval.json") == expected


def test_corpus_fixture_matches_generator(demo_ontology):
    corpus = fixturegen.gen_corpus(demo_ontology, 50, seed=11)
    assert fixture_text("corpus_50.json") == serialize_corpus(corpus)


def test_corpus_fixture_is_50_dialogues(demo_ontology, demo_corpus):
    assert len(demo_corpus.dialogues) == 50
    assert demo_corpus.ontology_ref == fixturegen.ontology_checksum(demo_ontology)


def test_ontology_fixture_shape(demo_ontology):
    # 20 content domains plus the meta domain for the special intents
    assert len(demo_ontology.domains) == 21
    normal = [s for s in demo_ontology.intents.values() if s.is_special == "normal"]
    assert len(normal) >= 40
    specials = {s.is_special for s in demo_ontology.intents.values()}
    assert specials == {"normal", "dont_care", "out_of_domain"}
    for schema in normal:
        assert 1 <= len(schema.slots) <= 4
        for slot_id in schema.mandatory_ids():
            texts = demo_ontology.questions[(schema.id, slot_id)]
            assert len(texts) == 5  # five samples per mandatory slot


def test_persian_content_round_trips_byte_exact():
    raw = fixture_text("ontology.json")
    assert "تهران" in raw
    from dstkit.ontology import parse_ontology
    assert serialize_ontology(parse_ontology(raw)).encode() == raw.encode()


def test_corpus_fixture_scenario_coverage(demo_corpus):
    has_shift = any(t.shift for d in demo_corpus.dialogues for t in d.turns)
    has_dc = any(t.gold_dont_care for d in demo_corpus.dialogues for t in d.turns)
    multi_turn = sum(1 for d in demo_corpus.dialogues if len(d.user_turns()) > 1)
    assert has_shift and has_dc
    assert multi_turn >= 15


def test_negative_fixture_dir_complete():
    manifest = json.loads(fixture_text("negative/manifest.json"))
    assert len(manifest) == 12
    for name in manifest:
        assert fixture_path(f"negative/{name}").exists()
