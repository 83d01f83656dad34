"""Access to the fixture files shipped inside the package."""

from __future__ import annotations

import json
from importlib.resources import files
from pathlib import Path

from .corpus import Corpus, load_corpus
from .llm_bridge import FixtureRetriever, PromptTemplate, load_prompt_library
from .nlu import LexiconNluBackend, build_lexicon_backend
from .ontology import Ontology, parse_ontology


def fixture_path(name: str) -> Path:
    return Path(str(files("dstkit").joinpath("fixtures", name)))


def fixture_text(name: str) -> str:
    return fixture_path(name).read_text(encoding="utf-8")


def load_demo_ontology() -> Ontology:
    return parse_ontology(fixture_text("ontology.json"))


def load_demo_lexicon(ontology: Ontology | None = None) -> LexiconNluBackend:
    ontology = ontology or load_demo_ontology()
    return build_lexicon_backend(fixture_text("lexicon.json"), ontology)


def load_demo_corpus(ontology: Ontology | None = None) -> Corpus:
    ontology = ontology or load_demo_ontology()
    return load_corpus(fixture_text("corpus_50.json"), ontology)


def load_demo_prompts() -> list[PromptTemplate]:
    return load_prompt_library(fixture_text("prompts.json"))


def load_demo_retriever() -> FixtureRetriever:
    return FixtureRetriever(json.loads(fixture_text("retrieval.json")))


def negative_fixture_manifest() -> dict[str, str]:
    """Map of negative corpus fixture file name -> expected error code."""
    return json.loads(fixture_text("negative/manifest.json"))
