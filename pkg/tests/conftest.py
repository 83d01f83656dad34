import json

import pytest

from dstkit.bundled import (
    load_demo_corpus,
    load_demo_lexicon,
    load_demo_ontology,
    load_demo_prompts,
    load_demo_retriever,
)
from dstkit.nlu import build_lexicon_backend
from dstkit.ontology import parse_ontology

MINI_ONTOLOGY = {
    "domains": ["weather", "food", "meta"],
    "intents": [
        {
            "id": "get_weather",
            "domain": "weather",
            "special": "normal",
            "slots": [
                {"id": "city", "name": "city", "mandatory": True,
                 "values": ["Tehran", "Montreal", "Shiraz"], "default_index": 0},
                {"id": "day", "name": "day", "mandatory": False,
                 "values": ["today", "tomorrow"], "default_index": 0},
            ],
        },
        {
            "id": "find_restaurant",
            "domain": "food",
            "special": "normal",
            "slots": [
                {"id": "city", "name": "city", "mandatory": True,
                 "values": ["Tehran", "Montreal", "Shiraz"], "default_index": 0},
                {"id": "cuisine", "name": "cuisine", "mandatory": True,
                 "values": ["kebab", "pizza", "sushi"], "default_index": 0},
                {"id": "price", "name": "price range", "mandatory": False,
                 "values": ["cheap", "expensive"], "default_index": 0},
            ],
        },
        {
            "id": "order_food",
            "domain": "food",
            "special": "normal",
            "slots": [
                {"id": "dish", "name": "dish", "mandatory": True,
                 "values": ["kebab plate", "veggie pizza"], "default_index": 0},
                {"id": "address", "name": "delivery address", "mandatory": True,
                 "values": [], "default_index": 0},
            ],
        },
        {"id": "dont_care", "domain": "meta", "special": "dont_care", "slots": []},
        {"id": "out_of_domain", "domain": "meta", "special": "out_of_domain",
         "slots": []},
    ],
    "questions": [
        {"intent": "get_weather", "slot": "city",
         "texts": [f"Which city? (v{i})" for i in range(5)]},
        {"intent": "find_restaurant", "slot": "city",
         "texts": [f"In which city should I search? (v{i})" for i in range(5)]},
        {"intent": "find_restaurant", "slot": "cuisine",
         "texts": [f"What cuisine would you like? (v{i})" for i in range(5)]},
        {"intent": "order_food", "slot": "dish",
         "texts": [f"Which dish? (v{i})" for i in range(5)]},
        {"intent": "order_food", "slot": "address",
         "texts": [f"Where should it be delivered? (v{i})" for i in range(5)]},
    ],
}

MINI_LEXICON = {
    "intents": [
        {"id": "get_weather", "triggers": [
            {"phrase": "how is the weather", "weight": 2.5},
            {"phrase": "actually, how is the weather", "weight": 6.0},
            {"phrase": "weather", "weight": 0.12},
        ]},
        {"id": "find_restaurant", "triggers": [
            {"phrase": "find a restaurant", "weight": 2.5},
            {"phrase": "actually, find a restaurant", "weight": 6.0},
        ]},
        {"id": "order_food", "triggers": [
            {"phrase": "order some food", "weight": 2.5},
        ]},
        {"id": "dont_care", "triggers": [
            {"phrase": "whatever", "weight": 2.5},
            {"phrase": "anything is fine", "weight": 2.5},
        ]},
        {"id": "out_of_domain", "triggers": [
            {"phrase": "tell me a joke", "weight": 2.5},
        ]},
    ],
    "slots": [
        {"id": "city", "gazetteer": ["Tehran", "Montreal", "Shiraz"]},
        {"id": "cuisine", "gazetteer": ["kebab", "pizza", "sushi"]},
        {"id": "price", "gazetteer": ["cheap", "expensive"]},
        {"id": "day", "gazetteer": ["today", "tomorrow"]},
        {"id": "dish", "gazetteer": ["kebab plate", "veggie pizza"]},
        {"id": "address", "gazetteer": [], "pattern": r"deliver(?:ed)? to (.+)$"},
    ],
    "temperature": 0.5,
}


@pytest.fixture(scope="session")
def mini_ontology():
    return parse_ontology(json.dumps(MINI_ONTOLOGY))


@pytest.fixture(scope="session")
def mini_lexicon(mini_ontology):
    return build_lexicon_backend(json.dumps(MINI_LEXICON), mini_ontology)


@pytest.fixture(scope="session")
def demo_ontology():
    return load_demo_ontology()


@pytest.fixture(scope="session")
def demo_lexicon(demo_ontology):
    return load_demo_lexicon(demo_ontology)


@pytest.fixture(scope="session")
def demo_corpus(demo_ontology):
    return load_demo_corpus(demo_ontology)


@pytest.fixture(scope="session")
def demo_prompts():
    return load_demo_prompts()


@pytest.fixture(scope="session")
def demo_retriever():
    return load_demo_retriever()
