"""Acceptance suite: one test per criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; every tolerance and seed is pinned here, nothing is calibrated at
run time.
"""

import json
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from dstkit import fixturegen, gbt, tracker
from dstkit.bundled import (
    fixture_path,
    load_demo_corpus,
    load_demo_lexicon,
    load_demo_ontology,
    load_demo_prompts,
)
from dstkit.corpus import Turn
from dstkit.engine import Engine
from dstkit.evaluation import PipelineConfig, evaluate_pipeline
from dstkit.llm_bridge import TrackerMockBackend
from dstkit.metrics import (
    BenchmarkVector,
    aga,
    benchmark_vector,
    classification_report,
    fga,
    jga,
)
from dstkit.persistence import SessionStore
from dstkit.querygen import SqlQuery, build_query
from dstkit.tracker import DstResult, state_view
from dstkit.validator import (
    GbtParams,
    classify_rule,
    extract_features,
    predict_gbt,
    train_gbt,
    tune_thresholds,
)

from test_tracker import AMBIGUOUS, UNCLEAR, confirmed, nlu_for


def ok(line: str) -> None:
    print(f"\nPASS {line}")


# --------------------------------------------------------------------------
# 1. Metric oracle equivalence
# --------------------------------------------------------------------------


def oracle_recompute(pairs):
    """Naive loop recomputation of every reported metric, in exact fractions."""
    n = len(pairs)
    state_hits = any_hits = 0
    aga_total = Fraction(0)
    for gold, predicted, pred_dc in pairs:
        intent_ok = predicted.intent == gold.gold_intent
        slots_ok = True
        for k, v in gold.gold_state.items():
            if predicted.state.get(k) != v:
                slots_ok = False
        dc_ok = set(pred_dc) == set(gold.gold_dont_care)
        state_ok = intent_ok and slots_ok and dc_ok
        comps = [intent_ok, slots_ok, dc_ok, state_ok]
        state_hits += 1 if state_ok else 0
        any_hits += 1 if any(comps) else 0
        aga_total += Fraction(sum(comps), len(comps))

    golds = [g.gold_intent for g, _, _ in pairs]
    preds = [p.intent for _, p, _ in pairs]
    labels = sorted(set(golds) | set(preds))
    correct = sum(1 for g, p in zip(golds, preds) if g == p)
    macro = Fraction(0)
    tp_total = fp_total = fn_total = 0
    for label in labels:
        tp = sum(1 for g, p in zip(golds, preds) if g == label and p == label)
        fp = sum(1 for g, p in zip(golds, preds) if g != label and p == label)
        fn = sum(1 for g, p in zip(golds, preds) if g == label and p != label)
        precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        macro += (2 * precision * recall / (precision + recall)
                  if precision + recall else Fraction(0))
        tp_total += tp
        fp_total += fp
        fn_total += fn
    micro_denom = 2 * tp_total + fp_total + fn_total
    return {
        "jga": Fraction(state_hits, n),
        "fga": Fraction(any_hits, n),
        "aga": aga_total / n,
        "accuracy": Fraction(correct, n),
        "f1_micro": Fraction(2 * tp_total, micro_denom) if micro_denom else Fraction(0),
        "f1_macro": macro / len(labels) if labels else Fraction(0),
    }


def random_scored_pair(rng):
    intents = ["a", "b", "c", "d"]
    slots = ["s1", "s2", "s3", "s4"]
    gold_state = {s: rng.choice(["x", "y", "z"])
                  for s in rng.sample(slots, rng.randint(0, 4))}
    dc = frozenset(s for s in gold_state if rng.random() < 0.25)
    gold = Turn(speaker="user", text="t", gold_intent=rng.choice(intents),
                gold_slots=dict(gold_state), gold_dont_care=dc,
                gold_state=gold_state)
    pred_state = {s: rng.choice(["x", "y", "z"])
                  for s in slots if rng.random() < 0.75}
    predicted = DstResult(intent=rng.choice(intents), state=pred_state,
                          query=SqlQuery("", ()), followup=None,
                          dialogue_status="complete")
    pred_dc = frozenset(s for s in pred_state if rng.random() < 0.25)
    return gold, predicted, pred_dc


def test_criterion_1_metric_oracle_equivalence():
    started = time.monotonic()
    rng = random.Random(20240810)
    for corpus_no in range(1000):
        pairs = [random_scored_pair(rng) for _ in range(rng.randint(1, 200))]
        vectors = [benchmark_vector(g, p, pred_dont_care=dc) for g, p, dc in pairs]
        report = classification_report([g.gold_intent for g, _, _ in pairs],
                                       [p.intent for _, p, _ in pairs])
        expected = oracle_recompute(pairs)
        assert jga(vectors) == expected["jga"], corpus_no
        assert fga(vectors) == expected["fga"], corpus_no
        assert aga(vectors) == expected["aga"], corpus_no
        assert report.accuracy == float(expected["accuracy"]), corpus_no
        assert report.f1_micro == float(expected["f1_micro"]), corpus_no
        assert report.f1_macro == float(expected["f1_macro"]), corpus_no
    elapsed = time.monotonic() - started
    assert elapsed < 30, f"took {elapsed:.1f}s"
    ok(f"criterion 1: metric oracle equivalence on 1000 corpora ({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# 2. Metric ordering law
# --------------------------------------------------------------------------


def test_criterion_2_ordering_law():
    rng = random.Random(99)
    vectors = []
    for _ in range(10_000):
        i, s, d = (rng.random() < 0.8 for _ in range(3))
        human = rng.choice([None, True]) if rng.random() < 0.3 else None
        comps = [i, s, d] + ([human] if human is not None else [])
        vectors.append(BenchmarkVector(
            intent_ok=i, slots_ok=s, dont_care_ok=d,
            state_ok=all(comps), human_ok=human))
    violations = 0
    for v in vectors:
        one = [v]
        if not (0 <= jga(one) <= aga(one) <= fga(one) <= 1):
            violations += 1
    # and on random batches
    for _ in range(200):
        batch = rng.sample(vectors, rng.randint(1, 400))
        if not (jga(batch) <= aga(batch) <= fga(batch)):
            violations += 1
    assert violations == 0
    ok("criterion 2: jga <= aga <= fga on 10000 vectors, zero violations")


# --------------------------------------------------------------------------
# 3. Oracle pipeline perfection
# --------------------------------------------------------------------------


def test_criterion_3_oracle_pipeline_perfection(capsys):
    started = time.monotonic()
    ontology = load_demo_ontology()
    corpus = load_demo_corpus(ontology)
    assert len(corpus.dialogues) == 50
    report = evaluate_pipeline(corpus, ontology, PipelineConfig(), k=5, seed=0)
    assert report.jga == 1.0
    assert report.fga == 1.0
    assert report.aga == 1.0

    # the end-to-end CLI path prints the same numbers
    from dstkit.cli import main
    assert main(["eval", "--corpus", str(fixture_path("corpus_50.json")),
                 "--k", "5", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "JGA=1.000" in out and "FGA=1.000" in out and "AGA=1.000" in out
    elapsed = time.monotonic() - started
    assert elapsed < 10, f"took {elapsed:.1f}s"
    ok(f"criterion 3: gold-echo eval JGA=FGA=AGA=1.000 on 50 dialogues ({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# 4. Noise calibration
# --------------------------------------------------------------------------


def test_criterion_4_noise_calibration():
    started = time.monotonic()
    ontology = load_demo_ontology()
    corpus = fixturegen.gen_corpus(ontology, 600, seed=23)
    turns = sum(len(d.user_turns()) for d in corpus.dialogues)
    assert turns >= 1000
    report = evaluate_pipeline(
        corpus, ontology,
        PipelineConfig(slot_noise_p=0.30, noise_seed=0), k=5, seed=5)
    assert 0.67 <= report.jga <= 0.73, report.jga
    elapsed = time.monotonic() - started
    assert elapsed < 60, f"took {elapsed:.1f}s"
    ok(f"criterion 4: JGA={report.jga:.4f} in [0.67, 0.73] over {turns} turns "
       f"({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# 5. Validator imbalance property
# --------------------------------------------------------------------------


def test_criterion_5_validator_imbalance():
    started = time.monotonic()
    data = fixturegen.make_validation_dataset(10_000, (0.97, 0.02, 0.01), seed=0)
    rng = random.Random(1)
    rng.shuffle(data)
    n = len(data)
    train = data[:int(n * 0.6)]
    dev = data[int(n * 0.6):int(n * 0.8)]
    evaluation = data[int(n * 0.8):]

    def report_for(model):
        golds = [label for _, label in evaluation]
        preds = [predict_gbt(model, f).label for f, _ in evaluation]
        return classification_report(golds, preds)

    baseline = train_gbt(train, GbtParams(
        n_trees=40, max_depth=3, class_weights=(1.0, 1.0, 1.0)))
    base_report = report_for(baseline)

    weighted = train_gbt(train, GbtParams(n_trees=40, max_depth=3))
    weighted.decision_thresholds = tune_thresholds(weighted, dev)
    tuned_report = report_for(weighted)

    for minority in ("ambiguous", "unclear"):
        base_recall = base_report.per_class[minority]["recall"]
        tuned_recall = tuned_report.per_class[minority]["recall"]
        assert tuned_recall > base_recall, (minority, base_recall, tuned_recall)
    confirmed_f1 = tuned_report.per_class["confirmed"]["f1"]
    assert confirmed_f1 >= 0.90
    elapsed = time.monotonic() - started
    assert elapsed < 120, f"took {elapsed:.1f}s"
    ok("criterion 5: weighted+tuned minority recall "
       f"amb {base_report.per_class['ambiguous']['recall']:.2f}->"
       f"{tuned_report.per_class['ambiguous']['recall']:.2f}, "
       f"unc {base_report.per_class['unclear']['recall']:.2f}->"
       f"{tuned_report.per_class['unclear']['recall']:.2f}, "
       f"confirmed F1 {confirmed_f1:.3f} ({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# 6. GBT correctness
# --------------------------------------------------------------------------


def test_criterion_6_gbt_correctness():
    started = time.monotonic()
    rng = np.random.default_rng(7)
    for trial in range(100):
        n = int(rng.integers(15, 70))
        d = int(rng.integers(2, 9))
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 3, size=n)
        weights = tuple(float(w) for w in rng.uniform(0.5, 50.0, size=3))
        model = gbt.train(X, y, n_classes=3, n_trees=8, max_depth=3,
                          learning_rate=0.5, class_weights=weights, seed=trial)
        for before, after in zip(model.train_loss, model.train_loss[1:]):
            assert after <= before + 1e-9, (trial, model.train_loss)

    from test_gbt import exhaustive_depth2_tree_zero_error, toy_separable
    X, y = toy_separable(200, seed=3)
    assert exhaustive_depth2_tree_zero_error(X, y, 3)
    model = gbt.train(X, y, n_classes=3, n_trees=50, max_depth=3,
                      learning_rate=0.3, class_weights=(1.0, 1.0, 1.0), seed=0)
    assert gbt.training_accuracy(model, X, y) == 1.0
    elapsed = time.monotonic() - started
    ok(f"criterion 6: loss monotone on 100 datasets; toy set 100% ({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# 7. Tracker state-machine suite
# --------------------------------------------------------------------------


def test_criterion_7_tracker_suite(mini_ontology):
    # (a) follow-up question on missing mandatory slot
    state = tracker.new_session(mini_ontology, seed=1)
    nlu = nlu_for(mini_ontology, "find_restaurant", {"city": "Tehran"})
    state, action = tracker.update(state, nlu, confirmed("find_restaurant"),
                                   mini_ontology)
    assert action.kind == "ask_followup"
    assert action.question in mini_ontology.questions[("find_restaurant", "cuisine")]

    # (b) unclear pauses and leaves fills untouched
    fills = dict(state.fills)
    state2, action2 = tracker.update(
        state, nlu_for(mini_ontology, "find_restaurant", {"city": "Montreal"}),
        UNCLEAR, mini_ontology)
    assert action2.kind == "ask_clarify_unclear"
    assert state2.fills == fills

    # (c) don't-care resolves to the enumerated default
    state3, action3 = tracker.update(
        state, nlu_for(mini_ontology, "find_restaurant", dont_care=["cuisine"]),
        confirmed("find_restaurant"), mini_ontology)
    assert state3.fills["cuisine"].value == "kebab"
    assert state3.fills["cuisine"].source == "dont_care_default"
    assert action3.kind == "complete"

    # (d) intent shift with shared-slot carryover, then completion
    state4, action4 = tracker.update(
        state3, nlu_for(mini_ontology, "get_weather"), confirmed("get_weather"),
        mini_ontology)
    assert state4.active_intent == "get_weather"
    assert state4.fills["city"].source == "carried_over"
    assert "cuisine" not in state4.fills
    assert action4.kind == "complete"
    assert action4.result.state == {"city": "Tehran"}

    # (e) completion on a fresh session with the single mandatory slot
    fresh = tracker.new_session(mini_ontology, seed=1)
    fresh, action5 = tracker.update(
        fresh, nlu_for(mini_ontology, "get_weather", {"city": "Tehran"}),
        confirmed("get_weather"), mini_ontology)
    assert action5.kind == "complete"
    assert action5.result.state == {"city": "Tehran"}
    assert action5.result.dialogue_status == "complete"

    # event-sourcing replay across every fixture dialogue, byte-identical
    ontology = load_demo_ontology()
    corpus = load_demo_corpus(ontology)
    backend = load_demo_lexicon(ontology)
    for dialogue in corpus.dialogues:
        engine = Engine(ontology, backend, seed=3)
        rt = engine.create_session()
        for turn in dialogue.user_turns():
            engine.step(rt, turn.text)
        rebuilt = tracker.replay(ontology, rt.state.rng_seed,
                                 rt.state.session_id, rt.state.history)
        live = json.dumps(state_view(rt.state, ontology), ensure_ascii=False)
        again = json.dumps(state_view(rebuilt, ontology), ensure_ascii=False)
        assert live.encode("utf-8") == again.encode("utf-8"), dialogue.id
    ok("criterion 7: five tracker examples + byte-identical replay on 50 dialogues")


# --------------------------------------------------------------------------
# 8. Hybrid equivalence
# --------------------------------------------------------------------------


def test_criterion_8_hybrid_equivalence():
    ontology = load_demo_ontology()
    corpus = load_demo_corpus(ontology)
    backend = load_demo_lexicon(ontology)
    prompts = load_demo_prompts()

    diffs = 0
    turns = 0
    for dialogue in corpus.dialogues:
        rule_engine = Engine(ontology, backend, seed=5)
        llm_engine = Engine(ontology, backend, seed=5, tracker_mode="llm",
                            prompt_library=prompts,
                            completion=TrackerMockBackend())
        rt_rule = rule_engine.create_session()
        rt_llm = llm_engine.create_session()
        for turn in dialogue.user_turns():
            a = rule_engine.step(rt_rule, turn.text)
            b = llm_engine.step(rt_llm, turn.text)
            turns += 1
            if a.result_json != b.result_json:
                diffs += 1
    assert diffs == 0, f"{diffs} diffs over {turns} turns"
    ok(f"criterion 8: rule vs mock-LLM identical DstResults on {turns} turns (0 diffs)")


# --------------------------------------------------------------------------
# 9. SQL safety fuzz
# --------------------------------------------------------------------------


def test_criterion_9_sql_safety_fuzz(mini_ontology):
    rng = random.Random(4242)
    nasty_pool = list("'\";-)(`%\\\x00\x01\n\t‮‏") + [
        "تهران", "שלום", "DROP TABLE", "OR 1=1", "--", "/*", "*/", "؟",
    ]
    schema = mini_ontology.intent("find_restaurant")
    base_text = build_query(schema, {"city": "x", "cuisine": "y"}).text
    for _ in range(10_000):
        parts = [rng.choice(nasty_pool) for _ in range(rng.randint(1, 6))]
        value = "".join(parts) or "v"
        if value == "*":
            continue
        other = "".join(rng.choice(nasty_pool) for _ in range(2)) + "x"
        q = build_query(schema, {"city": value, "cuisine": other})
        assert q.text == base_text
        assert q.text.count("?") == len(q.params)
        assert value in q.params and other in q.params
        assert value not in q.text
    ok("criterion 9: 10000 fuzzed values never reach query text; params aligned")


# --------------------------------------------------------------------------
# 10. Service durability
# --------------------------------------------------------------------------


def test_criterion_10_service_durability(tmp_path):
    ontology = load_demo_ontology()
    corpus = load_demo_corpus(ontology)
    backend = load_demo_lexicon(ontology)
    store = SessionStore(tmp_path / "sessions")

    engine = Engine(ontology, backend, store=store, seed=8)
    snapshots = {}
    for i in range(100):
        dialogue = corpus.dialogues[i % len(corpus.dialogues)]
        texts = [t.text for t in dialogue.user_turns()]
        if i % 2 == 1 and len(texts) > 1:
            texts = texts[:max(1, len(texts) // 2)]  # killed mid-dialogue
        rt = engine.create_session()
        for text in texts:
            engine.step(rt, text)
        snapshots[rt.session_id] = {
            "state": state_view(rt.state, ontology),
            "lines": list(rt.lines),
            "transcript": list(rt.transcript),
        }
    del engine  # the "kill"

    restarted = Engine(ontology, backend, store=store, seed=8)
    for session_id, before in snapshots.items():
        rt = restarted.load_session(session_id)
        assert state_view(rt.state, ontology) == before["state"], session_id
        assert list(rt.lines) == before["lines"]
        assert list(rt.transcript) == before["transcript"]
    ok("criterion 10: 100 sessions reconstructed equal after kill/restart")
