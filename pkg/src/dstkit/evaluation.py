"""K-fold evaluation of a full pipeline over an annotated corpus.

Each test dialogue is replayed turn by turn through schedule -> NLU ->
validator -> tracker; the per-turn tracker results are scored against the
gold annotations and aggregated per fold, then averaged (unweighted) across
folds. The ``slot_noise_p`` knob corrupts one predicted slot value per turn
with the given probability before scoring, which calibrates how strictly
JGA punishes partial mistakes without poisoning later turns.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import Corpus, split_kfold
from .engine import Engine, GoldEchoBackend
from .llm_bridge import CompletionBackend, PromptTemplate
from .metrics import MetricReport, TurnScore, benchmark_vector, mean_report, summarize
from .nlu import NluBackend
from .ontology import Ontology
from .querygen import SqlQuery
from .tracker import DstResult, dont_care_slots
from .validator import GbtModel, RuleThresholds


class EvalError(Exception):
    pass


@dataclass
class PipelineConfig:
    nlu_mode: str = "gold"  # gold | backend
    nlu_backend: NluBackend | None = None
    validator_mode: str = "rule"
    thresholds: RuleThresholds = field(default_factory=RuleThresholds)
    gbt_model: GbtModel | None = None
    tracker_mode: str = "rule"
    prompt_library: list[PromptTemplate] | None = None
    completion: CompletionBackend | None = None
    slot_noise_p: float = 0.0
    noise_seed: int = 0
    seed: int = 0
    # Optional external human judgments, keyed by (dialogue id, user-turn
    # index); never computed, only read. Present entries become the fifth
    # benchmark component.
    human_annotations: dict[tuple[str, int], bool] | None = None


_MISS = DstResult(intent="", state={}, query=SqlQuery("", ()), followup=None,
                  dialogue_status="in_progress")


def evaluate_pipeline(
    corpus: Corpus,
    ontology: Ontology,
    config: PipelineConfig,
    k: int,
    seed: int,
) -> MetricReport:
    folds = split_kfold(corpus, k, seed)
    noise = random.Random(config.noise_seed)
    per_fold = []
    for train_part, test_part in folds:
        scores: list[TurnScore] = []
        for dialogue in test_part.dialogues:
            scores.extend(_replay_dialogue(dialogue, ontology, config, noise))
        if not scores:
            raise EvalError("fold produced no scored turns")
        per_fold.append(summarize(scores))
    return mean_report(per_fold)


def _replay_dialogue(dialogue, ontology, config: PipelineConfig,
                     noise: random.Random) -> list[TurnScore]:
    if config.nlu_mode == "gold":
        backend: NluBackend = GoldEchoBackend()
    elif config.nlu_backend is not None:
        backend = config.nlu_backend
    else:
        raise EvalError(f"nlu mode {config.nlu_mode!r} needs a backend")

    engine = Engine(
        ontology,
        backend,
        validator_mode=config.validator_mode,
        thresholds=config.thresholds,
        gbt_model=config.gbt_model,
        tracker_mode=config.tracker_mode,
        prompt_library=config.prompt_library,
        completion=config.completion,
        seed=config.seed,
    )
    rt = engine.create_session()

    scores = []
    prev_turn = None
    for index, turn in enumerate(dialogue.user_turns()):
        try:
            if isinstance(backend, GoldEchoBackend):
                backend.set_turn(turn, prev_turn)
            outcome = engine.step(rt, turn.text)
        except Exception as e:
            raise EvalError(
                f"pipeline failed at dialogue {dialogue.id!r} user turn {index}: {e}"
            ) from e
        if turn.annotated:
            prev_turn = turn
            pred = outcome.result if outcome.result is not None else _MISS
            pred_dc = dont_care_slots(rt.state)
            pred_state = dict(pred.state)
            if config.slot_noise_p > 0 and noise.random() < config.slot_noise_p:
                pred_state = _corrupt(pred_state, turn.gold_state, noise)
            human_ok = None
            if config.human_annotations is not None:
                human_ok = config.human_annotations.get((dialogue.id, index))
            vector = benchmark_vector(
                turn,
                DstResult(intent=pred.intent, state=pred_state, query=pred.query,
                          followup=pred.followup, dialogue_status=pred.dialogue_status),
                pred_dont_care=pred_dc,
                human_ok=human_ok,
            )
            scores.append(TurnScore(
                dialogue_id=dialogue.id,
                vector=vector,
                gold_intent=turn.gold_intent,
                pred_intent=pred.intent,
                gold_state=dict(turn.gold_state),
                pred_state=pred_state,
            ))
    return scores


def _corrupt(pred_state: dict[str, str], gold_state: dict[str, str],
             noise: random.Random) -> dict[str, str]:
    candidates = sorted(gold_state) or sorted(pred_state)
    if not candidates:
        return pred_state
    slot = noise.choice(candidates)
    out = dict(pred_state)
    out[slot] = out.get(slot, "") + "†corrupted"
    return out
