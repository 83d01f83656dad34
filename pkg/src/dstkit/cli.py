"""Command-line interface.

Subcommands: serve (HTTP service), chat (terminal REPL), eval (k-fold
evaluation with report files), train-validator (GBT training from a
corpus), validate-corpus, gen-fixture (corpus synthesis).

Exit codes: 0 success, 1 data error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import bundled, fixturegen, reporting
from .corpus import CorpusError, load_corpus, serialize_corpus
from .engine import Engine
from .evaluation import EvalError, PipelineConfig, evaluate_pipeline
from .gbt import GbtModel
from .llm_bridge import (
    CannedCompletionBackend,
    CompletionEndpoint,
    FixtureRetriever,
    HttpCompletionClient,
    TrackerMockBackend,
    load_prompt_library,
)
from .nlu import RemoteNluBackend, build_lexicon_backend
from .ontology import OntologyError, parse_ontology
from .persistence import SessionStore
from .validator import GbtParams, train_gbt, tune_thresholds

USAGE_EXIT = 2
DATA_EXIT = 1


class ConfigError(Exception):
    pass


@dataclass
class EngineConfig:
    ontology: str
    lexicon: str | None = None
    prompts: str | None = None
    validator_mode: str = "rule"
    validator_model: str | None = None
    tracker_mode: str = "rule"
    completion_url: str | None = None
    completion_mock: str | None = None
    nlu_mode: str = "lexicon"
    nlu_url: str | None = None
    retrieval: str | None = None
    seed: int = 0
    persistence: str | None = None

    ENV_PREFIX = "DST_"

    @classmethod
    def load(cls, path: str | None) -> EngineConfig:
        doc: dict = {}
        if path:
            try:
                doc = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config {path}: {e}") from e
        for key in list(cls.__dataclass_fields__):
            env = os.environ.get(cls.ENV_PREFIX + key.upper())
            if env is not None:
                doc[key] = int(env) if key == "seed" else env
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config field {sorted(unknown)[0]!r}")
        if "ontology" not in doc:
            raise ConfigError("config needs an 'ontology' path")
        return cls(**doc)


def build_engine(config: EngineConfig, store: SessionStore | None = None) -> Engine:
    try:
        ontology = parse_ontology(Path(config.ontology).read_text(encoding="utf-8"))
    except (OSError, OntologyError) as e:
        raise ConfigError(f"ontology: {e}") from e

    if config.nlu_mode == "lexicon":
        if not config.lexicon:
            raise ConfigError("lexicon nlu mode needs a 'lexicon' path")
        nlu_backend = build_lexicon_backend(
            Path(config.lexicon).read_text(encoding="utf-8"), ontology)
    elif config.nlu_mode == "remote":
        if not config.nlu_url:
            raise ConfigError("remote nlu mode needs 'nlu_url'")
        nlu_backend = RemoteNluBackend(config.nlu_url)
    else:
        raise ConfigError(f"unknown nlu mode {config.nlu_mode!r}")

    gbt_model = None
    if config.validator_mode == "gbt":
        if not config.validator_model:
            raise ConfigError("gbt validator mode needs 'validator_model'")
        gbt_model = GbtModel.from_json(
            Path(config.validator_model).read_text(encoding="utf-8"))

    prompt_library = None
    completion = None
    if config.tracker_mode == "llm":
        if not config.prompts:
            raise ConfigError("llm tracker mode needs a 'prompts' path")
        prompt_library = load_prompt_library(
            Path(config.prompts).read_text(encoding="utf-8"))
        if config.completion_url:
            completion = HttpCompletionClient(CompletionEndpoint(
                base_url=config.completion_url, api_key_ref="DST_API_KEY"))
        elif config.completion_mock:
            completion = CannedCompletionBackend.from_file(config.completion_mock)
        else:
            completion = TrackerMockBackend()

    retriever = None
    if config.retrieval:
        retriever = FixtureRetriever.from_file(config.retrieval)

    if store is None and config.persistence:
        store = SessionStore(config.persistence)

    return Engine(
        ontology,
        nlu_backend,
        validator_mode=config.validator_mode,
        gbt_model=gbt_model,
        tracker_mode=config.tracker_mode,
        prompt_library=prompt_library,
        completion=completion,
        retriever=retriever,
        store=store,
        seed=config.seed,
    )


def _add_engine_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="engine config JSON (env DST_* overrides)")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dstkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the HTTP chat service")
    _add_engine_args(p_serve)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8700)

    p_chat = sub.add_parser("chat", help="interactive terminal chat")
    _add_engine_args(p_chat)
    p_chat.add_argument("--show-state", action="store_true")

    p_eval = sub.add_parser("eval", help="k-fold pipeline evaluation")
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--ontology")
    p_eval.add_argument("--lexicon")
    p_eval.add_argument("--nlu", choices=("gold", "lexicon"), default="gold")
    p_eval.add_argument("--tracker", choices=("rule", "llm-mock"), default="rule")
    p_eval.add_argument("--k", type=int, default=5)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--noise", type=float, default=0.0,
                        help="per-turn slot corruption probability")
    p_eval.add_argument("--noise-seed", type=int, default=0)
    p_eval.add_argument("--report", help="write <path>.json/.txt/.png reports")
    p_eval.add_argument("--no-figures", action="store_true")
    p_eval.add_argument("--human-annotations",
                        help='JSON map "dialogue_id:turn_index" -> bool, used as '
                             "the optional fifth benchmark component")

    p_train = sub.add_parser("train-validator", help="train the GBT validator")
    p_train.add_argument("--corpus", required=True)
    p_train.add_argument("--ontology")
    p_train.add_argument("--lexicon")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--n-trees", type=int, default=40)
    p_train.add_argument("--max-depth", type=int, default=3)
    p_train.add_argument("--learning-rate", type=float, default=0.3)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--label-noise", type=float, default=0.05,
                         help="fraction of rule-mode labels randomly flipped")

    p_validate = sub.add_parser("validate-corpus", help="check corpus annotations")
    p_validate.add_argument("--corpus", required=True)
    p_validate.add_argument("--ontology")

    p_gen = sub.add_parser("gen-fixture", help="synthesize an annotated corpus")
    p_gen.add_argument("--dialogues", type=int, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--ontology")
    p_gen.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return USAGE_EXIT
    except (CorpusError, OntologyError, EvalError) as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_EXIT


def _load_ontology_arg(path: str | None):
    if path:
        return parse_ontology(Path(path).read_text(encoding="utf-8"))
    return bundled.load_demo_ontology()


def _load_corpus_arg(path: str, ontology):
    return load_corpus(Path(path).read_text(encoding="utf-8"), ontology)


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "serve":
        return _cmd_serve(args)
    if args.command == "chat":
        return _cmd_chat(args)
    if args.command == "eval":
        return _cmd_eval(args)
    if args.command == "train-validator":
        return _cmd_train(args)
    if args.command == "validate-corpus":
        return _cmd_validate(args)
    if args.command == "gen-fixture":
        return _cmd_gen(args)
    raise AssertionError(args.command)


def _default_config() -> EngineConfig:
    return EngineConfig(
        ontology=str(bundled.fixture_path("ontology.json")),
        lexicon=str(bundled.fixture_path("lexicon.json")),
        prompts=str(bundled.fixture_path("prompts.json")),
        retrieval=str(bundled.fixture_path("retrieval.json")),
    )


def _engine_from_args(args: argparse.Namespace) -> Engine:
    if args.config:
        config = EngineConfig.load(args.config)
    else:
        config = EngineConfig.load(None) if os.environ.get("DST_ONTOLOGY") \
            else _default_config()
    return build_engine(config)


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    engine = _engine_from_args(args)
    if engine.store is None:
        print("warning: no persistence path configured; sessions are "
              "memory-only", file=sys.stderr)
    app = create_app(engine)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except SystemExit as e:
        return int(e.code or 0)
    return 0


def _cmd_chat(args: argparse.Namespace) -> int:
    engine = _engine_from_args(args)
    rt = engine.create_session()
    print(f"session {rt.session_id}; empty line to quit")
    while True:
        try:
            text = input("you> ").strip()
        except EOFError:
            break
        if not text:
            break
        outcome = engine.step(rt, text)
        print(f"bot> {outcome.reply}")
        if args.show_state and outcome.result:
            print(f"     state: {json.dumps(outcome.result.state, ensure_ascii=False)}")
            print(f"     sql:   {outcome.result.query.text}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    ontology = _load_ontology_arg(args.ontology)
    corpus = _load_corpus_arg(args.corpus, ontology)

    config = PipelineConfig(seed=args.seed, slot_noise_p=args.noise,
                            noise_seed=args.noise_seed)
    if args.nlu == "lexicon":
        lexicon_path = args.lexicon or str(bundled.fixture_path("lexicon.json"))
        config.nlu_mode = "backend"
        config.nlu_backend = build_lexicon_backend(
            Path(lexicon_path).read_text(encoding="utf-8"), ontology)
    if args.tracker == "llm-mock":
        config.tracker_mode = "llm"
        config.prompt_library = bundled.load_demo_prompts()
        config.completion = TrackerMockBackend()
    if args.human_annotations:
        raw = json.loads(Path(args.human_annotations).read_text(encoding="utf-8"))
        config.human_annotations = {
            (key.rsplit(":", 1)[0], int(key.rsplit(":", 1)[1])): bool(value)
            for key, value in raw.items()
        }

    report = evaluate_pipeline(corpus, ontology, config, k=args.k, seed=args.seed)
    for key in reporting.HEADLINE_KEYS:
        print(f"{key.upper()}={getattr(report, key):.3f}")
    if args.report:
        written = reporting.write_report(report, args.report,
                                         figures=not args.no_figures)
        for path in written:
            print(f"wrote {path}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    import random

    from .nlu import build_schedule, predict
    from .validator import classify_rule, update_feature_trace

    ontology = _load_ontology_arg(args.ontology)
    corpus = _load_corpus_arg(args.corpus, ontology)
    lexicon_path = args.lexicon or str(bundled.fixture_path("lexicon.json"))
    backend = build_lexicon_backend(
        Path(lexicon_path).read_text(encoding="utf-8"), ontology)

    rng = random.Random(args.seed)
    dataset = []
    for dialogue in corpus.dialogues:
        trace = None
        lines: list[tuple[str, str | None]] = []
        for turn in dialogue.user_turns():
            schedule = build_schedule(lines, turn.text)
            nlu_out = predict(backend, ontology, schedule)
            features, trace = update_feature_trace(trace, nlu_out)
            label = classify_rule(features).label
            if rng.random() < args.label_noise:
                label = rng.choice([c for c in ("confirmed", "ambiguous", "unclear")
                                    if c != label])
            dataset.append((features, label))
            lines.append((turn.text, nlu_out.context_intent))
    if not dataset:
        print("error: corpus yielded no training samples", file=sys.stderr)
        return DATA_EXIT

    rng.shuffle(dataset)
    split = max(1, int(len(dataset) * 0.8))
    train_part, dev_part = dataset[:split], dataset[split:] or dataset[:1]
    model = train_gbt(train_part, GbtParams(
        n_trees=args.n_trees, max_depth=args.max_depth,
        learning_rate=args.learning_rate, seed=args.seed))
    model.decision_thresholds = tune_thresholds(model, dev_part)
    Path(args.out).write_text(model.to_json(), encoding="utf-8")
    print(f"trained on {len(train_part)} samples "
          f"({len(model.trees)} rounds); wrote {args.out}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    ontology = _load_ontology_arg(args.ontology)
    corpus = _load_corpus_arg(args.corpus, ontology)
    turns = sum(len(d.turns) for d in corpus.dialogues)
    print(f"ok: {len(corpus.dialogues)} dialogues, {turns} turns")
    return 0


def _cmd_gen(args: argparse.Namespace) -> int:
    ontology = _load_ontology_arg(args.ontology)
    corpus = fixturegen.gen_corpus(ontology, args.dialogues, args.seed)
    Path(args.out).write_text(serialize_corpus(corpus), encoding="utf-8")
    print(f"wrote {args.out}: {len(corpus.dialogues)} dialogues")
    return 0


if __name__ == "__main__":
    sys.exit(main())
