"""Command line front door, powered by Hydra.

Every option is a Hydra override, for example::

    syntag_run command=train corpus=t.conll dev=d.conll \\
        random_embeddings=true model.dim=25 model.variant=3 out=m.bin

Reports (spans, scores, gradient check tables) go to standard output and
diagnostics to standard error. Exit codes: 0 success, 1 configuration
error, 2 data or model file error, 3 numerical failure, 4 gradient check
threshold exceeded.
"""

import sys
from pathlib import Path

import hydra
from attrs import asdict, evolve
from hydra.core.hydra_config import HydraConfig
from monty.serialization import dumpfn
from omegaconf import OmegaConf
from omegaconf.errors import MissingMandatoryValue

from syntag.autodiff import NumericalError, grad_check_groups
from syntag.corpus import (
    CorpusError,
    TreeError,
    Vocabulary,
    read_corpus,
    read_embeddings,
)
from syntag.logger import log_warnings, logger, logger_setup
from syntag.metrics import format_table, summarize_runs
from syntag.pipeline import (
    ConfigError,
    ModelConfig,
    build_model,
    evaluate,
    forward_loss,
    initial_embeddings,
    predict,
    train,
)
from syntag.spans import decode_spans, format_predictions
from syntag.storage import ModelFileError, load_model, save_model
from syntag.synthetic import gradcheck_sentence
from syntag.utils import make_rng

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_GRADCHECK = 4

USAGE = {
    "train": "command=train corpus=TRAIN dev=DEV out=MODEL "
    "(embeddings=VECTORS | random_embeddings=true model.dim=D) "
    "[test=TEST runs=K workers=W progress=true model.*=...]",
    "predict": "command=predict model_file=MODEL input=CORPUS [output=SPANS]",
    "eval": "command=eval model_file=MODEL input=CORPUS",
    "gradcheck": "command=gradcheck [corpus=CORPUS threshold=T "
    "gradcheck_dim=D model.*=...]",
    "inspect": "command=inspect corpus=CORPUS [dev=DEV test=TEST "
    "embeddings=VECTORS model.dim=D]",
}


def _require(config, *keys):
    missing = [k for k in keys if config[k] is None]
    if missing:
        raise ConfigError(
            f"missing {', '.join(missing)}; usage: syntag_run "
            f"{USAGE[config.command]}"
        )


def model_config(config, **changes):
    """The :class:`ModelConfig` described by the ``model`` group."""

    kwargs = OmegaConf.to_container(config.model, resolve=True)
    kwargs.update(changes)
    try:
        return ModelConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid model configuration: {err}") from err


def requested_model_values(config, overrides):
    """The ``model.*`` values set by ``overrides``, validated, as
    ``{field: value}``; None when no override touches the model group."""

    keys = []
    for override in overrides:
        key = override.lstrip("+~").partition("=")[0]
        if key.startswith("model."):
            keys.append(key[len("model.") :])
    if not keys:
        return None
    values = asdict(model_config(config))
    return {key: values[key] for key in keys if key in values}


def _requested_model_values(config):
    if not HydraConfig.initialized():
        return None
    return requested_model_values(config, HydraConfig.get().overrides.task)


def _run_path(out, run, runs):
    out = Path(out)
    if runs == 1:
        return out
    return out.with_name(f"{out.stem}.run{run}{out.suffix}")


def cmd_train(config):
    _require(config, "corpus", "dev", "out")
    if config.embeddings is None and not config.random_embeddings:
        raise ConfigError(
            "either embeddings=PATH or random_embeddings=true is required; "
            f"usage: syntag_run {USAGE['train']}"
        )
    if config.runs < 1 or config.workers < 1:
        raise ConfigError("runs and workers must be at least 1")
    base = model_config(config)

    train_corpus = read_corpus(config.corpus)
    dev_corpus = read_corpus(config.dev)
    test_corpus = read_corpus(config.test) if config.test else None
    corpora = [train_corpus, dev_corpus] + (
        [test_corpus] if test_corpus else []
    )
    vocabulary = Vocabulary.build(*corpora)
    logger.info(
        f"Vocabulary: {vocabulary.n_words} words, "
        f"{vocabulary.n_relations} relations"
    )

    reports = []
    for run in range(config.runs):
        run_config = evolve(base, seed=base.seed + run)
        embeddings = initial_embeddings(
            run_config,
            vocabulary,
            None if config.random_embeddings else config.embeddings,
        )
        model = build_model(run_config, vocabulary, embeddings)
        model, history = train(
            model,
            train_corpus,
            dev_corpus,
            workers=config.workers,
            progress=config.progress,
        )
        path = _run_path(config.out, run, config.runs)
        save_model(model, path)
        dumpfn(history, f"{path}.history.json", indent=4)
        if test_corpus is not None:
            report = evaluate(model, test_corpus)
            reports.append(report)
            print(f"run {run} (seed {run_config.seed}): {report.format()}")

    if reports:
        label = f"{base.ablation}#{base.variant}"
        if not base.use_relation_terms:
            label += " (no relation terms)"
        print(format_table([(label, summarize_runs(reports), len(reports))]))
    return EXIT_OK


def cmd_predict(config):
    _require(config, "model_file", "input")
    model = load_model(config.model_file, _requested_model_values(config))
    corpus = read_corpus(config.input)
    spans = predict(model, corpus)
    text = format_predictions([s.sent_id for s in corpus], spans)
    if config.output is None:
        print(text, end="")
    else:
        Path(config.output).write_text(text, encoding="utf-8")
        logger.info(
            f"Spans of {len(corpus)} sentences written to {config.output}"
        )
    return EXIT_OK


def cmd_eval(config):
    _require(config, "model_file", "input")
    model = load_model(config.model_file, _requested_model_values(config))
    corpus = read_corpus(config.input)
    report = evaluate(model, corpus)
    print(report.format())
    logger.info(
        f"{report.n_matched} of {report.n_predicted} predicted spans match "
        f"{report.n_gold} gold spans"
    )
    return EXIT_OK


def cmd_gradcheck(config):
    if config.corpus is None:
        sentence = gradcheck_sentence()
    else:
        corpus = read_corpus(config.corpus)
        if not corpus:
            raise CorpusError("empty corpus", source=config.corpus)
        sentence = corpus[0]

    mc = model_config(config, dim=config.gradcheck_dim)
    vocabulary = Vocabulary.build([sentence])
    model = build_model(mc, vocabulary, initial_embeddings(mc, vocabulary))
    params = model.parameters()
    report = grad_check_groups(
        lambda: forward_loss(model, [sentence]),
        params,
        rng=make_rng(mc.seed),
    )

    breached = []
    print("parameter\tmax_rel_error\tindex\tanalytic\tnumeric")
    for name, entry in report.items():
        print(
            f"{name}\t{entry.max_error:.3e}\t{entry.worst_index}\t"
            f"{entry.analytic:.6e}\t{entry.numeric:.6e}"
        )
        if entry.max_error >= config.threshold:
            breached.append(name)

    worst = max((e.max_error for e in report.values()), default=0.0)
    print(f"max\t{worst:.3e}")
    if breached:
        logger.error(
            f"Gradient check above {config.threshold:g} for "
            f"{len(breached)} parameters: {', '.join(breached)}"
        )
        return EXIT_GRADCHECK
    logger.success(f"Gradient check passed for {len(report)} parameters")
    return EXIT_OK


def _corpus_statistics(corpus):
    tokens = sum(len(s) for s in corpus)
    spans = sum(
        len(decode_spans(s.label_ids, s.words)) for s in corpus if s.is_labeled
    )
    relations = sorted({t.relation for s in corpus for t in s.tokens})
    depth = max((s.tree.depth() for s in corpus), default=0)
    unlabeled = sum(not s.is_labeled for s in corpus)
    return {
        "sentences": len(corpus),
        "tokens": tokens,
        "aspect spans": spans,
        "unlabeled sentences": unlabeled,
        "max depth": depth,
        "relations": f"{len(relations)} ({', '.join(relations)})",
    }


def cmd_inspect(config):
    _require(config, "corpus")
    corpora = {"corpus": read_corpus(config.corpus)}
    for key in ("dev", "test"):
        if config[key] is not None:
            corpora[key] = read_corpus(config[key])

    for key, corpus in corpora.items():
        print(f"[{key}] {config[key]}")
        for stat, value in _corpus_statistics(corpus).items():
            print(f"{stat}\t{value}")

    if config.embeddings is not None:
        mc = model_config(config)
        vocabulary = Vocabulary.build(*corpora.values())
        table = read_embeddings(
            config.embeddings, vocabulary, mc.dim, make_rng(mc.seed)
        )
        coverage = 1.0 - table.oov_count / max(vocabulary.n_words - 1, 1)
        print(f"[embeddings] {config.embeddings}")
        print(f"dimension\t{table.d}")
        print(f"vocabulary words\t{vocabulary.n_words - 1}")
        print(f"out of vocabulary\t{table.oov_count}")
        print(f"coverage\t{100 * coverage:.1f}%")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "inspect": cmd_inspect,
}


@log_warnings
def run(config):
    """Runs the requested command and maps failures to exit codes."""

    try:
        logger_setup(config.logging, config.paths.output_dir)
        command = COMMANDS.get(config.command)
        if command is None:
            raise ConfigError(
                f"unknown command {config.command!r}, expected one of "
                f"{', '.join(COMMANDS)}"
            )
        return command(config)
    except (ConfigError, MissingMandatoryValue) as err:
        logger.error(str(err))
        return EXIT_CONFIG
    except (CorpusError, TreeError, ModelFileError, OSError) as err:
        logger.error(str(err))
        return EXIT_DATA
    except NumericalError as err:
        logger.error(f"numerical failure: {err}")
        return EXIT_NUMERIC


@hydra.main(version_base="1.3", config_path="configs", config_name="core.yaml")
def hydra_main(config):
    """Executes a command given the configuration Hydra composed.

    Parameters
    ----------
    config : omegaconf.DictConfig
    """

    code = run(config)
    if code != EXIT_OK:
        sys.exit(code)


def entrypoint():
    hydra_main()
