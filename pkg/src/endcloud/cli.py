"""Operator command line.

Exit codes: 0 success, 1 validation problem (bad flags, bad config, bad
input files), 2 runtime failure. Human-readable tables go to standard
output; machine output goes to files named by ``--out``. All randomness
flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .backends import generate
from .config import (
    EccConfig,
    config_path_from_env,
    default_config,
    load_config,
    serialize_config,
)
from .corpus import (
    clean_text,
    flatten_corpus,
    load_corpus,
    question_of,
    read_pairs,
    write_pairs,
)
from .errors import ConfigError, ConfigValidationError, EccError
from .evolution import TrainingExample, TrainingQueue, example_to_json, resolve_trainer
from .gateway import Gateway
from .promptkit import PromptTemplate, build_fewshot_prompt, render_messages
from .simharness import (
    eval_grid,
    load_grid,
    published_grid_path,
    run_replay_simulation,
)

FIXTURE_ALIASES = {"table5": published_grid_path}


@dataclass(frozen=True)
class CommandOutcome:
    exit_code: int
    summary: str


def _plural(n: int, word: str) -> str:
    return f"{n} {word}" + ("" if n == 1 else "s")


def _load_cfg(args: argparse.Namespace) -> EccConfig:
    path = getattr(args, "config", None) or config_path_from_env()
    return load_config(path) if path else default_config()


def _template_for(cfg: EccConfig, prompt_pairs: Optional[str]) -> PromptTemplate:
    if prompt_pairs:
        pairs = read_pairs(prompt_pairs)
        return build_fewshot_prompt(pairs, cfg.prompt_n, cfg.prompt_preamble)
    return PromptTemplate(preamble=cfg.prompt_preamble)


# -- subcommands ---------------------------------------------------------------


def _cmd_serve(args: argparse.Namespace) -> CommandOutcome:
    import uvicorn

    from .api import create_app

    cfg = _load_cfg(args)
    gateway = Gateway(
        cfg,
        template=_template_for(cfg, args.prompt_pairs),
        trainer=resolve_trainer(args.trainer),
        rng=random.Random(args.seed),
        log_path=args.log,
        queue_path=args.queue,
    )
    app = create_app(gateway)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return CommandOutcome(0, "server stopped")


def _cmd_ingest(args: argparse.Namespace) -> CommandOutcome:
    sessions, stats = load_corpus(args.input, args.format)
    pairs = flatten_corpus(sessions)
    if args.out:
        write_pairs(pairs, args.out)
    summary = f"{_plural(stats.sessions, 'session')}, {_plural(len(pairs), 'pair')}"
    if stats.dropped:
        summary += f" ({_plural(stats.dropped, 'record')} dropped)"
    print(summary)
    if args.stats:
        print(json.dumps(stats.as_dict(), ensure_ascii=False, indent=2))
    return CommandOutcome(0, summary)


def _cmd_gen_dataset(args: argparse.Namespace) -> CommandOutcome:
    cfg = _load_cfg(args)
    pairs = read_pairs(args.pairs)
    if args.limit is not None:
        pairs = pairs[: args.limit]
    template = _template_for(cfg, args.prompt_pairs)
    seen: set[tuple[str, str]] = set()
    written = skipped = 0
    with Path(args.out).open("w", encoding="utf-8") as fh:
        for pair in pairs:
            query = question_of(pair)
            messages = render_messages(template, query, cfg.generation)
            text = clean_text(generate(cfg.cloud_backend, messages, cfg.generation).text)
            if not text or (query, text) in seen:
                skipped += 1
                continue
            seen.add((query, text))
            example = TrainingExample(query=query, output=text, origin="cloud_pseudo_label")
            fh.write(example_to_json(example) + "\n")
            written += 1
    summary = f"wrote {_plural(written, 'example')} to {args.out}"
    if skipped:
        summary += f" ({skipped} skipped)"
    print(summary)
    return CommandOutcome(0, summary)


def _parse_variant(raw: str) -> tuple[str, str]:
    label, sep, path = raw.partition("=")
    if not sep or not label or not path:
        raise ConfigError(f"--variant must look like label=fixture.jsonl, got {raw!r}")
    return label, path


def _cmd_eval_grid(args: argparse.Namespace) -> CommandOutcome:
    if args.fixture:
        alias = FIXTURE_ALIASES.get(args.fixture)
        grid = load_grid(alias() if alias else args.fixture)
    else:
        if not (args.inputs and args.variant and args.cloud):
            raise ConfigError(
                "eval-grid needs either --fixture or all of --inputs, --variant, --cloud"
            )
        cfg = _load_cfg(args)
        inputs = [
            line.strip()
            for line in Path(args.inputs).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        variants = [
            (label, cfg.end_backend.as_replay(path, model_name=label))
            for label, path in (_parse_variant(v) for v in args.variant)
        ]
        cloud = cfg.cloud_backend.as_replay(args.cloud)
        grid = eval_grid(
            inputs,
            variants,
            cloud,
            cfg.eval,
            template=_template_for(cfg, args.prompt_pairs),
            params=cfg.generation,
        )
    print(grid.render())
    if args.out:
        Path(args.out).write_text(grid.to_tsv(), encoding="utf-8")
    winners = grid.winners()
    summary = f"{len(grid.rows)} rows, {len(grid.columns)} variants"
    return CommandOutcome(0, f"{summary}; winners: {sorted(set().union(*winners.values()))}")


def _cmd_simulate(args: argparse.Namespace) -> CommandOutcome:
    cfg = _load_cfg(args)
    pairs = read_pairs(args.pairs)
    result = run_replay_simulation(
        pairs,
        cfg,
        template=_template_for(cfg, args.prompt_pairs),
        trainer=resolve_trainer(args.trainer),
        log_path=args.log,
        queue_path=args.queue,
    )
    if result.live != result.replayed:
        raise EccError(
            f"event log replay disagrees with live metrics: {result.replayed} vs {result.live}"
        )
    print(result.report.render())
    if args.out:
        Path(args.out).write_text(result.report.to_json() + "\n", encoding="utf-8")
    return CommandOutcome(
        0, f"escalation_rate {result.report.escalation_rate:.3f} over {result.report.queries} queries"
    )


def _cmd_flush_queue(args: argparse.Namespace) -> CommandOutcome:
    cfg = _load_cfg(args)
    queue = TrainingQueue(args.queue)
    trainer = resolve_trainer(args.trainer)
    batch = args.batch_size or cfg.queue_batch_size
    total = 0
    while True:
        result = queue.drain(batch, trainer, cfg.training)
        total += result.dispatched
        if result.dispatched == 0 or args.one_batch:
            break
    summary = f"dispatched {_plural(total, 'example')}, depth now {queue.depth()}"
    print(summary)
    return CommandOutcome(0, summary)


def _cmd_validate_config(args: argparse.Namespace) -> CommandOutcome:
    cfg = _load_cfg(args)
    if args.show:
        print(serialize_config(cfg), end="")
    summary = "config ok"
    print(summary)
    return CommandOutcome(0, summary)


# -- parser and dispatch --------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (key = value lines)")
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness")

    parser = argparse.ArgumentParser(
        prog="endcloud",
        description="End-cloud collaborative serving: gateway, evaluation, and training loop.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP gateway")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--log", help="event log path (default from config)")
    p.add_argument("--queue", help="training queue path (default from config)")
    p.add_argument("--trainer", default="noop", help='"noop" or "file-sink:<path>"')
    p.add_argument("--prompt-pairs", help="pair file supplying few-shot examples")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("ingest", parents=[common], help="corpus file -> pair file + stats")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="jsonl_generic", choices=("jsonl_generic", "ecd", "jddc"))
    p.add_argument("--out", help="write extracted pairs here")
    p.add_argument("--stats", action="store_true", help="print full ingest stats as JSON")
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser(
        "gen-dataset", parents=[common], help="pairs + cloud backend -> training file"
    )
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--prompt-pairs", help="pair file supplying few-shot examples")
    p.set_defaults(fn=_cmd_gen_dataset)

    p = sub.add_parser("eval-grid", parents=[common], help="run or analyze a score grid")
    p.add_argument("--fixture", help='grid file to analyze, or the bundled alias "table5"')
    p.add_argument("--inputs", help="file with one query per line")
    p.add_argument("--variant", action="append", help="label=replay-fixture.jsonl (repeatable)")
    p.add_argument("--cloud", help="cloud replay fixture")
    p.add_argument("--prompt-pairs", help="pair file supplying few-shot examples")
    p.add_argument("--out", help="write the grid as TSV here")
    p.set_defaults(fn=_cmd_eval_grid)

    p = sub.add_parser("simulate", parents=[common], help="replay pairs through the full loop")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", help="write the report as JSON here")
    p.add_argument("--log", help="event log path (default from config)")
    p.add_argument("--queue", help="training queue path (default from config)")
    p.add_argument("--trainer", default="noop", help='"noop" or "file-sink:<path>"')
    p.add_argument("--prompt-pairs", help="pair file supplying few-shot examples")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("flush-queue", parents=[common], help="drain queued examples to a trainer")
    p.add_argument("--queue", required=True)
    p.add_argument("--trainer", default="noop", help='"noop" or "file-sink:<path>"')
    p.add_argument("--batch-size", type=int)
    p.add_argument("--one-batch", action="store_true", help="drain a single batch only")
    p.set_defaults(fn=_cmd_flush_queue)

    p = sub.add_parser("validate-config", parents=[common], help="check a config file")
    p.add_argument("--show", action="store_true", help="print the effective config")
    p.set_defaults(fn=_cmd_validate_config)

    return parser


def dispatch(argv: list[str]) -> CommandOutcome:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse prints usage itself; normalize exit codes to the 0/1 scheme
        return CommandOutcome(0 if exc.code == 0 else 1, "usage")
    try:
        return args.fn(args)
    except ConfigValidationError as exc:
        for violation in exc.violations:
            print(f"error: {violation}", file=sys.stderr)
        return CommandOutcome(exc.exit_code, str(exc))
    except EccError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CommandOutcome(exc.exit_code, str(exc))


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]).exit_code)


if __name__ == "__main__":
    main()
