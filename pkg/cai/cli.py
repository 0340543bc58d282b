#!/usr/bin/env python3
"""
Command Line Interface
Runs the whole pipeline or any single stage, the benchmark and the sweeps.

Commands:
- ingest / classify / extract / validate / dedup   one stage, reading the previous stage's files
- run                                              all stages end to end
- bench                                            score record files against the golden set
- sweep chunk-size | k-shot | llm-params           sensitivity sweeps
- check-config                                     validate settings and credentials

Exit status: 0 on success, 2 on a configuration error, 1 on any other failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import colorlog

from cai.bench import (compare_runs, evaluate, frame_to_rows, load_golden, read_jsonl,
                       sweep_chunk_size, sweep_kshot, sweep_llm_params)
from cai.config import PipelineConfig
from cai.config_check import ConfigValidator
from cai.errors import CAIError, ConfigError, SweepAborted
from cai.pipeline import CommitmentPipeline, read_documents

logger = logging.getLogger('cai')

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: str = 'INFO', log_file: Optional[str] = None):
    """Coloured console output plus an optional plain log file."""
    root = logging.getLogger()
    root.handlers.clear()
    root.setLevel(getattr(logging, str(level).upper(), logging.INFO))

    console = colorlog.StreamHandler()
    console.setFormatter(colorlog.ColoredFormatter(
        '%(log_color)s' + LOG_FORMAT,
        log_colors={'DEBUG': 'cyan', 'INFO': 'green', 'WARNING': 'yellow',
                    'ERROR': 'red', 'CRITICAL': 'red,bg_white'}))
    root.addHandler(console)

    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(file_handler)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON config file (nested or dotted keys)')
    common.add_argument('--input', help='document file or directory')
    common.add_argument('--output', help='output directory (paths.output)')
    common.add_argument('--backend-llm', choices=('mock', 'remote'))
    common.add_argument('--backend-relevance', choices=('lexical', 'remote'))
    common.add_argument('--backend-embedding', choices=('baseline', 'remote'))
    common.add_argument('--workers', type=int, help='documents processed in parallel')
    common.add_argument('--seed', type=int, help='seed for sweeps and the LLM')
    common.add_argument('--log-level', help='DEBUG, INFO, WARNING or ERROR')
    common.add_argument('--log-file', help='also write the log to this file')
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog='cai', description='Extract, validate and benchmark corporate carbon commitments.')
    commands = parser.add_subparsers(dest='command', required=True)

    commands.add_parser('ingest', parents=[common], help='load, clean and chunk documents')
    commands.add_parser('classify', parents=[common], help='label chunks and build contexts')
    commands.add_parser('extract', parents=[common], help='prompt the LLM over contexts')
    commands.add_parser('validate', parents=[common], help='normalize and score records')
    for name, text in (('dedup', 'consolidate scored records'), ('run', 'all stages')):
        sub = commands.add_parser(name, parents=[common], help=text)
        sub.add_argument('--emissions-only', action='store_true',
                         help='drop non-emissions commitments from the final records')

    bench = commands.add_parser('bench', parents=[common], help='score against the golden set')
    bench.add_argument('--golden', help='golden dataset (paths.golden)')
    bench.add_argument('--records', nargs='+',
                       help='record files to score (default: <output>/records.jsonl)')

    sweep = commands.add_parser('sweep', help='sensitivity sweeps')
    sweeps = sweep.add_subparsers(dest='sweep', required=True)
    chunk = sweeps.add_parser('chunk-size', parents=[common], help='relevant-chunk recall per size')
    chunk.add_argument('--golden', help='golden dataset (paths.golden)')
    chunk.add_argument('--sizes', type=int, nargs='+', help='window sizes in words')
    kshot = sweeps.add_parser('k-shot', parents=[common], help='recall per number of examples')
    kshot.add_argument('--k', type=int, nargs='+', help='k values (bench.k_range)')
    kshot.add_argument('--samples', type=int, help='cross-validation samples (bench.cv_samples)')
    sweeps.add_parser('llm-params', parents=[common], help='recall per sampling preset')

    commands.add_parser('check-config', parents=[common], help='validate settings')
    return parser


def overrides_from(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        'paths.output': args.output,
        'llm.backend': args.backend_llm,
        'relevance.backend': args.backend_relevance,
        'embedding.backend': args.backend_embedding,
        'pipeline.workers': args.workers,
        'bench.seed': args.seed,
        'llm.seed': args.seed,
        'logging.level': args.log_level,
        'logging.file': args.log_file,
        'paths.golden': getattr(args, 'golden', None),
        'bench.chunk_sizes': getattr(args, 'sizes', None),
        'bench.k_range': getattr(args, 'k', None),
        'bench.cv_samples': getattr(args, 'samples', None),
    }


def _require_input(args: argparse.Namespace) -> str:
    if not args.input:
        raise ConfigError(f"{args.command} needs --input")
    return args.input


def _write_table(config: PipelineConfig, name: str, rows: List[Dict[str, Any]], text: str):
    path = Path(config['paths.output']) / f"{name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(rows, indent=2, ensure_ascii=False) + '\n', encoding='utf-8')
    print(text)
    logger.info(f"Wrote {path}")


def cmd_bench(args: argparse.Namespace, config: PipelineConfig) -> int:
    golden = load_golden(config['paths.golden'])
    record_files = args.records or [str(Path(config['paths.output']) / 'records.jsonl')]
    runs = {path: read_jsonl(path) for path in record_files}
    out = Path(config['paths.output'])
    out.mkdir(parents=True, exist_ok=True)
    if len(runs) == 1:
        report = evaluate(golden, next(iter(runs.values())))
        (out / 'bench.json').write_text(json.dumps(report.to_dict(), indent=2) + '\n',
                                        encoding='utf-8')
        print(report.to_text())
        return 0
    table = compare_runs(golden, runs)
    _write_table(config, 'bench_compare', frame_to_rows(table),
                 table.to_string(index=False, na_rep='-'))
    return 0


def cmd_sweep(args: argparse.Namespace, config: PipelineConfig) -> int:
    pipeline = CommitmentPipeline(config)
    name = f"sweep_{args.sweep.replace('-', '_')}"
    try:
        if args.sweep == 'chunk-size':
            documents = read_documents(_require_input(args), config)
            table = sweep_chunk_size(documents, load_golden(config['paths.golden']),
                                     pipeline.relevance_backend, config['bench.chunk_sizes'])
        elif args.sweep == 'k-shot':
            extractor = pipeline.extractor
            table = sweep_kshot(extractor.store, extractor, config['bench.k_range'],
                                config['bench.cv_samples'], config['bench.train_fraction'],
                                config['bench.seed'])
        else:
            extractor = pipeline.extractor
            table = sweep_llm_params(extractor.store, extractor, k=config['prompt.k_shots'],
                                     cv_samples=config['bench.cv_samples'],
                                     train_fraction=config['bench.train_fraction'],
                                     seed=config['bench.seed'])
    except SweepAborted as e:
        _write_table(config, f"{name}_partial", e.partial, f"partial results: {len(e.partial)} rows")
        raise
    _write_table(config, name, frame_to_rows(table), table.to_string(index=False, na_rep='-'))
    return 0


def dispatch(args: argparse.Namespace, config: PipelineConfig) -> int:
    if args.command == 'check-config':
        return 0 if ConfigValidator(args.config, overrides_from(args)).run_full_validation() else 1
    if args.command == 'bench':
        return cmd_bench(args, config)
    if args.command == 'sweep':
        return cmd_sweep(args, config)

    pipeline = CommitmentPipeline(config)
    if args.command == 'run':
        summary = pipeline.run(_require_input(args), emissions_only=args.emissions_only)
        print(summary.describe())
    elif args.command == 'ingest':
        pipeline.ingest(_require_input(args))
    elif args.command == 'classify':
        pipeline.classify()
    elif args.command == 'extract':
        pipeline.extract()
    elif args.command == 'validate':
        pipeline.validate()
    elif args.command == 'dedup':
        pipeline.dedup(emissions_only=args.emissions_only)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = PipelineConfig.load(args.config, overrides_from(args))
    except ConfigError as e:
        setup_logging(args.log_level or 'INFO', args.log_file)
        logger.error(e.tagged())
        print(e.tagged(), file=sys.stderr)
        return 2
    setup_logging(config['logging.level'], config['logging.file'])

    try:
        return dispatch(args, config)
    except ConfigError as e:
        print(e.tagged(), file=sys.stderr)
        return 2
    except CAIError as e:
        logger.error(e.tagged())
        print(e.tagged(), file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
