"""Command line entry point: one subcommand per experiment kind.

    qbirthmark model-b-sweep --seed 0:10 --lambdas 0.05,0.1,0.2 --out runs/b
    qbirthmark run experiment.ini --jobs 4

Every config key has a matching flag (underscores become dashes); flags
override the file. Exit status: 0 success, 2 invalid input, 3 numerical failure.
"""

import argparse
import logging
import sys

from . import __version__
from .errors import NumericalError, OutputError, ValidationError
from .experiments import KINDS, SCHEMAS, ExperimentConfig, run
from .io import dumps_json

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("qbirthmark")


def _add_common(p, config_required=False):
    p.add_argument("--config", required=config_required, help="INI experiment file")
    p.add_argument("--seed", dest="seeds", help="seeds, e.g. 0:20 or 1,4,9")
    p.add_argument("--jobs", type=int, default=None, help="worker processes")
    p.add_argument("--out", dest="outputs", help="output directory")
    p.add_argument("-q", "--quiet", action="store_true", help="do not print the summary")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qbirthmark", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment file")
    p.add_argument("config_file")
    p.add_argument("--seed", dest="seeds")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", dest="outputs")
    p.add_argument("-q", "--quiet", action="store_true")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"{kind} experiment")
        _add_common(p)
        for param in SCHEMAS[kind]:
            p.add_argument("--" + param.name.replace("_", "-"), dest="param_" + param.name,
                           default=None, metavar="VALUE",
                           help=f"{param.help} (default: {param.default!r})")
    return parser


def config_from_args(args) -> ExperimentConfig:
    if args.command == "run":
        overrides = {"seeds": args.seeds, "outputs": args.outputs}
        return ExperimentConfig.from_file(args.config_file, overrides)
    params = {k[len("param_"):]: v for k, v in vars(args).items()
              if k.startswith("param_") and v is not None}
    overrides = dict(params, seeds=args.seeds, outputs=args.outputs)
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, overrides)
        if cfg.kind != args.command:
            raise ValidationError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
        return cfg
    return ExperimentConfig(args.command, params, args.seeds if args.seeds is not None else "0",
                            args.outputs or f"runs/{args.command}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.jobs is not None:
            cfg = cfg.replace(jobs=args.jobs)
        log.info("running %s with %d seed(s) into %s", cfg.kind, len(cfg.seeds), cfg.outputs)
        result = run(cfg)
    except (ValidationError, OutputError) as exc:
        key = getattr(exc, "key", None)
        print(f"qbirthmark: invalid input{f' [{key}]' if key else ''}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"qbirthmark: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if not args.quiet:
        sys.stdout.write(dumps_json(result.summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
