"""Command-line entry point.

Exit codes: 0 on success, 1 when an input file fails to parse or
validate, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import evaluation as ev
from . import fusion, io, solver, sweep
from .errors import ConfigError, CtxSolveError
from .model import Hyperparams
from .synthgen import GenConfig, generate

log = logging.getLogger("ctxsolve")

EXIT_OK, EXIT_INVALID, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(n):
    def parse(text):
        vals = tuple(float(v) for v in text.split(","))
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers")
        return vals

    return parse


def _emit(obj, path):
    if path:
        io.save_json(path, obj)
    else:
        json.dump(obj, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")


# -- subcommands --------------------------------------------------------------


def cmd_gen(args):
    cfg = sweep.SWEEP_CONFIG if args.preset == "sweep" else GenConfig()
    changes = {"seed": args.seed}
    if args.identities is not None:
        changes["num_identities"] = args.identities
    if args.events is not None:
        changes["num_events"] = args.events
    if args.signal is not None:
        changes["signal_strength"] = args.signal
    if args.visibility is not None:
        changes["visibility_rate"] = args.visibility
    if args.fill is not None:
        changes["occlusion_fill"] = args.fill
    c, truth = generate(cfg.replace(**changes))
    io.save_collection(c, args.collection)
    io.save_truth(truth, args.truth)
    log.info("wrote %d photos, %d instances", c.num_photos, c.num_instances)


def _training_labels(c, truth_path):
    if truth_path:
        return io.load_truth(truth_path).labels
    return c.labels


def cmd_train_fusion(args):
    c = io.load_collection(args.collection)
    labels = _training_labels(c, args.truth)
    known = labels >= 0
    if args.kind == "uniform":
        weights, acc = ev.grid_search_uniform(c, labels, step=args.step)
        log.info("uniform weights %s, validation accuracy %.4f", weights.tolist(), acc)
        io.save_model(weights, args.out)
        return
    feats = c.features[known]
    pairs = fusion.make_pairs(labels[known], seed=args.seed)
    model = fusion.FusionModel.init(c.features.shape[2], seed=args.seed)
    config = fusion.TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    model, history = fusion.train_fusion(model, feats, pairs, config)
    log.info("loss %.6f -> %.6f over %d epochs", history[0], history[-1], args.epochs)
    io.save_model(model, args.out)


def cmd_score(args):
    c = io.load_collection(args.collection)
    model = io.load_model(args.model)
    if isinstance(model, fusion.FusionModel):
        S = fusion.score_matrix(model, c)
    else:
        S = fusion.uniform_score_matrix(model, c)
    io.save_scores(S, args.out)


def _hyperparams(args) -> Hyperparams:
    alpha, beta = args.alpha, args.beta
    if args.mode in ("visual", "ranet"):
        alpha = beta = 0.0
    elif args.mode == "ranet-p":
        alpha = 0.0
    return Hyperparams(
        alpha=alpha,
        beta=beta,
        num_events=args.events,
        nu_min=args.nu_min,
        nu_max=args.nu_max,
        max_iterations=args.max_iters,
    )


def _solve(c, S, settings):
    h = Hyperparams(**settings["hyperparams"])
    return solver.run(c, S, h, seed=settings["seed"])


def cmd_solve(args):
    c = io.load_collection(args.collection)
    S = io.load_scores(args.scores)
    if S.shape[0] != c.num_instances:
        raise ConfigError(f"score matrix covers {S.shape[0]} instances, collection has {c.num_instances}")
    h = _hyperparams(args)
    settings = {"mode": args.mode, "seed": args.seed, "hyperparams": h.__dict__.copy()}
    res = _solve(c, S, settings)
    q = c.query_ids
    io.save_predictions(args.out, res.identities.labels[q], res.events.assignment, q, settings)
    if args.trace:
        io.save_trace(args.trace, res.trace.records)
    log.info("converged=%s after %d iterations", res.trace.converged, res.trace.num_iterations)


def cmd_eval(args):
    pred = io.load_predictions(args.predictions)
    truth = io.load_truth(args.truth)
    c = io.load_collection(args.collection)
    if [int(q) for q in c.query_ids] != pred["query"]:
        raise ConfigError("predictions were made on a different gallery/query split")
    predict = None
    if args.swap:
        if not args.scores:
            raise ConfigError("--swap reruns the solver and needs --scores")
        S = io.load_scores(args.scores)

        def predict(cs):
            return _solve(cs, S, pred["settings"]).identities.labels

    report = ev.evaluate(c, pred["labels"], truth.labels, swap=args.swap, predict=predict, trace=args.trace_ref)
    report.methods[pred["settings"]["mode"]] = report.accuracy_mean
    out = report.as_dict()
    out["event_recovery"] = ev.event_recovery(pred["events"], truth.events)
    _emit(out, args.out)


def cmd_sweep(args):
    table = sweep.occlusion_sweep(sweep.SWEEP_CONFIG, args.rates, range(args.seeds))
    _emit({"columns": ["rate", *sweep.COLUMNS], "rows": table}, args.out)


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctxsolve", description="Joint person identification with social context.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-iteration progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic collection and its ground truth")
    g.add_argument("--collection", required=True)
    g.add_argument("--truth", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--preset", choices=("default", "sweep"), default="default")
    g.add_argument("--identities", type=int)
    g.add_argument("--events", type=int)
    g.add_argument("--signal", type=_floats(4), help="per-region signal strength, e.g. 0.9,0.6,0.5,0.4")
    g.add_argument("--visibility", type=_floats(4), help="per-region visibility rate")
    g.add_argument("--fill", choices=("zero", "blank"))
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train-fusion", help="fit region weights on a labelled collection")
    t.add_argument("--collection", required=True)
    t.add_argument("--truth", help="ground truth sidecar; defaults to the gallery labels")
    t.add_argument("--out", required=True)
    t.add_argument("--kind", choices=("ranet", "uniform"), default="ranet")
    t.add_argument("--epochs", type=int, default=40)
    t.add_argument("--lr", type=float, default=0.5)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--step", type=float, default=0.1, help="simplex lattice step for --kind uniform")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train_fusion)

    s = sub.add_parser("score", help="compute the pairwise score matrix")
    s.add_argument("--collection", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_score)

    v = sub.add_parser("solve", help="run joint inference")
    v.add_argument("--collection", required=True)
    v.add_argument("--scores", required=True)
    v.add_argument("--out", required=True, help="predictions file")
    v.add_argument("--trace", help="per-iteration trace file (JSON lines)")
    v.add_argument("--alpha", type=float, default=0.05)
    v.add_argument("--beta", type=float, default=0.01)
    v.add_argument("--events", type=int, default=300)
    v.add_argument("--nu-min", type=int, default=1)
    v.add_argument("--nu-max", type=int)
    v.add_argument("--max-iters", type=int, default=10)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--mode", choices=ev.MODES, default="ranet-p-e")
    v.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--predictions", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--collection", required=True)
    e.add_argument("--scores", help="score matrix, needed by --swap")
    e.add_argument("--swap", action="store_true", help="also solve with gallery and query exchanged")
    e.add_argument("--trace-ref", help="path of the trace file to cite in the report")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="ablation accuracy as face visibility drops")
    w.add_argument("--rates", type=float, nargs="*", default=[0.2, 0.3, 0.4])
    w.add_argument("--seeds", type=int, default=5)
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except CtxSolveError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
