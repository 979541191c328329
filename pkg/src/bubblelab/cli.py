"""Command-line driver: ``bubblelab <subcommand> [flags]``.

Every subcommand accepts ``--config FILE`` with flat ``key = value`` lines
whose keys are the long flag names (dashes or underscores). Command-line
flags override the file. Outputs go to ``--out`` together with
``run_config.json``, which records the resolved settings and their digest.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import DomainError, ValidationError

log = logging.getLogger("bubblelab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _default_seed() -> int:
    raw = os.environ.get("BUBBLELAB_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"BUBBLELAB_SEED must be an integer, got {raw!r}") from None


def _common(p: argparse.ArgumentParser, seed: int) -> None:
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=seed, help="master seed (default: $BUBBLELAB_SEED or 0)")
    p.add_argument("--config", help="key = value file; command-line flags take precedence")
    p.add_argument("--threads", type=int, default=1, help="cap on worker threads inside modules")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _sim_flags(p):
    p.add_argument("--gamma0", type=_floats, default=[0.15], help="volatility scale per state")
    p.add_argument("--gamma1", type=_floats, default=[0.9], help="power exponent per state")
    p.add_argument("--years", type=float, default=3.0, help="simulated trading years")
    p.add_argument("--dt", type=float, default=120.0, help="step length in seconds")
    p.add_argument("--s0", type=float, default=1.0, help="initial price")


def build_parser(seed: int = 0) -> _Parser:
    root = _Parser(prog="bubblelab", description="Bubble detection via strict local martingales.")
    sub = root.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True
    add = sub.add_parser

    def add_parser(name, **kw):
        p = add(name, **kw)
        _common(p, seed)
        return p
    sub.add_parser = add_parser

    p = sub.add_parser("simulate", help="simulate price paths (PricePath CSV)")
    _sim_flags(p)
    p.add_argument("--persistence", type=float, default=0.999,
                   help="diagonal transition probability when several states are given")
    p.add_argument("--paths", type=int, default=1, help="number of paths")

    p = sub.add_parser("datagen", help="generate a labelled corpus directory")
    _sim_flags(p)
    p.set_defaults(gamma1=[0.9, 1.1], years=1.0)
    p.add_argument("--paths", type=int, default=20)
    p.add_argument("--persistence", type=_floats, default=[0.995, 0.9999], help="lo,hi persistence range")
    p.add_argument("--redraw", type=int, default=21 * 195, help="steps between transition matrix redraws")
    p.add_argument("--stream", type=int, default=0, help="first random substream")

    p = sub.add_parser("train", help="train the network on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--chunk-len", type=int, default=512)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--clip", type=float, default=1.0)

    p = sub.add_parser("classify", help="label a price path with a trained network")
    p.add_argument("--model", required=True)
    p.add_argument("--path", required=True, help="PricePath CSV")

    p = sub.add_parser("estimate", help="rolling parametric estimate (raw labels)")
    p.add_argument("--path", required=True)
    p.add_argument("--window-len", type=int, default=21 * 195)
    p.add_argument("--stride", type=int, default=195)
    p.add_argument("--grid", type=_floats, default=[0.51, 2.0, 150], help="lo,hi,steps")

    p = sub.add_parser("smooth", help="HMM-smooth a label CSV")
    p.add_argument("--labels", required=True)
    p.add_argument("--hmm", help="HMM key = value file (defaults used when absent)")

    p = sub.add_parser("compare", help="network vs parametric estimator on a held-out corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--window-len", type=int, default=21 * 195)
    p.add_argument("--stride", type=int, default=195)
    p.add_argument("--hmm")

    p = sub.add_parser("backtest", help="long-short backtest on a panel CSV or a synthetic market")
    p.add_argument("--panel", help="panel CSV t,<symbols>,INDEX")
    p.add_argument("--signals", help="signals CSV t,<symbols> (0 = bubble)")
    p.add_argument("--model", help="classify each asset with this network instead of --signals")
    p.add_argument("--synthetic", type=int, default=0, help="simulate this many assets instead of --panel")
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--correlation", type=float, default=0.3)
    p.add_argument("--years", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=120.0)
    p.add_argument("--stride", type=int, default=195)
    p.add_argument("--cap", type=float, default=100.0, help="dollars shorted per bubble asset")
    p.add_argument("--cost", type=float, default=0.0)
    p.add_argument("--oracle", action="store_true", help="trade the synthetic market's true regime labels")
    p.add_argument("--random", action="store_true", help="trade coin-flip signals (null check)")
    p.add_argument("--gamma0", type=_floats, default=[0.15], help="synthetic market: volatility scale per state")
    p.add_argument("--gamma1", type=_floats, default=[0.9], help="synthetic market: power exponent per state")
    p.add_argument("--persistence", type=float, default=0.999)
    p.add_argument("--jump-k", type=float, default=float("inf"), help="jump filter threshold in MADs")

    p = sub.add_parser("doubling", help="terminal wealth of the doubling strategy")
    p.add_argument("--rounds", type=int, default=4)
    p.add_argument("--paths", type=int, default=100_000)
    return root


def _apply_config(parser: _Parser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = io.read_kv(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in dests:
            raise ValidationError(f"{args.config}: unknown key {key!r} for {args.command}")
        action = dests[dest]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = value.lower() in ("1", "true", "yes")
        else:
            try:
                defaults[dest] = action.type(value) if action.type else value
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ValidationError(f"{args.config}: bad value for {key}: {exc}") from None
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def _write_run_config(out: Path, args) -> None:
    settings = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    settings = {k: (v if not isinstance(v, float) or np.isfinite(v) else str(v)) for k, v in settings.items()}
    (out / "run_config.json").write_text(
        json.dumps({"settings": settings, "digest": _digest(settings)}, indent=2, sort_keys=True) + "\n")


def _states(gamma0, gamma1):
    from .simkit import PowerLawParams
    if len(gamma0) == 1:
        gamma0 = gamma0 * len(gamma1)
    if len(gamma0) != len(gamma1):
        raise ValidationError("--gamma0 needs one value or one per --gamma1 value")
    return [PowerLawParams(a, b) for a, b in zip(gamma0, gamma1)]


# ---------------------------------------------------------------- subcommands

def cmd_simulate(args, out: Path):
    from .simkit import RegimeChainSpec, RngSpec, seconds_to_years, simulate_ensemble, steps_for
    states = _states(args.gamma0, args.gamma1)
    k = len(states)
    if k == 1:
        spec = RegimeChainSpec.single(states[0])
    else:
        p = args.persistence
        m = np.full((k, k), (1 - p) / (k - 1))
        np.fill_diagonal(m, p)
        spec = RegimeChainSpec.homogeneous(states, m)
    n = steps_for(args.years, args.dt)
    paths = simulate_ensemble(spec, args.s0, n, seconds_to_years(args.dt), args.paths,
                              RngSpec(args.seed), threads=args.threads)
    yield
    if len(paths) == 1:
        io.write_path_csv(paths[0], out / "path.csv")
    else:
        for i, p in enumerate(paths):
            io.write_path_csv(p, out / f"path_{i}.csv")


def cmd_datagen(args, out: Path):
    from .datagen import DatasetSpec, generate_dataset
    from .simkit import RngSpec, steps_for
    if len(args.persistence) == 1:
        args.persistence = args.persistence * 2
    if len(args.persistence) != 2:
        raise ValidationError("--persistence takes lo,hi")
    spec = DatasetSpec(args.paths, steps_for(args.years, args.dt), args.dt, tuple(_states(args.gamma0, args.gamma1)),
                       tuple(args.persistence), args.redraw, RngSpec(args.seed, args.stream), args.s0)
    pairs = generate_dataset(spec, threads=args.threads)
    yield
    io.write_corpus(out, pairs, spec)


def cmd_train(args, out: Path):
    from .nnet import FeatureStats, TrainConfig, dataset_from_paths, save_checkpoint, train
    from .simkit import RngSpec
    corpus = io.read_corpus(args.corpus)
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, chunk_len=args.chunk_len,
                      grad_clip_norm=args.clip, rng=RngSpec(args.seed), hidden_dim=args.hidden,
                      batch_size=args.batch_size)
    stats = FeatureStats.fit([p.prices for p in corpus.paths])
    data = dataset_from_paths(corpus.items, stats)
    result = train(data, cfg, stats=stats, metadata={"train_dataset": corpus.manifest.to_dict()})
    yield
    save_checkpoint(result.model, out / "model.blnn")
    io.write_train_log(result.history, out / "train_log.csv")


def cmd_classify(args, out: Path):
    from .nnet import classify_sequence, load_checkpoint
    model = load_checkpoint(args.model)
    path = io.read_path_csv(args.path)
    labels, probs = classify_sequence(model, path)
    yield
    io.write_labels_csv(path.times, labels, out / "labels.csv")
    t = np.rint(path.times).astype(np.int64)
    with open(out / "probabilities.csv", "w") as fh:
        fh.write("t,p_bubble,p_true_martingale\n")
        fh.writelines(f"{a},{b:.17g},{c:.17g}\n" for a, (b, c) in zip(t, probs))


def cmd_estimate(args, out: Path):
    from .estimator import labels_from_fits, rolling_fit
    if len(args.grid) != 3:
        raise ValidationError("--grid takes lo,hi,steps")
    grid = (args.grid[0], args.grid[1], int(args.grid[2]))
    path = io.read_path_csv(args.path)
    fits = rolling_fit(path, args.window_len, args.stride, grid, threads=args.threads)
    labels = labels_from_fits(fits, len(path))
    yield
    io.write_labels_csv(path.times, labels, out / "raw_labels.csv")
    with open(out / "window_fits.csv", "w") as fh:
        fh.write("start,end,gamma0,gamma1,objective,degenerate\n")
        for f in fits:
            fh.write(f"{f.window[0]},{f.window[1]},{f.gamma0:.17g},{f.gamma1:.17g},"
                     f"{f.objective_value:.17g},{int(f.degenerate)}\n")


def cmd_smooth(args, out: Path):
    from .estimator import HmmSpec, hmm_smooth
    spec = io.hmm_from_kv(io.read_kv(args.hmm)) if args.hmm else HmmSpec()
    t, raw = io.read_labels_csv(args.labels)
    smoothed = hmm_smooth(raw, spec)
    yield
    io.write_labels_csv(t, smoothed, out / "smoothed_labels.csv")


def cmd_compare(args, out: Path):
    from .estimator import EstimatorConfig, HmmSpec
    from .evalkit import compare_methods
    from .nnet import load_checkpoint
    corpus = io.read_corpus(args.corpus)
    model = load_checkpoint(args.model)
    hmm = io.hmm_from_kv(io.read_kv(args.hmm)) if args.hmm else HmmSpec()
    cfg = EstimatorConfig(window_len=args.window_len, stride=args.stride, hmm=hmm)
    result = compare_methods(corpus, model, cfg, threads=args.threads)
    yield
    (out / "report.json").write_text(result.report_text())


def cmd_backtest(args, out: Path):
    from .backtest import jump_truncate, run_backtest, simulate_market_p
    from .simkit import PricePath, RegimeChainSpec, RngSpec, seconds_to_years
    if args.synthetic:
        states = _states(args.gamma0, args.gamma1)
        k = len(states)
        m = np.full((k, k), (1 - args.persistence) / max(k - 1, 1))
        np.fill_diagonal(m, args.persistence if k > 1 else 1.0)
        panel = simulate_market_p(args.synthetic, args.drift, RegimeChainSpec.homogeneous(states, m),
                                  args.correlation, args.years, seconds_to_years(args.dt), RngSpec(args.seed))
    elif args.panel:
        panel = io.read_panel_csv(args.panel)
    else:
        raise ValidationError("backtest needs --panel or --synthetic")
    if sum(x is not None and x is not False for x in (args.signals, args.model, args.oracle or None,
                                                       args.random or None)) != 1:
        raise ValidationError("choose exactly one of --signals, --model, --oracle, --random")
    if args.model:
        from .nnet import classify_sequence, load_checkpoint
        model = load_checkpoint(args.model)
        dt = float(np.median(np.diff(panel.times)))
        signals = {}
        for s in panel.symbols:
            # detect on the jump-filtered series, trade on the original
            path = PricePath(float(panel.times[0]), dt, panel.assets[s])
            signals[s] = classify_sequence(model, jump_truncate(path, args.jump_k))[0]
    elif args.signals:
        signals = io.read_signals_csv(args.signals)
    elif args.oracle:
        if panel.truth is None:
            raise ValidationError("--oracle needs a --synthetic market")
        signals = panel.truth
    else:
        gen = RngSpec(args.seed).generator(7)
        signals = {s: gen.integers(0, 2, len(panel)) for s in panel.symbols}
    ledger = run_backtest(panel, signals, args.stride, args.cap, args.cost)
    yield
    io.write_ledger_csv(ledger, out / "ledger.csv")
    if args.synthetic:
        io.write_panel_csv(panel, out / "panel.csv")


def cmd_doubling(args, out: Path):
    from .simkit import RngSpec, doubling_summary, simulate_doubling
    wealth = simulate_doubling(args.rounds, args.paths, RngSpec(args.seed))
    summary = doubling_summary(wealth, args.rounds)
    yield
    with open(out / "doubling_histogram.csv", "w") as fh:
        fh.write("wealth,count\n")
        fh.writelines(f"{w},{c}\n" for w, c in summary["histogram"].items())
    s = {k: v for k, v in summary.items() if k != "histogram"}
    (out / "doubling_summary.json").write_text(json.dumps(s, indent=2, sort_keys=True) + "\n")


COMMANDS = {
    "simulate": cmd_simulate, "datagen": cmd_datagen, "train": cmd_train, "classify": cmd_classify,
    "estimate": cmd_estimate, "smooth": cmd_smooth, "compare": cmd_compare, "backtest": cmd_backtest,
    "doubling": cmd_doubling,
}


def dispatch(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser(_default_seed())
        args = _apply_config(parser, argv)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (UsageError, ValidationError) as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        out = Path(args.out)
        # each command validates and computes, yields, then writes
        steps = COMMANDS[args.command](args, out)
        next(steps)
        out.mkdir(parents=True, exist_ok=True)
        for _ in steps:
            pass
        _write_run_config(out, args)
    except (ValidationError, DomainError, FileNotFoundError) as exc:
        print(f"bubblelab {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime-failure exit code
        log.debug("runtime failure", exc_info=True)
        print(f"bubblelab {args.command}: runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
