"""Text file formats: price paths, labels, tabulated functions, panels, ledgers, configs, corpora."""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .estimator import HmmSpec
from .simkit import STEP_SECONDS, PricePath

PRICE_FMT = "{:.17g}"


def _rows(src) -> tuple[list[str], list[list[str]]]:
    with open(os.fspath(src), newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{src}: empty file") from None
        rows = [r for r in reader if r]
    return header, rows


def _expect(header, wanted, src):
    if header[:len(wanted)] != wanted:
        raise ValidationError(f"{src}: expected header starting {','.join(wanted)}, got {','.join(header)}")


def write_path_csv(path: PricePath, dest) -> None:
    t = np.rint(path.times).astype(np.int64)
    rid = path.regime_ids
    with open(os.fspath(dest), "w") as fh:
        fh.write("t,price,regime\n")
        for k in range(len(path)):
            reg = "" if rid is None else str(int(rid[k]))
            fh.write(f"{t[k]},{PRICE_FMT.format(path.prices[k])},{reg}\n")


def read_path_csv(src) -> PricePath:
    header, rows = _rows(src)
    _expect(header, ["t", "price"], src)
    if not rows:
        raise ValidationError(f"{src}: no data rows")
    try:
        t = np.array([float(r[0]) for r in rows])
        prices = np.array([float(r[1]) for r in rows])
        regs = [r[2].strip() if len(r) > 2 else "" for r in rows]
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{src}: malformed row ({exc})") from None
    if any(regs) and not all(regs):
        raise ValidationError(f"{src}: regime column is partially filled")
    regime_ids = np.array([int(x) for x in regs]) if all(regs) else None
    dt = (t[-1] - t[0]) / (t.size - 1) if t.size > 1 else STEP_SECONDS
    return PricePath(float(t[0]), float(dt), prices, regime_ids)


def write_labels_csv(times, labels, dest) -> None:
    times = np.rint(np.asarray(times)).astype(np.int64)
    labels = np.asarray(labels)
    if times.shape != labels.shape:
        raise ValidationError("times and labels must align")
    with open(os.fspath(dest), "w") as fh:
        fh.write("t,label\n")
        fh.writelines(f"{a},{int(b)}\n" for a, b in zip(times, labels))


def read_labels_csv(src) -> tuple[np.ndarray, np.ndarray]:
    header, rows = _rows(src)
    _expect(header, ["t", "label"], src)
    try:
        t = np.array([float(r[0]) for r in rows])
        y = np.array([int(r[1]) for r in rows], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{src}: malformed row ({exc})") from None
    return t, y


def read_tabulated_csv(src) -> tuple[np.ndarray, np.ndarray]:
    header, rows = _rows(src)
    _expect(header, ["x", "b"], src)
    try:
        return np.array([float(r[0]) for r in rows]), np.array([float(r[1]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{src}: malformed row ({exc})") from None


def write_panel_csv(panel, dest) -> None:
    from .backtest import INDEX
    syms = panel.symbols
    cols = [panel.assets[s] for s in syms] + [panel.index]
    t = np.rint(panel.times).astype(np.int64)
    with open(os.fspath(dest), "w") as fh:
        fh.write(",".join(["t", *syms, INDEX]) + "\n")
        for k in range(len(panel)):
            fh.write(",".join([str(t[k])] + [PRICE_FMT.format(c[k]) for c in cols]) + "\n")


def read_panel_csv(src):
    from .backtest import INDEX, MarketPanel
    header, rows = _rows(src)
    if len(header) < 2 or header[0] != "t" or header[-1] != INDEX:
        raise ValidationError(f"{src}: panel header must be t,<symbols...>,{INDEX}")
    try:
        data = np.array([[float(x) for x in r] for r in rows])
    except ValueError as exc:
        raise ValidationError(f"{src}: malformed or missing value ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValidationError(f"{src}: ragged rows")
    assets = {s: data[:, i + 1] for i, s in enumerate(header[1:-1])}
    return MarketPanel(data[:, 0], assets, data[:, -1])


def read_signals_csv(src) -> dict[str, np.ndarray]:
    header, rows = _rows(src)
    if not header or header[0] != "t":
        raise ValidationError(f"{src}: signals header must be t,<symbols...>")
    try:
        data = np.array([[int(float(x)) for x in r] for r in rows], dtype=np.int64)
    except ValueError as exc:
        raise ValidationError(f"{src}: malformed value ({exc})") from None
    return {s: data[:, i + 1] for i, s in enumerate(header[1:])}


def write_ledger_csv(ledger, dest) -> None:
    t = np.rint(ledger.times).astype(np.int64)
    with open(os.fspath(dest), "w") as fh:
        fh.write("t,portfolio_value,gross_short,gross_long,n_bubble_assets\n")
        for k in range(t.size):
            fh.write(f"{t[k]},{PRICE_FMT.format(ledger.value[k])},{PRICE_FMT.format(ledger.gross_short[k])},"
                     f"{PRICE_FMT.format(ledger.gross_long[k])},{int(ledger.n_bubble_assets[k])}\n")


def write_train_log(history, dest) -> None:
    with open(os.fspath(dest), "w") as fh:
        fh.write("epoch,loss,accuracy\n")
        fh.writelines(f"{r['epoch']},{r['loss']:.17g},{r['accuracy']:.17g}\n" for r in history)


# ---------------------------------------------------------------- key = value configs

def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; duplicate keys are rejected."""
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k or k in out:
            raise ValidationError(f"{source}:{n}: empty or duplicate key {k!r}")
        out[k] = v
    return out


def read_kv(src) -> dict[str, str]:
    return parse_kv(Path(src).read_text(), str(src))


def hmm_from_kv(cfg: dict[str, str]) -> HmmSpec:
    """``transition``/``emission`` hold 4 row-major entries, ``initial`` holds 2."""
    unknown = set(cfg) - {"transition", "emission", "initial"}
    if unknown:
        raise ValidationError(f"unknown HMM keys: {sorted(unknown)}")
    kw = {}
    for key, shape in (("transition", (2, 2)), ("emission", (2, 2)), ("initial", (2,))):
        if key in cfg:
            try:
                vals = np.array([float(x) for x in cfg[key].replace(",", " ").split()])
            except ValueError:
                raise ValidationError(f"HMM {key}: non-numeric entry") from None
            if vals.size != int(np.prod(shape)):
                raise ValidationError(f"HMM {key} needs {int(np.prod(shape))} entries")
            kw[key] = vals.reshape(shape)
    return HmmSpec(**kw)


def hmm_to_kv(spec: HmmSpec) -> str:
    def fmt(a):
        return " ".join(repr(float(x)) for x in np.ravel(a))
    return (f"transition = {fmt(spec.transition)}\nemission = {fmt(spec.emission)}\n"
            f"initial = {fmt(spec.initial)}\n")


# ---------------------------------------------------------------- corpora

MANIFEST = "manifest.json"


def write_corpus(directory, pairs, spec) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for k, (path, labels) in enumerate(pairs):
        write_path_csv(path, d / f"path_{k}.csv")
        write_labels_csv(path.times, labels, d / f"labels_{k}.csv")
    (d / MANIFEST).write_text(json.dumps({"dataset": spec.to_dict()}, indent=2, sort_keys=True) + "\n")


def read_corpus(directory):
    from .datagen import DatasetSpec
    from .evalkit import Corpus
    d = Path(directory)
    mf = d / MANIFEST
    if not mf.is_file():
        raise ValidationError(f"{d}: no {MANIFEST}")
    try:
        spec = DatasetSpec.from_dict(json.loads(mf.read_text())["dataset"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{mf}: invalid manifest ({exc})") from None
    items = []
    for k in range(spec.n_paths):
        pf, lf = d / f"path_{k}.csv", d / f"labels_{k}.csv"
        if not pf.is_file() or not lf.is_file():
            raise ValidationError(f"{d}: manifest lists {spec.n_paths} paths but path/labels {k} is missing")
        path = read_path_csv(pf)
        # restore the exact step length, which integer timestamps may round
        path.dt = spec.dt
        _, labels = read_labels_csv(lf)
        items.append((path, labels))
    return Corpus(items, spec)
