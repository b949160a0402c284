"""Command-line entry point.

Every subcommand resolves its settings as defaults < ``--config`` file <
flags, runs, and writes the resolved settings to ``<out>/runspec.conf``.
Passing that file back with ``--config`` (and a new ``--out``) reproduces
the run's artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import rng as rngs
from .data import (DataError, SparseMatrix, ValueRange, load_id_map, read_any, save_id_map,
                   save_matrix, split)
from .evaluate import score, wilcoxon_signed_rank
from .graph import GraphError, build_graph, high_confidence_set
from .model import DivergenceError, clamp_activation, load_model, predict_many, save_model
from .synthetic import low_rank
from .training import TrainConfig, train_glfa

log = logging.getLogger("glfa")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_MISSING, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4, 5

_DEFAULT_CONFIG = TrainConfig()

# key -> (type, default); flags are the keys with '_' replaced by '-'
KEYS = {
    "input": (Path, None),
    "train": (Path, None),
    "test": (Path, None),
    "model": (Path, None),
    "pairs": (Path, None),
    "id_map": (Path, None),
    "format": (str, "auto"),
    "has_header": (bool, False),
    "fraction": (float, 0.2),
    "seed": (int, 0),
    "f": (int, _DEFAULT_CONFIG.f),
    "eta": (float, _DEFAULT_CONFIG.eta),
    "lambda": (float, _DEFAULT_CONFIG.lam),
    "alpha": (float, _DEFAULT_CONFIG.alpha),
    "n_rounds": (int, _DEFAULT_CONFIG.n_rounds),
    "max_order": (int, 2),
    "max_epochs": (int, _DEFAULT_CONFIG.max_epochs_per_round),
    "tol": (float, _DEFAULT_CONFIG.tol),
    "patience": (int, _DEFAULT_CONFIG.patience),
    "val_fraction": (float, _DEFAULT_CONFIG.val_fraction),
    "warm_start": (bool, _DEFAULT_CONFIG.warm_start),
    "glfa": (bool, False),
    "r_min": (float, None),
    "r_max": (float, None),
    "clamp": (bool, False),
    "tsv": (bool, False),
    "seeds": (int, 5),
    "rows": (int, 300),
    "cols": (int, 200),
    "rank": (int, 5),
    "density": (float, 0.3),
    "noise": (float, 0.1),
    "ratings": (bool, False),
}

_TRAIN_KEYS = ["f", "eta", "lambda", "alpha", "n_rounds", "max_order", "max_epochs", "tol", "patience",
               "val_fraction", "warm_start", "seed", "r_min", "r_max"]

COMMANDS = {
    "split": ["input", "format", "has_header", "fraction", "seed"],
    "hoi-stats": ["train", "format", "max_order"],
    "train": ["train", "format", "glfa", *_TRAIN_KEYS],
    "evaluate": ["model", "test", "train", "format", "tsv"],
    "predict": ["model", "pairs", "id_map", "clamp"],
    "bench": ["input", "format", "has_header", "fraction", "seeds", *_TRAIN_KEYS],
    "synth": ["rows", "cols", "rank", "density", "noise", "ratings", "seed"],
}

REQUIRED = {
    "split": ["input"],
    "hoi-stats": ["train"],
    "train": ["train"],
    "evaluate": ["model", "test"],
    "predict": ["model", "pairs"],
    "bench": ["input"],
    "synth": [],
}

_HELP = {
    "input": "raw rating file or canonical TSV",
    "train": "training matrix",
    "test": "test matrix",
    "model": "model file written by 'train'",
    "pairs": "file of 'u<TAB>i' pairs to predict",
    "id_map": "id map written by 'split'; pairs are then external tokens",
    "format": "auto, canonical, movielens, tsv or csv",
    "max_order": "HOI order cap (0 = unbounded)",
    "n_rounds": "number of recurrent training rounds",
    "glfa": "train the graph-incorporated model (default: basic model)",
    "clamp": "pass predictions through the clamping activation",
    "seeds": "number of seeds to benchmark",
}


class UsageError(Exception):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _convert(key: str, raw: str):
    typ, _ = KEYS[key]
    if raw.strip().lower() == "none":
        return None
    try:
        if typ is bool:
            return _parse_bool(raw)
        return typ(raw.strip())
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment line."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{line_no}: expected key = value")
            key, raw = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "command":
                out[key] = raw
                continue
            if key not in KEYS:
                raise UsageError(f"{path}:{line_no}: unknown key {key!r}")
            out[key] = _convert(key, raw)
    return out


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_config(path, command: str, settings: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"command = {command}\n")
        for key in COMMANDS[command]:
            fh.write(f"{key} = {_format_value(settings[key])}\n")


def resolve(command: str, args: argparse.Namespace) -> dict:
    settings = {k: KEYS[k][1] for k in COMMANDS[command]}
    if args.config is not None:
        cfg = read_config(args.config)
        if cfg.pop("command", command) != command:
            raise UsageError(f"{args.config} was written for a different subcommand")
        for key, value in cfg.items():
            if key in settings:
                settings[key] = value
    for key in COMMANDS[command]:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    for key in REQUIRED[command]:
        if settings[key] is None:
            raise UsageError(f"{command}: --{key.replace('_', '-')} is required")
    for key, value in settings.items():
        if KEYS[key][0] is Path and value is not None:
            settings[key] = Path(value).resolve()
    return settings


def train_config(s: dict) -> TrainConfig:
    range_override = None
    if s["r_min"] is not None or s["r_max"] is not None:
        if s["r_min"] is None or s["r_max"] is None:
            raise UsageError("--r-min and --r-max must be given together")
        range_override = ValueRange(s["r_min"], s["r_max"])
    return TrainConfig(
        f=s["f"], eta=s["eta"], lam=s["lambda"], alpha=s["alpha"], n_rounds=s["n_rounds"],
        max_epochs_per_round=s["max_epochs"], tol=s["tol"], patience=s["patience"],
        val_fraction=s["val_fraction"], seed=s["seed"], max_order=s["max_order"] or None,
        warm_start=s["warm_start"], range_override=range_override,
    )


def _read(path, s) -> SparseMatrix:
    return read_any(path, s.get("format", "auto"), s.get("has_header", False))


def cmd_split(s: dict, out: Path) -> None:
    matrix = _read(s["input"], s)
    train, test = split(matrix, s["fraction"], rngs.stream(s["seed"], "split"))
    save_matrix(train, out / "train.tsv")
    save_matrix(test, out / "test.tsv")
    if matrix.row_tokens is not None:
        save_id_map(matrix, out / "id_map.tsv")
    print(f"{matrix.n_rows} x {matrix.n_cols}, {matrix.nnz} entries (density {100 * matrix.density:.2f}%)")
    print(f"train {train.nnz}, test {test.nnz}")


def cmd_hoi_stats(s: dict, out: Path) -> None:
    train = _read(s["train"], s)
    hoi = high_confidence_set(build_graph(train), s["max_order"] or None)
    with open(out / "hoi.tsv", "w", encoding="utf-8") as fh:
        fh.writelines(f"{u}\t{i}\t{p}\n" for u, i, p in zip(hoi.u.tolist(), hoi.i.tolist(), hoi.order.tolist()))
    orders = sorted(set(hoi.high_by_order) | set(hoi.low_by_order))
    unobserved = train.n_rows * train.n_cols - train.nnz
    lines = [f"high_confidence\t{len(hoi)}", f"low_confidence\t{hoi.n_low}",
             f"unreached\t{hoi.n_unreached}", f"observed\t{train.nnz}"]
    for p in orders:
        hi, lo = hoi.high_by_order.get(p, 0), hoi.low_by_order.get(p, 0)
        lines.append(f"order_{p}\thigh={hi}\tlow={lo}\tcoverage={(hi + lo) / unobserved!r}")
    text = "\n".join(lines) + "\n"
    (out / "hoi_summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")


def cmd_train(s: dict, out: Path) -> None:
    train = _read(s["train"], s)
    config = train_config(s)
    if not s["glfa"]:
        if config.n_rounds != 1:
            log.info("basic model: ignoring n_rounds=%d (use --glfa for recurrent training)", config.n_rounds)
        config = replace(config, n_rounds=1)
    model, report, pool = train_glfa(train, config)
    save_model(model, out / "model.txt")
    (out / "report.tsv").write_text(report.as_tsv(), encoding="utf-8")
    if s["glfa"]:
        with open(out / "lambda.tsv", "w", encoding="utf-8") as fh:
            fh.write("u\ti\tvalue\tround\n")
            fh.writelines(f"{u}\t{i}\t{v!r}\t{n}\n" for u, i, v, n in zip(
                pool.rows.tolist(), pool.cols.tolist(), pool.values.tolist(), pool.round_added.tolist()))
    print(report.as_tsv(), end="")


def cmd_evaluate(s: dict, out: Path) -> None:
    model = load_model(s["model"])
    test = _read(s["test"], s)
    train = _read(s["train"], s) if s["train"] is not None else None
    fallback = train.mean() if train is not None else 0.5 * (model.range.r_min + model.range.r_max)
    card = score(model, test, fallback, train)
    (out / "scorecard.txt").write_text(card.as_text(), encoding="utf-8")
    if s["tsv"]:
        (out / "scorecard.tsv").write_text(card.as_tsv(), encoding="utf-8")
    print(card.as_text(), end="")


def _read_pairs(path, id_map) -> tuple[np.ndarray, np.ndarray, list[str]]:
    lookup = None
    if id_map is not None:
        users, items = load_id_map(id_map)
        lookup = ({t: k for k, t in enumerate(users)}, {t: k for k, t in enumerate(items)})
    rows, cols, labels = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise DataError(f"{path}:{line_no}: expected 'u<TAB>i'")
            try:
                if lookup:
                    u, i = lookup[0][parts[0]], lookup[1][parts[1]]
                else:
                    u, i = int(parts[0]), int(parts[1])
            except (KeyError, ValueError):
                raise DataError(f"{path}:{line_no}: unknown pair {parts[0]!r}, {parts[1]!r}") from None
            rows.append(u)
            cols.append(i)
            labels.append(f"{parts[0]}\t{parts[1]}")
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), labels


def cmd_predict(s: dict, out: Path) -> None:
    model = load_model(s["model"])
    rows, cols, labels = _read_pairs(s["pairs"], s["id_map"])
    if len(rows) and (rows.max() >= model.n_rows or cols.max() >= model.n_cols or min(rows.min(), cols.min()) < 0):
        raise DataError("pair id outside the model's dimensions")
    pred = predict_many(model, rows, cols)
    if s["clamp"]:
        pred = [clamp_activation(float(p), model.range) for p in pred]
    with open(out / "predictions.tsv", "w", encoding="utf-8") as fh:
        fh.writelines(f"{label}\t{float(p)!r}\n" for label, p in zip(labels, pred))
    print(f"wrote {len(labels)} predictions")


def cmd_bench(s: dict, out: Path) -> None:
    matrix = _read(s["input"], s)
    base = train_config(s)
    header = "seed\tblf_rmse\tglfa_rmse\tblf_mae\tglfa_mae\n"
    rows = []
    blf_scores, glfa_scores = [], []
    for k in range(s["seeds"]):
        seed = s["seed"] + k
        train, test = split(matrix, s["fraction"], rngs.stream(seed, "split"))
        fallback = train.mean()
        blf, _, _ = train_glfa(train, replace(base, seed=seed, n_rounds=1))
        glfa, _, _ = train_glfa(train, replace(base, seed=seed))
        b, g = score(blf, test, fallback, train), score(glfa, test, fallback, train)
        blf_scores.append(b)
        glfa_scores.append(g)
        rows.append(f"{seed}\t{b.rmse!r}\t{g.rmse!r}\t{b.mae!r}\t{g.mae!r}\n")
        log.info("seed %d: BLF rmse %.5f, GLFA rmse %.5f", seed, b.rmse, g.rmse)
    (out / "bench.tsv").write_text(header + "".join(rows), encoding="utf-8")
    blf_rmse = float(np.median([c.rmse for c in blf_scores]))
    glfa_rmse = float(np.median([c.rmse for c in glfa_scores]))
    lines = [f"median_rmse\tblf={blf_rmse!r}\tglfa={glfa_rmse!r}"]
    a = [c.rmse for c in blf_scores] + [c.mae for c in blf_scores]
    b = [c.rmse for c in glfa_scores] + [c.mae for c in glfa_scores]
    try:
        w = wilcoxon_signed_rank(a, b, alternative="greater")
        lines.append(f"wilcoxon\tR+={w.r_plus:g}\tR-={w.r_minus:g}\tp={w.p_value:.4f}")
    except ValueError as exc:
        lines.append(f"wilcoxon\tundefined\t{exc}")
    text = "\n".join(lines) + "\n"
    (out / "wilcoxon.txt").write_text(text, encoding="utf-8")
    print(header + "".join(rows) + text, end="")


def cmd_synth(s: dict, out: Path) -> None:
    matrix, _, _ = low_rank(s["rows"], s["cols"], s["rank"], s["density"], s["noise"], s["seed"], s["ratings"])
    save_matrix(matrix, out / "synthetic.tsv")
    print(f"wrote {matrix.nnz} entries to {out / 'synthetic.tsv'}")


HANDLERS = {
    "split": cmd_split,
    "hoi-stats": cmd_hoi_stats,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glfa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key = value file (e.g. a previous runspec.conf)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        for key in keys:
            typ, default = KEYS[key]
            flag = "--" + key.replace("_", "-")
            help_text = _HELP.get(key, "") + (f" (default: {_format_value(default)})" if default is not None else "")
            if typ is bool:
                p.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None, help=help_text)
            else:
                p.add_argument(flag, dest=key, type=str, default=None, help=help_text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        for key in COMMANDS[args.command]:
            raw = getattr(args, key, None)
            if isinstance(raw, str):
                setattr(args, key, _convert(key, raw))
        settings = resolve(args.command, args)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](settings, out)
        write_config(out / "runspec.conf", args.command, settings)
    except UsageError as exc:
        print(f"glfa: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"glfa: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except DivergenceError as exc:
        print(f"glfa: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, GraphError, ValueError) as exc:
        print(f"glfa: invalid data or settings: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
