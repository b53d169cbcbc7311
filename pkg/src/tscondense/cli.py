"""Command-line pipeline: gen, condense, eval, diagnose, compare.

Every command resolves its parameters with precedence CLI flag >
config file > built-in default, then writes the fully resolved set to
``<out>/config.resolved`` (key=value lines, reusable via ``--config``).
Output paths and worker counts are execution details and stay out of
the resolved file, so re-running from it reproduces results bitwise.

Failures exit non-zero with one machine-parsable stderr line of the
form ``error:<category>: <message>`` where the category is one of
bad-path (exit 2), invalid-config (exit 3), shape-mismatch (exit 4) or
internal (exit 1).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .condense import CondenseConfig, condense, load_condensed, save_condensed, write_loss_trace
from .data import (DataFormatError, SplitSpec, gen_synthetic, load_dataset, save_dataset,
                   size_report, split)
from .evaluate import EvalReport, TrainConfig, run_cohort
from .networks import DEFAULT_COLLECTION, catalog
from .privacy import histogram, min_distances_c2o, min_distances_o2o, variable_trend
from .tensor import ShapeError

EXIT_CODES = {"bad-path": 2, "invalid-config": 3, "shape-mismatch": 4, "internal": 1}


def _int_or_none(text):
    return None if text in ("", "none", None) else int(text)


GEN_DEFAULTS = {
    "n": (1000, int),
    "t": (24, int),
    "f": (8, int),
    "delta": (2.0, float),
    "sigma": (1.0, float),
    "fractions": ("0.64,0.16,0.20", str),
    "element_width": (64, int),
    "seed": (0, int),
}

CONDENSE_DEFAULTS = {
    "data": (None, str),
    "size": (20, int),
    "tstar": (None, _int_or_none),
    "iters": (24000, int),
    "batch": (256, int),
    "optimizer": ("adam", str),
    "lr": (0.001, float),
    "networks": (",".join(DEFAULT_COLLECTION), str),
    "dtype": ("float32", str),
    "seed": (0, int),
}

EVAL_DEFAULTS = {
    "data": (None, str),
    "condensed": (None, str),
    "train": ("original", str),
    "archs": ("all", str),
    "repeats": (5, int),
    "steps": (400, int),
    "batch": (32, int),
    "lr": (0.001, float),
    "eval_interval": (5, int),
    "conv_window": (5, int),
    "conv_tolerance": (0.005, float),
    "seed": (0, int),
}

DIAGNOSE_DEFAULTS = {
    "data": (None, str),
    "condensed": (None, str),
    "bins": (30, int),
    "features": ("0,1,2,3,4,5", str),
    "seed": (0, int),
}

COMPARE_DEFAULTS = {
    "original_report": (None, str),
    "condensed_report": (None, str),
    "seed": (0, int),
}


def _load_config_file(path: str) -> dict[str, str]:
    values = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {line!r} is not key=value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve(ns, defaults: dict) -> dict:
    file_values = _load_config_file(ns.config) if ns.config else {}
    unknown = set(file_values) - set(defaults)
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    resolved = {}
    for key, (default, cast) in defaults.items():
        cli_value = getattr(ns, key, None)
        if cli_value is not None:
            resolved[key] = cli_value
        elif key in file_values:
            resolved[key] = cast(file_values[key])
        else:
            resolved[key] = default
    return resolved


def _write_resolved(out_dir: Path, resolved: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={'' if v is None else v}" for k, v in sorted(resolved.items())]
    (out_dir / "config.resolved").write_text("\n".join(lines) + "\n")


def _parse_csv_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _parse_csv_names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


# -- commands -----------------------------------------------------------------


def cmd_gen(ns) -> int:
    cfg = _resolve(ns, GEN_DEFAULTS)
    out = Path(ns.out)
    dataset = gen_synthetic(cfg["n"], cfg["t"], cfg["f"], cfg["delta"], cfg["sigma"], cfg["seed"])
    fractions = _parse_csv_floats(cfg["fractions"])
    train, val, test = split(dataset, SplitSpec(fractions=fractions, seed=cfg["seed"]))
    for name, part in (("train", train), ("validation", val), ("test", test)):
        save_dataset(part, out / name, element_width=cfg["element_width"])
    _write_resolved(out, cfg)
    sizes = size_report(train)
    print(f"wrote {train.n}/{val.n}/{test.n} samples under {out} "
          f"(train {sizes['float64_mb']:.2f} MB at 64-bit)")
    return 0


def cmd_condense(ns) -> int:
    cfg = _resolve(ns, CONDENSE_DEFAULTS)
    if not cfg["data"]:
        raise ValueError("condense requires --data pointing at a standardized train set")
    dataset = load_dataset(cfg["data"])
    config = CondenseConfig(
        n_condensed=cfg["size"], temporal_dim=cfg["tstar"], iterations=cfg["iters"],
        batch_size=cfg["batch"], optimizer=cfg["optimizer"], learning_rate=cfg["lr"],
        networks=_parse_csv_names(cfg["networks"]), seed=cfg["seed"], dtype=cfg["dtype"])
    condensed, trace = condense(dataset, config)
    out = Path(ns.out)
    save_condensed(condensed, out)
    write_loss_trace(out / "loss_trace.csv", trace)
    _write_resolved(out, cfg)
    wall = condensed.provenance["wall_clock_seconds"]
    final = trace[-1] if trace else float("nan")
    print(f"condensed {dataset.n} -> {condensed.n} samples in {config.iterations} iterations; "
          f"wall_clock_seconds={wall:.2f} final_loss={final:.6g}")
    print(f"wrote {out}/meta.json, {out}/data.bin, {out}/loss_trace.csv")
    return 0


def _load_split_root(root: Path):
    return (load_dataset(root / "train"),
            load_dataset(root / "validation"),
            load_dataset(root / "test"))


def cmd_eval(ns) -> int:
    cfg = _resolve(ns, EVAL_DEFAULTS)
    if not cfg["data"]:
        raise ValueError("eval requires --data pointing at a gen output directory")
    train, val, test = _load_split_root(Path(cfg["data"]))
    if cfg["train"] == "condensed":
        if not cfg["condensed"]:
            raise ValueError("--train condensed requires --condensed")
        train = load_condensed(cfg["condensed"]).as_dataset()
    elif cfg["train"] != "original":
        raise ValueError(f"--train must be original or condensed, got {cfg['train']!r}")
    archs = list(catalog(train.f)) if cfg["archs"] == "all" else list(_parse_csv_names(cfg["archs"]))
    config = TrainConfig(steps=cfg["steps"], batch_size=cfg["batch"], learning_rate=cfg["lr"],
                         eval_interval=cfg["eval_interval"])
    report, curves = run_cohort(
        train, val, test, archs=archs, repeats=cfg["repeats"], config=config,
        master_seed=cfg["seed"], workers=ns.workers,
        convergence_window=cfg["conv_window"], convergence_tolerance=cfg["conv_tolerance"])
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    report.metadata["train_source"] = cfg["train"]
    report.save(out / "report.json")
    curve_dir = out / "curves"
    curve_dir.mkdir(exist_ok=True)
    for (arch, rep), curve in curves.items():
        curve.to_csv(curve_dir / f"{arch}-rep{rep}.csv")
    _write_resolved(out, cfg)
    print(f"cohort mean test AUC {report.cohort_auc_mean:.4f} "
          f"(sd over archs {report.sd_over_arch_means:.4f}) on {cfg['train']} train data; "
          f"report at {out}/report.json")
    return 0


def cmd_diagnose(ns) -> int:
    cfg = _resolve(ns, DIAGNOSE_DEFAULTS)
    if not cfg["data"] or not cfg["condensed"]:
        raise ValueError("diagnose requires --data (train set) and --condensed")
    train = load_dataset(cfg["data"])
    condensed = load_condensed(cfg["condensed"])
    if train.stats is None:
        raise ValueError("diagnose expects the standardized train set")
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    o2o = min_distances_o2o(train.samples)
    c2o = min_distances_c2o(condensed.samples, train.samples)
    hist_o = histogram(o2o, cfg["bins"], "original-to-original")
    hist_c = histogram(c2o, cfg["bins"], "condensed-to-original")
    hist_o.to_csv(out / "distances_o2o.csv")
    hist_c.to_csv(out / "distances_c2o.csv")
    summary = {
        "space": "standardized",
        "original_to_original": hist_o.summary,
        "condensed_to_original": hist_c.summary,
    }
    (out / "distance_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    features = [int(x) for x in _parse_csv_names(cfg["features"]) if int(x) < train.f]
    for idx in features:
        variable_trend(train.samples, idx).to_csv(out / f"trend_original_f{idx}.csv")
        variable_trend(condensed.samples, idx).to_csv(out / f"trend_condensed_f{idx}.csv")
    _write_resolved(out, cfg)
    print(f"min-distance means: original-to-original {o2o.mean():.4f}, "
          f"condensed-to-original {c2o.mean():.4f}; CSVs under {out}")
    return 0


def _format_table(rows: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                     for row in rows)


def cmd_compare(ns) -> int:
    cfg = _resolve(ns, COMPARE_DEFAULTS)
    if not cfg["original_report"] or not cfg["condensed_report"]:
        raise ValueError("compare requires --original-report and --condensed-report")
    original = EvalReport.load(cfg["original_report"])
    condensed = EvalReport.load(cfg["condensed_report"])
    rows = [["Train data", "MB (32-bit)", "MB (64-bit)", "Test AUC (SD)", "Convergence steps (mean)"]]
    for label, rep in ((f"Original ({rep_n(original)})", original),
                       (f"Condensed ({rep_n(condensed)})", condensed)):
        conv = np.mean([a["convergence_step_mean"] for a in rep.per_arch.values()])
        rows.append([label,
                     f"{rep.train_size_mb['float32_mb']:.2f}",
                     f"{rep.train_size_mb['float64_mb']:.2f}",
                     f"{rep.cohort_auc_mean:.3f} ({rep.sd_over_arch_means:.3f})",
                     f"{conv:.0f}"])
    table = _format_table(rows)
    arch_rows = [["Architecture", "AUC original", "AUC condensed", "Steps original", "Steps condensed"]]
    for name in original.per_arch:
        if name not in condensed.per_arch:
            continue
        o, c = original.per_arch[name], condensed.per_arch[name]
        arch_rows.append([name, f"{o['auc_mean']:.3f}", f"{c['auc_mean']:.3f}",
                          f"{o['convergence_step_mean']:.0f}", f"{c['convergence_step_mean']:.0f}"])
    text = table + "\n\n" + _format_table(arch_rows) + "\n"
    print(text, end="")
    if ns.out:
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.txt").write_text(text)
        _write_resolved(out, cfg)
    return 0


def rep_n(report: EvalReport) -> int:
    return report.n_train


# -- argument wiring -----------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser, need_out: bool = True):
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--out", required=need_out, default=None, help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="parallel trial workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tscondense",
        description="Condense labeled time-series datasets by embedding-distribution "
                    "matching and evaluate the result.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate and split a synthetic dataset")
    _add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--f", type=int)
    p.add_argument("--delta", type=float, help="class separation")
    p.add_argument("--sigma", type=float, help="noise level")
    p.add_argument("--fractions", help="train,val,test fractions")
    p.add_argument("--element-width", dest="element_width", type=int, choices=(32, 64))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("condense", help="learn a condensed train set")
    _add_common(p)
    p.add_argument("--data", help="standardized train dataset directory")
    p.add_argument("--size", type=int, help="number of condensed samples (even)")
    p.add_argument("--tstar", type=_int_or_none, help="condensed temporal length")
    p.add_argument("--iters", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--lr", type=float)
    p.add_argument("--networks", help="comma-separated architecture names")
    p.add_argument("--dtype", choices=("float32", "float64"))
    p.set_defaults(func=cmd_condense)

    p = sub.add_parser("eval", help="train a classifier cohort and report AUCs")
    _add_common(p)
    p.add_argument("--data", help="gen output directory (train/validation/test)")
    p.add_argument("--condensed", help="condensed set directory")
    p.add_argument("--train", choices=("original", "condensed"))
    p.add_argument("--archs", help="'all' or comma-separated names")
    p.add_argument("--repeats", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--eval-interval", dest="eval_interval", type=int)
    p.add_argument("--conv-window", dest="conv_window", type=int)
    p.add_argument("--conv-tolerance", dest="conv_tolerance", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diagnose", help="privacy diagnostics for a condensed set")
    _add_common(p)
    p.add_argument("--data", help="standardized train dataset directory")
    p.add_argument("--condensed", help="condensed set directory")
    p.add_argument("--bins", type=int)
    p.add_argument("--features", help="comma-separated feature indices for trends")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("compare", help="side-by-side original vs condensed summary")
    _add_common(p, need_out=False)
    p.add_argument("--original-report", dest="original_report")
    p.add_argument("--condensed-report", dest="condensed_report")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except FileNotFoundError as err:
        print(f"error:bad-path: {err}", file=sys.stderr)
        return EXIT_CODES["bad-path"]
    except (ShapeError, DataFormatError) as err:
        print(f"error:shape-mismatch: {err}", file=sys.stderr)
        return EXIT_CODES["shape-mismatch"]
    except ValueError as err:
        print(f"error:invalid-config: {err}", file=sys.stderr)
        return EXIT_CODES["invalid-config"]
    except RuntimeError as err:
        print(f"error:internal: {err}", file=sys.stderr)
        return EXIT_CODES["internal"]


if __name__ == "__main__":
    sys.exit(main())
