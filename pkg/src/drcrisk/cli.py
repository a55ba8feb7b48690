"""Command-line interface: ``drcrisk <command> [options]``.

Every command validates its whole configuration before touching data, writes
its artifacts under ``--out`` and exits nonzero on any error. Outputs are
deterministic given inputs and configuration.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .classify import (
    CLASSIFIERS,
    MIN_RULE,
    EvalConfig,
    MarginHyper,
    sensitivity_table,
    subject_distribution,
)
from .landscape import (
    CATEGORIES,
    Add,
    Remove,
    Replace,
    assign_drc,
    build_landscape,
    cell_keys,
    compute_landscape,
    landscape_diff,
    landscape_from_dict,
    landscape_to_dict,
    mutate_watchlist,
)
from .metrics import ALL_METRICS, MetricError, dissimilarity_vector, parse_metric
from .risk import DEFAULT_COSTS, SUMMARY_HEADER, CostProfile, assess_traveler
from .scores import (
    KINDS,
    QUALITIES,
    ScoreError,
    ingest_scores,
    quality_gate,
    read_scores_csv,
    write_scores_csv,
)
from .synth import SynthConfig, SynthConfigError, config_dict, generate

log = logging.getLogger("drcrisk")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    percentile: float = 0.025
    bins: int = 100
    bandwidth: str = "auto"
    metrics: tuple = ("all",)
    costs: str = "default"
    classifiers: tuple = (MIN_RULE,)
    features: str = "per-kind"
    seed: int = 0
    out: str = "."
    # synthetic generation
    n_subjects: int = 200
    goat_frac: float = 0.025
    wolf_frac: float = 0.025
    samples_per_tier: int = 3

    def metric_ids(self):
        if list(self.metrics) == ["all"]:
            return ALL_METRICS
        return tuple(parse_metric(m) for m in self.metrics)

    def bandwidth_value(self):
        return None if self.bandwidth == "auto" else float(self.bandwidth)

    def cost_profile(self) -> CostProfile:
        return DEFAULT_COSTS if self.costs == "default" else CostProfile.load(self.costs)

    def eval_config(self) -> EvalConfig:
        return EvalConfig(percentile=self.percentile, bins=self.bins,
                          bandwidth=self.bandwidth_value(), feature_mode=self.features,
                          hyper=MarginHyper(seed=self.seed))

    def synth_config(self) -> SynthConfig:
        return SynthConfig(n_subjects=self.n_subjects, goat_frac=self.goat_frac,
                           wolf_frac=self.wolf_frac, samples_per_tier=self.samples_per_tier,
                           seed=self.seed)

    def digest(self) -> str:
        d = asdict(self)
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def _split(v) -> tuple:
    if isinstance(v, str):
        return tuple(x.strip() for x in v.split(",") if x.strip())
    return tuple(str(x) for x in v)


_COERCE = {
    "percentile": float, "bins": int, "seed": int, "n_subjects": int, "goat_frac": float,
    "wolf_frac": float, "samples_per_tier": int, "bandwidth": str, "costs": str,
    "features": str, "out": str, "metrics": _split, "classifiers": _split,
}


def build_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - {f.name for f in fields(RunConfig)})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values.update(loaded)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    try:
        cfg = RunConfig(**{k: _COERCE[k](v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if not 0.0 < cfg.percentile < 0.5:
        raise ConfigError(f"percentile must lie in (0, 0.5), got {cfg.percentile}")
    if cfg.bins < 2:
        raise ConfigError(f"bins must be >= 2, got {cfg.bins}")
    if cfg.bandwidth != "auto":
        try:
            h = float(cfg.bandwidth)
        except ValueError:
            raise ConfigError(f"bandwidth must be 'auto' or a number, got {cfg.bandwidth!r}") from None
        if not (h > 0 and math.isfinite(h)):
            raise ConfigError(f"bandwidth must be > 0, got {cfg.bandwidth}")
    try:
        if not cfg.metric_ids():
            raise ConfigError("no metrics selected")
    except MetricError as exc:
        raise ConfigError(str(exc)) from None
    bad = [c for c in cfg.classifiers if c not in CLASSIFIERS]
    if bad:
        raise ConfigError(f"unknown classifier(s) {bad}; choose from {list(CLASSIFIERS)}")
    if cfg.features not in ("per-kind", "combined"):
        raise ConfigError(f"features must be 'per-kind' or 'combined', got {cfg.features!r}")
    try:
        cfg.synth_config().validate()
    except SynthConfigError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.costs != "default":
        try:
            cfg.cost_profile()
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cost profile: {exc}") from None


# -- output helpers --------------------------------------------------------------

def _provenance(cfg: RunConfig, landscape_version=None) -> dict:
    return {"tool": f"drcrisk {__version__}", "config_hash": cfg.digest(),
            "landscape_version": landscape_version}


def _header_lines(cfg: RunConfig, landscape_version=None) -> list[str]:
    p = _provenance(cfg, landscape_version)
    return [f"tool={p['tool']}", f"config_hash={p['config_hash']}",
            f"landscape_version={'' if landscape_version is None else landscape_version}"]


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class _CsvOut:
    def __init__(self, path: Path, comments, header):
        self.fh = open(path, "w", newline="")
        for c in comments:
            self.fh.write(f"# {c}\n")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(header)

    def comment(self, text: str) -> None:
        self.fh.write(f"# {text}\n")

    def row(self, values) -> None:
        self.w.writerow(values)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.fh.close()


def _f6(x: float) -> str:
    return f"{x:.6f}"


def _proportions_table(l) -> str:
    p = l.proportions
    return ("goat,wolf_lamb,sheep\n"
            + ",".join(f"{p[c]:.4f}" for c in CATEGORIES))


def _write_landscape(out: Path, cfg: RunConfig, l, name: str = "landscape") -> None:
    doc = landscape_to_dict(l)
    doc["provenance"] = _provenance(cfg, l.version)
    _write_json(out / f"{name}.json", doc)
    a = l.assignment
    with _CsvOut(out / "assignment.csv", _header_lines(cfg, l.version),
                 ["subject", "category", "mean_genuine", "mean_impostor"]) as w:
        for sid in sorted(a.categories):
            w.row([sid, a[sid].value, _f6(a.mean_genuine[sid]), _f6(a.mean_impostor[sid])])


# -- commands ----------------------------------------------------------------------

def cmd_landscape(args, cfg: RunConfig) -> int:
    s = read_scores_csv(args.scores)
    l = compute_landscape(s, cfg.percentile, cfg.bins, cfg.bandwidth_value())
    out = _out_dir(cfg)
    _write_landscape(out, cfg, l)
    a = l.assignment
    print(f"subjects={len(a.categories)} flagged_per_tail={a.flagged_count} "
          f"unranked={len(a.unranked)}")
    print(_proportions_table(l))
    return 0


def cmd_assess(args, cfg: RunConfig) -> int:
    s = read_scores_csv(args.scores)
    subject = args.subject
    s.subject_index(subject)
    a = assign_drc(s, cfg.percentile, exclude=subject)
    l = build_landscape(s, a, exclude=subject, bins=cfg.bins, bandwidth=cfg.bandwidth_value())
    metrics = cfg.metric_ids()
    rep = assess_traveler(subject, s, l, metrics[0], cfg.cost_profile(), cfg.classifiers,
                          cfg.eval_config())
    out = _out_dir(cfg)
    doc = rep.to_dict()
    doc["provenance"] = _provenance(cfg, l.version)
    _write_json(out / f"report_{subject}.json", doc)
    with _CsvOut(out / f"summary_{subject}.csv", _header_lines(cfg, l.version),
                 SUMMARY_HEADER.split(",")) as w:
        w.row(rep.summary_line().split(","))
    ecfg = cfg.eval_config()
    with _CsvOut(out / f"metric_grid_{subject}.csv", _header_lines(cfg, l.version),
                 ["metric", "quality", "kind", "goat", "wolf_lamb", "sheep"]) as w:
        for m in metrics:
            for k in KINDS:
                for q in QUALITIES:
                    own = subject_distribution(s, subject, q, k, ecfg)
                    try:
                        if own.empty:
                            raise MetricError("no scores for subject")
                        v = dissimilarity_vector(m, own, l, q, k)
                    except MetricError as exc:
                        w.comment(f"{m.value}/{q.value}/{k.value} skipped: {exc}")
                        continue
                    w.row([m.value, q.value, k.value] + [_f6(x) for x in v.as_tuple()])
    print(SUMMARY_HEADER)
    print(rep.summary_line())
    for tag, reason in sorted(rep.skipped.items()):
        print(f"skipped {tag}: {reason}", file=sys.stderr)
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    s = read_scores_csv(args.scores)
    ecfg = cfg.eval_config()
    if s.n_subjects < ecfg.min_subjects:
        raise ScoreError(f"insufficient data: {s.n_subjects} subjects, need {ecfg.min_subjects}")
    metrics = cfg.metric_ids()
    t = sensitivity_table(s, ecfg, metrics, cfg.classifiers)
    out = _out_dir(cfg)
    columns = [(c, k, q) for c in cfg.classifiers for k in KINDS for q in QUALITIES]
    with _CsvOut(out / "sensitivity.csv", _header_lines(cfg),
                 ["metric"] + [f"{c}/{k.value}/{q.value}" for c, k, q in columns]) as w:
        for key, reason in sorted(((m.value, k.value, q.value, c), r)
                                  for (m, k, q, c), r in t.reasons.items()):
            w.comment(f"NA {key[3]}/{key[1]}/{key[2]} {key[0]}: {reason}")
        for m in metrics:
            vals = [t.values[(m, k, q, c)] for c, k, q in columns]
            w.row([m.value] + ["NA" if v is None else f"{v:.2f}" for v in vals])
    _write_json(out / "sensitivity.json", {
        "provenance": _provenance(cfg),
        "cells": [{"metric": m.value, "kind": k.value, "quality": q.value, "classifier": c,
                   "sensitivity": v, "reason": t.reasons.get((m, k, q, c))}
                  for (m, k, q, c), v in t.values.items()],
    })
    g = t.mean(kind="genuine")
    i = t.mean(kind="impostor")
    print(f"cells={len(t)} computed={sum(v is not None for v in t.values.values())}")
    print(f"mean_sensitivity genuine={g:.4f} impostor={i:.4f}")
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    sc = cfg.synth_config()
    s, truth = generate(sc)
    out = _out_dir(cfg)
    write_scores_csv(s, out / "scores.csv", _header_lines(cfg))
    (out / "truth.json").write_text(truth.to_json() + "\n")
    _write_json(out / "synth_config.json", config_dict(sc))
    counts = {c.value: len(truth.members(c)) for c in CATEGORIES}
    print(f"subjects={s.n_subjects} records={len(s)} "
          + " ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def _records_from(op: dict, base: Path):
    if "csv" in op:
        path = Path(op["csv"])
        return read_scores_csv(path if path.is_absolute() else base / path).records
    if "rows" in op:
        return ingest_scores(op["rows"]).records
    raise ConfigError(f"mutation {op.get('op')!r} needs 'csv' or 'rows'")


def parse_mutations(path) -> list:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        ops = doc["ops"] if isinstance(doc, dict) else doc
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read mutation spec {path}: {exc!r}") from None
    parsed = []
    for n, op in enumerate(ops, 1):
        if not isinstance(op, dict):
            raise ConfigError(f"mutation {n}: expected an object")
        kind = op.get("op")
        if kind == "remove":
            parsed.append(Remove(str(op["subject"])))
        elif kind == "add":
            parsed.append(Add(tuple(_records_from(op, path.parent))))
        elif kind == "replace":
            parsed.append(Replace(str(op["subject"]), tuple(_records_from(op, path.parent))))
        else:
            raise ConfigError(f"mutation {n}: unknown op {kind!r}")
    return parsed


def _touched(op) -> list[str]:
    if isinstance(op, Remove):
        return []
    subs = {r.subject_a for r in op.records} | {r.subject_b for r in op.records}
    return sorted(subs)


def cmd_monitor(args, cfg: RunConfig) -> int:
    s = read_scores_csv(args.scores)
    ops = parse_mutations(args.mutations)
    l = compute_landscape(s, cfg.percentile, cfg.bins, cfg.bandwidth_value())
    start = l
    steps = []
    for n, op in enumerate(ops, 1):
        if isinstance(op, (Remove, Replace)):
            s.subject_index(op.subject)
        s, new = mutate_watchlist(l, s, op)
        d = landscape_diff(l, new)
        gates = {sid: quality_gate(s, sid).label for sid in _touched(op)}
        steps.append({
            "step": n,
            "op": type(op).__name__.lower(),
            "version": new.version,
            "n_subjects": len(new.assignment.categories),
            "flagged_count": new.assignment.flagged_count,
            "cell_l1": {"/".join(x.value for x in k): v for k, v in d["cell_l1"].items()},
            "category_changes": {sid: [b.value if b else None, a.value if a else None]
                                 for sid, (b, a) in d["category_changes"].items()},
            "quality_gate": gates,
        })
        l = new
    total = landscape_diff(start, l)
    out = _out_dir(cfg)
    _write_json(out / "monitor.json", {"provenance": _provenance(cfg, l.version), "steps": steps,
                                       "total_cell_l1": {"/".join(x.value for x in k): v
                                                         for k, v in total["cell_l1"].items()}})
    _write_landscape(out, cfg, l)
    for st in steps:
        print(f"step {st['step']} {st['op']}: version={st['version']} "
              f"subjects={st['n_subjects']} flagged_per_tail={st['flagged_count']} "
              f"max_cell_l1={max(st['cell_l1'].values()):.6f}")
        for sid, (b, a) in st["category_changes"].items():
            print(f"  {sid}: {b} -> {a}")
        for sid, verdict in st["quality_gate"].items():
            print(f"  gate {sid}: {verdict}")
    print(f"version={l.version} total_max_cell_l1={max(total['cell_l1'].values()):.6f}")
    return 0


def cmd_plotdata(args, cfg: RunConfig) -> int:
    try:
        doc = json.loads(Path(args.landscape).read_text())
    except json.JSONDecodeError as exc:
        raise ScoreError(f"{args.landscape}: line {exc.lineno}: malformed JSON") from None
    l = landscape_from_dict(doc)
    out = _out_dir(cfg)
    with _CsvOut(out / "plotdata.csv", _header_lines(cfg, l.version),
                 ["category", "quality", "kind", "bin_center", "mass"]) as w:
        for key in cell_keys():
            d = l.distributions[key]
            tag = [x.value for x in key]
            if d.empty:
                w.comment(f"empty cell {'/'.join(tag)}")
                continue
            for c, m in zip(d.centers, d.mass):
                # scientific notation keeps each cell's column summing to 1 within 1e-6
                w.row(tag + [_f6(c), f"{m:.6e}"])
    print(f"cells={sum(not d.empty for d in l.distributions.values())} "
          f"bins={l.bins} version={l.version}")
    return 0


# -- argument parsing ----------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (flags override --config)")
    g.add_argument("--config", help="JSON file with RunConfig keys")
    g.add_argument("--percentile", type=float)
    g.add_argument("--bins", type=int)
    g.add_argument("--bandwidth", help="'auto' (Silverman) or a positive number")
    g.add_argument("--metrics", help="comma-separated metric ids, or 'all'")
    g.add_argument("--costs", help="cost profile JSON path, or 'default'")
    g.add_argument("--classifiers", help="comma-separated subset of min,margin")
    g.add_argument("--features", choices=["per-kind", "combined"])
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drcrisk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"drcrisk {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("landscape", help="assign categories and build the 18-cell landscape")
    c.add_argument("scores")
    c.set_defaults(func=cmd_landscape)

    c = sub.add_parser("assess", help="risk report for one subject")
    c.add_argument("scores")
    c.add_argument("subject")
    c.set_defaults(func=cmd_assess)

    c = sub.add_parser("evaluate", help="leave-one-out sensitivity grid")
    c.add_argument("scores")
    c.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("synth", help="generate a synthetic score set with planted categories")
    c.add_argument("--n-subjects", dest="n_subjects", type=int)
    c.add_argument("--goat-frac", dest="goat_frac", type=float)
    c.add_argument("--wolf-frac", dest="wolf_frac", type=float)
    c.add_argument("--samples-per-tier", dest="samples_per_tier", type=int)
    c.set_defaults(func=cmd_synth)

    c = sub.add_parser("monitor", help="apply watchlist mutations and report landscape changes")
    c.add_argument("scores")
    c.add_argument("mutations", help="JSON: {\"ops\": [{\"op\": \"remove\", \"subject\": ...}, ...]}")
    c.set_defaults(func=cmd_monitor)

    c = sub.add_parser("plotdata", help="per-cell distribution CSV from a landscape JSON")
    c.add_argument("landscape")
    c.set_defaults(func=cmd_plotdata)

    for c in sub.choices.values():
        _common(c)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = build_config(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"drcrisk: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"drcrisk: error: {msg}", file=sys.stderr)
        return 1
