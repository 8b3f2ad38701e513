"""``leafsight`` command line: corpus ingestion and the pipeline subcommands.

Every subcommand reads earlier artifacts from ``--out`` and writes its own
there, together with ``run.json`` (config snapshot, seed, artifact hashes).
"""
import argparse
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bovw import HEALTHY
from .config import KERNEL_NAMES, ConfigError, PipelineConfig, load_config
from .features import FEATURE_NAMES
from .io import (
    IMAGE_SUFFIXES,
    load_image,
    load_json,
    read_feature_csv,
    save_json,
    save_pbm,
    sha256_file,
    write_csv,
    write_feature_csv,
    write_text,
    write_trace_csv,
    write_weights_csv,
)
from .metrics import ConfusionMatrix
from .model_selection import cross_validate, stratified_folds
from .pipeline import (
    ImageError,
    TwoStageModel,
    extract_features,
    segment_image,
    segment_images,
    train_disease_model,
    train_gate,
)
from .selection import default_evaluator, forward_select, relieff_rank
from .svm import OneVsOneSVC

log = logging.getLogger("leafsight")

FEATURES_CSV = "features.csv"
SELECTED_TXT = "selected_features.txt"
GATE_JSON = "gate.json"
MODEL_JSON = "model.json"
FAILURES_CSV = "failures.csv"


class PipelineError(RuntimeError):
    """User-facing failure; the message says what to run or fix."""


# -- ingestion --------------------------------------------------------------

@dataclass(frozen=True)
class ClassEntry:
    directory: str
    label: str
    healthy: bool
    files: tuple


@dataclass(frozen=True)
class CorpusManifest:
    root: str
    classes: tuple
    warnings: tuple = field(default=())

    def images(self):
        """``(path, class entry)`` pairs in canonical order."""
        for c in self.classes:
            for f in c.files:
                yield Path(self.root) / c.directory / f, c

    @property
    def disease_labels(self):
        return [c.label for c in self.classes if not c.healthy]


def ingest(root):
    """One class per subdirectory, classes and files in lexicographic order.

    A directory name containing ``healthy`` (any case) marks a healthy class.
    Directories without readable images are skipped with a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise PipelineError(f"corpus root {root} is not a directory")
    classes, notes = [], []
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(f.name for f in d.iterdir()
                       if f.is_file() and f.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            msg = f"skipping {d.name}: no images"
            notes.append(msg)
            warnings.warn(msg, stacklevel=2)
            continue
        classes.append(ClassEntry(d.name, d.name, "healthy" in d.name.lower(), tuple(files)))
    if not classes:
        raise PipelineError(f"no class directories with images under {root}")
    return CorpusManifest(str(root), tuple(classes), tuple(notes))


# -- helpers ----------------------------------------------------------------

def _require(out, name, producer):
    path = Path(out) / name
    if not path.exists():
        raise PipelineError(f"{path} not found; run `leafsight {producer}` first")
    return path


def _manifest_images(manifest, only_diseased=False):
    paths, labels, healthy = [], [], []
    for path, c in manifest.images():
        if only_diseased and c.healthy:
            continue
        paths.append(path)
        labels.append(c.label)
        healthy.append(c.healthy)
    return paths, labels, healthy


def _image_name(path, root):
    return Path(path).relative_to(root).as_posix()


def _write_failures(out, failures):
    write_csv(Path(out) / FAILURES_CSV, ["image", "stage", "reason"],
              [(f.name, f.stage, f.reason) for f in failures])
    for f in failures:
        log.warning("skipped %s", f)


def _load_disease_table(out):
    X, labels, names = read_feature_csv(_require(out, FEATURES_CSV, "extract"))
    if names != list(FEATURE_NAMES):
        raise PipelineError(f"{FEATURES_CSV} columns do not match this version's feature set")
    keep = [i for i, lab in enumerate(labels) if "healthy" not in lab.lower()]
    if not keep:
        raise PipelineError(f"{FEATURES_CSV} has no diseased rows")
    return X[keep], np.array([labels[i] for i in keep]), names


def _selected(out):
    path = Path(out) / SELECTED_TXT
    if not path.exists():
        return list(FEATURE_NAMES)
    names = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    bad = set(names) - set(FEATURE_NAMES)
    if bad or not names:
        raise PipelineError(f"{path}: unknown or missing feature names {sorted(bad)}")
    return names


def _columns(names):
    return [FEATURE_NAMES.index(n) for n in names]


# -- subcommands ------------------------------------------------------------

def cmd_segment(args, cfg):
    manifest = ingest(args.root)
    paths, _, _ = _manifest_images(manifest)
    names = [_image_name(p, manifest.root) for p in paths]
    results = segment_images([load_image(p) for p in paths], cfg, names, cfg.jobs)
    failures, written = [], []
    for name, r in zip(names, results):
        if isinstance(r, ImageError):
            failures.append(r)
            continue
        stem = Path(args.out) / "masks" / Path(name).with_suffix("")
        for kind, mask in zip(("leaf", "lesion"), r):
            target = stem.with_name(f"{stem.name}.{kind}.pbm")
            save_pbm(target, mask)
            written.append(target)
    _write_failures(args.out, failures)
    return written + [Path(args.out) / FAILURES_CSV]


def cmd_extract(args, cfg):
    manifest = ingest(args.root)
    paths, labels, _ = _manifest_images(manifest)
    names = [_image_name(p, manifest.root) for p in paths]
    X, kept, failures = extract_features([load_image(p) for p in paths], cfg, names, cfg.jobs)
    out = Path(args.out)
    write_feature_csv(out / FEATURES_CSV, X, [labels[i] for i in kept])
    write_csv(out / "features_index.csv", ["row", "image"],
              [(r, names[i]) for r, i in enumerate(kept)])
    _write_failures(out, failures)
    return [out / FEATURES_CSV, out / "features_index.csv", out / FAILURES_CSV]


def cmd_select(args, cfg):
    X, y, names = _load_disease_table(args.out)
    out = Path(args.out)
    weights = relieff_rank(X, y, cfg.relieff_k, cfg.relieff_m or None, cfg.seed)
    write_weights_csv(out / "relieff_weights.csv", weights, names)
    evaluator = default_evaluator(cfg.ffs_kernel, cfg.svm_C, cfg.ffs_folds, cfg.seed)
    trace = forward_select(X, y, evaluator, cfg.ffs_epsilon, cfg.ffs_max_features or None, names)
    write_trace_csv(out / "ffs_trace.csv", trace, names)
    write_text(out / SELECTED_TXT, "".join(names[f] + "\n" for f in trace.selected))
    return [out / "relieff_weights.csv", out / "ffs_trace.csv", out / SELECTED_TXT]


def cmd_train_gate(args, cfg):
    manifest = ingest(args.root)
    paths, _, healthy = _manifest_images(manifest)
    if all(healthy) or not any(healthy):
        raise PipelineError("the gate needs both healthy and diseased class directories")
    gate = train_gate([load_image(p) for p in paths], healthy, cfg)
    save_json(Path(args.out) / GATE_JSON, gate.to_dict())
    return [Path(args.out) / GATE_JSON]


def cmd_train_disease(args, cfg):
    from .bovw import GateModel

    X, y, names = _load_disease_table(args.out)
    model = train_disease_model(X, y, cfg, _selected(args.out), names)
    gate_path = Path(args.out) / GATE_JSON
    gate = GateModel.from_dict(load_json(gate_path)) if gate_path.exists() else None
    save_json(Path(args.out) / MODEL_JSON, TwoStageModel(model, gate).to_dict())
    return [Path(args.out) / MODEL_JSON]


def cmd_crossval(args, cfg):
    X, y, _ = _load_disease_table(args.out)
    selected = _selected(args.out)
    X = X[:, _columns(selected)]
    plan = stratified_folds(y, cfg.cv_folds, cfg.seed)
    est = OneVsOneSVC(cfg.kernel, cfg.svm_C, tol=cfg.svm_tol, max_iter=cfg.svm_max_iter,
                      random_state=cfg.seed)
    result = cross_validate(est, X, y, plan)
    out = Path(args.out) / "crossval"
    written = []
    for k, cm in enumerate(result.matrices, 1):
        path = out / f"fold_{k:02d}.csv"
        write_text(path, cm.report().to_csv())
        written.append(path)
    summary = result.summary()
    write_csv(out / "summary.csv", ["metric", "mean", "std"],
              [(m, mean, sd) for m, (mean, sd) in summary.items()])
    lines = [f"{m:<16} {100 * mean:6.2f} +/- {100 * sd:5.2f}" for m, (mean, sd) in summary.items()]
    pooled = result.pooled.report()
    write_text(out / "summary.txt", "\n".join(lines) + "\n\npooled over folds\n" + pooled.to_text() + "\n")
    write_text(out / "pooled.csv", pooled.to_csv())
    for w in plan.warnings:
        log.warning(w)
    return written + [out / "summary.csv", out / "summary.txt", out / "pooled.csv"]


def _load_model(out):
    return TwoStageModel.from_dict(load_json(_require(out, MODEL_JSON, "train-disease")))


def _predict_paths(args):
    """Paths, display names and whether this is single-image mode."""
    if args.images:
        paths = [Path(p) for p in args.images]
        return paths, [p.name for p in paths], True
    manifest = ingest(args.root)
    paths, _, _ = _manifest_images(manifest)
    return paths, [_image_name(p, manifest.root) for p in paths], False


def cmd_predict(args, cfg):
    model = _load_model(args.out)
    paths, names, single = _predict_paths(args)
    out = Path(args.out) / "predict"
    rows, failures, written = [], [], []
    for p, name in zip(paths, names):
        try:
            img = load_image(p)
            pred = model.predict_image(img, cfg)
            if pred.gate != HEALTHY:
                _, lesion = segment_image(img, cfg)
                target = out / "masks" / Path(name).with_suffix(".lesion.pbm")
                save_pbm(target, lesion)
                written.append(target)
        except Exception as exc:
            if single:
                raise PipelineError(f"{p}: {exc}") from exc
            failures.append(ImageError(name, "predict", exc))
            continue
        rows.append((name, pred.label, pred.gate, pred.gate_score, int(pred.low_confidence)))
    write_csv(out / "predictions.csv", ["image", "label", "gate", "gate_score", "low_confidence"], rows)
    _write_failures(out, failures)
    for r in rows:
        print(f"{r[0]}\t{r[1]}")
    return written + [out / "predictions.csv", out / FAILURES_CSV]


def cmd_report(args, cfg):
    """Two-stage evaluation over a labelled corpus.

    Healthy directories count as class ``healthy``; a diseased leaf sent home
    by the gate, or a healthy leaf sent to the disease stage, is an error.
    """
    model = _load_model(args.out)
    manifest = ingest(args.root)
    classes = [HEALTHY] + [c for c in model.disease.classes if c != HEALTHY]
    cm = ConfusionMatrix(classes)
    failures, rows = [], []
    for path, c in manifest.images():
        actual = HEALTHY if c.healthy else c.label
        if actual not in classes:
            raise PipelineError(f"class {c.label!r} is unknown to the model")
        try:
            pred = model.predict_image(load_image(path), cfg)
        except Exception as exc:
            failures.append(ImageError(_image_name(path, manifest.root), "report", exc))
            continue
        cm.accumulate(actual, pred.label)
        rows.append((_image_name(path, manifest.root), actual, pred.label, pred.gate))
    out = Path(args.out) / "report"
    rep = cm.report()
    write_text(out / "report.csv", rep.to_csv())
    write_text(out / "report.txt", rep.to_text() + "\n")
    write_csv(out / "predictions.csv", ["image", "actual", "predicted", "gate"], rows)
    _write_failures(out, failures)
    print(rep.to_text())
    return [out / "report.csv", out / "report.txt", out / "predictions.csv", out / FAILURES_CSV]


COMMANDS = {
    "segment": cmd_segment,
    "extract": cmd_extract,
    "select": cmd_select,
    "train-gate": cmd_train_gate,
    "train-disease": cmd_train_disease,
    "crossval": cmd_crossval,
    "predict": cmd_predict,
    "report": cmd_report,
}
NEEDS_ROOT = {"segment", "extract", "train-gate", "report"}


def build_parser():
    p = argparse.ArgumentParser(prog="leafsight", description="Two-stage leaf disease classification.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--root", help="corpus directory, one subdirectory per class")
        s.add_argument("--config", help="key = value configuration file")
        s.add_argument("--out", required=True, help="artifact directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--kernel", choices=KERNEL_NAMES)
        s.add_argument("--folds", type=int)
        s.add_argument("--lesion", choices=("dark", "bright"))
        s.add_argument("--jobs", type=int)
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "predict":
            s.add_argument("images", nargs="*", help="image files (default: every image under --root)")
    return p


def resolve_config(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    return cfg.override(seed=args.seed, kernel=args.kernel, cv_folds=args.folds,
                        lesion_polarity=args.lesion, jobs=args.jobs)


def write_run_record(args, cfg, artifacts):
    out = Path(args.out)
    record = {
        "command": args.command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "root": args.root,
        "artifacts": {Path(a).relative_to(out).as_posix(): sha256_file(a)
                      for a in sorted(set(map(Path, artifacts))) if Path(a).exists()},
    }
    save_json(out / "run.json", record)
    # per-command copy so earlier records survive later subcommands
    save_json(out / "runs" / f"{args.command}.json", record)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        needs_root = args.command in NEEDS_ROOT or (args.command == "predict" and not args.images)
        if needs_root and not args.root:
            raise PipelineError(f"`{args.command}` needs --root")
        Path(args.out).mkdir(parents=True, exist_ok=True)
        artifacts = COMMANDS[args.command](args, cfg)
        write_run_record(args, cfg, artifacts)
    except (PipelineError, ConfigError) as exc:
        print(f"leafsight: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
