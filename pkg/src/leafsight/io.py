"""Reading and writing the package's on-disk artifacts.

CSV files are UTF-8 with LF line endings; floats use ``repr`` so every value
round-trips exactly.
"""
import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .features import FEATURE_NAMES
from .imaging import decode_ppm, encode_pbm, encode_ppm

IMAGE_SUFFIXES = (".ppm", ".png", ".jpg", ".jpeg")
MODEL_VERSION = 1


def fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_csv(path, header, rows):
    write_text(path, csv_text(header, rows))


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]


# -- features ---------------------------------------------------------------

def write_feature_csv(path, X, labels, names=FEATURE_NAMES):
    X = np.asarray(X, dtype=np.float64).reshape(len(labels), len(names))
    write_csv(path, list(names) + ["label"], [list(x) + [lab] for x, lab in zip(X, labels)])


def read_feature_csv(path):
    """Return ``(X, labels, feature_names)``."""
    header, rows = read_csv(path)
    if not header or header[-1] != "label":
        raise ValueError(f"{path}: last column must be 'label'")
    names = header[:-1]
    X = np.empty((len(rows), len(names)))
    labels = []
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
        X[i] = [float(v) for v in row[:-1]]
        labels.append(row[-1])
    return X, labels, names


def write_weights_csv(path, weights, names):
    rank = {int(f): r + 1 for r, f in enumerate(weights.ranking)}
    rows = [(names[f], float(weights.weights[f]), rank[f]) for f in weights.ranking]
    write_csv(path, ["feature", "weight", "rank"], rows)


def write_trace_csv(path, trace, names):
    write_csv(path, ["step", "feature", "cv_accuracy"],
              [(k + 1, names[f], acc) for k, (f, acc) in enumerate(trace.steps)])


# -- JSON -------------------------------------------------------------------

def dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_json(path, obj):
    write_text(path, dump_json(obj))


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# -- images -----------------------------------------------------------------

def load_image(path):
    """RGB ``uint8`` array from a PPM (built in) or PNG/JPEG (needs Pillow)."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return decode_ppm(path.read_bytes())
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError(f"reading {path.suffix} files needs Pillow (pip install pillow)") from exc
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def save_ppm(path, img):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_ppm(img))


def save_pbm(path, mask):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_pbm(mask))
