"""Per-image processing chain and the two-stage (gate, then disease) model."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .bovw import DISEASED, HEALTHY, GateModel, classify_health, train_health_gate
from .config import PipelineConfig
from .features import FEATURE_NAMES, extract_feature_vector
from .imaging import to_grayscale
from .io import MODEL_VERSION
from .preprocessing import StandardizationParams, apply_standardizer, fit_standardizer
from .segmentation import diseased_region_mask, leaf_mask
from .svm import OvoSvmModel, ovo_predict, ovo_train


class ImageError(RuntimeError):
    """A single image failed at ``stage`` (segment / extract)."""

    def __init__(self, name, stage, exc):
        super().__init__(f"{name}: {stage} failed: {exc}")
        self.name = name
        self.stage = stage
        self.reason = str(exc)


def segment_image(img, cfg=None):
    cfg = cfg or PipelineConfig()
    leaf = leaf_mask(img, cfg.segmentation())
    lesion = diseased_region_mask(to_grayscale(img), leaf, cfg.lesion_polarity)
    return leaf, lesion


def image_features(img, cfg=None, label=None):
    cfg = cfg or PipelineConfig()
    leaf, lesion = segment_image(img, cfg)
    return extract_feature_vector(img, leaf, lesion, cfg.features(), label)


def _safe(fn, name, stage, *args):
    try:
        return fn(*args)
    except Exception as exc:
        return ImageError(name, stage, exc)


def _features_job(args):
    img, cfg, name = args
    return _safe(lambda: image_features(img, cfg).values, name, "extract")


def _segment_job(args):
    img, cfg, name = args
    return _safe(segment_image, name, "segment", img, cfg)


def map_images(job, images, cfg, names=None, jobs=1):
    """Run ``job`` on every image, optionally in a process pool.

    Results come back in input order; failures are ``ImageError`` values.
    Images may be arrays or zero-argument loaders.
    """
    names = [str(i) for i in range(len(images))] if names is None else list(names)
    tasks = [(img, cfg, n) for img, n in zip(images, names)]
    if jobs <= 1:
        return [job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(job, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def extract_features(images, cfg=None, names=None, jobs=1):
    """Feature rows for every image that survives; failures are returned separately.

    Returns ``(X, kept_indices, failures)``.
    """
    cfg = cfg or PipelineConfig()
    results = map_images(_features_job, images, cfg, names, jobs)
    rows, kept, failures = [], [], []
    for i, r in enumerate(results):
        if isinstance(r, ImageError):
            failures.append(r)
        else:
            rows.append(r)
            kept.append(i)
    X = np.array(rows).reshape(len(rows), len(FEATURE_NAMES))
    return X, kept, failures


def segment_images(images, cfg=None, names=None, jobs=1):
    return map_images(_segment_job, images, cfg or PipelineConfig(), names, jobs)


class LeafFeatureExtractor(TransformerMixin, BaseEstimator):
    """Turns RGB leaf images into the 28-column feature matrix.

    Any image that cannot be segmented raises ``ImageError``; use
    ``extract_features`` for skip-and-record batch behaviour.
    """

    def __init__(self, config=None):
        self.config = config

    def fit(self, images, y=None):
        return self

    def transform(self, images):
        cfg = self.config or PipelineConfig()
        out = []
        for i, img in enumerate(images):
            r = _features_job((img, cfg, str(i)))
            if isinstance(r, ImageError):
                raise r
            out.append(r)
        return np.array(out).reshape(len(out), len(FEATURE_NAMES))

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)


# -- disease stage ----------------------------------------------------------

@dataclass(frozen=True)
class DiseaseModel:
    """Standardiser, feature subset and one-vs-one SVM over the disease classes."""

    svm: OvoSvmModel
    standardizer: StandardizationParams
    selected_features: list  # names, in column order of the training matrix

    @property
    def classes(self):
        return self.svm.classes

    def _columns(self, names):
        idx = {n: i for i, n in enumerate(names)}
        return [idx[n] for n in self.selected_features]

    def transform(self, X, names=FEATURE_NAMES):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return apply_standardizer(X[:, self._columns(names)], self.standardizer)

    def predict(self, X, names=FEATURE_NAMES):
        Z = self.transform(X, names)
        return [ovo_predict(self.svm, z)[0] for z in Z]


def train_disease_model(X, labels, cfg=None, selected=None, names=FEATURE_NAMES):
    """Standardise the chosen columns and fit the one-vs-one SVM."""
    cfg = cfg or PipelineConfig()
    names = list(names)
    selected = list(names) if selected is None else list(selected)
    cols = [names.index(n) for n in selected]
    Xs = np.asarray(X, dtype=np.float64)[:, cols]
    params = fit_standardizer(Xs)
    svm = ovo_train(apply_standardizer(Xs, params), np.asarray(labels), cfg.kernel_spec(),
                    cfg.svm_C, cfg.svm_tol, cfg.seed, cfg.svm_max_iter)
    return DiseaseModel(svm, params, selected)


@dataclass(frozen=True)
class Prediction:
    label: str
    gate: str
    gate_score: float
    low_confidence: bool
    votes: tuple = ()


@dataclass(frozen=True)
class TwoStageModel:
    disease: DiseaseModel
    gate: GateModel = None

    def to_dict(self):
        svm = self.disease.svm.to_dict()
        doc = {
            "version": MODEL_VERSION,
            "kind": "two-stage" if self.gate is not None else "disease",
            "classes": svm["classes"],
            "kernel": svm["kernel"],
            "C": svm["C"],
            "pairs": svm["pairs"],
            "standardizer": self.disease.standardizer.to_dict(),
            "selected_features": list(self.disease.selected_features),
        }
        if self.gate is not None:
            doc["gate"] = self.gate.to_dict()
        return doc

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        n = len(d["selected_features"])
        svm = OvoSvmModel.from_dict(d, n)
        disease = DiseaseModel(svm, StandardizationParams.from_dict(d["standardizer"]),
                               list(d["selected_features"]))
        gate = GateModel.from_dict(d["gate"]) if "gate" in d else None
        return cls(disease, gate)

    def predict_image(self, img, cfg=None):
        """Gate first; only images judged diseased reach the disease classifier."""
        cfg = cfg or PipelineConfig()
        if self.gate is not None:
            h = classify_health(self.gate, img, cfg.segmentation())
            if h.label == HEALTHY:
                return Prediction(HEALTHY, HEALTHY, h.score, False)
        else:
            h = None
        x = image_features(img, cfg).values
        Z = self.disease.transform(x)
        label, votes = ovo_predict(self.disease.svm, Z[0])
        return Prediction(str(label), DISEASED, h.score if h else 0.0,
                          h.low_confidence if h else False, tuple(int(v) for v in votes))


def train_gate(images, healthy_flags, cfg=None):
    cfg = cfg or PipelineConfig()
    diseased = ~np.asarray(healthy_flags, dtype=bool)
    return train_health_gate(images, diseased, cfg.bovw_k, cfg.strongest_fraction,
                             cfg.vocab_fraction, cfg.detector(), cfg.gate_C, cfg.seed,
                             segmentation=cfg.segmentation())
