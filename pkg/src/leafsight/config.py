"""Pipeline configuration: defaults, validation and the flat ``key = value`` file format."""
from dataclasses import asdict, dataclass, fields, replace

from .bovw import DetectorParams
from .features import DEFAULT_OFFSETS, FeatureConfig
from .segmentation import SegmentationParams
from .svm import KernelSpec

KERNEL_NAMES = ("linear", "quadratic", "cubic", "gaussian")


class ConfigError(ValueError):
    pass


def _format_offsets(offsets):
    return ";".join(f"{dx},{dy}" for dx, dy in offsets)


def _parse_offsets(text):
    try:
        out = tuple(tuple(int(v) for v in part.split(",")) for part in text.split(";") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"glcm_offsets: cannot parse {text!r}") from exc
    if not out or any(len(o) != 2 for o in out):
        raise ConfigError(f"glcm_offsets: expected 'dx,dy;dx,dy;...', got {text!r}")
    return out


@dataclass(frozen=True)
class PipelineConfig:
    gray_levels: int = 8
    glcm_offsets: tuple = DEFAULT_OFFSETS
    spatial_sigma: float = 3.0
    range_sigma: float = 25.0
    bilateral_radius: int = 5
    min_component_px: int = 16
    border_fraction: float = 0.25
    lesion_polarity: str = "dark"
    bovw_k: int = 200
    detector_threshold: float = 0.001
    strongest_fraction: float = 0.7
    vocab_fraction: float = 0.5
    gate_C: float = 10.0  # relative to the mean squared histogram norm
    kernel: str = "cubic"
    svm_C: float = 1.0
    svm_tol: float = 1e-3
    svm_max_iter: int = 100_000
    relieff_k: int = 10
    relieff_m: int = 0  # 0 = every row is a reference instance
    ffs_epsilon: float = 1e-6
    ffs_max_features: int = 0  # 0 = no cap
    ffs_kernel: str = "cubic"
    ffs_folds: int = 10
    cv_folds: int = 10
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        try:
            self.segmentation()
            self.features()
            self.detector()
            KernelSpec.from_name(self.kernel)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        checks = [
            (self.lesion_polarity in ("dark", "bright"), "lesion_polarity must be 'dark' or 'bright'"),
            (self.kernel in KERNEL_NAMES, f"kernel must be one of {KERNEL_NAMES}"),
            (self.ffs_kernel in KERNEL_NAMES, f"ffs_kernel must be one of {KERNEL_NAMES}"),
            (self.bovw_k >= 2, "bovw_k must be >= 2"),
            (0 < self.strongest_fraction <= 1, "strongest_fraction must be in (0, 1]"),
            (0 < self.vocab_fraction <= 1, "vocab_fraction must be in (0, 1]"),
            (self.svm_C > 0, "svm_C must be > 0"),
            (self.gate_C > 0, "gate_C must be > 0"),
            (self.svm_tol > 0, "svm_tol must be > 0"),
            (self.svm_max_iter >= 1, "svm_max_iter must be >= 1"),
            (self.relieff_k >= 1, "relieff_k must be >= 1"),
            (self.relieff_m >= 0, "relieff_m must be >= 0"),
            (self.ffs_epsilon >= 0, "ffs_epsilon must be >= 0"),
            (self.ffs_max_features >= 0, "ffs_max_features must be >= 0"),
            (self.ffs_folds >= 2, "ffs_folds must be >= 2"),
            (self.cv_folds >= 2, "cv_folds must be >= 2"),
            (self.jobs >= 1, "jobs must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def segmentation(self):
        return SegmentationParams(self.spatial_sigma, self.range_sigma, self.bilateral_radius,
                                  self.min_component_px, self.border_fraction)

    def features(self):
        return FeatureConfig(self.gray_levels, tuple(self.glcm_offsets))

    def detector(self):
        return DetectorParams(threshold=self.detector_threshold)

    def kernel_spec(self):
        return KernelSpec.from_name(self.kernel)

    def to_dict(self):
        d = asdict(self)
        d["glcm_offsets"] = [list(o) for o in self.glcm_offsets]
        return d

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_format_offsets(v) if f.name == 'glcm_offsets' else v}")
        return "\n".join(lines) + "\n"

    def override(self, **values):
        """Copy with the non-``None`` entries of ``values`` replaced."""
        values = {k: v for k, v in values.items() if v is not None}
        unknown = set(values) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        return replace(self, **values)


def parse_config(text, base=None):
    """Parse ``key = value`` lines (``#`` starts a comment) on top of ``base``."""
    base = base or PipelineConfig()
    types = {f.name: type(f.default) for f in fields(PipelineConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            if key == "glcm_offsets":
                values[key] = _parse_offsets(value)
            elif types[key] is str:
                values[key] = value
            else:
                values[key] = types[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return base.override(**values)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
