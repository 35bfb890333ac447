import itertools
import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, model_validator

from app.errors import BoundsError, ConfigurationError

DATASET_NAMES = ("dsprites_like", "shapes3d_like")
RESOLUTIONS = ("mini", "full-grid")


class FactorKind(str, Enum):
    CATEGORICAL = "categorical"
    CONTINUOUS = "continuous"


class FactorSpec(BaseModel):
    """
    One generative factor: its name, kind and ordered value grid.

    Categorical factors store category indices ``0..K-1`` as values and keep the
    human-readable names in ``labels``. Continuous factors store grid points in
    the factor's native unit (radians, degrees, hue, fraction of the frame) and
    declare the native range ``[lo, hi]`` the grid must lie in.
    """

    name: str
    kind: FactorKind
    values: list[float]
    lo: float
    hi: float
    labels: list[str] | None = None

    @model_validator(mode="after")
    def _check_grid(self):
        if not self.values:
            raise ValueError(f"factor '{self.name}' has an empty value grid")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError(f"factor '{self.name}' values must be strictly increasing")
        if self.values[0] < self.lo or self.values[-1] > self.hi:
            raise ValueError(f"factor '{self.name}' values leave the range [{self.lo}, {self.hi}]")
        if self.kind is FactorKind.CATEGORICAL:
            if self.values != [float(i) for i in range(len(self.values))]:
                raise ValueError(f"categorical factor '{self.name}' must use indices 0..K-1")
            if self.labels is not None and len(self.labels) != len(self.values):
                raise ValueError(f"factor '{self.name}' needs one label per category")
        return self

    @property
    def size(self):
        return len(self.values)

    def normalize_value(self, native):
        """Map a native value onto the factor's [0, 1] label scale (grid min -> 0, grid max -> 1)."""
        if self.size == 1:
            return 0.0
        return (native - self.values[0]) / (self.values[-1] - self.values[0])

    def normalized_grid(self):
        if self.size == 1:
            return np.zeros(1)
        if self.kind is FactorKind.CATEGORICAL:
            return np.arange(self.size) / (self.size - 1)
        return np.array([self.normalize_value(v) for v in self.values])

    def category_ordinal(self, value):
        """Resolve a 1-based category ordinal or a category label to a 0-based index."""
        if isinstance(value, str):
            if not self.labels or value not in self.labels:
                raise ConfigurationError(f"factor '{self.name}' has no category '{value}'")
            return self.labels.index(value)
        index = int(value) - 1
        if not 0 <= index < self.size:
            raise ConfigurationError(f"factor '{self.name}' has no category ordinal {value}")
        return index


class FactorSpace(BaseModel):
    """
    The ordered set of mutually independent generative factors of a dataset.

    The corpus of a space is the full Cartesian product of the factor grids,
    enumerated in row-major order (last factor varies fastest), so a sample's
    position in the corpus is a pure function of its factor-index vector.
    """

    dataset_name: str
    factors: list[FactorSpec]
    image_size: int = 64
    channels: int = 1

    @property
    def m(self):
        return len(self.factors)

    @property
    def names(self):
        return [f.name for f in self.factors]

    @property
    def grid_sizes(self):
        return [f.size for f in self.factors]

    @property
    def image_shape(self):
        return (self.image_size, self.image_size, self.channels)

    def __len__(self):
        return math.prod(self.grid_sizes)

    def factor(self, name):
        for spec in self.factors:
            if spec.name == name:
                return spec
        raise ConfigurationError(f"unknown factor '{name}' for {self.dataset_name}")

    def index_of(self, name):
        return self.names.index(self.factor(name).name)

    def check_index(self, factor_index):
        factor_index = np.asarray(factor_index, dtype=np.int64)
        if factor_index.shape != (self.m,):
            raise BoundsError(f"expected {self.m} factor indices, got shape {factor_index.shape}")
        for spec, i in zip(self.factors, factor_index):
            if not 0 <= i < spec.size:
                raise BoundsError(f"index {i} outside grid of '{spec.name}' (size {spec.size})")
        return factor_index

    def normalize(self, factor_index):
        """Normalized label vector u for one factor-index vector."""
        factor_index = self.check_index(factor_index)
        return np.array(
            [spec.normalized_grid()[i] for spec, i in zip(self.factors, factor_index)],
            dtype=np.float32,
        )

    def all_indices(self):
        """Every factor-index vector of the corpus, in corpus order (N x m)."""
        grids = [range(k) for k in self.grid_sizes]
        return np.array(list(itertools.product(*grids)), dtype=np.int64).reshape(-1, self.m)

    def normalize_all(self, factor_indices):
        columns = [spec.normalized_grid()[factor_indices[:, j]] for j, spec in enumerate(self.factors)]
        return np.stack(columns, axis=1).astype(np.float32)

    def flat_index(self, factor_index):
        return int(np.ravel_multi_index(tuple(self.check_index(factor_index)), self.grid_sizes))


def _continuous(name, values, lo, hi):
    return FactorSpec(name=name, kind=FactorKind.CONTINUOUS, values=[float(v) for v in values], lo=lo, hi=hi)


def _categorical(name, labels):
    return FactorSpec(
        name=name,
        kind=FactorKind.CATEGORICAL,
        values=[float(i) for i in range(len(labels))],
        lo=0.0,
        hi=float(len(labels) - 1),
        labels=list(labels),
    )


def _orientation_grid(count):
    # 50 degree steps keep squares (90 deg symmetry) and ellipses (180 deg) distinct
    return [math.radians(50.0 * i) for i in range(count)]


def build_factor_space(dataset_name, resolution="mini", color_values=1, image_size=64):
    """
    Build the factor space of a procedurally generated dataset.

    ``mini`` grids keep the full Cartesian product around four thousand samples
    so that a model trains on a desk machine; ``full-grid`` widens every
    continuous grid while keeping the same factor names and staying
    renderable in memory.

    Args:
        dataset_name (str): ``"dsprites_like"`` or ``"shapes3d_like"``.
        resolution (str): ``"mini"`` or ``"full-grid"``.
        color_values (int): Number of sprite intensities for the dSprites-like
            color factor. The source corpus has a single white color.
        image_size (int): Side length of the square images.

    Returns:
        FactorSpace: The six ordered factors.

    Raises:
        ConfigurationError: If the dataset or resolution is unknown.

    Example:
        space = build_factor_space("dsprites_like", "mini")
        space.names  # ['color', 'shape', 'scale', 'orientation', 'posX', 'posY']
        len(space)   # 3888
    """
    if resolution not in RESOLUTIONS:
        raise ConfigurationError(f"unknown resolution '{resolution}', expected one of {RESOLUTIONS}")
    full = resolution == "full-grid"

    if dataset_name == "dsprites_like":
        if color_values < 1:
            raise ConfigurationError("color_values must be at least 1")
        colors = ["white"] if color_values == 1 else [f"gray{i}" for i in range(color_values)]
        positions = 12 if full else 6
        factors = [
            _categorical("color", colors),
            _categorical("shape", ["square", "ellipse", "heart"]),
            _continuous("scale", np.linspace(0.5, 1.0, 6), 0.5, 1.0),
            _continuous("orientation", _orientation_grid(8 if full else 6), 0.0, 2 * math.pi),
            _continuous("posX", np.linspace(0.0, 1.0, positions), 0.0, 1.0),
            _continuous("posY", np.linspace(0.0, 1.0, positions), 0.0, 1.0),
        ]
        return FactorSpace(dataset_name=dataset_name, factors=factors, image_size=image_size, channels=1)

    if dataset_name == "shapes3d_like":
        hues = np.linspace(0.0, 0.9, 5 if full else 4)
        factors = [
            _continuous("floor_hue", hues, 0.0, 0.9),
            _continuous("wall_hue", hues, 0.0, 0.9),
            _continuous("object_hue", hues, 0.0, 0.9),
            _continuous("scale", np.linspace(0.75, 1.25, 6 if full else 4), 0.75, 1.25),
            _categorical("shape", ["cube", "cylinder", "sphere", "capsule"]),
            _continuous("orientation", np.linspace(-30.0, 30.0, 5 if full else 4), -30.0, 30.0),
        ]
        return FactorSpace(dataset_name=dataset_name, factors=factors, image_size=image_size, channels=3)

    raise ConfigurationError(f"unknown dataset '{dataset_name}', expected one of {DATASET_NAMES}")
