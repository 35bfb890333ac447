import re
from enum import Enum

import numpy as np
from pydantic import BaseModel, field_validator, model_validator

from app.datasets.factors import FactorKind
from app.errors import ConfigurationError

TOLERANCE = 1e-9


class Comparator(str, Enum):
    EQ = "EQ"
    LE = "LE"
    GE = "GE"


class TaskCriterion(BaseModel):
    """
    One conjunct of a task: ``factor <comparator> value``.

    ``EQ`` compares a categorical factor with a category, given either as the
    1-based ordinal printed in the task tables or as a category label.
    ``LE``/``GE`` compare a continuous factor with a threshold, either on the
    normalized [0, 1] scale (``units="normalized"``) or in the factor's native
    unit (``units="native"``).
    """

    factor: str
    comparator: Comparator
    value: float | int | str
    units: str = "normalized"

    @field_validator("units")
    @classmethod
    def _known_units(cls, units):
        if units not in ("normalized", "native"):
            raise ValueError(f"units must be 'normalized' or 'native', got '{units}'")
        return units

    def describe(self):
        symbol = {"EQ": "==", "LE": "<=", "GE": ">="}[self.comparator.value]
        return f"{self.factor}{symbol}{self.value}"


class TaskSpec(BaseModel):
    name: str
    criteria: list[TaskCriterion]

    @model_validator(mode="after")
    def _check_criteria(self):
        if not 2 <= len(self.criteria) <= 3:
            raise ValueError(f"task '{self.name}' needs 2 or 3 criteria, has {len(self.criteria)}")
        factors = [c.factor for c in self.criteria]
        if len(set(factors)) != len(factors):
            raise ValueError(f"task '{self.name}' repeats a factor: {factors}")
        return self

    @property
    def relevant_factors(self):
        return frozenset(c.factor for c in self.criteria)

    @property
    def n_factors(self):
        return len(self.criteria)

    def slug(self):
        return re.sub(r"[^a-z0-9]+", "-", self.name.lower()).strip("-")


def check_task(task, space):
    """
    Validate a task against a factor space.

    Raises:
        ConfigurationError: If a factor is unknown, ``EQ`` targets a continuous
            factor, ``LE``/``GE`` targets a categorical one, or a category does
            not exist.
    """
    for criterion in task.criteria:
        spec = space.factor(criterion.factor)
        if criterion.comparator is Comparator.EQ:
            if spec.kind is not FactorKind.CATEGORICAL:
                raise ConfigurationError(f"{task.name}: EQ on continuous factor '{spec.name}'")
            spec.category_ordinal(criterion.value)
        else:
            if spec.kind is not FactorKind.CONTINUOUS:
                raise ConfigurationError(f"{task.name}: threshold on categorical factor '{spec.name}'")
            if isinstance(criterion.value, str):
                raise ConfigurationError(f"{task.name}: threshold on '{spec.name}' must be numeric")
    return task


def _threshold(criterion, spec):
    if criterion.units == "native":
        return spec.normalize_value(float(criterion.value))
    return float(criterion.value)


def _holds(criterion, spec, u_column, index_column):
    if criterion.comparator is Comparator.EQ:
        return index_column == spec.category_ordinal(criterion.value)
    threshold = _threshold(criterion, spec)
    if criterion.comparator is Comparator.LE:
        return u_column <= threshold + TOLERANCE
    return u_column >= threshold - TOLERANCE


def label_array(task, space, u, factor_indices):
    """Vectorized ``label`` over ``N x m`` label and index arrays; returns an int8 vector."""
    check_task(task, space)
    result = np.ones(len(u), dtype=bool)
    for criterion in task.criteria:
        j = space.index_of(criterion.factor)
        result &= _holds(criterion, space.factor(criterion.factor), u[:, j], factor_indices[:, j])
    return result.astype(np.int8)


def label(task, sample, space):
    """
    Binary label of one sample: 1 iff every criterion of the task holds.

    Continuous criteria are evaluated on the normalized labels ``u``;
    categorical criteria on the raw category index.

    Example:
        task = TaskSpec(name="Left-sided Hearts", criteria=[
            TaskCriterion(factor="posX", comparator="LE", value=0.5),
            TaskCriterion(factor="shape", comparator="EQ", value="heart"),
        ])
        label(task, render(space, [0, 2, 0, 0, 0, 3]), space)  # 1
    """
    return int(label_array(task, space, sample.u[None, :], sample.factor_index[None, :])[0])
