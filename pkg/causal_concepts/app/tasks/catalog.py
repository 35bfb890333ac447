"""Downstream task catalogs of the two procedurally generated datasets.

Criteria are stored exactly as the task tables print them, including the
dSprites rows 5 and 6 that both read "Scale <= 0.5" while their names say
"Big" and "Small", and the dSprites row 8 whose name says "Square" while its
criterion selects shape 2 (ellipse).
"""

import json
from pathlib import Path

from pydantic import TypeAdapter

from app.errors import ConfigurationError
from app.tasks.criteria import TaskCriterion, TaskSpec


def _c(factor, comparator, value, units="normalized"):
    return TaskCriterion(factor=factor, comparator=comparator, value=value, units=units)


def _dsprites_catalog():
    # orientation thresholds are printed in radians
    return [
        TaskSpec(name="Left-sided Hearts", criteria=[_c("posX", "LE", 0.5), _c("shape", "EQ", 3)]),
        TaskSpec(name="Right-sided Ellipses", criteria=[_c("posX", "GE", 0.5), _c("shape", "EQ", 2)]),
        TaskSpec(name="Bottom Squares", criteria=[_c("posY", "LE", 0.5), _c("shape", "EQ", 1)]),
        TaskSpec(name="Top Hearts", criteria=[_c("posY", "GE", 0.5), _c("shape", "EQ", 3)]),
        TaskSpec(
            name="Big right rotated",
            criteria=[_c("scale", "LE", 0.5), _c("orientation", "GE", 3, "native")],
        ),
        TaskSpec(
            name="Small left rotated",
            criteria=[_c("scale", "LE", 0.5), _c("orientation", "LE", 3, "native")],
        ),
        TaskSpec(
            name="Top big Hearts",
            criteria=[_c("posY", "GE", 0.5), _c("shape", "EQ", 3), _c("scale", "GE", 0.7)],
        ),
        TaskSpec(
            name="Left small Square",
            criteria=[_c("posX", "GE", 0.5), _c("shape", "EQ", 2), _c("scale", "LE", 0.5)],
        ),
        TaskSpec(
            name="Top right rotated",
            criteria=[_c("posX", "GE", 0.5), _c("orientation", "GE", 3, "native"), _c("posY", "GE", 0.5)],
        ),
    ]


def _shapes3d_catalog():
    # "Wall >= 3" is hue grid index 3 of the original ten hues, i.e. native hue 0.3;
    # "Orientation == 1" is the top of the normalized orientation grid
    rows = [
        [_c("floor_hue", "LE", 0.5), _c("wall_hue", "LE", 0.5)],
        [_c("floor_hue", "GE", 0.5), _c("object_hue", "LE", 0.5)],
        [_c("wall_hue", "GE", 0.5), _c("object_hue", "LE", 0.5)],
        [_c("floor_hue", "LE", 0.5), _c("shape", "EQ", 1)],
        [_c("wall_hue", "GE", 0.5), _c("shape", "EQ", 2)],
        [_c("object_hue", "LE", 0.5), _c("scale", "GE", 0.5)],
        [_c("floor_hue", "GE", 0.5), _c("scale", "GE", 0.5), _c("orientation", "GE", 1.0)],
        [_c("object_hue", "GE", 0.5), _c("shape", "EQ", 1), _c("orientation", "GE", 1.0)],
        [_c("floor_hue", "GE", 0.5), _c("wall_hue", "GE", 0.3, "native"), _c("object_hue", "GE", 0.5)],
        [_c("floor_hue", "LE", 0.5), _c("wall_hue", "LE", 0.3, "native"), _c("object_hue", "LE", 0.5)],
        [_c("floor_hue", "LE", 0.5), _c("wall_hue", "GE", 0.3, "native"), _c("object_hue", "LE", 0.5)],
        [_c("floor_hue", "GE", 0.5), _c("scale", "GE", 0.5), _c("shape", "EQ", 2)],
    ]
    return [TaskSpec(name=" & ".join(c.describe() for c in criteria), criteria=criteria) for criteria in rows]


_CATALOGS = {"dsprites_like": _dsprites_catalog, "shapes3d_like": _shapes3d_catalog}


def catalog(dataset_name):
    """
    Return the task catalog of a dataset.

    Args:
        dataset_name (str): ``"dsprites_like"`` (9 tasks: six with two factors,
            three with three) or ``"shapes3d_like"`` (12 tasks: six and six).

    Raises:
        ConfigurationError: If the dataset is unknown.
    """
    if dataset_name not in _CATALOGS:
        raise ConfigurationError(f"no task catalog for dataset '{dataset_name}'")
    return _CATALOGS[dataset_name]()


def find_task(dataset_name, name):
    """Look a catalog task up by its name or slug."""
    for task in catalog(dataset_name):
        if name in (task.name, task.slug()):
            return task
    raise ConfigurationError(f"unknown task '{name}' for {dataset_name}")


_TASK_LIST = TypeAdapter(list[TaskSpec])


def save_catalog(tasks, path):
    Path(path).write_text(json.dumps([t.model_dump(mode="json") for t in tasks], indent=2))


def load_catalog(path):
    return _TASK_LIST.validate_json(Path(path).read_text())
