import numpy as np
import pytest

from app.datasets.render import Sample, render
from app.datasets.splits import stratified_split
from app.errors import ConfigurationError, TaskTooSmall
from app.tasks.builder import build_task_dataset
from app.tasks.catalog import catalog, find_task, load_catalog, save_catalog
from app.tasks.criteria import TaskCriterion, TaskSpec, check_task, label, label_array


def _index(space, **values):
    index = [0] * space.m
    for name, i in values.items():
        index[space.index_of(name)] = i
    return index


def test_catalog_sizes():
    dsprites = catalog("dsprites_like")
    shapes3d = catalog("shapes3d_like")
    assert len(dsprites) == 9
    assert [t.n_factors for t in dsprites].count(2) == 6
    assert len(shapes3d) == 12
    assert [t.n_factors for t in shapes3d].count(3) == 6


def test_first_dsprites_task():
    first = catalog("dsprites_like")[0]
    assert first.name == "Left-sided Hearts"
    assert first.relevant_factors == {"posX", "shape"}


def test_unknown_catalog_and_task():
    with pytest.raises(ConfigurationError):
        catalog("mnist")
    with pytest.raises(ConfigurationError):
        find_task("dsprites_like", "Purple Triangles")


def test_find_task_by_slug():
    assert find_task("dsprites_like", "left-sided-hearts").name == "Left-sided Hearts"


def test_catalog_tasks_are_valid_on_their_spaces(dsprites_space, shapes3d_space):
    for task in catalog("dsprites_like"):
        check_task(task, dsprites_space)
    for task in catalog("shapes3d_like"):
        check_task(task, shapes3d_space)


def test_catalog_export_round_trip(tmp_path):
    path = tmp_path / "tasks.json"
    save_catalog(catalog("shapes3d_like"), path)
    assert load_catalog(path) == catalog("shapes3d_like")


def test_left_sided_heart(dsprites_space):
    task = find_task("dsprites_like", "Left-sided Hearts")
    heart = 2
    assert label(task, render(dsprites_space, _index(dsprites_space, shape=heart, posX=0)), dsprites_space) == 1
    assert label(task, render(dsprites_space, _index(dsprites_space, shape=heart, posX=5)), dsprites_space) == 0
    assert label(task, render(dsprites_space, _index(dsprites_space, shape=0, posX=0)), dsprites_space) == 0


def test_top_big_heart(dsprites_space):
    task = find_task("dsprites_like", "Top big Hearts")
    sample = render(dsprites_space, _index(dsprites_space, shape=2, posY=5, scale=5))
    assert label(task, sample, dsprites_space) == 1


def test_flipping_one_criterion_flips_the_label(dsprites_space):
    task = find_task("dsprites_like", "Top big Hearts")
    satisfied = _index(dsprites_space, shape=2, posY=5, scale=5)
    for name, violating in (("shape", 0), ("posY", 0), ("scale", 0)):
        index = list(satisfied)
        index[dsprites_space.index_of(name)] = violating
        sample = Sample(image=None, u=dsprites_space.normalize(index), factor_index=np.array(index))
        assert label(task, sample, dsprites_space) == 0


def test_vectorized_labels_match_brute_force(dsprites_corpus):
    space = dsprites_corpus.space
    posx = dsprites_corpus.u[:, space.index_of("posX")]
    shape = dsprites_corpus.factor_indices[:, space.index_of("shape")]
    expected = ((posx <= 0.5) & (shape == 2)).astype(np.int8)
    task = find_task("dsprites_like", "Left-sided Hearts")
    assert np.array_equal(label_array(task, space, dsprites_corpus.u, dsprites_corpus.factor_indices), expected)


def test_every_sample_label_agrees_with_the_vectorized_form(dsprites_corpus):
    space = dsprites_corpus.space
    for task in catalog("dsprites_like"):
        vectorized = label_array(task, space, dsprites_corpus.u, dsprites_corpus.factor_indices)
        for i in range(0, len(dsprites_corpus), 7):
            sample = Sample(image=None, u=dsprites_corpus.u[i], factor_index=dsprites_corpus.factor_indices[i])
            assert label(task, sample, space) == vectorized[i]


def test_every_dsprites_task_builds_balanced(dsprites_corpus):
    for task in catalog("dsprites_like"):
        split = stratified_split(dsprites_corpus.space, sorted(task.relevant_factors), 0.7, seed=0)
        train, test = build_task_dataset(task, dsprites_corpus, split, seed=0)
        assert 0.45 <= train.positive_fraction <= 0.55
        assert 0.45 <= test.positive_fraction <= 0.55
        assert not set(train.indices) & set(test.indices)


def test_balancing_never_relabels(dsprites_corpus):
    task = find_task("dsprites_like", "Left-sided Hearts")
    split = stratified_split(dsprites_corpus.space, ["posX", "shape"], 0.7, seed=2)
    train, _ = build_task_dataset(task, dsprites_corpus, split, seed=2)
    truth = label_array(task, dsprites_corpus.space, dsprites_corpus.u, dsprites_corpus.factor_indices)
    assert np.array_equal(train.labels, truth[train.indices])


def test_task_datasets_are_seeded(dsprites_corpus):
    task = find_task("dsprites_like", "Big right rotated")
    split = stratified_split(dsprites_corpus.space, ["scale", "orientation"], 0.7, seed=0)
    first, _ = build_task_dataset(task, dsprites_corpus, split, seed=4)
    second, _ = build_task_dataset(task, dsprites_corpus, split, seed=4)
    assert np.array_equal(first.indices, second.indices)


def test_unsatisfiable_task_is_too_small(dsprites_corpus):
    # two criteria on shape are rejected by TaskSpec, so combine exclusive thresholds instead
    task = TaskSpec(
        name="Nowhere",
        criteria=[
            TaskCriterion(factor="posX", comparator="LE", value=0.1),
            TaskCriterion(factor="shape", comparator="EQ", value="heart"),
            TaskCriterion(factor="scale", comparator="GE", value=1.5),
        ],
    )
    split = stratified_split(dsprites_corpus.space, ["shape"], 0.7, seed=0)
    with pytest.raises(TaskTooSmall):
        build_task_dataset(task, dsprites_corpus, split)


def test_task_spec_rejects_repeated_factors():
    with pytest.raises(ValueError):
        TaskSpec(
            name="Square hearts",
            criteria=[
                TaskCriterion(factor="shape", comparator="EQ", value=3),
                TaskCriterion(factor="shape", comparator="EQ", value=1),
            ],
        )


def test_threshold_on_categorical_factor_is_rejected(dsprites_space):
    task = TaskSpec(
        name="Bad",
        criteria=[
            TaskCriterion(factor="shape", comparator="LE", value=0.5),
            TaskCriterion(factor="posX", comparator="LE", value=0.5),
        ],
    )
    with pytest.raises(ConfigurationError):
        check_task(task, dsprites_space)


def test_shapes3d_three_factor_task_builds_balanced(shapes3d_labels_only):
    task = catalog("shapes3d_like")[11]
    assert task.relevant_factors == {"floor_hue", "scale", "shape"}
    split = stratified_split(shapes3d_labels_only.space, ["floor_hue", "wall_hue", "object_hue", "shape"], 0.7, seed=0)
    train, test = build_task_dataset(task, shapes3d_labels_only, split, seed=0)
    assert 0.45 <= train.positive_fraction <= 0.55
    assert len(test) > 0
