import logging

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from app.errors import ContractError
from app.evaluation.edges import infer_task_edges, table3_metrics
from app.evaluation.figures import write_delta_chart, write_gallery, write_heatmaps
from app.evaluation.mic import mic, mic_assignment, mic_score
from app.evaluation.scoring import accuracy_score
from app.tasks.catalog import catalog, find_task

# factor order of the worked edge example: shape and posX lead the column
EXAMPLE_FACTORS = ["shape", "posX", "color", "scale", "orientation", "posY"]


def _uniform(n, seed):
    return np.random.default_rng(seed).uniform(size=n)


def test_mic_of_a_variable_with_itself():
    x = _uniform(1000, 0)
    assert mic(x, x) == pytest.approx(1.0, abs=1e-6)


def test_mic_is_symmetric():
    rng = np.random.default_rng(1)
    x = rng.normal(size=300)
    y = x ** 2 + 0.5 * rng.normal(size=300)
    assert mic(x, y) == mic(y, x)


def test_mic_ignores_monotone_transforms_and_sign():
    rng = np.random.default_rng(2)
    x = rng.normal(size=250)
    y = np.cos(2 * x) + 0.3 * rng.normal(size=250)
    reference = mic(x, y)
    assert mic(np.exp(x), y ** 3) == pytest.approx(reference, abs=1e-12)
    assert mic(-x, y) == pytest.approx(reference, abs=1e-12)
    assert mic(x, -y) == pytest.approx(reference, abs=1e-12)


def test_independent_pairs_stay_within_the_permutation_null():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=200)
    y = rng.uniform(size=200)
    null = [mic(x, rng.permutation(y)) for _ in range(200)]
    observed = np.mean([mic(rng.uniform(size=200), rng.uniform(size=200)) for _ in range(10)])
    assert observed <= np.percentile(null, 95) + 0.02


def test_mic_finds_a_periodic_relationship():
    x = _uniform(1000, 4)
    assert mic(x, np.sin(4 * np.pi * x)) >= 0.9


def test_mic_of_a_constant_is_zero():
    assert mic(_uniform(100, 5), np.full(100, 0.3)) == 0.0


def test_mic_input_contract():
    with pytest.raises(ContractError):
        mic(_uniform(19, 6), _uniform(19, 7))
    with pytest.raises(ContractError):
        mic(_uniform(50, 6), _uniform(40, 7))
    x = _uniform(50, 6)
    x[3] = np.nan
    with pytest.raises(ContractError):
        mic(x, _uniform(50, 7))


def _labels(n=300, m=4, seed=8):
    return np.random.default_rng(seed).uniform(size=(n, m))


def test_mic_score_of_permuted_labels_with_noise_dims():
    labels = _labels()
    rng = np.random.default_rng(9)
    latents = np.column_stack([labels[:, [2, 0, 3, 1]], rng.normal(size=(300, 2))])
    assert mic_score(latents, labels) == pytest.approx(1.0, abs=1e-9)
    assert mic_score(-latents, labels) == pytest.approx(1.0, abs=1e-9)


def test_mic_assignment_pairs_each_factor_with_its_copy():
    labels = _labels()
    latents = labels[:, [1, 0, 3, 2]]
    assignment = mic_assignment(latents, labels, factor_names=["a", "b", "c", "d"])
    assert {f: j for f, j, _ in assignment.pairs} == {"a": 1, "b": 0, "c": 3, "d": 2}


def test_constant_factors_are_excluded_from_the_score(caplog):
    caplog.set_level(logging.INFO)
    labels = np.column_stack([_labels(m=2), np.full(300, 0.5)])
    assignment = mic_assignment(labels[:, :2], labels, factor_names=["a", "b", "fixed"])
    assert assignment.factors == ["a", "b"]
    assert assignment.score == pytest.approx(1.0, abs=1e-9)
    assert "fixed" in caplog.text
    with pytest.raises(ContractError):
        mic_assignment(labels[:, :2], np.full((300, 2), 0.5))


def test_edge_example_column():
    column = np.array([0.9, 0.85, 0.05, 0.02, 0.01, 0.01])
    task = find_task("dsprites_like", "Left-sided Hearts")
    report = infer_task_edges([1.0], column[:, None], task, EXAMPLE_FACTORS)
    assert report.inferred_factors == ["posX", "shape"]
    assert (report.tp, report.fp, report.fn) == (2, 0, 0)
    assert report.edge_weights["shape"] == pytest.approx(1.0)


def test_margin_rule_flags_close_irrelevant_factors():
    task = find_task("dsprites_like", "Left-sided Hearts")
    close = np.array([1.0, 0.5, 0.33, 0.0, 0.0, 0.0])[:, None]
    report = infer_task_edges([1.0], close, task, EXAMPLE_FACTORS, fp_margin=0.2)
    assert report.margin_flagged == ["color"] and report.fp == 1

    distant = np.array([1.0, 0.5, 0.25, 0.0, 0.0, 0.0])[:, None]
    report = infer_task_edges([1.0], distant, task, EXAMPLE_FACTORS, fp_margin=0.2)
    assert report.margin_flagged == [] and report.fp == 0


def test_ties_at_the_kth_weight_are_all_selected():
    task = find_task("dsprites_like", "Left-sided Hearts")
    column = np.array([1.0, 1.0, 1.0, 0.1, 0.0, 0.0])[:, None]
    report = infer_task_edges([1.0], column, task, EXAMPLE_FACTORS)
    assert report.tie
    assert report.inferred_factors == ["color", "posX", "shape"]
    assert (report.tp, report.fp) == (2, 1)


def test_chosen_concept_is_the_largest_absolute_weight():
    task = find_task("dsprites_like", "Left-sided Hearts")
    A = np.zeros((6, 3))
    A[[0, 1], 2] = 1.0
    A[[3, 4], 0] = 1.0
    report = infer_task_edges([0.5, 0.1, -2.0], A, task, EXAMPLE_FACTORS)
    assert report.chosen_concept == 2
    assert report.fp == 0


@pytest.mark.parametrize("space_fixture", ["dsprites_space", "shapes3d_space"])
def test_ground_truth_matrix_is_recovered_exactly(space_fixture, request):
    space = request.getfixturevalue(space_fixture)
    for task in catalog(space.dataset_name):
        A = np.zeros((space.m, space.m))
        A[[space.index_of(n) for n in task.relevant_factors], :] = 1.0
        report = infer_task_edges(np.ones(space.m), A, task, space.names)
        assert set(report.inferred_factors) == task.relevant_factors
        assert (report.fp, report.fn) == (0, 0)


def test_edges_do_not_depend_on_the_scale_of_W_and_A():
    rng = np.random.default_rng(10)
    task = find_task("dsprites_like", "Top big Hearts")
    W, A = rng.normal(size=6), rng.normal(size=(6, 6))
    names = EXAMPLE_FACTORS
    first = infer_task_edges(W, A, task, names)
    second = infer_task_edges(3 * W, 5 * A, task, names)
    assert first.chosen_concept == second.chosen_concept
    assert first.inferred_factors == second.inferred_factors


def test_edge_shape_contract():
    task = find_task("dsprites_like", "Left-sided Hearts")
    with pytest.raises(ContractError):
        infer_task_edges(np.ones(3), np.ones((6, 4)), task, EXAMPLE_FACTORS)
    with pytest.raises(ContractError):
        infer_task_edges(np.ones(2), np.ones((6, 2)), task, ["a", "b", "c", "d", "e", "f"])


def _ground_truth_reports(space):
    reports = []
    for task in catalog(space.dataset_name):
        A = np.zeros((space.m, space.m))
        A[[space.index_of(n) for n in task.relevant_factors], :] = 1.0
        reports.append(infer_task_edges(np.ones(space.m), A, task, space.names))
    return reports


def test_table3_of_ground_truth_reports(dsprites_space):
    row = table3_metrics(_ground_truth_reports(dsprites_space), "ground_truth", dsprites_space.m)
    assert (row.gf2_rate, row.gf3_rate, row.fp_rate, row.fn_rate) == (1.0, 1.0, 0.0, 0.0)
    assert row.n_runs == 9 and row.coverage is None


def test_table3_coverage_lists_missing_tasks(dsprites_space):
    reports = _ground_truth_reports(dsprites_space)[:6]
    expected = [t.name for t in catalog("dsprites_like")]
    row = table3_metrics(reports, "regularization", dsprites_space.m, expected_tasks=expected)
    assert row.coverage == pytest.approx(6 / 9)
    assert row.missing_tasks == sorted(expected[6:])
    assert row.gf3_rate is None


def test_random_matrices_recover_two_factors_at_chance():
    rng = np.random.default_rng(11)
    two_factor = [t for t in catalog("dsprites_like") if t.n_factors == 2]
    reports = []
    for trial in range(2000):
        task = two_factor[trial % len(two_factor)]
        reports.append(
            infer_task_edges(rng.normal(size=6), rng.uniform(size=(6, 6)), task, EXAMPLE_FACTORS, fp_margin=0.0)
        )
    row = table3_metrics(reports, "random", 6)
    assert row.gf2_rate == pytest.approx(2 / 6, abs=0.03)
    assert row.fp_rate == pytest.approx(1 / 3, abs=0.03)
    assert row.fn_rate == pytest.approx(2 / 3, abs=0.03)


def test_accuracy_of_random_and_oracle_predictions():
    rng = np.random.default_rng(12)
    labels = rng.integers(0, 2, size=10_000)
    assert accuracy_score(rng.uniform(size=10_000), labels) == pytest.approx(0.5, abs=0.05)
    assert accuracy_score(labels.astype(float), labels) == 1.0
    with pytest.raises(ContractError):
        accuracy_score([0.5, 0.5], [1])


def test_accuracy_thresholds_at_one_half():
    probabilities = [0.9, 0.2, 0.6, 0.4, 0.5]
    labels = np.array([1, 0, 0, 0, 1])
    assert accuracy_score(probabilities, labels) == pytest.approx(0.8)
    assert accuracy_score(probabilities, labels, threshold=0.95) == pytest.approx(0.6)


def test_heatmap_exports(tmp_path):
    names = EXAMPLE_FACTORS
    W = np.arange(4, dtype=float)
    A = np.random.default_rng(13).normal(size=(6, 4))
    write_heatmaps(W, A, names, tmp_path)
    a_frame = pd.read_csv(tmp_path / "A.csv", index_col="concept")
    assert a_frame.shape == (4, 6)
    assert list(a_frame.columns) == names
    assert np.allclose(a_frame.to_numpy(), A.T)
    assert pd.read_csv(tmp_path / "W.csv", index_col="concept")["weight"].tolist() == [0.0, 1.0, 2.0, 3.0]
    assert (tmp_path / "W.html").exists() and (tmp_path / "A.html").exists()
    with Image.open(tmp_path / "W.png") as image:
        assert image.size == (24, 96)
        assert image.getpixel((0, 0)) == (255, 255, 255)
        assert image.getpixel((0, 95)) == (178, 24, 43)
    with Image.open(tmp_path / "A.png") as image:
        assert image.size == (6 * 24, 4 * 24)


def test_gallery_layout(tmp_path):
    originals = np.zeros((8, 16, 16, 1), dtype=np.float32)
    reconstructions = np.ones((8, 16, 16, 1), dtype=np.float32)
    path = write_gallery(originals, reconstructions, tmp_path / "gallery.png", scale=2)
    with Image.open(path) as image:
        assert image.size == (256, 64)
        assert image.getpixel((0, 0)) == 0
        assert image.getpixel((0, 63)) == 255


def test_delta_chart(tmp_path):
    frame = pd.DataFrame(
        {
            "condition": ["regularization"] * 3,
            "delta": [0.0, 0.5, 1.0],
            "accuracy_mean": [0.9, 0.85, 0.8],
            "accuracy_std": [0.01, None, 0.02],
            "mic_score_mean": [0.3, 0.4, 0.5],
            "mic_score_std": [0.0, 0.0, 0.0],
        }
    )
    path = write_delta_chart(frame, tmp_path / "delta.html")
    assert "Task accuracy and MIC against delta" in path.read_text()
