import json
import math

import numpy as np
import pytest

import ccpt

TINY = """
strategy = retcop
stages = 1, 2
steps_per_stage = 20
batch_size = 8
buffer_capacity = 16
hidden = 12
embed_dim = 8
pool_size = 64
eval_samples = 60
probe_train_samples = 80
seed = 5
"""


def test_similarity_and_clip_loss():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 4))
    s = ccpt.similarity_matrix(a, a)
    assert s.shape == (5, 5)
    np.testing.assert_allclose(np.diag(s), 1.0, atol=1e-12)
    for n in (1, 2, 8):
        for tau in (0.07, 0.5, 1.0):
            expected = math.log(1 + (n - 1) * math.exp(-1 / tau))
            assert abs(ccpt.clip_loss(np.eye(n), tau) - expected) < 1e-9


def test_distillation():
    teacher = np.array([[0.2, 0.9], [0.1, 0.8]])
    student = np.array([[0.7, 0.3], [0.4, 0.6]])
    corrected = ccpt.row_correction(teacher, student)
    np.testing.assert_array_equal(corrected[0], student[0])
    np.testing.assert_array_equal(corrected[1], teacher[1])
    assert ccpt.odid_loss(corrected, corrected, 0.5) == 0.0
    assert ccpt.odid_loss(student, corrected, 0.5) > 0.0


def test_selection_and_metrics():
    pts = np.array([[0.0], [0.1], [5.0], [5.1]])
    km = ccpt.kmeans(pts, 2, seed=1)
    assert km["assignments"][0] == km["assignments"][1] != km["assignments"][2]
    assert km["centroids"].shape == (2, 1)
    assert len(ccpt.mof_select(pts, 2)) == 2
    assert ccpt.even_split(10, 3) == [4, 3, 3]
    scores = np.array([[0.9, 0.1], [0.2, 0.8]])
    assert ccpt.macro_ovr_auc(scores, [0, 1]) == 1.0
    assert ccpt.forgetting_rate(0.6, 0.5) == pytest.approx(0.1)


def test_errors_surface_as_value_errors():
    with pytest.raises(ccpt.CcptError):
        ccpt.similarity_matrix(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError, match="usage error"):
        ccpt.run_pipeline("strategy = nonsense\n")


def test_gradcheck():
    results = dict(ccpt.gradcheck())
    assert "composed_total_loss" in results
    assert max(results.values()) < 1e-4


def test_run_pipeline(tmp_path):
    records = ccpt.run_pipeline(TINY)
    assert len(records) == 2 + 4
    assert records[0]["forgetting"] is None
    later = [r for r in records if r["stage"] == 2 and r["modality"] == 1]
    assert all(r["forgetting"] is not None for r in later)
    assert ccpt.run_pipeline(TINY) == records

    ccpt.run_pipeline(TINY, str(tmp_path))
    lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert [json.loads(l)["acc"] for l in lines] == [r["acc"] for r in records]
    assert (tmp_path / "final.ckpt").exists()
