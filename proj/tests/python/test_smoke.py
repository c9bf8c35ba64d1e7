import math

import numpy as np
import pytest

import matsim


def test_losses_match_closed_forms():
    f = np.array([[0.0, 1.0, -1.0]])
    value, grad = matsim.similarity_loss(f, np.array([[0, 1, 2]]))
    assert value == pytest.approx(math.log(2.0), abs=1e-12)
    assert grad.shape == (1, 3)
    value, _ = matsim.triplet_loss(f, np.array([[0, 1, 2]]), mu=0.3)
    assert value == pytest.approx(0.3, abs=1e-12)
    g = matsim.triplet_geometry(np.zeros(1), np.ones(1), np.array([2.0]))
    assert g["p_ra"] == pytest.approx((1 / 2) / (1 / 2 + 1 / 5))


def test_similarity_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(3, 6))
    t = np.array([[0, 1, 2], [3, 4, 5], [1, 0, 4]])
    _, grad = matsim.similarity_loss(f, t)
    h = 1e-6
    for i, j in [(0, 0), (2, 4), (1, 5)]:
        up, down = f.copy(), f.copy()
        up[i, j] += h
        down[i, j] -= h
        numeric = (matsim.similarity_loss(up, t)[0] - matsim.similarity_loss(down, t)[0]) / (2 * h)
        assert grad[i, j] == pytest.approx(numeric, abs=1e-7)


def test_errors_map_to_python_exceptions():
    with pytest.raises(matsim.ValidationError):
        matsim.triplet_loss(np.zeros((2, 3)), np.array([[0, 1, 5]]))
    with pytest.raises(ValueError):
        matsim.information_gain([0.5, 0.6], [0.1, 0.2])


def test_information_gain():
    assert matsim.information_gain([0.5, 0.5], [0.0, 1.0]) == pytest.approx(1.0)
    assert matsim.information_gain([1.0], [0.3]) == pytest.approx(0.0, abs=1e-15)


def test_synthetic_pipeline(tmp_path):
    bundle, ids, latent = matsim.generate_synthetic(n_materials=10, views_per_material=2, seed=3)
    assert len(bundle) == 20
    assert bundle.descriptors.shape == (20, 16)
    assert latent.shape == (10, 2)

    answers = matsim.simulate_answers(ids, latent, count=300, seed=4)
    assert len(answers) == 300
    matsim.write_answers(tmp_path / "answers.jsonl", answers)
    assert matsim.read_answers(tmp_path / "answers.jsonl").records() == answers.records()

    manifest = bundle.save(tmp_path / "data")
    assert matsim.load_dataset(manifest).view_ids == bundle.view_ids

    model, losses = matsim.train(bundle, answers, epochs=4, steps_per_epoch=10, hidden=[32], dim=8, seed=5)
    again, _ = matsim.train(bundle, answers, epochs=4, steps_per_epoch=10, hidden=[32], dim=8, seed=5)
    assert model == again
    assert len(losses) == 4
    matsim.write_checkpoint(tmp_path / "m.ckpt", model)
    features = matsim.read_checkpoint(tmp_path / "m.ckpt").encode(bundle.descriptors.T)
    assert features.shape == (8, 20)

    emb = matsim.tste_fit(answers, max_iters=300, seed=6)
    assert emb["points"].shape == (10, 2)
    assert emb["satisfied_fraction"] > 0.8
    pts = emb["points"]
    distances = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    report = matsim.evaluate(answers, emb["ids"], distances)
    assert report["majority_accuracy"] > 0.8
    assert matsim.perplexity(answers, emb["ids"], distances) >= 1.0


def test_analysis_on_blobs():
    rng = np.random.default_rng(1)
    centers = np.array([[0, 0], [10, 0], [5, 8]], dtype=float)
    points = np.concatenate([c + 0.3 * rng.normal(size=(15, 2)) for c in centers])
    k, curve = matsim.elbow_k(points, threshold=0.9, k_max=8, seed=2)
    assert k == 3
    assert all(b >= a for a, b in zip(curve, curve[1:]))
    assert matsim.hopkins(points, seed=3) > 0.8
    result = matsim.kmeans(points, 3, seed=4)
    assert len(set(result["assignments"])) == 3
    coords, eigenvalues = matsim.project_2d(points)
    assert coords.shape == (45, 2)
    assert eigenvalues[0] >= eigenvalues[1]


def test_gamut_with_identity_encoder():
    model = matsim.EncoderModel.identity(2)
    basis = np.array([[1.0, 0.0], [0.0, 1.0]])
    weights, objective = matsim.gamut_solve(np.array([0.25, 0.75]), basis, model)
    assert weights == pytest.approx([0.25, 0.75], abs=1e-6)
    assert objective < 1e-10
    p = matsim.simplex_project(np.array([3.0, -1.0, 0.5]))
    assert p.sum() == pytest.approx(1.0)
    assert (p >= 0).all()
