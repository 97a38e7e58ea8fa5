import math

import numpy as np
import pytest

import cascs


def textured(size=48, seed=0):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size]
    img = 0.4 + 0.2 * np.sin(x / 6.0) * np.cos(y / 9.0)
    h = size // 2
    img[:h, :h] = (rng.random((h, h)) > 0.5) * 0.6 + 0.2
    return np.clip(img, 0.0, 1.0)


@pytest.fixture(scope="module")
def matrix():
    corpus = [textured(64, s) for s in range(4)]
    a, sigma = cascs.svd_init(corpus, 8)
    assert np.all(np.diff(sigma) <= 1e-12)
    return a


def test_matrix_is_orthonormal(matrix):
    rows = matrix.rows
    assert rows.shape == (64, 64)
    np.testing.assert_allclose(rows @ rows.T, np.eye(64), atol=1e-10)
    assert np.all(rows.sum(axis=1) >= -1e-12)
    assert matrix.truncate(5).shape == (5, 64)
    assert matrix.orthogonality()["max_offdiag"] < 1e-10


def test_matrix_file_round_trip(matrix, tmp_path):
    p = tmp_path / "a.casm"
    matrix.save(p)
    b = cascs.GeneratingMatrix.load(p)
    assert b.hash == matrix.hash
    np.testing.assert_array_equal(b.rows, matrix.rows)


def test_clip_round():
    assert cascs.clip_round(-3.2, 1024) == 0
    assert cascs.clip_round(2.5, 1024) == 3
    assert cascs.clip_round(1030.7, 1024) == 1024


def test_bra_hits_the_budget():
    rng = np.random.default_rng(3)
    for q in (0, 7, 16, 40, 64):
        r = cascs.bra(rng.normal(size=(32, 40)), 8, q, 64, seed=q)
        sizes = r["sizes"]
        assert sizes.shape == (4, 5)
        assert sizes.sum() == q * sizes.size
        assert sizes.min() >= 0 and sizes.max() <= 64


def test_full_rate_sampling_is_exact(matrix):
    x = textured(40, 5)
    meas = cascs.sample_uniform(x, matrix, 64)
    np.testing.assert_allclose(cascs.initialize(meas, matrix), x, atol=1e-10)
    back = cascs.Measurements.from_bytes(meas.to_bytes())
    assert back.total == meas.total == 40 * 40


def piecewise(size=64):
    img = np.full((size, size), 0.3)
    img[5:40, 8:30] = 0.8
    img[30:60, 35:58] = 0.55
    img[12:20, 40:62] = 0.1
    return img


def test_sample_and_reconstruct(matrix):
    x = piecewise()
    sizes = cascs.bra(cascs.saliency(x), 8, 16, 64, seed=1)["sizes"]
    meas = cascs.sample(x, matrix, sizes)
    np.testing.assert_array_equal(meas.coverage, sizes)
    x0 = cascs.reconstruct(meas, matrix, phases=0)
    x13 = cascs.reconstruct(meas, matrix, phases=13)
    assert cascs.psnr(x, x13) > cascs.psnr(x, x0)


def test_gamma_endpoints_match_uniform(matrix):
    x = textured(48, 2)
    uni = cascs.run_pipeline(x, matrix, 0.25, mode="uniform", phases=2)
    for g in (0.0, 1.0):
        dep = cascs.run_pipeline(x, matrix, 0.25, gamma=g, mode="deployed", phases=2)
        np.testing.assert_array_equal(dep["reconstruction"], uni["reconstruction"])
    dep = cascs.run_pipeline(x, matrix, 0.25, phases=2)
    assert [name for name, _ in dep["messages"]] == ["basic_measurements", "residual_request", "residual_measurements"]
    assert dep["sizes"].sum() == dep["q"] * dep["sizes"].size


def test_metrics():
    x = textured(32, 3)
    assert math.isinf(cascs.psnr(x, x))
    assert cascs.ssim(x, x) == pytest.approx(1.0)
    assert cascs.psnr(x, x + 0.1) == pytest.approx(20.0)
    assert cascs.mse(x, x + 0.1) == pytest.approx(0.01)


def test_image_io(tmp_path):
    x = np.round(textured(20, 4) * 255) / 255
    p = tmp_path / "x.pgm"
    cascs.save_image(x, p)
    np.testing.assert_array_equal(cascs.load_image(p), x)


def test_errors_map_to_python(matrix):
    with pytest.raises(ValueError):
        cascs.run_pipeline(textured(16), matrix, 1.5)
    with pytest.raises(ValueError):
        cascs.Measurements.from_bytes(b"junk")
    with pytest.raises(ValueError):
        cascs.reconstruct(cascs.sample_uniform(textured(16), matrix, 4), matrix, prox="unet")


def test_simulate_bra():
    c = cascs.simulate_bra(25, 500, seed=1, horizon=16)
    assert c["within_limit"] == 1.0
    d = c["mean_abs_delta"]
    assert all(b <= a for a, b in zip(d, d[1:]))
