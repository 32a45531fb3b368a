import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ggad.projection import apply_projection, fit_projection, project_graph_features


def test_rank_one_input_reproduces_centered_coordinates():
    rng = np.random.default_rng(0)
    direction = rng.standard_normal(5)
    direction /= np.linalg.norm(direction)
    t = rng.standard_normal(40)
    x = 3.0 + t[:, None] * direction[None, :]
    p = fit_projection(x, 1)
    z = apply_projection(p, x)[:, 0]
    centered = t - t.mean()
    assert np.allclose(np.abs(z), np.abs(centered), atol=1e-10)
    assert np.allclose(z, centered, atol=1e-10) or np.allclose(z, -centered, atol=1e-10)


def test_output_variances_non_increasing():
    x = np.random.default_rng(1).standard_normal((100, 300))
    z = apply_projection(fit_projection(x, 64), x)
    var = z.var(axis=0)
    assert np.all(np.diff(var) <= 1e-10)


@given(st.integers(5, 40), st.integers(1, 30), st.integers(1, 20), st.integers(0, 2**16))
def test_basis_orthonormal(n, d, k, seed):
    k = min(k, n)
    x = np.random.default_rng(seed).standard_normal((n, d))
    p = fit_projection(x, k)
    assert np.allclose(p.basis.T @ p.basis, np.eye(k), atol=1e-8)
    assert p.padded_dim == max(d, k)


def test_narrow_input_is_zero_padded():
    x = np.random.default_rng(2).standard_normal((80, 10))
    z = project_graph_features(x, 64)
    assert z.shape == (80, 64)
    # only ten directions carry variance
    assert np.allclose(z[:, 10:], 0.0, atol=1e-10)


def test_fewer_rows_than_latent_dim():
    x = np.random.default_rng(3).standard_normal((20, 100))
    z = project_graph_features(x, 64)
    assert z.shape == (20, 64)
    assert np.all(z[:, 20:] == 0.0)


def test_errors():
    x = np.zeros((5, 3))
    with pytest.raises(ValueError, match="exceeds"):
        fit_projection(x, 6)
    with pytest.raises(ValueError, match="share"):
        fit_projection([np.zeros((5, 3)), np.zeros((5, 4))], 2)
    p = fit_projection(np.random.default_rng(0).standard_normal((6, 3)), 2)
    with pytest.raises(ValueError, match="columns"):
        apply_projection(p, np.zeros((6, 4)))


def test_deterministic():
    x = np.random.default_rng(4).standard_normal((50, 20))
    a, b = fit_projection(x, 8, seed=0), fit_projection(x, 8, seed=5)
    assert np.array_equal(a.basis, b.basis)
