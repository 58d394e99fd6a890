"""Shared fixtures and model builders for the test suite."""

import numpy as np
import pytest

from qsdsim import Ket, LindbladModel, Operator, basis_ket, decay_model, sigma_plus


def analytic_decay_element(t):
    """<e| sigma_plus(t) |(g+e)/sqrt(2)> for the undriven decay model."""
    return np.exp(-0.5 * np.asarray(t, dtype=float)) / np.sqrt(2.0)


def decay_element_setup():
    """Observable, bra, ket, model of the reference decay problem."""
    model = decay_model()
    observable = sigma_plus()
    bra = basis_ket(2, 1)
    ket = Ket(np.array([1.0, 1.0]) / np.sqrt(2.0))
    return observable, bra, ket, model


def random_hermitian(rng, dim):
    mat = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (mat + mat.conj().T)


def random_model(rng, dim, n_channels, scale=1.0):
    ham = Operator(scale * random_hermitian(rng, dim))
    lindblads = tuple(
        Operator(
            scale
            * 0.5
            * (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim)))
        )
        for _ in range(n_channels)
    )
    return LindbladModel(hamiltonian=ham, lindblads=lindblads)


def random_ket(rng, dim):
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return Ket(vec / np.linalg.norm(vec))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
