"""Shared builders for the test suite."""

import numpy as np
import pytest

from retrogan.models import ArchConfig, build_model
from retrogan.nn import LayerSpec, Network
from retrogan.tensor_math import RngState


def toy_arch(dim=8, hidden=16, gen_dropout=0.0, disc_dropout=0.0):
    return ArchConfig(
        dim=dim,
        generator_size=hidden,
        discriminator_size=hidden,
        generator_dropout=gen_dropout,
        discriminator_dropout=disc_dropout,
    )


def toy_model(seed=0, dim=8, hidden=16, **kw):
    return build_model(toy_arch(dim=dim, hidden=hidden, **kw), seed=seed)


def unit_rows(rng, rows, cols):
    m = rng.normal(rows, cols)
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def make_identity_generator(dim):
    """An exact identity map despite the relu: x = relu(x) - relu(-x).

    Hidden width 2*dim with first block [I, -I] and output block [I; -I].
    """
    specs = [
        LayerSpec("dense", in_dim=dim, out_dim=2 * dim),
        LayerSpec("relu"),
        LayerSpec("dropout", rate=0.0),
        LayerSpec("dense", in_dim=2 * dim, out_dim=dim),
    ]
    net = Network(specs, RngState(0))
    eye = np.eye(dim)
    net.layers[0]["w"][:] = np.concatenate([eye, -eye], axis=1)
    net.layers[0]["b"][:] = 0.0
    net.layers[3]["w"][:] = np.concatenate([eye, -eye], axis=0)
    net.layers[3]["b"][:] = 0.0
    return net


def zero_parameters(net):
    """Zero every dense weight/bias so sigmoid outputs sit at exactly 0.5."""
    for layer in net.layers:
        if "w" in layer:
            layer["w"][:] = 0.0
            layer["b"][:] = 0.0
    return net


def model_state(model):
    return [a.copy() for _, net in model.networks() for _, _, a in net.state_items()]


def states_equal(s1, s2):
    return len(s1) == len(s2) and all(np.array_equal(a, b) for a, b in zip(s1, s2))


@pytest.fixture
def rng():
    return RngState(1234)
