"""Shared helpers: random small models, datasets, and finite-difference oracles."""

import numpy as np
import pytest

from fairtune.data import Dataset
from fairtune.network import LayerSpec, MlpModel
from fairtune.training import bce_loss

from fairtune.metrics import proxy_eod, proxy_spd


def random_layers(rng: np.random.Generator, max_hidden: int = 3,
                  max_width: int = 8, dropout: bool = True,
                  batchnorm: bool = True) -> list[LayerSpec]:
    """Random classifier stack from the fixed layer menu."""
    specs = []
    for _ in range(int(rng.integers(1, max_hidden + 1))):
        width = int(rng.integers(2, max_width + 1))
        specs.append(LayerSpec("linear", width=width))
        specs.append(LayerSpec("relu"))
        if dropout and rng.random() < 0.5:
            specs.append(LayerSpec("dropout", dropout_p=float(rng.uniform(0.05, 0.3))))
        if batchnorm and rng.random() < 0.5:
            specs.append(LayerSpec("batchnorm", width=width))
    specs.append(LayerSpec("linear", width=1))
    specs.append(LayerSpec("sigmoid"))
    return specs


def random_model(seed: int, input_dim: int = 3, **kwargs) -> MlpModel:
    rng = np.random.default_rng(seed)
    model = MlpModel.initialize(input_dim, random_layers(rng, **kwargs), seed + 1)
    # random batch-norm running stats so eval mode is a non-trivial affine map
    for i, spec in enumerate(model.layers):
        if spec.kind == "batchnorm":
            _, _, run_mean, run_var = model.bn_views(i)
            run_mean[:] = rng.normal(0.0, 0.3, run_mean.size)
            run_var[:] = rng.uniform(0.5, 2.0, run_var.size)
    return model


def random_batch(seed: int, n: int, input_dim: int = 3) -> Dataset:
    """Batch guaranteed to contain both protected groups among positive rows."""
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, 1.0, (n, input_dim))
    y = rng.integers(0, 2, n).astype(float)
    a = rng.integers(0, 2, n).astype(float)
    if n >= 4:
        y[:4] = (1, 1, 1, 1)
        a[:4] = (0, 1, 0, 1)
    return Dataset(X, y, a)


def scalar_loss(model: MlpModel, loss_kind: str, batch: Dataset) -> float:
    scores = model.forward(batch.features)
    if loss_kind == "bce":
        return bce_loss(scores, batch.labels)
    if loss_kind == "proxy_spd":
        return proxy_spd(scores, batch.protected)
    return proxy_eod(scores, batch.labels, batch.protected)


FD_H = 1e-6
FD_RTOL = 1e-4


def fd_param_gradient(model: MlpModel, loss_kind: str, batch: Dataset) -> np.ndarray:
    """Central finite differences over every trainable parameter."""
    grads = np.zeros_like(model.params)
    for i in range(model.params.size):
        orig = model.params[i]
        model.params[i] = orig + FD_H
        up = scalar_loss(model, loss_kind, batch)
        model.params[i] = orig - FD_H
        down = scalar_loss(model, loss_kind, batch)
        model.params[i] = orig
        grads[i] = (up - down) / (2.0 * FD_H)
    return grads


def fd_preact_gradient(model: MlpModel, loss_kind: str, batch: Dataset,
                       hidden_layer: int, unit: int) -> float:
    """Batch-mean pre-activation derivative via a bias offset.

    A shift of the unit's bias adds the same offset to its pre-activation at
    every row, so the bias derivative equals the summed per-row derivative;
    dividing by the batch size gives the batch mean.
    """
    layer_idx = model.hidden_linears[hidden_layer]
    _, b = model.linear_views(model.params, layer_idx)
    orig = b[unit]
    b[unit] = orig + FD_H
    up = scalar_loss(model, loss_kind, batch)
    b[unit] = orig - FD_H
    down = scalar_loss(model, loss_kind, batch)
    b[unit] = orig
    return (up - down) / (2.0 * FD_H) / len(batch)


def assert_close(actual, expected, rtol=FD_RTOL, atol=1e-10):
    np.testing.assert_allclose(actual, expected, rtol=rtol, atol=atol)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
