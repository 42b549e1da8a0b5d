"""Compact feedforward network engine with explicit reverse-mode gradients.

The layer menu is fixed: linear, relu, dropout, batchnorm, sigmoid. Parameters
live in one flat float64 vector with per-layer views, which keeps optimizer
updates to a handful of whole-vector operations. Batch-norm running statistics
live in a separate flat vector so that parameter snapshots and statistic
snapshots can be copied independently.

Hidden units (outputs of every linear layer except the last) carry a binary
prune mask. A pruned unit's signal is zeroed immediately before the next
linear layer, which is exactly equivalent to zeroing the unit's outgoing
weight row, so a pruned unit contributes nothing downstream and receives a
zero gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

LAYER_KINDS = ("linear", "relu", "dropout", "batchnorm", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    """One entry of the network stack.

    width applies to linear (output units) and batchnorm (normalised width);
    dropout_p applies to dropout only.
    """

    kind: str
    width: int = 0
    dropout_p: float = 0.0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind: {self.kind!r}")
        if self.kind in ("linear", "batchnorm") and self.width < 1:
            raise ValueError(f"{self.kind} layer needs a positive width")
        if self.kind == "dropout" and not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")


def fc_classifier(hidden: tuple[int, ...] = (32,) * 11, dropout_p: float = 0.05,
                  batchnorm: bool = True) -> list[LayerSpec]:
    """Standard tabular classifier stack: repeated linear/relu/dropout/batchnorm
    blocks followed by a width-1 linear output and a sigmoid."""
    specs: list[LayerSpec] = []
    for w in hidden:
        specs.append(LayerSpec("linear", width=w))
        specs.append(LayerSpec("relu"))
        if dropout_p > 0:
            specs.append(LayerSpec("dropout", dropout_p=dropout_p))
        if batchnorm:
            specs.append(LayerSpec("batchnorm", width=w))
    specs.append(LayerSpec("linear", width=1))
    specs.append(LayerSpec("sigmoid"))
    return specs


@dataclass(frozen=True)
class _Layout:
    """Compiled offsets of every parameter and statistic in the flat vectors."""

    input_dim: int
    widths: list[int]              # signal width after each layer
    linear_slots: dict[int, tuple[int, int, int]]  # layer idx -> (offset, fan_in, fan_out)
    bn_slots: dict[int, tuple[int, int, int]]      # layer idx -> (param offset, stat offset, width)
    hidden_linears: list[int]      # layer indices of maskable linear layers
    n_params: int
    n_stats: int


def _compile(input_dim: int, layers: tuple[LayerSpec, ...]) -> _Layout:
    if input_dim < 1:
        raise ValueError("input_dim must be positive")
    width = input_dim
    widths = []
    linear_slots: dict[int, tuple[int, int, int]] = {}
    bn_slots: dict[int, tuple[int, int, int]] = {}
    po = so = 0
    linear_idx = []
    for i, spec in enumerate(layers):
        if spec.kind == "linear":
            linear_slots[i] = (po, width, spec.width)
            po += width * spec.width + spec.width
            width = spec.width
            linear_idx.append(i)
        elif spec.kind == "batchnorm":
            if spec.width != width:
                raise ValueError(
                    f"batchnorm width {spec.width} does not match signal width {width}")
            bn_slots[i] = (po, so, width)
            po += 2 * width
            so += 2 * width
        widths.append(width)
    if not linear_idx:
        raise ValueError("network needs at least one linear layer")
    return _Layout(input_dim, widths, linear_slots, bn_slots, linear_idx[:-1], po, so)


class GradReport:
    """Gradients mirroring a model: flat parameter gradients plus the
    batch-averaged gradient with respect to every hidden unit's pre-activation."""

    def __init__(self, param_grads: np.ndarray, preact_grads: list[np.ndarray]):
        self.param_grads = param_grads
        self.preact_grads = preact_grads


class MlpModel:
    """Feedforward binary classifier with prune masks and a decision threshold.

    Value-like: clone() yields an independent copy safe to mutate or hand to
    another worker. A single instance must not be mutated concurrently.
    """

    def __init__(self, input_dim: int, layers, params: np.ndarray,
                 stats: np.ndarray, masks: list[np.ndarray], threshold: float = 0.5):
        self.input_dim = input_dim
        self.layers = tuple(layers)
        self._layout = _compile(input_dim, self.layers)
        if params.shape != (self._layout.n_params,):
            raise ValueError("parameter vector does not match the layer stack")
        if stats.shape != (self._layout.n_stats,):
            raise ValueError("statistic vector does not match the layer stack")
        if len(masks) != len(self._layout.hidden_linears):
            raise ValueError("one mask per hidden linear layer required")
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        self.params = params
        self.stats = stats
        self.masks = masks
        self.threshold = threshold

    # ------------------------------------------------------------ creation

    @classmethod
    def initialize(cls, input_dim: int, layers, seed: int) -> "MlpModel":
        """Fresh model with symmetric uniform fan-in weight init (+-1/sqrt(fan_in)),
        unit batch-norm scale, zero shift, all units active, threshold 0.5."""
        layers = tuple(layers)
        layout = _compile(input_dim, layers)
        rng = np.random.default_rng(seed)
        params = np.zeros(layout.n_params)
        stats = np.zeros(layout.n_stats)
        for i, (po, fi, fo) in layout.linear_slots.items():
            bound = 1.0 / np.sqrt(fi)
            params[po:po + fi * fo + fo] = rng.uniform(-bound, bound, fi * fo + fo)
        for i, (po, so, w) in layout.bn_slots.items():
            params[po:po + w] = 1.0          # scale
            stats[so + w:so + 2 * w] = 1.0   # running variance
        masks = [np.ones(layout.linear_slots[i][2]) for i in layout.hidden_linears]
        return cls(input_dim, layers, params, stats, masks)

    def clone(self) -> "MlpModel":
        m = object.__new__(MlpModel)
        m.input_dim = self.input_dim
        m.layers = self.layers
        m._layout = self._layout
        m.params = self.params.copy()
        m.stats = self.stats.copy()
        m.masks = [mk.copy() for mk in self.masks]
        m.threshold = self.threshold
        return m

    # ------------------------------------------------------------ views

    def linear_views(self, vec: np.ndarray, layer_idx: int):
        """(W, b) views into ``vec`` for the linear layer at ``layer_idx``.
        W has shape (fan_in, fan_out), row-major, so row j holds the outgoing
        weights of input unit j."""
        po, fi, fo = self._layout.linear_slots[layer_idx]
        return vec[po:po + fi * fo].reshape(fi, fo), vec[po + fi * fo:po + fi * fo + fo]

    def bn_views(self, layer_idx: int, params_vec=None):
        """(scale, shift, running_mean, running_var) views for a batchnorm layer."""
        po, so, w = self._layout.bn_slots[layer_idx]
        p = self.params if params_vec is None else params_vec
        return (p[po:po + w], p[po + w:po + 2 * w],
                self.stats[so:so + w], self.stats[so + w:so + 2 * w])

    @property
    def hidden_linears(self) -> list[int]:
        """Layer indices of the maskable (non-output) linear layers."""
        return self._layout.hidden_linears

    def hidden_widths(self) -> list[int]:
        return [self._layout.linear_slots[i][2] for i in self._layout.hidden_linears]

    def num_hidden_units(self) -> int:
        return sum(self.hidden_widths())

    def active_units(self) -> list[tuple[int, int]]:
        """(hidden layer index, unit index) pairs still unpruned."""
        return [(l, j) for l, mk in enumerate(self.masks) for j in np.nonzero(mk)[0]]

    def prune_unit(self, hidden_layer: int, unit: int) -> None:
        self.masks[hidden_layer][unit] = 0.0

    # ------------------------------------------------------------ forward

    def _check_input(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(
                f"expected input of shape (n, {self.input_dim}), got {X.shape}")
        if not np.isfinite(X).all():
            raise ValueError("non-finite input")
        return X

    def forward(self, X, mode: str = "eval", rng: np.random.Generator | None = None) -> np.ndarray:
        """Scores in [0, 1], one per input row.

        mode="train" applies dropout (requires rng when the stack has dropout
        layers) and normalises with batch statistics while updating the running
        ones; mode="eval" is deterministic and uses the running statistics.
        """
        scores, _ = self.forward_cached(X, mode=mode, rng=rng)
        return scores

    def forward_cached(self, X, mode: str = "eval", rng=None, update_stats: bool = True):
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode: {mode!r}")
        X = self._check_input(X)
        train = mode == "train"
        if train and rng is None and any(s.kind == "dropout" for s in self.layers):
            raise ValueError("train-mode forward through dropout needs an rng")
        layout = self._layout
        h = X
        cache = []
        mask_source = None  # hidden-linear position whose mask is pending
        for i, spec in enumerate(self.layers):
            if spec.kind == "linear":
                if mask_source is not None:
                    h = h * self.masks[mask_source]
                W, b = self.linear_views(self.params, i)
                z = h @ W + b
                cache.append(("linear", i, h, mask_source))
                mask_source = (layout.hidden_linears.index(i)
                               if i in layout.hidden_linears else None)
                h = z
            elif spec.kind == "relu":
                cache.append(("relu", i, h))
                h = np.maximum(h, 0.0)
            elif spec.kind == "dropout":
                if train:
                    keep = rng.random(h.shape) >= spec.dropout_p
                    cache.append(("dropout", i, keep, spec.dropout_p))
                    h = h * keep / (1.0 - spec.dropout_p)
                else:
                    cache.append(("dropout", i, None, spec.dropout_p))
            elif spec.kind == "batchnorm":
                scale, shift, run_mean, run_var = self.bn_views(i)
                if train:
                    mu = h.mean(axis=0)
                    var = h.var(axis=0)
                    if update_stats:
                        nb = h.shape[0]
                        unbiased = var * nb / max(nb - 1, 1)
                        run_mean *= 1.0 - BN_MOMENTUM
                        run_mean += BN_MOMENTUM * mu
                        run_var *= 1.0 - BN_MOMENTUM
                        run_var += BN_MOMENTUM * unbiased
                else:
                    mu, var = run_mean, run_var
                inv = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (h - mu) * inv
                cache.append(("batchnorm", i, h, xhat, inv, mu, train))
                h = xhat * scale + shift
            elif spec.kind == "sigmoid":
                h = 1.0 / (1.0 + np.exp(-h))
                cache.append(("sigmoid", i, h))
        scores = h[:, 0] if h.ndim == 2 and h.shape[1] == 1 else h
        return scores, (cache, mask_source)

    # ------------------------------------------------------------ backward

    def backward(self, cache_state, d_out: np.ndarray) -> tuple[np.ndarray, dict[int, np.ndarray]]:
        """Backpropagate d_out (gradient w.r.t. the forward output) through the
        cached pass. Returns flat parameter gradients and, for every hidden
        linear layer, the per-row gradient with respect to its pre-activation."""
        cache, _ = cache_state
        grads = np.zeros(self._layout.n_params)
        preact: dict[int, np.ndarray] = {}
        d = d_out if d_out.ndim == 2 else d_out[:, None]
        for entry in reversed(cache):
            kind = entry[0]
            if kind == "sigmoid":
                s = entry[2]
                d = d * s * (1.0 - s)
            elif kind == "batchnorm":
                _, i, x, xhat, inv, mu, train = entry
                scale, _, _, _ = self.bn_views(i)
                gscale, gshift = self._bn_grad_views(grads, i)
                gscale += (d * xhat).sum(axis=0)
                gshift += d.sum(axis=0)
                dxhat = d * scale
                if train:
                    nb = x.shape[0]
                    dvar = (dxhat * (x - mu)).sum(axis=0) * (-0.5) * inv**3
                    dmu = -dxhat.sum(axis=0) * inv + dvar * (-2.0 / nb) * (x - mu).sum(axis=0)
                    d = dxhat * inv + dvar * 2.0 * (x - mu) / nb + dmu / nb
                else:
                    d = dxhat * inv
            elif kind == "dropout":
                _, i, keep, p = entry
                if keep is not None:
                    d = d * keep / (1.0 - p)
            elif kind == "relu":
                _, i, z = entry
                d = d * (z > 0)
            elif kind == "linear":
                _, i, h_in, mask_source = entry
                if i in self._layout.hidden_linears:
                    preact[self._layout.hidden_linears.index(i)] = d
                W, _ = self.linear_views(self.params, i)
                gW, gb = self.linear_views(grads, i)
                gW += h_in.T @ d
                gb += d.sum(axis=0)
                d = d @ W.T
                if mask_source is not None:
                    d = d * self.masks[mask_source]
        return grads, preact

    def _bn_grad_views(self, grads: np.ndarray, layer_idx: int):
        po, _, w = self._layout.bn_slots[layer_idx]
        return grads[po:po + w], grads[po + w:po + 2 * w]

    # ------------------------------------------------------------ persistence

    FORMAT_VERSION = 1

    def to_dict(self) -> dict:
        linears = []
        for i in sorted(self._layout.linear_slots):
            W, b = self.linear_views(self.params, i)
            linears.append({"W": W.tolist(), "b": b.tolist()})
        bns = []
        for i in sorted(self._layout.bn_slots):
            scale, shift, rm, rv = self.bn_views(i)
            bns.append({"scale": scale.tolist(), "shift": shift.tolist(),
                        "running_mean": rm.tolist(), "running_var": rv.tolist()})
        return {
            "format_version": self.FORMAT_VERSION,
            "input_dim": self.input_dim,
            "layers": [{"kind": s.kind, "width": s.width, "dropout_p": s.dropout_p}
                       for s in self.layers],
            "linears": linears,
            "batchnorms": bns,
            "prune_mask": [mk.astype(int).tolist() for mk in self.masks],
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpModel":
        if doc.get("format_version") != cls.FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format: {doc.get('format_version')!r}")
        layers = tuple(LayerSpec(d["kind"], d.get("width", 0), d.get("dropout_p", 0.0))
                       for d in doc["layers"])
        layout = _compile(doc["input_dim"], layers)
        params = np.zeros(layout.n_params)
        stats = np.zeros(layout.n_stats)
        model = cls(doc["input_dim"], layers, params, stats,
                    [np.ones(layout.linear_slots[i][2]) for i in layout.hidden_linears],
                    float(doc["threshold"]))
        for rec, i in zip(doc["linears"], sorted(layout.linear_slots)):
            W, b = model.linear_views(model.params, i)
            W[:] = np.asarray(rec["W"], dtype=np.float64)
            b[:] = np.asarray(rec["b"], dtype=np.float64)
        for rec, i in zip(doc["batchnorms"], sorted(layout.bn_slots)):
            scale, shift, rm, rv = model.bn_views(i)
            scale[:] = rec["scale"]
            shift[:] = rec["shift"]
            rm[:] = rec["running_mean"]
            rv[:] = rec["running_var"]
        for mk, rec in zip(model.masks, doc["prune_mask"]):
            mk[:] = np.asarray(rec, dtype=np.float64)
        return model

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "MlpModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
