"""Feed-forward networks with hand-written forward/backward passes.

Layers are plain dicts of numpy arrays; a network is a list of layer specs plus
the matching list of parameter dicts.  Three execution modes exist:

* ``"train"``  -- dropout active, batch statistics in batchnorm (running stats
                  updated), trace supports backward;
* ``"eval"``   -- dropout off, running statistics, trace is inference-only;
* ``"frozen"`` -- dropout off, running statistics, but the trace still supports
                  backward.  Used when gradients must flow *through* a network
                  whose parameters are not being trained (e.g. a discriminator
                  scoring generator output) and for finite-difference checks.

Backward returns per-layer gradient dicts aligned with the layer list plus the
gradient with respect to the input batch.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidStateError, ShapeError

_TRAINABLE = {"dense": ("w", "b"), "batchnorm": ("gamma", "beta")}
_STATE = {"dense": ("w", "b"), "batchnorm": ("gamma", "beta", "running_mean", "running_var")}


@dataclass
class LayerSpec:
    """Declarative description of one layer.

    kind is one of "dense", "relu", "dropout", "batchnorm", "sigmoid";
    in_dim/out_dim apply to dense, out_dim to batchnorm, rate to dropout.
    """

    kind: str
    in_dim: int = 0
    out_dim: int = 0
    rate: float = 0.0


@dataclass
class ForwardTrace:
    """Per-layer caches from one forward pass, consumed by backward."""

    mode: str
    caches: list = field(default_factory=list)


def stable_sigmoid(x):
    """Numerically stable logistic function (never exponentiates a large +x)."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Network:
    """A sequential stack of layers with analytic gradients.

    Weight matrices are initialized from the supplied random stream: dense
    layers feeding a relu use He scaling sqrt(2/in_dim), other dense layers
    sqrt(1/in_dim); biases start at zero; batchnorm starts at the identity
    transform with zeroed running statistics.
    """

    def __init__(self, specs, rng, dtype=np.float64, bn_eps=1e-5, bn_momentum=0.99):
        self.specs = list(specs)
        self.dtype = np.dtype(dtype)
        self.bn_eps = float(bn_eps)
        self.bn_momentum = float(bn_momentum)
        self.layers = []
        for i, spec in enumerate(self.specs):
            if spec.kind == "dense":
                if spec.in_dim <= 0 or spec.out_dim <= 0:
                    raise ConfigError(f"dense layer {i} needs positive in_dim/out_dim")
                next_kind = self.specs[i + 1].kind if i + 1 < len(self.specs) else None
                scale = np.sqrt((2.0 if next_kind == "relu" else 1.0) / spec.in_dim)
                w = rng.normal(spec.in_dim, spec.out_dim, stddev=scale).astype(self.dtype)
                b = np.zeros(spec.out_dim, dtype=self.dtype)
                self.layers.append({"w": w, "b": b})
            elif spec.kind == "batchnorm":
                if spec.out_dim <= 0:
                    raise ConfigError(f"batchnorm layer {i} needs a positive out_dim")
                self.layers.append(
                    {
                        "gamma": np.ones(spec.out_dim, dtype=self.dtype),
                        "beta": np.zeros(spec.out_dim, dtype=self.dtype),
                        "running_mean": np.zeros(spec.out_dim, dtype=self.dtype),
                        "running_var": np.ones(spec.out_dim, dtype=self.dtype),
                    }
                )
            elif spec.kind in ("relu", "sigmoid"):
                self.layers.append({})
            elif spec.kind == "dropout":
                if not 0.0 <= spec.rate < 1.0:
                    raise ConfigError(f"dropout rate must lie in [0, 1), got {spec.rate}")
                self.layers.append({})
            else:
                raise ConfigError(f"unknown layer kind {spec.kind!r}")

    # ------------------------------------------------------------------ forward

    def forward(self, batch, mode="eval", rng=None):
        """Run the stack on a batch; returns (output, trace)."""
        if mode not in ("train", "eval", "frozen"):
            raise InvalidStateError(f"unknown mode {mode!r}")
        x = np.asarray(batch, dtype=self.dtype)
        if x.ndim != 2:
            raise ShapeError(f"expected a 2-d batch, got shape {x.shape}")
        trace = ForwardTrace(mode=mode)
        for spec, layer in zip(self.specs, self.layers):
            if spec.kind == "dense":
                if x.shape[1] != spec.in_dim:
                    raise ShapeError(
                        f"dense layer expects width {spec.in_dim}, got {x.shape[1]}"
                    )
                trace.caches.append({"x": x})
                x = x @ layer["w"] + layer["b"]
            elif spec.kind == "relu":
                mask = x > 0
                trace.caches.append({"mask": mask})
                x = x * mask
            elif spec.kind == "dropout":
                if mode == "train" and spec.rate > 0.0:
                    if rng is None:
                        raise InvalidStateError(
                            "dropout needs a random stream in train mode"
                        )
                    keep = rng.uniform(0.0, 1.0, size=x.shape) >= spec.rate
                    scale = keep / (1.0 - spec.rate)
                    trace.caches.append({"scale": scale})
                    x = x * scale
                else:
                    trace.caches.append({"scale": None})
            elif spec.kind == "batchnorm":
                if mode == "train":
                    m = x.shape[0]
                    mean = x.mean(axis=0)
                    var = x.var(axis=0)  # biased
                    inv_std = 1.0 / np.sqrt(var + self.bn_eps)
                    xhat = (x - mean) * inv_std
                    mom = self.bn_momentum
                    layer["running_mean"][:] = mom * layer["running_mean"] + (1 - mom) * mean
                    layer["running_var"][:] = mom * layer["running_var"] + (1 - mom) * var
                    trace.caches.append(
                        {"xhat": xhat, "inv_std": inv_std, "m": m, "batch_stats": True}
                    )
                else:
                    inv_std = 1.0 / np.sqrt(layer["running_var"] + self.bn_eps)
                    xhat = (x - layer["running_mean"]) * inv_std
                    trace.caches.append(
                        {"xhat": xhat, "inv_std": inv_std, "m": x.shape[0], "batch_stats": False}
                    )
                x = layer["gamma"] * xhat + layer["beta"]
            elif spec.kind == "sigmoid":
                x = stable_sigmoid(x)
                trace.caches.append({"out": x})
        return x, trace

    # ----------------------------------------------------------------- backward

    def backward(self, trace, upstream):
        """Backpropagate ``upstream`` (dL/d_output) through a recorded trace.

        Returns (grads, input_grad) where grads[i] is a dict of parameter
        gradients for layer i ({} for parameter-free layers).
        """
        if trace.mode == "eval":
            raise InvalidStateError("cannot backpropagate through an eval-mode trace")
        dy = np.asarray(upstream, dtype=self.dtype)
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            spec, layer, cache = self.specs[i], self.layers[i], trace.caches[i]
            if spec.kind == "dense":
                grads[i] = {"w": cache["x"].T @ dy, "b": dy.sum(axis=0)}
                dy = dy @ layer["w"].T
            elif spec.kind == "relu":
                grads[i] = {}
                dy = dy * cache["mask"]
            elif spec.kind == "dropout":
                grads[i] = {}
                if cache["scale"] is not None:
                    dy = dy * cache["scale"]
            elif spec.kind == "batchnorm":
                xhat, inv_std = cache["xhat"], cache["inv_std"]
                grads[i] = {"gamma": (dy * xhat).sum(axis=0), "beta": dy.sum(axis=0)}
                if cache["batch_stats"]:
                    m = cache["m"]
                    dy = (layer["gamma"] * inv_std / m) * (
                        m * dy - dy.sum(axis=0) - xhat * (dy * xhat).sum(axis=0)
                    )
                else:
                    dy = dy * layer["gamma"] * inv_std
            elif spec.kind == "sigmoid":
                grads[i] = {}
                s = cache["out"]
                dy = dy * s * (1.0 - s)
        return grads, dy

    # ----------------------------------------------------------- introspection

    def trainable(self):
        """Fixed-order list of (layer_index, param_name) for all trained arrays."""
        out = []
        for i, spec in enumerate(self.specs):
            for name in _TRAINABLE.get(spec.kind, ()):
                out.append((i, name))
        return out

    def trainable_arrays(self):
        return [self.layers[i][name] for i, name in self.trainable()]

    def flatten_grads(self, grads):
        """Align a per-layer gradient list with trainable() ordering."""
        return [grads[i][name] for i, name in self.trainable()]

    def state_items(self):
        """(layer_index, name, array) for everything a checkpoint must persist."""
        out = []
        for i, spec in enumerate(self.specs):
            for name in _STATE.get(spec.kind, ()):
                out.append((i, name, self.layers[i][name]))
        return out

    def parameter_count(self):
        """Number of trainable scalars (running statistics excluded)."""
        return sum(int(np.prod(a.shape)) for a in self.trainable_arrays())

    def clone(self):
        """Deep copy sharing nothing with the original."""
        other = object.__new__(Network)
        other.specs = list(self.specs)
        other.dtype = self.dtype
        other.bn_eps = self.bn_eps
        other.bn_momentum = self.bn_momentum
        other.layers = [{k: v.copy() for k, v in layer.items()} for layer in self.layers]
        return other


def gradcheck(net, batch, epsilon=1e-5, coords_per_param=None, rng=None):
    """Compare analytic gradients against central finite differences.

    Runs in frozen mode (dropout off, fixed normalization statistics) with the
    scalar projection loss L = sum(output * p) for a fixed cosine pattern p.
    Checks every trainable coordinate, or a random subsample of
    ``coords_per_param`` per array when given.  Returns the maximum relative
    error  |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    batch = np.asarray(batch, dtype=np.float64)
    out, trace = net.forward(batch, mode="frozen")
    proj = np.cos(np.arange(out.size, dtype=np.float64)).reshape(out.shape)
    grads, _ = net.backward(trace, proj)
    flat_analytic = net.flatten_grads(grads)

    worst = 0.0
    for (i, name), analytic in zip(net.trainable(), flat_analytic):
        arr = net.layers[i][name]
        n = arr.size
        if coords_per_param is not None and coords_per_param < n:
            if rng is None:
                raise InvalidStateError("coordinate subsampling needs a random stream")
            idx = rng.choice(n, size=coords_per_param, replace=False)
        else:
            idx = np.arange(n)
        flat = arr.reshape(-1)
        for j in idx:
            saved = flat[j]
            flat[j] = saved + epsilon
            hi, _ = net.forward(batch, mode="frozen")
            flat[j] = saved - epsilon
            lo, _ = net.forward(batch, mode="frozen")
            flat[j] = saved
            numeric = float(((hi - lo) * proj).sum()) / (2.0 * epsilon)
            a = float(analytic.reshape(-1)[j])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
