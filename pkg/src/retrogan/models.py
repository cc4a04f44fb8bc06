"""Network shapes and the six-network mapping model.

The model couples two domains of word vectors: X (distributional) and Y
(retrofitted).  It holds

* ``gen_xy``      -- generator mapping X -> Y,
* ``gen_yx``      -- generator mapping Y -> X,
* ``disc_x``/``disc_y``           -- plain discriminators over single vectors
                                     (frozen by default),
* ``cond_disc_x``/``cond_disc_y`` -- conditional discriminators scoring a
                                     (condition, sample) pair of vectors.

Conditional discriminators see the concatenation [condition, sample] with the
condition occupying the first ``dim`` columns.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nn import LayerSpec, Network
from .tensor_math import RngState

# Stream purposes for parameter initialization; training streams live in trainer.
PURPOSE_MODEL_INIT = 1

NET_NAMES = ("gen_xy", "gen_yx", "disc_x", "disc_y", "cond_disc_x", "cond_disc_y")


@dataclass
class ArchConfig:
    """Widths, depths, and regularization rates for all six networks."""

    dim: int = 300
    generator_size: int = 2048
    discriminator_size: int = 2048
    generator_hidden_layers: int = 2
    discriminator_hidden_layers: int = 2
    generator_dropout: float = 0.2
    discriminator_dropout: float = 0.3
    bn_eps: float = 1e-5
    bn_momentum: float = 0.99
    dtype: str = "float64"

    def validate(self):
        if self.dim <= 0:
            raise ConfigError("dim must be positive")
        if self.generator_hidden_layers < 1 or self.discriminator_hidden_layers < 1:
            raise ConfigError("both networks need at least one hidden layer")
        if self.generator_size <= 0 or self.discriminator_size <= 0:
            raise ConfigError("hidden sizes must be positive")
        for name in ("generator_dropout", "discriminator_dropout"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {rate}")
        if self.bn_eps <= 0.0:
            raise ConfigError("bn_eps must be positive")
        if not 0.0 <= self.bn_momentum < 1.0:
            raise ConfigError("bn_momentum must lie in [0, 1)")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")


def generator_specs(arch):
    """dense/relu/dropout hidden blocks followed by a linear output layer."""
    specs = []
    width = arch.dim
    for _ in range(arch.generator_hidden_layers):
        specs.append(LayerSpec("dense", in_dim=width, out_dim=arch.generator_size))
        specs.append(LayerSpec("relu"))
        specs.append(LayerSpec("dropout", rate=arch.generator_dropout))
        width = arch.generator_size
    specs.append(LayerSpec("dense", in_dim=width, out_dim=arch.dim))
    return specs


def discriminator_specs(arch, input_dim):
    """Hidden blocks, batch normalization after the last block, sigmoid score."""
    specs = []
    width = input_dim
    for _ in range(arch.discriminator_hidden_layers):
        specs.append(LayerSpec("dense", in_dim=width, out_dim=arch.discriminator_size))
        specs.append(LayerSpec("relu"))
        specs.append(LayerSpec("dropout", rate=arch.discriminator_dropout))
        width = arch.discriminator_size
    specs.append(LayerSpec("batchnorm", out_dim=width))
    specs.append(LayerSpec("dense", in_dim=width, out_dim=1))
    specs.append(LayerSpec("sigmoid"))
    return specs


def _spec_parameters(specs):
    total = 0
    for spec in specs:
        if spec.kind == "dense":
            total += spec.in_dim * spec.out_dim + spec.out_dim
        elif spec.kind == "batchnorm":
            total += 2 * spec.out_dim  # gamma and beta; running stats excluded
    return total


def count_parameters(arch):
    """Trainable-parameter sizes for each network role, without building one.

    Returns {"generator", "discriminator", "conditional_discriminator",
    "total"}; the total covers all six networks.  Matches
    ``Network.parameter_count`` on built models exactly.
    """
    gen = _spec_parameters(generator_specs(arch))
    disc = _spec_parameters(discriminator_specs(arch, arch.dim))
    cond = _spec_parameters(discriminator_specs(arch, 2 * arch.dim))
    return {
        "generator": gen,
        "discriminator": disc,
        "conditional_discriminator": cond,
        "total": 2 * (gen + disc + cond),
    }


@dataclass
class RetroGanModel:
    gen_xy: Network
    gen_yx: Network
    disc_x: Network
    disc_y: Network
    cond_disc_x: Network
    cond_disc_y: Network
    arch: ArchConfig

    def networks(self):
        """(name, network) pairs in the fixed serialization order."""
        return [(name, getattr(self, name)) for name in NET_NAMES]

    def parameter_count(self):
        return sum(net.parameter_count() for _, net in self.networks())

    def clone(self):
        nets = {name: net.clone() for name, net in self.networks()}
        return RetroGanModel(arch=self.arch, **nets)


def build_model(arch, seed):
    """Construct all six networks with per-network initialization streams.

    Each network draws its weights from its own stream addressed by
    (seed, PURPOSE_MODEL_INIT, network_index), so adding or skipping the
    construction of one network can never perturb another's initial weights.
    """
    arch.validate()
    kwargs = dict(dtype=arch.dtype, bn_eps=arch.bn_eps, bn_momentum=arch.bn_momentum)
    spec_for = {
        "gen_xy": generator_specs(arch),
        "gen_yx": generator_specs(arch),
        "disc_x": discriminator_specs(arch, arch.dim),
        "disc_y": discriminator_specs(arch, arch.dim),
        "cond_disc_x": discriminator_specs(arch, 2 * arch.dim),
        "cond_disc_y": discriminator_specs(arch, 2 * arch.dim),
    }
    nets = {}
    for idx, name in enumerate(NET_NAMES):
        rng = RngState.for_purpose(seed, PURPOSE_MODEL_INIT, idx)
        nets[name] = Network(spec_for[name], rng, **kwargs)
    return RetroGanModel(arch=arch, **nets)


@dataclass
class CycleOutputs:
    """Everything produced by one round trip through both generators."""

    fake_y: np.ndarray  # gen_xy(x)
    fake_x: np.ndarray  # gen_yx(y)
    rec_x: np.ndarray | None  # gen_yx(gen_xy(x))
    rec_y: np.ndarray | None  # gen_xy(gen_yx(y))
    traces: dict = field(default_factory=dict)


def cycle_forward(model, x, y, mode="eval", rngs=None, need_cycle=True):
    """Map both batches across the cycle.

    ``rngs`` supplies one dropout stream per generator pass under keys
    "g1" (gen_xy on x), "f1" (gen_yx on y), "f2" (gen_yx on fake_y),
    "g2" (gen_xy on fake_x); unused in eval/frozen modes.
    """
    rngs = rngs or {}
    fake_y, tr_g1 = model.gen_xy.forward(x, mode=mode, rng=rngs.get("g1"))
    fake_x, tr_f1 = model.gen_yx.forward(y, mode=mode, rng=rngs.get("f1"))
    traces = {"g1": tr_g1, "f1": tr_f1}
    rec_x = rec_y = None
    if need_cycle:
        rec_x, tr_f2 = model.gen_yx.forward(fake_y, mode=mode, rng=rngs.get("f2"))
        rec_y, tr_g2 = model.gen_xy.forward(fake_x, mode=mode, rng=rngs.get("g2"))
        traces["f2"] = tr_f2
        traces["g2"] = tr_g2
    return CycleOutputs(fake_y=fake_y, fake_x=fake_x, rec_x=rec_x, rec_y=rec_y, traces=traces)


def conditional_score(disc, condition, sample, mode="eval", rng=None):
    """Score (condition, sample) pairs; returns (scores, trace).

    The pair is concatenated column-wise with the condition first, so the
    trace's input gradient splits as [d_condition, d_sample].
    """
    pair = np.concatenate([condition, sample], axis=1)
    return disc.forward(pair, mode=mode, rng=rng)


def map_in_batches(net, vectors, batch_size=512):
    """Apply a generator in eval mode over a large matrix, batch by batch."""
    vectors = np.asarray(vectors)
    outs = []
    for start in range(0, vectors.shape[0], batch_size):
        out, _ = net.forward(vectors[start : start + batch_size], mode="eval")
        outs.append(out)
    return np.concatenate(outs, axis=0) if outs else np.zeros_like(vectors)
