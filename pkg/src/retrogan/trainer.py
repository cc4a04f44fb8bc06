"""Training loop for the paired-generator model.

One training step:

1. forward both generators and the full cycle on an aligned (x, y) batch
   (train mode, per-path dropout streams);
2. assemble the combined objective and update both generators with one joint
   Adam step at ``g_lr`` (the plain discriminators and the conditional
   discriminators are evaluated in frozen mode here, so gradients flow
   through them without touching their parameters or normalization state);
3. for ``dis_train_amount`` iterations, update the two conditional
   discriminators at ``d_lr`` on detached real/fake pairs: the X-side
   discriminator, conditioned on the translation of x, sees x as real and the
   reconstruction of x as fake; mirrored on the Y side;
4. the plain discriminators keep their frozen random initialization unless
   ``train_plain_discriminators`` is set.

Randomness is addressed, never sequential: every consumer opens the stream
``(seed, purpose, step)``, so toggling a loss off (which skips its forwards)
cannot shift the draws of any other consumer, and resuming from a checkpoint
reproduces the uninterrupted run bit for bit.
"""

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CheckpointError, ConfigError, DataError, DomainError
from .losses import (
    GEN_VARIANTS,
    LossBreakdown,
    LossToggles,
    LossWeights,
    MaxMarginTerms,
    combined_objective,
    cycle_loss,
    discriminator_loss_grads,
    draw_confounders,
    generator_adversarial_grad,
    identity_loss,
    mae_grad,
    max_margin_with_grads,
)
from .models import NET_NAMES, ArchConfig, RetroGanModel, build_model
from .optim import AdamState, adam_step
from .tensor_math import RngState

# Stream purposes (model init is purpose 1, owned by the models module).
PURPOSE_SHUFFLE = 2
# one purpose per generator forward path, step-indexed by training step:
PATH_PURPOSES = {"g1": 3, "f1": 4, "f2": 5, "g2": 6, "g3": 7, "f3": 8}
PURPOSE_CONFOUNDERS = 9
# discriminator dropout: base + net*16 + iteration*2 + (0 real / 1 fake)
PURPOSE_COND_DISC_BASE = 10
PURPOSE_PLAIN_DISC_BASE = 42

RNG_SCHEME = "philox-purpose-streams-v1"

CHECKPOINT_MAGIC = b"RGANCKP1"
CHECKPOINT_VERSION = 1

LOG_LOSS_FIELDS = LossBreakdown.FIELD_ORDER


@dataclass
class TrainConfig:
    """Everything one training run depends on."""

    arch: ArchConfig = field(default_factory=ArchConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    toggles: LossToggles = field(default_factory=LossToggles)
    g_lr: float = 5e-5
    d_lr: float = 1e-4
    batch_size: int = 32
    total_batches: int = 312_500
    dis_train_amount: int = 1
    train_plain_discriminators: bool = False
    seed: int = 0
    eval_every: int = 0
    adversarial_variant: str = "non_saturating"
    alternating_generators: bool = False

    def validate(self):
        self.arch.validate()
        self.weights.validate()
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.g_lr <= 0 or self.d_lr <= 0:
            raise ConfigError("learning rates must be positive")
        if self.dis_train_amount < 1:
            raise ConfigError("dis_train_amount must be at least 1")
        if self.total_batches < 0:
            raise ConfigError("total_batches must be nonnegative")
        if self.eval_every < 0:
            raise ConfigError("eval_every must be nonnegative")
        if self.adversarial_variant not in GEN_VARIANTS:
            raise ConfigError(f"unknown adversarial variant {self.adversarial_variant!r}")


def config_to_dict(config):
    return {
        "arch": asdict(config.arch),
        "weights": asdict(config.weights),
        "toggles": asdict(config.toggles),
        "train": {
            "g_lr": config.g_lr,
            "d_lr": config.d_lr,
            "batch_size": config.batch_size,
            "total_batches": config.total_batches,
            "dis_train_amount": config.dis_train_amount,
            "train_plain_discriminators": config.train_plain_discriminators,
            "seed": config.seed,
            "eval_every": config.eval_every,
            "adversarial_variant": config.adversarial_variant,
            "alternating_generators": config.alternating_generators,
        },
    }


def _build_section(cls, data, section):
    known = {f.name for f in cls.__dataclass_fields__.values()}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data):
    extra = set(data) - {"arch", "weights", "toggles", "train"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    arch = _build_section(ArchConfig, data.get("arch", {}), "arch")
    weights = _build_section(LossWeights, data.get("weights", {}), "weights")
    toggles = _build_section(LossToggles, data.get("toggles", {}), "toggles")
    train = dict(data.get("train", {}))
    known = {f.name for f in TrainConfig.__dataclass_fields__.values()} - {
        "arch", "weights", "toggles"
    }
    unknown = set(train) - known
    if unknown:
        raise ConfigError(f"unknown train keys: {sorted(unknown)}")
    cfg = TrainConfig(arch=arch, weights=weights, toggles=toggles, **train)
    cfg.validate()
    return cfg


# -------------------------------------------------------------- grad plumbing


def _merge_grads(grad_lists):
    """Sum per-layer gradient dicts across several backward passes."""
    out = [{k: v.copy() for k, v in layer.items()} for layer in grad_lists[0]]
    for other in grad_lists[1:]:
        for acc, extra in zip(out, other):
            for k, v in extra.items():
                acc[k] += v
    return out


def create_optimizers(model, config):
    """One Adam state per trained network (generators always; discs per config)."""
    opts = {
        "gen_xy": AdamState.for_params(model.gen_xy.trainable_arrays(), config.g_lr),
        "gen_yx": AdamState.for_params(model.gen_yx.trainable_arrays(), config.g_lr),
        "cond_disc_x": AdamState.for_params(model.cond_disc_x.trainable_arrays(), config.d_lr),
        "cond_disc_y": AdamState.for_params(model.cond_disc_y.trainable_arrays(), config.d_lr),
    }
    if config.train_plain_discriminators:
        opts["disc_x"] = AdamState.for_params(model.disc_x.trainable_arrays(), config.d_lr)
        opts["disc_y"] = AdamState.for_params(model.disc_y.trainable_arrays(), config.d_lr)
    return opts


# ---------------------------------------------------------- generator objective


def generator_objective(model, x, y, config, step):
    """Forward the full step graph and backpropagate the combined objective.

    Returns (breakdown, grads_xy, grads_yx, produced) where ``produced`` holds
    the detached fake/reconstruction batches the discriminator updates reuse.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    toggles, weights = config.toggles, config.weights
    seed = config.seed
    dim = model.arch.dim

    def stream(path):
        return RngState.for_purpose(seed, PATH_PURPOSES[path], step)

    # --- forwards (the cycle always runs: the discriminator updates need it)
    fake_y, tr_g1 = model.gen_xy.forward(x, mode="train", rng=stream("g1"))
    fake_x, tr_f1 = model.gen_yx.forward(y, mode="train", rng=stream("f1"))
    rec_x, tr_f2 = model.gen_yx.forward(fake_y, mode="train", rng=stream("f2"))
    rec_y, tr_g2 = model.gen_xy.forward(fake_x, mode="train", rng=stream("g2"))

    gan_x = gan_y = 0.0
    d_fake_y = np.zeros_like(fake_y)
    d_fake_x = np.zeros_like(fake_x)
    d_rec_x = np.zeros_like(rec_x)
    d_rec_y = np.zeros_like(rec_y)

    if toggles.adversarial:
        score_fy, tr_dy = model.disc_y.forward(fake_y, mode="frozen")
        score_fx, tr_dx = model.disc_x.forward(fake_x, mode="frozen")
        gan_y, d_score_fy = generator_adversarial_grad(score_fy, config.adversarial_variant)
        gan_x, d_score_fx = generator_adversarial_grad(score_fx, config.adversarial_variant)
        _, up = model.disc_y.backward(tr_dy, d_score_fy)
        d_fake_y += up
        _, up = model.disc_x.backward(tr_dx, d_score_fx)
        d_fake_x += up

    mm = MaxMarginTerms()
    if toggles.one_way_mm or toggles.cycle_mm:
        conf_rng = RngState.for_purpose(seed, PURPOSE_CONFOUNDERS, step)
        conf = draw_confounders(conf_rng, x.shape[0], weights.confounder_count(x.shape[0]))
        mm, mm_grads = max_margin_with_grads(fake_y, fake_x, rec_y, rec_x, x, y,
                                             weights, conf)
        if toggles.one_way_mm:
            d_fake_y += mm_grads["g_x"]
            d_fake_x += mm_grads["f_y"]
        if toggles.cycle_mm:
            d_rec_y += mm_grads["g_f_y"]
            d_rec_x += mm_grads["f_g_x"]

    cyc = 0.0
    if toggles.cycle_loss:
        cyc = cycle_loss(x, rec_x, y, rec_y)
        d_rec_x += weights.lambda_cyc * mae_grad(rec_x, x)
        d_rec_y += weights.lambda_cyc * mae_grad(rec_y, y)

    ccyc = 0.0
    if toggles.cycle_dis:
        # conditional discriminators judge reconstructions, conditioned on the
        # intermediate translation; gradient reaches both slots of the pair
        pair_x = np.concatenate([fake_y, rec_x], axis=1)
        score_cx, tr_cdx = model.cond_disc_x.forward(pair_x, mode="frozen")
        pair_y = np.concatenate([fake_x, rec_y], axis=1)
        score_cy, tr_cdy = model.cond_disc_y.forward(pair_y, mode="frozen")
        gen_cx, d_score_cx = generator_adversarial_grad(score_cx, config.adversarial_variant)
        gen_cy, d_score_cy = generator_adversarial_grad(score_cy, config.adversarial_variant)
        ccyc = gen_cx + gen_cy
        sigma = weights.sigma_ccyc
        _, up = model.cond_disc_x.backward(tr_cdx, sigma * d_score_cx)
        d_fake_y += up[:, :dim]
        d_rec_x += up[:, dim:]
        _, up = model.cond_disc_y.backward(tr_cdy, sigma * d_score_cy)
        d_fake_x += up[:, :dim]
        d_rec_y += up[:, dim:]

    # --- backprop through the cycle: reconstruction grads first, then the
    # second-pass input grads join the direct contributions on fake_y/fake_x
    grads_f2, up = model.gen_yx.backward(tr_f2, d_rec_x)
    d_fake_y += up
    grads_g2, up = model.gen_xy.backward(tr_g2, d_rec_y)
    d_fake_x += up
    grads_g1, _ = model.gen_xy.backward(tr_g1, d_fake_y)
    grads_f1, _ = model.gen_yx.backward(tr_f1, d_fake_x)

    grads_xy_parts = [grads_g1, grads_g2]
    grads_yx_parts = [grads_f1, grads_f2]

    id_term = 0.0
    if toggles.id_loss:
        id_y, tr_g3 = model.gen_xy.forward(y, mode="train", rng=stream("g3"))
        id_x, tr_f3 = model.gen_yx.forward(x, mode="train", rng=stream("f3"))
        id_term = identity_loss(id_y, y, id_x, x)
        gamma = weights.gamma_id
        grads_g3, _ = model.gen_xy.backward(tr_g3, gamma * mae_grad(id_y, y))
        grads_f3, _ = model.gen_yx.backward(tr_f3, gamma * mae_grad(id_x, x))
        grads_xy_parts.append(grads_g3)
        grads_yx_parts.append(grads_f3)

    breakdown = combined_objective(
        gan_x=gan_x, gan_y=gan_y, cyc=cyc, id=id_term, mm=mm, ccyc=ccyc,
        weights=weights, toggles=toggles,
    )
    produced = {"fake_y": fake_y, "fake_x": fake_x, "rec_x": rec_x, "rec_y": rec_y}
    return breakdown, _merge_grads(grads_xy_parts), _merge_grads(grads_yx_parts), produced


# ------------------------------------------------------- discriminator updates


def conditional_discriminator_objective(disc, condition, real_sample, fake_sample,
                                        mode="train", rng_real=None, rng_fake=None):
    """Loss and parameter gradients for one conditional discriminator update.

    Real and fake pairs go through separate forward passes; inputs are plain
    arrays, so nothing propagates back into the generators.
    """
    pair_real = np.concatenate([condition, real_sample], axis=1)
    pair_fake = np.concatenate([condition, fake_sample], axis=1)
    score_r, tr_r = disc.forward(pair_real, mode=mode, rng=rng_real)
    score_f, tr_f = disc.forward(pair_fake, mode=mode, rng=rng_fake)
    loss, d_r, d_f = discriminator_loss_grads(score_r, score_f)
    grads_r, _ = disc.backward(tr_r, d_r)
    grads_f, _ = disc.backward(tr_f, d_f)
    return loss, _merge_grads([grads_r, grads_f])


def _disc_stream(seed, base, net_idx, iteration, is_fake, step):
    purpose = base + net_idx * 16 + iteration * 2 + (1 if is_fake else 0)
    return RngState.for_purpose(seed, purpose, step)


def _train_discriminators(model, x, y, produced, config, optimizers, step):
    seed = config.seed
    for it in range(config.dis_train_amount):
        jobs = [
            ("cond_disc_x", 0, model.cond_disc_x, produced["fake_y"], x, produced["rec_x"]),
            ("cond_disc_y", 1, model.cond_disc_y, produced["fake_x"], y, produced["rec_y"]),
        ]
        for name, net_idx, disc, condition, real_sample, fake_sample in jobs:
            _, grads = conditional_discriminator_objective(
                disc, condition, real_sample, fake_sample, mode="train",
                rng_real=_disc_stream(seed, PURPOSE_COND_DISC_BASE, net_idx, it, False, step),
                rng_fake=_disc_stream(seed, PURPOSE_COND_DISC_BASE, net_idx, it, True, step),
            )
            adam_step(disc.trainable_arrays(), disc.flatten_grads(grads), optimizers[name])

        if config.train_plain_discriminators:
            plain = [
                ("disc_x", 0, model.disc_x, x, produced["fake_x"]),
                ("disc_y", 1, model.disc_y, y, produced["fake_y"]),
            ]
            for name, net_idx, disc, real_sample, fake_sample in plain:
                sr, tr_r = disc.forward(
                    real_sample, mode="train",
                    rng=_disc_stream(seed, PURPOSE_PLAIN_DISC_BASE, net_idx, it, False, step),
                )
                sf, tr_f = disc.forward(
                    fake_sample, mode="train",
                    rng=_disc_stream(seed, PURPOSE_PLAIN_DISC_BASE, net_idx, it, True, step),
                )
                _, d_r, d_f = discriminator_loss_grads(sr, sf)
                g_r, _ = disc.backward(tr_r, d_r)
                g_f, _ = disc.backward(tr_f, d_f)
                grads = _merge_grads([g_r, g_f])
                adam_step(disc.trainable_arrays(), disc.flatten_grads(grads), optimizers[name])


# ------------------------------------------------------------------- stepping


def train_step(model, x_batch, y_batch, config, optimizers, step):
    """One full optimization step; returns the generator-side LossBreakdown."""
    x_batch = np.asarray(x_batch, dtype=np.float64)
    if x_batch.shape[0] < 2:
        raise DomainError("a training batch needs at least 2 paired rows")
    breakdown, grads_xy, grads_yx, produced = generator_objective(
        model, x_batch, y_batch, config, step
    )
    update_xy = update_yx = True
    if config.alternating_generators:
        update_xy = step % 2 == 0
        update_yx = not update_xy
    if update_xy:
        adam_step(model.gen_xy.trainable_arrays(),
                  model.gen_xy.flatten_grads(grads_xy), optimizers["gen_xy"])
    if update_yx:
        adam_step(model.gen_yx.trainable_arrays(),
                  model.gen_yx.flatten_grads(grads_yx), optimizers["gen_yx"])
    _train_discriminators(model, x_batch, y_batch, produced, config, optimizers, step)
    return breakdown


@dataclass
class TrainLog:
    """In-memory record of one run: per-step losses and eval snapshots."""

    steps: list = field(default_factory=list)
    breakdowns: list = field(default_factory=list)
    evals: list = field(default_factory=list)  # (step, metric_name, value)

    def record(self, step, breakdown):
        self.steps.append(step)
        self.breakdowns.append(breakdown)

    def series(self, fieldname):
        return [getattr(b, fieldname) for b in self.breakdowns]


@dataclass
class TrainResult:
    model: RetroGanModel
    log: TrainLog
    optimizers: dict | None = None
    best_model: RetroGanModel | None = None
    best_step: int = -1
    best_score: float = float("nan")


def _epoch_batches(n, batch_size):
    """Slice boundaries for one shuffled pass; tail kept when it has >= 2 rows."""
    bounds = []
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        if stop - start >= 2:
            bounds.append((start, stop))
    if not bounds:
        raise DataError(f"corpus of {n} rows yields no usable batch")
    return bounds


def train(corpus, config, *, eval_fn=None, log_path=None, model=None,
          optimizers=None, start_step=0):
    """Run the training loop over an aligned paired corpus.

    ``corpus`` needs row-aligned ``x_vectors`` and ``y_vectors``.  ``eval_fn``,
    when given, is called as eval_fn(model, step) -> dict[str, float] every
    ``eval_every`` steps; the running best model is tracked on the "score"
    entry (falling back to the mean of all entries).  Passing ``model``,
    ``optimizers`` and ``start_step`` resumes a checkpointed run; the
    stream-addressed randomness makes the resumed trajectory identical to the
    uninterrupted one.
    """
    config.validate()
    x_all = np.asarray(corpus.x_vectors, dtype=np.float64)
    y_all = np.asarray(corpus.y_vectors, dtype=np.float64)
    if x_all.shape != y_all.shape:
        raise DataError(f"corpus sides differ in shape: {x_all.shape} vs {y_all.shape}")
    n = x_all.shape[0]
    if n == 0:
        raise DataError("empty corpus")

    if model is None:
        model = build_model(config.arch, config.seed)
    if optimizers is None:
        optimizers = create_optimizers(model, config)

    bounds = _epoch_batches(n, config.batch_size)
    per_epoch = len(bounds)

    log = TrainLog()
    result = TrainResult(model=model, log=log, optimizers=optimizers)
    log_file = open(log_path, "a", buffering=1) if log_path else None
    try:
        perm = None
        perm_epoch = -1
        for step in range(start_step, config.total_batches):
            epoch, slot = divmod(step, per_epoch)
            if epoch != perm_epoch:
                perm = RngState.for_purpose(config.seed, PURPOSE_SHUFFLE, epoch).permutation(n)
                perm_epoch = epoch
            lo, hi = bounds[slot]
            idx = perm[lo:hi]
            breakdown = train_step(model, x_all[idx], y_all[idx], config, optimizers, step)
            log.record(step, breakdown)
            if log_file:
                vals = "\t".join(f"{v:.17g}" for v in breakdown.as_tuple())
                log_file.write(f"loss\t{step}\t{vals}\n")

            if eval_fn is not None and config.eval_every > 0 and (step + 1) % config.eval_every == 0:
                metrics = eval_fn(model, step)
                for name_, value in sorted(metrics.items()):
                    log.evals.append((step, name_, float(value)))
                    if log_file:
                        log_file.write(f"eval\t{step}\t{name_}\t{value:.17g}\n")
                score = metrics.get("score", float(np.mean(list(metrics.values()))))
                if not (score <= result.best_score):  # first eval or improvement
                    result.best_score = score
                    result.best_step = step
                    result.best_model = model.clone()
    finally:
        if log_file:
            log_file.close()
    return result


# ----------------------------------------------------------------- checkpoints


def _checkpoint_blocks(model, optimizers):
    """(name, array) pairs in the exact order blocks are written."""
    blocks = []
    for name, net in model.networks():
        for layer_idx, param_name, arr in net.state_items():
            blocks.append((f"{name}/{layer_idx}/{param_name}", arr))
    for opt_name in sorted(optimizers):
        state = optimizers[opt_name]
        for kind in ("m", "v"):
            for i, arr in enumerate(getattr(state, kind)):
                blocks.append((f"adam/{opt_name}/{kind}/{i}", arr))
    return blocks


def save_checkpoint(model, optimizers, config, path, step):
    """Write model state, optimizer moments, and run config to one binary file.

    Layout: magic, u32 format version, u32 header length, JSON header (config,
    step, random scheme, block manifest, optimizer scalars), then raw
    little-endian float64 C-order blocks in manifest order.
    """
    blocks = _checkpoint_blocks(model, optimizers)
    header = {
        "format": "retrogan-checkpoint",
        "version": CHECKPOINT_VERSION,
        "step": int(step),
        "config": config_to_dict(config),
        "rng": {"seed": int(config.seed), "scheme": RNG_SCHEME},
        "blocks": [{"name": n, "shape": list(a.shape)} for n, a in blocks],
        "adam": {
            name: {
                "t": optimizers[name].t,
                "lr": optimizers[name].lr,
                "beta1": optimizers[name].beta1,
                "beta2": optimizers[name].beta2,
                "eps": optimizers[name].eps,
            }
            for name in sorted(optimizers)
        },
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(payload)))
        fh.write(payload)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, expected_arch=None):
    """Restore (model, optimizers, config, step) from save_checkpoint output."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc

    if len(raw) < len(CHECKPOINT_MAGIC) + 8 or not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    off = len(CHECKPOINT_MAGIC)
    version, header_len = struct.unpack_from("<II", raw, off)
    off += 8
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if len(raw) < off + header_len:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(raw[off : off + header_len].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    off += header_len

    try:
        config = config_from_dict(header["config"])
        step = int(header["step"])
        manifest = header["blocks"]
        adam_meta = header["adam"]
    except (KeyError, ConfigError) as exc:
        raise CheckpointError(f"invalid checkpoint header: {exc}") from exc

    if expected_arch is not None and asdict(expected_arch) != asdict(config.arch):
        raise CheckpointError(
            "architecture mismatch between checkpoint and requested config"
        )

    model = build_model(config.arch, config.seed)
    optimizers = create_optimizers(model, config)
    if set(adam_meta) != set(optimizers):
        raise CheckpointError("optimizer sets differ between checkpoint and config")
    for name, meta in adam_meta.items():
        st = optimizers[name]
        st.t = int(meta["t"])
        st.lr, st.beta1, st.beta2, st.eps = (
            float(meta["lr"]), float(meta["beta1"]), float(meta["beta2"]), float(meta["eps"]),
        )

    targets = {n: a for n, a in _checkpoint_blocks(model, optimizers)}
    if [b["name"] for b in manifest] != [n for n, _ in _checkpoint_blocks(model, optimizers)]:
        raise CheckpointError("block manifest does not match the declared architecture")
    for entry in manifest:
        arr = targets[entry["name"]]
        if list(arr.shape) != entry["shape"]:
            raise CheckpointError(
                f"block {entry['name']} has shape {entry['shape']}, expected {list(arr.shape)}"
            )
        nbytes = arr.size * 8
        if len(raw) < off + nbytes:
            raise CheckpointError(f"truncated checkpoint data at block {entry['name']}")
        loaded = np.frombuffer(raw[off : off + nbytes], dtype="<f8").reshape(arr.shape)
        arr[...] = loaded.astype(arr.dtype)
        off += nbytes
    if off != len(raw):
        raise CheckpointError(f"{len(raw) - off} trailing bytes after final block")
    return model, optimizers, config, step
