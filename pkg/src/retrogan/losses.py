"""Every term of the combined training objective, as testable scalar functions.

The objective couples six pieces:

* two adversarial terms (one per mapping direction),
* an L1 cycle-consistency term,
* an L1 identity term,
* a max-margin term with in-batch confounders (four sub-terms: the two direct
  mapping directions and the two cycle reconstructions),
* a conditional cycle term in which trained discriminators judge a
  reconstruction against the original, conditioned on the intermediate
  translation.

total = gan_x + gan_y + lambda*cyc + gamma*id + mm + sigma*ccyc

where mm is the unweighted sum of its four sub-terms (the margin delta acts
inside each hinge).  Each term can be toggled off independently; a toggled-off
term contributes exactly zero to both its breakdown field and the total.

All reductions are means over batch rows (and confounders), so magnitudes are
batch-size independent.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateVectorError,
    DomainError,
    InsufficientConfoundersError,
    ShapeError,
)
from .models import conditional_score

SCORE_CLAMP = 1e-7

GEN_VARIANTS = ("non_saturating", "minimax")


@dataclass
class LossWeights:
    """Scaling factors and margin parameters for the combined objective."""

    lambda_cyc: float = 1.0
    gamma_id: float = 0.01
    sigma_ccyc: float = 1.0
    delta_mm: float = 1.0
    k_confounders: int | None = None  # None -> min(10, batch_size - 1)

    def validate(self):
        for name in ("lambda_cyc", "gamma_id", "sigma_ccyc", "delta_mm"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")
        if self.k_confounders is not None and self.k_confounders < 1:
            raise DomainError("k_confounders must be at least 1")

    def confounder_count(self, batch_size):
        if batch_size < 2:
            raise InsufficientConfoundersError(
                f"need a batch of at least 2 rows, got {batch_size}"
            )
        k = self.k_confounders
        if k is None:
            return min(10, batch_size - 1)
        if k > batch_size - 1:
            raise InsufficientConfoundersError(
                f"cannot draw {k} distinct confounders from a batch of {batch_size}"
            )
        return k


@dataclass
class LossToggles:
    """Independent on/off switches for each objective term."""

    adversarial: bool = True
    one_way_mm: bool = True
    cycle_mm: bool = True
    cycle_dis: bool = True
    id_loss: bool = True
    cycle_loss: bool = True


@dataclass
class LossBreakdown:
    """All component scalars of one objective evaluation plus their weighted total."""

    gan_x: float = 0.0
    gan_y: float = 0.0
    cyc: float = 0.0
    id: float = 0.0
    mm_forward: float = 0.0
    mm_backward: float = 0.0
    mm_cycle_y: float = 0.0
    mm_cycle_x: float = 0.0
    ccyc: float = 0.0
    total: float = 0.0

    FIELD_ORDER = (
        "gan_x", "gan_y", "cyc", "id",
        "mm_forward", "mm_backward", "mm_cycle_y", "mm_cycle_x",
        "ccyc", "total",
    )

    def as_tuple(self):
        return tuple(getattr(self, f) for f in self.FIELD_ORDER)


# ---------------------------------------------------------------- adversarial


def _checked_scores(scores):
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ShapeError("empty score batch")
    if (s < 0.0).any() or (s > 1.0).any():
        raise DomainError("discriminator scores must lie in [0, 1]")
    return np.clip(s, SCORE_CLAMP, 1.0 - SCORE_CLAMP)


def discriminator_loss(real_scores, fake_scores):
    """-mean(log D(real)) - mean(log(1 - D(fake))); 2 ln 2 at chance scores."""
    r = _checked_scores(real_scores)
    f = _checked_scores(fake_scores)
    return float(-np.mean(np.log(r)) - np.mean(np.log(1.0 - f)))


def discriminator_loss_grads(real_scores, fake_scores):
    """(loss, d/d_real, d/d_fake), gradients shaped like the inputs."""
    r = _checked_scores(real_scores)
    f = _checked_scores(fake_scores)
    loss = float(-np.mean(np.log(r)) - np.mean(np.log(1.0 - f)))
    d_r = (-1.0 / (r.size * r)).reshape(np.shape(real_scores))
    d_f = (1.0 / (f.size * (1.0 - f))).reshape(np.shape(fake_scores))
    return loss, d_r, d_f


def generator_adversarial_loss(fake_scores, variant="non_saturating"):
    """Generator-side score loss: -mean(log D(fake)) or mean(log(1 - D(fake)))."""
    f = _checked_scores(fake_scores)
    if variant == "non_saturating":
        return float(-np.mean(np.log(f)))
    if variant == "minimax":
        return float(np.mean(np.log(1.0 - f)))
    raise DomainError(f"unknown adversarial variant {variant!r}")


def generator_adversarial_grad(fake_scores, variant="non_saturating"):
    """(loss, d/d_fake_scores)."""
    f = _checked_scores(fake_scores)
    if variant == "non_saturating":
        loss = float(-np.mean(np.log(f)))
        d_f = -1.0 / (f.size * f)
    elif variant == "minimax":
        loss = float(np.mean(np.log(1.0 - f)))
        d_f = -1.0 / (f.size * (1.0 - f))
    else:
        raise DomainError(f"unknown adversarial variant {variant!r}")
    return loss, d_f.reshape(np.shape(fake_scores))


def adversarial_loss(disc_scores_real, disc_scores_fake, variant="non_saturating"):
    """(disc_loss, gen_loss) for one discriminator's view of one batch pair."""
    return (
        discriminator_loss(disc_scores_real, disc_scores_fake),
        generator_adversarial_loss(disc_scores_fake, variant=variant),
    )


# ------------------------------------------------------------- L1-style terms


def mae(a, b):
    """Mean absolute error over all elements."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def mae_grad(a, b):
    """d mae(a, b) / d a  (sign pattern over the element count)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return np.sign(a - b) / a.size


def cycle_loss(x, f_of_g_x, y, g_of_f_y):
    """MAE of both round-trip reconstructions, summed."""
    return mae(f_of_g_x, x) + mae(g_of_f_y, y)


def identity_loss(g_of_y, y, f_of_x, x):
    """MAE penalty for disturbing an input already in the generator's target domain."""
    return mae(g_of_y, y) + mae(f_of_x, x)


# ----------------------------------------------------------------- max margin


@dataclass
class MaxMarginTerms:
    """The four sub-terms of the in-batch confounder margin loss."""

    forward: float = 0.0   # G(x) vs gold y
    backward: float = 0.0  # F(y) vs gold x
    cycle_y: float = 0.0   # G(F(y)) vs gold y
    cycle_x: float = 0.0   # F(G(x)) vs gold x

    def total(self):
        return self.forward + self.backward + self.cycle_y + self.cycle_x


def draw_confounders(rng, batch_size, k):
    """A (batch_size, k) index matrix; row i holds k distinct indices != i.

    One matrix is drawn per training step and shared by all four margin
    sub-terms, so every sub-term contrasts the same confounder set.
    """
    if batch_size < 2:
        raise InsufficientConfoundersError(
            f"need a batch of at least 2 rows, got {batch_size}"
        )
    if k < 1 or k > batch_size - 1:
        raise InsufficientConfoundersError(
            f"cannot draw {k} distinct confounders from a batch of {batch_size}"
        )
    out = np.empty((batch_size, k), dtype=np.int64)
    for i in range(batch_size):
        draw = rng.choice(batch_size - 1, size=k, replace=False)
        out[i] = np.where(draw >= i, draw + 1, draw)
    return out


def _unit_rows(m, what):
    m = np.asarray(m, dtype=np.float64)
    norms = np.sqrt((m * m).sum(axis=1))
    if (norms < 1e-12).any():
        row = int(np.nonzero(norms < 1e-12)[0][0])
        raise DegenerateVectorError(f"{what} row {row} has near-zero norm", row=row)
    return m / norms[:, None], norms


def _margin_term(pred, gold, delta, conf):
    """mean_{i,j} max(0, delta - cos(pred_i, gold_i) + cos(pred_i, gold_{conf_ij}))."""
    pred_hat, _ = _unit_rows(pred, "prediction")
    gold_hat, _ = _unit_rows(gold, "gold")
    cos_all = pred_hat @ gold_hat.T
    pos = np.diag(cos_all)
    neg = cos_all[np.arange(len(pred_hat))[:, None], conf]
    hinge = np.maximum(0.0, delta - pos[:, None] + neg)
    return float(hinge.mean())


def _margin_term_grad(pred, gold, delta, conf):
    """(value, d/d_pred).  The gold side carries no gradient (it is data).

    With unit rows u_i = pred_i/|pred_i|, g_m = gold_m/|gold_m|, active set
    a_ij = 1[hinge > 0], A_i = sum_j a_ij, the gradient w.r.t. the raw
    prediction row is

        ( -A_i g^_i  +  sum_j a_ij g^_{conf_ij}
          + (A_i cos(u_i,g^_i) - sum_j a_ij cos(u_i, g^_{conf_ij})) u_i )
        / (b k |pred_i|)
    """
    pred = np.asarray(pred, dtype=np.float64)
    b, k = conf.shape
    pred_hat, pred_norm = _unit_rows(pred, "prediction")
    gold_hat, _ = _unit_rows(gold, "gold")
    cos_all = pred_hat @ gold_hat.T
    pos = np.diag(cos_all).copy()
    rows = np.arange(b)[:, None]
    neg = cos_all[rows, conf]
    hinge = delta - pos[:, None] + neg
    active = (hinge > 0.0).astype(np.float64)
    value = float(np.maximum(0.0, hinge).mean())

    a_row = active.sum(axis=1)
    # scatter the active confounder weights back onto gold rows
    weights = np.zeros((b, b))
    np.add.at(weights, (rows, conf), active)
    along_gold = -a_row[:, None] * gold_hat + weights @ gold_hat
    radial = (a_row * pos - (active * neg).sum(axis=1))[:, None] * pred_hat
    grad = (along_gold + radial) / (b * k * pred_norm[:, None])
    return value, grad


def max_margin_loss(g_x, f_y, g_f_y, f_g_x, x_batch, y_batch, weights, rng=None,
                    confounders=None):
    """All four margin sub-terms on one aligned batch; returns MaxMarginTerms.

    Either a confounder index matrix or a random stream to draw one must be
    supplied; the same matrix is used for all four sub-terms.
    """
    x_batch = np.asarray(x_batch, dtype=np.float64)
    y_batch = np.asarray(y_batch, dtype=np.float64)
    b = x_batch.shape[0]
    if confounders is None:
        if rng is None:
            raise DomainError("max_margin_loss needs either confounders or a random stream")
        confounders = draw_confounders(rng, b, weights.confounder_count(b))
    delta = weights.delta_mm
    return MaxMarginTerms(
        forward=_margin_term(g_x, y_batch, delta, confounders),
        backward=_margin_term(f_y, x_batch, delta, confounders),
        cycle_y=_margin_term(g_f_y, y_batch, delta, confounders),
        cycle_x=_margin_term(f_g_x, x_batch, delta, confounders),
    )


def max_margin_with_grads(g_x, f_y, g_f_y, f_g_x, x_batch, y_batch, weights,
                          confounders):
    """(MaxMarginTerms, gradients w.r.t. the four prediction batches)."""
    delta = weights.delta_mm
    fwd, d_g_x = _margin_term_grad(g_x, y_batch, delta, confounders)
    bwd, d_f_y = _margin_term_grad(f_y, x_batch, delta, confounders)
    cy, d_g_f_y = _margin_term_grad(g_f_y, y_batch, delta, confounders)
    cx, d_f_g_x = _margin_term_grad(f_g_x, x_batch, delta, confounders)
    terms = MaxMarginTerms(forward=fwd, backward=bwd, cycle_y=cy, cycle_x=cx)
    grads = {"g_x": d_g_x, "f_y": d_f_y, "g_f_y": d_g_f_y, "f_g_x": d_f_g_x}
    return terms, grads


# ----------------------------------------------------------- conditional cycle


def conditional_cycle_loss(model, x, y, g_x, f_y, f_g_x, g_f_y, mode="frozen",
                           variant="non_saturating"):
    """Conditional-discriminator view of the cycle reconstructions.

    The X-side discriminator, conditioned on the translation G(x), scores the
    original x as real and the reconstruction F(G(x)) as fake; the Y-side
    discriminator mirrors this with F(y), y, and G(F(y)).  Returns
    (disc_c_loss, gen_c_loss): the discriminators' training loss and the
    fake-detection terms the generators try to defeat.
    """
    real_x, _ = conditional_score(model.cond_disc_x, g_x, x, mode=mode)
    fake_x, _ = conditional_score(model.cond_disc_x, g_x, f_g_x, mode=mode)
    real_y, _ = conditional_score(model.cond_disc_y, f_y, y, mode=mode)
    fake_y, _ = conditional_score(model.cond_disc_y, f_y, g_f_y, mode=mode)
    disc_c = discriminator_loss(real_x, fake_x) + discriminator_loss(real_y, fake_y)
    gen_c = (
        generator_adversarial_loss(fake_x, variant=variant)
        + generator_adversarial_loss(fake_y, variant=variant)
    )
    return disc_c, gen_c


# ------------------------------------------------------------------- combined


def combined_objective(*, gan_x=0.0, gan_y=0.0, cyc=0.0, id=0.0, mm=None,
                       ccyc=0.0, weights=None, toggles=None):
    """Assemble a LossBreakdown from raw component scalars.

    ``mm`` is a MaxMarginTerms (or None).  Toggled-off terms are zeroed in
    both their breakdown field and the total, so disabling a term is exactly
    equivalent to a zero weight.
    """
    weights = weights or LossWeights()
    toggles = toggles or LossToggles()
    mm = mm or MaxMarginTerms()

    out = LossBreakdown(
        gan_x=gan_x if toggles.adversarial else 0.0,
        gan_y=gan_y if toggles.adversarial else 0.0,
        cyc=cyc if toggles.cycle_loss else 0.0,
        id=id if toggles.id_loss else 0.0,
        mm_forward=mm.forward if toggles.one_way_mm else 0.0,
        mm_backward=mm.backward if toggles.one_way_mm else 0.0,
        mm_cycle_y=mm.cycle_y if toggles.cycle_mm else 0.0,
        mm_cycle_x=mm.cycle_x if toggles.cycle_mm else 0.0,
        ccyc=ccyc if toggles.cycle_dis else 0.0,
    )
    out.total = (
        out.gan_x
        + out.gan_y
        + weights.lambda_cyc * out.cyc
        + weights.gamma_id * out.id
        + out.mm_forward + out.mm_backward + out.mm_cycle_y + out.mm_cycle_x
        + weights.sigma_ccyc * out.ccyc
    )
    return out
