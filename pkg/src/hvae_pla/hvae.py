"""Hierarchical VAE: an auto-encoder front end wrapped around two VAE units.

Data flow for a column batch ``X`` of shape ``(input_dim, n)``::

    H      = enc(X)                       3 ReLU layers, input_dim -> h
    mu_i, log_var_i = head_i(H)           i = 1, 2; one linear layer h -> 2z
    Z_i    = mu_i + eps_i * sigma_i
    Hdot   = dec_1(Z_1) + dec_2(Z_2)      one tanh layer each, z -> h
    X_hat  = dec(Hdot)                    3 layers, h -> input_dim, linear output

Unit 1 is regularised towards N(0, I); unit 2 towards the double-peak mixture
``w N(-m, s^2) + (1 - w) N(m, s^2)``. Every input-to-output path crosses 8 layers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kl
from .kl import LatentGaussian
from .nn import (DenseLayer, ShapeError, TrainConfig, layer_widths, minibatch_train,
                 stack_backward, stack_forward)

log = logging.getLogger(__name__)

LOG_VAR_CLAMP = 10.0
KL_MODES = ("bound", "exact")


@dataclass
class HvaeConfig:
    input_dim: int = 128
    h: int = 64
    z: int = 32
    double_peak_m: float = 1.0
    double_peak_s: float = 1.0
    prior_weight: float = 0.5
    kl2_weight: float = 1.0
    kl3_weight: float = 1.0
    kl_mode: str = "bound"
    detach_target: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not 1 <= self.z <= self.h <= self.input_dim:
            raise ValueError(f"need 1 <= z <= h <= input_dim, got z={self.z}, h={self.h}, "
                             f"input_dim={self.input_dim}")
        if not (self.double_peak_m > 0 and self.double_peak_s > 0):
            raise ValueError("double_peak_m and double_peak_s must be > 0")
        if not 0.0 < self.prior_weight < 1.0:
            raise ValueError(f"prior_weight must be in (0, 1), got {self.prior_weight}")
        if self.kl2_weight < 0 or self.kl3_weight < 0:
            raise ValueError("KL weights must be nonnegative")
        if self.kl_mode not in KL_MODES:
            raise ValueError(f"kl_mode must be one of {KL_MODES}, got {self.kl_mode!r}")
        if self.kl_mode == "exact" and self.prior_weight != 0.5:
            raise ValueError("the exact double-peak approximation requires prior_weight = 0.5")


class HvaeModel:
    kind = "tf_hvae"

    def __init__(self, config: HvaeConfig, encoder, head1, dec1, head2, dec2, decoder):
        self.config = config
        self.encoder = list(encoder)
        self.head1, self.dec1 = head1, dec1
        self.head2, self.dec2 = head2, dec2
        self.decoder = list(decoder)
        self.trained = False

    @classmethod
    def build(cls, config: HvaeConfig, seed: int | None = None) -> "HvaeModel":
        rng = np.random.default_rng(config.train.seed if seed is None else seed)
        widths = layer_widths(config.input_dim, config.h, 3)
        encoder = [DenseLayer.initialize(widths[i], widths[i + 1], "relu", rng, f"enc{i}")
                   for i in range(3)]
        head1 = DenseLayer.initialize(config.h, 2 * config.z, "identity", rng, "head1")
        dec1 = DenseLayer.initialize(config.z, config.h, "tanh", rng, "dec1")
        head2 = DenseLayer.initialize(config.h, 2 * config.z, "identity", rng, "head2")
        dec2 = DenseLayer.initialize(config.z, config.h, "tanh", rng, "dec2")
        back = widths[::-1]
        acts = ["relu", "relu", "identity"]
        decoder = [DenseLayer.initialize(back[i], back[i + 1], acts[i], rng, f"dec{i}")
                   for i in range(3)]
        return cls(config, encoder, head1, dec1, head2, dec2, decoder)

    @property
    def layers(self) -> list[DenseLayer]:
        return [*self.encoder, self.head1, self.dec1, self.head2, self.dec2, *self.decoder]

    def path_depth(self) -> int:
        """Number of dense layers between input and reconstruction."""
        return len(self.encoder) + 2 + len(self.decoder)

    def embed(self, samples: np.ndarray) -> np.ndarray:
        return encode_z2(self, samples)


@dataclass
class ForwardTrace:
    X: np.ndarray
    H: np.ndarray
    g1: LatentGaussian
    g2: LatentGaussian
    Z1: np.ndarray
    Z2: np.ndarray
    Hdot: np.ndarray
    X_hat: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    log_var1_raw: np.ndarray
    log_var2_raw: np.ndarray
    cache: dict = field(repr=False, default_factory=dict)


def reparameterize(g: LatentGaussian, eps: np.ndarray) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.shape != np.shape(g.mu):
        raise ShapeError(f"eps shape {eps.shape} != mu shape {np.shape(g.mu)}")
    return g.mu + eps * g.sigma


def _split_head(out, z):
    mu, raw = out[:z], out[z:]
    return mu, raw, np.clip(raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)


def forward_hvae(model: HvaeModel, X: np.ndarray, rng: np.random.Generator | None = None,
                 deterministic: bool = False, eps=None) -> ForwardTrace:
    """Forward pass over a column batch ``X`` of shape ``(input_dim, n)``.

    In deterministic mode both latents are set to their means. ``eps`` may
    supply the two standard-normal draws explicitly as a pair.
    """
    X = np.asarray(X, dtype=float)
    cfg = model.config
    if X.ndim != 2 or X.shape[0] != cfg.input_dim:
        raise ShapeError(f"expected ({cfg.input_dim}, batch) input, got {X.shape}")
    n = X.shape[1]
    H, enc_cache = stack_forward(model.encoder, X)
    latents = []
    for i, (head, dec) in enumerate(((model.head1, model.dec1), (model.head2, model.dec2))):
        head_out, head_cache = stack_forward([head], H)
        mu, raw, log_var = _split_head(head_out, cfg.z)
        g = LatentGaussian.from_log_var(mu, log_var)
        if deterministic:
            e = np.zeros_like(mu)
        elif eps is not None:
            e = np.asarray(eps[i], dtype=float)
        else:
            if rng is None:
                raise ValueError("stochastic forward pass needs an rng or explicit eps")
            e = rng.standard_normal((cfg.z, n))
        Z = reparameterize(g, e)
        dec_out, dec_cache = stack_forward([dec], Z)
        latents.append((g, e, Z, raw, head_cache, dec_out, dec_cache))
    (g1, e1, Z1, raw1, hc1, d1, dc1), (g2, e2, Z2, raw2, hc2, d2, dc2) = latents
    Hdot = d1 + d2
    X_hat, dec_cache = stack_forward(model.decoder, Hdot)
    return ForwardTrace(X, H, g1, g2, Z1, Z2, Hdot, X_hat, e1, e2, raw1, raw2,
                        {"enc": enc_cache, "head1": hc1, "dec1": dc1, "head2": hc2,
                         "dec2": dc2, "dec": dec_cache})


def loss_ae(X, X_hat) -> float:
    """Batch mean of the per-sample squared reconstruction error."""
    diff = np.asarray(X, dtype=float) - np.asarray(X_hat, dtype=float)
    if diff.ndim == 1:
        return float(np.sum(diff * diff))
    return float(np.mean(np.sum(diff * diff, axis=0)))


def loss_z1(trace: ForwardTrace, H=None, kl_weight: float = 1.0) -> float:
    H = trace.H if H is None else H
    recon = np.sum((H - trace.Hdot) ** 2, axis=0)
    return float(np.mean(recon + kl_weight * kl.kl_standard_normal(trace.g1.mu, trace.g1.sigma)))


def double_peak_kl(g: LatentGaussian, config: HvaeConfig):
    m, s = config.double_peak_m, config.double_peak_s
    if config.kl_mode == "exact":
        return kl.kl_double_peak_exact(g.mu, g.sigma, m, s)
    return kl.kl_double_peak_bound(g.mu, g.sigma, m, s, config.prior_weight)


def loss_z2(trace: ForwardTrace, config: HvaeConfig) -> float:
    if config.kl3_weight == 0:
        return 0.0
    return float(config.kl3_weight * np.mean(double_peak_kl(trace.g2, config)))


def total_loss(trace: ForwardTrace, X, config: HvaeConfig):
    """Return ``(L, {"L1": ..., "L2": ..., "L3": ...})`` with ``L = L1 + L2 + L3``."""
    terms = {
        "L1": loss_ae(X, trace.X_hat),
        "L2": loss_z1(trace, kl_weight=config.kl2_weight),
        "L3": loss_z2(trace, config),
    }
    return terms["L1"] + terms["L2"] + terms["L3"], terms


def hvae_gradients(model: HvaeModel, trace: ForwardTrace):
    """Gradients of :func:`total_loss` for every layer, aligned with ``model.layers``.

    With ``config.detach_target`` the encoder output ``H`` is held constant
    where it serves as the target of ``||H - Hdot||^2``; otherwise this is the
    exact gradient of the total loss.
    """
    cfg = model.config
    n = trace.X.shape[1]
    c = trace.cache
    g_xhat = 2.0 * (trace.X_hat - trace.X)
    dec_grads, g_hdot = stack_backward(model.decoder, c["dec"], g_xhat, n)
    g_hdot = g_hdot + 2.0 * (trace.Hdot - trace.H)
    # with a detached target, ||H - Hdot||^2 only trains the two latent units
    g_h = np.zeros_like(trace.H) if cfg.detach_target else 2.0 * (trace.H - trace.Hdot)

    m, s = cfg.double_peak_m, cfg.double_peak_s
    unit_grads = []
    for unit in (1, 2):
        g = trace.g1 if unit == 1 else trace.g2
        eps = trace.eps1 if unit == 1 else trace.eps2
        raw = trace.log_var1_raw if unit == 1 else trace.log_var2_raw
        dec = model.dec1 if unit == 1 else model.dec2
        head = model.head1 if unit == 1 else model.head2
        (dgrad,), g_z = stack_backward([dec], c[f"dec{unit}"], g_hdot, n)
        g_mu = g_z.copy()
        g_lv = g_z * eps * g.sigma * 0.5
        if unit == 1:
            k_mu, k_lv = kl.kl_standard_normal_grad(g.mu, g.sigma)
            w = cfg.kl2_weight
        elif cfg.kl_mode == "exact":
            k_mu, k_lv = kl.kl_double_peak_exact_grad(g.mu, g.sigma, m, s)
            w = cfg.kl3_weight
        else:
            k_mu, k_lv = kl.kl_double_peak_bound_grad(g.mu, g.sigma, m, s, cfg.prior_weight)
            w = cfg.kl3_weight
        g_mu += w * k_mu
        g_lv += w * k_lv
        g_lv = g_lv * (np.abs(raw) < LOG_VAR_CLAMP)
        (hgrad,), g_h_unit = stack_backward([head], c[f"head{unit}"],
                                            np.vstack([g_mu, g_lv]), n)
        g_h = g_h + g_h_unit
        unit_grads.append((hgrad, dgrad))
    enc_grads, _ = stack_backward(model.encoder, c["enc"], g_h, n)
    (h1, d1), (h2, d2) = unit_grads
    return [*enc_grads, h1, d1, h2, d2, *dec_grads]


def _as_rows(samples, dim):
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[None, :]
    if samples.ndim != 2 or samples.shape[1] != dim:
        raise ShapeError(f"expected samples with {dim} features, got shape {samples.shape}")
    return samples


def train(model: HvaeModel, samples: np.ndarray, reference: np.ndarray | None = None,
          config: TrainConfig | None = None) -> list[float]:
    """Fit the model on normalised ``samples`` (one row per CIR).

    ``reference`` is the trusted pilot CIR; it is prepended to the training set.
    Returns the per-epoch mean total loss. Deterministic for a given seed.
    """
    cfg = model.config
    tcfg = config or cfg.train
    samples = _as_rows(samples, cfg.input_dim)
    if reference is not None:
        samples = np.vstack([_as_rows(reference, cfg.input_dim), samples])
    rng = np.random.default_rng([tcfg.seed, 1])

    def step(batch, rng):
        trace = forward_hvae(model, batch, rng)
        total, terms = total_loss(trace, batch, cfg)
        if not np.isfinite(total):
            return total, terms, None
        return total, terms, hvae_gradients(model, trace)

    history = minibatch_train(model.layers, step, samples, tcfg, rng,
                              log=lambda e, v: log.debug("hvae epoch %d loss %.6g", e, v))
    if tcfg.epochs > 0:
        model.trained = True
    return history


def encode_z2(model: HvaeModel, samples: np.ndarray) -> np.ndarray:
    """Mean of the double-peak latent for one sample (``(z,)``) or rows (``(n, z)``)."""
    x = np.asarray(samples, dtype=float)
    single = x.ndim == 1
    rows = _as_rows(x, model.config.input_dim)
    H, _ = stack_forward(model.encoder, rows.T)
    out, _ = stack_forward([model.head2], H)
    mu = out[:model.config.z].T
    return mu[0] if single else mu
