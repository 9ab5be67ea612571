"""Comparison models scored by latent distance to the reference CIR.

``AutoEncoder`` backs both TF-AE and TB-AE (hidden code ``enc(x)``);
``PlainVAE`` backs TF-VAE (posterior mean). Both reuse :class:`HvaeConfig`:
``input_dim`` and ``z`` fix the code width, ``kl2_weight`` weights the VAE's
standard-normal KL term, and ``h`` is ignored.
"""

from __future__ import annotations

import numpy as np

from . import kl
from .hvae import LOG_VAR_CLAMP, HvaeConfig, _as_rows
from .nn import DenseLayer, layer_widths, minibatch_train, stack_backward, stack_forward


def _stack(widths, acts, rng, prefix):
    return [DenseLayer.initialize(widths[i], widths[i + 1], acts[i], rng, f"{prefix}{i}")
            for i in range(len(acts))]


class AutoEncoder:
    kind = "ae"

    def __init__(self, config: HvaeConfig, encoder, decoder):
        self.config = config
        self.encoder = list(encoder)
        self.decoder = list(decoder)
        self.trained = False

    @classmethod
    def build(cls, config: HvaeConfig, seed=None):
        rng = np.random.default_rng(config.train.seed if seed is None else seed)
        w = layer_widths(config.input_dim, config.z, 3)
        return cls(config, _stack(w, ["relu"] * 3, rng, "enc"),
                   _stack(w[::-1], ["relu", "relu", "identity"], rng, "dec"))

    @property
    def layers(self):
        return [*self.encoder, *self.decoder]

    def loss_and_grads(self, X, rng=None):
        n = X.shape[1]
        code, enc_cache = stack_forward(self.encoder, X)
        X_hat, dec_cache = stack_forward(self.decoder, code)
        diff = X_hat - X
        loss = float(np.mean(np.sum(diff * diff, axis=0)))
        dec_grads, g_code = stack_backward(self.decoder, dec_cache, 2.0 * diff, n)
        enc_grads, _ = stack_backward(self.encoder, enc_cache, g_code, n)
        return loss, {"L1": loss}, [*enc_grads, *dec_grads]

    def fit(self, samples, reference=None, config=None):
        return _fit(self, samples, reference, config)

    def embed(self, samples):
        x = np.asarray(samples, dtype=float)
        rows = _as_rows(x, self.config.input_dim)
        code, _ = stack_forward(self.encoder, rows.T)
        return code.T[0] if x.ndim == 1 else code.T


class PlainVAE:
    """Single-unit VAE: two ReLU layers plus a linear (mu, log_var) head, N(0, I) prior."""

    kind = "vae"

    def __init__(self, config: HvaeConfig, encoder, decoder):
        self.config = config
        self.encoder = list(encoder)
        self.decoder = list(decoder)
        self.trained = False

    @classmethod
    def build(cls, config: HvaeConfig, seed=None):
        rng = np.random.default_rng(config.train.seed if seed is None else seed)
        w = layer_widths(config.input_dim, config.z, 3)
        enc_widths = w[:-1] + [2 * config.z]
        return cls(config, _stack(enc_widths, ["relu", "relu", "identity"], rng, "enc"),
                   _stack(w[::-1], ["relu", "relu", "identity"], rng, "dec"))

    @property
    def layers(self):
        return [*self.encoder, *self.decoder]

    def loss_and_grads(self, X, rng, eps=None):
        z = self.config.z
        n = X.shape[1]
        out, enc_cache = stack_forward(self.encoder, X)
        mu, raw = out[:z], out[z:]
        log_var = np.clip(raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
        sigma = np.exp(0.5 * log_var)
        if eps is None:
            eps = rng.standard_normal(mu.shape)
        Z = mu + eps * sigma
        X_hat, dec_cache = stack_forward(self.decoder, Z)
        diff = X_hat - X
        recon = float(np.mean(np.sum(diff * diff, axis=0)))
        w = self.config.kl2_weight
        kl_term = float(w * np.mean(kl.kl_standard_normal(mu, sigma)))
        dec_grads, g_z = stack_backward(self.decoder, dec_cache, 2.0 * diff, n)
        k_mu, k_lv = kl.kl_standard_normal_grad(mu, sigma)
        g_mu = g_z + w * k_mu
        g_lv = (0.5 * g_z * eps * sigma + w * k_lv) * (np.abs(raw) < LOG_VAR_CLAMP)
        enc_grads, _ = stack_backward(self.encoder, enc_cache, np.vstack([g_mu, g_lv]), n)
        return recon + kl_term, {"L1": recon, "KL": kl_term}, [*enc_grads, *dec_grads]

    def fit(self, samples, reference=None, config=None):
        return _fit(self, samples, reference, config)

    def embed(self, samples):
        x = np.asarray(samples, dtype=float)
        rows = _as_rows(x, self.config.input_dim)
        out, _ = stack_forward(self.encoder, rows.T)
        mu = out[:self.config.z].T
        return mu[0] if x.ndim == 1 else mu


def _fit(model, samples, reference, config):
    tcfg = config or model.config.train
    samples = _as_rows(samples, model.config.input_dim)
    if reference is not None:
        samples = np.vstack([_as_rows(reference, model.config.input_dim), samples])
    rng = np.random.default_rng([tcfg.seed, 1])
    history = minibatch_train(model.layers, model.loss_and_grads, samples, tcfg, rng)
    if tcfg.epochs > 0:
        model.trained = True
    return history
