"""Linear autoencoder one-class baseline.

The model is ``x~ = D (E x + b_e) + b_d`` with a ``K``-dimensional latent
space, trained by per-sample SGD on the squared reconstruction error. The
classifier statistic is ``|x - x~|^2`` (large means intruder).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import LabeledDataset
from .nn import load_checkpoint, save_checkpoint, sgd_loop
from .rng import make_rng


@dataclass
class AeModel:
    enc_W: np.ndarray  # (K, M)
    enc_b: np.ndarray  # (K,)
    dec_W: np.ndarray  # (M, K)
    dec_b: np.ndarray  # (M,)

    def __post_init__(self):
        K, M = self.enc_W.shape
        if self.dec_W.shape != (M, K) or self.enc_b.shape != (K,) or self.dec_b.shape != (M,):
            raise ValueError("inconsistent autoencoder shapes")
        if not K < M:
            raise ValueError("latent size K must be smaller than the input size M")

    @property
    def dim(self) -> int:
        return self.enc_W.shape[1]

    @property
    def latent(self) -> int:
        return self.enc_W.shape[0]

    higher_is_h0 = False

    def reconstruct(self, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        return (X @ self.enc_W.T + self.enc_b) @ self.dec_W.T + self.dec_b

    def score(self, x):
        return ae_score(self, x)

    def statistic(self, x):
        return -ae_score(self, x)


def _flat_views(w: np.ndarray, M: int, K: int) -> AeModel:
    a = K * M
    return AeModel(w[:a].reshape(K, M), w[a:a + K], w[a + K:2 * a + K].reshape(M, K), w[2 * a + K:])


def ae_score(model: AeModel, x):
    """Squared reconstruction error; a float for one vector, an array for a batch."""
    X = np.asarray(x, dtype=float)
    r = np.atleast_2d(X) - model.reconstruct(X)
    out = np.einsum("ij,ij->i", r, r)
    return float(out[0]) if X.ndim == 1 else out


def train_ae(data, K: int, epochs: int = 5, lr: float = 1e-2, seed: int = 0) -> AeModel:
    """Per-sample SGD on ``|x - x~|^2`` over positive data.

    Encoder and decoder weights start uniform in ``+/-1/sqrt(fan_in)``,
    biases at zero.
    """
    X = np.asarray(data.X if isinstance(data, LabeledDataset) else data, dtype=float)
    n, M = X.shape
    if not 1 <= K < M:
        raise ValueError("need 1 <= K < M")
    rng = make_rng(seed, "ae-init")
    w = np.zeros(2 * K * M + K + M)
    m = _flat_views(w, M, K)
    m.enc_W[...] = rng.uniform(-1, 1, size=(K, M)) / np.sqrt(M)
    m.dec_W[...] = rng.uniform(-1, 1, size=(M, K)) / np.sqrt(K)

    def step(i, out):
        gm = _flat_views(out, M, K)
        x = X[i]
        h = m.enc_W @ x + m.enc_b
        r = m.dec_W @ h + m.dec_b - x
        dh = 2.0 * (m.dec_W.T @ r)
        np.multiply.outer(2.0 * r, h, out=gm.dec_W)
        gm.dec_b[...] = 2.0 * r
        np.multiply.outer(dh, x, out=gm.enc_W)
        gm.enc_b[...] = dh
        return float(r @ r)

    sgd_loop(w, n, step, lr, epochs, make_rng(seed, "ae-order"), f"ae(K={K})")
    w.setflags(write=False)
    return _flat_views(w, M, K)


def save_ae(path, model: AeModel, comment: str | None = None) -> None:
    save_checkpoint(path, "ae", "linear", (model.dim, model.latent, model.dim), [
        ("enc_W", model.enc_W), ("enc_b", model.enc_b),
        ("dec_W", model.dec_W), ("dec_b", model.dec_b),
    ], comment)


def load_ae(path) -> AeModel:
    header, arrays = load_checkpoint(path)
    if header.get("kind") != "ae":
        raise ValueError(f"{path}: checkpoint kind is {header.get('kind')!r}, not 'ae'")
    a = dict(arrays)
    return AeModel(a["enc_W"], a["enc_b"].ravel(), a["dec_W"], a["dec_b"].ravel())
