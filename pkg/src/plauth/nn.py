"""Fully connected sigmoid MLP trained with per-sample SGD.

Two training routes are provided:

* ``train_sgd``: plain SGD over the positive data (label 0) merged with an
  artificial uniform dataset (label 1).
* ``train_msgd``: SGD over the positive data only, where every step adds a
  fresh Monte-Carlo estimate of the mean label-1 gradient over the uniform
  domain (``estimate_F``). No artificial dataset is materialized.

All parameters live in one flat vector; per-layer weight matrices and bias
vectors are views into it, so optimizer updates are a single axpy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .channels import BoxDomain, LabeledDataset
from .rng import make_rng

log = logging.getLogger(__name__)

SQUARE_ERROR = "square-error"
CROSS_ENTROPY = "cross-entropy"
LOSSES = (SQUARE_ERROR, CROSS_ENTROPY)
CE_EPS = 1e-12

DEFAULT_HIDDEN = (40, 32, 24, 16, 8, 4, 1)


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer widths including the input width; the last width must be 1."""

    widths: tuple[int, ...]
    activation: str = "sigmoid"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError("need an input width and at least one layer, all >= 1")
        if widths[-1] != 1:
            raise ValueError("last layer must have a single neuron")
        if self.activation != "sigmoid":
            raise ValueError("only sigmoid activations are supported")
        object.__setattr__(self, "widths", widths)

    @classmethod
    def default(cls, input_dim: int = 4) -> "MlpArchitecture":
        return cls((input_dim,) + DEFAULT_HIDDEN)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [(o, i) for i, o in zip(self.widths[:-1], self.widths[1:])]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.shapes)


def _layer_views(arch: MlpArchitecture, flat: np.ndarray):
    Ws, bs, off = [], [], 0
    for o, i in arch.shapes:
        Ws.append(flat[off:off + o * i].reshape(o, i))
        off += o * i
        bs.append(flat[off:off + o])
        off += o
    return Ws, bs


class MlpParams:
    """Weights of an ``MlpArchitecture`` backed by one flat vector ``w``.

    ``input_shift``/``input_scale`` define a fixed affine map applied to every
    input before the first layer, ``(x - shift) / scale``. They are not trained.
    """

    def __init__(self, arch: MlpArchitecture, w: np.ndarray | None = None,
                 input_shift=None, input_scale=None):
        self.arch = arch
        if w is None:
            w = np.zeros(arch.n_params)
        w = np.array(w, dtype=float)
        if w.shape != (arch.n_params,):
            raise ValueError(f"expected {arch.n_params} parameters, got {w.shape}")
        self.w = w
        self.weights, self.biases = _layer_views(arch, self.w)
        m = arch.widths[0]
        self.input_shift = np.broadcast_to(np.asarray(0.0 if input_shift is None else input_shift, dtype=float), (m,)).copy()
        self.input_scale = np.broadcast_to(np.asarray(1.0 if input_scale is None else input_scale, dtype=float), (m,)).copy()
        if not np.all(self.input_scale > 0):
            raise ValueError("input_scale must be positive")
        self.input_shift.setflags(write=False)
        self.input_scale.setflags(write=False)
        self.normalizes_input = bool(np.any(self.input_shift != 0) or np.any(self.input_scale != 1))

    @classmethod
    def init(cls, arch: MlpArchitecture, seed: int, scheme: str = "glorot-sigmoid",
             domain: BoxDomain | None = None) -> "MlpParams":
        """Random weights.

        ``glorot-sigmoid``: weights uniform in ``+/-4 sqrt(6/(fan_in+fan_out))``,
        zero biases. The factor 4 compensates for the sigmoid slope of 1/4 at
        the origin so gradients survive the seven-layer default stack.
        ``glorot``: the same without the factor 4.
        ``fan-in``: weights and biases uniform in ``+/-1/sqrt(fan_in)``.

        Passing ``domain`` maps that box onto ``[-1, 1]^M`` at the input.
        """
        rng = make_rng(seed, "mlp-init")
        if domain is not None:
            lo, hi = np.asarray(domain.lo, dtype=float), np.asarray(domain.hi, dtype=float)
            p = cls(arch, None, (lo + hi) / 2.0, (hi - lo) / 2.0)
        else:
            p = cls(arch)
        for W, b in zip(p.weights, p.biases):
            fan_out, fan_in = W.shape
            if scheme in ("glorot", "glorot-sigmoid"):
                r = np.sqrt(6.0 / (fan_in + fan_out))
                if scheme == "glorot-sigmoid":
                    r *= 4.0
                W[...] = rng.uniform(-r, r, size=W.shape)
            elif scheme == "fan-in":
                r = 1.0 / np.sqrt(fan_in)
                W[...] = rng.uniform(-r, r, size=W.shape)
                b[...] = rng.uniform(-r, r, size=b.shape)
            else:
                raise ValueError(f"init scheme must be one of {INIT_SCHEMES}, got {scheme!r}")
        return p

    def copy(self) -> "MlpParams":
        return MlpParams(self.arch, self.w.copy(), self.input_shift, self.input_scale)

    def freeze(self) -> "MlpParams":
        self.w.setflags(write=False)
        return self

    def unflatten(self, g: np.ndarray):
        """Per-layer views of a flat gradient vector."""
        return _layer_views(self.arch, g)


INIT_SCHEMES = ("glorot-sigmoid", "glorot", "fan-in")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = CROSS_ENTROPY
    lr: float = 0.1
    epochs: int = 5
    mc_samples: int = 64
    seed: int = 0
    init: str = "glorot-sigmoid"

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"init must be one of {INIT_SCHEMES}")
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.epochs < 1 or self.mc_samples < 1:
            raise ValueError("epochs and mc_samples must be >= 1")


# --------------------------------------------------------------------------
# forward / backward


def _normalize(params: MlpParams, X: np.ndarray) -> np.ndarray:
    if params.normalizes_input:
        return (X - params.input_shift) / params.input_scale
    return X


def _activations(params: MlpParams, X: np.ndarray) -> list[np.ndarray]:
    acts = [_normalize(params, X)]
    for W, b in zip(params.weights, params.biases):
        acts.append(expit(acts[-1] @ W.T + b))
    return acts


def _prepare(params: MlpParams, x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.arch.widths[0]:
        raise ValueError(f"input width {X.shape[1]} != {params.arch.widths[0]}")
    return X, single


def forward(params: MlpParams, x):
    """Network output in (0, 1) for one vector (float) or a batch (array)."""
    X, single = _prepare(params, x)
    out = _activations(params, X)[-1][:, 0]
    return float(out[0]) if single else out


def logit(params: MlpParams, x, chunk: int = 65536):
    """Pre-sigmoid output of the last neuron; a strictly increasing map of ``forward``."""
    X, single = _prepare(params, x)
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        a = _normalize(params, X[s:s + chunk])
        for W, b in zip(params.weights[:-1], params.biases[:-1]):
            a = expit(a @ W.T + b)
        out[s:s + chunk] = (a @ params.weights[-1].T + params.biases[-1])[:, 0]
    return float(out[0]) if single else out


def _loss_values(mu: np.ndarray, t: np.ndarray, loss: str) -> np.ndarray:
    if loss == SQUARE_ERROR:
        return (mu - t) ** 2
    m = np.clip(mu, CE_EPS, 1.0 - CE_EPS)
    return -(t * np.log(m) + (1.0 - t) * np.log1p(-m))


def _backprop(params: MlpParams, X: np.ndarray, t: np.ndarray, loss: str,
              out: np.ndarray) -> float:
    """Write the batch-mean gradient into ``out``; return the batch-mean loss."""
    acts = _activations(params, X)
    mu = acts[-1][:, 0]
    # derivative w.r.t. the output pre-activation
    if loss == SQUARE_ERROR:
        delta = (2.0 * (mu - t) * mu * (1.0 - mu))[:, None]
    else:
        delta = (mu - t)[:, None]
    n = X.shape[0]
    gWs, gbs = params.unflatten(out)
    for l in range(len(params.weights) - 1, -1, -1):
        np.matmul(delta.T, acts[l], out=gWs[l])
        gWs[l] /= n
        gbs[l][...] = delta.sum(axis=0) / n
        if l:
            a = acts[l]
            delta = (delta @ params.weights[l]) * a * (1.0 - a)
    return float(_loss_values(mu, t, loss).mean())


def loss_and_grad(params: MlpParams, x, t, loss: str = CROSS_ENTROPY) -> tuple[float, np.ndarray]:
    """Per-sample loss and its full gradient with respect to the flat weights.

    Cross-entropy is the negated log-likelihood, so both losses are minimized.
    Its value clamps the output to ``[1e-12, 1 - 1e-12]``; the gradient uses the
    exact ``mu - t`` form at the output pre-activation. A batch ``x`` returns
    the mean loss and mean gradient.
    """
    if loss not in LOSSES:
        raise ValueError(f"loss must be one of {LOSSES}")
    X, _ = _prepare(params, x)
    T = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
    if not np.isin(T, (0.0, 1.0)).all():
        raise ValueError("targets must be 0 or 1")
    g = np.empty(params.arch.n_params)
    value = _backprop(params, X, T, loss, g)
    return value, g


def estimate_F(params: MlpParams, domain: BoxDomain, mc_samples: int, seed,
               loss: str = CROSS_ENTROPY) -> np.ndarray:
    """Monte-Carlo mean of the label-1 loss gradient under uniform inputs on ``domain``.

    ``seed`` may be an int or a ``numpy.random.Generator`` (used as-is).
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, "estimate-F")
    V = rng.uniform(domain.lo, domain.hi, size=(mc_samples, domain.dim))
    g = np.empty(params.arch.n_params)
    _backprop(params, V, np.ones(mc_samples), loss, g)
    return g


# --------------------------------------------------------------------------
# training


def sgd_loop(w: np.ndarray, n_samples: int, sample_grad, lr: float, epochs: int,
             rng: np.random.Generator, name: str = "sgd") -> list[float]:
    """Shuffled per-sample SGD on the flat vector ``w`` (updated in place).

    ``sample_grad(i, out)`` writes the step direction for sample ``i`` into
    ``out`` and returns that sample's loss. Returns the mean loss per epoch.
    """
    g = np.empty_like(w)
    history = []
    for epoch in range(epochs):
        total = 0.0
        for i in rng.permutation(n_samples):
            total += sample_grad(i, g)
            w -= lr * g
        history.append(total / n_samples)
        log.debug("%s epoch %d/%d mean loss %.6f", name, epoch + 1, epochs, history[-1])
    return history


def train_sgd(arch: MlpArchitecture, data: LabeledDataset, cfg: TrainConfig,
              init: MlpParams | None = None, domain: BoxDomain | None = None) -> MlpParams:
    """Shuffled per-sample SGD over ``data`` for ``cfg.epochs`` passes.

    Without ``init`` the weights start from ``MlpParams.init(arch, cfg.seed,
    cfg.init, domain)``, which also maps ``domain`` onto the unit box at the input.
    """
    if len(np.unique(data.labels)) != 2:
        raise ValueError("train_sgd needs both labels present")
    params = (init or MlpParams.init(arch, cfg.seed, cfg.init, domain)).copy()
    X = data.X
    T = data.labels.astype(float)

    def step(i, out):
        return _backprop(params, X[i:i + 1], T[i:i + 1], cfg.loss, out)

    sgd_loop(params.w, len(data), step, cfg.lr, cfg.epochs, make_rng(cfg.seed, "sgd-order"), "sgd")
    return params.freeze()


def train_msgd(arch: MlpArchitecture, data: LabeledDataset, domain: BoxDomain,
               cfg: TrainConfig, init: MlpParams | None = None,
               F=None) -> MlpParams:
    """Per-sample SGD on positive data, adding the uniform-class mean gradient each step.

    ``F`` optionally replaces the Monte-Carlo estimator; it is called as
    ``F(params, rng)`` and must return a flat gradient. Default initialization
    follows ``train_sgd``.
    """
    if np.any(data.labels != 0):
        raise ValueError("train_msgd takes positive-class (label 0) data only")
    params = (init or MlpParams.init(arch, cfg.seed, cfg.init, domain)).copy()
    mc_rng = make_rng(cfg.seed, "msgd-F")
    X = data.X
    zero = np.zeros(1)

    def step(i, out):
        value = _backprop(params, X[i:i + 1], zero, cfg.loss, out)
        out += F(params, mc_rng) if F is not None else estimate_F(
            params, domain, cfg.mc_samples, mc_rng, cfg.loss)
        return value

    sgd_loop(params.w, len(data), step, cfg.lr, cfg.epochs, make_rng(cfg.seed, "msgd-order"), "msgd")
    return params.freeze()


# --------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = "plauth-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, kind: str, activation: str, widths, arrays: list[tuple[str, np.ndarray]],
                    comment: str | None = None) -> None:
    """Text checkpoint: versioned header, then each array as shape + row-major values."""
    with open(path, "w") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
        if comment:
            fh.write(f"comment {comment}\n")
        fh.write(f"kind {kind}\nactivation {activation}\n")
        fh.write("widths " + " ".join(str(w) for w in widths) + "\n")
        for name, arr in arrays:
            a = np.atleast_2d(arr) if arr.ndim == 2 else arr.reshape(1, -1)
            fh.write(f"array {name} " + " ".join(str(s) for s in arr.shape) + "\n")
            for row in a:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_checkpoint(path) -> tuple[dict[str, str], list[tuple[str, np.ndarray]]]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    magic, version = lines[0].split()
    if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    header, arrays, i = {}, [], 1
    while i < len(lines):
        key, _, rest = lines[i].partition(" ")
        if key == "array":
            name, *shape = rest.split()
            shape = tuple(int(s) for s in shape)
            nrows = shape[0] if len(shape) == 2 else 1
            vals = [float(v) for ln in lines[i + 1:i + 1 + nrows] for v in ln.split()]
            arrays.append((name, np.array(vals).reshape(shape)))
            i += 1 + nrows
        else:
            header[key] = rest
            i += 1
    return header, arrays


def save_mlp(path, params: MlpParams, comment: str | None = None) -> None:
    arrays = [("input_shift", params.input_shift), ("input_scale", params.input_scale)]
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        arrays += [(f"W{l}", W), (f"b{l}", b)]
    save_checkpoint(path, "mlp", params.arch.activation, params.arch.widths, arrays, comment)


def load_mlp(path) -> MlpParams:
    header, arrays = load_checkpoint(path)
    if header.get("kind") != "mlp":
        raise ValueError(f"{path}: checkpoint kind is {header.get('kind')!r}, not 'mlp'")
    arch = MlpArchitecture(tuple(int(w) for w in header["widths"].split()))
    named = dict(arrays)
    layers = [a.ravel() for name, a in arrays if name[0] in "Wb"]
    return MlpParams(arch, np.concatenate(layers), named.get("input_shift"), named.get("input_scale"))
