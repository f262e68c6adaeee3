"""Least-squares SVMs solved in the dual.

``train_lssvm_twoclass`` fits the usual LS-SVM on targets ``t in {-1, +1}``
(positive data -1, artificial uniform data +1).

``train_oclssvm`` fits the one-class objective

    min  1/2 |w|^2 + b + C/2 * sum_n e_n^2,   e_n = -w.phi(x_n) - b

whose stationarity conditions, with ``w = sum_n a_n phi(x_n)``, give

    (K + D) a + b 1 = 0,    1' a = 1,    D = diag(1 / (C * n_l))

where rows are the distinct training vectors and ``n_l`` their
multiplicities. Collapsing duplicates leaves the objective unchanged.
The score is ``sum_l a_l k(x_l, x) + b`` and grows with the local frequency
of training data, so high scores mean legitimate (H0).

The feature map is never formed; everything goes through kernel matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from .channels import LabeledDataset

RBF = "rbf"
DK = "dk"

_CHUNK_ENTRIES = 4_000_000


class SolverError(RuntimeError):
    """The KKT system could not be solved to the required accuracy."""


@dataclass(frozen=True)
class Kernel:
    kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.kind == RBF:
            if self.alpha is None or not self.alpha > 0:
                raise ValueError("RBF kernel needs alpha > 0")
        elif self.kind == DK:
            object.__setattr__(self, "alpha", None)
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def rbf(cls, alpha: float) -> "Kernel":
        return cls(RBF, float(alpha))

    @classmethod
    def dk(cls) -> "Kernel":
        return cls(DK)

    def __call__(self, x, y) -> float:
        return kernel_eval(self, x, y)

    def __str__(self) -> str:
        return f"rbf {self.alpha!r}" if self.kind == RBF else "dk"

    @classmethod
    def parse(cls, text: str) -> "Kernel":
        kind, *rest = text.split()
        return cls.rbf(float(rest[0])) if kind == RBF else cls(kind)


def kernel_eval(kernel: Kernel, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if kernel.kind == DK:
        return 1.0 if np.array_equal(x, y) else 0.0
    return float(np.exp(-kernel.alpha * np.sum((x - y) ** 2)))


def _row_ids(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    _, inv = np.unique(np.vstack([X, Y]), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return inv[: len(X)], inv[len(X):]


def kernel_matrix(kernel: Kernel, X, Y=None) -> np.ndarray:
    """Gram matrix ``k(X[i], Y[j])``; symmetric with unit diagonal when ``Y`` is ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if kernel.kind == DK:
        ix, iy = _row_ids(X, Y)
        return (ix[:, None] == iy[None, :]).astype(float)
    # cdist takes differences pairwise, so k(x, x) is exactly 1 and K is exactly symmetric
    return np.exp(-kernel.alpha * cdist(X, Y, "sqeuclidean"))


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    coef: np.ndarray
    bias: float
    kernel: Kernel
    C: float
    kind: str  # "one-class" or "two-class"
    higher_is_h0: bool
    counts: np.ndarray | None = None
    kkt_residual: float = 0.0

    def __post_init__(self):
        if len(self.coef) != len(self.support_vectors):
            raise ValueError("one coefficient per support vector required")

    def score(self, x):
        return score(self, x)

    def statistic(self, x):
        """Score oriented so that larger means legitimate."""
        s = score(self, x)
        return s if self.higher_is_h0 else -s


def score(model: SvmModel, x):
    """``sum_n c_n k(x_n, x) + b`` for one vector (float) or a batch (array)."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    sv = model.support_vectors
    if model.kernel.kind == DK:
        ids_sv, ids_x = _row_ids(sv, X)
        lookup = np.zeros(max(ids_sv.max(initial=0), ids_x.max(initial=0)) + 1)
        lookup[ids_sv] = model.coef
        out = lookup[ids_x] + model.bias
    else:
        out = np.empty(X.shape[0])
        step = max(1, _CHUNK_ENTRIES // max(1, len(sv)))
        for s in range(0, X.shape[0], step):
            out[s:s + step] = kernel_matrix(model.kernel, X[s:s + step], sv) @ model.coef + model.bias
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# linear algebra


def _spd_solver(H: np.ndarray, kernel: Kernel, C: float):
    """Return ``solve(rhs)`` for symmetric ``H``: Cholesky, else symmetric-indefinite LDL'."""
    try:
        factor = sla.cho_factor(H, lower=True)
        return lambda r: sla.cho_solve(factor, r)
    except sla.LinAlgError:
        pass

    def ldl_solve(r):
        try:
            return sla.solve(H, r, assume_a="sym")
        except (sla.LinAlgError, ValueError) as exc:
            raise SolverError(f"singular KKT system (C={C}, kernel={kernel}): {exc}") from exc

    return ldl_solve


def _bordered_solve(H: np.ndarray, rhs_top: np.ndarray, rhs_bottom: float,
                    kernel: Kernel, C: float, refine: int = 2) -> tuple[np.ndarray, float, float]:
    """Solve ``[[H, 1], [1', 0]] [a; b] = [rhs_top; rhs_bottom]`` by block elimination.

    Returns ``(a, b, relative_residual)``.
    """
    solve = _spd_solver(H, kernel, C)
    ones = np.ones(H.shape[0])
    eta = solve(ones)
    s = ones @ eta
    if not np.isfinite(s) or s == 0:
        raise SolverError(f"degenerate bias equation (C={C}, kernel={kernel}, 1'H^-1 1={s})")

    def block(top, bottom):
        nu = solve(top)
        b = (ones @ nu - bottom) / s
        return nu - b * eta, b

    a, b = block(rhs_top, rhs_bottom)
    scale = np.sqrt(rhs_top @ rhs_top + rhs_bottom**2)
    for _ in range(refine + 1):
        r_top = rhs_top - (H @ a + b)
        r_bot = rhs_bottom - a.sum()
        resid = np.sqrt(r_top @ r_top + r_bot**2) / scale
        if resid < 1e-14 or _ == refine:
            break
        da, db = block(r_top, r_bot)
        a, b = a + da, b + db
    if not np.all(np.isfinite(a)) or not np.isfinite(b):
        raise SolverError(f"non-finite KKT solution (C={C}, kernel={kernel})")
    if resid > 1e-8:
        cond = np.linalg.cond(H)
        raise SolverError(f"KKT residual {resid:.3e} > 1e-8 (C={C}, kernel={kernel}, cond(H)={cond:.3e})")
    return a, float(b), float(resid)


def kkt_residual_twoclass(model: SvmModel, X, t) -> float:
    """Relative residual of the two-class LS-SVM KKT system at ``model``."""
    K = kernel_matrix(model.kernel, X)
    t = np.asarray(t, dtype=float)
    top = (K + np.eye(len(t)) / model.C) @ model.coef + model.bias - t
    return float(np.sqrt(top @ top + model.coef.sum() ** 2) / np.sqrt(t @ t))


# --------------------------------------------------------------------------
# training


def train_lssvm_twoclass(data: LabeledDataset, kernel: Kernel, C: float = 1.0) -> SvmModel:
    """LS-SVM on positive (label 0 -> t=-1) and artificial (label 1 -> t=+1) data."""
    if not C > 0:
        raise ValueError("C must be positive")
    if len(np.unique(data.labels)) != 2:
        raise ValueError("two-class LS-SVM needs both labels present")
    X = np.asarray(data.X)
    t = 2.0 * data.labels.astype(float) - 1.0
    H = kernel_matrix(kernel, X)
    H[np.diag_indices_from(H)] += 1.0 / C
    a, b, resid = _bordered_solve(H, t, 0.0, kernel, C)
    return SvmModel(X.copy(), a, b, kernel, float(C), "two-class", higher_is_h0=False,
                    kkt_residual=resid)


@dataclass(frozen=True)
class DkBasisIndex:
    """Distinct training vectors with their multiplicities."""

    vectors: np.ndarray
    counts: np.ndarray

    @property
    def n0(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n0


def build_dk_index(X) -> DkBasisIndex:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U, counts = np.unique(X, axis=0, return_counts=True)
    return DkBasisIndex(U, counts.astype(np.int64))


def train_oclssvm(data, kernel: Kernel, C: float = 1.0) -> SvmModel:
    """One-class LS-SVM on positive data (a ``LabeledDataset`` or an array)."""
    if not C > 0:
        raise ValueError("C must be positive")
    X = data.X if isinstance(data, LabeledDataset) else data
    index = build_dk_index(X)
    H = kernel_matrix(kernel, index.vectors)
    H[np.diag_indices_from(H)] += 1.0 / (C * index.counts)
    a, b, resid = _bordered_solve(H, np.zeros(len(index.counts)), 1.0, kernel, C)
    return SvmModel(index.vectors, a, b, kernel, float(C), "one-class", higher_is_h0=True,
                    counts=index.counts, kkt_residual=resid)


def dk_closed_form_weights(index: DkBasisIndex, C: float) -> tuple[np.ndarray, float]:
    """Closed-form DK weights and bias with empirical frequencies as probabilities.

    This is the parametrization where the residual is written ``b - w.phi(x)``:
    ``w_l = C N0 b p_l / (1 + C N0 p_l)`` and ``b = -1/(C N0) + sum_l w_l p_l``.
    The bias equation is linear in ``b`` once ``w`` is substituted.
    """
    p = index.frequencies
    cn = C * index.n0
    b = -1.0 / (cn * np.sum(p / (1.0 + cn * p)))
    w = cn * b * p / (1.0 + cn * p)
    return w, float(b)


def closed_form_dk_oracle(index: DkBasisIndex, C: float = 1.0) -> SvmModel:
    """Analytic DK one-class model, in the same sign convention as ``train_oclssvm``.

    The closed-form weights use the residual ``b - w.phi``, i.e. ``w -> -w``
    relative to the training objective, so the dual coefficients are ``-w``.
    """
    w, b = dk_closed_form_weights(index, C)
    return SvmModel(index.vectors, -w, b, Kernel.dk(), float(C), "one-class",
                    higher_is_h0=True, counts=index.counts)


# --------------------------------------------------------------------------
# serialization

MODEL_MAGIC = "plauth-svm"
MODEL_VERSION = 1


def save_model(path, model: SvmModel, comment: str | None = None) -> None:
    """Text format, 17 significant digits so every float round-trips."""
    g = lambda v: format(float(v), ".17g")
    with open(path, "w") as fh:
        fh.write(f"{MODEL_MAGIC} {MODEL_VERSION}\n")
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(f"kind {model.kind}\nkernel {model.kernel}\nC {g(model.C)}\n")
        fh.write(f"bias {g(model.bias)}\nhigher_is_h0 {int(model.higher_is_h0)}\n")
        fh.write(f"kkt_residual {g(model.kkt_residual)}\n")
        sv = model.support_vectors
        fh.write(f"support_vectors {sv.shape[0]} {sv.shape[1]}\n")
        counts = model.counts if model.counts is not None else np.ones(len(sv), dtype=int)
        for c, n, row in zip(model.coef, counts, sv):
            fh.write(" ".join([g(c), str(int(n))] + [g(v) for v in row]) + "\n")


def load_model(path) -> SvmModel:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    magic, version = lines[0].split()
    if magic != MODEL_MAGIC or int(version) != MODEL_VERSION:
        raise ValueError(f"{path}: not a version-{MODEL_VERSION} SVM model")
    head = {}
    i = 1
    while not lines[i].startswith("support_vectors"):
        key, _, rest = lines[i].partition(" ")
        head[key] = rest
        i += 1
    n, dim = (int(v) for v in lines[i].split()[1:])
    rows = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + n]]).reshape(n, dim + 2)
    return SvmModel(
        support_vectors=rows[:, 2:], coef=rows[:, 0], bias=float(head["bias"]),
        kernel=Kernel.parse(head["kernel"]), C=float(head["C"]), kind=head["kind"],
        higher_is_h0=bool(int(head["higher_is_h0"])), counts=rows[:, 1].astype(np.int64),
        kkt_residual=float(head["kkt_residual"]),
    )
