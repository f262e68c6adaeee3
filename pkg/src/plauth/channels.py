"""Synthetic channel-feature scenarios and their exact densities.

Three scenarios are provided, each with a positive (legitimate, class 0) and
a negative (intruder, class 1) distribution:

* ``GaussianScenarioConfig``: independent unit-variance Gaussian entries,
  saturated to ``[-zeta, zeta]``.
* ``MixtureScenarioConfig``: a mixture of unit-variance multivariate
  Gaussians (component drawn once per vector), saturated the same way.
* ``FiniteScenarioConfig``: a Gaussian draw uniformly quantized to ``2**bits``
  levels per entry, with a fixed random relabeling of the levels.

Saturation puts probability atoms on the box faces. ``log_density`` returns
the log of the mixed density: for an entry sitting exactly on ``+/-zeta`` the
factor is the Gaussian tail mass instead of the pdf.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .rng import make_rng

MEASURED = "measured"
ARTIFICIAL = "artificial"

DEFAULT_ZETA = 15.0


class DomainError(ValueError):
    """A feature vector falls outside the support of a scenario."""


def _as_vector(value, dim: int, name: str) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(dim, float(arr[0]))
    if arr.shape != (dim,):
        raise ValueError(f"{name}: expected {dim} entries, got {arr.size}")
    return tuple(float(v) for v in arr)


def _as_rows(x, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != dim:
        raise ValueError(f"expected vectors of length {dim}, got {arr.shape[1]}")
    return arr, single


@dataclass(frozen=True)
class BoxDomain:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lo and hi must be nonempty and of equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("BoxDomain requires lo[j] < hi[j] for every j")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, dim: int, half_width: float) -> "BoxDomain":
        return cls((-half_width,) * dim, (half_width,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(np.subtract(self.hi, self.lo))))

    @property
    def volume(self) -> float:
        return float(np.exp(self.log_volume))

    def contains(self, x) -> np.ndarray:
        arr, _ = _as_rows(x, self.dim)
        return np.all((arr >= self.lo) & (arr <= self.hi), axis=1)


@dataclass(frozen=True)
class LabeledDataset:
    """Feature vectors with labels in {0, 1} and per-row provenance."""

    X: np.ndarray
    labels: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        labels = np.asarray(self.labels, dtype=np.int8).reshape(-1)
        prov = np.asarray(self.provenance, dtype=object).reshape(-1)
        if prov.size == 1 and X.shape[0] > 1:
            prov = np.full(X.shape[0], prov[0], dtype=object)
        if X.shape[0] == 0:
            raise ValueError("dataset must be nonempty")
        if labels.shape[0] != X.shape[0] or prov.shape[0] != X.shape[0]:
            raise ValueError("X, labels and provenance lengths differ")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if not np.isin(prov, (MEASURED, ARTIFICIAL)).all():
            raise ValueError(f"provenance must be {MEASURED!r} or {ARTIFICIAL!r}")
        for arr in (X, labels, prov):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "provenance", prov)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @classmethod
    def concat(cls, *parts: "LabeledDataset") -> "LabeledDataset":
        if len({p.dim for p in parts}) != 1:
            raise ValueError("cannot concatenate datasets of different dimension")
        return cls(
            np.vstack([p.X for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.provenance for p in parts]),
        )

    def to_csv(self, path, comment: str | None = None) -> None:
        """Write ``x1,...,xM,label,provenance``; ``comment`` goes on a leading ``#`` line."""
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j + 1}" for j in range(self.dim)] + ["label", "provenance"])
            for row, lab, prov in zip(self.X, self.labels, self.provenance):
                w.writerow([repr(float(v)) for v in row] + [int(lab), prov])

    @classmethod
    def from_csv(cls, path) -> "LabeledDataset":
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader)
        dim = len(header) - 2
        if dim < 1 or header[-2:] != ["label", "provenance"]:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = list(reader)
        X = np.array([[float(v) for v in r[:dim]] for r in rows])
        labels = np.array([int(r[dim]) for r in rows])
        prov = np.array([r[dim + 1] for r in rows], dtype=object)
        return cls(X, labels, prov)


# --------------------------------------------------------------------------
# clipped Gaussian building block


def _clipped_gaussian_logpdf(X: np.ndarray, mean: np.ndarray, zeta: float) -> np.ndarray:
    """Per-vector log mixed density of an isotropic unit Gaussian saturated to +/-zeta."""
    z = X - mean
    out = norm.logpdf(z)
    top = X >= zeta
    bot = X <= -zeta
    if top.any():
        out = np.where(top, norm.logsf(zeta - mean), out)
    if bot.any():
        out = np.where(bot, norm.logcdf(-zeta - mean), out)
    return out.sum(axis=1)


def _check_class(cls: int) -> int:
    if cls not in (0, 1):
        raise ValueError(f"class must be 0 or 1, got {cls!r}")
    return int(cls)


@dataclass(frozen=True)
class GaussianScenarioConfig:
    dim: int = 4
    mean0: tuple[float, ...] = 0.0
    mean1: tuple[float, ...] = 3.0
    zeta: float = DEFAULT_ZETA

    kind = "gaussian"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        object.__setattr__(self, "mean0", _as_vector(self.mean0, self.dim, "mean0"))
        object.__setattr__(self, "mean1", _as_vector(self.mean1, self.dim, "mean1"))

    @property
    def domain(self) -> BoxDomain:
        return BoxDomain.cube(self.dim, self.zeta)

    def mean(self, cls: int) -> np.ndarray:
        return np.asarray(self.mean1 if _check_class(cls) else self.mean0)

    def sample(self, cls: int, n: int, seed: int, stream: str = "") -> LabeledDataset:
        return sample_gaussian(self, cls, n, seed, stream)

    def log_density(self, cls: int, x):
        return log_density(self, cls, x)


@dataclass(frozen=True)
class MixtureScenarioConfig:
    """Per-class mixtures: ``weights[i]`` and ``means[i]`` describe class ``i``."""

    dim: int = 4
    weights: tuple[tuple[float, ...], tuple[float, ...]] = ((0.2, 0.4, 0.4), (0.5, 0.5))
    means: tuple[tuple[tuple[float, ...], ...], tuple[tuple[float, ...], ...]] = (
        (-1.5, -0.5, 3.0),
        (6.0, 9.0),
    )
    zeta: float = DEFAULT_ZETA

    kind = "mixture"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if len(self.weights) != 2 or len(self.means) != 2:
            raise ValueError("need weights and means for exactly two classes")
        weights, means = [], []
        for i in range(2):
            q = tuple(float(v) for v in self.weights[i])
            if len(q) != len(self.means[i]) or not q:
                raise ValueError(f"class {i}: weights and means differ in count")
            if any(not (0.0 < v <= 1.0) for v in q) or abs(sum(q) - 1.0) > 1e-9:
                raise ValueError(f"class {i}: mixing weights must lie in (0,1] and sum to 1")
            weights.append(q)
            means.append(tuple(_as_vector(m, self.dim, f"means[{i}]") for m in self.means[i]))
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "means", tuple(means))

    @property
    def domain(self) -> BoxDomain:
        return BoxDomain.cube(self.dim, self.zeta)

    def sample(self, cls: int, n: int, seed: int, stream: str = "") -> LabeledDataset:
        return sample_mixture(self, cls, n, seed, stream)

    def log_density(self, cls: int, x):
        return log_density(self, cls, x)


@dataclass(frozen=True)
class FiniteScenarioConfig:
    """Quantized Gaussian with a per-entry relabeling of quantizer levels.

    The quantizer splits ``[lo, hi]`` into ``2**bits`` equal cells; values
    beyond the range saturate into the outer cells. Each cell is represented
    by its midpoint. ``permutation[j][k]`` is the output level index used for
    quantizer cell ``k`` of entry ``j``. When ``permutation`` is ``None`` it is
    drawn from ``seed``.
    """

    dim: int = 2
    mean0: tuple[float, ...] = -1.0
    mean1: tuple[float, ...] = 3.0
    bits: int = 4
    lo: float = -4.0
    hi: float = 8.0
    seed: int = 0
    permutation: tuple[tuple[int, ...], ...] | None = None

    kind = "finite"

    def __post_init__(self):
        if self.dim < 1 or self.bits < 1:
            raise ValueError("dim and bits must be >= 1")
        if not self.lo < self.hi:
            raise ValueError("quantizer range requires lo < hi")
        object.__setattr__(self, "mean0", _as_vector(self.mean0, self.dim, "mean0"))
        object.__setattr__(self, "mean1", _as_vector(self.mean1, self.dim, "mean1"))
        L = self.n_levels
        perm = self.permutation
        if perm is None:
            rng = make_rng(self.seed, "finite", "permutation")
            perm = tuple(tuple(int(v) for v in rng.permutation(L)) for _ in range(self.dim))
        perm = tuple(tuple(int(v) for v in p) for p in perm)
        if len(perm) != self.dim or any(sorted(p) != list(range(L)) for p in perm):
            raise ValueError(f"permutation must hold {self.dim} bijections of range({L})")
        object.__setattr__(self, "permutation", perm)

    @property
    def n_levels(self) -> int:
        return 2**self.bits

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / self.n_levels

    @property
    def levels(self) -> np.ndarray:
        return self.lo + self.step * (np.arange(self.n_levels) + 0.5)

    @property
    def domain(self) -> BoxDomain:
        return BoxDomain((self.lo,) * self.dim, (self.hi,) * self.dim)

    def mean(self, cls: int) -> np.ndarray:
        return np.asarray(self.mean1 if _check_class(cls) else self.mean0)

    def quantize(self, X: np.ndarray) -> np.ndarray:
        """Quantizer cell index of every entry (before relabeling)."""
        idx = np.floor((np.asarray(X, dtype=float) - self.lo) / self.step)
        return np.clip(idx, 0, self.n_levels - 1).astype(np.intp)

    def cell_pmf(self, cls: int) -> np.ndarray:
        """``(dim, n_levels)`` probabilities of each quantizer cell per entry."""
        L = self.n_levels
        inner = self.lo + self.step * np.arange(1, L)
        edges = np.concatenate([[-np.inf], inner, [np.inf]])
        out = np.empty((self.dim, L))
        for j, m in enumerate(self.mean(cls)):
            e = edges - m
            # upper tail via survival function keeps tiny cells accurate
            lower = np.diff(norm.cdf(e))
            upper = -np.diff(norm.sf(e))
            out[j] = np.where(e[:-1] > 0, upper, lower)
        return out

    def level_index(self, X: np.ndarray) -> np.ndarray:
        """Output level index of every entry; raises if a value is not a level."""
        X = np.asarray(X, dtype=float)
        k = np.rint((X - self.lo) / self.step - 0.5)
        ok = (k >= 0) & (k < self.n_levels)
        ok &= np.isclose(self.lo + self.step * (np.where(ok, k, 0) + 0.5), X, rtol=0, atol=1e-9)
        if not ok.all():
            raise DomainError("finite scenario: value is not a quantizer level")
        return k.astype(np.intp)

    def alphabet(self) -> np.ndarray:
        """All ``n_levels**dim`` possible feature vectors."""
        lv = self.levels
        return np.array(list(itertools.product(lv, repeat=self.dim)))

    def sample(self, cls: int, n: int, seed: int, stream: str = "") -> LabeledDataset:
        return sample_finite(self, cls, n, seed, stream)

    def log_density(self, cls: int, x):
        return log_density(self, cls, x)


Scenario = Union[GaussianScenarioConfig, MixtureScenarioConfig, FiniteScenarioConfig]


# --------------------------------------------------------------------------
# samplers


def _check_n(n: int) -> int:
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    return int(n)


def sample_gaussian(cfg: GaussianScenarioConfig, cls: int, n: int, seed: int,
                    stream: str = "") -> LabeledDataset:
    n = _check_n(n)
    rng = make_rng(seed, "gaussian", f"class{_check_class(cls)}", stream)
    X = rng.standard_normal((n, cfg.dim)) + cfg.mean(cls)
    np.clip(X, -cfg.zeta, cfg.zeta, out=X)
    return LabeledDataset(X, np.full(n, cls), MEASURED)


def sample_mixture(cfg: MixtureScenarioConfig, cls: int, n: int, seed: int,
                   stream: str = "") -> LabeledDataset:
    n = _check_n(n)
    rng = make_rng(seed, "mixture", f"class{_check_class(cls)}", stream)
    means = np.asarray(cfg.means[cls])
    comp = rng.choice(len(cfg.weights[cls]), size=n, p=cfg.weights[cls])
    X = rng.standard_normal((n, cfg.dim)) + means[comp]
    np.clip(X, -cfg.zeta, cfg.zeta, out=X)
    return LabeledDataset(X, np.full(n, cls), MEASURED)


def sample_finite(cfg: FiniteScenarioConfig, cls: int, n: int, seed: int,
                  stream: str = "") -> LabeledDataset:
    n = _check_n(n)
    rng = make_rng(seed, "finite", f"class{_check_class(cls)}", stream)
    raw = rng.standard_normal((n, cfg.dim)) + cfg.mean(cls)
    cells = cfg.quantize(raw)
    perm = np.asarray(cfg.permutation)
    out_idx = perm[np.arange(cfg.dim), cells]
    return LabeledDataset(cfg.levels[out_idx], np.full(n, cls), MEASURED)


def sample_artificial_uniform(domain: BoxDomain, n: int, seed: int,
                              stream: str = "") -> LabeledDataset:
    """Uniform draws over ``domain``, labeled 1 with artificial provenance."""
    n = _check_n(n)
    rng = make_rng(seed, "uniform", stream)
    X = rng.uniform(domain.lo, domain.hi, size=(n, domain.dim))
    return LabeledDataset(X, np.ones(n, dtype=np.int8), ARTIFICIAL)


def sample(scenario: Scenario, cls: int, n: int, seed: int, stream: str = "") -> LabeledDataset:
    return scenario.sample(cls, n, seed, stream)


# --------------------------------------------------------------------------
# densities


def log_density(scenario: Scenario, cls: int, x):
    """Exact log density (or log pmf) of class ``cls`` at ``x``.

    ``x`` may be a single vector or an ``(n, dim)`` array; the return value
    matches (float or array). Raises ``DomainError`` outside the support.
    """
    cls = _check_class(cls)
    X, single = _as_rows(x, scenario.dim)
    if isinstance(scenario, FiniteScenarioConfig):
        k = scenario.level_index(X)
        inv = np.argsort(np.asarray(scenario.permutation), axis=1)
        cells = inv[np.arange(scenario.dim), k]
        logp = np.log(scenario.cell_pmf(cls))
        out = logp[np.arange(scenario.dim), cells].sum(axis=1)
    else:
        if not scenario.domain.contains(X).all():
            raise DomainError(f"vector outside [-{scenario.zeta}, {scenario.zeta}]^{scenario.dim}")
        if isinstance(scenario, GaussianScenarioConfig):
            out = _clipped_gaussian_logpdf(X, scenario.mean(cls), scenario.zeta)
        elif isinstance(scenario, MixtureScenarioConfig):
            comps = np.stack([
                np.log(q) + _clipped_gaussian_logpdf(X, np.asarray(m), scenario.zeta)
                for q, m in zip(scenario.weights[cls], scenario.means[cls])
            ])
            out = logsumexp(comps, axis=0)
        else:
            raise TypeError(f"unknown scenario type {type(scenario).__name__}")
    return float(out[0]) if single else out


@dataclass(frozen=True)
class ClassDensity:
    """Density of one class of a scenario, as a callable log-pdf."""

    scenario: Scenario
    cls: int

    def logpdf(self, x):
        return log_density(self.scenario, self.cls, x)


@dataclass(frozen=True)
class UniformDensity:
    domain: BoxDomain

    def logpdf(self, x):
        X, single = _as_rows(x, self.domain.dim)
        if not self.domain.contains(X).all():
            raise DomainError("vector outside uniform domain")
        out = np.full(X.shape[0], -self.domain.log_volume)
        return float(out[0]) if single else out


# --------------------------------------------------------------------------
# text configuration (key/value)


def _fmt_vec(v: Sequence[float]) -> str:
    return ",".join(repr(float(a)) for a in v)


def _parse_vec(s: str) -> tuple[float, ...]:
    return tuple(float(a) for a in s.replace(" ", "").split(",") if a)


def scenario_to_dict(s: Scenario) -> dict[str, str]:
    d = {"kind": s.kind, "dim": str(s.dim)}
    if isinstance(s, GaussianScenarioConfig):
        d.update(mean0=_fmt_vec(s.mean0), mean1=_fmt_vec(s.mean1), zeta=repr(s.zeta))
    elif isinstance(s, MixtureScenarioConfig):
        for i in range(2):
            d[f"weights{i}"] = _fmt_vec(s.weights[i])
            d[f"means{i}"] = ";".join(_fmt_vec(m) for m in s.means[i])
        d["zeta"] = repr(s.zeta)
    else:
        d.update(mean0=_fmt_vec(s.mean0), mean1=_fmt_vec(s.mean1), bits=str(s.bits),
                 lo=repr(s.lo), hi=repr(s.hi), seed=str(s.seed),
                 permutation=";".join(",".join(str(k) for k in p) for p in s.permutation))
    return d


def scenario_from_dict(d: dict[str, str], seed: int = 0) -> Scenario:
    """Inverse of ``scenario_to_dict``; missing keys take the default settings."""
    kind = d.get("kind", "gaussian").strip().lower()
    if kind == "gaussian":
        dim = int(d.get("dim", 4))
        return GaussianScenarioConfig(
            dim=dim,
            mean0=_parse_vec(d.get("mean0", "0")),
            mean1=_parse_vec(d.get("mean1", "3")),
            zeta=float(d.get("zeta", DEFAULT_ZETA)),
        )
    if kind == "mixture":
        dim = int(d.get("dim", 4))
        defaults = MixtureScenarioConfig(dim=dim)
        weights, means = [], []
        for i in range(2):
            w = d.get(f"weights{i}")
            m = d.get(f"means{i}")
            weights.append(_parse_vec(w) if w else defaults.weights[i])
            means.append(tuple(_parse_vec(part) for part in m.split(";")) if m else defaults.means[i])
        return MixtureScenarioConfig(dim=dim, weights=tuple(weights), means=tuple(means),
                                     zeta=float(d.get("zeta", DEFAULT_ZETA)))
    if kind == "finite":
        perm = d.get("permutation")
        return FiniteScenarioConfig(
            dim=int(d.get("dim", 2)),
            mean0=_parse_vec(d.get("mean0", "-1")),
            mean1=_parse_vec(d.get("mean1", "3")),
            bits=int(d.get("bits", 4)),
            lo=float(d.get("lo", -4.0)),
            hi=float(d.get("hi", 8.0)),
            seed=int(d.get("seed", seed)),
            permutation=tuple(tuple(int(k) for k in p.split(",")) for p in perm.split(";")) if perm else None,
        )
    raise ValueError(f"unknown scenario kind {kind!r}")
