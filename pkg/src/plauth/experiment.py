"""Experiment configuration, single runs and resumable parameter sweeps.

A run draws training and test data for one scenario, trains one model, scores
the test set and writes a bundle of files to ``cfg.out``:

``config.ini``     the resolved configuration
``train.csv``      training data (measured and, when used, artificial rows)
``test.csv``       test data (label 0 legitimate, label 1 intruder)
``model.txt``      trained model (absent for the analytic LT / LRT models)
``det.csv``        exact empirical DET curve, ``fa,md``
``summary.json``   xi, Kendall tau against LT, matched-FA table
``timing.json``    wall-clock seconds per stage (kept apart so the rest is reproducible)
``det.svg``        optional DET plot

Every file carries the config hash.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import multiprocessing
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autoencoder, channels, evaluation, nn, svm
from .stattests import calibrate_threshold, decide, lrt_uniform_score, lt_score

log = logging.getLogger(__name__)

SCENARIOS = ("gaussian", "mixture", "finite")
MODELS = ("lt", "lrt-uniform", "lt-nn", "lt-ls-svm", "oclssvm", "ae")
TRAINERS = ("sgd", "msgd")
OPERATING_FA = 0.1


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


# per-model defaults applied when a field is left unset
_DEFAULTS = {
    "lt-nn": {"n0": 60000, "lr": 0.1},
    "lt-ls-svm": {"n0": 2500, "alpha": 2.3},
    "oclssvm": {"n0": 5000, "alpha": 5.0},
    "ae": {"n0": 60000, "lr": 1e-2},
    "lt": {"n0": 0},
    "lrt-uniform": {"n0": 0},
}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "gaussian"
    model: str = "lt"
    seed: int = 0
    n0: int | None = None
    n1: int | None = None  # artificial samples; defaults to n0 for two-class models
    n_val: int = 15000
    n_test: int = 25000
    kernel: str = "rbf"
    alpha: float | None = None
    c: float = 1.0
    epochs: int = 5
    lr: float | None = None
    loss: str = nn.CROSS_ENTROPY
    trainer: str = "sgd"
    init: str = "glorot-sigmoid"
    mc_samples: int = 64
    latent: int = 1
    scenario_params: tuple[tuple[str, str], ...] = ()
    out: str | None = field(default=None, compare=False)
    emit_svg: bool = field(default=False, compare=False)
    save_datasets: bool = field(default=True, compare=False)

    def __post_init__(self):
        sp = self.scenario_params
        if isinstance(sp, dict):
            sp = tuple(sorted((str(k), str(v)) for k, v in sp.items()))
        object.__setattr__(self, "scenario_params", tuple(sp))

    # -- validation and defaults ---------------------------------------------

    def resolved(self) -> "ExperimentConfig":
        """Validate, fill per-model defaults and drop fields the model ignores."""
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario: must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.model not in MODELS:
            raise ConfigError(f"model: must be one of {MODELS}, got {self.model!r}")
        for name, allowed in (("kernel", (svm.RBF, svm.DK)), ("trainer", TRAINERS),
                              ("loss", nn.LOSSES), ("init", nn.INIT_SCHEMES)):
            value = getattr(self, name)
            if value is not None and value not in allowed:
                raise ConfigError(f"{name}: must be one of {allowed}, got {value!r}")
        d = dataclasses.asdict(self)
        d["scenario_params"] = self.scenario_params
        for k, v in _DEFAULTS[self.model].items():
            if d.get(k) is None:
                d[k] = v
        m = self.model
        if m in ("lt-nn", "lt-ls-svm") and d["n1"] is None:
            d["n1"] = d["n0"]
        if m not in ("lt-nn", "lt-ls-svm"):
            d["n1"] = None
        if m == "lt-nn" and d["trainer"] == "msgd":
            d["n1"] = None
        if m in ("lt-ls-svm", "oclssvm"):
            if d["kernel"] == svm.DK:
                if m == "lt-ls-svm":
                    raise ConfigError("kernel: the two-class LS-SVM supports only 'rbf'")
                if self.scenario != "finite":
                    raise ConfigError("kernel: 'dk' requires the finite scenario (exact-equality kernel)")
                d["alpha"] = None
        else:
            d["kernel"] = None
            d["alpha"] = None
            d["c"] = None
        if m != "lt-nn":
            for k in ("loss", "trainer", "init", "mc_samples"):
                d[k] = None
        if m == "lt-nn" and d["trainer"] == "sgd":
            d["mc_samples"] = None
        if m not in ("lt-nn", "ae"):
            d["epochs"] = None
            d["lr"] = None
        if m != "ae":
            d["latent"] = None
        cfg = ExperimentConfig(**d)
        cfg._check_ranges()
        return cfg

    def _check_ranges(self) -> None:
        def positive(name, allow_zero=False):
            v = getattr(self, name)
            if v is None:
                return
            if v < 0 or (v == 0 and not allow_zero):
                raise ConfigError(f"{name}: must be {'>= 0' if allow_zero else '> 0'}, got {v}")

        positive("n0", allow_zero=self.model in ("lt", "lrt-uniform"))
        for name in ("n1", "n_val", "n_test", "alpha", "c", "epochs", "mc_samples", "latent"):
            positive(name)
        positive("lr", allow_zero=True)
        scen = self.make_scenario()
        if self.latent is not None:
            dim = scen.domain.dim
            if not self.latent < dim:
                raise ConfigError(f"latent: must be smaller than the feature dimension {dim}")

    def make_scenario(self) -> channels.Scenario:
        d = {"kind": self.scenario, **dict(self.scenario_params)}
        try:
            return channels.scenario_from_dict(d, seed=self.seed)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"scenario_params: {exc}") from exc

    # -- identity ------------------------------------------------------------

    def identity(self) -> dict:
        """Fields that determine the results (output options excluded)."""
        d = dataclasses.asdict(self)
        for k in ("out", "emit_svg", "save_datasets"):
            d.pop(k)
        d["scenario_params"] = dict(self.scenario_params)
        return d

    def hash(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- INI round trip ------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["experiment"] = {k: _fmt(v) for k, v in self.identity().items()
                            if k != "scenario_params" and v is not None}
        if self.scenario_params:
            cp["scenario"] = dict(self.scenario_params)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, text: str):
    kind = _FIELD_TYPES.get(name)
    if kind is None or name == "scenario_params":
        raise ConfigError(f"{name}: unknown setting")
    try:
        if "bool" in kind:
            return text.strip().lower() in ("1", "true", "yes", "on")
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r}") from None
    return text.strip()


def config_from_mapping(base: ExperimentConfig, values: dict[str, str],
                        scenario_values: dict[str, str] | None = None) -> ExperimentConfig:
    changes = {k.replace("-", "_"): _coerce(k.replace("-", "_"), v) for k, v in values.items()}
    if scenario_values:
        merged = dict(base.scenario_params)
        merged.update(scenario_values)
        changes["scenario_params"] = tuple(sorted(merged.items()))
    return dataclasses.replace(base, **changes)


def read_config_file(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply an INI file's ``[experiment]`` and ``[scenario]`` sections on top of ``base``."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc
    values = dict(cp["experiment"]) if cp.has_section("experiment") else {}
    scen = dict(cp["scenario"]) if cp.has_section("scenario") else None
    return config_from_mapping(base or ExperimentConfig(), values, scen)


# --------------------------------------------------------------------------
# running one experiment


@dataclass
class _Trained:
    statistic: object  # callable: X -> H0-high scores
    save: object | None  # callable: (path, comment) -> None
    train: channels.LabeledDataset | None


def _train(cfg: ExperimentConfig, scen) -> _Trained:
    seed = cfg.seed
    m = cfg.model
    if m == "lt":
        return _Trained(lambda X: lt_score(scen, X), None, None)
    if m == "lrt-uniform":
        return _Trained(lambda X: lrt_uniform_score(scen, X), None, None)

    d0 = channels.sample(scen, 0, cfg.n0, seed, "train")
    if m == "lt-nn":
        arch = nn.MlpArchitecture.default(scen.domain.dim)
        tc = nn.TrainConfig(loss=cfg.loss, lr=cfg.lr, epochs=cfg.epochs,
                            mc_samples=cfg.mc_samples or 64, seed=seed, init=cfg.init)
        if cfg.trainer == "sgd":
            d1 = channels.sample_artificial_uniform(scen.domain, cfg.n1, seed, "artificial")
            data = channels.LabeledDataset.concat(d0, d1)
            params = nn.train_sgd(arch, data, tc, domain=scen.domain)
        else:
            data = d0
            params = nn.train_msgd(arch, d0, scen.domain, tc)
        return _Trained(lambda X: -nn.logit(params, X),
                        lambda p, c: nn.save_mlp(p, params, c), data)
    if m == "lt-ls-svm":
        d1 = channels.sample_artificial_uniform(scen.domain, cfg.n1, seed, "artificial")
        data = channels.LabeledDataset.concat(d0, d1)
        model = svm.train_lssvm_twoclass(data, svm.Kernel.rbf(cfg.alpha), cfg.c)
        return _Trained(model.statistic, lambda p, c: svm.save_model(p, model, c), data)
    if m == "oclssvm":
        kernel = svm.Kernel.dk() if cfg.kernel == svm.DK else svm.Kernel.rbf(cfg.alpha)
        model = svm.train_oclssvm(d0, kernel, cfg.c)
        return _Trained(model.statistic, lambda p, c: svm.save_model(p, model, c), d0)
    if m == "ae":
        model = autoencoder.train_ae(d0, cfg.latent, cfg.epochs, cfg.lr, seed)
        return _Trained(model.statistic, lambda p, c: autoencoder.save_ae(p, model, c), d0)
    raise ConfigError(f"model: {m!r}")  # unreachable after resolved()


def _finite_or_raise(name: str, s: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(s)):
        raise FloatingPointError(f"{name} produced {np.count_nonzero(~np.isfinite(s))} non-finite scores")
    return s


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    summary: dict
    timing: dict
    curve: evaluation.DetCurve
    lt_curve: evaluation.DetCurve


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Train, score and (when ``cfg.out`` is set) write the artifact bundle."""
    cfg = cfg.resolved()
    chash = cfg.hash()
    scen = cfg.make_scenario()
    timing = {}

    t = time.perf_counter()
    trained = _train(cfg, scen)
    timing["train_s"] = time.perf_counter() - t
    log.info("[%s] %s/%s trained in %.1fs", chash, cfg.scenario, cfg.model, timing["train_s"])

    t = time.perf_counter()
    t0 = channels.sample(scen, 0, cfg.n_test, cfg.seed, "test")
    t1 = channels.sample(scen, 1, cfg.n_test, cfg.seed, "test")
    val = channels.sample(scen, 0, cfg.n_val, cfg.seed, "validation")
    test = channels.LabeledDataset.concat(t0, t1)
    X, y = test.X, test.labels
    s = _finite_or_raise(cfg.model, np.asarray(trained.statistic(X), dtype=float))
    s_lt = lt_score(scen, X)
    curve = evaluation.det_curve(s[y == 0], s[y == 1])
    lt_curve = evaluation.det_curve(s_lt[y == 0], s_lt[y == 1])
    report = evaluation.equivalence_report(s, s_lt, y)

    # operating point: threshold from the validation set, error rates on test
    s_val = _finite_or_raise(cfg.model, np.asarray(trained.statistic(val.X), dtype=float))
    thr = calibrate_threshold(s_val, OPERATING_FA)
    dec = decide(s, thr)
    timing["evaluate_s"] = time.perf_counter() - t

    summary = {
        "config_hash": chash,
        "config": cfg.identity(),
        "xi": evaluation.error_rate_xi(curve),
        "xi_lt": evaluation.error_rate_xi(lt_curve),
        "equivalence": report.to_dict(),
        "operating_point": {
            "target_fa": OPERATING_FA,
            "delta": thr.delta,
            "validation_fa": thr.realized_fa,
            "test_fa": float(np.mean(dec[y == 0] == 1)),
            "test_md": float(np.mean(dec[y == 1] == 0)),
        },
        "n_test_per_class": cfg.n_test,
        "orientation": "h0-high",
    }
    if cfg.out:
        t = time.perf_counter()
        _write_bundle(Path(cfg.out), cfg, chash, trained, test, curve, lt_curve, summary)
        timing["write_s"] = time.perf_counter() - t
        (Path(cfg.out) / "timing.json").write_text(
            json.dumps({"config_hash": chash, **timing}, indent=2, sort_keys=True) + "\n")
    log.info("[%s] xi=%.4f (LT %.4f) tau=%.3f", chash, summary["xi"], summary["xi_lt"],
             report.kendall_tau)
    return ExperimentResult(cfg, summary, timing, curve, lt_curve)


def _write_bundle(out: Path, cfg, chash, trained, test, curve, lt_curve, summary) -> None:
    out.mkdir(parents=True, exist_ok=True)
    tag = f"config {chash}"
    (out / "config.ini").write_text(f"# {tag}\n" + cfg.to_ini())
    if cfg.save_datasets:
        if trained.train is not None:
            trained.train.to_csv(out / "train.csv", comment=tag)
        test.to_csv(out / "test.csv", comment=tag)
    if trained.save is not None:
        trained.save(out / "model.txt", tag)
    evaluation.write_det_csv(out / "det.csv", curve, comment=tag)
    evaluation.write_det_csv(out / "det_lt.csv", lt_curve, comment=tag)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if cfg.emit_svg:
        evaluation.render_det_svg(out / "det.svg", {cfg.model: curve, "lt": lt_curve},
                                  title=f"{cfg.scenario} seed {cfg.seed} ({chash})")


# --------------------------------------------------------------------------
# sweeps


def _parse_list(key: str, text: str) -> list[str]:
    items = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        if key in ("seed", "seeds") and "-" in part[1:]:
            lo, hi = part.split("-", 1)
            items.extend(str(i) for i in range(int(lo), int(hi) + 1))
        else:
            items.append(part)
    if not items:
        raise ConfigError(f"sweep {key}: empty value list")
    return items


def read_sweep_file(path) -> dict[str, list[str]]:
    """``[sweep]`` section: each key lists comma-separated values; ``seeds = 0-19`` ranges work."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"sweep file {path}: {exc}") from exc
    if not cp.has_section("sweep"):
        raise ConfigError(f"sweep file {path}: missing [sweep] section")
    grid = {}
    for key, text in cp["sweep"].items():
        name = "seed" if key == "seeds" else key.replace("-", "_")
        grid[name] = _parse_list(key, text)
    return grid


def expand_grid(base: ExperimentConfig, grid: dict[str, list[str]]) -> list[ExperimentConfig]:
    """Cartesian product of the grid over ``base``, deduplicated by config hash."""
    keys = list(grid)
    cells, seen = [], set()
    for combo in itertools.product(*(grid[k] for k in keys)):
        cfg = config_from_mapping(base, dict(zip(keys, combo))).resolved()
        h = cfg.hash()
        if h not in seen:
            seen.add(h)
            cells.append(cfg)
    return cells


_SWEEP_METRICS = ("xi", "xi_lt", "kendall_tau", "md_at_0.1", "md_lt_at_0.1", "agreement_at_0.1")


def _cell_metrics(summary: dict) -> dict:
    eq = summary["equivalence"]
    at = next(m for m in eq["matched_fa"] if m["fa"] == OPERATING_FA)
    return {"xi": summary["xi"], "xi_lt": summary["xi_lt"], "kendall_tau": eq["kendall_tau"],
            "md_at_0.1": at["md_model"], "md_lt_at_0.1": at["md_lt"],
            "agreement_at_0.1": at["agreement"]}


def _run_cell(cfg: ExperimentConfig) -> tuple[str, dict]:
    summary_path = Path(cfg.out) / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text())
        if summary.get("config_hash") == cfg.hash():
            log.info("[%s] already complete, skipping", cfg.hash())
            return cfg.hash(), summary
    return cfg.hash(), run_experiment(cfg).summary


def run_sweep(base: ExperimentConfig, grid: dict[str, list[str]], out, workers: int = 1) -> Path:
    """Run every grid cell (resuming finished ones) and write ``sweep.csv``.

    Cells live under ``out/cells/<config hash>``. The CSV has one row per
    cell plus, for every grid point, a row with ``seed = mean`` averaging the
    metrics over seeds.
    """
    out = Path(out)
    # datasets are regenerable from the config and would dominate disk use
    cells = [dataclasses.replace(c, out=str(out / "cells" / c.hash()), save_datasets=False,
                                 emit_svg=base.emit_svg)
             for c in expand_grid(base, grid)]
    log.info("sweep: %d cells, %d workers", len(cells), workers)
    if workers > 1:
        with multiprocessing.get_context("spawn").Pool(workers, initializer=_worker_init,
                                                       initargs=(logging.getLogger("plauth").getEffectiveLevel(),)) as pool:
            results = pool.map(_run_cell, cells, chunksize=1)
    else:
        results = [_run_cell(c) for c in cells]

    keys = [k for k in grid if k != "seed"]
    header = keys + ["seed", "config_hash"] + list(_SWEEP_METRICS)
    rows, groups = [], {}
    for cfg, (h, summary) in zip(cells, results):
        point = tuple(_fmt_cell(getattr(cfg, k)) for k in keys)
        metrics = _cell_metrics(summary)
        rows.append(list(point) + [str(cfg.seed), h] + [repr(metrics[m]) for m in _SWEEP_METRICS])
        groups.setdefault(point, []).append(metrics)
    for point, ms in groups.items():
        rows.append(list(point) + ["mean", ""] +
                    [repr(float(np.mean([m[k] for m in ms]))) for k in _SWEEP_METRICS])
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# sweep over {len(cells)} cells, base config {base.hash()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt_cell(v) -> str:
    return "" if v is None else _fmt(v)


def _worker_init(level: int) -> None:
    logging.basicConfig(level=logging.WARNING, format="%(asctime)s %(levelname)s %(message)s")
    logging.getLogger("plauth").setLevel(level)
