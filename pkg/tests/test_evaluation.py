from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from plauth.channels import FiniteScenarioConfig, GaussianScenarioConfig
from plauth.evaluation import (DetCurve, det_curve, equivalence_report, error_rate_xi, md_at_fa,
                               read_det_csv, render_det_svg, write_det_csv)
from plauth.stattests import lt_score

# chi2(4) vs ncx2(4, 36): the LT on the default Gaussian scenario, clipping ignored
LT_GAUSS_MD = {0.01: 0.0037181, 0.05: 0.00054509, 0.1: 0.00017630, 0.2: 4.1231e-5}
# Finite scenario, exact over the 256-cell alphabet
LT_FINITE_XI = 0.0043417


def _finite_oracle_xi():
    edges = np.r_[-np.inf, -4 + 0.75 * np.arange(1, 16), np.inf]
    q0 = np.diff(stats.norm.cdf(edges, loc=-1))
    q1 = np.diff(stats.norm.cdf(edges, loc=3))
    p0, p1 = np.outer(q0, q0).ravel(), np.outer(q1, q1).ravel()
    return min(0.5 * (p0[p0 <= v].sum() + p1[p0 > v].sum()) for v in np.r_[-1.0, np.unique(p0)])


class TestOracles:
    @pytest.mark.parametrize("fa", sorted(LT_GAUSS_MD))
    def test_gaussian_md_constants(self, fa):
        thr = stats.chi2.ppf(1 - fa, 4)
        assert stats.ncx2.cdf(thr, 4, 36) == pytest.approx(LT_GAUSS_MD[fa], rel=1e-4)

    def test_finite_xi_constant(self):
        assert _finite_oracle_xi() == pytest.approx(LT_FINITE_XI, rel=1e-4)


class TestDetCurve:
    def test_perfect_separation_reaches_origin(self):
        c = det_curve([5.0, 6.0, 7.0], [1.0, 2.0])
        assert (0.0, 0.0) in set(map(tuple, c.points))
        assert error_rate_xi(c) == 0.0

    def test_identical_scores_lie_on_diagonal(self):
        s = np.random.default_rng(0).normal(size=1000)
        c = det_curve(s, s)
        np.testing.assert_allclose(c.fa + c.md, 1.0)
        assert error_rate_xi(c) == pytest.approx(0.5)

    def test_endpoints_and_monotone(self):
        rng = np.random.default_rng(1)
        c = det_curve(rng.normal(1, 1, 300), rng.normal(-1, 1, 200))
        assert (c.fa[0], c.md[0]) == (0.0, 1.0)
        assert (c.fa[-1], c.md[-1]) == (1.0, 0.0)
        assert np.all(np.diff(c.fa) >= 0) and np.all(np.diff(c.md) <= 0)

    def test_tie_goes_to_h1(self):
        c = det_curve([1.0], [1.0])
        # delta = 1: both scores equal delta and are rejected
        np.testing.assert_array_equal(c.points, [[0, 1], [1, 0]])

    def test_h1_high_orientation(self):
        a = det_curve([1.0, 2.0], [3.0, 4.0], orientation="h1-high")
        b = det_curve([-1.0, -2.0], [-3.0, -4.0])
        np.testing.assert_array_equal(a.points, b.points)

    def test_rejects_nan_and_empty(self):
        with pytest.raises(ValueError):
            det_curve([np.nan, 1.0], [0.0])
        with pytest.raises(ValueError):
            det_curve([], [0.0])
        with pytest.raises(ValueError):
            det_curve([1.0], [0.0], orientation="up")

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=1, max_size=60),
           st.lists(st.integers(-20, 20), min_size=1, max_size=60))
    def test_invariant_under_monotone_maps(self, s0, s1):
        a = det_curve(s0, s1)
        f = lambda s: np.exp(0.1 * np.asarray(s, float)) * 3 + 7
        b = det_curve(f(s0), f(s1))
        np.testing.assert_array_equal(a.points, b.points)
        assert error_rate_xi(a) == error_rate_xi(b)

    def test_xi_matches_bruteforce(self):
        rng = np.random.default_rng(2)
        s0, s1 = rng.normal(1, 1, 400), rng.normal(-1, 1, 300)
        grid = np.r_[-np.inf, np.sort(np.r_[s0, s1])]
        brute = min(0.5 * (np.mean(s0 <= d) + np.mean(s1 > d)) for d in grid)
        assert error_rate_xi(det_curve(s0, s1)) == pytest.approx(brute)


class TestMdAtFa:
    def test_exact_point(self):
        c = det_curve(np.arange(10.0), np.arange(10.0) - 5)
        md, interp = md_at_fa(c, 0.2)
        assert not interp
        assert md == pytest.approx(0.3)

    def test_interpolated(self):
        c = det_curve([0.0, 1.0], [-1.0, 0.5])
        md, interp = md_at_fa(c, 0.25)
        assert interp
        assert 0.0 <= md <= 1.0


class TestLtOracles:
    def test_gaussian_lt_md(self):
        cfg = GaussianScenarioConfig()
        s0 = lt_score(cfg, cfg.sample(0, 25_000, seed=0, stream="test").X)
        s1 = lt_score(cfg, cfg.sample(1, 25_000, seed=0, stream="test").X)
        c = det_curve(s0, s1)
        for fa, expected in LT_GAUSS_MD.items():
            assert md_at_fa(c, fa)[0] == pytest.approx(expected, abs=0.01)
        assert md_at_fa(c, 0.01)[0] == pytest.approx(LT_GAUSS_MD[0.01], abs=0.002)

    def test_finite_lt_xi(self):
        cfg = FiniteScenarioConfig()
        s0 = lt_score(cfg, cfg.sample(0, 25_000, seed=0, stream="test").X)
        s1 = lt_score(cfg, cfg.sample(1, 25_000, seed=0, stream="test").X)
        assert error_rate_xi(det_curve(s0, s1)) == pytest.approx(LT_FINITE_XI, abs=0.0015)


class TestEquivalenceReport:
    @pytest.fixture
    def scores(self):
        rng = np.random.default_rng(3)
        s = np.r_[rng.normal(2, 1, 2000), rng.normal(-2, 1, 2000)]
        return s, np.r_[np.zeros(2000), np.ones(2000)]

    def test_affine_copy_is_equivalent(self, scores):
        s, y = scores
        r = equivalence_report(2 * s + 7, s, y)
        assert r.kendall_tau == pytest.approx(1.0)
        for m in r.matched:
            assert m.agreement == 1.0
            assert m.delta_md == 0.0

    def test_reversed_score(self, scores):
        s, y = scores
        r = equivalence_report(-s, s, y)
        assert r.kendall_tau == pytest.approx(-1.0)
        assert r.at(0.1).agreement < 0.5

    def test_to_dict(self, scores):
        s, y = scores
        d = equivalence_report(s, s, y, fa_targets=(0.1,)).to_dict()
        assert d["matched_fa"][0]["fa"] == 0.1
        with pytest.raises(KeyError):
            equivalence_report(s, s, y, fa_targets=(0.1,)).at(0.2)

    def test_rejects_bad_input(self, scores):
        s, y = scores
        with pytest.raises(ValueError):
            equivalence_report(s[:-1], s, y)
        with pytest.raises(ValueError):
            equivalence_report(s, s, np.zeros_like(y))


class TestFiles:
    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        c = det_curve(rng.normal(size=50), rng.normal(-1, size=40))
        path = tmp_path / "det.csv"
        write_det_csv(path, c, comment="config 1234")
        np.testing.assert_array_equal(read_det_csv(path), c.points)
        assert path.read_text().splitlines()[:2] == ["# config 1234", "fa,md"]

    def test_csv_header_required(self, tmp_path):
        path = tmp_path / "det.csv"
        path.write_text("x,y\n0,1\n")
        with pytest.raises(ValueError):
            read_det_csv(path)

    def test_svg_is_reproducible(self, tmp_path):
        c = det_curve(np.arange(20.0), np.arange(20.0) - 8)
        render_det_svg(tmp_path / "a.svg", {"lt": c}, title="t")
        render_det_svg(tmp_path / "b.svg", {"lt": c}, title="t")
        a = (tmp_path / "a.svg").read_bytes()
        assert a == (tmp_path / "b.svg").read_bytes()
        assert a.lstrip().startswith(b"<?xml")


def test_det_curve_is_dataclass_with_counts():
    c = det_curve([1.0, 2.0], [0.0])
    assert isinstance(c, DetCurve) and len(c) == 4 and (c.n0, c.n1) == (2, 1)
