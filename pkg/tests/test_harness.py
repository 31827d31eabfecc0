import json
import math

import numpy as np
import pytest
from scipy import stats

from qmc_uq import harness as H
from qmc_uq import integrands as I
from qmc_uq.errors import PreconditionError


def test_threshold_against_binomial_oracle():
    assert H.binomial_threshold(1000) == 927
    for T in (100, 250, 1000, 2400):
        k = H.binomial_threshold(T)
        # k - 1 is in the lower 4% tail, k is not
        assert stats.binom.cdf(k - 1, T, 0.94) <= 0.04 < stats.binom.cdf(k, T, 0.94)


def test_row_verdict_must_match_rule():
    kw = dict(integrand="a", d=2, n=4, R=5, randomizer="shift", method="student", alpha=0.05, T=1000,
              coverage=0.9, threshold=927, mean_width=1.0, width_sd=0.0)
    H.CoverageRow(covered=926, verdict="confirmed_failure", **kw)
    H.CoverageRow(covered=927, verdict="ok", **kw)
    with pytest.raises(ValueError):
        H.CoverageRow(covered=926, verdict="ok", **kw)
    with pytest.raises(ValueError):
        H.CoverageRow(covered=1001, verdict="ok", **kw)


def test_grid_expansion():
    g = H.StudyGrid.from_config({"integrands": ["additive"], "d": [2, 3], "n": [16], "R": [5, 10],
                                 "randomizers": ["shift", "nested"], "methods": ["t", "bootstrap_t"],
                                 "alpha": [0.05, 0.01]})
    assert len(g.cells) == 8
    assert g.methods == ("student", "boot-t") and g.alphas == (0.05, 0.01)
    assert g.cells[0] == H.CoverageCell("additive", 2, 16, 5, "shift")
    with pytest.raises(ValueError):
        H.StudyGrid.from_config({"colour": 1})
    with pytest.raises(ValueError):
        H.StudyGrid.from_config({"methods": ["jackknife"]})


def small_grid(**over):
    cfg = {"integrands": ["smooth_product"], "d": [2], "n": [64], "R": [10],
           "randomizers": ["digital_shift", "iid"], "methods": ["student", "chebyshev", "median"], "B": 200}
    cfg.update(over)
    return H.StudyGrid.from_config(cfg)


def test_csv_is_byte_reproducible(tmp_path):
    g = small_grid(methods=["student", "percentile", "boot-t"])
    a, sa = H.coverage_study(g, 120, 5)
    b, sb = H.coverage_study(g, 120, 5, threads=3)
    assert H.rows_to_csv(a, "x") == H.rows_to_csv(b, "x")
    H.write_study(tmp_path / "one", a, sa, 5, {}, 0.0)
    H.write_study(tmp_path / "two", b, sb, 5, {}, 0.0)
    assert (tmp_path / "one" / "coverage.csv").read_bytes() == (tmp_path / "two" / "coverage.csv").read_bytes()
    summary = json.loads((tmp_path / "one" / "summary.json").read_text())
    assert summary["cells"] == len(a)
    c, _ = H.coverage_study(g, 120, 6)
    assert H.rows_to_csv(a) != H.rows_to_csv(c)


def test_higher_level_covers_more_often():
    g = small_grid(alpha=[0.05, 0.01], methods=["student", "normal", "percentile", "chebyshev"])
    rows, _ = H.coverage_study(g, 300, 2)
    by = {(r.randomizer, r.method, r.alpha): r.covered for r in rows}
    for (kind, method, alpha), covered in by.items():
        if alpha == 0.05:
            assert by[(kind, method, 0.01)] >= covered


def test_chebyshev_and_student_verdicts():
    g = small_grid(n=[1024], randomizers=["nested_scramble", "iid", "shift"])
    rows, skipped = H.coverage_study(g, 1000, 1)
    for r in rows:
        if r.method == "chebyshev":
            assert r.verdict == "ok"
    nested_t = [r for r in rows if r.method == "student" and r.randomizer == "nested_scramble"]
    assert nested_t[0].verdict == "ok" and nested_t[0].threshold == 927
    assert skipped == []


def test_median_skipped_when_unattainable():
    rows, skipped = H.coverage_study(small_grid(R=[5], methods=["median", "student"]), 100, 1)
    assert {r.method for r in rows} == {"student"}
    assert len(skipped) == 2 and skipped[0]["reason"] == "not applicable"


def test_trial_count_guard():
    with pytest.raises(PreconditionError):
        H.coverage_study(small_grid(), 50, 1)


def test_fit_rate_excludes_transient():
    n = [2**k for k in range(6, 13)]
    rmse = [n_ ** -1.5 for n_ in n]
    slope, _, excluded = H.fit_rate(n, rmse)
    assert slope == pytest.approx(-1.5) and not excluded
    noisy = [r * (1 + 0.01 * (-1) ** i) for i, r in enumerate(rmse)]
    noisy[0] *= 50
    slope, _, excluded = H.fit_rate(n, noisy)
    assert excluded and slope == pytest.approx(-1.5, abs=0.05)
    with pytest.raises(PreconditionError):
        H.fit_rate(n[:3], rmse[:3])


def test_rate_examples():
    f = I.fixture("smooth_product", 4)
    ns = [2**k for k in range(6, 13)]
    mc = H.rate_study(f, "iid", ns, 200, 3)
    assert abs(mc.slope + 0.5) <= 0.1
    bern = I.declare(lambda x: np.prod(1.0 + 2.0 * (x * x - x + 1 / 6), axis=-1), 2, "periodic", exact_mean=1.0)
    assert H.rate_study(bern, "shift", ns, 50, 3).slope <= -0.9
    with pytest.raises(PreconditionError):
        H.rate_study(f, "iid", [64, 128, 512, 1024], 10, 0)


def test_kurtosis_growth():
    exp = I.fixture("exp1d")
    mc = H.kurtosis_growth(exp, "iid", [4, 64], 20_000, 1)
    # kappa(e^U) is about -1.13, so the mean over n draws has kurtosis near -1.13 / n
    assert abs(mc[1]["kurtosis"]) < abs(mc[0]["kurtosis"])
    const = H.kurtosis_growth(I.fixture("constant", 1), "matrix_scramble_shift", [64], 1000, 1)
    assert const[0]["kurtosis"] is None and const[0]["skewness"] is None
    with pytest.raises(PreconditionError):
        H.kurtosis_growth(exp, "iid", [64], 999, 1)


def test_fmt_round_trip():
    for x in (0.1, 1 / 3, math.pi * 1e-300, 2.0**-1074):
        assert float(H.fmt(x)) == x
