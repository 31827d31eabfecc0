import math

import numpy as np
import pytest

from qmc_uq import certify as C
from qmc_uq import discrepancy as D
from qmc_uq import integrands as I
from qmc_uq import pointgen as P
from qmc_uq.errors import AssumptionError, VerificationError

SLACK = 1e-12


def linear(d=1):
    return I.declare(lambda x: x.sum(axis=-1), d, "monotone_1d", "convex", "jointly_convex",
                     "completely_monotone", "cm_absolutely_continuous", exact_mean=d / 2, name="linear")


def square():
    return I.declare(lambda x: x[..., 0] ** 2, 1, "monotone_1d", "convex", "jointly_convex", exact_mean=1 / 3)


# -- certificate type ---------------------------------------------------------------------


def test_certificate_invariants():
    with pytest.raises(ValueError):
        C.Certificate(1.0, 0.0, 0.5, 1, "convex_1d")
    with pytest.raises(ValueError):
        C.Certificate(0.0, 1.0, 2.0, 1, "convex_1d")
    with pytest.raises(ValueError):
        C.Certificate(0.0, 1.0, 0.5, 1, "guesswork")


# -- endpoint -----------------------------------------------------------------------------


def test_endpoint_examples():
    c = C.bracket_endpoint(linear(), 2)
    assert (c.lower, c.upper) == (0.25, 0.75) and c.contains(0.5)
    const = C.bracket_endpoint(I.fixture("constant", 1, value=2.5), 7)
    assert const.lower == const.upper == 2.5
    sq = C.bracket_endpoint(square(), 4)
    assert sq.lower == 0.21875 and sq.upper == 0.46875 and sq.contains(1 / 3)
    assert sq.n_evals == 5 and sq.assumption == "monotone_1d"


def test_endpoint_width_is_exact_and_shrinks():
    f = I.fixture("exp1d")
    widths = []
    for n in (1, 2, 3, 5, 8, 13, 64):
        c = C.bracket_endpoint(f, n)
        assert c.width == pytest.approx((math.e - 1) / n, rel=1e-13)
        widths.append(c.width)
    assert widths == sorted(widths, reverse=True)


def test_endpoint_gate():
    with pytest.raises(AssumptionError):
        C.bracket_endpoint(I.fixture("indicator", 1), 4)
    with pytest.raises(ValueError):
        C.bracket_endpoint(I.fixture("exp1d"), 0)


# -- midpoint / trapezoid -----------------------------------------------------------------


def test_mid_trap_examples():
    c = C.bracket_mid_trap(square(), 1)
    assert (c.lower, c.upper) == (0.25, 0.5)
    assert c.simpson == pytest.approx(1 / 3, abs=1e-16) and c.estimate == c.simpson
    e = C.bracket_mid_trap(I.fixture("exp1d"), 2)
    assert e.lower == pytest.approx((math.exp(0.25) + math.exp(0.75)) / 2, rel=1e-15)
    assert e.upper == pytest.approx((0.5 + math.exp(0.5) + math.e / 2) / 2, rel=1e-15)
    # the printed 1.70064 does not match the formula; 1.700513 does
    assert round(e.lower, 6) == 1.700513 and round(e.upper, 5) == 1.75393
    assert e.contains(math.e - 1) and e.n_evals == 5
    lin = C.bracket_mid_trap(linear(), 5)
    assert lin.lower == pytest.approx(0.5, abs=1e-15) and lin.upper == pytest.approx(0.5, abs=1e-15)


def test_mid_trap_monotone_width_and_simpson_rate():
    f = I.fixture("exp1d")
    ns = [1, 2, 4, 8, 16]
    certs = [C.bracket_mid_trap(f, n) for n in ns]
    widths = [c.width for c in certs]
    assert widths == sorted(widths, reverse=True)
    err = [abs(c.simpson - (math.e - 1)) for c in certs]
    slope = np.polyfit(np.log(ns), np.log(err), 1)[0]
    assert slope <= -3.8


def test_mid_trap_gate():
    with pytest.raises(AssumptionError):
        C.bracket_mid_trap(I.fixture("indicator", 1), 4)


# -- product convex -------------------------------------------------------------------------


def sum_sq():
    return I.declare(lambda x: (x**2).sum(axis=-1), 2, "jointly_convex", exact_mean=2 / 3, name="sum_sq")


def test_product_convex_examples():
    for m in (1, 2, 5):
        c = C.bracket_product_convex(linear(3), m)
        assert c.lower == pytest.approx(1.5, abs=1e-14) and c.upper == pytest.approx(1.5, abs=1e-14)
    c1 = C.bracket_product_convex(sum_sq(), 1)
    assert (c1.lower, c1.upper) == (0.5, 1.0)
    assert c1.n_evals == 4 + 1


def test_product_convex_m2_against_mesh_oracle():
    f = sum_sq()
    c = C.bracket_product_convex(f, 2)
    # lower: tensor midpoint rule on 2 x 2 boxes
    assert c.lower == pytest.approx(I.mesh_mean(f, 2), abs=1e-15)
    # upper: average over boxes of the mean of f at the box corners, computed box by box
    boxes = []
    for i in range(2):
        for j in range(2):
            corners = [((i + a) / 2, (j + b) / 2) for a in (0, 1) for b in (0, 1)]
            boxes.append(np.mean(f(np.array(corners))))
    assert c.upper == pytest.approx(np.mean(boxes), abs=1e-15)
    assert (c.lower, c.upper) == (5 / 8, 3 / 4)
    assert c.contains(2 / 3) and c.n_evals == 9 + 4


def test_product_convex_guards():
    with pytest.raises(AssumptionError):
        C.bracket_product_convex(I.fixture("product_cdf", 2), 3)
    with pytest.raises(ValueError):
        C.bracket_product_convex(I.fixture("additive", 8), 10, max_evals=1000)


# -- simplices ------------------------------------------------------------------------------


def test_simplex_examples():
    tri = C.SimplexSpec([[0, 0], [1, 0], [0, 1]])
    assert tri.volume == pytest.approx(0.5)
    f = I.declare(lambda x: x[..., 0] ** 2, 2, "jointly_convex", exact_mean=1 / 3)
    c = C.bracket_simplex(f, tri)
    assert c.lower == pytest.approx(1 / 9) and c.upper == pytest.approx(1 / 3)
    assert c.contains(1 / 6)
    lin = C.bracket_simplex(linear(2), tri)
    assert lin.lower == pytest.approx(lin.upper)


def test_simplex_errors():
    with pytest.raises(ValueError):
        C.SimplexSpec([[0, 0], [1, 0], [1, 0]])
    with pytest.raises(ValueError):
        C.SimplexSpec([[0, 0], [1, 0], [0, 1]], volume=0.4)
    with pytest.raises(ValueError):
        C.SimplexSpec([[0, 0], [1, 0]])


def test_kuhn_triangulation():
    one = C.kuhn_triangulate(1)
    assert len(one) == 1 and sorted(one[0].vertices[:, 0].tolist()) == [0.0, 1.0]
    two = C.kuhn_triangulate(2)
    assert len(two) == 2
    for s in two:
        # each triangle contains the diagonal (0,0)-(1,1)
        assert {(0.0, 0.0), (1.0, 1.0)} <= {tuple(v) for v in s.vertices.tolist()}
    for d in range(1, 7):
        simp = C.kuhn_triangulate(d)
        assert len(simp) == math.factorial(d)
        assert sum(s.volume for s in simp) == pytest.approx(1.0, abs=1e-12)
        assert all(s.volume == pytest.approx(1 / math.factorial(d), rel=1e-12) for s in simp)
    pts = np.random.default_rng(0).random((2000, 3))
    # every point lies in exactly one simplex (coordinates distinct almost surely)
    order_count = {tuple(np.argsort(-p)) for p in pts}
    assert len(order_count) == 6
    for bad in (0, 7):
        with pytest.raises(ValueError):
            C.kuhn_triangulate(bad)


def test_kuhn_bracket_contains_mean():
    for d in (1, 2, 3, 4):
        for name in ("additive", "sum_squares", "exp_sum", "constant"):
            f = I.fixture(name, d)
            c = C.bracket_kuhn(f)
            assert c.contains(f.exact_mean, SLACK), (name, d)


# -- complete monotonicity ------------------------------------------------------------------


def test_cm_sampling_examples():
    assert C.is_completely_monotone_sample(I.fixture("product_cdf", 3), 2000, 1).passed
    add = I.fixture("additive", 2)
    ev = C.is_completely_monotone_sample(add, 2000, 1)
    assert ev.passed and ev.min_alternating_sum >= -1e-12
    assert C.alternating_sum(add, [0.1, 0.2], [0.5, 0.9], [0, 1]) == pytest.approx(0.0, abs=1e-15)
    neg = I.declare(lambda x: -x[..., 0] * x[..., 1], 2, exact_mean=-0.25)
    bad = C.is_completely_monotone_sample(neg, 500, 1)
    assert not bad.passed and bad.witness is not None
    w = bad.witness
    assert C.alternating_sum(neg, w["x"], w["z"], w["u"]) == pytest.approx(w["value"])


def test_shift_flip_examples():
    f1 = C.shift_flip(P.hammersley_2d(1))
    assert sorted(f1.points.tolist()) == [[0.5, 1.0], [1.0, 0.5]]
    assert f1.closed
    assert D.verify_npld(C.shift_flip(P.hammersley_2d(2)))
    one = C.shift_flip(P.hammersley_2d(0))
    assert one.points.tolist() == [[1.0, 1.0]]
    with pytest.raises(ValueError):
        C.shift_flip(P.sobol_net(3, 2))
    with pytest.raises(ValueError):
        C.shift_flip(P.PointSet([[0.3, 0.1]]), 2)


def test_cm_bracket_examples():
    f = I.fixture("product_cdf", 2)
    h = P.hammersley_2d(2)
    c = C.bracket_completely_monotone(f, h, C.shift_flip(h))
    assert c.contains(0.25) and c.n_evals == 8
    # eight evaluations by hand
    q, p = h.points, C.shift_flip(h).points
    assert c.upper == pytest.approx(np.mean(np.prod(1 - q, axis=1)))
    assert c.lower == pytest.approx(np.mean(np.prod(1 - p, axis=1)))
    const = C.bracket_completely_monotone(I.fixture("constant", 2, value=3.0), h, C.shift_flip(h))
    assert const.lower == const.upper == 3.0


def test_cm_bracket_recovers_endpoint_rule():
    n = 8
    f = linear(1)
    nnld = P.PointSet(np.arange(n) / n)
    npld = P.PointSet(np.arange(1, n + 1) / n, closed=True)
    c = C.bracket_completely_monotone(f, nnld, npld)
    e = C.bracket_endpoint(f, n)
    assert c.lower == pytest.approx(e.lower, abs=1e-15) and c.upper == pytest.approx(e.upper, abs=1e-15)
    assert not c.meta["npld_outside_half_open"]


def test_cm_bracket_single_point_caveat_is_satisfied():
    # {(1, 1)} is the all-ones point, allowed without absolute continuity
    f = I.fixture("additive", 2)
    c = C.bracket_completely_monotone(f, P.hammersley_2d(0), C.shift_flip(P.hammersley_2d(0)))
    assert c.contains(0.5)


def test_cm_bracket_errors():
    f = I.fixture("product_cdf", 2)
    h = P.hammersley_2d(3)
    with pytest.raises(VerificationError) as err:
        C.bracket_completely_monotone(f, P.PointSet([[0.9, 0.9]]), C.shift_flip(h))
    assert err.value.corner is not None
    with pytest.raises(VerificationError):
        C.bracket_completely_monotone(f, h, h)
    with pytest.raises(AssumptionError):
        C.bracket_completely_monotone(I.fixture("unfriendly_product", 2), h, C.shift_flip(h))
    # boundary points need an absolutely continuous representing measure
    with pytest.raises(AssumptionError):
        C.bracket_completely_monotone(I.fixture("additive", 2), h, C.shift_flip(h))
    C.bracket_completely_monotone(f, h, h, verify=False)  # trusted


def _cm_width_slope(d, ms):
    f = I.fixture("product_cdf", d)
    ns, widths = [], []
    for m in ms:
        c = C.bracket_completely_monotone(f, C.nnld_construction(d, m), C.npld_construction(d, m))
        assert c.contains(f.exact_mean, SLACK)
        ns.append(c.meta["n_nnld"])
        widths.append(c.width)
    return np.polyfit(np.log2(ns), np.log2(widths), 1)[0]


def test_cm_width_rates():
    assert _cm_width_slope(2, [2, 4, 6, 8]) <= -0.7
    assert _cm_width_slope(4, [1, 2, 3, 4]) <= -0.3


def test_constructions_have_the_right_signs():
    for d in (1, 2, 3, 4):
        for m in (1, 2):
            assert D.verify_nnld(C.nnld_construction(d, m))
            assert D.verify_npld(C.npld_construction(d, m))
