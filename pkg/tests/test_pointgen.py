import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from qmc_uq import pointgen as P
from qmc_uq.errors import DirectionTableError


# -- radical inverse / Hammersley / Halton -------------------------------------------------


@pytest.mark.parametrize("i,b,expected", [(0, 2, 0.0), (1, 2, 0.5), (6, 2, 0.375), (5, 3, 7 / 9), (10, 10, 0.01)])
def test_radical_inverse(i, b, expected):
    assert P.radical_inverse(i, b) == pytest.approx(expected, abs=1e-15)


@given(st.integers(0, 2**40), st.integers(2, 17))
def test_radical_inverse_matches_digit_sum(i, b):
    digits, k = [], i
    while k:
        digits.append(k % b)
        k //= b
    oracle = sum(dig / b ** (pos + 1) for pos, dig in enumerate(digits))
    assert P.radical_inverse(i, b) == pytest.approx(oracle, rel=1e-14, abs=1e-300)
    assert 0.0 <= P.radical_inverse(i, b) < 1.0


def test_radical_inverse_rejects_bad_input():
    with pytest.raises(ValueError):
        P.radical_inverse(-1, 2)
    with pytest.raises(ValueError):
        P.radical_inverse(3, 1)


def test_hammersley_examples(helpers):
    assert helpers.as_set(P.hammersley_2d(1, 2).points) == {(0.0, 0.0), (0.5, 0.5)}
    assert helpers.as_set(P.hammersley_2d(2, 2).points) == {(0, 0), (0.25, 0.5), (0.5, 0.25), (0.75, 0.75)}
    assert P.hammersley_2d(0, 2).points.tolist() == [[0.0, 0.0]]
    ps = P.hammersley_2d(2, 3)
    assert ps.n == 9 and ps.points[:, 0].tolist() == [i / 9 for i in range(9)]


def test_hammersley_equals_identity_reversal_net(helpers):
    for m in range(0, 9):
        net = P.digital_net(P.hammersley_generators(m))
        assert helpers.as_set(net.points) == helpers.as_set(P.hammersley_2d(m, 2).points)
        assert P.hammersley_generators(m).is_permutation


def test_halton_first_points():
    ps = P.halton(4, 2)
    np.testing.assert_allclose(ps.points, [[0, 0], [0.5, 1 / 3], [0.25, 2 / 3], [0.75, 1 / 9]])
    assert P.first_primes(5) == [2, 3, 5, 7, 11]


# -- digital nets ------------------------------------------------------------------------


def test_digital_net_identity_d1_m2():
    ps = P.digital_net(P.NetGenerators(np.eye(2, dtype=np.uint8)[None]))
    assert ps.points[:, 0].tolist() == [0.0, 0.5, 0.25, 0.75]
    assert ps.construction == "digital_net" and ps.n == 4


def test_digital_net_m0_is_origin():
    ps = P.digital_net(P.NetGenerators(np.zeros((2, 0, 0), dtype=np.uint8)))
    assert ps.points.tolist() == [[0.0, 0.0]]


def test_net_generators_validation():
    with pytest.raises(ValueError):
        P.NetGenerators(np.zeros((1, 2, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        P.NetGenerators(np.full((1, 2, 2), 2))
    with pytest.raises(ValueError):
        P.NetGenerators(np.zeros((0, 2, 2)))


def test_permutation_net_projections(helpers):
    perms = [[0, 1, 2, 3], [3, 2, 1, 0], [1, 3, 0, 2]]
    gen = P.permutation_net(perms)
    assert gen.is_permutation
    ps = P.digital_net(gen)
    grid = {k / 16 for k in range(16)}
    for j in range(3):
        assert set(ps.points[:, j].tolist()) == grid
    assert helpers.t_value(ps.points[:, :2], 4) == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.randoms(use_true_random=False))
def test_nonsingular_nets_have_stratified_projections(m, d, rnd):
    mats = []
    for _ in range(d):
        # unit upper triangular times a random permutation is nonsingular
        upper = np.triu(np.array([[rnd.randint(0, 1) for _ in range(m)] for _ in range(m)]), 1) + np.eye(m, dtype=int)
        perm = np.eye(m, dtype=int)[rnd.sample(range(m), m)]
        mats.append((upper @ perm) % 2)
    ps = P.digital_net(P.NetGenerators(np.array(mats)))
    for j in range(d):
        assert sorted(ps.points[:, j].tolist()) == [k / 2**m for k in range(2**m)]


# -- Sobol' ------------------------------------------------------------------------------


def test_sobol_first_dimension_is_van_der_corput():
    ps = P.sobol_net(3, 6)
    assert ps.points[:4, 0].tolist() == [0.0, 0.5, 0.25, 0.75]
    assert ps.points[:, 0].tolist() == [P.radical_inverse(i, 2) for i in range(64)]
    # same set as the Gray-code ordered example {0, 0.5, 0.75, 0.25}
    assert set(ps.points[:4, 0].tolist()) == {0.0, 0.5, 0.75, 0.25}


def test_sobol_d2_m4_is_a_net(helpers):
    ps = P.sobol_net(2, 4)
    assert len(helpers.as_set(ps.points)) == 16
    for j in range(2):
        assert sorted(ps.points[:, j].tolist()) == [k / 16 for k in range(16)]
    assert helpers.t_value(ps.points, 4) == 0


def test_sobol_m0_origin():
    assert P.sobol_net(5, 0).points.tolist() == [[0.0] * 5]


@pytest.mark.parametrize("d,m", [(2, 5), (8, 8), (40, 6), (512, 4)])
def test_sobol_matches_scipy_as_a_set(d, m, helpers):
    ours = P.sobol_net(d, m).points
    ref = qmc.Sobol(d, scramble=False).random_base2(m)
    assert helpers.as_set(ours) == helpers.as_set(ref)


def test_sobol_table_too_small_names_dimension():
    table = P.parse_directions("d s a m_i\n2 1 0 1\n3 2 1 1 3\n")
    assert table.max_dim == 3
    P.sobol_net(3, 4, table)
    with pytest.raises(DirectionTableError) as err:
        P.sobol_net(4, 4, table)
    assert err.value.dimension == 4
    with pytest.raises(DirectionTableError):
        P.sobol_net(513, 2)


def test_direction_file_env_override(tmp_path, monkeypatch):
    path = tmp_path / "dirs.txt"
    path.write_text("d s a m_i\n2 1 0 1\n")
    monkeypatch.setenv(P.DIRECTIONS_ENV, str(path))
    assert P.load_directions().max_dim == 2
    monkeypatch.delenv(P.DIRECTIONS_ENV)
    assert P.load_directions().max_dim == 512


def test_parse_directions_rejects_bad_rows():
    with pytest.raises(ValueError):
        P.parse_directions("2 2 0 1\n")
    with pytest.raises(ValueError):
        P.parse_directions("3 1 0 1\n")


# -- lattices ----------------------------------------------------------------------------


def test_lattice_examples():
    assert P.rank1_lattice(P.LatticeSpec(4, (1,))).points[:, 0].tolist() == [0, 0.25, 0.5, 0.75]
    pts = P.rank1_lattice(P.LatticeSpec(5, (1, 2))).points
    np.testing.assert_allclose(pts, [[0, 0], [0.2, 0.4], [0.4, 0.8], [0.6, 0.2], [0.8, 0.6]])
    assert P.rank1_lattice(P.LatticeSpec(1, (0,))).points.tolist() == [[0.0]]


def test_lattice_rejects_bad_z():
    for z in [(0,), (5,), (1, 7)]:
        with pytest.raises(ValueError):
            P.LatticeSpec(5, z)


@pytest.mark.parametrize("n", [7, 16, 63, 64])
def test_lattice_group_property(n, helpers):
    z = P.korobov_vector(n, 3)
    ints = np.round(P.rank1_lattice(P.LatticeSpec(n, z)).points * n).astype(int)
    members = helpers.as_set(ints)
    for a, b in itertools.product(ints, ints):
        assert tuple(((a + b) % n).tolist()) in members


def test_korobov_vector_shape():
    z = P.korobov_vector(1024, 6)
    assert len(z) == 6 and z[0] == 1 and all(1 <= v < 1024 for v in z)


# -- tensor products and PointSet ---------------------------------------------------------


def test_tensor_examples(helpers):
    a = P.PointSet([0.0, 0.5])
    t = P.tensor_product(a, a)
    assert t.n == 4 and t.d == 2
    assert helpers.as_set(t.points) == {(0, 0), (0, 0.5), (0.5, 0), (0.5, 0.5)}
    h = P.hammersley_2d(3)
    hh = P.tensor_product(h, h)
    assert hh.n == 64 and hh.d == 4
    one = P.PointSet([[0.25, 0.125]])
    assert P.tensor_product(h, one).n == h.n
    assert np.all(P.tensor_product(h, one).points[:, 2:] == [0.25, 0.125])


def test_tensor_associative_up_to_order(helpers):
    a, b, c = P.hammersley_2d(1), P.PointSet([0.1, 0.7]), P.sobol_net(1, 2)
    left = P.tensor_product(P.tensor_product(a, b), c)
    right = P.tensor_product(a, P.tensor_product(b, c))
    assert helpers.as_set(left.points) == helpers.as_set(right.points)


def test_pointset_validation():
    with pytest.raises(ValueError):
        P.PointSet([[0.5, 1.0]])
    with pytest.raises(ValueError):
        P.PointSet([[-0.1]])
    with pytest.raises(ValueError):
        P.PointSet(np.zeros((3, 1)), "digital_net", 2, {"m": 2})
    closed = P.PointSet([[0.5, 1.0]], closed=True)
    assert closed.n == 1 and closed.d == 2
    ps = P.sobol_net(2, 3)
    with pytest.raises(ValueError):
        ps.points[0, 0] = 0.1


def test_count_guard():
    with pytest.raises(OverflowError):
        P.hammersley_2d(33, 2)
    big = P.PointSet(np.zeros((2**16, 1)))
    with pytest.raises(OverflowError):
        P.tensor_product(big, P.tensor_product(big, P.PointSet([0.0, 0.5])))


@pytest.mark.parametrize("factory", [
    lambda: P.sobol_net(6, 7), lambda: P.halton(100, 5), lambda: P.hammersley_2d(6, 3),
    lambda: P.rank1_lattice(P.LatticeSpec(101, P.korobov_vector(101, 4))),
])
def test_all_constructions_in_unit_cube(factory):
    pts = factory().points
    assert pts.min() >= 0.0 and pts.max() < 1.0
