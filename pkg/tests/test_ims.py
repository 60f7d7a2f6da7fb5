import numpy as np
import pytest

from pekarlab.ansatz import HartreeProduct, PairCorrelated, PairFactor, SlaterDeterminant, density, gaussian_orbital
from pekarlab.errors import UsageError
from pekarlab.grid import Grid3D, MagneticGauge
from pekarlab.ims import (
    ProductPartition,
    build_pair,
    ims_identity_check,
    support_distance,
    support_distance_check,
    trivial_pair,
)
from pekarlab.scf import build_linearized

G = Grid3D(24, 16 / 24)
FIELD = MagneticGauge((0.0, 0.3, 0.5))
EPS, R_EPS = 0.5, 1.0


@pytest.fixture(scope="module")
def pair():
    return build_pair(EPS, R_EPS, G)


def orbitals(grid):
    return [
        gaussian_orbital(grid, 1.5, (0.5, 0.0, 0.0)),
        gaussian_orbital(grid, 2.0, (-1.0, 0.5, 0.0)),
        gaussian_orbital(grid, 1.0, (0.0, 0.0, 1.0)),
    ]


def test_partition_pointwise_identities(pair):
    assert pair.sum_squares_error() <= 1e-12
    assert np.all((pair.j1 >= 0) & (pair.j1 <= 1) & (pair.j2 >= 0) & (pair.j2 <= 1))
    inside = G.radius <= R_EPS + 1 / EPS
    assert np.all(pair.j1[inside] == 1.0) and np.all(pair.j2[inside] == 0.0)
    assert np.all(pair.j1[G.radius >= R_EPS + 3 / EPS] == 0.0)


def test_partition_gradient_bound(pair):
    assert pair.derivative_sup <= EPS
    assert max(pair.measured_gradient_sup()) <= 1.05 * EPS
    assert ProductPartition(pair, 3).gradient_bound() <= 3 * 1.05 * EPS
    assert len(ProductPartition(pair, 3).labels) == 8


def test_partition_geometry_checked():
    with pytest.raises(UsageError):
        build_pair(0.2, 1.0, G)
    with pytest.raises(UsageError):
        build_pair(0.5, 1.0, Grid3D(24, 0.7, periodic_z=True))


def test_trivial_partition_is_exact():
    s = HartreeProduct.from_orbitals(orbitals(G)[:2], G, FIELD)
    H = build_linearized(density(s), 0.7, FIELD, G, N=2)
    r = ims_identity_check(H, s, ProductPartition(trivial_pair(G), 2))
    assert r.residual < 1e-12 * abs(r.reference)


@pytest.mark.parametrize("kind,N", [("hartree", 1), ("hartree", 2), ("slater", 3), ("slater_q2", 3)])
def test_lattice_localization_is_exact(pair, kind, N):
    orbs = orbitals(G)[:N]
    if kind == "hartree":
        s = HartreeProduct.from_orbitals(orbs, G, FIELD)
    else:
        s = SlaterDeterminant.from_orbitals(orbs, G, FIELD, q=1 if kind == "slater" else 2)
    alpha = 0.0 if N == 1 else 0.7
    H = build_linearized(density(s), alpha, FIELD, G, N=N) if alpha else build_linearized(np.zeros(G.shape), 0.0, FIELD, G)
    r = ims_identity_check(H, s, ProductPartition(pair, N))
    assert r.lattice_residual <= 1e-12 * abs(r.reference)
    # the analytic |grad J|^2 differs only by finite-difference truncation
    assert r.relative < 5e-3
    assert set(r.to_dict()["per_label"]) == {"".join(map(str, a)) for a in ProductPartition(pair, N).labels}


def test_analytic_residual_decreases_with_spacing():
    res = []
    for n in (24, 32, 48):
        g = Grid3D(n, 16 / n)
        s = HartreeProduct.from_orbitals(orbitals(g)[:2], g, FIELD)
        H = build_linearized(density(s), 0.7, FIELD, g, N=2)
        res.append(ims_identity_check(H, s, ProductPartition(build_pair(EPS, R_EPS, g), 2)).residual)
    assert res[0] > res[1] > res[2]
    # at least third order over the 2x refinement
    assert res[0] / res[2] > 2.0**3


def test_ims_rejects_unfactorized_states(pair):
    s = PairCorrelated.from_orbital(orbitals(G)[0], PairFactor(0.3, 1.0), G)
    H = build_linearized(density(s), 0.5, MagneticGauge(), G, N=2)
    with pytest.raises(UsageError):
        ims_identity_check(H, s, ProductPartition(pair, 2))
    h1 = HartreeProduct.from_orbitals(orbitals(G)[:1], G)
    with pytest.raises(UsageError):
        ims_identity_check(build_linearized(density(h1), 0.5, MagneticGauge(), G), h1, ProductPartition(pair, 2))


def test_support_distance_conditions(pair):
    inner = np.where(G.radius < R_EPS, 1.0, 0.0)
    outer = np.where(G.radius > R_EPS + 4 / EPS, 1.0, 0.0)
    assert support_distance_check(pair, (inner, outer), EPS) == (True, True)
    spread = np.ones(G.shape)
    assert support_distance_check(pair, (spread, spread), EPS) == (False, False)
    assert support_distance_check(pair, (inner, np.zeros(G.shape)), EPS) == (True, True)
    assert support_distance(inner, np.zeros(G.shape), G) == float("inf")
