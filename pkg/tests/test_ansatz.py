import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pekarlab.ansatz import (
    HartreeProduct,
    PairCorrelated,
    PairFactor,
    SlaterDeterminant,
    TwoBodyFull,
    antisymmetrize_product,
    density,
    energy,
    gaussian_orbital,
    product_pair_terms,
)
from pekarlab.ansatz.pair import pair_kernels, pair_linearized
from pekarlab.coulomb import pair_energy, self_energy
from pekarlab.errors import NumericalError, UsageError
from pekarlab.grid import Grid3D, MagneticGauge
from pekarlab.kinetic import magnetic_translate

RNG = np.random.default_rng(7)
SMALL = Grid3D(12, 0.8)
FIELD = MagneticGauge((0.1, 0.2, 0.5))


def rough_orbital(grid, width=1.2, center=(0.0, 0.0, 0.0), noise=0.2):
    phi = gaussian_orbital(grid, width, center)
    return phi * (1 + noise * RNG.standard_normal(grid.shape) + 0.5j * noise * RNG.standard_normal(grid.shape))


def compact(phi, grid, radius, center=(0.0, 0.0, 0.0)):
    x, y, z = grid.coords
    r = np.sqrt((x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2)
    return np.where(r < radius, phi, 0)


def test_single_orbital_density():
    phi = rough_orbital(SMALL)
    s = HartreeProduct.from_orbitals([phi], SMALL)
    assert np.allclose(density(s), np.abs(s.orbitals[0]) ** 2, rtol=0, atol=1e-15)
    assert SMALL.integrate(density(s)) == pytest.approx(1.0, abs=1e-12)


def test_unnormalized_state_rejected():
    s = HartreeProduct(np.ones((1,) + SMALL.shape, complex), SMALL)
    with pytest.raises(UsageError):
        density(s)


def test_nan_is_numerical_error():
    g = Grid3D(12, 0.8)
    phi = gaussian_orbital(g, 1.0)
    s = HartreeProduct.from_orbitals([phi], g)
    s.orbitals[0, 0, 0, 0] = np.nan
    with pytest.raises((NumericalError, UsageError)):
        energy(s, 0.5)


def test_pair_with_unit_factor_is_hartree():
    phi = rough_orbital(SMALL)
    pair = PairCorrelated.from_orbital(phi, PairFactor(0.0, 1.0), SMALL, FIELD)
    hart = HartreeProduct.from_orbitals([phi, phi], SMALL, FIELD)
    assert np.max(np.abs(density(pair) - density(hart))) < 1e-12
    assert energy(pair, 0.7).total == pytest.approx(energy(hart, 0.7).total, abs=1e-10)


def test_two_body_product_matches_hartree():
    phi1, phi2 = rough_orbital(SMALL), rough_orbital(SMALL, 1.0, (0.5, 0, 0))
    hart = HartreeProduct.from_orbitals([phi1, phi2], SMALL, FIELD)
    full = TwoBodyFull.from_product(hart.orbitals[0], hart.orbitals[1], SMALL, FIELD)
    assert np.max(np.abs(density(full) - density(hart))) < 1e-10
    assert energy(full, 0.6).total == pytest.approx(energy(hart, 0.6).total, rel=1e-10)


def test_two_body_oracle_for_pair_states():
    phi = rough_orbital(SMALL)
    pair = PairCorrelated.from_orbital(phi, PairFactor(0.6, 1.3), SMALL, FIELD)
    full = TwoBodyFull.from_pair(pair)
    e1, e2 = energy(pair, 0.9), energy(full, 0.9)
    for name in ("kinetic", "repulsion", "attraction", "total"):
        assert getattr(e1, name) == pytest.approx(getattr(e2, name), rel=1e-10)
    assert np.max(np.abs(density(pair) - density(full))) < 1e-12


def test_slater_matches_antisymmetric_two_body():
    phi1, phi2 = rough_orbital(SMALL), rough_orbital(SMALL, 1.0, (0.6, 0, 0))
    sl = SlaterDeterminant.from_orbitals([phi1, phi2], SMALL, FIELD, q=1)
    a, b = sl.orbitals
    full = TwoBodyFull.from_array(np.multiply.outer(a, b) - np.multiply.outer(b, a), SMALL, FIELD)
    assert energy(sl, 0.5).total == pytest.approx(energy(full, 0.5).total, rel=1e-10)
    assert np.max(np.abs(density(sl) - density(full))) < 1e-12


def test_opposite_spins_have_no_exchange():
    phi1, phi2 = rough_orbital(SMALL), rough_orbital(SMALL, 1.0, (0.6, 0, 0))
    sl = SlaterDeterminant.from_orbitals([phi1, phi2], SMALL, q=2)
    hart = HartreeProduct.from_orbitals([phi1, phi2], SMALL)
    assert sl.spins == (0, 1)
    assert energy(sl, 0.5).total == pytest.approx(energy(hart, 0.5).total, rel=1e-12)


def test_lowdin_orthonormalizes():
    orbs = [rough_orbital(SMALL, w, (0.2 * k, 0, 0)) for k, w in enumerate((1.0, 1.2, 1.4))]
    sl = SlaterDeterminant.from_orbitals(orbs, SMALL, q=1)
    flat = sl.orbitals.reshape(3, -1)
    gram = flat.conj() @ flat.T * SMALL.cell_volume
    assert np.max(np.abs(gram - np.eye(3))) < 1e-12
    assert SMALL.integrate(density(sl)) == pytest.approx(3.0, abs=1e-10)


@pytest.mark.parametrize("family", ["hartree", "slater", "pair", "twobody"])
def test_energy_affine_in_alpha(family):
    phi1, phi2 = rough_orbital(SMALL), rough_orbital(SMALL, 1.0, (0.6, 0, 0))
    state = {
        "hartree": lambda: HartreeProduct.from_orbitals([phi1, phi2], SMALL, FIELD),
        "slater": lambda: SlaterDeterminant.from_orbitals([phi1, phi2], SMALL, FIELD, q=1),
        "pair": lambda: PairCorrelated.from_orbital(phi1, PairFactor(0.4, 1.0), SMALL, FIELD),
        "twobody": lambda: TwoBodyFull.from_product(phi1, phi2, SMALL, FIELD),
    }[family]()
    alphas = np.array([0.2, 0.5, 0.8])
    e = np.array([energy(state, a).total for a in alphas])
    slope, icpt = np.polyfit(alphas, e, 1)
    assert np.max(np.abs(slope * alphas + icpt - e)) < 1e-10
    assert slope == pytest.approx(-self_energy(density(state), SMALL), rel=1e-9)


def test_breakdown_signs():
    b = energy(HartreeProduct.from_orbitals([rough_orbital(SMALL)] * 2, SMALL, FIELD), 0.5)
    assert b.kinetic >= 0 and b.repulsion >= 0 and b.attraction >= 0
    assert b.total == b.kinetic + b.repulsion - b.attraction


def test_exact_discrete_scaling():
    # psi -> a^{3/2} psi(a x) on a grid with spacing h / a gives E_alpha = a^2 E_1
    a = 0.7
    g1, g2 = Grid3D(16, 0.6), Grid3D(16, 0.6 / a)
    phi = gaussian_orbital(g1, 1.1)
    e1 = energy(HartreeProduct.from_orbitals([phi], g1), 1.0).total
    e2 = energy(HartreeProduct.from_orbitals([phi], g2), a).total
    assert e2 == pytest.approx(a**2 * e1, rel=1e-12)


def test_separated_clusters_are_additive():
    g = Grid3D(24, 0.5)
    c1, c2 = (-3.0, 0.0, 0.0), (3.0, 0.0, 0.0)
    p1 = compact(gaussian_orbital(g, 0.6, c1), g, 2.0, c1)
    p2 = compact(gaussian_orbital(g, 0.8, c2), g, 2.0, c2)
    b1 = HartreeProduct.from_orbitals([p1], g)
    b2 = HartreeProduct.from_orbitals([p2], g)
    phi = antisymmetrize_product(b1, b2)
    assert np.max(np.abs(density(phi) - density(b1) - density(b2))) < 1e-10
    # the Coulomb cross terms cancel exactly at alpha = 1
    total = energy(b1, 1.0).total + energy(b2, 1.0).total
    assert energy(phi, 1.0).total == pytest.approx(total, abs=1e-6)
    # in general they leave (1 - alpha) 2 D(rho_1, rho_2)
    cross = 2 * pair_energy(density(b1), density(b2), g)
    alpha = 0.6
    sep = energy(b1, alpha).total + energy(b2, alpha).total + (1 - alpha) * cross
    assert energy(phi, alpha).total == pytest.approx(sep, abs=1e-10)


def test_antisymmetrize_norm_and_overlap():
    g = Grid3D(24, 0.5)
    c1, c2 = (-3.0, 0.0, 0.0), (3.0, 0.0, 0.0)
    b1 = HartreeProduct.from_orbitals([compact(gaussian_orbital(g, 0.6, c1), g, 2.0, c1)], g)
    b2 = HartreeProduct.from_orbitals([compact(gaussian_orbital(g, 0.6, c2), g, 2.0, c2)], g)
    phi = antisymmetrize_product(b1, b2)
    phi.check_normalized()
    assert phi.N == 2
    with pytest.raises(UsageError):
        antisymmetrize_product(b1, b1)


def test_product_pair_terms_nonnegative():
    phis = [rough_orbital(SMALL, 1.0, (0.3 * k, 0, 0)) for k in range(3)]
    s = HartreeProduct.from_orbitals(phis, SMALL)
    for alpha in (0.1, 0.5, 0.9, 1.0):
        assert all(t >= 0 for t in product_pair_terms(s, alpha))


@pytest.mark.parametrize("family", ["hartree", "slater", "pair"])
def test_translation_invariance(family):
    g = Grid3D(24, 0.5)
    ga = MagneticGauge((0.0, 0.3, 1.0))
    p1 = compact(rough_orbital(g, 0.8, (0.5, 0, 0)), g, 2.5)
    p2 = compact(rough_orbital(g, 0.8, (-0.5, 0.5, 0)), g, 2.5)
    make = {
        "hartree": lambda a, b: HartreeProduct.from_orbitals([a, b], g, ga),
        "slater": lambda a, b: SlaterDeterminant.from_orbitals([a, b], g, ga, q=1),
        "pair": lambda a, b: PairCorrelated.from_orbital(a, PairFactor(0.5, 1.0), g, ga),
    }[family]
    h = (1.5, -1.0, 2.0)
    e0 = energy(make(p1, p2), 0.7).total
    e1 = energy(make(magnetic_translate(p1, h, g, ga), magnetic_translate(p2, h, g, ga)), 0.7).total
    assert abs(e1 - e0) <= 1e-6


def test_pair_gradient_matches_finite_differences():
    phi = rough_orbital(SMALL)
    s = PairCorrelated.from_orbital(phi, PairFactor(0.5, 1.2), SMALL, FIELD)
    K = pair_kernels(s)
    v = 3 * np.abs(s.orbital) ** 2
    d = RNG.standard_normal(SMALL.shape) + 1j * RNG.standard_normal(SMALL.shape)
    f0, grad = pair_linearized(s.orbital, K, v, 0.9, 0.1)
    eps = 1e-6
    fp, _ = pair_linearized(s.orbital + eps * d, K, v, 0.9, 0.1, gradient=False)
    fm, _ = pair_linearized(s.orbital - eps * d, K, v, 0.9, 0.1, gradient=False)
    assert (fp - fm) / (2 * eps) == pytest.approx(2 * SMALL.inner(grad, d).real, rel=1e-6)


def test_pair_factor_validation():
    with pytest.raises(UsageError):
        PairFactor(1.2, 1.0)
    with pytest.raises(UsageError):
        PairFactor(0.2, 0.0)
    g = PairFactor(0.5, 1.0, table=([0.0, 1.0, 2.0], [0.1, 0.05, 0.0]))
    z = np.array([0.3, 1.5, 4.0])
    assert np.allclose(g(z, 0 * z, 0 * z), g(-z, 0 * z, 0 * z))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_energy_linear_combination_in_alpha(a1, a2):
    s = HartreeProduct.from_orbitals([gaussian_orbital(SMALL, 1.0)] * 2, SMALL)
    e1, e2 = energy(s, a1), energy(s, a2)
    d = self_energy(density(s), SMALL)
    assert e1.total - e2.total == pytest.approx(-(a1 - a2) * d, abs=1e-12)
