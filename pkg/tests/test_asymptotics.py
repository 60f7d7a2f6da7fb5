import numpy as np
import pytest

from pekarlab.ansatz import HartreeProduct, energy, gaussian_orbital
from pekarlab.asymptotics import (
    SPHERE_DIRECTIONS,
    CutoffState,
    calibrate_kernel_constant,
    cutoff_profile,
    dipole,
    dipole_floor,
    dipole_L,
    dipole_L_monte_carlo,
    far_field,
    far_field_errors,
    interaction_norm_scan,
    kernel_expansion,
    kernel_sample_check,
    quadrupole_f,
    recenter,
    remainder_bound,
    smooth_cutoff,
)
from pekarlab.errors import UsageError
from pekarlab.grid import Grid3D, MagneticGauge
from pekarlab.scf import ScfConfig, outer_scf

H = 4.5


@pytest.fixture(scope="module")
def pekar_block():
    g = Grid3D(16, H)
    s = HartreeProduct.from_orbitals([gaussian_orbital(g, 5.0)], g)
    return outer_scf(s, 1.0, ScfConfig(max_inner=20, inner_tol=1e-8, outer_tol=1e-9)).state


@pytest.fixture(scope="module")
def wide_block():
    g = Grid3D(24, H)
    s = HartreeProduct.from_orbitals([gaussian_orbital(g, 5.0)], g)
    return outer_scf(s, 1.0, ScfConfig(max_inner=20, inner_tol=1e-8, outer_tol=1e-9)).state


def test_cutoff_profile_shape():
    r = np.linspace(0, 20, 2001)
    f = cutoff_profile(r, 10.0)
    assert np.all(f[r <= 9.0] == 1.0) and np.all(f[r >= 10.0] == 0.0)
    assert np.all(np.diff(f) <= 1e-15)


def test_cutoff_identity_when_nothing_is_cut():
    g = Grid3D(12, 0.5)
    s = HartreeProduct.from_orbitals([gaussian_orbital(g, 0.6)], g)
    c = smooth_cutoff(s, 20.0)
    assert c.state is s and c.discarded == 0.0
    assert np.array_equal(c.phi, s.orbitals)


def test_cutoff_normalized_and_tail_decays(wide_block):
    c1 = smooth_cutoff(wide_block, 36.0)
    c2 = smooth_cutoff(wide_block, 72.0)
    assert c1.grid.norm(c1.phi[0]) == pytest.approx(1.0, abs=1e-12)
    assert c1.support_radius() < 36.0
    assert 0 < c1.discarded < 1e-2
    assert c2.discarded < c1.discarded / 10


def test_cutoff_rejects_small_radius(pekar_block):
    with pytest.raises(UsageError):
        smooth_cutoff(pekar_block, 20.0)


def test_cutoff_rejects_heavy_tail():
    g = Grid3D(32, 1.0)
    core = gaussian_orbital(g, 1.0)
    shell = np.exp(-((g.radius - 12.0) ** 2)).astype(complex)
    shell *= 0.25 * g.norm(core) / g.norm(shell)
    s = HartreeProduct.from_orbitals([core + shell], g)
    with pytest.raises(UsageError, match="discards"):
        smooth_cutoff(s, 8.0)


def test_recenter_centered_gaussian_is_noop():
    g = Grid3D(16, 0.5)
    c = CutoffState(HartreeProduct.from_orbitals([gaussian_orbital(g, 0.7)], g), 4.0, 0.0)
    assert recenter(c) is c


@pytest.mark.parametrize("B", [(0.0, 0.0, 0.0), (0.0, 0.4, 1.0)])
def test_recenter_offset_gaussian(B):
    g = Grid3D(24, 0.5)
    gauge = MagneticGauge(B)
    center = np.array([1.6, -0.2, 0.4])
    x, y, z = g.coords
    near = np.sqrt((x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2) < 3.0
    s = HartreeProduct.from_orbitals([gaussian_orbital(g, 0.7, center) * near], g, gauge)
    c = CutoffState(s, 5.9, 0.0)
    out = recenter(c)
    assert np.all(np.abs(dipole(out)) <= g.spacing / 2)
    assert energy(out.state, 0.5).total == pytest.approx(energy(s, 0.5).total, abs=1e-6)


def test_recenter_needs_margin():
    g = Grid3D(16, 0.5)
    s = HartreeProduct.from_orbitals([gaussian_orbital(g, 0.5, (2.0, 0, 0)) * (g.radius < 3.5)], g)
    with pytest.raises(UsageError):
        recenter(CutoffState(s, 3.6, 0.0))


def test_kernel_expansion_basic_cases():
    y = np.array([0.3, -2.0, 1.0])
    e = kernel_expansion(np.zeros(3), y)
    assert e.total == 1 / np.linalg.norm(y) and e.remainder == 0.0
    u = y / np.linalg.norm(y)
    e = kernel_expansion(0.25 * u, y)
    assert e.order1 == pytest.approx(0.25 / np.linalg.norm(y) ** 2, rel=1e-14)
    with pytest.raises(UsageError):
        kernel_expansion(1.1 * y, y)


def test_kernel_constant_and_perpendicular_case():
    C = calibrate_kernel_constant()
    # the worst direction is w parallel to y with sum_l t^l = 1 / (1 - t)
    assert C == pytest.approx(2.0, rel=1e-9)
    y = np.array([0.0, 0.0, 7.0])
    w = np.array([0.7, 0.0, 0.0])
    assert abs(kernel_expansion(w, y).remainder) <= C * 1e-3 / 7.0


def test_kernel_sample_within_bound():
    C, rows = kernel_sample_check(1000, seed=3)
    assert len(rows) == 1000
    assert all(err <= bound for _, _, err, bound in rows)


def test_quadrupole_vanishes_for_cubic_symmetric_density():
    g = Grid3D(16, 0.5)
    c = CutoffState(HartreeProduct.from_orbitals([gaussian_orbital(g, 0.8)], g), 10.0, 0.0)
    for u in SPHERE_DIRECTIONS:
        assert abs(quadrupole_f(c, u)) < 1e-13


def test_quadrupole_anisotropic_matches_quadrature():
    g = Grid3D(20, 0.4)
    x, y, z = g.coords
    phi = np.exp(-(x**2 / 2 + y**2 / 1.0 + z**2 / 4.0) / 2).astype(complex)
    s = HartreeProduct.from_orbitals([phi], g)
    c = CutoffState(s, 10.0, 0.0)
    rho = np.abs(s.orbitals[0]) ** 2
    direct = np.sum(rho * (3 * z**2 - (x**2 + y**2 + z**2)) / 2) * g.cell_volume
    assert quadrupole_f(c, (0, 0, 1)) == pytest.approx(direct, abs=1e-8)
    assert direct > 0.1
    # trace-free: the lattice directions average to zero
    assert np.mean([quadrupole_f(c, u) for u in SPHERE_DIRECTIONS]) == pytest.approx(0.0, abs=1e-12)


def test_far_field_point_charge_reduces_to_kernel():
    g = Grid3D(9, 1.0)
    phi = np.zeros(g.shape, complex)
    phi[4, 4, 4] = 1.0
    c = CutoffState(HartreeProduct.from_orbitals([phi], g), 5.0, 0.0)
    y = np.array([1.0, 2.0, 30.0])
    z = np.array([0.5, -0.3, 0.2])
    assert far_field(c, y, z) == pytest.approx(kernel_expansion(z, y).total, rel=1e-14)
    with pytest.raises(UsageError):
        far_field(c, y, z, d=0.1)


def test_far_field_error_scales_like_r_minus_four(pekar_block):
    c = recenter(smooth_cutoff(pekar_block, 8 * H))
    R = [8 * H, 16 * H, 32 * H]
    errs = far_field_errors(c, R, y_hat=(1.0, 2.0, 2.0))
    scaled = [e * r**4 for e, r in zip(errs, R)]
    assert max(scaled) / min(scaled) < 2.0


def test_dipole_functional_quadratic_and_positive(pekar_block):
    c = recenter(smooth_cutoff(pekar_block, 8 * H))
    res = dipole_L(c, c, (0, 0, 1), D=0.0)
    assert res.L_at_D > 0
    assert res.L_min <= res.L_at_zero
    a2 = res.coefficients[2]
    assert a2 > 0
    for D in (-3.0, 0.5, 40.0):
        assert res.L(D) - res.L_min == pytest.approx(a2 * (D - res.D_opt) ** 2, rel=1e-9, abs=1e-9)
    assert res.L(1e6) > 1e6 * res.L_min and res.L(-1e6) > 1e6 * res.L_min
    assert dipole_floor(c, c) > 0


def test_dipole_functional_monte_carlo(pekar_block):
    c = recenter(smooth_cutoff(pekar_block, 8 * H))
    u = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    exact = dipole_L(c, c, u)
    mc, se = dipole_L_monte_carlo(c, c, u, n=1_000_000, seed=5)
    assert abs(mc - exact.L_min) < 3 * se


def test_dipole_functional_needs_mass(pekar_block):
    c = recenter(smooth_cutoff(pekar_block, 8 * H))
    with pytest.raises(UsageError):
        dipole_L(c, c, (0, 0, 1), d=3.0)


def test_interaction_norm_scaling(pekar_block):
    rep = interaction_norm_scan(pekar_block, pekar_block, [8 * H, 16 * H, 32 * H])
    assert -3.3 <= rep.slope <= -2.7
    assert 0.8 <= rep.ratio[-1] <= 1.2
    # monopole and dipole parts cancel, leaving |y|^-3
    assert max(rep.cancellation) / min(rep.cancellation) < 2.0
    assert rep.to_csv().splitlines()[0] == "R,y_norm,norm,L_min,ratio,slope_running"


def test_interaction_norm_fixed_m_and_errors(pekar_block):
    rep = interaction_norm_scan(pekar_block, pekar_block, [8 * H, 16 * H, 32 * H], M_policy=0.0)
    assert rep.M_policy == "fixed" and rep.M == [0.0] * 3
    with pytest.raises(UsageError):
        interaction_norm_scan(pekar_block, pekar_block, [8 * H, 16 * H])
