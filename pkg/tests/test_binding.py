import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pekarlab.binding import (
    BindingRecord,
    EnergyTable,
    alpha_scan,
    binding_energy,
    binding_record,
    bisect_threshold,
    concavity_violations,
    decay_fit_density,
    energy_table,
    half_mass_radius,
    records_csv,
    second_differences,
    split_closure,
    start_state,
)
from pekarlab.errors import UsageError
from pekarlab.grid import Grid3D, MagneticGauge
from pekarlab.scf import ScfConfig


def test_binding_energy_arithmetic():
    assert binding_energy([-1.0, -2.0]) == (0.0, 1)
    de, k = binding_energy([-1.0, -2.5, -4.0])
    assert de == pytest.approx(0.5) and k == 1


def test_binding_energy_needs_complete_table():
    with pytest.raises(UsageError):
        binding_energy([-1.0])
    with pytest.raises(UsageError):
        binding_energy([-1.0, None])
    with pytest.raises(UsageError):
        binding_energy([-1.0, float("nan")])


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-5, 0, allow_nan=False), min_size=2, max_size=6),
    st.floats(-3, 3, allow_nan=False),
)
def test_binding_energy_invariant_under_linear_shift(es, c):
    shifted = [e + m * c for m, e in enumerate(es, start=1)]
    assert binding_energy(shifted)[0] == pytest.approx(binding_energy(es)[0], abs=1e-9)


def test_split_closure_enforces_subadditivity():
    out = split_closure([-1.0, -1.5, -3.5, -3.0])
    assert out == [-1.0, -2.0, -3.5, -4.5]
    for N in range(2, 5):
        for k in range(1, N):
            assert out[N - 1] <= out[k - 1] + out[N - k - 1]


def test_binding_flag_needs_margin_and_convergence():
    t = EnergyTable(0.9, (0, 0, 0), [-1.0, -2.0 - 4e-6], [-1.0, -2.0 - 4e-6], [True, True], ["hartree", "pair"], [0, 0])
    assert binding_record(t, 1e-6).bound
    assert not binding_record(t, 2e-6).bound
    t.converged[1] = False
    assert not binding_record(t, 1e-6).bound


def test_second_differences_of_concave_curve():
    x = np.array([0.2, 0.3, 0.5, 0.6, 1.0])
    assert np.allclose(second_differences(x, -(x**2)), -2.0)
    assert concavity_violations(x, -(x**2), 1e-9) == 0
    assert concavity_violations(x, x**2, 1e-9) == 3


def test_bisection_on_synthetic_table():
    root = 0.7373
    t = bisect_threshold(lambda a: a - root, 0.6, 0.8)
    assert abs(t - root) <= 0.005
    # returned value is the midpoint of the final bracket
    lo, hi = 0.6, 0.8
    while hi - lo > 0.01:
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if mid - root > 0 else (mid, hi)
    assert t == 0.5 * (lo + hi)


def test_planted_exponential_decay():
    g = Grid3D(48, 0.5)
    fit = decay_fit_density(np.exp(-2 * g.radius), g, 1.0)
    assert fit.beta == pytest.approx(1.0, rel=0.01)
    assert fit.r_squared > 0.999
    lo, hi = fit.fit_window
    assert lo > 2 * half_mass_radius(np.exp(-2 * g.radius), g)
    assert not fit.shortfall


def test_shortfall_is_a_flag():
    g = Grid3D(48, 0.5)
    fit = decay_fit_density(np.exp(-2 * g.radius), g, 4.0)
    assert fit.shortfall and fit.to_dict()["sqrt_delta_E"] == 2.0


def test_box_eigenstate_has_no_decay_window():
    g = Grid3D(16, 0.5)
    n, h = g.n, g.spacing
    m = np.diag(np.full(n, 2.5)) + sum(c * (np.eye(n, k=k) + np.eye(n, k=-k)) for k, c in ((1, -4 / 3), (2, 1 / 12)))
    v = np.linalg.eigh(m / h**2)[1][:, 0]
    rho = np.einsum("i,j,k->ijk", v, v, v) ** 2
    with pytest.raises(UsageError, match="enlarge the box"):
        decay_fit_density(rho / g.integrate(rho), g, 0.0)


def test_start_states_are_deterministic():
    g = Grid3D(12, 1.0)
    a = start_state("hartree", 2, g, MagneticGauge(), 3, 2.0)
    b = start_state("hartree", 2, g, MagneticGauge(), 3, 2.0)
    assert np.array_equal(a.orbitals, b.orbitals)
    with pytest.raises(UsageError):
        start_state("pair", 3, g, MagneticGauge(), 0, 2.0)
    with pytest.raises(UsageError):
        start_state("bogus", 1, g, MagneticGauge(), 0, 2.0)


def test_alpha_zero_table_is_additive():
    g = Grid3D(12, 0.5)
    cfg = ScfConfig(max_inner=60, inner_tol=1e-9, outer_tol=1e-9)
    t = energy_table(3, 0.0, (0, 0, 0), g, cfg=cfg, seeds=(0,), width=0.8)
    e1 = t.energies[0]
    for N, e in enumerate(t.energies, start=1):
        assert e == pytest.approx(N * e1, rel=0.02)
    rec = binding_record(t, cfg.outer_tol)
    assert rec.delta_E == pytest.approx(0.0, abs=1e-12) and not rec.bound


def test_energy_table_rejects_bad_families():
    g = Grid3D(12, 1.0)
    with pytest.raises(UsageError):
        energy_table(1, 0.5, (0, 0, 0), g, families={1: "pair"})
    with pytest.raises(UsageError):
        energy_table(3, 0.5, (0, 0, 0), g, families={3: "twobody"})


def test_alpha_scan_validates_and_reports():
    g = Grid3D(12, 2.0)
    with pytest.raises(UsageError):
        alpha_scan(1, (0, 0, 0), [0.5, 0.4, 0.6], g)
    with pytest.raises(UsageError):
        alpha_scan(1, (0, 0, 0), [0.5, 1.2], g)
    res = alpha_scan(2, (0, 0, 0), [0.4, 0.7, 1.0], g, ScfConfig(max_outer=30, max_inner=10), seeds=(0,), width=4.0)
    e1 = [r.energies[0] for r in res.points]
    assert all(b <= a for a, b in zip(e1, e1[1:]))
    assert res.concavity_violations == 0
    assert res.threshold_estimate is None
    csv_text = records_csv(res.points)
    assert csv_text.splitlines()[0] == "N,alpha,Bz,E1,E2,deltaE,argmin_k,converged_flags"
    assert len(csv_text.splitlines()) == 4


def test_record_serializes():
    r = BindingRecord(2, 0.9, (0.0, 0.0, 0.0), [-1.0, -2.0], 0.0, 1, ["hartree", "hartree"], [True, True])
    assert r.to_dict()["delta_E"] == 0.0
