import numpy as np
import pytest
import scipy.linalg

from blinkcorr.errors import HierarchyError
from blinkcorr.liouville import (
    build_liouvillian,
    conditional_hamiltonian,
    dark_state,
    perturbative_rates,
    reset_map,
    steady_state_light,
    unvec,
    validate_density,
    vec,
)
from blinkcorr.params import PhotoPhysicalParams

# Frozen from a run of the resolvent extraction at the reference rates;
# regression anchors against silent drift of the generator assembly.
RESOLVENT_LD = (10.31901461587117, 75.5716070397624)
RESOLVENT_DL = (430.00013195110455, 2400.000736471281)

# Excited-state occupation of the driven pair, (W/A)^2 / (1 + 2 (W/A)^2)
# evaluated by hand at A = 3.3e8, W = 2.9e8.
RHO33_REF = 0.3035005413208228


def random_density(rng):
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


def test_vec_unvec_round_trip(rng):
    rho = random_density(rng)
    assert np.array_equal(unvec(vec(rho)), rho)
    with pytest.raises(ValueError):
        vec(np.eye(3))
    with pytest.raises(ValueError):
        unvec(np.zeros(15))


def test_vec_is_column_stacking():
    m = np.arange(16.0).reshape(4, 4)
    v = vec(m)
    # Column stacking: first four entries are the first column.
    assert np.array_equal(v[:4], m[:, 0])


def test_generator_splits_exactly(reference_params):
    lv = build_liouvillian(reference_params)
    assert np.array_equal(lv.total, lv.fast + lv.slow)
    assert lv.total.shape == (16, 16)


def test_generator_preserves_trace(reference_params):
    lv = build_liouvillian(reference_params)
    trace_functional = vec(np.eye(4, dtype=complex)).conj()
    scale = np.max(np.abs(lv.total))
    assert np.max(np.abs(trace_functional @ lv.total)) < 1e-12 * scale
    assert np.max(np.abs(trace_functional @ lv.fast)) < 1e-12 * scale
    assert np.max(np.abs(trace_functional @ lv.slow)) < 1e-12 * scale


def test_generator_preserves_hermiticity(reference_params, rng):
    lv = build_liouvillian(reference_params)
    for _ in range(5):
        rho = random_density(rng)
        drho = unvec(lv.total @ vec(rho))
        assert np.max(np.abs(drho - drho.conj().T)) < 1e-6  # entries ~1e8


def test_propagated_state_stays_physical(reference_params, rng):
    lv = build_liouvillian(reference_params)
    rho = random_density(rng)
    for t in (1e-9, 1e-7, 1e-4, 1e-1):
        evolved = unvec(scipy.linalg.expm(lv.total * t) @ vec(rho))
        validate_density(evolved, atol=1e-8)


def test_generator_matches_hamiltonian_and_reset(reference_params, rng):
    # The assembled superoperator must agree with the operator-level
    # pieces: L rho = -i (H rho - rho H^dag) + reset(rho).
    lv = build_liouvillian(reference_params)
    h = conditional_hamiltonian(reference_params)
    rho = random_density(rng)
    direct = -1j * (h @ rho - rho @ h.conj().T) + reset_map(reference_params, rho)
    via_matrix = unvec(lv.total @ vec(rho))
    scale = np.max(np.abs(direct))
    assert np.max(np.abs(via_matrix - direct)) < 1e-12 * scale


def test_reset_map_trace_balances_damping(reference_params, rng):
    # Trace gained by jumps equals trace lost by the anti-Hermitian part.
    rho = random_density(rng)
    p = reference_params
    gained = np.trace(reset_map(p, rho)).real
    expected = (
        (p.A31 + p.A32[0] + p.A32[1]) * rho[3, 3].real
        + p.A21[0] * rho[1, 1].real
        + p.A21[1] * rho[2, 2].real
    )
    assert gained == pytest.approx(expected, rel=1e-12)


def test_fast_kernel_dimension(reference_params):
    # Light steady state, two dark populations, two dark coherences.
    lv = build_liouvillian(reference_params)
    svals = np.linalg.svd(lv.fast, compute_uv=False)
    assert int(np.sum(svals < svals[0] * 1e-10)) == 5


def test_steady_state_light_is_annihilated(reference_params):
    lv = build_liouvillian(reference_params)
    rho = steady_state_light(reference_params.A31, reference_params.Omega31)
    validate_density(rho)
    residual = np.max(np.abs(lv.fast @ vec(rho)))
    assert residual < 1e-12 * np.max(np.abs(lv.fast))
    assert rho[3, 3].real == pytest.approx(RHO33_REF, rel=1e-14)
    with pytest.raises(ValueError):
        steady_state_light(0.0, 1e8)


def test_dark_state():
    for idx in (1, 2):
        rho = dark_state(idx)
        validate_density(rho)
        assert rho[idx, idx] == 1.0
    with pytest.raises(ValueError):
        dark_state(3)


def test_validate_density_rejects_bad_input():
    with pytest.raises(ValueError):
        validate_density(np.eye(3))
    bad_trace = 0.5 * np.eye(4)
    with pytest.raises(ValueError, match="trace"):
        validate_density(bad_trace)
    skew = np.eye(4, dtype=complex) / 4.0
    skew[0, 1] = 1j
    with pytest.raises(ValueError, match="Hermitian"):
        validate_density(skew)
    indefinite = np.diag([1.5, -0.5, 0.0, 0.0]).astype(complex)
    with pytest.raises(ValueError, match="negative"):
        validate_density(indefinite)


def test_resolvent_rates_frozen(reference_params):
    ld, dl = perturbative_rates(reference_params, method="resolvent")
    assert ld[0] == pytest.approx(RESOLVENT_LD[0], rel=1e-9)
    assert ld[1] == pytest.approx(RESOLVENT_LD[1], rel=1e-9)
    assert dl[0] == pytest.approx(RESOLVENT_DL[0], rel=1e-9)
    assert dl[1] == pytest.approx(RESOLVENT_DL[1], rel=1e-9)


def test_resolvent_shelving_tracks_excited_occupation(reference_params):
    # To leading order in the slow rates the shelving rate is the
    # shelving coefficient times the excited-state occupation.
    ld, _ = perturbative_rates(reference_params, method="resolvent")
    assert ld[0] == pytest.approx(reference_params.A32[0] * RHO33_REF, rel=1e-4)
    assert ld[1] == pytest.approx(reference_params.A32[1] * RHO33_REF, rel=1e-4)


def test_resolvent_deshelving_tracks_a21(reference_params):
    _, dl = perturbative_rates(reference_params, method="resolvent")
    assert dl[0] == pytest.approx(reference_params.A21[0], rel=1e-3)
    assert dl[1] == pytest.approx(reference_params.A21[1], rel=1e-3)


def test_rate_methods_agree(rng):
    for _ in range(6):
        p = PhotoPhysicalParams(
            A31=10.0 ** rng.uniform(8.0, 9.0),
            Omega31=10.0 ** rng.uniform(8.0, 9.0),
            A32=tuple(10.0 ** rng.uniform(0.5, 2.5, 2)),
            A21=tuple(10.0 ** rng.uniform(2.0, 3.5, 2)),
            I_sc=0.0,
        )
        ld_a, dl_a = perturbative_rates(p, method="resolvent")
        ld_b, dl_b = perturbative_rates(p, method="finite_dt")
        for a, b in zip((*ld_a, *dl_a), (*ld_b, *dl_b)):
            assert b == pytest.approx(a, rel=1e-2)


def test_finite_dt_requires_separation():
    with pytest.warns(Warning):
        p = PhotoPhysicalParams(
            A31=1e6,
            Omega31=1e6,
            A32=(5e5, 5e5),
            A21=(5e5, 5e5),
            I_sc=0.0,
        )
    with pytest.raises(HierarchyError):
        perturbative_rates(p, method="finite_dt")


def test_no_metastable_coupling_gives_zero_rates():
    p = PhotoPhysicalParams(
        A31=3.3e8, Omega31=2.9e8, A32=(0.0, 0.0), A21=(0.0, 0.0), I_sc=0.0
    )
    for method in ("resolvent", "finite_dt"):
        ld, dl = perturbative_rates(p, method=method)
        assert ld == (0.0, 0.0)
        assert dl == (0.0, 0.0)


def test_unknown_method_rejected(reference_params):
    with pytest.raises(ValueError, match="unknown method"):
        perturbative_rates(reference_params, method="magic")
