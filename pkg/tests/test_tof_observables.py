import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dense_oracle import DenseFock
from lattice_entanglement.fock_space import LatticeGeometry, ManyBodyState, Statistics
from lattice_entanglement.state_builders import (
    build_bell_chain,
    build_delocalized_atoms,
    build_mott,
    random_occupation_keys,
    random_one_atom_state,
    random_superposition,
)
from lattice_entanglement.tof_observables import (
    GridError,
    MomentumGrid,
    WannierEnvelope,
    flatness_chi2,
    momentum_correlation,
    momentum_density,
    q_internal_all,
    q_internal_direct,
    q_internal_integral,
    q_occupation_direct,
    q_occupation_integral,
    record_from_csv,
    record_from_json,
    record_to_csv,
    record_to_json,
    sample_shots,
    simulate_record,
)

IDEAL = WannierEnvelope()


def ring_grid(L):
    return MomentumGrid.for_ring(LatticeGeometry(L), IDEAL)


def test_density_of_delocalized_atom_closed_form():
    psi = build_delocalized_atoms(LatticeGeometry(2), 1)
    k = np.linspace(-np.pi, np.pi, 41)
    grid = MomentumGrid.uniform(k)
    n = momentum_density(psi, "a", IDEAL, grid)
    assert np.allclose(n, (1 + np.cos(k)) / (2 * np.pi), atol=1e-14)


def test_mott_density_flat():
    psi = build_mott(LatticeGeometry(5), 1)
    grid = ring_grid(5)
    n = momentum_density(psi, "a", IDEAL, grid)
    assert np.allclose(n, 5 / (2 * np.pi), atol=1e-13)


def test_vacuum_observables_vanish():
    vac = ManyBodyState.vacuum(LatticeGeometry(3))
    rec = simulate_record(vac, IDEAL)
    assert all(np.all(v == 0) for v in rec.densities.values())
    assert all(np.all(c == 0) for c in rec.correlations.values())
    assert q_internal_integral(rec, 1) == 0
    assert q_internal_direct(vac, 1) == 0


def test_single_level_has_no_cross_correlation():
    rec = simulate_record(build_mott(LatticeGeometry(3), 1), IDEAL)
    assert np.all(rec.correlations["ab"] == 0)
    assert np.abs(rec.correlations["aa"]).max() > 0


def k_operator(dense, k, level, L):
    """``x(k) = sum_m exp(i k m) x_m`` as a dense matrix."""
    return sum(np.exp(1j * k * m) * dense.op("annihilate", m, level) for m in range(L))


@pytest.mark.parametrize("fermion", [False, True])
def test_singlet_correlation_matches_dense_oracle(fermion):
    stats = "fermion" if fermion else "boson"
    psi = build_bell_chain(LatticeGeometry(2), "phi-", 1, stats)
    k = np.linspace(-np.pi, np.pi, 7)
    grid = MomentumGrid.uniform(k)
    c = momentum_correlation(psi, "ab", IDEAL, grid)
    dense = DenseFock(2, 1, fermion)
    vec = dense.vector(psi)
    W = IDEAL.intensity(k)
    for i, kk in enumerate(k):
        ak = k_operator(dense, kk, "a", 2)
        for j, kp in enumerate(k):
            bk = k_operator(dense, kp, "b", 2)
            op = ak.conj().T @ ak @ bk.conj().T @ bk
            ref = W[i] * W[j] * np.vdot(vec, op @ vec)
            assert abs(c[i, j] - ref) < 1e-13


@pytest.mark.parametrize("stats,sign", [("boson", -1), ("fermion", 1)])
def test_singlet_internal_witness(stats, sign):
    psi = build_bell_chain(LatticeGeometry(2), "phi-", 1, stats)
    q = q_internal_all(psi, 1)
    assert abs(q["ab"] - sign) < 1e-12
    assert abs(q["aa"] - 1) < 1e-12
    dense = DenseFock(2, 1, stats == "fermion")
    vec = dense.vector(psi)
    ref = sum(dense.expect(vec, [("create", m, "a"), ("annihilate", (m + 1) % 2, "a"),
                                 ("create", (mp + 1) % 2, "b"), ("annihilate", mp, "b")])
              for m in range(2) for mp in range(2))
    assert abs(q["ab"] - ref) < 1e-12
    rec = simulate_record(psi, IDEAL)
    assert abs(q_internal_integral(rec, 1, "ab") - q["ab"]) < 1e-12


def test_occupation_witness_paths():
    geom = LatticeGeometry(4)
    mott = build_mott(geom, 1)
    rec = simulate_record(mott, IDEAL, with_correlations=False)
    assert abs(q_occupation_integral(rec, 1)) < 1e-8
    assert abs(q_occupation_direct(mott, 1)) < 1e-12
    assert abs(q_occupation_integral(rec, 0) - 4) < 1e-8
    assert abs(q_occupation_direct(mott, 0) - 4) < 1e-12


def test_delocalized_atom_shift_witness_on_two_sites():
    psi = build_delocalized_atoms(LatticeGeometry(2), 1)
    rec = simulate_record(psi, IDEAL, with_correlations=False)
    assert abs(q_occupation_direct(psi, 1) - 1) < 1e-12
    assert abs(q_occupation_integral(rec, 1) - 1) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 20), L=st.integers(2, 4), x=st.integers(1, 3))
def test_integral_and_direct_paths_agree(seed, L, x):
    rng = np.random.default_rng(seed)
    geom = LatticeGeometry(L, 1.0, 2)
    keys = random_occupation_keys(geom, 2, 4, rng, ("a", "b"))
    psi = random_superposition(geom, keys, rng)
    rec = simulate_record(psi, IDEAL)
    assert abs(q_occupation_integral(rec, x, "b") - q_occupation_direct(psi, x, "b")) < 1e-10
    for ch in ("ab", "ba", "aa", "bb"):
        assert abs(q_internal_integral(rec, x, ch) - q_internal_direct(psi, x, False, ch)) < 1e-10


@pytest.mark.parametrize("stats", [Statistics.BOSON, Statistics.FERMION])
def test_restriction_harmless_for_one_atom_states(stats, rng):
    psi = random_one_atom_state(LatticeGeometry(4), rng, stats)
    for x in (1, 2):
        full = q_internal_all(psi, x)
        restricted = q_internal_all(psi, x, restricted=True)
        for ch in full:
            assert abs(full[ch] - restricted[ch]) < 1e-12


def test_gaussian_error_shrinks_with_width():
    psi = build_delocalized_atoms(LatticeGeometry(4), 1)
    direct = q_occupation_direct(psi, 1)
    errors = []
    for sigma in (0.5, 0.4, 0.3, 0.2, 0.1):
        rec = simulate_record(psi, WannierEnvelope("gaussian", 1.0, sigma), with_correlations=False)
        errors.append(abs(q_occupation_integral(rec, 1) - direct))
    assert all(a > b for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 1e-8


def test_grid_checks():
    geom = LatticeGeometry(4)
    with pytest.raises(GridError):
        MomentumGrid.for_ring(geom, IDEAL, zones=2)
    coarse = MomentumGrid.uniform(np.linspace(-1, 1, 5))
    with pytest.raises(GridError):
        coarse.check(WannierEnvelope("gaussian", 1.0, 0.2))
    with pytest.raises(ValueError):
        MomentumGrid.uniform(np.array([0.0, 1.0, 3.0]))


def test_shots_reproducible():
    rec = simulate_record(build_delocalized_atoms(LatticeGeometry(3), 1), IDEAL)
    one = sample_shots(rec, 500, seed=9)
    two = sample_shots(rec, 500, seed=9)
    assert np.array_equal(one.densities["a"], two.densities["a"])
    assert np.array_equal(one.correlations["ab"], two.correlations["ab"])
    assert one.shots == 500
    with pytest.raises(ValueError):
        sample_shots(rec, 0)


def test_shots_converge_at_square_root_rate(rng):
    geom = LatticeGeometry(6)
    psi = random_superposition(geom, random_occupation_keys(geom, 1, 6, rng), rng)
    rec = simulate_record(psi, IDEAL, with_correlations=False)
    exact = rec.densities["a"]

    def rms(shots):
        errs = [np.sqrt(np.mean((sample_shots(rec, shots, seed=s).densities["a"] - exact) ** 2))
                for s in range(20)]
        return np.mean(errs)

    ratio = rms(10 ** 3) / rms(10 ** 5)
    assert 7 < ratio < 14
    big = sample_shots(rec, 10 ** 8, seed=0)
    sigma = np.sqrt(np.clip(exact, 0, None) / (10 ** 8 * rec.grid.weights))
    assert np.all(np.abs(big.densities["a"] - exact) <= 3 * sigma + 1e-12)


def test_mott_shots_look_flat():
    rec = simulate_record(build_mott(LatticeGeometry(8), 1), IDEAL, with_correlations=False)
    noisy = sample_shots(rec, 20000, seed=3)
    chi2, dof = flatness_chi2(noisy)
    assert chi2 < dof + 5 * np.sqrt(2 * dof)
    bumpy = sample_shots(simulate_record(build_delocalized_atoms(LatticeGeometry(8), 1), IDEAL,
                                         with_correlations=False), 20000, seed=3)
    assert flatness_chi2(bumpy)[0] > 100 * dof


def test_csv_round_trip(tmp_path):
    rec = simulate_record(build_bell_chain(LatticeGeometry(2), "psi+"), IDEAL)
    sidecar = record_to_csv(rec, tmp_path / "rec.csv")
    assert sidecar.exists()
    back = record_from_csv(tmp_path / "rec.csv")
    for lv in rec.densities:
        assert np.array_equal(back.densities[lv], rec.densities[lv])
    for ch in rec.correlations:
        assert np.array_equal(back.correlations[ch], rec.correlations[ch])
    assert back.envelope == rec.envelope
    assert q_internal_integral(back, 1) == q_internal_integral(rec, 1)


def test_csv_without_sidecar_needs_lattice_constant(tmp_path):
    rec = simulate_record(build_delocalized_atoms(LatticeGeometry(2), 1), IDEAL, with_correlations=False)
    sidecar = record_to_csv(rec, tmp_path / "rec.csv")
    sidecar.unlink()
    with pytest.raises(ValueError):
        record_from_csv(tmp_path / "rec.csv")
    back = record_from_csv(tmp_path / "rec.csv", d=1.0)
    assert back.provenance == "ingested"
    # trapezoid weights were implicit in the ring grid as well
    assert abs(q_occupation_integral(back, 1) - q_occupation_integral(rec, 1)) < 1e-12


def test_json_round_trip(tmp_path):
    rec = simulate_record(build_delocalized_atoms(LatticeGeometry(3), 1), WannierEnvelope("gaussian", 1.0, 0.2))
    record_to_json(rec, tmp_path / "rec.json")
    back = record_from_json(tmp_path / "rec.json")
    assert np.array_equal(back.grid.k, rec.grid.k)
    assert np.array_equal(back.correlations["aa"], rec.correlations["aa"])
    assert back.envelope == rec.envelope
