import numpy as np
import pytest

from lattice_entanglement.fock_space import (
    LatticeGeometry,
    ManyBodyState,
    Statistics,
    apply_ladder,
    expected_defects,
    one_atom_per_site,
    total_number,
)
from lattice_entanglement.state_builders import (
    BellLabel,
    DefectBudget,
    bell_pairs,
    build_bell_chain,
    build_delocalized_atoms,
    build_mott,
    build_product_internal,
    inject_defects,
    random_one_atom_state,
)
from lattice_entanglement.tof_observables import q_occupation_direct


def test_mott_unit_filling():
    psi = build_mott(LatticeGeometry(4), 1)
    assert psi.amplitudes == {(1, 1, 1, 1, 0, 0, 0, 0): 1.0}


def test_mott_zero_filling_is_vacuum():
    geom = LatticeGeometry(2)
    assert build_mott(geom, 0).inner(ManyBodyState.vacuum(geom)) == 1


def test_mott_rejects_double_fermions():
    with pytest.raises(ValueError):
        build_mott(LatticeGeometry(2, 1.0, 2), 2, statistics="fermion")


def test_delocalized_two_sites():
    psi = build_delocalized_atoms(LatticeGeometry(2), 1)
    amp = 1 / np.sqrt(2)
    assert set(psi.amplitudes) == {(1, 0, 0, 0), (0, 1, 0, 0)}
    assert all(abs(v - amp) < 1e-15 for v in psi.amplitudes.values())


def test_delocalized_three_sites_shift_witness():
    psi = build_delocalized_atoms(LatticeGeometry(3), 1)
    assert abs(q_occupation_direct(psi, 1) - 1.0) < 1e-12


def test_delocalized_truncation_flag():
    psi = build_delocalized_atoms(LatticeGeometry(2, 1.0, 1), 2)
    assert psi.truncated
    assert list(psi.amplitudes) == [(1, 1, 0, 0)]


def test_delocalized_fermions_beyond_one_atom_vanish():
    with pytest.raises(ValueError, match="annihilated"):
        build_delocalized_atoms(LatticeGeometry(3), 2, statistics="fermion")


@pytest.mark.parametrize("stats", ["boson", "fermion"])
def test_singlet_on_two_sites(stats):
    psi = build_bell_chain(LatticeGeometry(2), BellLabel.PHI_MINUS, statistics=stats)
    vac = ManyBodyState.vacuum(LatticeGeometry(2), stats)
    # site 0 created last, so it stands leftmost in the operator string
    ab = apply_ladder(apply_ladder(vac, 1, "b", "create"), 0, "a", "create")
    ba = apply_ladder(apply_ladder(vac, 1, "a", "create"), 0, "b", "create")
    target = (ab + (-1) * ba).normalized()
    assert abs(psi.inner(target) - 1) < 1e-12


def test_singlets_on_four_sites():
    assert bell_pairs(4, 1) == [(0, 1), (2, 3)]
    psi = build_bell_chain(LatticeGeometry(4), "phi-", 1)
    assert len(psi.amplitudes) == 4
    assert one_atom_per_site(psi)


def test_bell_chain_odd_length_rejected():
    with pytest.raises(ValueError, match="even"):
        build_bell_chain(LatticeGeometry(3), "phi-")


@pytest.mark.parametrize("label", list(BellLabel))
@pytest.mark.parametrize("stats", ["boson", "fermion"])
@pytest.mark.parametrize("L,x", [(2, 1), (4, 1), (4, 2), (6, 1)])
def test_bell_chain_one_atom_per_site(label, stats, L, x):
    psi = build_bell_chain(LatticeGeometry(L), label, x, stats)
    assert one_atom_per_site(psi)
    assert abs(psi.norm() - 1) < 1e-12


def test_product_internal_is_one_atom(rng):
    vecs = [rng.normal(size=2) + 1j * rng.normal(size=2) for _ in range(3)]
    psi = build_product_internal(LatticeGeometry(3), vecs, "fermion")
    assert one_atom_per_site(psi)
    assert len(psi.amplitudes) == 8


def test_random_one_atom_state(rng):
    psi = random_one_atom_state(LatticeGeometry(4), rng, Statistics.FERMION)
    assert one_atom_per_site(psi)


def test_inject_without_defects_is_identity():
    psi = build_mott(LatticeGeometry(4), 1)
    out, budget = inject_defects(psi, DefectBudget(0.0, 2), seed=1)
    assert out.amplitudes == psi.amplitudes
    assert budget.D == 0


def test_inject_every_site():
    psi = build_mott(LatticeGeometry(2), 1)
    out, budget = inject_defects(psi, DefectBudget(1.0, 2), seed=3)
    assert list(out.amplitudes) == [(2, 2, 0, 0)]
    assert budget.D == 2


def test_inject_fermions_uses_other_level():
    psi = build_mott(LatticeGeometry(2), 1, statistics="fermion")
    out, budget = inject_defects(psi, DefectBudget(1.0, 2), seed=0)
    assert list(out.amplitudes) == [(1, 1, 1, 1)]
    assert budget.D == 2


def test_inject_defect_rate_monte_carlo():
    psi = build_mott(LatticeGeometry(50), 1)
    ratios = []
    for seed in range(1000):
        out, budget = inject_defects(psi, DefectBudget(0.1, 2), seed=seed)
        ratios.append(budget.D / total_number(out))
    assert 0.05 <= np.mean(ratios) <= 0.15


def test_inject_reproducible():
    psi = build_mott(LatticeGeometry(10), 1)
    one, _ = inject_defects(psi, DefectBudget(0.3, 2), seed=42)
    two, _ = inject_defects(psi, DefectBudget(0.3, 2), seed=42)
    assert one.amplitudes == two.amplitudes


def test_budget_validation():
    with pytest.raises(ValueError):
        DefectBudget(1.5)
    with pytest.raises(ValueError):
        DefectBudget(0.1, 0)


def test_certified_budget_covers_state():
    psi = build_mott(LatticeGeometry(4), 1)
    out, _ = inject_defects(psi, DefectBudget(0.5, 3), seed=7)
    cert = DefectBudget.certified(out)
    assert expected_defects(out) <= cert.epsilon * total_number(out) + 1e-12
    raised = DefectBudget.certified(out, DefectBudget(0.9, 4))
    assert raised.epsilon == 0.9 and raised.r == 4
