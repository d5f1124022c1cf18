import itertools
import math

import numpy as np
import pytest

from dense_oracle import DenseFock
from lattice_entanglement.entanglement_bounds import qubit_block
from lattice_entanglement.fock_space import DensityOperator, LatticeGeometry, ManyBodyState, Statistics
from lattice_entanglement.reduced_density import (
    SectorCoherenceError,
    delocalized_rho_ab,
    nonvacuum_trace,
    project_nonzero,
    project_two_plus,
    restrict_to_pair,
    sector_decompose,
)
from lattice_entanglement.state_builders import (
    DefectBudget,
    bell_vector,
    build_bell_chain,
    build_delocalized_atoms,
    build_mott,
    inject_defects,
    random_occupation_keys,
    random_one_atom_state,
    random_superposition,
)


def dense_pair(psi, A, B, cap):
    """Pair block by explicit annihilation: ket = (pair creators, level order)(rest creators)|0>."""
    L = psi.geometry.L
    dense = DenseFock(L, cap, psi.fermionic)
    vec = dense.vector(psi)
    vac = dense.vacuum()
    pair_modes = [(A, "a"), (B, "a"), (A, "b"), (B, "b")]
    rest_modes = [(m, lv) for lv in "ab" for m in range(L) if m not in (A, B)]
    top = 1 if psi.fermionic else cap
    amps: dict = {}
    for p in itertools.product(range(top + 1), repeat=4):
        for r in itertools.product(range(top + 1), repeat=len(rest_modes)):
            w = vec
            norm = 1.0
            for (site, lv), n in list(zip(pair_modes, p)) + list(zip(rest_modes, r)):
                for _ in range(n):
                    w = dense.op("annihilate", site, lv) @ w
                norm *= math.factorial(n)
            amp = np.vdot(vac, w) / math.sqrt(norm)
            if abs(amp) > 1e-14:
                amps.setdefault(r, {})[p] = amp
    out: dict = {}
    for terms in amps.values():
        for p, a in terms.items():
            for q, b in terms.items():
                out[p, q] = out.get((p, q), 0) + a * np.conj(b)
    return out


def block_entries(block):
    return {(ki, kj): block.matrix[i, j] for i, ki in enumerate(block.basis)
            for j, kj in enumerate(block.basis) if abs(block.matrix[i, j]) > 1e-14}


@pytest.mark.parametrize("stats", ["boson", "fermion"])
@pytest.mark.parametrize("pair", [(0, 1), (1, 3), (2, 0)])
def test_pair_restriction_matches_dense_oracle(stats, pair, rng):
    geom = LatticeGeometry(4, 1.0, 1 if stats == "fermion" else 2)
    keys = random_occupation_keys(geom, 3, 6, rng, ("a", "b"))
    psi = random_superposition(geom, keys, rng, stats)
    A, B = pair
    block = restrict_to_pair(psi, A, (B - A) % 4)
    ref = dense_pair(psi, A, B, geom.max_occ)
    got = block_entries(block)
    assert set(got) == set(ref)
    for key, v in ref.items():
        assert abs(got[key] - v) < 1e-12
    assert abs(block.trace() - 1) < 1e-12


def test_product_state_pair():
    geom = LatticeGeometry(3)
    psi = ManyBodyState(geom, "boson", {(1, 0, 0, 0, 0, 0): 1.0})
    block = restrict_to_pair(psi, 0, 1)
    assert block.basis == ((1, 0, 0, 0),)
    assert abs(block.matrix[0, 0] - 1) < 1e-15


@pytest.mark.parametrize("stats", ["boson", "fermion"])
def test_singlet_pair_is_pure_singlet(stats):
    psi = build_bell_chain(LatticeGeometry(2), "phi-", 1, stats)
    mat, leak = qubit_block(restrict_to_pair(psi, 0, 1))
    v = bell_vector("phi-")
    assert abs(v.conj() @ mat @ v - 1) < 1e-12
    assert abs(leak) < 1e-12


def test_ghz_occupation_pair_is_mixed():
    geom = LatticeGeometry(4)
    s = 1 / np.sqrt(2)
    psi = ManyBodyState(geom, "boson", {(1, 0, 1, 0, 0, 0, 0, 0): s, (0, 1, 0, 1, 0, 0, 0, 0): s})
    block = restrict_to_pair(psi, 0, 1)
    ref = dense_pair(psi, 0, 1, 1)
    assert block_entries(block).keys() == ref.keys()
    assert abs(block.trace() - 1) < 1e-12
    assert np.linalg.matrix_rank(block.matrix) == 2


def test_mott_pair_has_no_coherence():
    rab = delocalized_rho_ab(build_mott(LatticeGeometry(4), 1), 1)
    assert rab.block.basis == ((1, 1, 0, 0),)
    assert abs(rab.trace() - 4) < 1e-12
    assert [s.n for s in rab.sectors] == [2]


def test_delocalized_atom_coherence():
    rab = delocalized_rho_ab(build_delocalized_atoms(LatticeGeometry(2), 1), 1)
    i = rab.block.basis.index((0, 1, 0, 0))
    j = rab.block.basis.index((1, 0, 0, 0))
    assert abs(rab.block.matrix[i, j] - 1) < 1e-12
    # on two sites the pair is the whole ring, so the atom is always inside
    assert [s.n for s in rab.sectors] == [1]
    assert abs(rab.sector(1).trace - 2) < 1e-12
    wider = delocalized_rho_ab(build_delocalized_atoms(LatticeGeometry(3), 1), 1)
    assert [s.n for s in wider.sectors] == [0, 1]
    assert wider.sector(0).trace == pytest.approx(1.0)
    assert wider.sector(1).trace == pytest.approx(2.0)


@pytest.mark.parametrize("stats", ["boson", "fermion"])
def test_singlet_chain_delocalized_fidelity(stats):
    rab = delocalized_rho_ab(build_bell_chain(LatticeGeometry(2), "phi-", 1, stats), 1)
    mat, _ = qubit_block(rab)
    v = bell_vector("phi-")
    assert abs(v.conj() @ mat @ v - 2) < 1e-12


@pytest.mark.parametrize("stats", [Statistics.BOSON, Statistics.FERMION])
@pytest.mark.parametrize("x", [1, 2])
def test_delocalized_block_matches_site_major_oracle(stats, x, rng):
    psi = random_one_atom_state(LatticeGeometry(4), rng, stats)
    mat, _ = qubit_block(delocalized_rho_ab(psi, x))
    dense = DenseFock(4, 1, stats is Statistics.FERMION)
    ref = dense.delocalized_pair(dense.vector(psi), x)
    assert np.abs(mat - ref).max() < 1e-12


def test_fermionic_pair_blocks_positive(rng):
    # sign bookkeeping errors show up as negative eigenvalues
    geom = LatticeGeometry(5, 1.0, 1)
    for _ in range(10):
        keys = random_occupation_keys(geom, 4, 8, rng, ("a", "b"))
        psi = random_superposition(geom, keys, rng, "fermion")
        for x in (1, 2):
            rab = delocalized_rho_ab(psi, x)
            assert np.linalg.eigvalsh(rab.block.matrix).min() > -1e-12
            assert abs(rab.trace() - 5) < 1e-12


def test_project_nonzero():
    vac = ManyBodyState.vacuum(LatticeGeometry(3))
    with pytest.raises(ValueError):
        project_nonzero(delocalized_rho_ab(vac, 1))
    rab = delocalized_rho_ab(build_delocalized_atoms(LatticeGeometry(2), 1), 1)
    proj = project_nonzero(rab)
    assert abs(proj.trace() - 1) < 1e-12
    assert all(sum(k) == 1 for k in proj.basis)
    one = sector_decompose(rab)[0].block
    assert np.allclose(proj.matrix, one.matrix / one.trace())


def test_project_nonzero_weights_renormalize():
    geom = LatticeGeometry(3, 1.0, 2)
    psi = ManyBodyState(geom, "boson", {(1, 1, 0, 0, 0, 0): 1.0})
    rab = delocalized_rho_ab(psi, 1)
    weights = {s.n: s.trace for s in rab.sectors}
    assert weights == pytest.approx({1: 2.0, 2: 1.0})
    proj = project_nonzero(rab)
    twos = sum(proj.matrix[i, i].real for i, k in enumerate(proj.basis) if sum(k) == 2)
    assert twos == pytest.approx(1 / 3)
    assert nonvacuum_trace(rab) == pytest.approx(3.0)


def test_project_two_plus():
    rab = delocalized_rho_ab(build_delocalized_atoms(LatticeGeometry(2), 1), 1)
    with pytest.raises(ValueError):
        project_two_plus(rab)
    mott = delocalized_rho_ab(build_mott(LatticeGeometry(4), 1), 1)
    assert project_two_plus(mott).matrix == pytest.approx(np.array([[1.0]]))
    geom = LatticeGeometry(3, 1.0, 2)
    mixed = delocalized_rho_ab(ManyBodyState(geom, "boson", {(1, 1, 0, 0, 0, 0): 1.0}), 1)
    p = project_two_plus(mixed)
    assert abs(p.trace() - 1) < 1e-12 and all(sum(k) >= 2 for k in p.basis)


def test_cross_sector_coherence_rejected():
    geom = LatticeGeometry(2)
    basis = ((0, 0, 0, 0), (1, 0, 0, 0))
    rho = DensityOperator(geom, "boson", basis, np.full((2, 2), 0.5))
    with pytest.raises(SectorCoherenceError):
        sector_decompose(rho)


def test_defect_sector_weight_bounded():
    psi = build_mott(LatticeGeometry(8), 1)
    for seed in range(30):
        out, budget = inject_defects(psi, DefectBudget(0.2, 2), seed=seed)
        rab = delocalized_rho_ab(out, 1)
        assert rab.sector_trace(lambda n: n >= 3) <= 2 * budget.D + 1e-12
