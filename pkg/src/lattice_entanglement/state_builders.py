"""Named test states: Mott insulators, delocalized atoms, Bell-pair chains, defects."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .fock_space import (
    LEVELS,
    DensityOperator,
    LatticeGeometry,
    ManyBodyState,
    Statistics,
    apply_ladder,
    as_statistics,
    expected_defects,
    total_number,
)


class BellLabel(str, Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"


_S = 1 / np.sqrt(2)

# Two-qubit vectors in the (aa, ab, ba, bb) basis, site A first. The phi
# states carry one atom in each level, the psi states both atoms in one level.
BELL_VECTORS = {
    BellLabel.PHI_PLUS: np.array([0, _S, _S, 0], dtype=complex),
    BellLabel.PHI_MINUS: np.array([0, _S, -_S, 0], dtype=complex),
    BellLabel.PSI_PLUS: np.array([_S, 0, 0, _S], dtype=complex),
    BellLabel.PSI_MINUS: np.array([_S, 0, 0, -_S], dtype=complex),
}


def bell_vector(label) -> np.ndarray:
    return BELL_VECTORS[BellLabel(label)].copy()


@dataclass(frozen=True)
class DefectBudget:
    """Defect assumptions: ``D <= epsilon * <N>`` and occupations ``<= r``.

    ``D`` holds the realized (expected) defect count once a builder has run.
    """

    epsilon: float = 0.0
    r: int = 1
    D: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.r < 1:
            raise ValueError("r must be >= 1")

    @classmethod
    def certified(cls, rho, nominal: "DefectBudget | None" = None) -> "DefectBudget":
        """Smallest budget (not below ``nominal``) whose assumptions ``rho`` satisfies."""
        from .fock_space import max_site_level_occupation

        D = expected_defects(rho)
        N = total_number(rho)
        eps = D / N if N > 0 else 0.0
        r = max(1, max_site_level_occupation(rho))
        if nominal is not None:
            eps = max(eps, nominal.epsilon)
            r = max(r, nominal.r)
        return cls(min(1.0, eps), r, D)


def build_mott(geom: LatticeGeometry, filling: int, level: str = "a",
               statistics=Statistics.BOSON) -> ManyBodyState:
    """Product state with ``filling`` atoms of ``level`` on every site."""
    if filling < 0 or filling > geom.max_occ:
        raise ValueError(f"filling {filling} exceeds max_occ={geom.max_occ}")
    statistics = as_statistics(statistics)
    if statistics is Statistics.FERMION and filling > 1:
        raise ValueError("fermionic filling above one violates Pauli exclusion")
    key = [0] * geom.n_modes
    for m in range(geom.L):
        key[geom.mode(m, level)] = filling
    return ManyBodyState(geom, statistics, {tuple(key): 1.0 + 0j})


def build_delocalized_atoms(geom: LatticeGeometry, n_atoms: int, level: str = "a",
                            statistics=Statistics.BOSON) -> ManyBodyState:
    """Normalized ``(sum_m a_m^dagger)^n_atoms |vac>`` under the occupation cap."""
    if n_atoms < 1:
        raise ValueError("need at least one atom")
    state = ManyBodyState.vacuum(geom, statistics)
    for _ in range(n_atoms):
        nxt = ManyBodyState.zero(geom, statistics)
        for m in range(geom.L):
            nxt = nxt + apply_ladder(state, m, level, "create")
        state = nxt
    if state.is_zero():
        raise ValueError("truncation annihilated the state")
    return state.normalized()


def bell_pairs(L: int, x: int = 1) -> list[tuple[int, int]]:
    """Disjoint site pairs ``(s, s + x)`` tiling the ring in blocks of ``2x``."""
    if L % 2:
        raise ValueError("Bell chains need an even number of sites")
    if x < 1 or L % (2 * x):
        raise ValueError(f"pair offset {x} does not tile a ring of {L} sites")
    return [(b + j, b + j + x) for b in range(0, L, 2 * x) for j in range(x)]


def build_bell_chain(geom: LatticeGeometry, bell, pair_offset: int = 1,
                     statistics=Statistics.BOSON) -> ManyBodyState:
    """One atom per site, internal levels of each pair in the given Bell state.

    Pair kets are ``c_{A,s}^dagger c_{B,t}^dagger`` with the first site of the
    pair applied first, so for fermions the two-site wavefunction is the Bell
    vector in the site-major tensor product.
    """
    vec = bell_vector(bell)
    state = ManyBodyState.vacuum(geom, statistics)
    for A, B in bell_pairs(geom.L, pair_offset):
        nxt = ManyBodyState.zero(geom, statistics)
        for idx, amp in enumerate(vec):
            if amp == 0:
                continue
            sa, sb = LEVELS[idx // 2], LEVELS[idx % 2]
            term = apply_ladder(apply_ladder(state, B, sb, "create"), A, sa, "create")
            nxt = nxt + amp * term
        state = nxt
    return state.normalized()


def build_product_internal(geom: LatticeGeometry, site_vectors: Sequence[np.ndarray],
                           statistics=Statistics.BOSON) -> ManyBodyState:
    """One atom per site with site ``m`` in internal state ``site_vectors[m]``."""
    state = ManyBodyState.vacuum(geom, statistics)
    for m in reversed(range(geom.L)):
        u = np.asarray(site_vectors[m], dtype=complex)
        u = u / np.linalg.norm(u)
        state = u[0] * apply_ladder(state, m, "a", "create") + u[1] * apply_ladder(state, m, "b", "create")
    return state.normalized()


def inject_defects(state: ManyBodyState, budget: DefectBudget, seed=None,
                   level: str = "a") -> tuple[ManyBodyState, DefectBudget]:
    """Randomly promote sites to carry an extra atom.

    Each site is selected independently with probability ``epsilon``. For
    bosons the selected site gains one atom in ``level`` (branches already at
    ``r`` are dropped); for fermions the extra atom goes into the other level.
    The result is renormalized and ``D`` records the expected defect count.
    """
    rng = np.random.default_rng(seed)
    geom = state.geometry
    if not state.fermionic and budget.r > geom.max_occ:
        geom = geom.with_cap(budget.r)
        state = ManyBodyState(geom, state.statistics, dict(state.amplitudes), state.truncated)
    selected = np.flatnonzero(rng.random(geom.L) < budget.epsilon)
    add_level = level
    if state.fermionic:
        add_level = "b" if level == "a" else "a"
    cap = geom.max_occ if state.fermionic else budget.r
    out = state
    for m in selected:
        amps = {}
        for key, amp in out.amplitudes.items():
            if not state.fermionic and key[geom.mode(m, add_level)] >= cap:
                continue
            amps[key] = amp
        if not amps:
            continue
        promoted = apply_ladder(ManyBodyState(geom, out.statistics, amps), m, add_level, "create")
        if not promoted.is_zero():
            out = promoted
    out = out.normalized()
    return out, replace(budget, D=expected_defects(out))


# --- random families used by property checks ----------------------------


def _random_complex(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


def random_superposition(geom: LatticeGeometry, keys: Sequence[tuple], rng,
                         statistics=Statistics.BOSON) -> ManyBodyState:
    amps = _random_complex(rng, len(keys))
    return ManyBodyState(geom, statistics, dict(zip(keys, amps))).normalized()


def random_occupation_keys(geom: LatticeGeometry, n_atoms: int, n_terms: int, rng,
                           levels: Sequence[str] = ("a",), cap: int | None = None) -> list[tuple]:
    """Distinct random occupation tuples with ``n_atoms`` atoms, per-mode cap."""
    cap = geom.max_occ if cap is None else cap
    modes = [geom.mode(m, lv) for lv in levels for m in range(geom.L)]
    if n_atoms > cap * len(modes):
        raise ValueError("too many atoms for the available modes")
    keys: set[tuple] = set()
    attempts = 0
    while len(keys) < n_terms and attempts < 50 * n_terms:
        attempts += 1
        occ = [0] * geom.n_modes
        placed = 0
        while placed < n_atoms:
            j = modes[rng.integers(len(modes))]
            if occ[j] < cap:
                occ[j] += 1
                placed += 1
        keys.add(tuple(occ))
    return sorted(keys)


def random_occupation_state(geom: LatticeGeometry, n_atoms: int, n_terms: int, rng,
                            levels: Sequence[str] = ("a",), statistics=Statistics.BOSON) -> ManyBodyState:
    keys = random_occupation_keys(geom, n_atoms, n_terms, rng, levels)
    return random_superposition(geom, keys, rng, statistics)


def random_diagonal_density(geom: LatticeGeometry, n_terms: int, rng, levels: Sequence[str] = ("a",),
                            statistics=Statistics.BOSON, max_atoms: int | None = None) -> DensityOperator:
    """Random mixture of occupation basis states (separable under the number rule)."""
    max_atoms = geom.L * geom.max_occ if max_atoms is None else max_atoms
    probs: dict[tuple, float] = {}
    for _ in range(n_terms):
        n = int(rng.integers(0, max_atoms + 1))
        key = random_occupation_keys(geom, n, 1, rng, levels)[0]
        probs[key] = probs.get(key, 0.0) + float(rng.random()) + 1e-3
    total = sum(probs.values())
    return DensityOperator.diagonal(geom, statistics, {k: v / total for k, v in probs.items()})


def one_atom_keys(geom: LatticeGeometry) -> list[tuple]:
    """All one-atom-per-site configurations of the internal levels."""
    keys = []
    L = geom.L
    for bits in range(2 ** L):
        occ = [0] * geom.n_modes
        for m in range(L):
            occ[(bits >> m & 1) * L + m] = 1
        keys.append(tuple(occ))
    return keys


def random_one_atom_state(geom: LatticeGeometry, rng, statistics=Statistics.BOSON,
                          n_terms: int | None = None) -> ManyBodyState:
    keys = one_atom_keys(geom)
    if n_terms is not None and n_terms < len(keys):
        keys = [keys[i] for i in sorted(rng.choice(len(keys), size=n_terms, replace=False))]
    return random_superposition(geom, keys, rng, statistics)


BUILDERS = {
    "mott": build_mott,
    "delocalized": build_delocalized_atoms,
    "bell_chain": build_bell_chain,
}
