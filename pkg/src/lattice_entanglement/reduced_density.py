"""
Delocalized two-site states.

The pair block is stored as a :class:`DensityOperator` on a two-site
geometry, site 0 playing ``A = m`` and site 1 playing ``B = m + x``. Its basis
tuples therefore read ``(a_A, a_B, b_A, b_B)``, the canonical order restricted
to the pair, and the usual :func:`expectation` evaluates local operators on
it. The partial trace re-expresses each global ket with the pair modes first
(fermionic reordering sign included) before tracing out the rest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fock_space import (
    DensityOperator,
    LatticeGeometry,
    State,
    components,
    fermionic_reorder_sign,
)

CROSS_SECTOR_TOL = 1e-12


class SectorCoherenceError(ValueError):
    """Coherence between different pair atom numbers (non-physical input)."""


def pair_geometry(geom: LatticeGeometry, max_occ: int | None = None) -> LatticeGeometry:
    return LatticeGeometry(2, geom.d, geom.max_occ if max_occ is None else max_occ)


def _pair_accumulate(rho: State, A: int, B: int, acc: dict):
    geom = rho.geometry
    L = geom.L
    pair_modes = (A, B, L + A, L + B)
    rest_modes = [j for j in range(2 * L) if j not in pair_modes]
    rank = [0] * (2 * L)
    for r, j in enumerate(list(pair_modes) + rest_modes):
        rank[j] = r
    fermion = rho.fermionic
    for w, psi in components(rho):
        groups: dict[tuple, list] = {}
        for key, amp in psi.amplitudes.items():
            local = tuple(key[j] for j in pair_modes)
            rest = tuple(key[j] for j in rest_modes)
            sign = fermionic_reorder_sign(key, rank) if fermion else 1
            groups.setdefault(rest, []).append((local, sign * amp))
        for terms in groups.values():
            for li, ai in terms:
                for lj, aj in terms:
                    acc[li, lj] = acc.get((li, lj), 0.0) + w * ai * np.conj(aj)


def _to_density(acc: dict, geom: LatticeGeometry, statistics) -> DensityOperator:
    basis = sorted({k for pair in acc for k in pair}, key=lambda k: (sum(k), k))
    index = {k: i for i, k in enumerate(basis)}
    mat = np.zeros((len(basis), len(basis)), dtype=complex)
    for (i, j), v in acc.items():
        mat[index[i], index[j]] += v
    mat = 0.5 * (mat + mat.conj().T)
    cap = max((max(k) for k in basis), default=1)
    return DensityOperator(pair_geometry(geom, max(cap, 1)), statistics, tuple(basis), mat)


def restrict_to_pair(rho: State, m: int, x: int) -> DensityOperator:
    """Reduced state of sites ``m`` (as A) and ``m + x`` (as B); trace preserved."""
    geom = rho.geometry
    if x % geom.L == 0:
        raise ValueError("offset x must not be a multiple of L")
    acc: dict = {}
    _pair_accumulate(rho, m % geom.L, (m + x) % geom.L, acc)
    return _to_density(acc, geom, rho.statistics)


@dataclass(frozen=True, eq=False)
class Sector:
    n: int
    block: DensityOperator
    trace: float


@dataclass(frozen=True, eq=False)
class BipartiteReducedState:
    """Unnormalized ``rho_AB = sum_m rho_(m, m+x)`` with its atom-number sectors."""

    x: int
    block: DensityOperator
    source_L: int
    _sectors: list = field(default=None, repr=False)

    @property
    def sectors(self) -> list[Sector]:
        if self._sectors is None:
            object.__setattr__(self, "_sectors", sector_decompose(self))
        return self._sectors

    def trace(self) -> float:
        return self.block.trace()

    def sector(self, n: int) -> Sector | None:
        return next((s for s in self.sectors if s.n == n), None)

    def sector_trace(self, predicate) -> float:
        return sum(s.trace for s in self.sectors if predicate(s.n))


def delocalized_rho_ab(rho: State, x: int) -> BipartiteReducedState:
    """Sum of the pair restrictions over all ring sites."""
    geom = rho.geometry
    if x % geom.L == 0:
        raise ValueError("offset x must not be a multiple of L")
    acc: dict = {}
    for m in range(geom.L):
        _pair_accumulate(rho, m, (m + x) % geom.L, acc)
    return BipartiteReducedState(x, _to_density(acc, geom, rho.statistics), geom.L)


def _block(rab) -> DensityOperator:
    return rab.block if isinstance(rab, BipartiteReducedState) else rab


def sub_block(rho: DensityOperator, keep) -> DensityOperator:
    idx = [i for i, k in enumerate(rho.basis) if keep(k)]
    if not idx:
        raise ValueError("empty support")
    mat = rho.matrix[np.ix_(idx, idx)]
    if np.trace(mat).real <= 1e-15:
        raise ValueError("empty support")
    return DensityOperator(rho.geometry, rho.statistics, tuple(rho.basis[i] for i in idx), mat)


def sector_decompose(rab) -> list[Sector]:
    """Split the pair block by total pair atom number.

    Raises :class:`SectorCoherenceError` if blocks between different numbers
    are above tolerance.
    """
    rho = _block(rab)
    n = np.array([sum(k) for k in rho.basis])
    off = n[:, None] != n[None, :]
    scale = max(1.0, rho.trace())
    if np.abs(rho.matrix[off]).max(initial=0.0) > CROSS_SECTOR_TOL * scale:
        raise SectorCoherenceError("cross-sector coherence in the pair block")
    out = []
    for value in sorted(set(n.tolist())):
        idx = np.flatnonzero(n == value)
        mat = rho.matrix[np.ix_(idx, idx)]
        tr = float(np.trace(mat).real)
        if tr <= 1e-15:
            continue
        out.append(Sector(int(value), DensityOperator(rho.geometry, rho.statistics,
                                                      tuple(rho.basis[i] for i in idx), mat), tr))
    return out


def project_nonzero(rab) -> DensityOperator:
    """Normalized projection onto pair configurations with at least one atom."""
    try:
        return sub_block(_block(rab), lambda k: sum(k) >= 1).normalized()
    except ValueError:
        raise ValueError("all weight sits in the vacuum sector") from None


def project_two_plus(rab) -> DensityOperator:
    """Normalized projection onto pair configurations with two or more atoms."""
    try:
        return sub_block(_block(rab), lambda k: sum(k) >= 2).normalized()
    except ValueError:
        raise ValueError("no weight with two or more atoms") from None


def nonvacuum_trace(rab) -> float:
    rho = _block(rab)
    return float(sum(rho.matrix[i, i].real for i, k in enumerate(rho.basis) if sum(k) >= 1))


def to_json_dict(rab) -> dict:
    """Basis labels and complex entries, for the oracle command."""
    rho = _block(rab)
    out = {
        "mode_order": ["a_A", "a_B", "b_A", "b_B"],
        "statistics": rho.statistics.value,
        "basis": [list(k) for k in rho.basis],
        "real": rho.matrix.real.tolist(),
        "imag": rho.matrix.imag.tolist(),
        "trace": rho.trace(),
    }
    if isinstance(rab, BipartiteReducedState):
        out["x"] = rab.x
        out["sectors"] = [{"n": s.n, "trace": s.trace} for s in rab.sectors]
    return out
