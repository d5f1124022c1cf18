"""
Truncated second-quantized Fock space on a 1D ring with two internal levels.

Basis states are plain tuples of occupation numbers in the canonical mode
order ``a_0 ... a_{L-1}, b_0 ... b_{L-1}``. A many-body state is a sparse map
from such tuples to complex amplitudes. Fermionic signs follow the
Jordan-Wigner convention in that mode order: a ladder operator on mode ``j``
picks up ``(-1)**(number of occupied modes before j)``.

Truncation is hard: creating beyond ``max_occ`` returns zero for that branch
and sets a flag. Expectation values are evaluated with the *untruncated*
algebra, so that products like ``a a^dagger`` acting on a capped site still
give ``n + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence, Union

import numpy as np

LEVELS = ("a", "b")
PRUNE_TOL = 1e-14


class Statistics(str, Enum):
    BOSON = "boson"
    FERMION = "fermion"


class NonPhysicalStateError(ValueError):
    """Raised when a state coherently mixes total atom numbers."""


def as_statistics(value) -> Statistics:
    return value if isinstance(value, Statistics) else Statistics(str(value))


@dataclass(frozen=True)
class LatticeGeometry:
    """Ring of ``L`` sites, lattice constant ``d``, per-mode occupation cap."""

    L: int
    d: float = 1.0
    max_occ: int = 1

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"need at least two sites, got L={self.L}")
        if self.max_occ < 1:
            raise ValueError("max_occ must be >= 1")

    @property
    def n_modes(self) -> int:
        return 2 * self.L

    def mode(self, site: int, level: str) -> int:
        if not 0 <= site < self.L:
            raise IndexError(f"site {site} outside [0, {self.L})")
        return LEVELS.index(level) * self.L + site

    def wrap(self, site: int) -> int:
        return site % self.L

    def with_cap(self, max_occ: int) -> "LatticeGeometry":
        return LatticeGeometry(self.L, self.d, max_occ)

    def vacuum_key(self) -> tuple:
        return (0,) * self.n_modes


def basis_state(geom: LatticeGeometry, occupations: Mapping[tuple[int, str], int]) -> tuple:
    """Occupation tuple from a ``{(site, level): count}`` map."""
    occ = [0] * geom.n_modes
    for (site, level), n in occupations.items():
        if not 0 <= n <= geom.max_occ:
            raise ValueError(f"occupation {n} outside [0, {geom.max_occ}]")
        occ[geom.mode(site, level)] = int(n)
    return tuple(occ)


def site_occupations(geom: LatticeGeometry, key: Sequence[int]) -> list[int]:
    """Total atoms per site (both levels) for one basis tuple."""
    L = geom.L
    return [key[m] + key[L + m] for m in range(L)]


# --- low-level sparse ladder algebra ------------------------------------


def _ladder(amps: Mapping[tuple, complex], mode: int, create: bool,
            fermion: bool, cap: int | None):
    """Apply one ladder operator to a sparse amplitude map.

    Returns ``(new_amps, truncated)``. ``cap=None`` means untruncated.
    """
    out: dict[tuple, complex] = {}
    truncated = False
    for key, amp in amps.items():
        n = key[mode]
        if create:
            if fermion:
                if n >= 1:
                    continue
            elif cap is not None and n >= cap:
                truncated = True
                continue
            factor = 1.0 if fermion else np.sqrt(n + 1)
            new_n = n + 1
        else:
            if n == 0:
                continue
            factor = 1.0 if fermion else np.sqrt(n)
            new_n = n - 1
        if fermion and sum(key[:mode]) % 2:
            factor = -factor
        new_key = key[:mode] + (new_n,) + key[mode + 1:]
        out[new_key] = out.get(new_key, 0.0) + factor * amp
    return {k: v for k, v in out.items() if abs(v) > PRUNE_TOL}, truncated


def _parse_kind(kind: str) -> bool:
    if kind in ("create", "+", "dag", "c"):
        return True
    if kind in ("annihilate", "-", "a"):
        return False
    raise ValueError(f"unknown ladder kind {kind!r}")


# --- states -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ManyBodyState:
    """Sparse pure state over occupation tuples.

    The amplitude map is treated as immutable; every operation returns a new
    state.
    """

    geometry: LatticeGeometry
    statistics: Statistics
    amplitudes: Mapping[tuple, complex]
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "statistics", as_statistics(self.statistics))
        if self.statistics is Statistics.FERMION and self.geometry.max_occ != 1:
            raise ValueError("fermionic states require max_occ = 1")
        n_modes = self.geometry.n_modes
        for key in self.amplitudes:
            if len(key) != n_modes:
                raise ValueError("basis tuple length does not match geometry")

    @classmethod
    def vacuum(cls, geom: LatticeGeometry, statistics=Statistics.BOSON) -> "ManyBodyState":
        return cls(geom, statistics, {geom.vacuum_key(): 1.0 + 0j})

    @classmethod
    def zero(cls, geom: LatticeGeometry, statistics=Statistics.BOSON) -> "ManyBodyState":
        return cls(geom, statistics, {})

    @property
    def fermionic(self) -> bool:
        return self.statistics is Statistics.FERMION

    def norm(self) -> float:
        return float(np.sqrt(sum(abs(v) ** 2 for v in self.amplitudes.values())))

    def is_zero(self) -> bool:
        return not self.amplitudes

    def normalized(self) -> "ManyBodyState":
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero state")
        return self._replace({k: v / nrm for k, v in self.amplitudes.items()})

    def _replace(self, amps, truncated=None) -> "ManyBodyState":
        return ManyBodyState(self.geometry, self.statistics, amps,
                             self.truncated if truncated is None else truncated)

    def inner(self, other: "ManyBodyState") -> complex:
        """``<self|other>``."""
        theirs = other.amplitudes
        return complex(sum(np.conj(v) * theirs.get(k, 0.0) for k, v in self.amplitudes.items()))

    def atom_numbers(self) -> set[int]:
        return {sum(k) for k in self.amplitudes}

    @property
    def mixes_sectors(self) -> bool:
        return len(self.atom_numbers()) > 1

    def __add__(self, other: "ManyBodyState") -> "ManyBodyState":
        amps = dict(self.amplitudes)
        for k, v in other.amplitudes.items():
            amps[k] = amps.get(k, 0.0) + v
        return self._replace({k: v for k, v in amps.items() if abs(v) > PRUNE_TOL},
                             self.truncated or other.truncated)

    def __mul__(self, c: complex) -> "ManyBodyState":
        return self._replace({k: c * v for k, v in self.amplitudes.items() if abs(c * v) > PRUNE_TOL})

    __rmul__ = __mul__

    def to_vector(self, basis: Sequence[tuple]) -> np.ndarray:
        index = {k: i for i, k in enumerate(basis)}
        vec = np.zeros(len(basis), dtype=complex)
        for k, v in self.amplitudes.items():
            vec[index[k]] = v
        return vec


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Dense Hermitian matrix over an explicit list of occupation tuples."""

    geometry: LatticeGeometry
    statistics: Statistics
    basis: tuple
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "statistics", as_statistics(self.statistics))
        object.__setattr__(self, "basis", tuple(tuple(b) for b in self.basis))
        mat = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", mat)
        if mat.shape != (len(self.basis), len(self.basis)):
            raise ValueError("matrix shape does not match basis")
        scale = max(1.0, float(np.abs(mat).max(initial=0.0)))
        if np.abs(mat - mat.conj().T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("density operator is not Hermitian")
        if len(self.basis):
            if np.linalg.eigvalsh(mat).min() < -1e-10 * scale:
                raise ValueError("density operator is not positive semidefinite")
        if np.trace(mat).real <= 0:
            raise ValueError("density operator has non-positive trace")

    @classmethod
    def from_state(cls, state: ManyBodyState) -> "DensityOperator":
        return cls.mixture([state], [1.0])

    @classmethod
    def mixture(cls, states: Sequence[ManyBodyState], weights: Sequence[float]) -> "DensityOperator":
        if len(states) != len(weights) or not states:
            raise ValueError("need matching non-empty states and weights")
        geom, stats = states[0].geometry, states[0].statistics
        basis = sorted({k for s in states for k in s.amplitudes}, key=lambda k: (sum(k), k))
        mat = np.zeros((len(basis), len(basis)), dtype=complex)
        for s, w in zip(states, weights):
            if w < 0:
                raise ValueError("mixture weights must be non-negative")
            v = s.to_vector(basis)
            mat += w * np.outer(v, v.conj())
        return cls(geom, stats, tuple(basis), mat)

    @classmethod
    def diagonal(cls, geom: LatticeGeometry, statistics, probs: Mapping[tuple, float]) -> "DensityOperator":
        basis = sorted(probs, key=lambda k: (sum(k), k))
        return cls(geom, statistics, tuple(basis), np.diag([probs[k] for k in basis]).astype(complex))

    @property
    def fermionic(self) -> bool:
        return self.statistics is Statistics.FERMION

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    @property
    def normalized_flag(self) -> bool:
        return abs(self.trace() - 1.0) < 1e-12

    def normalized(self) -> "DensityOperator":
        return DensityOperator(self.geometry, self.statistics, self.basis, self.matrix / self.trace())

    def atom_numbers(self) -> set[int]:
        return {sum(k) for k in self.basis}

    @property
    def mixes_sectors(self) -> bool:
        """True when coherences connect different total atom numbers."""
        n = np.array([sum(k) for k in self.basis])
        off = n[:, None] != n[None, :]
        return bool(np.abs(self.matrix[off]).max(initial=0.0) > 1e-12)

    def components(self, tol: float = 1e-14) -> list[tuple[float, ManyBodyState]]:
        """Eigen-ensemble ``[(weight, normalized pure state), ...]``."""
        vals, vecs = np.linalg.eigh(self.matrix)
        out = []
        for w, v in zip(vals, vecs.T):
            if w <= tol:
                continue
            amps = {k: complex(c) for k, c in zip(self.basis, v) if abs(c) > PRUNE_TOL}
            out.append((float(w), ManyBodyState(self.geometry, self.statistics, amps)))
        return out

    def element(self, bra: tuple, ket: tuple) -> complex:
        """``<bra|rho|ket>``; zero for tuples outside the basis."""
        index = {k: i for i, k in enumerate(self.basis)}
        if bra not in index or ket not in index:
            return 0j
        return complex(self.matrix[index[bra], index[ket]])


State = Union[ManyBodyState, DensityOperator]


def components(rho: State) -> list[tuple[float, ManyBodyState]]:
    """Pure-state ensemble of ``rho``; a pure state is its own single component."""
    if isinstance(rho, ManyBodyState):
        return [(1.0, rho)]
    return rho.components()


def require_physical(rho: State) -> None:
    if rho.mixes_sectors:
        raise NonPhysicalStateError("state mixes total atom numbers; rejected for witness evaluation")


# --- operations -------------------------------------------------------------


def apply_ladder(state: ManyBodyState, site: int, level: str, kind: str) -> ManyBodyState:
    """Apply ``a_site`` / ``a_site^dagger`` (or the ``b`` version) to ``state``.

    Creation beyond ``max_occ`` drops that branch and sets ``truncated``.
    """
    mode = state.geometry.mode(site, level)
    amps, trunc = _ladder(state.amplitudes, mode, _parse_kind(kind), state.fermionic,
                          state.geometry.max_occ)
    return state._replace(amps, state.truncated or trunc)


def apply_product(state: ManyBodyState, product: Sequence[tuple[str, int, str]],
                  truncate: bool = False) -> ManyBodyState:
    """Apply an operator product as written, i.e. rightmost factor first."""
    geom = state.geometry
    amps = state.amplitudes
    cap = geom.max_occ if truncate else None
    trunc = state.truncated
    for kind, site, level in reversed(product):
        amps, t = _ladder(amps, geom.mode(site, level), _parse_kind(kind), state.fermionic, cap)
        trunc = trunc or t
        if not amps:
            break
    return state._replace(amps, trunc)


def dagger(product: Sequence[tuple[str, int, str]]) -> list[tuple[str, int, str]]:
    """Hermitian conjugate of an operator product."""
    flip = {True: "annihilate", False: "create"}
    return [(flip[_parse_kind(k)], s, l) for k, s, l in reversed(product)]


def expectation(rho: State, product: Sequence[tuple[str, int, str]]) -> complex:
    """``<product>`` in ``rho``; raw (not renormalized) for pure states.

    ``product`` is an ordered list of ``(kind, site, level)`` with
    ``kind`` in ``{"create", "annihilate"}``.
    """
    if isinstance(rho, ManyBodyState):
        return rho.inner(apply_product(rho, product))
    geom = rho.geometry
    index = {k: i for i, k in enumerate(rho.basis)}
    total = 0j
    for i, key in enumerate(rho.basis):
        image = apply_product(ManyBodyState(geom, rho.statistics, {key: 1.0}), product)
        for out_key, c in image.amplitudes.items():
            j = index.get(out_key)
            if j is not None:
                total += rho.matrix[i, j] * c
    return complex(total)


def total_number(rho: State) -> float:
    """``<N>`` summed over all sites and both levels."""
    if isinstance(rho, ManyBodyState):
        return float(sum(abs(v) ** 2 * sum(k) for k, v in rho.amplitudes.items()))
    return float(sum(rho.matrix[i, i].real * sum(k) for i, k in enumerate(rho.basis)))


def level_number(rho: State, level: str) -> float:
    L = rho.geometry.L
    sl = slice(0, L) if level == "a" else slice(L, 2 * L)
    if isinstance(rho, ManyBodyState):
        return float(sum(abs(v) ** 2 * sum(k[sl]) for k, v in rho.amplitudes.items()))
    return float(sum(rho.matrix[i, i].real * sum(k[sl]) for i, k in enumerate(rho.basis)))


def fermionic_reorder_sign(key: Sequence[int], rank: Sequence[int]) -> int:
    """Sign of re-expressing a normal-ordered fermionic ket in a new mode order.

    ``rank[j]`` is the position of canonical mode ``j`` in the new order.
    """
    ranks = [rank[j] for j, n in enumerate(key) if n]
    inversions = sum(1 for i in range(len(ranks)) for j in range(i + 1, len(ranks)) if ranks[i] > ranks[j])
    return -1 if inversions % 2 else 1


def permute_sites(state: ManyBodyState, site_map: Sequence[int]) -> ManyBodyState:
    """Relabel site ``m`` as ``site_map[m]`` for both levels (with fermionic signs)."""
    geom = state.geometry
    L = geom.L
    if sorted(site_map) != list(range(L)):
        raise ValueError("site_map must be a permutation")
    mode_map = [site_map[j % L] + (j // L) * L for j in range(2 * L)]
    amps = {}
    for key, amp in state.amplitudes.items():
        new = [0] * (2 * L)
        for j, n in enumerate(key):
            new[mode_map[j]] = n
        sign = fermionic_reorder_sign(key, mode_map) if state.fermionic else 1
        amps[tuple(new)] = sign * amp
    return state._replace(amps)


def translate(rho: State, shift: int = 1) -> State:
    """Translate every site ``m -> m + shift`` on the ring."""
    L = rho.geometry.L
    site_map = [(m + shift) % L for m in range(L)]
    if isinstance(rho, ManyBodyState):
        return permute_sites(rho, site_map)
    comps = [(w, permute_sites(s, site_map)) for w, s in rho.components()]
    return DensityOperator.mixture([s for _, s in comps], [w for w, _ in comps])


def one_atom_per_site(rho: State) -> bool:
    """Every branch of ``rho`` carries exactly one atom on every site."""
    geom = rho.geometry
    keys = rho.amplitudes if isinstance(rho, ManyBodyState) else rho.basis
    return all(all(n == 1 for n in site_occupations(geom, k)) for k in keys)


def max_site_level_occupation(rho: State) -> int:
    keys = rho.amplitudes if isinstance(rho, ManyBodyState) else rho.basis
    return max((max(k) for k in keys), default=0)


def expected_defects(rho: State) -> float:
    """Expected number of sites holding two or more atoms."""
    geom = rho.geometry
    if isinstance(rho, ManyBodyState):
        items = ((k, abs(v) ** 2) for k, v in rho.amplitudes.items())
    else:
        items = ((k, rho.matrix[i, i].real) for i, k in enumerate(rho.basis))
    return float(sum(p * sum(1 for n in site_occupations(geom, k) if n >= 2) for k, p in items))


def hopping(site_from: int, site_to: int, level: str) -> list[tuple[str, int, str]]:
    """``c_to^dagger c_from`` as a product list."""
    return [("create", site_to, level), ("annihilate", site_from, level)]
