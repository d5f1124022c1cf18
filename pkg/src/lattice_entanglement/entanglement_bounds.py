"""
Entanglement lower bounds from Fourier witnesses, and exact oracles to check them.

Conventions
-----------
Two-qubit blocks use the site-major basis ``|s_A s_B>`` with index
``2 * s_A + s_B``. For internal levels ``a -> 0`` and ``b -> 1``; for the
occupation qubit the site is empty (0) or occupied (1). For fermions the
site-major ket is ``c_{A,s}^dag c_{B,t}^dag |0>``, which differs from the
level-ordered storage of the pair block by ``(-1)**(n_{a,B} n_{b,A})``.

In the site-major convention the fermionic witness identities read::

    <Q^ab + Q^ba> = <phi_-> - <phi_+>
    <Q^aa + Q^bb> = <N> - <psi_+> - <psi_->

while bosons have ``<phi_+> - <phi_->`` and ``<N> + <psi_+> + <psi_->``.
Passing ``convention="level"`` selects Bell kets written in level order, in
which the first identity loses its fermionic sign.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize

from .fock_space import (
    DensityOperator,
    ManyBodyState,
    State,
    Statistics,
    _ladder,
    as_statistics,
    expectation,
    one_atom_per_site,
    total_number,
)
from .reduced_density import (
    BipartiteReducedState,
    project_nonzero,
    sub_block,
)
from .state_builders import BellLabel, DefectBudget, bell_vector
from .tof_observables import CHANNELS, internal_term, q_internal_direct, q_occupation_direct

PROB_TOL = 1e-12
_SYSY = np.array([[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=complex)


# --- entropies ----------------------------------------------------------------


def binary_entropy(p: float) -> float:
    """``-p log2 p - (1 - p) log2 (1 - p)``; zero at both ends."""
    if p < -PROB_TOL or p > 1 + PROB_TOL:
        raise ValueError(f"probability {p} outside [0, 1]")
    p = min(max(p, 0.0), 1.0)
    if p in (0.0, 1.0):
        return 0.0
    return float(-p * math.log2(p) - (1 - p) * math.log2(1 - p))


def eof_from_concurrence(C: float) -> float:
    C = min(max(C, 0.0), 1.0)
    return binary_entropy(0.5 * (1 - math.sqrt(max(0.0, 1 - C * C))))


def _entropy_bits(probs: np.ndarray) -> float:
    p = probs[probs > 1e-15]
    return float(-(p * np.log2(p)).sum())


# --- two-qubit oracles ----------------------------------------------------------


def _as_matrix(rho) -> np.ndarray:
    mat = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    if mat.shape != (4, 4):
        raise ValueError("need a 4x4 two-qubit density matrix")
    return mat


def _check_state(mat: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    if np.abs(mat - mat.conj().T).max() > 1e-10:
        raise ValueError("matrix not Hermitian")
    tr = np.trace(mat).real
    if tr <= 0:
        raise ValueError("non-positive trace")
    mat = mat / tr
    if np.linalg.eigvalsh(mat).min() < -tol:
        raise ValueError("matrix not positive semidefinite")
    return mat


def concurrence(rho) -> float:
    """Two-qubit concurrence from singular values of ``sqrt(rho) Y sqrt(rho)^*``."""
    mat = _check_state(_as_matrix(rho))
    vals, vecs = np.linalg.eigh(mat)
    root = (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.conj().T
    lam = np.linalg.svd(root @ _SYSY @ root.conj(), compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def wootters_eof(rho) -> float:
    """Entanglement of formation of a two-qubit state (bits)."""
    return eof_from_concurrence(concurrence(rho))


# --- pair block -> qubit views --------------------------------------------------

INTERNAL_KEYS = ((1, 1, 0, 0), (1, 0, 0, 1), (0, 1, 1, 0), (0, 0, 1, 1))
OCCUPATION_KEYS = ((0, 0, 0, 0), (0, 1, 0, 0), (1, 0, 0, 0), (1, 1, 0, 0))


def _site_sign(key, fermion: bool) -> int:
    return -1 if fermion and key[1] and key[2] else 1


def _pair_block(rho) -> DensityOperator:
    return rho.block if isinstance(rho, BipartiteReducedState) else rho


def qubit_block(rho, kind: str = "internal", convention: str = "site") -> tuple[np.ndarray, float]:
    """4x4 matrix of the pair block on the qubit subspace, plus the weight outside it.

    ``kind="internal"``: one atom per site, levels a/b.
    ``kind="occupation"``: level a only, each site empty or singly occupied.
    """
    block = _pair_block(rho)
    keys = INTERNAL_KEYS if kind == "internal" else OCCUPATION_KEYS
    index = {k: i for i, k in enumerate(block.basis)}
    fermion = block.fermionic and convention == "site"
    mat = np.zeros((4, 4), dtype=complex)
    for i, ki in enumerate(keys):
        for j, kj in enumerate(keys):
            if ki in index and kj in index:
                s = _site_sign(ki, fermion) * _site_sign(kj, fermion)
                mat[i, j] = s * block.matrix[index[ki], index[kj]]
    leakage = block.trace() - float(np.trace(mat).real)
    return mat, leakage


def bell_fidelities(rho, convention: str = "site") -> dict[str, float]:
    """``<phi|rho|phi>`` for the four Bell states (unnormalized if ``rho`` is)."""
    mat, _ = qubit_block(rho, "internal", convention)
    return {lab.value: float(np.real(bell_vector(lab).conj() @ mat @ bell_vector(lab))) for lab in BellLabel}


# --- witness-derived bounds -------------------------------------------------------


@dataclass(frozen=True)
class LambdaEstimate:
    value: float
    raw: float
    clamped: bool


def occupation_lambda(Q: complex, N: float, error: float = 0.0) -> LambdaEstimate:
    """``(|Q| - error) / (2 N)`` clamped to ``[0, 1/2]``."""
    if N <= 0:
        raise ValueError("need <N> > 0")
    raw = (abs(Q) - error) / (2 * N)
    value = min(max(raw, 0.0), 0.5)
    return LambdaEstimate(value, raw, value != raw)


def _eof_from_lambda(lam: float) -> float:
    return binary_entropy(0.5 * (1 - math.sqrt(max(0.0, 1 - 4 * lam * lam))))


def eof_bound_occupation(Q: complex, N: float) -> float:
    """Lower bound on the number-rule EoF of the projected pair state."""
    return _eof_from_lambda(occupation_lambda(Q, N).value)


def defect_error(N: float, budget: DefectBudget, strict: bool = False) -> float:
    """Error ``(2 eps r + 4 sqrt(eps)) <N>`` on the off-diagonal element.

    ``strict=True`` uses the variant carrying an extra factor ``r``.
    """
    err = (2 * budget.epsilon * budget.r + 4 * math.sqrt(budget.epsilon)) * N
    return err * budget.r if strict else err


def eof_bound_occupation_defects(Q: complex, N: float, budget: DefectBudget, strict: bool = False) -> float:
    return _eof_from_lambda(occupation_lambda(Q, N, defect_error(N, budget, strict)).value)


def eof_from_fidelity(f: float, gate: bool = True) -> float:
    """Isotropic-state bound ``S((1 - sqrt(1 - (1 - 2f)^2)) / 2)``.

    With ``gate`` the bound is zero for ``f <= 1/2``, where fidelity carries no
    evidence of entanglement.
    """
    if f < -PROB_TOL or f > 1 + PROB_TOL:
        raise ValueError(f"fidelity {f} outside [0, 1]")
    f = min(max(f, 0.0), 1.0)
    if gate and f <= 0.5:
        return 0.0
    return binary_entropy(0.5 * (1 - math.sqrt(max(0.0, 1 - (1 - 2 * f) ** 2))))


def _sums(q: Mapping[str, complex]) -> tuple[float, float]:
    return float(np.real(q["ab"] + q["ba"])), float(np.real(q["aa"] + q["bb"]))


def _phi_sign(statistics, convention: str) -> int:
    return -1 if as_statistics(statistics) is Statistics.FERMION and convention == "site" else 1


def fidelity_one_atom(q: Mapping[str, complex], N: float, statistics=Statistics.BOSON,
                      convention: str = "site") -> dict[str, float]:
    """Bell fidelities of the normalized pair state, one atom per site.

    ``q`` maps the channels ``ab, ba, aa, bb`` to the internal witnesses.
    """
    if N <= 0:
        raise ValueError("need <N> > 0")
    s_ab, s_aa = _sums(q)
    s = _phi_sign(statistics, convention)
    if as_statistics(statistics) is Statistics.BOSON:
        rest = N - s_aa
    else:
        rest = s_aa - N
    return {"phi+": 0.5 + (s * s_ab + rest) / (2 * N),
            "phi-": 0.5 + (-s * s_ab + rest) / (2 * N)}


@dataclass(frozen=True)
class GeneralBound:
    """Defect-tolerant fidelity estimates for states with arbitrary occupation.

    ``Lambda`` follows ``Lambda = 2 f - 1``; ``Lambda_alt = 1 - 2 f`` is the
    opposite sign convention, kept for comparison.
    """

    f: dict
    Lambda: dict
    Lambda_alt: dict
    eof: float


def lambda_general(q: Mapping[str, complex], N: float, budget: DefectBudget | None = None,
                   statistics=Statistics.BOSON, convention: str = "site") -> GeneralBound:
    budget = budget or DefectBudget()
    if N <= 0:
        raise ValueError("need <N> > 0")
    s_ab, s_aa = _sums(q)
    s = _phi_sign(statistics, convention)
    eps, r = budget.epsilon, budget.r
    if as_statistics(statistics) is Statistics.BOSON:
        rest = (2 - 4 * eps * r * r) * N - s_aa
    else:
        rest = s_aa - 4 * eps * N
    f = {"phi+": (s * s_ab + rest) / (2 * N), "phi-": (-s * s_ab + rest) / (2 * N)}
    lam = {k: 2 * v - 1 for k, v in f.items()}
    alt = {k: 1 - 2 * v for k, v in f.items()}
    best = max(f.values())
    eof = eof_from_fidelity(min(best, 1.0)) if best > 0.5 else 0.0
    return GeneralBound(f, lam, alt, eof)


# --- global rotations -------------------------------------------------------------


def _is_unitary(U: np.ndarray) -> bool:
    return U.shape == (2, 2) and np.abs(U.conj().T @ U - np.eye(2)).max() < 1e-12


def rotate_state(rho: State, U) -> State:
    """Apply ``U`` to the internal levels of every atom: ``c_s^dag -> sum_t U[t, s] c_t^dag``."""
    U = np.asarray(U, dtype=complex)
    if not _is_unitary(U):
        raise ValueError("U must be a 2x2 unitary")
    if isinstance(rho, DensityOperator):
        comps = [(w, rotate_state(s, U)) for w, s in rho.components()]
        return DensityOperator.mixture([s for _, s in comps], [w for w, _ in comps])
    geom = rho.geometry
    L = geom.L
    fermion = rho.fermionic
    out: dict[tuple, complex] = {}
    for key, amp in rho.amplitudes.items():
        amps = {geom.vacuum_key(): complex(amp)}
        for j in reversed(range(2 * L)):
            n = key[j]
            site, src = j % L, j // L
            for _ in range(n):
                nxt: dict = {}
                for t in (0, 1):
                    coef = U[t, src]
                    if coef == 0:
                        continue
                    part, _ = _ladder(amps, t * L + site, True, fermion, None)
                    for k, v in part.items():
                        nxt[k] = nxt.get(k, 0.0) + coef * v
                amps = nxt
            if n > 1:
                amps = {k: v / math.sqrt(math.factorial(n)) for k, v in amps.items()}
        for k, v in amps.items():
            out[k] = out.get(k, 0.0) + v
    out = {k: v for k, v in out.items() if abs(v) > 1e-14}
    cap = max([geom.max_occ] + [max(k) for k in out])
    g2 = geom if cap == geom.max_occ else geom.with_cap(cap)
    return ManyBodyState(g2, rho.statistics, out, rho.truncated)


def rotate_pair(rab, U) -> BipartiteReducedState | DensityOperator:
    """``(U x U) rho_AB (U x U)^dag`` on the pair block."""
    block = _pair_block(rab)
    rotated = rotate_state(block, U)
    if isinstance(rab, BipartiteReducedState):
        return BipartiteReducedState(rab.x, rotated, rab.source_L)
    return rotated


def bell_rotation(target) -> np.ndarray:
    """Unitary ``U`` whose rotated ``phi+`` fidelity equals the ``target`` fidelity."""
    target = BellLabel(target)
    s = 1 / math.sqrt(2)
    if target is BellLabel.PHI_PLUS:
        return np.eye(2, dtype=complex)
    if target is BellLabel.PSI_PLUS:
        return s * np.array([[1, 1j], [1j, 1]])
    if target is BellLabel.PSI_MINUS:
        return s * np.array([[1, 1], [1, -1]], dtype=complex)
    raise ValueError("phi- is invariant under U x U and cannot be rotated into phi+")


def internal_witnesses(rho: State, x: int, restricted: bool = True) -> dict[str, complex]:
    return {ch: q_internal_direct(rho, x, restricted, ch) for ch in CHANNELS}


def rotate_witness(rho, U, x: int | None = None, statistics=None, convention: str = "site") -> "WitnessReport":
    """Witness report after the global rotation ``U x ... x U``.

    ``rho`` may be a lattice state (rotated globally) or a reduced pair state
    (rotated as ``U x U``); for the latter the witnesses are read off the
    rotated pair block directly.
    """
    if not isinstance(rho, BipartiteReducedState):
        return witness_report(rotate_state(rho, U), 1 if x is None else x, convention=convention)
    return witness_report_from_pair(rotate_pair(rho, U), statistics or rho.block.statistics, convention)


# --- local witness operators on the pair block -----------------------------------


def pair_witnesses(rab) -> dict[str, complex]:
    """``<a_A^dag a_B>``, the four internal witnesses and ``<n_A>`` on a pair block."""
    block = _pair_block(rab)
    out = {ch: expectation(block, internal_term(0, 0, 1, 2, ch)) for ch in CHANNELS}
    out["Q"] = expectation(block, [("create", 0, "a"), ("annihilate", 1, "a")])
    out["nA"] = (expectation(block, [("create", 0, "a"), ("annihilate", 0, "a")])
                 + expectation(block, [("create", 0, "b"), ("annihilate", 0, "b")]))
    return out


def witness_operator_value(values: Mapping[str, complex], statistics, sign: int = 1,
                           convention: str = "site") -> float:
    """``<W>`` with ``f = 1/2 + <W> / (2 N)`` in the one-atom regime."""
    s_ab, s_aa = _sums(values)
    s = sign * _phi_sign(statistics, convention)
    n = float(np.real(values["nA"]))
    if as_statistics(statistics) is Statistics.BOSON:
        return s * s_ab + n - s_aa
    return s * s_ab + s_aa - n


# --- number-rule EoF oracle --------------------------------------------------------


@dataclass(frozen=True)
class SectorEoF:
    n: int
    weight: float
    value: float
    lower: float
    method: str

    @property
    def exact(self) -> bool:
        return self.method in ("product", "pure", "wootters")


@dataclass(frozen=True)
class SSREoF:
    """EoF respecting the total-number rule: ``sum_n p_n E(rho_n / p_n)``.

    ``value`` uses exact sector evaluations where available and a randomized
    decomposition search (an upper estimate) elsewhere. ``lower`` replaces
    every inexact sector by a certified lower bound.
    """

    value: float
    lower: float
    sectors: tuple

    @property
    def exact(self) -> bool:
        return all(s.exact for s in self.sectors)


def _bipartite(block: DensityOperator, site_major: bool = True):
    """Dense matrix on ``H_A x H_B`` from a pair block (site-major signs)."""
    fermion = block.fermionic and site_major
    a_cfg = sorted({(k[0], k[2]) for k in block.basis})
    b_cfg = sorted({(k[1], k[3]) for k in block.basis})
    ia = {c: i for i, c in enumerate(a_cfg)}
    ib = {c: i for i, c in enumerate(b_cfg)}
    dA, dB = len(a_cfg), len(b_cfg)
    pos = [ia[(k[0], k[2])] * dB + ib[(k[1], k[3])] for k in block.basis]
    sgn = np.array([_site_sign(k, fermion) for k in block.basis], dtype=float)
    mat = np.zeros((dA * dB, dA * dB), dtype=complex)
    mat[np.ix_(pos, pos)] = block.matrix * np.outer(sgn, sgn)
    return mat, dA, dB


def _partial(mat, dA, dB, keep: str):
    t = mat.reshape(dA, dB, dA, dB)
    return np.einsum("ijkj->ik", t) if keep == "A" else np.einsum("ijil->jl", t)


def _support(mat, tol=1e-12):
    vals, vecs = np.linalg.eigh(mat)
    keep = vals > tol * max(1.0, vals.max(initial=0.0))
    return vecs[:, keep]


def _pure_entropy(vec, dA, dB) -> float:
    s = np.linalg.svd(vec.reshape(dA, dB), compute_uv=False) ** 2
    return _entropy_bits(s / s.sum())


def eof_exact(mat: np.ndarray, dA: int, dB: int) -> tuple[float, str] | None:
    """Exact EoF when the state is product-supported, pure, or two-qubit-supported."""
    mat = mat / np.trace(mat).real
    UA = _support(_partial(mat, dA, dB, "A"))
    UB = _support(_partial(mat, dA, dB, "B"))
    rA, rB = UA.shape[1], UB.shape[1]
    if rA <= 1 or rB <= 1:
        return 0.0, "product"
    vals, vecs = np.linalg.eigh(mat)
    if (vals > 1e-12).sum() == 1:
        return _pure_entropy(vecs[:, -1], dA, dB), "pure"
    if rA <= 2 and rB <= 2:
        P = np.kron(UA, UB)
        small = P.conj().T @ mat @ P
        return wootters_eof(small), "wootters"
    return None


def eof_upper_search(mat: np.ndarray, dA: int, dB: int, restarts: int = 4, seed=0,
                     extra: int = 1, maxiter: int = 300) -> float:
    """Smallest average pure-state entanglement over searched decompositions.

    Decompositions are ``psi_j = sum_i V[j, i] sqrt(p_i) e_i`` with ``V`` the
    first columns of a unitary; this can only overestimate the EoF.
    """
    mat = mat / np.trace(mat).real
    vals, vecs = np.linalg.eigh(mat)
    keep = vals > 1e-13
    base = vecs[:, keep] * np.sqrt(vals[keep])
    k = base.shape[1]
    m = k + extra
    n_par = m * m
    iu = np.triu_indices(m, 1)

    def unitary(p):
        H = np.zeros((m, m), dtype=complex)
        H[iu] = p[: len(iu[0])] + 1j * p[len(iu[0]): 2 * len(iu[0])]
        H = H - H.conj().T
        H[np.diag_indices(m)] = 1j * p[2 * len(iu[0]):]
        return expm(H)

    def cost(p):
        V = unitary(p)[:, :k]
        psi = V @ base.T
        probs = np.einsum("ji,ji->j", psi, psi.conj()).real
        s = np.linalg.svd(psi.reshape(m, dA, dB), compute_uv=False) ** 2
        total = 0.0
        for pj, sj in zip(probs, s):
            if pj > 1e-14:
                total += pj * _entropy_bits(sj / sj.sum())
        return total

    rng = np.random.default_rng(seed)
    best = cost(np.zeros(n_par))
    for r in range(restarts):
        x0 = np.zeros(n_par) if r == 0 else rng.normal(scale=1.0, size=n_par)
        res = minimize(cost, x0, method="L-BFGS-B", options={"maxiter": maxiter})
        best = min(best, float(res.fun))
    return best


def local_number_lower(block: DensityOperator) -> float:
    """Certified lower bound: measure the atom number on A, then evaluate exactly.

    The local number measurement is a local operation, so the average
    entanglement of the post-measurement blocks cannot exceed the original.
    Blocks without an exact evaluation contribute zero.
    """
    tr = block.trace()
    total = 0.0
    for nA in sorted({k[0] + k[2] for k in block.basis}):
        try:
            part = sub_block(block, lambda k: k[0] + k[2] == nA)
        except ValueError:
            continue
        mat, dA, dB = _bipartite(part)
        ex = eof_exact(mat, dA, dB)
        if ex is not None:
            total += part.trace() / tr * ex[0]
    return total


def sector_eof(block: DensityOperator, search: bool = True, restarts: int = 4, seed=0) -> tuple[float, float, str]:
    mat, dA, dB = _bipartite(block)
    ex = eof_exact(mat, dA, dB)
    if ex is not None:
        return ex[0], ex[0], ex[1]
    lower = local_number_lower(block)
    if not search:
        return float("nan"), lower, "unevaluated"
    upper = eof_upper_search(mat, dA, dB, restarts=restarts, seed=seed)
    return upper, min(lower, upper), "search"


def ssr_eof(rho, search: bool = True, restarts: int = 4, seed=0) -> SSREoF:
    """Number-rule EoF of a normalized pair state (or of ``rho'_AB`` for a reduced state)."""
    block = project_nonzero(rho) if isinstance(rho, BipartiteReducedState) else _pair_block(rho)
    if block.mixes_sectors:
        raise ValueError("pair state carries cross-sector coherences")
    tr = block.trace()
    out = []
    for n in sorted({sum(k) for k in block.basis}):
        part = sub_block(block, lambda k, n=n: sum(k) == n) if len(block.atom_numbers()) > 1 else block
        p = part.trace() / tr
        if p <= 1e-15:
            continue
        value, lower, method = sector_eof(part, search, restarts, seed)
        out.append(SectorEoF(n, p, value, lower, method))
    value = sum(s.weight * s.value for s in out)
    lower = sum(s.weight * s.lower for s in out)
    return SSREoF(float(value), float(lower), tuple(out))


# --- appendix error budgets ---------------------------------------------------------


@dataclass(frozen=True)
class OffDiagonalBudget:
    """Certified error on the off-diagonal element and the measured sector pieces."""

    certified: float
    rho2_bound: float
    high_bound: float
    trace_high_bound: float
    measured: dict
    trace_high: float

    @property
    def rho2_measured(self) -> float:
        return self.measured.get(2, 0.0)

    @property
    def high_measured(self) -> float:
        return sum(v for n, v in self.measured.items() if n > 2)

    @property
    def holds(self) -> bool:
        tol = 1e-9
        return (self.rho2_measured <= self.rho2_bound + tol and self.high_measured <= self.high_bound + tol
                and self.trace_high <= self.trace_high_bound + tol)


def appendix_q2_bound(rab: BipartiteReducedState, budget: DefectBudget, N: float) -> OffDiagonalBudget:
    eps, r = budget.epsilon, budget.r
    measured = {}
    for sec in rab.sectors:
        measured[sec.n] = abs(expectation(sec.block, [("create", 0, "a"), ("annihilate", 1, "a")]))
    trace_high = rab.sector_trace(lambda n: n > 2)
    return OffDiagonalBudget(
        certified=defect_error(N, budget),
        rho2_bound=4 * math.sqrt(eps) * N,
        high_bound=2 * eps * r * N,
        trace_high_bound=2 * eps * N,
        measured=measured,
        trace_high=trace_high,
    )


@dataclass(frozen=True)
class FidelityBudget:
    budget: float
    W_full: float
    W_rho2: float
    trace_high: float
    trace_high_bound: float
    N: float

    @property
    def deviation(self) -> float:
        return abs(self.W_full - self.W_rho2)

    @property
    def f_error(self) -> float:
        """Budget expressed on the fidelity scale ``f = 1/2 + W / (2 N)``."""
        return self.budget / (2 * self.N)

    @property
    def holds(self) -> bool:
        return self.deviation <= self.budget + 1e-9 and self.trace_high <= self.trace_high_bound + 1e-9


def appendix_fidelity_error(rab: BipartiteReducedState, budget: DefectBudget, N: float,
                            statistics=Statistics.BOSON, sign: int = 1,
                            convention: str = "site") -> FidelityBudget:
    """Error of the fidelity witness from sectors with more than two atoms.

    The budget is ``4 r^2 * 2 eps <N>`` for bosons and ``4 * 2 eps <N>`` for
    fermions, in the units of ``<W>``.
    """
    stats = as_statistics(statistics)
    scale = 4 * budget.r ** 2 if stats is Statistics.BOSON else 4
    full = witness_operator_value(pair_witnesses(rab), stats, sign, convention)
    sec2 = rab.sector(2)
    w2 = witness_operator_value(pair_witnesses(sec2.block), stats, sign, convention) if sec2 else 0.0
    return FidelityBudget(
        budget=scale * 2 * budget.epsilon * N,
        W_full=full,
        W_rho2=w2,
        trace_high=rab.sector_trace(lambda n: n > 2),
        trace_high_bound=2 * budget.epsilon * N,
        N=N,
    )


# --- reports ------------------------------------------------------------------------


@dataclass
class WitnessReport:
    """All witness values and bounds for one offset ``x``.

    ``bounds`` maps a regime name to its EoF lower bound; ``assumptions``
    records what each regime presumes; ``eof_lower`` is the best bound whose
    assumptions were verified (state input) or declared (record input).
    """

    x: int
    statistics: str
    N: float
    Q_x: complex
    Q: dict
    lambda_bound: float
    lambda_clamped: bool
    fidelities: dict = field(default_factory=dict)
    rotated_fidelities: dict = field(default_factory=dict)
    Lambda: dict = field(default_factory=dict)
    Lambda_alt: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    assumptions: dict = field(default_factory=dict)
    applicable: list = field(default_factory=list)
    eof_lower: float = 0.0
    budget: dict = field(default_factory=dict)
    source: str = "state"

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, complex):
                return {"re": v.real, "im": v.imag}
            if isinstance(v, dict):
                return {k: enc(u) for k, u in v.items()}
            if isinstance(v, (list, tuple)):
                return [enc(u) for u in v]
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {k: enc(v) for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


REGIME_ASSUMPTIONS = {
    "occupation": "single level, at most one atom per site",
    "occupation_defects": "single level, expected defects <= eps <N>, occupations <= r",
    "one_atom_fidelity": "exactly one atom on every site",
    "general": "expected defects <= eps <N>, occupations <= r; bounds rho''_AB",
}


def _assemble(x, stats, N, Qx, q, budget, regimes, source, convention="site") -> WitnessReport:
    lam = occupation_lambda(Qx, N) if N > 0 else LambdaEstimate(0.0, 0.0, False)
    rep = WitnessReport(x=x, statistics=stats.value, N=N, Q_x=complex(Qx), Q={k: complex(v) for k, v in q.items()},
                        lambda_bound=lam.value, lambda_clamped=lam.clamped, source=source,
                        budget={"epsilon": budget.epsilon, "r": budget.r, "D": budget.D})
    if N <= 0:
        return rep
    rep.bounds["occupation"] = eof_bound_occupation(Qx, N)
    rep.bounds["occupation_defects"] = eof_bound_occupation_defects(Qx, N, budget)
    if q:
        fid = fidelity_one_atom(q, N, stats, convention)
        rep.fidelities = fid
        rep.bounds["one_atom_fidelity"] = max(eof_from_fidelity(min(max(f, 0.0), 1.0)) for f in fid.values())
        gen = lambda_general(q, N, budget, stats, convention)
        rep.Lambda, rep.Lambda_alt = gen.Lambda, gen.Lambda_alt
        rep.bounds["general"] = gen.eof
    rep.assumptions = {k: REGIME_ASSUMPTIONS[k] for k in rep.bounds}
    rep.applicable = [r for r in regimes if r in rep.bounds]
    rep.eof_lower = max([rep.bounds[r] for r in rep.applicable], default=0.0)
    return rep


def detect_regimes(rho: State) -> list[str]:
    keys = rho.amplitudes if isinstance(rho, ManyBodyState) else rho.basis
    L = rho.geometry.L
    single = all(not any(k[L:]) for k in keys)
    hardcore = all(max(k, default=0) <= 1 for k in keys)
    regimes = []
    if single and hardcore:
        regimes.append("occupation")
    if single:
        regimes.append("occupation_defects")
    if one_atom_per_site(rho):
        regimes.append("one_atom_fidelity")
    if not single:
        regimes.append("general")
    return regimes


def witness_report(rho: State, x: int, budget: DefectBudget | None = None, rotations: bool = False,
                   convention: str = "site") -> WitnessReport:
    """Witnesses via the direct operator sums, with regimes checked on the state."""
    stats = rho.statistics
    if budget is None:
        budget = DefectBudget.certified(rho)
    N = total_number(rho)
    Qx = q_occupation_direct(rho, x)
    L = rho.geometry.L
    two_level = any(any(k[L:]) for k in (rho.amplitudes if isinstance(rho, ManyBodyState) else rho.basis))
    q = {}
    if two_level:
        restricted = one_atom_per_site(rho)
        q = internal_witnesses(rho, x, restricted)
    rep = _assemble(x, stats, N, Qx, q, budget, detect_regimes(rho), "state", convention)
    if rotations and two_level and N > 0 and one_atom_per_site(rho):
        for target in (BellLabel.PSI_PLUS, BellLabel.PSI_MINUS):
            rot = rotate_state(rho, bell_rotation(target))
            fq = fidelity_one_atom(internal_witnesses(rot, x, True), N, stats, convention)
            rep.rotated_fidelities[target.value] = fq["phi+"]
        best = max(list(rep.fidelities.values()) + list(rep.rotated_fidelities.values()))
        rep.bounds["one_atom_fidelity"] = eof_from_fidelity(min(max(best, 0.0), 1.0))
        rep.eof_lower = max([rep.bounds[r] for r in rep.applicable], default=0.0)
    return rep


def witness_report_from_record(record, x: int, regimes=("occupation",), budget: DefectBudget | None = None,
                               statistics=Statistics.BOSON, convention: str = "site") -> WitnessReport:
    """Witnesses via quadrature of a measurement record; regimes are declared, not checked."""
    from .tof_observables import q_internal_integral_all, q_occupation_integral

    budget = budget or DefectBudget()
    N = sum(q_occupation_integral(record, 0, lv).real for lv in record.densities)
    Qx = q_occupation_integral(record, x, "a") if "a" in record.densities else 0j
    q = q_internal_integral_all(record, x)
    if set(q) != set(CHANNELS):
        q = {}
        if any(r in regimes for r in ("one_atom_fidelity", "general")):
            raise KeyError("internal-level bounds need all four correlation channels")
    return _assemble(x, as_statistics(statistics), N, Qx, q, budget, list(regimes), "record", convention)


def witness_report_from_pair(rab: BipartiteReducedState, statistics, convention: str = "site") -> WitnessReport:
    vals = pair_witnesses(rab)
    N = float(np.real(vals["nA"]))
    q = {ch: vals[ch] for ch in CHANNELS}
    return _assemble(rab.x, as_statistics(statistics), N, vals["Q"], q, DefectBudget(),
                     ["one_atom_fidelity"], "pair", convention)


__all__ = [
    "binary_entropy", "eof_from_concurrence", "concurrence", "wootters_eof", "qubit_block",
    "bell_fidelities", "eof_bound_occupation", "eof_bound_occupation_defects", "defect_error",
    "eof_from_fidelity", "fidelity_one_atom", "lambda_general", "rotate_state", "rotate_witness",
    "bell_rotation", "ssr_eof", "appendix_q2_bound", "appendix_fidelity_error", "witness_report",
    "witness_report_from_record", "WitnessReport", "SSREoF",
]
