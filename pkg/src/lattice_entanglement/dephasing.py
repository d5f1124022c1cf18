"""
Dephasing by a quadratic potential.

Evolving under ``exp(i t sum_m m^2 n_m)`` (both levels phased alike) gives the
internal-level cross term ``a_m^dag a_{m+x} b_{m'+x}^dag b_{m'}`` the phase
``exp(i t (g(m) - g(m')))`` with ``g(m) = m^2 - (m+x)^2`` on wrapped site
indices. Averaging over a schedule of times at which these integer phase
differences are full sets of roots of unity removes every ``m != m'`` term
and leaves the ``m == m'`` terms untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fock_space import DensityOperator, ManyBodyState, State, Statistics, site_occupations
from .tof_observables import q_internal_direct


def apply_quadratic_phase(rho: State, t: float) -> State:
    """Multiply each basis state by ``exp(i t sum_m m^2 n_m)``."""
    geom = rho.geometry
    if isinstance(rho, DensityOperator):
        ph = np.array([_phase(geom, k, t) for k in rho.basis])
        mat = ph[:, None] * rho.matrix * ph.conj()[None, :]
        return DensityOperator(geom, rho.statistics, rho.basis, mat)
    amps = {k: v * _phase(geom, k, t) for k, v in rho.amplitudes.items()}
    return rho._replace(amps)


def _phase(geom, key, t) -> complex:
    occ = site_occupations(geom, key)
    return np.exp(1j * t * sum(m * m * n for m, n in enumerate(occ)))


def phase_offsets(L: int, x: int) -> np.ndarray:
    """``g(m) = m^2 - ((m + x) mod L)^2`` for ``m = 0 .. L-1``."""
    m = np.arange(L)
    return m ** 2 - ((m + x) % L) ** 2


@dataclass(frozen=True)
class DephasingSchedule:
    """Evolution times ``t_j`` for offset ``x`` on a ring of ``L`` sites."""

    x: int
    L: int
    times: tuple

    @property
    def M(self) -> int:
        return len(self.times)

    def kernel(self, delta: int) -> complex:
        """``(1/M) sum_j exp(2 i delta x t_j)``."""
        t = np.asarray(self.times)
        return complex(np.exp(2j * delta * self.x * t).mean())

    def average(self, phase_difference: int) -> complex:
        t = np.asarray(self.times)
        return complex(np.exp(1j * phase_difference * t).mean())

    def to_dict(self) -> dict:
        return {"x": self.x, "L": self.L, "times": list(self.times)}

    @classmethod
    def from_dict(cls, data) -> "DephasingSchedule":
        return cls(int(data["x"]), int(data["L"]), tuple(float(t) for t in data["times"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def schedule_length(L: int, x: int) -> int:
    g = phase_offsets(L, x)
    ring = int(np.ptp(g)) if L > 1 else 0
    return max(ring, 2 * abs(x) * (L - 1)) + 1


def make_schedule(L: int, x: int, random_times: bool = False, M: int | None = None, seed=None) -> DephasingSchedule:
    """Uniform grid ``t_j = 2 pi j / M`` nulling every ring cross term.

    ``M`` exceeds both the spread of ``g`` and ``2 |x| (L - 1)``, so the
    schedule also nulls the kernel ``exp(2 i delta x t)`` for ``0 < |delta| < L``.
    ``random_times`` draws ``M`` uniform times instead (approximate nulling).
    """
    if L < 2:
        raise ValueError("need L >= 2")
    if x % L == 0:
        raise ValueError("offset x must be nonzero modulo L")
    g = phase_offsets(L, x)
    if len(set(g.tolist())) < L:
        raise ValueError(f"quadratic phases cannot separate all sites for L={L}, x={x}")
    need = schedule_length(L, x)
    M = need if M is None else M
    if M < need and not random_times:
        raise ValueError(f"schedule needs at least {need} times")
    if random_times:
        times = np.random.default_rng(seed).uniform(0, 2 * np.pi, size=M)
    else:
        times = 2 * np.pi * np.arange(M) / M
    return DephasingSchedule(x % L, L, tuple(float(t) for t in times))


def dephased_q_internal(rho: State, x: int, schedule: DephasingSchedule, channel: str = "ab") -> complex:
    """Schedule average of the unrestricted internal witness of the phased state."""
    L = rho.geometry.L
    if schedule.L != L or schedule.x != x % L:
        raise ValueError("schedule was built for a different ring or offset")
    vals = [q_internal_direct(apply_quadratic_phase(rho, t), x, False, channel) for t in schedule.times]
    return complex(np.mean(vals))


def correlated_defect_state(L: int = 4, x: int = 1, statistics="boson") -> ManyBodyState:
    """Superposition with a nonzero ``m != m'`` internal-level cross term.

    ``|a_{m+x} b_{m'}>`` with ``m' = m + x`` (a doubly occupied site) is
    superposed with ``|a_m b_{m'+x}>``; the cross term mapping one onto the
    other appears only in the unrestricted sum.
    """
    from .fock_space import LatticeGeometry, as_statistics, apply_ladder

    fermion = as_statistics(statistics) is Statistics.FERMION
    geom = LatticeGeometry(L, 1.0, 1 if fermion else 2)
    vac = ManyBodyState.vacuum(geom, statistics)
    m = 0
    mp = (m + x) % L
    k1 = apply_ladder(apply_ladder(vac, mp, "b", "create"), (m + x) % L, "a", "create")
    k2 = apply_ladder(apply_ladder(vac, (mp + x) % L, "b", "create"), m, "a", "create")
    return (k1 + k2).normalized()
