"""Dense Kronecker-product Fock space, used as an independent reference.

Modes follow the canonical order ``a_0 .. a_{L-1}, b_0 .. b_{L-1}``, mode 0
being the most significant digit of the dense index. Fermionic operators carry
an explicit Jordan-Wigner string of ``Z`` on all earlier modes.
"""

from __future__ import annotations

from functools import reduce

import numpy as np
import scipy.sparse as sp


class DenseFock:
    def __init__(self, L: int, cap: int, fermion: bool):
        self.L = L
        self.fermion = fermion
        self.local = 2 if fermion else cap + 1
        self.n_modes = 2 * L
        self.dim = self.local ** self.n_modes
        a = np.diag(np.sqrt(np.arange(1, self.local)), 1)
        self._a = sp.csr_matrix(a)
        self._z = sp.csr_matrix(np.diag([1.0, -1.0])) if fermion else None
        self._eye = sp.identity(self.local, format="csr")
        self._cache: dict = {}

    def mode(self, site: int, level: str) -> int:
        return (0 if level == "a" else 1) * self.L + site

    def annihilator(self, mode: int):
        if mode not in self._cache:
            factors = []
            for j in range(self.n_modes):
                if j == mode:
                    factors.append(self._a)
                elif self.fermion and j < mode:
                    factors.append(self._z)
                else:
                    factors.append(self._eye)
            self._cache[mode] = reduce(lambda x, y: sp.kron(x, y, format="csr"), factors)
        return self._cache[mode]

    def op(self, kind: str, site: int, level: str):
        c = self.annihilator(self.mode(site, level))
        return c.T.conj().tocsr() if kind == "create" else c

    def product(self, product):
        out = sp.identity(self.dim, format="csr", dtype=complex)
        for kind, site, level in product:
            out = out @ self.op(kind, site, level)
        return out

    def index(self, key) -> int:
        idx = 0
        for n in key:
            idx = idx * self.local + n
        return idx

    def vector(self, state) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        for key, amp in state.amplitudes.items():
            v[self.index(key)] = amp
        return v

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    def expect(self, vec: np.ndarray, product) -> complex:
        return complex(np.vdot(vec, self.product(product) @ vec))

    def site_major_pair(self, vec: np.ndarray, A: int, B: int) -> np.ndarray:
        """Unnormalized ``rho_(A,B)`` in site-major kets for one-atom-per-site vectors.

        Amplitudes ``<0| C_rest c_{B,t} c_{A,s} |psi>`` with the remaining
        sites emptied in a fixed order, so every rest configuration carries a
        consistent sign.
        """
        rest = [m for m in range(self.L) if m not in (A, B)]
        vac = self.vacuum()
        rho = np.zeros((4, 4), dtype=complex)
        for conf in range(2 ** len(rest)):
            amps = np.zeros(4, dtype=complex)
            for s in range(2):
                for t in range(2):
                    w = self.annihilator(self.mode(A, "ab"[s])) @ vec
                    w = self.annihilator(self.mode(B, "ab"[t])) @ w
                    for i, m in enumerate(rest):
                        w = self.annihilator(self.mode(m, "ab"[(conf >> i) & 1])) @ w
                    amps[2 * s + t] = np.vdot(vac, w)
            rho += np.outer(amps, amps.conj())
        return rho

    def delocalized_pair(self, vec: np.ndarray, x: int) -> np.ndarray:
        return sum(self.site_major_pair(vec, m, (m + x) % self.L) for m in range(self.L))
