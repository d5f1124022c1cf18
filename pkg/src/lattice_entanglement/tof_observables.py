"""
Momentum-space observables after long time of flight.

Two independent routes to the Fourier witnesses are provided:

* the *integral* route simulates (or ingests) a :class:`MeasurementRecord`
  with ``n_x(k)`` and ``c_xy(k, k')`` on a momentum grid and evaluates the
  Fourier integrals by quadrature;
* the *direct* route sums two- and four-point expectation values on the
  lattice with the ladder-operator algebra.

The envelope of site ``n`` is ``w_n(k) = w_0(k) exp(-i k n d)``. On a ring the
natural momentum grid is the set of ring momenta ``2 pi j / (L d)``; with that
grid and the ideal band-limited envelope, quadrature reproduces the periodic
site sums exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .fock_space import (
    LEVELS,
    LatticeGeometry,
    ManyBodyState,
    State,
    _ladder,
    components,
    expectation,
    hopping,
    require_physical,
)

CHANNELS = ("aa", "ab", "ba", "bb")
NORMALIZATION_TOL = 1e-6


class GridError(ValueError):
    """The momentum grid cannot deliver the declared quadrature tolerance."""


@dataclass(frozen=True)
class WannierEnvelope:
    """Momentum-space envelope ``w_0(k)`` of a single-site orbital.

    ``ideal`` is flat, ``|w_0|^2 = d / 2 pi`` on the first Brillouin zone, which
    makes displaced orbitals exactly orthogonal. ``gaussian`` has
    ``|w_0(k)|^2 = (sigma / sqrt(pi)) exp(-k^2 sigma^2)``, with overlap
    ``exp(-(D d)^2 / (4 sigma^2))`` between orbitals ``D`` sites apart.
    """

    model: str = "ideal"
    d: float = 1.0
    sigma: float | None = None

    def __post_init__(self):
        if self.model not in ("ideal", "gaussian"):
            raise ValueError(f"unknown envelope model {self.model!r}")
        if self.model == "gaussian":
            if self.sigma is None:
                object.__setattr__(self, "sigma", 0.2 * self.d)
            if self.sigma <= 0:
                raise ValueError("sigma must be positive")

    def intensity(self, k) -> np.ndarray:
        """``|w_0(k)|^2``."""
        k = np.asarray(k, dtype=float)
        if self.model == "ideal":
            inside = np.abs(k) <= np.pi / self.d * (1 + 1e-12)
            return np.where(inside, self.d / (2 * np.pi), 0.0)
        s = self.sigma
        return s / np.sqrt(np.pi) * np.exp(-(k * s) ** 2)

    def k_support(self, rel: float = 1e-10) -> float:
        """Momentum beyond which the intensity is below ``rel`` of its peak."""
        if self.model == "ideal":
            return np.pi / self.d
        return math.sqrt(-math.log(rel)) / self.sigma

    def overlap(self, displacement: int) -> float:
        """``int dk |w_0|^2 exp(-i k D d)`` in the continuum."""
        if self.model == "ideal":
            return 1.0 if displacement == 0 else 0.0
        return math.exp(-(displacement * self.d) ** 2 / (4 * self.sigma ** 2))

    def to_dict(self) -> dict:
        return {"model": self.model, "d": self.d, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, data: Mapping) -> "WannierEnvelope":
        return cls(data["model"], float(data["d"]), data.get("sigma"))


@dataclass(frozen=True, eq=False)
class MomentumGrid:
    """Uniform momentum samples with trapezoid weights."""

    k: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if k.ndim != 1 or k.shape != w.shape or k.size < 2:
            raise ValueError("grid needs matching 1D k and weight arrays")
        steps = np.diff(k)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps.mean():
            raise ValueError("grid must be uniform and increasing")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "weights", w)

    @property
    def dk(self) -> float:
        return float(self.k[1] - self.k[0])

    @property
    def k_max(self) -> float:
        return float(max(-self.k[0], self.k[-1]))

    def __len__(self):
        return self.k.size

    @classmethod
    def uniform(cls, k) -> "MomentumGrid":
        k = np.asarray(k, dtype=float)
        w = np.full(k.shape, k[1] - k[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return cls(k, w)

    @classmethod
    def for_ring(cls, geom: LatticeGeometry, envelope: WannierEnvelope,
                 zones: int | None = None) -> "MomentumGrid":
        """Ring momenta ``2 pi j / (L d)`` covering ``zones`` Brillouin zones.

        When the end points land on the grid they get half weight; otherwise
        the rule is the periodic rectangle rule, which is the trapezoid rule of
        a periodic integrand.
        """
        d = geom.d
        if zones is None:
            zones = 1 if envelope.model == "ideal" else math.ceil(envelope.k_support() * d / np.pi)
        if envelope.model == "ideal" and zones != 1:
            raise GridError("the ideal envelope lives on exactly one Brillouin zone")
        dk = 2 * np.pi / (geom.L * d)
        span = zones * geom.L
        J = span // 2
        k = dk * np.arange(-J, J + 1)
        w = np.full(k.shape, dk)
        if span % 2 == 0:
            w[0] *= 0.5
            w[-1] *= 0.5
        return cls(k, w)

    def normalization(self, envelope: WannierEnvelope) -> float:
        return float(np.sum(self.weights * envelope.intensity(self.k)))

    def check(self, envelope: WannierEnvelope, tol: float = NORMALIZATION_TOL) -> None:
        norm = self.normalization(envelope)
        if abs(norm - 1.0) > tol:
            raise GridError(f"envelope quadrature gives {norm:.3e}, need 1 within {tol:g}")
        edge = envelope.intensity(np.array([self.k[0], self.k[-1]]))
        peak = envelope.intensity(np.array([0.0]))[0]
        if envelope.model == "gaussian" and edge.max() > 1e-10 * peak:
            raise GridError("grid does not cover the envelope support")

    def to_dict(self) -> dict:
        return {"k": self.k.tolist(), "weights": self.weights.tolist(),
                "dk": self.dk, "k_max": self.k_max}

    @classmethod
    def from_dict(cls, data: Mapping) -> "MomentumGrid":
        if "weights" in data:
            return cls(np.array(data["k"]), np.array(data["weights"]))
        return cls.uniform(np.array(data["k"]))


@dataclass(eq=False)
class MeasurementRecord:
    """Momentum densities and correlations on one grid.

    ``densities`` maps a level to ``n(k)``; ``correlations`` maps a channel
    such as ``"ab"`` to the complex array ``c_ab(k, k')``.
    """

    grid: MomentumGrid
    d: float
    densities: dict[str, np.ndarray] = field(default_factory=dict)
    correlations: dict[str, np.ndarray] = field(default_factory=dict)
    provenance: str = "simulated"
    shots: int | None = None
    envelope: WannierEnvelope | None = None
    L: int | None = None

    def __post_init__(self):
        if self.provenance not in ("simulated", "ingested"):
            raise ValueError("provenance must be 'simulated' or 'ingested'")
        n = len(self.grid)
        for level, arr in self.densities.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"density {level} does not match the grid")
            if arr.min(initial=0.0) < -1e-9:
                raise ValueError(f"density {level} is negative")
            self.densities[level] = arr
        for ch, arr in self.correlations.items():
            arr = np.asarray(arr, dtype=complex)
            if arr.shape != (n, n):
                raise ValueError(f"correlation {ch} does not match the grid")
            if ch[0] == ch[1] and np.abs(np.diag(arr).imag).max() > 1e-9:
                raise ValueError(f"c_{ch}(k, k) must be real")
            self.correlations[ch] = arr

    def metadata(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "d": self.d,
            "L": self.L,
            "provenance": self.provenance,
            "shots": self.shots,
            "envelope": None if self.envelope is None else self.envelope.to_dict(),
            "densities": sorted(self.densities),
            "correlations": sorted(self.correlations),
        }


# --- lattice correlators ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class Correlators:
    """``G[x][n, m] = <x_n^dag x_m>`` and ``T[xy][n, m, n', m'] = <x_n^dag x_m y_n'^dag y_m'>``."""

    G: dict
    T: dict


def _hop_images(psi: ManyBodyState, level: str):
    geom = psi.geometry
    L = geom.L
    out = {}
    for n in range(L):
        for m in range(L):
            amps, _ = _ladder(psi.amplitudes, geom.mode(m, level), False, psi.fermionic, None)
            amps, _ = _ladder(amps, geom.mode(n, level), True, psi.fermionic, None)
            out[n, m] = amps
    return out


def correlators(rho: State, levels: Sequence[str] = LEVELS, four_point: bool = True) -> Correlators:
    """Two- and four-point tensors by dense inner products of hopping images."""
    L = rho.geometry.L
    G = {lv: np.zeros((L, L), dtype=complex) for lv in levels}
    T = {x + y: np.zeros((L,) * 4, dtype=complex) for x in levels for y in levels} if four_point else {}
    for w, psi in components(rho):
        images = {lv: _hop_images(psi, lv) for lv in levels}
        keys = set(psi.amplitudes)
        for lv in levels:
            for amps in images[lv].values():
                keys.update(amps)
        index = {k: i for i, k in enumerate(keys)}
        vec = np.zeros(len(index), dtype=complex)
        for k, v in psi.amplitudes.items():
            vec[index[k]] = v
        H = {}
        for lv in levels:
            mat = np.zeros((L * L, len(index)), dtype=complex)
            for (n, m), amps in images[lv].items():
                row = n * L + m
                for k, v in amps.items():
                    mat[row, index[k]] = v
            H[lv] = mat
            G[lv] += w * (mat @ vec.conj()).reshape(L, L)
        if four_point:
            for x in levels:
                # <x_n^dag x_m ...> uses the bra (x_m^dag x_n) psi
                bra = H[x].reshape(L, L, -1).transpose(1, 0, 2).reshape(L * L, -1).conj()
                for y in levels:
                    T[x + y] += w * (bra @ H[y].T).reshape(L, L, L, L)
    return Correlators(G, T)


def _phases(grid: MomentumGrid, L: int, d: float) -> np.ndarray:
    return np.exp(-1j * np.outer(grid.k, np.arange(L)) * d)


def momentum_density(rho: State, level: str, envelope: WannierEnvelope, grid: MomentumGrid,
                     corr: Correlators | None = None) -> np.ndarray:
    """``n(k) = sum_{n,m} w_n(k) w_m(k)^* <x_n^dag x_m>``."""
    geom = rho.geometry
    corr = corr or correlators(rho, (level,), four_point=False)
    E = _phases(grid, geom.L, geom.d)
    vals = np.einsum("kn,nm,km->k", E, corr.G[level], E.conj())
    if np.abs(vals.imag).max(initial=0.0) > 1e-10 * max(1.0, np.abs(vals).max(initial=0.0)):
        raise ArithmeticError("momentum density came out complex")
    return envelope.intensity(grid.k) * vals.real


def momentum_correlation(rho: State, levels: str, envelope: WannierEnvelope, grid: MomentumGrid,
                         corr: Correlators | None = None) -> np.ndarray:
    """``c_xy(k, k')`` from the four-index Wannier sum."""
    geom = rho.geometry
    corr = corr or correlators(rho, tuple(sorted(set(levels))))
    E = _phases(grid, geom.L, geom.d)
    T = corr.T[levels]
    A = np.einsum("kn,km,nmpq->kpq", E, E.conj(), T)
    c = np.einsum("kpq,lp,lq->kl", A, E, E.conj())
    W = envelope.intensity(grid.k)
    return W[:, None] * W[None, :] * c


def simulate_record(rho: State, envelope: WannierEnvelope, grid: MomentumGrid | None = None,
                    levels: Sequence[str] = LEVELS, with_correlations: bool = True) -> MeasurementRecord:
    """Evaluate every density and correlation channel of ``rho`` on ``grid``."""
    geom = rho.geometry
    grid = grid or MomentumGrid.for_ring(geom, envelope)
    grid.check(envelope)
    corr = correlators(rho, tuple(levels), four_point=with_correlations)
    dens = {lv: momentum_density(rho, lv, envelope, grid, corr) for lv in levels}
    cors = {}
    if with_correlations:
        cors = {x + y: momentum_correlation(rho, x + y, envelope, grid, corr) for x in levels for y in levels}
    return MeasurementRecord(grid, geom.d, dens, cors, "simulated", None, envelope, geom.L)


# --- witnesses ----------------------------------------------------------------


def _check_record(record: MeasurementRecord):
    if record.envelope is not None:
        record.grid.check(record.envelope)


def q_occupation_integral(record: MeasurementRecord, x: int, level: str = "a") -> complex:
    """``int dk exp(-i k x d) n(k)`` by quadrature."""
    if level not in record.densities:
        raise KeyError(f"record has no density for level {level!r}")
    _check_record(record)
    g = record.grid
    return complex(np.sum(g.weights * np.exp(-1j * g.k * x * record.d) * record.densities[level]))


def q_occupation_direct(rho: State, x: int, level: str = "a") -> complex:
    """``sum_m <a_m^dag a_{m+x}>`` around the ring."""
    require_physical(rho)
    L = rho.geometry.L
    return complex(sum(expectation(rho, hopping((m + x) % L, m, level)) for m in range(L)))


def q_internal_integral(record: MeasurementRecord, x: int, channel: str = "ab") -> complex:
    """Double Fourier integral of ``c_xy`` with phases ``exp(-i k x d) exp(+i k' x d)``.

    This sign choice matches the shift rule of the occupation witness, so the
    result is ``sum_{m,m'} <x_m^dag x_{m+x} y_{m'+x}^dag y_{m'}>``.
    """
    if channel not in record.correlations:
        raise KeyError(f"record has no correlation channel {channel!r}")
    _check_record(record)
    g = record.grid
    ph = g.weights * np.exp(-1j * g.k * x * record.d)
    return complex(ph @ record.correlations[channel] @ ph.conj())


def internal_term(m: int, mp: int, x: int, L: int, channel: str) -> list[tuple[str, int, str]]:
    """``x_m^dag x_{m+x} y_{m'+x}^dag y_{m'}`` as a product list."""
    X, Y = channel
    return [("create", m, X), ("annihilate", (m + x) % L, X),
            ("create", (mp + x) % L, Y), ("annihilate", mp, Y)]


def q_internal_direct(rho: State, x: int, restricted: bool = False, channel: str = "ab") -> complex:
    """Double site sum of four-point terms; ``restricted`` keeps only ``m = m'``."""
    require_physical(rho)
    L = rho.geometry.L
    pairs = [(m, m) for m in range(L)] if restricted else [(m, mp) for m in range(L) for mp in range(L)]
    return complex(sum(expectation(rho, internal_term(m, mp, x, L, channel)) for m, mp in pairs))


def q_internal_all(rho: State, x: int, restricted: bool = False) -> dict[str, complex]:
    return {ch: q_internal_direct(rho, x, restricted, ch) for ch in CHANNELS}


def q_internal_integral_all(record: MeasurementRecord, x: int) -> dict[str, complex]:
    return {ch: q_internal_integral(record, x, ch) for ch in CHANNELS if ch in record.correlations}


# --- finite statistics --------------------------------------------------------


def sample_shots(record: MeasurementRecord, shots: int, seed=None) -> MeasurementRecord:
    """Resample a record as if estimated from ``shots`` experimental runs.

    Densities: Poisson counts with mean ``shots * n(k) * w_k`` per bin.
    Correlations: Gaussian noise with the Poisson variance of the coincidence
    counts, ``|c| / (shots w_k w_k')``, on real and imaginary parts.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    w = record.grid.weights
    dens = {}
    for level in sorted(record.densities):
        lam = shots * np.clip(record.densities[level], 0.0, None) * w
        dens[level] = rng.poisson(lam) / (shots * w)
    cors = {}
    ww = np.outer(w, w)
    for ch in sorted(record.correlations):
        c = record.correlations[ch]
        std = np.sqrt(np.abs(c) / (shots * ww))
        noisy = c + std * rng.normal(size=c.shape) + 1j * std * rng.normal(size=c.shape)
        if ch[0] == ch[1]:
            noisy[np.diag_indices_from(noisy)] = noisy.diagonal().real
        cors[ch] = noisy
    return replace(record, densities=dens, correlations=cors, shots=shots)


def flatness_chi2(record: MeasurementRecord, level: str = "a") -> tuple[float, int]:
    """Pearson chi-square of shot counts against a flat (envelope-shaped) profile."""
    if record.shots is None or record.envelope is None:
        raise ValueError("need a shot-sampled record with a known envelope")
    g = record.grid
    shape = record.envelope.intensity(g.k) * g.weights
    mask = shape > 0
    counts = record.densities[level] * record.shots * g.weights
    total = counts[mask].sum()
    expected = total * shape[mask] / shape[mask].sum()
    chi2 = float(np.sum((counts[mask] - expected) ** 2 / expected))
    return chi2, int(mask.sum() - 1)


# --- serialization ------------------------------------------------------------


def record_to_json(record: MeasurementRecord, path) -> None:
    data = record.metadata()
    data["values"] = {
        "densities": {lv: arr.tolist() for lv, arr in record.densities.items()},
        "correlations": {ch: [arr.real.tolist(), arr.imag.tolist()] for ch, arr in record.correlations.items()},
    }
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True))


def record_from_json(path) -> MeasurementRecord:
    data = json.loads(Path(path).read_text())
    return _record_from_meta(data, data.get("values", {}))


def _record_from_meta(meta: Mapping, values: Mapping) -> MeasurementRecord:
    grid = MomentumGrid.from_dict(meta["grid"])
    env = meta.get("envelope")
    dens = {lv: np.array(arr, dtype=float) for lv, arr in values.get("densities", {}).items()}
    cors = {ch: np.array(re) + 1j * np.array(im) for ch, (re, im) in values.get("correlations", {}).items()}
    return MeasurementRecord(grid, float(meta["d"]), dens, cors, meta.get("provenance", "ingested"),
                             meta.get("shots"), None if env is None else WannierEnvelope.from_dict(env),
                             meta.get("L"))


CSV_HEADER = ["channel", "k", "k_prime", "value", "value_imag"]


def record_to_csv(record: MeasurementRecord, path) -> Path:
    """Long-format CSV plus a ``.json`` sidecar holding the grid metadata."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(CSV_HEADER)
        k = record.grid.k
        for level in sorted(record.densities):
            for kk, v in zip(k, record.densities[level]):
                out.writerow([f"n_{level}", repr(float(kk)), "", repr(float(v)), "0.0"])
        for ch in sorted(record.correlations):
            arr = record.correlations[ch]
            for i, kk in enumerate(k):
                for j, kp in enumerate(k):
                    v = arr[i, j]
                    out.writerow([f"c_{ch}", repr(float(kk)), repr(float(kp)), repr(float(v.real)), repr(float(v.imag))])
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(record.metadata(), indent=1, sort_keys=True))
    return sidecar


def record_from_csv(path, d: float | None = None, sidecar=None) -> MeasurementRecord:
    """Read the long-format CSV; grid metadata comes from the sidecar when present.

    Without a sidecar the grid is taken from the distinct ``k`` values with
    trapezoid weights, the record is marked ``ingested`` and ``d`` must be given.
    """
    path = Path(path)
    sidecar = Path(sidecar) if sidecar else path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else None
    rows: dict[str, list] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(CSV_HEADER) - set(reader.fieldnames):
            raise ValueError(f"CSV header must contain {CSV_HEADER}")
        for row in reader:
            rows.setdefault(row["channel"], []).append(row)
    if meta is None:
        if d is None:
            raise ValueError("lattice constant d is required without a sidecar")
        ks = sorted({float(r["k"]) for rs in rows.values() for r in rs})
        meta = {"grid": {"k": ks}, "d": d, "provenance": "ingested"}
    grid = MomentumGrid.from_dict(meta["grid"])
    index = {float(kk): i for i, kk in enumerate(grid.k)}
    n = len(grid)
    dens, cors = {}, {}
    for channel, rs in rows.items():
        kind, name = channel.split("_", 1)
        if kind == "n":
            arr = np.zeros(n)
            for r in rs:
                arr[index[float(r["k"])]] = float(r["value"])
            dens[name] = arr
        elif kind == "c":
            arr = np.zeros((n, n), dtype=complex)
            for r in rs:
                arr[index[float(r["k"])], index[float(r["k_prime"])]] = complex(float(r["value"]), float(r["value_imag"]))
            cors[name] = arr
        else:
            raise ValueError(f"unknown channel {channel!r}")
    env = meta.get("envelope")
    return MeasurementRecord(grid, float(meta["d"]), dens, cors, meta.get("provenance", "ingested"),
                             meta.get("shots"), None if env is None else WannierEnvelope.from_dict(env),
                             meta.get("L"))
