"""Momentum-space representation of lattice density matrices.

After time of flight the joint momentum density of a state ``rho`` is

    n(k) ∝ prod_i |w(k_i)|^2 * sum_O A_O * prod_b Phi_{U_b}(k_b)

where ``b`` runs over species, ``U_b`` is a multiset of per-atom position
shifts (an *orbit*: all permutations of a sorted shift tuple) and
``Phi_U(k) = sum_{u in perms(U)} exp(i u.k)``.  The coefficients ``A_O`` are
sums of density-matrix elements ``<x|rho|x + u>`` over first-quantized
configurations, including exchange signs for fermions.  For one atom per
species an orbit is a single integer shift and ``A`` reduces to the plain
coherence sums ``sum_mn <mn|rho|m+a, n+b>``.

Momenta are dimensionless (``k * d``) throughout.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy import sparse

from .fock import FockBasis, Statistics, permutation_sign


@dataclass(frozen=True)
class WannierEnvelope:
    """Gaussian momentum envelope ``|w(k)|^2 = N(0, sigma_k^2)``.

    Parameters
    ----------
    sigma_k : float
        Momentum width in units of 1/d.  The default matches a harmonic
        approximation of a lattice site at depth 8 recoil energies.
    """

    sigma_k: float = float(np.pi * 8 ** 0.25 / np.sqrt(2))

    def __post_init__(self):
        if not self.sigma_k > 0:
            raise ValueError("sigma_k must be positive")

    @property
    def normalization(self) -> float:
        return 1.0 / (np.sqrt(2 * np.pi) * self.sigma_k)

    def density(self, k):
        """Single-atom probability density ``|w(k)|^2``."""
        k = np.asarray(k, dtype=float)
        return self.normalization * np.exp(-0.5 * (k / self.sigma_k) ** 2)

    def integral(self, gamma):
        """``∫ |w(k)|^2 cos(gamma k) dk`` in closed form."""
        g = np.asarray(gamma, dtype=float)
        return np.exp(-0.5 * (g * self.sigma_k) ** 2)

    def overlap_integral(self, gamma):
        """``f(gamma) = ∫ |w(k)|^4 cos(gamma k) dk`` in closed form."""
        g = np.asarray(gamma, dtype=float)
        f0 = 1.0 / (2 * np.sqrt(np.pi) * self.sigma_k)
        return f0 * np.exp(-0.25 * (g * self.sigma_k) ** 2)

    def cutoff(self, tol: float = 1e-8) -> float:
        """Squared-shift cutoff beyond which integrated terms fall below ``tol``."""
        return 2.0 * np.log(1.0 / tol) / self.sigma_k ** 2


class BlockOrbits:
    """Shift orbits of one species with ``N`` atoms on ``L`` sites.

    Attributes
    ----------
    orbits : list of tuple
        Sorted shift tuples, lexicographic.  Index ``zero`` is all zeros.
    raw : ndarray, shape (n_raw, N)
        Every distinct permutation of every orbit.
    raw_orbit : ndarray
        Orbit index of each raw shift.
    counts : ndarray, shape (n_orb, D, D)
        Signed counts ``C[U][S, T]``: number of orderings ``x`` of ``S``
        with ``x + U`` an ordering of ``T``, weighted by exchange signs.
    """

    def __init__(self, L: int, N: int, statistics=Statistics.DISTINGUISHABLE):
        self.L, self.N = int(L), int(N)
        self.statistics = Statistics.parse(statistics)
        states = list(itertools.combinations(range(L), N))
        self.states = states
        index = {s: i for i, s in enumerate(states)}
        ordered = np.array(list(itertools.permutations(range(L), N)), dtype=np.int16)
        if self.statistics is Statistics.FERMION:
            sign = np.array([permutation_sign(x) for x in ordered], dtype=np.int8)
        else:
            sign = np.ones(len(ordered), dtype=np.int8)
        state_of = np.array([index[tuple(sorted(x))] for x in ordered])

        diff = ordered[None, :, :] - ordered[:, None, :]
        ok = np.all(diff[..., 1:] >= diff[..., :-1], axis=-1) if N > 1 else \
            np.ones(diff.shape[:2], dtype=bool)
        xi, yi = np.nonzero(ok)
        reps = diff[xi, yi]
        orbits, orbit_of = np.unique(reps, axis=0, return_inverse=True)
        orbit_of = orbit_of.ravel()
        self.orbits = [tuple(int(v) for v in o) for o in orbits]
        self.index = {o: i for i, o in enumerate(self.orbits)}
        n_orb, D = len(self.orbits), len(states)
        counts = np.zeros((n_orb, D, D))
        np.add.at(counts, (orbit_of, state_of[xi], state_of[yi]),
                  sign[xi].astype(float) * sign[yi])
        self.counts = counts
        self.zero = self.index[(0,) * N]
        self.neg = np.array([self.index[tuple(sorted(-v for v in o))] for o in self.orbits])

        raw, raw_orbit = [], []
        for i, o in enumerate(self.orbits):
            for p in sorted(set(itertools.permutations(o))):
                raw.append(p)
                raw_orbit.append(i)
        self.raw = np.array(raw, dtype=float)
        self.raw_orbit = np.array(raw_orbit)
        self.multiplicity = np.bincount(self.raw_orbit, minlength=n_orb)
        self._pool = sparse.csr_matrix(
            (np.ones(len(raw)), (np.arange(len(raw)), self.raw_orbit)),
            shape=(len(raw), n_orb))

    def __len__(self):
        return len(self.orbits)

    @property
    def n_raw(self) -> int:
        return len(self.raw)

    @property
    def self_conjugate(self) -> np.ndarray:
        return self.neg == np.arange(len(self))

    def pool(self, values):
        """Sum per-raw-shift columns into orbit columns."""
        return np.asarray((self._pool.T @ np.asarray(values).T).T)

    def features(self, k) -> np.ndarray:
        """``Phi_U(k)`` for momenta ``k`` of shape (n, N); returns (n, n_orb)."""
        k = np.atleast_2d(np.asarray(k, dtype=float))
        return self.pool(np.exp(1j * (k @ self.raw.T)))

    def integrated(self, envelope: WannierEnvelope, delta_c: float | None = None):
        """``mu[U] = sum_{u in U} prod_i I(u_i)``, dropping terms with ``|u|^2 > delta_c``."""
        w = np.prod(envelope.integral(self.raw), axis=1)
        if delta_c is not None:
            w = np.where(np.sum(self.raw ** 2, axis=1) > delta_c, 0.0, w)
        return np.bincount(self.raw_orbit, weights=w, minlength=len(self))

    def gram(self, envelope: WannierEnvelope, chunk: int = 2048) -> np.ndarray:
        """``K[U, U'] = sum_{u in U, u' in U'} prod_i I(u_i - u'_i)``."""
        s2 = envelope.sigma_k ** 2
        raw = self.raw
        sq = np.sum(raw ** 2, axis=1)
        K = np.zeros((len(self), len(self)))
        for a in range(0, len(raw), chunk):
            r = raw[a:a + chunk]
            d2 = sq[a:a + chunk, None] + sq[None, :] - 2 * r @ raw.T
            G = np.exp(-0.5 * s2 * np.maximum(d2, 0.0))
            rows = self.pool(G)
            np.add.at(K, self.raw_orbit[a:a + chunk], rows)
        return 0.5 * (K + K.T)


@lru_cache(maxsize=32)
def block_orbits(L: int, N: int, statistics: Statistics) -> BlockOrbits:
    return BlockOrbits(L, N, statistics)


class OrbitSpace:
    """Orbit tensor layout for a composite basis (one block per species)."""

    def __init__(self, basis: FockBasis):
        self.basis = basis
        self.block = block_orbits(basis.L, basis.N, basis.statistics)
        self.m = basis.n_species
        self.Z = float(factorial(basis.N) ** self.m)

    @property
    def blocks(self):
        return [self.block] * self.m

    @property
    def shape(self) -> tuple:
        return (len(self.block),) * self.m

    @property
    def zero(self) -> tuple:
        return (self.block.zero,) * self.m

    def negate(self, T: np.ndarray) -> np.ndarray:
        """Tensor with entries ``T[-O]``."""
        neg = self.block.neg
        out = T
        for ax in range(self.m):
            out = np.take(out, neg, axis=ax)
        return out

    def features(self, momenta) -> list:
        """Per-species ``Phi`` arrays for momenta of shape (n, m, N)."""
        k = np.asarray(momenta, dtype=float)
        return [self.block.features(k[:, b, :]) for b in range(self.m)]

    def contract(self, T: np.ndarray, feats) -> np.ndarray:
        """``sum_O T[O] prod_b feats[b][s, U_b]`` for every shot ``s``."""
        if self.m == 2:
            return np.sum((feats[0] @ T) * feats[1], axis=1)
        return np.einsum("su,sv,sw,uvw->s", feats[0], feats[1], feats[2], T, optimize=True)

    def gram(self, envelope: WannierEnvelope) -> np.ndarray:
        return self.block.gram(envelope)

    def kron_solve(self, T: np.ndarray, K: np.ndarray, inverse: bool = True) -> np.ndarray:
        """Apply ``(⊗ K^-1)`` (or ``⊗ K``) to an orbit tensor."""
        M = np.linalg.inv(K) if inverse else K
        out = T
        for ax in range(self.m):
            out = np.moveaxis(np.tensordot(M, out, axes=([1], [ax])), 0, ax)
        return out


def _pure_counts(psi: np.ndarray, C: np.ndarray, m: int) -> np.ndarray:
    """``sum_{X, X'} psi[X] conj(psi[X']) prod_b C[U_b][X_b, X'_b]`` by chained tensordots."""
    T = np.tensordot(C, psi, axes=([1], [0]))            # (u0, y0, x1..)
    T = np.tensordot(T, psi.conj(), axes=([1], [0]))     # (u0, x1.., y1..)
    for b in range(1, m):
        T = np.tensordot(T, C, axes=([b, m], [1, 2]))
        T = np.moveaxis(T, -1, b)
    return T


def _dense_counts(R: np.ndarray, C: np.ndarray, m: int) -> np.ndarray:
    # R has axes (x0.., y0..); each step consumes the leading x and y axes
    T = R
    for b in range(m):
        T = np.tensordot(T, C, axes=([0, m - b], [1, 2]))
    return T


def coherence_tensor(rho, space: OrbitSpace | None = None) -> np.ndarray:
    """Exact orbit coefficients ``A_O`` of a :class:`DensityMatrix`.

    ``A_O = Z^-1 sum_{X, X'} rho[X, X'] prod_b C_b[U_b][S_b, S'_b]`` with
    ``Z = (N!)^m``; ``A`` at the zero orbit equals the trace.
    """
    space = space or OrbitSpace(rho.basis)
    C = space.block.counts.astype(complex)
    m = space.m
    D = rho.basis.local_dim
    A = np.zeros(space.shape, dtype=complex)
    # high-rank mixtures of small spaces are cheaper as one dense contraction
    if rho.is_dense or (len(rho.weights) > D and rho.dim <= 2000):
        A += _dense_counts(rho.matrix.reshape((D,) * (2 * m)), C, m)
    else:
        for w, v in zip(rho.weights, rho.vectors.T):
            if w == 0:
                continue
            A += w * _pure_counts(v.reshape((D,) * m), C, m)
        if rho.white:
            tr = np.einsum("uaa->u", C).real
            t = tr
            for _ in range(m - 1):
                t = np.multiply.outer(t, tr)
            A += rho.white / rho.dim * t
    return A / space.Z


def momentum_density(rho, envelope: WannierEnvelope, space: OrbitSpace | None = None):
    """Normalized joint momentum density of all atoms.

    Returns a callable taking momenta of shape (n, m, N) (or (m, N) for a
    single point) and returning densities.  The Gaussian envelope is not
    exactly orthogonal across sites, so the sum is divided by its integral.
    """
    space = space or OrbitSpace(rho.basis)
    A = coherence_tensor(rho, space)
    mu = space.block.integrated(envelope)
    norm = A
    for _ in range(space.m):
        norm = np.tensordot(norm, mu, axes=([0], [0]))
    norm = float(np.real(norm))

    def density(momenta):
        k = np.asarray(momenta, dtype=float)
        single = k.ndim == 2
        k = k.reshape((-1, space.m, space.basis.N))
        env = np.prod(envelope.density(k).reshape(len(k), -1), axis=1)
        val = np.real(space.contract(A, space.features(k)))
        out = env * val / norm
        return out[0] if single else out

    density.coefficients = A
    density.normalization = norm
    return density
