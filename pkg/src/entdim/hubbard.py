"""Hubbard Hamiltonians, ground and thermal states, and noise channels.

Energies are in units of the tunneling ``J``; ``U`` and the site offsets
are dimensionless ratios.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .fock import FockBasis, hop_element


@dataclass(frozen=True)
class HubbardParams:
    """Tunneling, on-site interactions and per-site offsets.

    ``U`` is a scalar for two species or a triple ``(U12, U13, U23)`` for
    three species.  ``offsets`` shifts site ``i`` by ``offsets[i]`` for every
    atom sitting there.
    """

    U: float | Sequence[float] = 0.0
    J: float = 1.0
    offsets: Sequence[float] | None = None

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError("tunneling J must be positive")

    def pair_couplings(self, n_species: int) -> dict:
        U = self.U
        if n_species == 2:
            if np.ndim(U) != 0:
                raise ValueError("two species take a scalar U")
            return {(0, 1): float(U)}
        if np.ndim(U) != 1 or len(U) != 3:
            raise ValueError("three species take (U12, U13, U23)")
        return {(0, 1): float(U[0]), (0, 2): float(U[1]), (1, 2): float(U[2])}


class DensityMatrix:
    """Density operator on a composite Fock space.

    Stored either as a dense matrix or as a mixture
    ``sum_i w_i |v_i><v_i| + r * I / dim``, which keeps large bases cheap.

    Parameters
    ----------
    basis : FockBasis
    matrix : ndarray, optional
        Dense Hermitian matrix.
    vectors : ndarray, optional
        Columns are normalized pure components.
    weights : array_like, optional
        Mixture weights of ``vectors``.
    white : float
        Weight of the maximally mixed component.
    """

    def __init__(self, basis: FockBasis, matrix=None, vectors=None, weights=None,
                 white: float = 0.0):
        self.basis = basis
        self.white = float(white)
        if matrix is not None:
            self._matrix = np.asarray(matrix, dtype=complex)
            self.vectors = None
            self.weights = None
        else:
            v = np.asarray(vectors)
            if v.ndim == 1:
                v = v[:, None]
            self.vectors = v
            self.weights = (np.ones(v.shape[1]) if weights is None
                            else np.asarray(weights, dtype=float))
            self._matrix = None
        if self.dim_check() != basis.dim:
            raise ValueError("density matrix does not match basis dimension")

    @classmethod
    def pure(cls, basis, psi):
        psi = np.asarray(psi)
        return cls(basis, vectors=psi / np.linalg.norm(psi))

    @classmethod
    def maximally_mixed(cls, basis):
        return cls(basis, vectors=np.zeros((basis.dim, 0)), weights=np.zeros(0), white=1.0)

    def dim_check(self) -> int:
        if self._matrix is not None:
            if self._matrix.shape[0] != self._matrix.shape[1]:
                raise ValueError("matrix must be square")
            return self._matrix.shape[0]
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def is_dense(self) -> bool:
        return self._matrix is not None

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix
        v = self.vectors
        m = (v * self.weights) @ v.conj().T
        if self.white:
            m = m + self.white * np.eye(self.dim) / self.dim
        return m

    def populations(self) -> np.ndarray:
        if self._matrix is not None:
            return np.real(np.diag(self._matrix)).copy()
        p = (np.abs(self.vectors) ** 2) @ self.weights
        return p + self.white / self.dim

    def expectation(self, state) -> float:
        """``<state|rho|state>`` for a (not necessarily normalized) vector."""
        s = np.asarray(state)
        if self._matrix is not None:
            return float(np.real(s.conj() @ self._matrix @ s))
        amp = s.conj() @ self.vectors
        return float(np.real(np.sum(self.weights * np.abs(amp) ** 2))
                     + self.white * np.vdot(s, s).real / self.dim)

    def trace(self) -> float:
        return float(np.sum(self.populations()))

    def purity(self) -> float:
        if self._matrix is not None:
            return float(np.real(np.sum(np.abs(self._matrix) ** 2)))
        v, w, r, d = self.vectors, self.weights, self.white, self.dim
        g = v.conj().T @ v
        pure = float(np.real(np.sum(np.outer(w, w) * np.abs(g) ** 2)))
        return pure + 2 * r * float(np.sum(w * np.sum(np.abs(v) ** 2, 0))) / d + r * r / d

    def mixed(self, r: float) -> "DensityMatrix":
        """Return ``(1 - r) rho + r I / dim``."""
        if not 0.0 <= r <= 1.0:
            raise ValueError("mixing parameter must lie in [0, 1]")
        if self._matrix is not None:
            return DensityMatrix(self.basis, matrix=(1 - r) * self._matrix
                                 + r * np.eye(self.dim) / self.dim)
        return DensityMatrix(self.basis, vectors=self.vectors,
                             weights=(1 - r) * self.weights,
                             white=(1 - r) * self.white + r)

    def validate(self, tol: float = 1e-10) -> None:
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=1e-12):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1) > 1e-12 * max(1, self.dim) ** 0.5 + 1e-12:
            raise ValueError("density matrix trace differs from one")
        if np.linalg.eigvalsh(m).min() < -tol:
            raise ValueError("density matrix has negative eigenvalues")


def species_hopping(basis: FockBasis, J: float = 1.0) -> np.ndarray:
    """Nearest-neighbour hopping for one species, open boundaries."""
    d = basis.local_dim
    T = np.zeros((d, d))
    for s in range(d):
        for i in range(basis.L - 1):
            for a, b in ((i, i + 1), (i + 1, i)):
                t, sign = hop_element(basis, a, b, s)
                if sign:
                    T[t, s] -= J * sign
    return T


def build_hamiltonian(basis: FockBasis, params: HubbardParams) -> np.ndarray:
    """Dense real symmetric Hubbard Hamiltonian on the composite basis."""
    m = basis.n_species
    couplings = params.pair_couplings(m)
    d = basis.local_dim
    occ = basis.occupation_matrix().astype(float)
    T = species_hopping(basis, params.J)
    eye = np.eye(d)
    H = np.zeros((basis.dim, basis.dim))
    for s in range(m):
        factors = [T if t == s else eye for t in range(m)]
        term = factors[0]
        for f in factors[1:]:
            term = np.kron(term, f)
        H += term

    diag = np.zeros(basis.shape)
    for (a, b), U in couplings.items():
        diag = diag + _expand(U * (occ @ occ.T), a, b, m)
    if params.offsets is not None:
        off = np.asarray(params.offsets, dtype=float)
        if off.shape != (basis.L,):
            raise ValueError("offsets must have one entry per site")
        e = occ @ off
        for s in range(m):
            shape = [1] * m
            shape[s] = d
            diag = diag + e.reshape(shape)
    H[np.diag_indices_from(H)] += diag.ravel()
    return H


def _expand(pair, a, b, m):
    shape = [1] * m
    shape[a] = pair.shape[0]
    shape[b] = pair.shape[1]
    return pair.reshape(shape)


def ground_state(H: np.ndarray, return_energy: bool = False):
    """Lowest eigenvector with the largest-magnitude entry made real positive."""
    H = np.asarray(H)
    if not np.allclose(H, H.conj().T):
        raise ValueError("Hamiltonian is not Hermitian")
    w, v = linalg.eigh(H, subset_by_index=[0, 0])
    psi = v[:, 0]
    k = np.argmax(np.abs(psi))
    psi = psi * (abs(psi[k]) / psi[k])
    psi = np.real_if_close(psi)
    return (psi, float(w[0])) if return_energy else psi


def ground_degeneracy(H: np.ndarray, tol: float = 1e-9) -> int:
    w = linalg.eigvalsh(H, subset_by_index=[0, min(3, len(H) - 1)])
    return int(np.sum(w - w[0] < tol))


def thermal_state(H: np.ndarray, beta: float, basis: FockBasis, cutoff: float = 1e-16):
    """Gibbs state ``exp(-beta H) / Z`` as a mixture of eigenvectors."""
    if not beta > 0:
        raise ValueError("inverse temperature must be positive")
    w, v = linalg.eigh(H)
    boltz = np.exp(-beta * (w - w[0]))
    p = boltz / boltz.sum()
    keep = p > cutoff
    return DensityMatrix(basis, vectors=v[:, keep], weights=p[keep] / p[keep].sum())


def apply_dephasing(rho: DensityMatrix, r: float) -> DensityMatrix:
    """White-noise mixing ``(1 - r) rho + r I / dim``."""
    return rho.mixed(r)


def disorder_realization(L: int, sigma_V: float, seed=None) -> np.ndarray:
    """Uncorrelated Gaussian site offsets with standard deviation ``sigma_V``."""
    if sigma_V < 0:
        raise ValueError("disorder strength must be non-negative")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0, L) * sigma_V


def ground_state_density(basis: FockBasis, params: HubbardParams) -> DensityMatrix:
    return DensityMatrix.pure(basis, ground_state(build_hamiltonian(basis, params)))
