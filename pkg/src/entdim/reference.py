"""Reference states, Schmidt spectra and fidelity thresholds.

A fidelity above ``B_k`` (the sum of the ``k`` largest squared Schmidt
coefficients of the reference) certifies an entanglement dimension of at
least ``k + 1``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .fock import FockBasis


class ReferenceKind(str, enum.Enum):
    MES = "mes"
    GHZ = "ghz"
    REPULSIVE_MES = "repulsive_mes"
    NONDIMER_UNIFORM = "nondimer_uniform"
    LAMBDA_FAMILY = "lambda_family"

    @classmethod
    def parse(cls, value) -> "ReferenceKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"attractive_mes": "mes", "attractive": "mes", "repulsive": "repulsive_mes",
                   "anticorrelated": "repulsive_mes", "nondimer": "nondimer_uniform",
                   "lambda": "lambda_family"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown reference kind {value!r}") from None


@dataclass(frozen=True)
class ThresholdLadder:
    """Thresholds ``B_1 < ... < B_D = 1``; ``ladder[0]`` is 0.

    ``exact`` carries rational values when the spectrum is flat.
    """

    values: tuple
    exact: tuple | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if len(v) == 0 or np.any(np.diff(v) < -1e-12) or abs(v[-1] - 1) > 1e-9:
            raise ValueError("thresholds must be non-decreasing and end at 1")

    def __len__(self):
        return len(self.values)

    def __getitem__(self, k: int) -> float:
        if k == 0:
            return 0.0
        return float(self.values[k - 1])

    @classmethod
    def from_spectrum(cls, spectrum) -> "ThresholdLadder":
        lam2 = np.sort(np.asarray(spectrum, dtype=float) ** 2)[::-1]
        vals = np.cumsum(lam2)
        vals = vals / vals[-1]
        exact = None
        if np.allclose(lam2, lam2[0], rtol=0, atol=1e-12):
            D = len(lam2)
            exact = tuple(Fraction(k, D) for k in range(1, D + 1))
            vals = np.array([float(f) for f in exact])
        return cls(tuple(vals), exact)

    def certified_dimension(self, F) -> int:
        return certified_dimension(F, self)


def certified_dimension(F, ladder: ThresholdLadder) -> int:
    """Largest ``k`` with ``F > B_{k-1}`` (strictly); at least 1."""
    F = float(F)
    k = 1
    for j in range(1, len(ladder)):
        if F > ladder[j]:
            k = j + 1
        else:
            break
    return k


def lambda_coefficients(lam: float, L: int) -> tuple:
    """Dimer and nondimer amplitudes of the symmetric reference family."""
    s = np.sqrt(max(0.0, 1 - lam ** 2))
    a_d = lam / L - s * np.sqrt(L - 1) / L
    a_nd = lam / L + s / (L * np.sqrt(L - 1))
    return a_d, a_nd


def lambda_weights(lam: float, L: int) -> dict:
    """Coherence weights ``nn`` (nondimer pairs), ``dd`` and ``dn``.

    Closed forms::

        w_nn = (lam + sqrt((1 - lam^2) / (L - 1)))^2 / L^2
        w_dd = (lam - sqrt((1 - lam^2)(L - 1)))^2 / L^2
        w_dn = (lam^2 - (1 - lam^2) - lam sqrt(1 - lam^2) (L - 2) / sqrt(L - 1)) / L^2
    """
    a_d, a_nd = lambda_coefficients(lam, L)
    return {"nn": a_nd * a_nd, "dd": a_d * a_d, "dn": a_d * a_nd}


@dataclass
class ReferenceState:
    kind: ReferenceKind
    basis: FockBasis
    vector: np.ndarray = field(repr=False)
    spectrum: np.ndarray
    weights: dict = field(default_factory=dict)
    lambda1: float | None = None

    @property
    def ladder(self) -> ThresholdLadder:
        return ThresholdLadder.from_spectrum(self.spectrum)

    @property
    def schmidt_rank(self) -> int:
        return int(np.sum(self.spectrum > 1e-12))

    def coefficient_matrix(self) -> np.ndarray:
        D = self.basis.local_dim
        if self.basis.n_species != 2:
            raise ValueError("coefficient matrix is defined for two species")
        return self.vector.reshape(D, D)


def _check_lambda(lam, L):
    if lam is None:
        raise ValueError("lambda family needs lambda1")
    if not (1 / np.sqrt(L) - 1e-12 <= lam <= 1 + 1e-12):
        raise ValueError(f"lambda1 must lie in [1/sqrt(L), 1], got {lam}")
    return float(min(max(lam, 1 / np.sqrt(L)), 1.0))


def make_reference(kind, basis: FockBasis, lambda1: float | None = None) -> ReferenceState:
    """Build a normalized reference state with its spectrum and weights.

    Parameters
    ----------
    kind : ReferenceKind or str
    basis : FockBasis
    lambda1 : float, optional
        Leading Schmidt coefficient, required for the lambda family.
    """
    kind = ReferenceKind.parse(kind)
    m, D, L = basis.n_species, basis.local_dim, basis.L
    if kind is ReferenceKind.GHZ:
        if m != 3:
            raise ValueError("GHZ reference needs three species")
        v = np.zeros(basis.dim)
        v[basis.dimer_indices()] = 1 / np.sqrt(D)
        return ReferenceState(kind, basis, v, np.full(D, 1 / np.sqrt(D)),
                              {"uniform": 1.0 / D})
    if m != 2:
        raise ValueError(f"{kind.value} reference needs two species")
    if kind is ReferenceKind.MES:
        C = np.eye(D)
    elif kind is ReferenceKind.REPULSIVE_MES:
        comp = basis.complement()
        C = np.zeros((D, D))
        C[np.arange(D), comp] = 1.0
    elif kind is ReferenceKind.NONDIMER_UNIFORM:
        occ = basis.occupation_matrix().astype(int)
        C = (occ @ occ.T == 0).astype(float)
        if basis.N == 1:
            lambda1 = float(np.sqrt((L - 1) / L))
    else:
        if basis.N != 1:
            raise ValueError("lambda family is defined for one atom per species")
        lambda1 = _check_lambda(lambda1, L)
        a_d, a_nd = lambda_coefficients(lambda1, L)
        C = np.full((D, D), a_nd)
        np.fill_diagonal(C, a_d)
    C = C / np.linalg.norm(C)
    spectrum = np.linalg.svd(C, compute_uv=False)
    if kind is ReferenceKind.LAMBDA_FAMILY or (kind is ReferenceKind.NONDIMER_UNIFORM
                                               and basis.N == 1):
        weights = lambda_weights(lambda1, L)
    else:
        weights = {"uniform": 1.0 / D}
    return ReferenceState(kind, basis, C.ravel(), spectrum, weights, lambda1)


def schmidt_decompose(state, basis: FockBasis) -> np.ndarray:
    """Descending Schmidt coefficients across the species-1 / species-2 cut."""
    psi = np.asarray(state)
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > 1e-8:
        raise ValueError("state is not normalized")
    if basis.n_species != 2:
        raise ValueError("Schmidt decomposition needs two species")
    D = basis.local_dim
    return np.linalg.svd(psi.reshape(D, D), compute_uv=False)


def exact_fidelity(rho, reference: ReferenceState) -> float:
    """``<ref|rho|ref>``."""
    if rho.basis.dim != reference.basis.dim or rho.basis.shape != reference.basis.shape:
        raise ValueError("state and reference live on different bases")
    return float(rho.expectation(reference.vector))
