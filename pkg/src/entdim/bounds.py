"""Fidelity lower bounds from populations and momentum coherences.

Every bound has the form

    F~ = lin . p  -  s^T E s  +  const  +  sum_O W_O Re A_O

with ``p`` the configuration populations, ``s = sqrt(p)``, ``E`` a
nonnegative symmetric matrix of Cauchy-Schwarz weights and ``A`` the orbit
coherence tensor (see :mod:`entdim.momentum`).  A :class:`BoundModel`
stores those pieces, so the same model evaluates exact inputs and sampled
estimates alike.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
from scipy import sparse

from .fock import FockBasis, Statistics
from .momentum import OrbitSpace, block_orbits
from .reference import (ReferenceKind, ReferenceState, ThresholdLadder, certified_dimension,
                        lambda_weights, make_reference)


def csi_bound(p_bra, p_ket):
    """Cauchy-Schwarz bound ``sqrt(p_bra * p_ket)`` on a coherence magnitude."""
    return np.sqrt(np.clip(p_bra, 0, None) * np.clip(p_ket, 0, None))


@dataclass
class BoundValue:
    total: float
    population: float
    coherence_sum: float
    csi: float

    @property
    def coherence(self) -> float:
        """Coherence part of the bound: extracted sums minus CSI subtraction."""
        return self.coherence_sum - self.csi


@dataclass
class BoundModel:
    basis: FockBasis
    lin: np.ndarray
    csi: sparse.csr_matrix
    weights: np.ndarray
    const: float = 0.0
    label: str = ""
    meta: dict = field(default_factory=dict)

    def population_term(self, p) -> float:
        return float(self.lin @ np.asarray(p, dtype=float))

    def csi_term(self, p) -> float:
        s = np.sqrt(np.clip(np.asarray(p, dtype=float), 0, None))
        return float(s @ (self.csi @ s))

    def csi_terms(self, P) -> np.ndarray:
        """CSI subtraction for each row of a population matrix."""
        S = np.sqrt(np.clip(np.asarray(P, dtype=float), 0, None))
        return np.einsum("ij,ij->i", S, np.asarray((self.csi @ S.T).T))

    def coherence_term(self, A) -> float:
        return float(self.const + np.sum(self.weights * np.real(A)))

    def evaluate(self, p, A) -> BoundValue:
        pop = self.population_term(p)
        coh = self.coherence_term(A)
        csi = self.csi_term(p)
        return BoundValue(pop + coh - csi, pop, coh, csi)


def _flat_pops(basis, populations):
    p = np.asarray(populations, dtype=float).ravel()
    if p.size != basis.dim:
        raise ValueError("population data does not match the basis")
    return p


def _unsigned(basis):
    return block_orbits(basis.L, basis.N, Statistics.HARDCORE_BOSON).counts


@lru_cache(maxsize=16)
def _mes_model(basis: FockBasis) -> BoundModel:
    space = OrbitSpace(basis)
    blk = space.block
    m, N, D = basis.n_species, basis.N, basis.local_dim
    nf = factorial(N)
    scale = nf ** (m - 2) / D
    lin = np.zeros(basis.dim)
    lin[basis.dimer_indices()] = 1.0 / (nf * D)
    W = np.zeros(space.shape)
    counts = _unsigned(basis)
    E = sparse.csr_matrix((basis.dim, basis.dim))
    diag_rows = basis.dimer_indices()
    for U in range(len(blk)):
        if U == blk.zero:
            continue
        W[(U,) * m] = scale * blk.multiplicity[U]
        M = sparse.csr_matrix(counts[U])
        if M.nnz == 0:
            continue
        K = M
        for _ in range(m - 1):
            K = sparse.kron(K, M, format="csr")
        r, c = M.nonzero()
        same = sparse.csr_matrix((np.asarray(M[r, c]).ravel(), (diag_rows[r], diag_rows[c])),
                                 shape=K.shape)
        E = E + blk.multiplicity[U] * scale / nf ** m * (K - same)
    E.eliminate_zeros()
    label = {2: "mes" if N == 1 else "mes-multiparticle", 3: "ghz"}[m]
    return BoundModel(basis, lin, E.tocsr(), W, 0.0, label)


def mes_model(basis: FockBasis) -> BoundModel:
    """Bound for the same-configuration reference (MES, or GHZ for three species).

    Coherences between same-configuration states are reached by uniform
    shifts of all atoms.  Each shift of first-quantized coordinates is
    extracted as a whole, and every non-reference coherence it contains is
    replaced by its Cauchy-Schwarz bound.  With one atom per species this
    is the familiar two-atom (or three-atom) bound.
    """
    return _mes_model(basis)


@lru_cache(maxsize=256)
def _lambda_model(basis: FockBasis, lam: float) -> BoundModel:
    if basis.n_species != 2 or basis.N != 1:
        raise ValueError("the lambda family needs two species with one atom each")
    L = basis.L
    w = lambda_weights(lam, L)
    dim = basis.dim
    dimer = np.zeros(dim, dtype=bool)
    dimer[basis.dimer_indices()] = True
    lin = np.where(dimer, w["dd"], 0.0)
    either = dimer[:, None] | dimer[None, :]
    E = w["nn"] * either.astype(float)
    dd = np.outer(dimer, dimer) & ~np.eye(dim, dtype=bool)
    E += abs(w["dd"]) * dd
    dn = np.outer(dimer, ~dimer)
    E += abs(w["dn"]) * (dn | dn.T)
    space = OrbitSpace(basis)
    W = np.full(space.shape, w["nn"])
    W[space.zero] = 0.0
    return BoundModel(basis, lin, sparse.csr_matrix(E), W, w["nn"], "lambda-family",
                      {"lambda1": lam, "weights": w})


def lambda_model(basis: FockBasis, lam: float) -> BoundModel:
    """Bound for the symmetric two-atom reference family.

    Nondimer-nondimer coherences are taken from the total sum of all
    coherences after removing every term that touches a dimer state; the
    dimer-dimer and dimer-nondimer parts are bounded through populations.
    """
    return _lambda_model(basis, float(lam))


def targeted_model(basis: FockBasis, psi) -> BoundModel:
    """Bound for an arbitrary real reference vector (two species).

    The coherence orbits that contain reference coherences are combined
    with least-squares weights so that they reproduce the reference
    coherences; whatever else they contain is bounded by Cauchy-Schwarz.
    """
    if basis.n_species != 2:
        raise ValueError("targeted extraction supports two species")
    psi = np.real(np.asarray(psi)).ravel()
    space = OrbitSpace(basis)
    C = space.block.counts
    D, Z = basis.local_dim, space.Z
    supp = np.nonzero(np.abs(psi) > 1e-14)[0]
    ii, jj = np.triu_indices(len(supp), 1)
    X, Xp = supp[ii], supp[jj]
    t = 2 * psi[X] * psi[Xp]
    keep = np.abs(t) > 1e-14
    X, Xp, t = X[keep], Xp[keep], t[keep]
    a, b = np.divmod(X, D)
    ap, bp = np.divmod(Xp, D)

    nz = {}
    for u, s, s2 in zip(*np.nonzero(C)):
        nz.setdefault((s, s2), []).append(u)
    neg = space.block.neg
    cols = set()
    for x1, y1, x2, y2 in zip(a, b, ap, bp):
        for uA in nz.get((x1, x2), ()):
            for uB in nz.get((y1, y2), ()):
                o = (uA, uB)
                on = (neg[uA], neg[uB])
                cols.add(max(o, on))
    cols = np.array(sorted(cols), dtype=int).reshape(-1, 2)
    uA, uB = cols[:, 0][None, :], cols[:, 1][None, :]
    Mt = (C[uA, a[:, None], ap[:, None]] * C[uB, b[:, None], bp[:, None]]
          + C[uA, ap[:, None], a[:, None]] * C[uB, bp[:, None], b[:, None]]) / Z
    y = np.linalg.lstsq(Mt, t, rcond=None)[0]

    W = np.zeros(space.shape)
    W[cols[:, 0], cols[:, 1]] = y
    K = np.einsum("uv,uac,vbd->abcd", W, C, C, optimize=True).reshape(basis.dim, basis.dim) / Z
    K = 0.5 * (K + K.T)
    T = np.outer(psi, psi)
    R = T - K
    lin = np.diag(R).copy()
    Eabs = np.abs(R)
    np.fill_diagonal(Eabs, 0.0)
    E = sparse.csr_matrix(np.where(Eabs > 1e-14, Eabs, 0.0))
    return BoundModel(basis, lin, E, W, 0.0, "targeted",
                      {"n_orbits": len(cols), "residual": float(np.linalg.norm(Mt @ y - t))})


def model_for(reference: ReferenceState) -> BoundModel:
    """Pick the bound construction matching a reference state."""
    kind, basis = reference.kind, reference.basis
    if kind in (ReferenceKind.MES, ReferenceKind.GHZ):
        return mes_model(basis)
    if kind is ReferenceKind.LAMBDA_FAMILY:
        return lambda_model(basis, reference.lambda1)
    if kind is ReferenceKind.NONDIMER_UNIFORM and basis.N == 1:
        return lambda_model(basis, reference.lambda1)
    return _targeted_cached(reference)


_TARGETED = {}


def _targeted_cached(reference: ReferenceState) -> BoundModel:
    key = (reference.basis, reference.kind, reference.lambda1)
    if key not in _TARGETED:
        _TARGETED[key] = targeted_model(reference.basis, reference.vector)
    return _TARGETED[key]


def _as_tensor(coherences, basis: FockBasis):
    """Accept a full orbit tensor, a g vector on the mode set, or a CoefficientVector."""
    from .reconstruction import CoefficientVector, build_mode_set

    space_shape = OrbitSpace(basis).shape
    vals = coherences.values if isinstance(coherences, CoefficientVector) else coherences
    vals = np.asarray(vals)
    if vals.shape == space_shape:
        return vals
    modes = build_mode_set(basis)
    if vals.shape != (len(modes),):
        raise ValueError("coherence data does not match the configuration")
    return modes.to_tensor(vals)


def bound_attractive(populations, g, basis_or_L) -> BoundValue:
    """Two-atom bound for the maximally entangled same-site reference."""
    basis = basis_or_L if isinstance(basis_or_L, FockBasis) else _two_atom(basis_or_L)
    if basis.N != 1 or basis.n_species != 2:
        raise ValueError("bound_attractive needs two species with one atom each")
    return mes_model(basis).evaluate(_flat_pops(basis, populations), _as_tensor(g, basis))


def bound_multiparticle(populations, g, basis: FockBasis) -> BoundValue:
    """N+N bound for the same-configuration reference."""
    if basis.statistics not in (Statistics.FERMION, Statistics.HARDCORE_BOSON):
        raise ValueError("multiparticle bound needs fermions or hard-core bosons")
    return mes_model(basis).evaluate(_flat_pops(basis, populations), _as_tensor(g, basis))


def bound_tripartite(populations, g, basis_or_L) -> BoundValue:
    """Three-species bound for the GHZ reference."""
    if isinstance(basis_or_L, FockBasis):
        basis = basis_or_L
    else:
        from .fock import make_basis
        basis = make_basis(int(basis_or_L), 1, 3)
    if basis.n_species != 3:
        raise ValueError("tripartite bound needs three species")
    return mes_model(basis).evaluate(_flat_pops(basis, populations), _as_tensor(g, basis))


def bound_repulsive(populations, g, reference: ReferenceState) -> BoundValue:
    """Bound for repulsive-regime references (lambda family or anticorrelated MES)."""
    if reference.kind not in (ReferenceKind.LAMBDA_FAMILY, ReferenceKind.REPULSIVE_MES,
                              ReferenceKind.NONDIMER_UNIFORM):
        raise ValueError(f"{reference.kind.value} is not a repulsive reference")
    basis = reference.basis
    return model_for(reference).evaluate(_flat_pops(basis, populations), _as_tensor(g, basis))


def _two_atom(L):
    from .fock import make_basis
    return make_basis(int(L), 1, 2)


@dataclass
class LambdaScan:
    lambda1: float
    dimension: int
    bound: float
    margin: float
    grid: np.ndarray
    bounds: np.ndarray
    dimensions: np.ndarray


def default_lambda_grid(L: int, n: int = 200) -> np.ndarray:
    return np.linspace(1 / np.sqrt(L), 1.0, n)


def optimize_lambda(populations, coherences, basis: FockBasis, grid=None) -> LambdaScan:
    """Scan the first Schmidt coefficient of the two-atom reference family.

    The certified dimension is maximized; ties go to the largest margin
    ``F~ - B_{k-1}``.  Only post-processing of already extracted data.
    """
    grid = default_lambda_grid(basis.L) if grid is None else np.atleast_1d(grid)
    if len(grid) == 0:
        raise ValueError("empty lambda grid")
    p = _flat_pops(basis, populations)
    A = _as_tensor(coherences, basis)
    bounds, dims, margins = [], [], []
    for lam in grid:
        ref = make_reference(ReferenceKind.LAMBDA_FAMILY, basis, lam)
        F = lambda_model(basis, lam).evaluate(p, A).total
        k = certified_dimension(F, ref.ladder)
        bounds.append(F)
        dims.append(k)
        margins.append(F - ref.ladder[k - 1])
    bounds, dims, margins = map(np.array, (bounds, dims, margins))
    order = np.lexsort((margins, dims))
    best = order[-1]
    return LambdaScan(float(grid[best]), int(dims[best]), float(bounds[best]),
                      float(margins[best]), np.asarray(grid), bounds, dims)


def ladder_for(reference: ReferenceState) -> ThresholdLadder:
    return reference.ladder
