"""Coherence reconstruction from momentum shots.

The momentum density is expanded in real trigonometric functions
``Re Phi_O`` and ``Im Phi_O`` over a mode set that keeps one orbit from each
``{O, -O}`` pair.  Sample means of those functions (``c``) relate to the
coherence weights (``g``) through the Gram matrix of the functions under
the envelope measure, which is inverted here.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg

from .fock import FockBasis
from .momentum import OrbitSpace, WannierEnvelope


class SolverError(RuntimeError):
    pass


class ModeIndexSet:
    """Orbit tuples ``O`` with ``O >= -O`` in lexicographic order.

    For one atom per species this is the set of shift tuples ``(a, b)``
    (or ``(a, b, c)``) whose first nonzero entry is positive, plus zero.
    """

    def __init__(self, space: OrbitSpace):
        self.space = space
        neg = space.block.neg
        grid = np.array(np.meshgrid(*[np.arange(n) for n in space.shape],
                                    indexing="ij")).reshape(space.m, -1).T
        negated = neg[grid]
        diff = grid - negated
        first = np.argmax(diff != 0, axis=1)
        self.modes = grid[diff[np.arange(len(grid)), first] >= 0]
        self.negated = neg[self.modes]
        self.self_conjugate = np.all(self.modes == self.negated, axis=1)
        zero = np.array(space.zero)
        self.zero = int(np.nonzero(np.all(self.modes == zero, axis=1))[0][0])

    @property
    def kind(self) -> str:
        b = self.space.basis
        if b.n_species == 3:
            return "tripartite"
        return "two-atom" if b.N == 1 else "N+N"

    def __len__(self):
        return len(self.modes)

    @property
    def labels(self) -> list:
        """Shift tuples of each mode; flattened when each species has one atom."""
        orbs = self.space.block.orbits
        out = [tuple(orbs[i] for i in t) for t in self.modes]
        if self.space.basis.N == 1:
            out = [tuple(u[0] for u in t) for t in out]
        return out

    def to_tensor(self, g) -> np.ndarray:
        """Full orbit tensor ``A`` with ``A_{-O} = conj(A_O)``."""
        g = np.asarray(g, dtype=complex)
        A = np.zeros(self.space.shape, dtype=complex)
        sc = self.self_conjugate
        idx = tuple(self.modes[sc].T)
        A[idx] = g[sc].real
        half = 0.5 * g[~sc]
        A[tuple(self.modes[~sc].T)] = half
        A[tuple(self.negated[~sc].T)] = half.conj()
        return A

    def from_tensor(self, A) -> np.ndarray:
        vals = np.asarray(A)[tuple(self.modes.T)]
        return np.where(self.self_conjugate, vals, 2 * vals)


def build_mode_set(basis: FockBasis) -> ModeIndexSet:
    return ModeIndexSet(OrbitSpace(basis))


@dataclass
class CoefficientVector:
    """Raw sample means ``c`` or corrected weights ``g`` on a mode set."""

    values: np.ndarray
    n_shots: int = 0
    meta: dict = field(default_factory=dict)

    def __getitem__(self, item):
        return self.values[item]


def project_coefficients(momenta, modes: ModeIndexSet, chunk: int = 4096) -> CoefficientVector:
    """Sample means of ``Re Phi_O`` and ``Im Phi_O`` over momentum shots.

    Parameters
    ----------
    momenta : ndarray, shape (n, m, N)
        Dimensionless momenta ``k * d`` per shot, species and atom.
    """
    k = np.asarray(momenta, dtype=float)
    if k.ndim != 3 or len(k) == 0:
        raise ValueError("need a non-empty (n, species, atoms) momentum array")
    space = modes.space
    total = np.zeros(len(modes), dtype=complex)
    for a in range(0, len(k), chunk):
        feats = space.features(k[a:a + chunk])
        prod = feats[0][:, modes.modes[:, 0]]
        for b in range(1, space.m):
            prod = prod * feats[b][:, modes.modes[:, b]]
        total += prod.sum(axis=0)
    return CoefficientVector(total / len(k), n_shots=len(k))


class OverlapMatrix:
    """Gram matrix of the trigonometric mode functions under ``|w|^2``.

    The real-part block ``QR`` and the imaginary-part block ``QI`` decouple.
    Entries factorize over species into the per-species orbit Gram ``K``.
    Dense blocks are built on request; matrix-free products are always
    available.
    """

    def __init__(self, modes: ModeIndexSet, envelope: WannierEnvelope, K=None):
        self.modes = modes
        self.envelope = envelope
        self.K = modes.space.gram(envelope) if K is None else K
        cond = np.linalg.cond(self.K)
        self.condition = float(cond ** modes.space.m)
        if not np.isfinite(cond) or self.condition > 1e12:
            raise SolverError(
                f"overlap matrix is numerically singular (condition {self.condition:.2e}); "
                "increase sigma_k")
        self._dense = {}

    @property
    def imag_modes(self) -> np.ndarray:
        return np.nonzero(~self.modes.self_conjugate)[0]

    def _kprod(self, rows, cols):
        K = self.K
        out = np.ones((len(rows), len(cols)))
        for b in range(rows.shape[1]):
            out *= K[np.ix_(rows[:, b], cols[:, b])]
        return out

    def dense(self, part: str = "R") -> np.ndarray:
        if part not in self._dense:
            M = self.modes
            sel = slice(None) if part == "R" else self.imag_modes
            a, na = M.modes[sel], M.negated[sel]
            direct, crossed = self._kprod(a, a), self._kprod(na, a)
            Q = 0.5 * (direct + crossed) if part == "R" else 0.5 * (direct - crossed)
            self._dense[part] = 0.5 * (Q + Q.T)
        return self._dense[part]

    def matvec(self, x, part: str = "R") -> np.ndarray:
        M, space = self.modes, self.modes.space
        sel = slice(None) if part == "R" else self.imag_modes
        a, na = M.modes[sel], M.negated[sel]
        G = np.zeros(space.shape)
        sgn = 1.0 if part == "R" else -1.0
        np.add.at(G, tuple(a.T), 0.5 * x)
        np.add.at(G, tuple(na.T), sgn * 0.5 * x)
        Y = space.kron_solve(G, self.K, inverse=False)
        return Y[tuple(a.T)]

    def precondition(self, x, part: str = "R") -> np.ndarray:
        """Exact inverse of :meth:`matvec` built from ``K^-1`` per species."""
        M, space = self.modes, self.modes.space
        sel = slice(None) if part == "R" else self.imag_modes
        a, na = M.modes[sel], M.negated[sel]
        sc = M.self_conjugate[sel]
        G = np.zeros(space.shape)
        sgn = 1.0 if part == "R" else -1.0
        G[tuple(a.T)] = x
        G[tuple(na[~sc].T)] = sgn * x[~sc]
        Y = space.kron_solve(G, self.K)[tuple(a.T)]
        return np.where(sc, Y, 2 * Y)


def build_overlap(modes: ModeIndexSet, envelope: WannierEnvelope) -> OverlapMatrix:
    return OverlapMatrix(modes, envelope)


def _solve_block(Q: OverlapMatrix, rhs, part, method, rtol, precondition=True):
    n = len(rhs)
    if n == 0:
        return rhs.copy(), 0
    if method == "cholesky":
        fac = linalg.cho_factor(Q.dense(part))
        return linalg.cho_solve(fac, rhs), 0
    op = LinearOperator((n, n), matvec=lambda v: Q.matvec(v, part), dtype=float)
    iters = [0]

    def count(_):
        iters[0] += 1

    pre = (LinearOperator((n, n), matvec=lambda v: Q.precondition(v, part), dtype=float)
           if precondition else None)
    x, info = cg(op, rhs, rtol=rtol, atol=0.0, maxiter=10 * n, M=pre, callback=count)
    if info != 0:
        raise SolverError(f"conjugate gradient did not converge ({info}) for part {part}")
    return x, iters[0]


def solve_g(Q: OverlapMatrix, c, method: str = "auto", normalize: bool = True,
            rtol: float = 1e-10, dense_limit: int = 2000,
            precondition: bool = True) -> CoefficientVector:
    """Solve ``Q g = c`` for the coherence weights.

    ``method`` is ``"cholesky"``, ``"cg"`` or ``"auto"`` (Cholesky up to
    ``dense_limit`` modes).  CG is preconditioned with the species-factored
    inverse unless ``precondition`` is false.  With ``normalize`` the result is divided by the
    solved zero-mode weight, which removes the envelope's normalization
    factor; the raw zero-mode value is kept in ``meta["g0_raw"]``.
    """
    cv = c if isinstance(c, CoefficientVector) else CoefficientVector(np.asarray(c))
    cvals = np.asarray(cv.values, dtype=complex)
    if method == "auto":
        method = "cholesky" if len(cvals) <= dense_limit else "cg"
    if method not in ("cholesky", "cg"):
        raise ValueError(f"unknown solver {method!r}")
    gR, itR = _solve_block(Q, cvals.real.copy(), "R", method, rtol, precondition)
    im = Q.imag_modes
    y, itI = _solve_block(Q, cvals.imag[im].copy(), "I", method, rtol, precondition)
    g = gR.astype(complex)
    g[im] -= 1j * y
    g0 = g[Q.modes.zero].real
    if normalize:
        g = g / g0
    meta = dict(method=method, g0_raw=float(g0), iterations=itR + itI)
    return CoefficientVector(g, n_shots=cv.n_shots, meta=meta)


def coefficient_tensor_from_shots(momenta, space: OrbitSpace, K=None,
                                  envelope: WannierEnvelope | None = None,
                                  chunk: int = 4096) -> np.ndarray:
    """Orbit tensor ``A`` from shots by the exact Kronecker-factored solve.

    ``A = (⊗ K^-1) C`` with ``C = mean conj(prod_b Phi_{U_b}(k_b))``, then
    normalized so the zero orbit equals one.
    """
    if K is None:
        K = space.gram(envelope or WannierEnvelope())
    k = np.asarray(momenta, dtype=float)
    C = np.zeros(space.shape, dtype=complex)
    spec = {2: "su,sv->uv", 3: "su,sv,sw->uvw"}[space.m]
    for a in range(0, len(k), chunk):
        feats = [f.conj() for f in space.features(k[a:a + chunk])]
        C += np.einsum(spec, *feats, optimize=True)
    C /= len(k)
    A = space.kron_solve(C, K)
    return A / A[space.zero].real
