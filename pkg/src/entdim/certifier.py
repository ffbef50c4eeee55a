"""Fidelity certification from position and momentum shots.

:class:`FidelityCertifier` follows the scikit-learn estimator shape:
``fit(positions, momenta)`` extracts populations and coherences, assembles
the bound for the chosen reference and bootstraps its standard error.
:func:`certify_exact` runs the same bound on exact inputs from a density
matrix.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bounds import BoundModel, model_for, optimize_lambda
from .fock import FockBasis, make_basis
from .momentum import OrbitSpace, WannierEnvelope, coherence_tensor
from .reconstruction import (CoefficientVector, OverlapMatrix, build_mode_set, solve_g)
from .reference import (ReferenceKind, ReferenceState, ThresholdLadder, exact_fidelity,
                        make_reference)
from .sampling import ShotFormatError, ShotSet, _workers
from .stats import BootstrapPlan


@dataclass
class CertificationResult:
    """Bound value, its split, uncertainty and provenance.

    ``bound == population + coherence`` holds exactly; ``coherence`` is the
    extracted coherence sum minus the Cauchy-Schwarz subtraction.
    """

    bound: float
    population: float
    coherence: float
    coherence_sum: float
    csi: float
    se: float
    dimension: int
    dimension_1sigma: int
    dimension_3sigma: int
    reference: dict
    ladder: list
    path: str = "sampled"
    n_positions: int = 0
    n_momenta: int = 0
    seeds: dict = field(default_factory=dict)
    fidelity: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def ladder_table(self) -> str:
        """Text table of thresholds and which ones the bound exceeds."""
        lines = [f"{'k':>3}  {'B_k':>9}  {'F~ > B_k':>8}  {'F~-1se':>7}  {'F~-3se':>7}"]
        for k, b in enumerate(self.ladder, start=1):
            marks = ["yes" if v > b else "no" for v in
                     (self.bound, self.bound - self.se, self.bound - 3 * self.se)]
            lines.append(f"{k:>3}  {b:9.6f}  {marks[0]:>8}  {marks[1]:>7}  {marks[2]:>7}")
        return "\n".join(lines)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def describe_reference(ref: ReferenceState) -> dict:
    b = ref.basis
    return {"kind": ref.kind.value, "lambda1": ref.lambda1, "L": b.L, "N": b.N,
            "species": b.n_species, "statistics": b.statistics.value,
            "schmidt_rank": ref.schmidt_rank}


def _dims(F, se, ladder: ThresholdLadder):
    return (ladder.certified_dimension(F), ladder.certified_dimension(F - se),
            ladder.certified_dimension(F - 3 * se))


def certify_exact(rho, reference: ReferenceState, model: BoundModel | None = None,
                  A=None) -> CertificationResult:
    """Bound from exact populations and coherences of ``rho`` (no sampling noise)."""
    if rho.basis.shape != reference.basis.shape or rho.basis.dim != reference.basis.dim:
        raise ValueError("state and reference live on different bases")
    model = model or model_for(reference)
    p = rho.populations()
    if A is None:
        A = coherence_tensor(rho, OrbitSpace(rho.basis))
    v = model.evaluate(p, A)
    coh = v.coherence_sum - v.csi
    F = exact_fidelity(rho, reference)
    d = _dims(v.population + coh, 0.0, reference.ladder)
    return CertificationResult(v.population + coh, v.population, coh, v.coherence_sum, v.csi,
                               0.0, *d, describe_reference(reference),
                               list(reference.ladder.values), path="exact", fidelity=F,
                               meta={"label": model.label})


def _as_shotset(x, tag) -> ShotSet:
    if isinstance(x, ShotSet):
        if x.basis != tag:
            raise ShotFormatError(f"expected {tag} shots, got {x.basis}")
        return x
    return None


def _contract_real(space: OrbitSpace, T, feats) -> np.ndarray:
    return np.real(space.contract(T, [f.conj() for f in feats]))


class FidelityCertifier(BaseEstimator):
    """Lower-bound the fidelity to a reference state from two-basis shots.

    Parameters
    ----------
    sites : int
        Lattice length ``L``.
    atoms : int
        Atoms per species.
    species : int
        Number of species (2 or 3).
    statistics : str
        ``"distinguishable"``, ``"fermion"`` or ``"hardcore_boson"``.
    reference : str
        Reference kind (see :class:`~entdim.reference.ReferenceKind`).
    lambda1 : float, optional
        Leading Schmidt coefficient for the lambda family.  If omitted for
        that family the value is scanned over ``lambda_grid``.
    lambda_grid : array-like, optional
    sigma_k : float, optional
        Envelope width in units of ``1/d``; defaults to the envelope default.
    n_bootstrap : int
        Bootstrap replicas; 0 skips the error estimate.
    bootstrap_seed : int
    solver : str
        ``"kron"`` (species-factored exact inverse), ``"cholesky"``, ``"cg"``
        or ``"auto"`` (mode-set solve, Cholesky up to ``dense_limit``).
    dense_limit : int
    chunk : int
        Shots per feature batch.

    Attributes
    ----------
    result_ : CertificationResult
    populations_ : ndarray
    coefficients_ : ndarray
        Orbit coherence tensor, normalized so the zero orbit is 1.
    reference_ : ReferenceState
    lambda_scan_ : LambdaScan or None
    """

    def __init__(self, sites=6, atoms=1, species=2, statistics="distinguishable",
                 reference="mes", lambda1=None, lambda_grid=None, sigma_k=None,
                 n_bootstrap=1000, bootstrap_seed=0, solver="auto", dense_limit=2000,
                 chunk=2048):
        self.sites = sites
        self.atoms = atoms
        self.species = species
        self.statistics = statistics
        self.reference = reference
        self.lambda1 = lambda1
        self.lambda_grid = lambda_grid
        self.sigma_k = sigma_k
        self.n_bootstrap = n_bootstrap
        self.bootstrap_seed = bootstrap_seed
        self.solver = solver
        self.dense_limit = dense_limit
        self.chunk = chunk

    # -- validation -------------------------------------------------------
    def _basis(self) -> FockBasis:
        return make_basis(int(self.sites), int(self.atoms), int(self.species), self.statistics)

    def _envelope(self) -> WannierEnvelope:
        return WannierEnvelope() if self.sigma_k is None else WannierEnvelope(float(self.sigma_k))

    def _positions(self, X, basis) -> np.ndarray:
        ss = _as_shotset(X, "position")
        if ss is not None:
            return ss.composite_indices(basis)
        a = np.asarray(X)
        if a.ndim == 1:
            if not np.issubdtype(a.dtype, np.integer) or a.min() < 0 or a.max() >= basis.dim:
                raise ShotFormatError("composite indices out of range")
            return a.astype(np.int64)
        if a.ndim == 2:
            a = a.reshape(len(a), basis.n_species, basis.N)
        if not np.issubdtype(a.dtype, np.integer):
            raise ShotFormatError("position shots must be integer site indices")
        return ShotSet("position", a).composite_indices(basis)

    def _momenta(self, X, basis) -> np.ndarray:
        ss = _as_shotset(X, "momentum")
        a = np.asarray(ss.data if ss is not None else X, dtype=float)
        if a.ndim == 2:
            if a.shape[1] != basis.n_species * basis.N:
                raise ShotFormatError("momentum shots do not match the particle content")
            a = a.reshape(len(a), basis.n_species, basis.N)
        if a.ndim != 3 or a.shape[1:] != (basis.n_species, basis.N):
            raise ShotFormatError("momentum shots do not match the particle content")
        if len(a) == 0:
            raise ShotFormatError("no momentum shots")
        if not np.all(np.isfinite(a)):
            raise ShotFormatError("non-finite momentum values")
        return a

    def _step(self, n_modes: int) -> int:
        # keep per-batch mode products near 2e7 entries
        return int(max(16, min(self.chunk, 2e7 // max(n_modes, 1))))

    # -- fitting ------------------------------------------------------------
    def fit(self, positions, momenta):
        """Certify from position shots and momentum shots.

        Parameters
        ----------
        positions : ShotSet, int array (n, species, atoms) or composite indices (n,)
            0-based sites.
        momenta : ShotSet or float array (n, species, atoms)
            Dimensionless ``k * d``.
        """
        basis = self._basis()
        env = self._envelope()
        idx = self._positions(positions, basis)
        if len(idx) == 0:
            raise ShotFormatError("no position shots")
        k = self._momenta(momenta, basis)
        space = OrbitSpace(basis)
        K = space.gram(env)
        counts = np.bincount(idx, minlength=basis.dim)
        p = counts / len(idx)

        kind = ReferenceKind.parse(self.reference)
        modes = None if self.solver == "kron" else build_mode_set(basis)
        h_parts, h0_parts = [], []
        e0 = np.zeros(space.shape)
        e0[space.zero] = 1.0
        V0 = space.kron_solve(e0, K)
        C = np.zeros(space.shape, dtype=complex)
        c = None if modes is None else np.zeros(len(modes), dtype=complex)
        spec = {2: "su,sv->uv", 3: "su,sv,sw->uvw"}[space.m]
        step = self._step(len(modes) if modes is not None else 0)
        for a in range(0, len(k), step):
            feats = space.features(k[a:a + step])
            if modes is None:
                C += np.einsum(spec, *[f.conj() for f in feats], optimize=True)
            else:
                prod = feats[0][:, modes.modes[:, 0]]
                for b in range(1, space.m):
                    prod = prod * feats[b][:, modes.modes[:, b]]
                c += prod.sum(axis=0)
            h0_parts.append(_contract_real(space, V0, feats))
        n_mom = len(k)
        meta = {"solver": self.solver, "sigma_k": env.sigma_k}
        if modes is None:
            A = space.kron_solve(C / n_mom, K)
            meta["g0_raw"] = float(A[space.zero].real)
            A = A / A[space.zero].real
        else:
            Q = OverlapMatrix(modes, env, K)
            g = solve_g(Q, CoefficientVector(c / n_mom, n_mom), method=self.solver,
                        dense_limit=self.dense_limit)
            meta.update(g.meta)
            meta["solver"] = g.meta["method"]
            A = modes.to_tensor(g.values)
        self.coefficients_ = A
        self.populations_ = p

        self.lambda_scan_ = None
        lam = self.lambda1
        if kind is ReferenceKind.LAMBDA_FAMILY and lam is None:
            self.lambda_scan_ = optimize_lambda(p, A, basis, self.lambda_grid)
            lam = self.lambda_scan_.lambda1
        ref = make_reference(kind, basis, lam)
        model = model_for(ref)
        self.reference_ = ref
        self.model_ = model

        V = space.kron_solve(model.weights, K)
        for a in range(0, len(k), step):
            h_parts.append(_contract_real(space, V, space.features(k[a:a + step])))
        h, h0 = np.concatenate(h_parts), np.concatenate(h0_parts)

        v = model.evaluate(p, A)
        coh = v.coherence_sum - v.csi
        F = v.population + coh
        se = self._bootstrap(model, counts, h, h0) if self.n_bootstrap else 0.0
        dims = _dims(F, se, ref.ladder)
        seeds = {"bootstrap": self.bootstrap_seed}
        for name, x in (("positions", positions), ("momenta", momenta)):
            if isinstance(x, ShotSet) and "seed" in x.meta:
                seeds[name] = x.meta["seed"]
        meta.update(label=model.label, replicas=int(self.n_bootstrap))
        if self.lambda_scan_ is not None:
            meta["lambda_scan"] = {"grid": self.lambda_scan_.grid,
                                   "dimensions": self.lambda_scan_.dimensions,
                                   "bounds": self.lambda_scan_.bounds}
        self.result_ = CertificationResult(
            F, v.population, coh, v.coherence_sum, v.csi, se, *dims, describe_reference(ref),
            list(ref.ladder.values), "sampled", len(idx), n_mom, seeds, None, _plain(meta))
        self.bound_ = F
        self.se_ = se
        self.dimension_ = dims[0]
        return self

    def _bootstrap(self, model: BoundModel, counts, h, h0) -> float:
        """Resample whole shots of both bases independently."""
        plan = BootstrapPlan(int(self.n_bootstrap), self.bootstrap_seed)
        n_pos = int(counts.sum())
        p_hat = counts / n_pos
        order = np.lexsort((h0, h))
        h, h0 = h[order], h0[order]
        n = len(h)
        per = max(1, min(plan.replicas, int(2e7 // max(n, 1))))
        sizes = [min(per, plan.replicas - a) for a in range(0, plan.replicas, per)]
        seqs = np.random.SeedSequence(plan.seed).spawn(len(sizes))

        def run(job):
            size, seq = job
            rng = np.random.default_rng(seq)
            P = rng.multinomial(n_pos, p_hat, size=size) / n_pos
            pop = P @ model.lin - model.csi_terms(P)
            j = rng.integers(0, n, size=(size, n))
            coh = model.const + h[j].mean(axis=1) / h0[j].mean(axis=1)
            return pop + coh

        jobs = list(zip(sizes, seqs))
        w = _workers()
        if w > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(w) as pool:
                vals = np.concatenate(list(pool.map(run, jobs)))
        else:
            vals = np.concatenate([run(j) for j in jobs])
        return float(np.std(vals, ddof=1))

    # -- sklearn-style accessors -----------------------------------------------
    def transform(self, momenta) -> np.ndarray:
        """Trigonometric mode features of each momentum shot.

        Columns are ``Re Phi_O`` for every mode, then ``Im Phi_O`` for modes
        that are not self-conjugate, in mode-set order.
        """
        check_is_fitted(self, "result_")
        basis = self.reference_.basis
        k = self._momenta(momenta, basis)
        modes = build_mode_set(basis)
        space = modes.space
        out = []
        step = self._step(len(modes))
        for a in range(0, len(k), step):
            feats = space.features(k[a:a + step])
            prod = feats[0][:, modes.modes[:, 0]]
            for b in range(1, space.m):
                prod = prod * feats[b][:, modes.modes[:, b]]
            out.append(np.hstack([prod.real, prod.imag[:, ~modes.self_conjugate]]))
        return np.vstack(out)

    def predict(self, X) -> np.ndarray:
        """Certified dimension for each fidelity value in ``X`` on the fitted ladder."""
        check_is_fitted(self, "result_")
        F = np.asarray(X, dtype=float).reshape(-1)
        ladder = self.reference_.ladder
        return np.array([ladder.certified_dimension(f) for f in F], dtype=int)

    def score(self, positions, momenta) -> float:
        """Bound value on new shots with the fitted settings."""
        check_is_fitted(self, "result_")
        other = self.__class__(**self.get_params()).set_params(n_bootstrap=0)
        if self.lambda_scan_ is not None:
            other.set_params(lambda1=self.reference_.lambda1)
        return other.fit(positions, momenta).bound_


def certify_shots(positions: ShotSet, momenta: ShotSet, basis: FockBasis, reference="mes",
                  **kw) -> CertificationResult:
    """Functional wrapper around :class:`FidelityCertifier`."""
    est = FidelityCertifier(sites=basis.L, atoms=basis.N, species=basis.n_species,
                            statistics=basis.statistics.value, reference=reference, **kw)
    return est.fit(positions, momenta).result_
