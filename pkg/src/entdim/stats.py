"""Bootstrap errors, disorder ensembles, regression fits and sweep tables."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import stats as sps

from .hubbard import DensityMatrix, HubbardParams, build_hamiltonian, disorder_realization, \
    ground_state


@dataclass(frozen=True)
class BootstrapPlan:
    replicas: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.replicas < 2:
            raise ValueError("bootstrap needs at least 2 replicas")


def _canonical(data):
    """Sort shots so that resampling only depends on the multiset of shots."""
    a = np.asarray(data)
    flat = a.reshape(len(a), -1)
    order = np.lexsort(flat.T[::-1]) if flat.shape[1] else np.arange(len(a))
    return a[order]


def bootstrap_se(statistic, shot_sets, plan: BootstrapPlan = BootstrapPlan()) -> float:
    """Standard deviation of ``statistic`` over independent resamples.

    Parameters
    ----------
    statistic : callable
        Called as ``statistic(*resampled_sets)`` and returns a float.
    shot_sets : sequence of arrays
        Each set is resampled with replacement, independently of the others.
    """
    sets = [_canonical(s) for s in shot_sets]
    if any(len(s) == 0 for s in sets):
        raise ValueError("cannot bootstrap an empty shot set")
    rng = np.random.default_rng(plan.seed)
    vals = np.empty(plan.replicas)
    for r in range(plan.replicas):
        vals[r] = statistic(*[s[rng.integers(0, len(s), len(s))] for s in sets])
    return float(np.std(vals, ddof=1))


@dataclass
class LinearFit:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    rvalue: float


def fit_linear(xs, ys) -> LinearFit:
    """Ordinary least-squares line through at least three points."""
    x, y = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if len(x) < 3 or len(x) != len(y):
        raise ValueError("need at least three (x, y) pairs")
    if np.ptp(x) == 0:
        raise ValueError("x values are degenerate")
    res = sps.linregress(x, y)
    return LinearFit(float(res.slope), float(res.intercept), float(res.stderr),
                     float(res.intercept_stderr), float(res.rvalue))


@dataclass
class PowerLawFit:
    exponent: float
    prefactor: float
    exponent_err: float


def fit_powerlaw(xs, ys) -> PowerLawFit:
    """``y = a x^b`` via a straight line in log-log coordinates."""
    x, y = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lin = fit_linear(np.log(x), np.log(y))
    return PowerLawFit(lin.slope, float(np.exp(lin.intercept)), lin.slope_err)


def growth_factor(ns, ys) -> tuple:
    """Per-step growth factor ``exp(b)`` of ``y = a exp(b n)`` and its error."""
    n, y = np.asarray(ns, dtype=float), np.asarray(ys, dtype=float)
    if len(n) == 2:
        b = np.log(y[1] / y[0]) / (n[1] - n[0])
        return float(np.exp(b)), float("nan")
    lin = fit_linear(n, np.log(y))
    return float(np.exp(lin.slope)), float(np.exp(lin.slope) * lin.slope_err)


@dataclass
class DisorderResult:
    fidelity: float
    bound: float
    fidelity_spread: float
    bound_spread: float
    mode: str
    realizations: int
    dimension: int | None = None
    per_realization: list = field(default_factory=list)


def disorder_states(basis, params: HubbardParams, sigma_V: float, count: int, seed=0):
    """Ground states of independent disorder realizations.

    Realization ``i`` draws its offsets from the ``i``-th child stream of
    ``seed``, so subsets and reruns are reproducible.
    """
    if count < 1:
        raise ValueError("need at least one realization")
    seqs = np.random.SeedSequence(seed).spawn(count)
    out = []
    for seq in seqs:
        off = disorder_realization(basis.L, sigma_V, seq)
        p = HubbardParams(params.U, params.J, tuple(off))
        out.append(ground_state(build_hamiltonian(basis, p)))
    return out


def disorder_average(basis, params: HubbardParams, sigma_V: float, count: int, reference,
                     mode: str = "mixture", seed=0, certify=None) -> DisorderResult:
    """Disorder-averaged fidelity and bound.

    ``mode="mixture"`` certifies the equal mixture of all realizations
    (one density matrix); ``mode="per_realization"`` averages the results
    of individually certified realizations.  ``certify(rho)`` returns a
    bound value and defaults to the exact-input bound.
    """
    from .certifier import certify_exact
    from .reference import exact_fidelity

    if certify is None:
        def certify(rho):
            return certify_exact(rho, reference).bound
    vecs = disorder_states(basis, params, sigma_V, count, seed)
    if mode == "mixture":
        rho = DensityMatrix(basis, vectors=np.array(vecs).T, weights=np.full(count, 1 / count))
        F, Ft = exact_fidelity(rho, reference), certify(rho)
        res = DisorderResult(F, Ft, 0.0, 0.0, mode, count)
    elif mode == "per_realization":
        Fs, Fts = [], []
        for v in vecs:
            rho = DensityMatrix.pure(basis, v)
            Fs.append(exact_fidelity(rho, reference))
            Fts.append(certify(rho))
        res = DisorderResult(float(np.mean(Fs)), float(np.mean(Fts)), float(np.std(Fs)),
                             float(np.std(Fts)), mode, count, per_realization=list(zip(Fs, Fts)))
    else:
        raise ValueError(f"unknown disorder mode {mode!r}")
    res.dimension = reference.ladder.certified_dimension(res.bound)
    return res


SWEEP_AXES = ("U_over_J", "r", "sigma_V", "L", "N_s", "beta_J", "lambda1")

_UNITS = {"U_over_J": "dimensionless (U/J)", "r": "dimensionless mixing", "sigma_V":
          "dimensionless (J sigma_V)", "L": "sites", "N_s": "shots", "beta_J":
          "dimensionless (beta J)", "lambda1": "dimensionless Schmidt coefficient"}


@dataclass
class SweepPoint:
    value: float
    fidelity: float
    bound: float
    se: float
    dimension: int
    dimension_1sigma: int
    dimension_3sigma: int
    bound_exact: float = float("nan")


@dataclass
class SweepResult:
    axis: str
    points: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}")
        v = np.array([p.value for p in self.points], dtype=float)
        d = np.diff(v)
        if len(v) > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sweep axis must be strictly monotone")

    def column(self, name) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])

    def to_csv(self, path) -> None:
        fields = list(asdict(self.points[0]).keys()) if self.points else ["value"]
        with open(path, "w", newline="") as fh:
            fh.write(f"# axis: {self.axis} [{_UNITS[self.axis]}]\n")
            fh.write("# fidelity, bound, se, bound_exact: dimensionless; dimensions: integers\n")
            w = csv.DictWriter(fh, fieldnames=[self.axis if f == "value" else f for f in fields])
            w.writeheader()
            for p in self.points:
                row = asdict(p)
                row[self.axis] = row.pop("value")
                w.writerow(row)
