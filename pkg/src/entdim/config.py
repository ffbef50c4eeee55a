"""Experiment configuration: JSON schema, validation and state preparation.

Schema (all sections optional except ``seed``)::

    {
      "seed": 7,
      "lattice":   {"L": 6},
      "species":   {"count": 2, "atoms": 1, "statistics": "distinguishable"},
      "hubbard":   {"U": -12.0, "J": 1.0},          # U is a triple for three species
      "noise":     {"r": 0.0, "beta_J": null, "sigma_V": 0.0,
                    "realizations": 1, "disorder_mode": "mixture"},
      "envelope":  {"sigma_k": null},               # null -> package default
      "sampler":   {"n_pos": 10000, "n_mom": 25000, "delta_c": null},
      "reference": {"kind": "mes", "lambda1": null, "lambda_grid": null},
      "bootstrap": {"replicas": 1000, "seed": 0},
      "solver":    {"method": "auto", "dense_limit": 2000},
      "output":    {"dir": "entdim-out"}
    }

``lambda_grid`` is a list of values or ``{"start", "stop", "num"}``.
"""
from __future__ import annotations

import copy
import hashlib
import json

import numpy as np

from .fock import FockBasis, Statistics, make_basis
from .hubbard import DensityMatrix, HubbardParams, build_hamiltonian, ground_state, thermal_state
from .momentum import WannierEnvelope
from .reference import ReferenceKind, ReferenceState, make_reference


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


DEFAULTS = {
    "lattice": {"L": 6},
    "species": {"count": 2, "atoms": 1, "statistics": "distinguishable"},
    "hubbard": {"U": -12.0, "J": 1.0},
    "noise": {"r": 0.0, "beta_J": None, "sigma_V": 0.0, "realizations": 1,
              "disorder_mode": "mixture"},
    "envelope": {"sigma_k": None},
    "sampler": {"n_pos": 10_000, "n_mom": 25_000, "delta_c": None},
    "reference": {"kind": "mes", "lambda1": None, "lambda_grid": None},
    "bootstrap": {"replicas": 1000, "seed": 0},
    "solver": {"method": "auto", "dense_limit": 2000},
    "output": {"dir": "entdim-out"},
}


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key '{path}{key}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{path}{key}' must be an object")
            out[key] = _merge(base[key], val, f"{path}{key}.")
        else:
            out[key] = val
    return out


class ExperimentConfig:
    """Validated configuration; sections are plain dicts."""

    def __init__(self, data: dict):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if "seed" not in data:
            raise ConfigError("config needs an integer 'seed'")
        rest = {k: v for k, v in data.items() if k != "seed"}
        self.seed = data["seed"]
        self.sections = _merge(DEFAULTS, rest)
        self._validate()

    # -- construction ------------------------------------------------------
    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls(data)

    def to_dict(self) -> dict:
        return {"seed": self.seed, **copy.deepcopy(self.sections)}

    def replace(self, **dotted) -> "ExperimentConfig":
        """Copy with ``section.key`` overrides, e.g. ``replace(**{"hubbard.U": 3})``."""
        data = self.to_dict()
        for key, val in dotted.items():
            if key == "seed":
                data["seed"] = val
                continue
            sec, _, name = key.partition(".")
            if sec not in DEFAULTS or name not in DEFAULTS[sec]:
                raise ConfigError(f"unknown config key '{key}'")
            data[sec][name] = val
        return ExperimentConfig(data)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __getitem__(self, section):
        return self.sections[section]

    # -- validation --------------------------------------------------------
    def _validate(self):
        s = self.sections
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("'seed' must be a non-negative integer")
        try:
            self.basis()
            self.params()
            self.envelope()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        n = s["noise"]
        if not 0 <= float(n["r"]) <= 1:
            raise ConfigError("noise.r must lie in [0, 1]")
        if n["beta_J"] is not None and not float(n["beta_J"]) > 0:
            raise ConfigError("noise.beta_J must be positive or null")
        if float(n["sigma_V"]) < 0 or int(n["realizations"]) < 1:
            raise ConfigError("noise.sigma_V must be >= 0 and noise.realizations >= 1")
        if n["disorder_mode"] not in ("mixture", "per_realization"):
            raise ConfigError("noise.disorder_mode must be 'mixture' or 'per_realization'")
        if n["beta_J"] is not None and float(n["sigma_V"]) > 0:
            raise ConfigError("thermal states with disorder are not supported; set one of "
                              "noise.beta_J or noise.sigma_V")
        for key in ("n_pos", "n_mom"):
            v = s["sampler"][key]
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"sampler.{key} must be a positive integer")
        if int(s["bootstrap"]["replicas"]) < 2:
            raise ConfigError("bootstrap.replicas must be at least 2")
        if s["solver"]["method"] not in ("auto", "cholesky", "cg", "kron"):
            raise ConfigError("solver.method must be auto, cholesky, cg or kron")
        try:
            ReferenceKind.parse(s["reference"]["kind"])
            if s["reference"]["lambda1"] is not None:
                self.reference()
            self.lambda_grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- builders ------------------------------------------------------------
    def basis(self) -> FockBasis:
        sp = self.sections["species"]
        try:
            Statistics.parse(sp["statistics"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return make_basis(int(self.sections["lattice"]["L"]), int(sp["atoms"]),
                          int(sp["count"]), sp["statistics"])

    def params(self, offsets=None) -> HubbardParams:
        h = self.sections["hubbard"]
        U = h["U"]
        U = tuple(float(u) for u in U) if isinstance(U, (list, tuple)) else float(U)
        p = HubbardParams(U, float(h["J"]), offsets)
        p.pair_couplings(int(self.sections["species"]["count"]))
        return p

    def envelope(self) -> WannierEnvelope:
        sk = self.sections["envelope"]["sigma_k"]
        return WannierEnvelope() if sk is None else WannierEnvelope(float(sk))

    def reference(self, lambda1=None) -> ReferenceState:
        r = self.sections["reference"]
        lam = r["lambda1"] if lambda1 is None else lambda1
        return make_reference(r["kind"], self.basis(), lam)

    def lambda_grid(self):
        g = self.sections["reference"]["lambda_grid"]
        if g is None:
            return None
        if isinstance(g, dict):
            try:
                return np.linspace(float(g["start"]), float(g["stop"]), int(g["num"]))
            except KeyError as exc:
                raise ConfigError("lambda_grid needs start, stop and num") from exc
        return np.asarray(g, dtype=float)

    def state(self) -> DensityMatrix:
        """Density matrix described by the Hubbard and noise sections.

        Disorder realization ``i`` uses child stream ``i`` of the config seed.
        """
        from .stats import disorder_states

        basis, n = self.basis(), self.sections["noise"]
        params = self.params()
        if float(n["sigma_V"]) > 0:
            count = int(n["realizations"])
            vecs = disorder_states(basis, params, float(n["sigma_V"]), count, self.seed)
            rho = DensityMatrix(basis, vectors=np.array(vecs).T,
                                weights=np.full(count, 1.0 / count))
        elif n["beta_J"] is not None:
            H = build_hamiltonian(basis, params)
            rho = thermal_state(H, float(n["beta_J"]) / params.J, basis)
        else:
            rho = DensityMatrix.pure(basis, ground_state(build_hamiltonian(basis, params)))
        r = float(n["r"])
        return rho.mixed(r) if r > 0 else rho
