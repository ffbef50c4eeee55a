"""Synthetic position and momentum shots, and the JSON-lines shot format.

Position shots are i.i.d. draws of occupation configurations from the
diagonal of the density matrix.  Momentum shots are drawn atom by atom by
ancestral sampling: every one-dimensional conditional has the form
``|w(k)|^2 Re sum_g b_g exp(i g k)`` and is sampled by rejection from the
envelope.

Shots are generated in fixed-size batches, each with its own random
stream spawned from the seed, so results do not depend on the worker count.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .fock import FockBasis
from .momentum import OrbitSpace, WannierEnvelope, coherence_tensor

BATCH = 4096


class SamplerStall(RuntimeError):
    """Rejection sampling stopped accepting proposals."""


class ShotFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ShotRecord:
    """One measurement event.

    ``atoms`` holds ``(species, value)`` pairs with 1-based species; the
    value is a 1-based site (position basis) or ``k * d`` (momentum basis).
    """

    shot: int
    basis: str
    atoms: tuple
    stream: int | None = None

    def to_json(self) -> str:
        key = "site" if self.basis == "position" else "kd"
        atoms = [{"species": s, key: v} for s, v in self.atoms]
        out = {"shot": self.shot, "basis": self.basis, "atoms": atoms}
        if self.stream is not None:
            out["stream"] = self.stream
        return json.dumps(out)


@dataclass
class ShotSet:
    """Shots of one basis stored as an array of shape (n, species, atoms).

    Position data are 0-based site indices sorted within each species;
    momentum data are ``k * d``.
    """

    basis: str
    data: np.ndarray
    streams: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.basis not in ("position", "momentum"):
            raise ShotFormatError(f"unknown basis tag {self.basis!r}")
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ShotFormatError("shot data must have shape (n, species, atoms)")

    def __len__(self):
        return len(self.data)

    @property
    def n_species(self) -> int:
        return self.data.shape[1]

    @property
    def atoms_per_species(self) -> int:
        return self.data.shape[2]

    def subset(self, idx) -> "ShotSet":
        st = None if self.streams is None else self.streams[idx]
        return ShotSet(self.basis, self.data[idx], st, dict(self.meta))

    def records(self) -> Iterable[ShotRecord]:
        for n, row in enumerate(self.data):
            atoms = []
            for s, vals in enumerate(row, start=1):
                for v in vals:
                    atoms.append((s, int(v) + 1) if self.basis == "position" else (s, float(v)))
            stream = None if self.streams is None else int(self.streams[n])
            yield ShotRecord(n, self.basis, tuple(atoms), stream)

    def composite_indices(self, basis: FockBasis) -> np.ndarray:
        """Composite Fock index of every position shot."""
        if self.basis != "position":
            raise ShotFormatError("composite indices need position shots")
        L, N = basis.L, basis.N
        if self.data.shape[1:] != (basis.n_species, N):
            raise ShotFormatError("shots do not match the basis particle content")
        if self.data.min() < 0 or self.data.max() >= L:
            raise ShotFormatError("site index outside the lattice")
        lookup = np.full((L,) * N, -1, dtype=np.int64)
        for i, s in enumerate(basis.states):
            lookup[s] = i
        ords = lookup[tuple(np.sort(self.data, axis=2).transpose(2, 0, 1))]
        if np.any(ords < 0):
            raise ShotFormatError("repeated site within a species")
        return np.ravel_multi_index(tuple(ords.T), basis.shape)

    def populations(self, basis: FockBasis) -> np.ndarray:
        idx = self.composite_indices(basis)
        return np.bincount(idx, minlength=basis.dim) / len(idx)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(rec.to_json() + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "ShotSet":
        return cls.from_records(_read_lines(path))

    @classmethod
    def from_records(cls, records) -> "ShotSet":
        basis_tag, rows, streams = None, [], []
        for rec in records:
            if isinstance(rec, ShotRecord):
                tag, atoms, stream = rec.basis, list(rec.atoms), rec.stream
            else:
                tag = rec.get("basis")
                key = "site" if tag == "position" else "kd"
                try:
                    atoms = [(int(a["species"]), a[key]) for a in rec["atoms"]]
                except (KeyError, TypeError) as exc:
                    raise ShotFormatError(f"malformed atom entry in shot {rec.get('shot')}") from exc
                stream = rec.get("stream")
            if basis_tag is None:
                basis_tag = tag
            elif tag != basis_tag:
                raise ShotFormatError("mixed basis tags in one shot file")
            per = {}
            for s, v in atoms:
                per.setdefault(s, []).append(v)
            species = sorted(per)
            if species != list(range(1, len(species) + 1)):
                raise ShotFormatError("species tags must run 1..m")
            counts = {len(v) for v in per.values()}
            if len(counts) != 1:
                raise ShotFormatError("unequal atom numbers across species")
            row = [per[s] for s in species]
            if tag == "position":
                row = [sorted(int(v) - 1 for v in r) for r in row]
            rows.append(row)
            streams.append(-1 if stream is None else int(stream))
        if not rows:
            raise ShotFormatError("no shots found")
        try:
            data = np.array(rows, dtype=np.int64 if basis_tag == "position" else float)
        except ValueError as exc:
            raise ShotFormatError("shots have inconsistent shapes") from exc
        return cls(basis_tag, data, np.array(streams))


def _read_lines(path):
    with open(path) as fh:
        for n, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ShotFormatError(f"line {n + 1}: {exc}") from exc


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("ENTDIM_WORKERS", "1")))
    except ValueError:
        return 1


def _streams(seed, n_batches):
    return np.random.SeedSequence(seed).spawn(n_batches)


def _run_batches(fn, n, batch, seed):
    sizes = [min(batch, n - a) for a in range(0, n, batch)]
    seqs = _streams(seed, len(sizes))
    jobs = list(zip(sizes, seqs, range(len(sizes))))
    workers = _workers()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda j: fn(*j), jobs))
    else:
        parts = [fn(*j) for j in jobs]
    return parts


def sample_positions(rho, n_shots: int, seed=0, batch: int = BATCH) -> ShotSet:
    """Draw occupation configurations from the populations of ``rho``."""
    basis = rho.basis
    p = np.clip(rho.populations(), 0, None)
    p = p / p.sum()
    states = np.array(basis.states)

    def draw(size, seq, stream):
        rng = np.random.default_rng(seq)
        idx = rng.choice(basis.dim, size=size, p=p)
        ords = np.array(np.unravel_index(idx, basis.shape)).T
        return states[ords], np.full(size, stream)

    if n_shots < 0:
        raise ValueError("shot count must be non-negative")
    if n_shots == 0:
        return ShotSet("position", np.zeros((0, basis.n_species, basis.N), dtype=np.int64))
    parts = _run_batches(draw, n_shots, batch, seed)
    data = np.concatenate([d for d, _ in parts])
    streams = np.concatenate([s for _, s in parts])
    return ShotSet("position", data, streams, {"seed": seed, "n_shots": n_shots})


class AncestralSampler:
    """Momentum sampler for a fixed state and envelope.

    Parameters
    ----------
    rho : DensityMatrix
    envelope : WannierEnvelope
    delta_c : float, optional
        Terms whose integrated squared shift exceeds ``delta_c`` are
        dropped.  Defaults to the value at which the dropped weight falls
        below 1e-8.
    max_tries : int
        Proposals per atom before reporting a stall (acceptance below
        about 1e-4).
    """

    def __init__(self, rho, envelope: WannierEnvelope, delta_c: float | None = None,
                 max_tries: int = 20000, A=None):
        self.basis = rho.basis
        self.env = envelope
        self.delta_c = envelope.cutoff() if delta_c is None else float(delta_c)
        self.max_tries = int(max_tries)
        self.space = OrbitSpace(rho.basis)
        self.A = coherence_tensor(rho, self.space) if A is None else A
        blk = self.space.block
        mu = blk.integrated(envelope, self.delta_c)
        self.partial = []
        for b in range(self.space.m):
            T = self.A
            for _ in range(self.space.m - 1 - b):
                T = np.tensordot(T, mu, axes=([-1], [0]))
            self.partial.append(T)
        raw = blk.raw
        L = self.basis.L
        self.gammas = np.arange(-(L - 1), L)
        self.onehot = [np.eye(2 * L - 1)[(raw[:, i] + L - 1).astype(int)]
                       for i in range(blk.N)]
        I = envelope.integral(raw)
        self.after = []
        for i in range(blk.N):
            w = np.prod(I[:, i + 1:], axis=1)
            tail = np.sum(raw[:, i + 1:] ** 2, axis=1)
            self.after.append(np.where(tail > self.delta_c, 0.0, w))
        self.batch = int(max(256, min(BATCH, 2 ** 22 // max(1, blk.n_raw))))

    def _block_weights(self, b, feats):
        T = self.partial[b]
        if b == 0:
            return np.broadcast_to(T, (len(feats[0]) if feats else 1, len(T)))
        if b == 1:
            return feats[0] @ T
        return np.einsum("su,sv,uvw->sw", feats[0], feats[1], T, optimize=True)

    def _rejection(self, coef, rng):
        n = len(coef)
        out = np.empty(n)
        bound = np.abs(coef).sum(axis=1)
        pending = np.arange(n)
        tries = 0
        while len(pending):
            kk = rng.normal(0.0, self.env.sigma_k, len(pending))
            val = np.real(np.sum(coef[pending] * np.exp(1j * np.outer(kk, self.gammas)), axis=1))
            acc = rng.random(len(pending)) * bound[pending] < val
            out[pending[acc]] = kk[acc]
            pending = pending[~acc]
            tries += 1
            if tries > self.max_tries and len(pending):
                c0 = coef[pending[0]]
                raise SamplerStall(
                    f"{len(pending)} proposals still rejected after {tries} rounds; "
                    f"zero-shift weight {c0[len(c0) // 2].real:.3e}, "
                    f"envelope bound {bound[pending[0]]:.3e}")
        return out

    def _draw(self, size, seq, stream):
        rng = np.random.default_rng(seq)
        blk, m, N = self.space.block, self.space.m, self.basis.N
        k = np.zeros((size, m, N))
        feats = []
        for b in range(m):
            beta = np.asarray(self._block_weights(b, feats))
            if beta.shape[0] != size:
                beta = np.broadcast_to(beta[0], (size, beta.shape[1]))
            braw = beta[:, blk.raw_orbit]
            for i in range(N):
                terms = braw * self.after[i]
                if i:
                    terms = terms * np.exp(1j * (k[:, b, :i] @ blk.raw[:, :i].T))
                coef = terms @ self.onehot[i]
                k[:, b, i] = self._rejection(coef, rng)
            feats.append(blk.features(k[:, b, :]))
        return k, np.full(size, stream)

    def sample(self, n_shots: int, seed=0) -> ShotSet:
        if n_shots < 0:
            raise ValueError("shot count must be non-negative")
        if n_shots == 0:
            return ShotSet("momentum", np.zeros((0, self.space.m, self.basis.N)))
        parts = _run_batches(self._draw, n_shots, self.batch, seed)
        data = np.concatenate([d for d, _ in parts])
        streams = np.concatenate([s for _, s in parts])
        meta = {"seed": seed, "n_shots": n_shots, "sigma_k": self.env.sigma_k,
                "delta_c": self.delta_c}
        return ShotSet("momentum", data, streams, meta)


def sample_momenta(rho, envelope: WannierEnvelope, n_shots: int, delta_c=None,
                   seed=0) -> ShotSet:
    """Draw joint momenta of all atoms by ancestral sampling."""
    return AncestralSampler(rho, envelope, delta_c).sample(n_shots, seed)
