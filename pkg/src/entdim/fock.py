"""Occupation-number bases for few-body lattice systems.

Each species occupies ``N`` of ``L`` sites with at most one atom per site
(Pauli or hard-core exclusion).  Species states are ascending tuples of
0-based site indices, enumerated lexicographically; composite states are
the Cartesian product of species states, species 1 varying slowest.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np


class Statistics(str, enum.Enum):
    FERMION = "fermion"
    HARDCORE_BOSON = "hardcore_boson"
    DISTINGUISHABLE = "distinguishable"

    @classmethod
    def parse(cls, value) -> "Statistics":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"fermions": "fermion", "hcb": "hardcore_boson",
                   "boson": "hardcore_boson", "bosons": "hardcore_boson",
                   "hard_core_boson": "hardcore_boson"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown statistics {value!r}") from None


@dataclass(frozen=True)
class LatticeSpec:
    """1D open chain with ``sites`` sites and unit spacing."""

    sites: int

    def __post_init__(self):
        if int(self.sites) != self.sites or self.sites < 2:
            raise ValueError(f"lattice needs at least 2 sites, got {self.sites}")


@dataclass(frozen=True)
class SpeciesConfig:
    species_count: int
    atoms_per_species: int
    statistics: Statistics = Statistics.DISTINGUISHABLE

    def __post_init__(self):
        object.__setattr__(self, "statistics", Statistics.parse(self.statistics))
        if self.species_count not in (2, 3):
            raise ValueError("species_count must be 2 or 3")
        if self.atoms_per_species < 1:
            raise ValueError("atoms_per_species must be positive")
        if self.species_count == 3 and self.atoms_per_species != 1:
            raise ValueError("three species are supported with one atom each")
        if (self.statistics is Statistics.DISTINGUISHABLE
                and self.atoms_per_species != 1):
            raise ValueError("distinguishable statistics requires one atom per species")

    @property
    def signed(self) -> bool:
        return self.statistics is Statistics.FERMION


@dataclass(frozen=True)
class FockBasis:
    """Product basis of per-species occupation tuples.

    Attributes
    ----------
    lattice, config
        Geometry and particle content.
    states : tuple of tuple of int
        Ascending 0-based occupied sites for one species, lexicographic.
    """

    lattice: LatticeSpec
    config: SpeciesConfig
    states: tuple = field(repr=False)
    _index: dict = field(repr=False, compare=False)

    @property
    def L(self) -> int:
        return self.lattice.sites

    @property
    def N(self) -> int:
        return self.config.atoms_per_species

    @property
    def n_species(self) -> int:
        return self.config.species_count

    @property
    def statistics(self) -> Statistics:
        return self.config.statistics

    @property
    def local_dim(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return self.local_dim ** self.n_species

    @property
    def shape(self) -> tuple:
        return (self.local_dim,) * self.n_species

    def index(self, occupation) -> int:
        """Ordinal of a species occupation tuple (0-based sites, any order)."""
        return self._index[tuple(sorted(occupation))]

    def composite_index(self, ordinals) -> int:
        return int(np.ravel_multi_index(tuple(ordinals), self.shape))

    def composite_ordinals(self, index) -> tuple:
        return tuple(int(i) for i in np.unravel_index(index, self.shape))

    def occupation_matrix(self) -> np.ndarray:
        """(local_dim, L) 0/1 matrix of site occupations per species state."""
        occ = np.zeros((self.local_dim, self.L), dtype=np.int8)
        for i, s in enumerate(self.states):
            occ[i, list(s)] = 1
        return occ

    def dimer_indices(self) -> np.ndarray:
        """Composite indices where every species sits in the same configuration."""
        d = self.local_dim
        return np.array([self.composite_index((s,) * self.n_species) for s in range(d)])

    def complement(self) -> np.ndarray:
        """Ordinal of the complementary occupation (requires half filling)."""
        if 2 * self.N != self.L:
            raise ValueError("complement requires half filling N = L/2")
        full = set(range(self.L))
        return np.array([self.index(full - set(s)) for s in self.states])


def enumerate_basis(lattice: LatticeSpec, config: SpeciesConfig) -> FockBasis:
    """Build the lexicographic occupation basis.

    Examples
    --------
    >>> b = enumerate_basis(LatticeSpec(6), SpeciesConfig(2, 3, "fermion"))
    >>> b.local_dim, b.dim
    (20, 400)
    """
    if config.atoms_per_species > lattice.sites:
        raise ValueError("more atoms per species than lattice sites")
    states = tuple(itertools.combinations(range(lattice.sites), config.atoms_per_species))
    assert len(states) == comb(lattice.sites, config.atoms_per_species)
    return FockBasis(lattice, config, states, {s: i for i, s in enumerate(states)})


def make_basis(L: int, N: int = 1, species: int = 2, statistics="distinguishable") -> FockBasis:
    """Shorthand for :func:`enumerate_basis`."""
    return enumerate_basis(LatticeSpec(L), SpeciesConfig(species, N, statistics))


def hop_element(basis: FockBasis, from_site: int, to_site: int, state: int):
    """Apply ``c†_to c_from`` within one species.

    Sites are 0-based.  Returns ``(target ordinal, sign)`` with sign 0 when
    the hop is blocked.  Fermionic signs count same-species atoms strictly
    between the two sites.
    """
    L = basis.L
    if not (0 <= from_site < L and 0 <= to_site < L):
        raise IndexError("site out of range")
    if not 0 <= state < basis.local_dim:
        raise IndexError("state ordinal out of range")
    occ = basis.states[state]
    if from_site == to_site:
        return (state, 1) if from_site in occ else (state, 0)
    if from_site not in occ or to_site in occ:
        return state, 0
    target = basis.index([s for s in occ if s != from_site] + [to_site])
    if basis.statistics is Statistics.FERMION:
        lo, hi = sorted((from_site, to_site))
        crossed = sum(1 for s in occ if lo < s < hi)
        return target, (-1) ** crossed
    return target, 1


def permutation_sign(seq) -> int:
    """Sign of the permutation that sorts ``seq`` (distinct entries)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign
