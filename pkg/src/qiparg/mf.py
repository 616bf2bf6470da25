"""Energy-estimation verification from X/Z measurements.

A term of ``H = Σ d_S S`` is sampled with probability ``|d_S| / Σ|d|`` from a
randomness tape, the state is measured in the matching X/Z pattern and the
verdict accepts when ``sign(d_S) * (product of ±1 outcomes) = -1``.  This
gives acceptance probability ``1/2 - <H> / (2 Σ|d|)``.

The instance-independent wrapper :func:`vmf` receives a uniformly random
full basis ``b``, accepts outright when ``b`` disagrees with the sampled
pattern and otherwise defers to :func:`decide`.  Because every pattern is
padded to exactly ``locality`` measured positions, agreement happens with
probability ``2**-locality``.

The sampled term index is passed to :func:`decide` explicitly instead of
being re-derived from the padded basis, which would be ambiguous.

Tape layout, most significant bit first::

    [ term fraction: ceil(log2(#terms)) + 64 bits ]
    [ padding slot 1: ceil(log2 q) position bits, 1 letter bit ] ... x locality
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from qiparg.errors import (
    DimensionMismatch,
    EmptyHamiltonian,
    MissingOutcome,
    PaddingExhausted,
)
from qiparg.pauli import Hamiltonian, canonicalize
from qiparg.sim import RealStateVector, outcome_probabilities, _record

DEFAULT_LOCALITY = 6
FRACTION_BITS = 64


def _ceil_log2(n: int) -> int:
    return (n - 1).bit_length() if n > 1 else 0


@dataclass(frozen=True)
class RandomnessTape:
    """Fixed-length bit string stored as an integer, read MSB first."""

    length: int
    value: int = 0

    def __post_init__(self):
        if self.length < 0 or not 0 <= self.value < (1 << self.length) or (
                self.length == 0 and self.value):
            raise ValueError("tape value does not fit its length")

    @classmethod
    def random(cls, length: int, rng=None) -> "RandomnessTape":
        rng = np.random.default_rng(rng)
        nbytes = (length + 7) // 8
        value = int.from_bytes(rng.bytes(nbytes), "big") >> (8 * nbytes - length)
        return cls(length, value)

    @classmethod
    def from_bits(cls, bits: str) -> "RandomnessTape":
        return cls(len(bits), int(bits, 2) if bits else 0)

    @classmethod
    def from_bit_array(cls, bits: Sequence[int]) -> "RandomnessTape":
        return cls.from_bits("".join("1" if b else "0" for b in bits))

    def field(self, offset: int, width: int) -> int:
        if offset + width > self.length:
            raise ValueError("read past the end of the tape")
        return (self.value >> (self.length - offset - width)) & ((1 << width) - 1)

    def bits(self) -> str:
        return format(self.value, f"0{self.length}b") if self.length else ""


@dataclass(frozen=True, eq=False)
class MFSampler:
    """Term sampler over a canonicalized Hamiltonian with fixed padded locality."""

    hamiltonian: Hamiltonian
    locality: int = DEFAULT_LOCALITY
    term_weights: np.ndarray = field(init=False, repr=False)
    _bounds: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        h = canonicalize(self.hamiltonian)
        if not h.terms:
            raise EmptyHamiltonian("cannot sample from an empty Hamiltonian")
        if h.locality > self.locality:
            raise ValueError(f"Hamiltonian locality {h.locality} exceeds {self.locality}")
        if h.num_qubits < self.locality:
            raise PaddingExhausted(
                f"{h.num_qubits} qubits cannot be padded to {self.locality} measured positions")
        weights = np.abs(h.coefficients) / h.one_norm
        scale = 1 << self.fraction_bits_for(len(h))
        cum = np.cumsum(weights)
        bounds = [0] + [int(Fraction(float(c)) * scale) for c in cum[:-1]] + [scale]
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "term_weights", weights)
        object.__setattr__(self, "_bounds", tuple(bounds))

    @classmethod
    def from_bundle(cls, bundle, locality: int = DEFAULT_LOCALITY) -> "MFSampler":
        return cls(bundle.h_total, locality)

    @staticmethod
    def fraction_bits_for(n_terms: int) -> int:
        return _ceil_log2(n_terms) + FRACTION_BITS

    @property
    def num_qubits(self) -> int:
        return self.hamiltonian.num_qubits

    @property
    def fraction_bits(self) -> int:
        return self.fraction_bits_for(len(self.hamiltonian))

    @property
    def position_bits(self) -> int:
        return _ceil_log2(self.num_qubits)

    @property
    def tape_length(self) -> int:
        return self.fraction_bits + self.locality * (self.position_bits + 1)

    def term_mass(self, k: int) -> Fraction:
        """Exact probability that a uniform tape selects term ``k``."""
        return Fraction(self._bounds[k + 1] - self._bounds[k], 1 << self.fraction_bits)

    def tape_for_term(self, k: int, padding: int = 0) -> RandomnessTape:
        """A tape selecting term ``k``; ``padding`` fills the padding bits."""
        pad_len = self.tape_length - self.fraction_bits
        if not 0 <= padding < (1 << pad_len):
            raise ValueError("padding value does not fit")
        if self._bounds[k + 1] == self._bounds[k]:
            raise ValueError(f"term {k} has zero tape mass")
        return RandomnessTape(self.tape_length, (self._bounds[k] << pad_len) | padding)

    def random_tape(self, rng=None) -> RandomnessTape:
        return RandomnessTape.random(self.tape_length, rng)


def sample_basis(sampler: MFSampler, r: RandomnessTape) -> tuple[int, tuple]:
    """Deterministically map a tape to ``(term index, padded basis)``."""
    if r.length != sampler.tape_length:
        raise DimensionMismatch(f"tape has {r.length} bits, sampler needs {sampler.tape_length}")
    fbits = sampler.fraction_bits
    u = r.field(0, fbits)
    k = bisect.bisect_right(sampler._bounds, u) - 1
    word = sampler.hamiltonian.terms[k][1]
    q = sampler.num_qubits
    basis: list = [None] * q
    for idx, letter in word.letters:
        basis[idx - 1] = 1 if letter == "X" else 0
    available = [i for i in range(1, q + 1) if basis[i - 1] is None]
    pbits = sampler.position_bits
    offset = fbits
    for _ in range(sampler.locality - word.locality):
        pos = r.field(offset, pbits) if pbits else 0
        letter = r.field(offset + pbits, 1)
        offset += pbits + 1
        chosen = available.pop(pos % len(available))
        basis[chosen - 1] = letter
    return k, tuple(basis)


def decide(h: Hamiltonian, k: int, m: Sequence) -> int:
    """Accept (1) iff ``sign(d_k)`` times the outcome product of term ``k`` is -1."""
    coeff, word = h.terms[k]
    parity = 0
    for idx in word.support:
        bit = m[idx - 1]
        if bit not in (0, 1):
            raise MissingOutcome(f"no outcome recorded for qubit {idx} of term {k}")
        parity ^= bit
    product = -1 if parity else 1
    sign = 1 if coeff > 0 else -1
    return 1 if sign * product == -1 else 0


def consistent(b_hat: Sequence, b: Sequence) -> bool:
    return all(x is None or x == y for x, y in zip(b_hat, b))


def vmf(sampler: MFSampler, r: RandomnessTape, b: Sequence[int], m: Sequence) -> int:
    """Instance-independent wrapper verdict."""
    q = sampler.num_qubits
    if len(b) != q or len(m) != q:
        raise DimensionMismatch("basis and record must cover every qubit")
    if any(x not in (0, 1) for x in b):
        raise ValueError("the wrapper basis must be fully specified")
    k, b_hat = sample_basis(sampler, r)
    if not consistent(b_hat, b):
        return 1
    restricted = tuple(v if bh is not None else None for v, bh in zip(m, b_hat))
    return decide(sampler.hamiltonian, k, restricted)


def threshold_vmf(copies: int, threshold: float, verdicts: Sequence[int]) -> int:
    """Accept iff at least ``ceil(threshold * copies)`` verdicts are 1."""
    if len(verdicts) != copies:
        raise DimensionMismatch(f"expected {copies} verdicts, got {len(verdicts)}")
    need = math.ceil(threshold * copies - 1e-9)
    return 1 if sum(verdicts) >= need else 0


# --- analytic laws and exact enumeration --------------------------------------

def mf_law(h: Hamiltonian, state: RealStateVector) -> float:
    """``1/2 - <H> / (2 Σ|d|)`` for the canonical form of ``h``."""
    h = canonicalize(h)
    return 0.5 - h.expectation(state.amplitudes) / (2 * h.one_norm)


def vmf_law(h: Hamiltonian, state: RealStateVector, locality: int = DEFAULT_LOCALITY) -> float:
    """Wrapper acceptance; equals ``127/128 - <H>/(128 Σ|d|)`` for locality 6."""
    agree = 2.0 ** -locality
    return (1 - agree) + agree * mf_law(h, state)


def vmf_law_from_energy(energy: float, one_norm: float, locality: int = DEFAULT_LOCALITY) -> float:
    agree = 2.0 ** -locality
    return (1 - agree) + agree * (0.5 - energy / (2 * one_norm))


def enumerate_decide_acceptance(sampler: MFSampler, state: RealStateVector,
                                padding: int = 0) -> float:
    """Exact Pr[decide(sample) = 1]: every term at its tape mass, every outcome at its Born weight."""
    total = 0.0
    for k in range(len(sampler.hamiltonian)):
        mass = sampler.term_mass(k)
        if not mass:
            continue
        tape = sampler.tape_for_term(k, padding)
        kk, b_hat = sample_basis(sampler, tape)
        measured, probs = outcome_probabilities(b_hat, state)
        acc = 0.0
        for j, p in enumerate(probs):
            if p:
                acc += p * decide(sampler.hamiltonian, kk, _record(b_hat, measured, j))
        total += float(mass) * acc
    return total


def enumerate_vmf_acceptance(sampler: MFSampler, state: RealStateVector,
                             padding: int = 0) -> float:
    """Exact Pr over uniform full bases and Born outcomes of ``vmf = 1``."""
    q = sampler.num_qubits
    tapes = []
    for k in range(len(sampler.hamiltonian)):
        mass = sampler.term_mass(k)
        if mass:
            tapes.append((float(mass), sampler.tape_for_term(k, padding)))
    per_basis = 2.0 ** -q
    total = 0.0
    for bi in range(1 << q):
        b = tuple((bi >> (q - 1 - i)) & 1 for i in range(q))
        measured, probs = outcome_probabilities(b, state)
        records = [(p, _record(b, measured, j)) for j, p in enumerate(probs) if p]
        for mass, tape in tapes:
            acc = sum(p * vmf(sampler, tape, b, rec) for p, rec in records)
            total += per_basis * mass * acc
    return total


def consistency_probability(b_hat: Sequence) -> float:
    """Fraction of full bases consistent with ``b_hat``, by enumeration."""
    q = len(b_hat)
    hits = 0
    for bi in range(1 << q):
        b = tuple((bi >> (q - 1 - i)) & 1 for i in range(q))
        hits += consistent(b_hat, b)
    return hits / (1 << q)


# --- Monte Carlo ------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloResult:
    trials: int
    accepts: int
    predicted: float

    @property
    def rate(self) -> float:
        return self.accepts / self.trials

    @property
    def sigma(self) -> float:
        p = self.predicted
        return math.sqrt(max(p * (1 - p), 1e-300) / self.trials)

    @property
    def z_score(self) -> float:
        return (self.rate - self.predicted) / self.sigma


class _OutcomeCache:
    def __init__(self, state: RealStateVector):
        self.state = state
        self._cache: dict[tuple, tuple] = {}

    def draw(self, basis: tuple, u: float) -> tuple:
        hit = self._cache.get(basis)
        if hit is None:
            measured, probs = outcome_probabilities(basis, self.state)
            hit = (measured, np.cumsum(probs))
            self._cache[basis] = hit
        measured, cum = hit
        j = min(int(np.searchsorted(cum, u, side="right")), cum.shape[0] - 1)
        return _record(basis, measured, j)


def monte_carlo_decide(sampler: MFSampler, state: RealStateVector, trials: int,
                       seed=None) -> MonteCarloResult:
    rng = np.random.default_rng(seed)
    outcomes = _OutcomeCache(state)
    accepts = 0
    for _ in range(trials):
        k, b_hat = sample_basis(sampler, sampler.random_tape(rng))
        accepts += decide(sampler.hamiltonian, k, outcomes.draw(b_hat, rng.random()))
    return MonteCarloResult(trials, accepts, mf_law(sampler.hamiltonian, state))


def monte_carlo_vmf(sampler: MFSampler, state: RealStateVector, trials: int,
                    seed=None) -> MonteCarloResult:
    rng = np.random.default_rng(seed)
    q = sampler.num_qubits
    outcomes = _OutcomeCache(state)
    accepts = 0
    for _ in range(trials):
        b = tuple(int(x) for x in rng.integers(0, 2, size=q))
        m = outcomes.draw(b, rng.random())
        accepts += vmf(sampler, sampler.random_tape(rng), b, m)
    return MonteCarloResult(trials, accepts,
                            vmf_law(sampler.hamiltonian, state, sampler.locality))
