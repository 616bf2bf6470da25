"""Y-free Pauli words and real Hamiltonians built from them.

A word is a tensor product of I, X and Z over ``num_qubits`` qubits, stored
sparsely as ``(index, letter)`` pairs with 1-based indices.  Qubit 1 is the
most significant bit of a basis-state index (big-endian), the same
convention as :mod:`qiparg.sim`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from qiparg.errors import (
    DimensionMismatch,
    NotHermitian,
    ParseError,
    TooLarge,
    YFreeViolation,
    ZeroMatrix,
)

LETTERS = ("X", "Z")
HERMITIAN_TOL = 1e-9
CANON_ATOL = 1e-13
MAX_WORD_MATRIX_QUBITS = 10
MAX_DECOMPOSE_QUBITS = 4
MAX_DENSE_QUBITS = 12

_I2 = np.eye(2)
_X2 = np.array([[0.0, 1.0], [1.0, 0.0]])
_Y2 = np.array([[0.0, -1.0j], [1.0j, 0.0]])
_Z2 = np.array([[1.0, 0.0], [0.0, -1.0]])
_SINGLE = {"I": _I2, "X": _X2, "Y": _Y2, "Z": _Z2}


def _bit(num_qubits: int, index: int) -> int:
    return 1 << (num_qubits - index)


@dataclass(frozen=True)
class PauliWord:
    """Tensor product of X/Z letters; absent indices carry the identity."""

    num_qubits: int
    letters: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        if self.num_qubits < 0:
            raise ValueError("num_qubits must be non-negative")
        seen = set()
        for idx, letter in self.letters:
            if letter == "Y":
                raise YFreeViolation("Y letters are not representable")
            if letter not in LETTERS:
                raise ValueError(f"unknown Pauli letter {letter!r}")
            if not 1 <= idx <= self.num_qubits:
                raise DimensionMismatch(
                    f"index {idx} outside 1..{self.num_qubits}")
            if idx in seen:
                raise ValueError(f"index {idx} appears twice")
            seen.add(idx)
        object.__setattr__(self, "letters", tuple(sorted(self.letters)))

    @classmethod
    def from_dict(cls, num_qubits: int, mapping: Mapping[int, str]) -> "PauliWord":
        return cls(num_qubits, tuple((int(i), str(l)) for i, l in mapping.items()
                                     if l != "I"))

    @classmethod
    def from_label(cls, label: str) -> "PauliWord":
        """``"XIZ"`` -> X on qubit 1, Z on qubit 3."""
        return cls(len(label), tuple((i + 1, ch) for i, ch in enumerate(label)
                                     if ch != "I"))

    @classmethod
    def identity(cls, num_qubits: int) -> "PauliWord":
        return cls(num_qubits)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.letters)

    @property
    def locality(self) -> int:
        return len(self.letters)

    def as_dict(self) -> dict[int, str]:
        return dict(self.letters)

    def label(self) -> str:
        out = ["I"] * self.num_qubits
        for i, l in self.letters:
            out[i - 1] = l
        return "".join(out)

    @cached_property
    def x_mask(self) -> int:
        return sum(_bit(self.num_qubits, i) for i, l in self.letters if l == "X")

    @cached_property
    def z_mask(self) -> int:
        return sum(_bit(self.num_qubits, i) for i, l in self.letters if l == "Z")

    def sort_key(self):
        return (self.support, tuple(l for _, l in self.letters))

    def embed(self, num_qubits: int, positions: Mapping[int, int] | None = None,
              offset: int = 0) -> "PauliWord":
        """Relabel onto a register of ``num_qubits``.

        ``positions`` maps old index -> new index; without it every index is
        shifted by ``offset``.
        """
        if positions is None:
            return PauliWord(num_qubits, tuple((i + offset, l) for i, l in self.letters))
        return PauliWord(num_qubits, tuple((positions[i], l) for i, l in self.letters))

    def __str__(self):
        if not self.letters:
            return "I"
        return " ".join(f"{l}{i}" for i, l in self.letters)


def _signs(word: PauliWord, idx: np.ndarray) -> np.ndarray:
    return 1.0 - 2.0 * (np.bitwise_count(idx & word.z_mask) & 1)


def word_matrix(word: PauliWord) -> np.ndarray:
    """Dense real matrix of ``word`` (at most 10 qubits)."""
    q = word.num_qubits
    if q > MAX_WORD_MATRIX_QUBITS:
        raise TooLarge(f"word_matrix limited to {MAX_WORD_MATRIX_QUBITS} qubits, got {q}")
    idx = np.arange(1 << q, dtype=np.int64)
    out = np.zeros((1 << q, 1 << q))
    out[idx, idx ^ word.x_mask] = _signs(word, idx)
    return out


def apply_word(word: PauliWord, vec: np.ndarray) -> np.ndarray:
    """Return ``word @ vec`` without realizing the matrix."""
    idx = np.arange(vec.shape[0], dtype=np.int64)
    return _signs(word, idx) * vec[idx ^ word.x_mask]


@dataclass(frozen=True)
class Hamiltonian:
    """Ordered list of ``(coeff, word)`` terms, duplicates allowed."""

    num_qubits: int
    terms: tuple[tuple[float, PauliWord], ...] = ()

    def __post_init__(self):
        terms = []
        for coeff, word in self.terms:
            coeff = float(coeff)
            if coeff == 0.0 or not math.isfinite(coeff):
                raise ValueError(f"coefficients must be finite and nonzero, got {coeff}")
            if word.num_qubits != self.num_qubits:
                raise DimensionMismatch(
                    f"word on {word.num_qubits} qubits in a {self.num_qubits}-qubit Hamiltonian")
            terms.append((coeff, word))
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def from_terms(cls, num_qubits: int, terms: Iterable) -> "Hamiltonian":
        """Build from ``(coeff, word|label|dict)`` pairs, silently skipping zeros."""
        out = []
        for coeff, word in terms:
            if isinstance(word, str):
                word = PauliWord.from_label(word)
            elif isinstance(word, Mapping):
                word = PauliWord.from_dict(num_qubits, word)
            if coeff != 0:
                out.append((float(coeff), word))
        return cls(num_qubits, tuple(out))

    @classmethod
    def identity(cls, num_qubits: int, coeff: float = 1.0) -> "Hamiltonian":
        return cls(num_qubits, ((coeff, PauliWord.identity(num_qubits)),))

    @cached_property
    def one_norm(self) -> float:
        return float(sum(abs(c) for c, _ in self.terms))

    @property
    def locality(self) -> int:
        return max((w.locality for _, w in self.terms), default=0)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for c, _ in self.terms])

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def _check_same(self, other):
        if not isinstance(other, Hamiltonian):
            return NotImplemented
        if other.num_qubits != self.num_qubits:
            raise DimensionMismatch("Hamiltonians act on different qubit counts")
        return None

    def __add__(self, other):
        bad = self._check_same(other)
        if bad is NotImplemented:
            return bad
        return Hamiltonian(self.num_qubits, self.terms + other.terms)

    def __mul__(self, scalar):
        if not isinstance(scalar, (int, float, np.floating, np.integer)):
            return NotImplemented
        if scalar == 0:
            return Hamiltonian(self.num_qubits)
        return Hamiltonian(self.num_qubits, tuple((c * scalar, w) for c, w in self.terms))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        bad = self._check_same(other)
        if bad is NotImplemented:
            return bad
        return self + (-other)

    def embed(self, num_qubits: int, positions: Mapping[int, int] | None = None,
              offset: int = 0) -> "Hamiltonian":
        return Hamiltonian(num_qubits, tuple(
            (c, w.embed(num_qubits, positions, offset)) for c, w in self.terms))

    def kron(self, other: "Hamiltonian") -> "Hamiltonian":
        """Tensor product ``self ⊗ other``; ``other`` occupies the trailing qubits."""
        q = self.num_qubits + other.num_qubits
        terms = []
        for c1, w1 in self.terms:
            for c2, w2 in other.terms:
                letters = w1.letters + tuple((i + self.num_qubits, l) for i, l in w2.letters)
                terms.append((c1 * c2, PauliWord(q, letters)))
        return Hamiltonian(q, tuple(terms))

    def to_matrix(self) -> np.ndarray:
        q = self.num_qubits
        if q > MAX_DENSE_QUBITS:
            raise TooLarge(f"dense realization limited to {MAX_DENSE_QUBITS} qubits, got {q}")
        idx = np.arange(1 << q, dtype=np.int64)
        out = np.zeros((1 << q, 1 << q))
        for coeff, word in self.terms:
            out[idx, idx ^ word.x_mask] += coeff * _signs(word, idx)
        return out

    def apply(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (1 << self.num_qubits,):
            raise DimensionMismatch("vector length does not match 2**num_qubits")
        out = np.zeros_like(vec)
        for coeff, word in self.terms:
            out += coeff * apply_word(word, vec)
        return out

    def expectation(self, vec: np.ndarray) -> float:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (1 << self.num_qubits,):
            raise DimensionMismatch("vector length does not match 2**num_qubits")
        idx = np.arange(vec.shape[0], dtype=np.int64)
        # group by X mask: one gather per distinct flip pattern
        by_mask: dict[int, np.ndarray] = {}
        total = 0.0
        for coeff, word in self.terms:
            flipped = by_mask.get(word.x_mask)
            if flipped is None:
                flipped = vec * vec[idx ^ word.x_mask]
                by_mask[word.x_mask] = flipped
            total += coeff * float(np.dot(_signs(word, idx), flipped))
        return total

    def __str__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"{c:g}*[{w}]" for c, w in self.terms)


def single_qubit(coeffs: Mapping[str, float]) -> Hamiltonian:
    """One-qubit operator from ``{"I": a, "X": b, "Z": c}``."""
    return Hamiltonian.from_terms(1, [(c, PauliWord.from_label(l)) for l, c in coeffs.items()])


PROJ0 = single_qubit({"I": 0.5, "Z": 0.5})
PROJ1 = single_qubit({"I": 0.5, "Z": -0.5})
PAULI_X = single_qubit({"X": 1.0})
PAULI_Z = single_qubit({"Z": 1.0})
IDENTITY1 = single_qubit({"I": 1.0})


def local_product(num_qubits: int, factors: Mapping[int, Hamiltonian]) -> Hamiltonian:
    """Expand a tensor product of one-qubit operators placed at given indices."""
    items = sorted(factors.items())
    prod = Hamiltonian.identity(0)
    for _, h in items:
        prod = prod.kron(h)
    positions = {k + 1: idx for k, (idx, _) in enumerate(items)}
    return prod.embed(num_qubits, positions)


def canonicalize(h: Hamiltonian) -> Hamiltonian:
    """Merge duplicate words, drop vanishing coefficients, sort terms."""
    acc: dict[PauliWord, float] = {}
    for coeff, word in h.terms:
        acc[word] = acc.get(word, 0.0) + coeff
    terms = [(c, w) for w, c in acc.items() if abs(c) > CANON_ATOL]
    terms.sort(key=lambda t: t[1].sort_key())
    return Hamiltonian(h.num_qubits, tuple(terms))


def operator_norm(h: Hamiltonian) -> float:
    """Largest singular value of the realized matrix (at most 12 qubits)."""
    if h.num_qubits > MAX_DENSE_QUBITS:
        raise TooLarge(f"operator_norm limited to {MAX_DENSE_QUBITS} qubits")
    if not h.terms:
        return 0.0
    evals = np.linalg.eigvalsh(h.to_matrix())
    return float(np.max(np.abs(evals)))


def _num_qubits_of(matrix: np.ndarray, limit: int) -> int:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch("matrix must be square")
    dim = matrix.shape[0]
    k = dim.bit_length() - 1
    if dim < 1 or (1 << k) != dim:
        raise DimensionMismatch(f"dimension {dim} is not a power of two")
    if k > limit:
        raise TooLarge(f"decomposition limited to {limit} qubits, got {k}")
    return k


def _dense_label(label: str) -> np.ndarray:
    out = np.ones((1, 1))
    for ch in label:
        out = np.kron(out, _SINGLE[ch])
    return out


def decompose_yfree(matrix, tol: float = HERMITIAN_TOL) -> Hamiltonian:
    """Coefficients ``tr(P M) / 2**k`` over all I/X/Z words of a Hermitian matrix.

    Raises :class:`YFreeViolation` when the I/X/Z part does not reconstruct
    the matrix, i.e. the matrix has Y content.
    """
    m = np.asarray(matrix)
    k = _num_qubits_of(m, MAX_DECOMPOSE_QUBITS)
    if np.max(np.abs(m - m.conj().T), initial=0.0) > tol:
        raise NotHermitian("matrix is not Hermitian")
    dim = 1 << k
    terms = []
    recon = np.zeros((dim, dim), dtype=complex)
    for label in itertools.product("IXZ", repeat=k):
        label = "".join(label)
        p = _dense_label(label)
        c = float(np.real(np.trace(p @ m))) / dim
        recon += c * p
        if abs(c) >= tol:
            terms.append((c, PauliWord.from_label(label)))
    residual = np.max(np.abs(m - recon), initial=0.0)
    if residual > tol:
        raise YFreeViolation(f"matrix has Y content (residual {residual:.3g})")
    terms.sort(key=lambda t: t[1].sort_key())
    return Hamiltonian(k, tuple(terms))


def pauli_coefficients(matrix) -> dict[str, float]:
    """Full four-letter Pauli coefficients of a Hermitian matrix, keyed by label.

    Only used for norm bookkeeping; the algebra elsewhere stays Y-free.
    """
    m = np.asarray(matrix)
    k = _num_qubits_of(m, MAX_DECOMPOSE_QUBITS)
    dim = 1 << k
    out = {}
    for label in itertools.product("IXYZ", repeat=k):
        label = "".join(label)
        out[label] = float(np.real(np.trace(_dense_label(label) @ m))) / dim
    return out


def ccz_decomposition() -> Hamiltonian:
    """CCZ as ``(I - |11><11|) ⊗ I + |11><11| ⊗ Z``, expanded and merged."""
    p11 = PROJ1.kron(PROJ1)
    ccz = (Hamiltonian.identity(2) - p11).kron(IDENTITY1) + p11.kron(PAULI_Z)
    return canonicalize(ccz)


@dataclass(frozen=True)
class NormBoundReport:
    k: int
    op_norm: float
    one_norm: float
    lower: float
    upper: float
    nonzero_count: int
    lower_ok: bool = field(init=False)
    upper_ok: bool = field(init=False)
    count_ok: bool = field(init=False)

    def __post_init__(self):
        slack = 1e-12 * max(1.0, self.op_norm)
        object.__setattr__(self, "lower_ok", self.lower <= self.one_norm + slack)
        object.__setattr__(self, "upper_ok", self.one_norm <= self.upper + slack)
        object.__setattr__(self, "count_ok", self.nonzero_count <= 4 ** self.k)

    @property
    def passed(self) -> bool:
        return self.lower_ok and self.upper_ok and self.count_ok


def one_norm_bound_check(matrix, decomposition: Hamiltonian | None = None,
                         zero_tol: float = 1e-12) -> NormBoundReport:
    """Check ``‖M‖/2^(k/2) <= Σ|c_P| <= 2^k ‖M‖`` with k the nontrivial support size.

    Without ``decomposition`` the full four-letter coefficients are used, so
    matrices with Y content are accepted here.
    """
    m = np.asarray(matrix)
    _num_qubits_of(m, MAX_DECOMPOSE_QUBITS)
    op_norm = float(np.max(np.abs(np.linalg.eigvalsh(m))))
    if op_norm <= zero_tol:
        raise ZeroMatrix("matrix has zero operator norm")
    if decomposition is None:
        coeffs = {l: c for l, c in pauli_coefficients(m).items() if abs(c) > zero_tol}
        support = {i for l in coeffs for i, ch in enumerate(l) if ch != "I"}
        one_norm = sum(abs(c) for c in coeffs.values())
        count = len(coeffs)
    else:
        support = {i for _, w in decomposition.terms for i in w.support}
        one_norm = decomposition.one_norm
        count = len(canonicalize(decomposition))
    k = len(support)
    return NormBoundReport(
        k=k, op_norm=op_norm, one_norm=one_norm,
        lower=op_norm / 2 ** (k / 2), upper=2 ** k * op_norm, nonzero_count=count)


# --- file format ---------------------------------------------------------

def dumps_hamiltonian(h: Hamiltonian, metadata: Mapping[str, object] | None = None) -> str:
    lines = []
    for key, value in (metadata or {}).items():
        lines.append(f"{key} {value}")
    lines.append(f"qubits {h.num_qubits}")
    for coeff, word in h.terms:
        letters = " ".join(f"{i}:{l}" for i, l in word.letters)
        lines.append(f"{coeff!r} {letters}".rstrip())
    return "\n".join(lines) + "\n"


def loads_hamiltonian(text: str, path=None) -> tuple[Hamiltonian, dict[str, str]]:
    """Parse the term-per-line format; returns the Hamiltonian and header metadata."""
    metadata: dict[str, str] = {}
    num_qubits = None
    raw_terms = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            coeff = float(head)
        except ValueError:
            if len(rest) != 1:
                raise ParseError(f"malformed header line {line!r}", path, lineno)
            if head == "qubits":
                try:
                    num_qubits = int(rest[0])
                except ValueError:
                    raise ParseError("qubit count must be an integer", path, lineno) from None
            else:
                metadata[head] = rest[0]
            continue
        letters = []
        for tok in rest:
            try:
                idx, letter = tok.split(":")
                letters.append((int(idx), letter))
            except ValueError:
                raise ParseError(f"malformed letter {tok!r}", path, lineno) from None
        raw_terms.append((lineno, coeff, letters))
    if num_qubits is None:
        raise ParseError("missing 'qubits' header", path)
    terms = []
    for lineno, coeff, letters in raw_terms:
        try:
            terms.append((coeff, PauliWord(num_qubits, tuple(letters))))
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
    try:
        return Hamiltonian(num_qubits, tuple(terms)), metadata
    except ValueError as exc:
        raise ParseError(str(exc), path) from None
