"""Random degree-n covers of the genus-2 surface: Hom(Gamma, S_n).

Permutations act on {0, ..., n-1}. A homomorphism is stored as the tuple of
images of the generators a1..a2g; the image of a word is the composition of
the letter images in reading order, so ``apply_word(h, w)(i)`` follows the
letters from right to left.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import permutations
from typing import Iterable, Iterator, Sequence

import numpy as np
from numba import njit

from .surface_group import GroupWord, _letters


class BudgetExceeded(RuntimeError):
    """Rejection sampling exceeded its trial cap."""


class TooLarge(ValueError):
    """Exact enumeration requested beyond the supported degree."""


class UnderdeterminedFit(ValueError):
    pass


@dataclass(frozen=True)
class Permutation:
    images: tuple[int, ...]

    def __post_init__(self):
        images = tuple(int(x) for x in self.images)
        object.__setattr__(self, "images", images)
        if sorted(images) != list(range(len(images))):
            raise ValueError("images do not form a permutation")

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def from_cycles(cls, n: int, *cycles: Sequence[int]) -> "Permutation":
        images = list(range(n))
        for cyc in cycles:
            for i, x in enumerate(cyc):
                images[x] = cyc[(i + 1) % len(cyc)]
        return cls(tuple(images))

    @property
    def degree(self) -> int:
        return len(self.images)

    def __call__(self, i: int) -> int:
        return self.images[i]

    def inverse(self) -> "Permutation":
        out = [0] * self.degree
        for i, x in enumerate(self.images):
            out[x] = i
        return Permutation(tuple(out))

    def __pow__(self, k: int) -> "Permutation":
        if k < 0:
            return self.inverse() ** (-k)
        arr = np.asarray(self.images)
        out = np.arange(self.degree)
        for _ in range(k):
            out = arr[out]
        return Permutation(tuple(out.tolist()))

    def cycle_type(self) -> dict[int, int]:
        seen = [False] * self.degree
        counts: dict[int, int] = {}
        for i in range(self.degree):
            if seen[i]:
                continue
            length, j = 0, i
            while not seen[j]:
                seen[j] = True
                j = self.images[j]
                length += 1
            counts[length] = counts.get(length, 0) + 1
        return counts


def perm_compose(a: Permutation, b: Permutation) -> Permutation:
    """(a o b)(i) = a(b(i))."""
    if a.degree != b.degree:
        raise ValueError("degree mismatch")
    return Permutation(tuple(a.images[x] for x in b.images))


def fix_count(p: Permutation) -> int:
    return sum(1 for i, x in enumerate(p.images) if i == x)


def cycle_orbit_identity_check(p: Permutation, k: int) -> bool:
    """#Fix(p^k) equals the sum over d | k of d times the number of d-cycles."""
    if k < 1:
        raise ValueError("k must be positive")
    ct = p.cycle_type()
    rhs = sum(d * c for d, c in ct.items() if k % d == 0)
    return fix_count(p ** k) == rhs


def _relation_holds(gens: Sequence[Sequence[int]]) -> bool:
    n = len(gens[0])
    x = np.arange(n)
    word = []
    for i in range(len(gens) // 2):
        word += [2 * i + 1, 2 * i + 2, -(2 * i + 1), -(2 * i + 2)]
    arrs = {i + 1: np.asarray(g) for i, g in enumerate(gens)}
    for i in list(arrs):
        inv = np.empty(n, dtype=np.int64)
        inv[arrs[i]] = np.arange(n)
        arrs[-i] = inv
    for letter in reversed(word):
        x = arrs[letter][x]
    return bool(np.array_equal(x, np.arange(n)))


@dataclass(frozen=True)
class CoverHom:
    """A homomorphism Gamma -> S_n given by the images of a1..a2g."""

    genus: int
    degree: int
    gens: tuple[Permutation, ...]

    def __post_init__(self):
        if len(self.gens) != 2 * self.genus:
            raise ValueError("need 2g generator images")
        if any(p.degree != self.degree for p in self.gens):
            raise ValueError("generator degree mismatch")
        if not _relation_holds([p.images for p in self.gens]):
            raise ValueError("surface relation fails")

    @classmethod
    def from_arrays(cls, genus: int, arrays) -> "CoverHom":
        gens = tuple(Permutation(tuple(int(v) for v in a)) for a in arrays)
        return cls(genus, gens[0].degree, gens)

    def as_array(self) -> np.ndarray:
        return np.array([p.images for p in self.gens], dtype=np.int64)


def apply_word(h: CoverHom, w) -> Permutation:
    letters = _letters(w)
    arrs = h.as_array()
    n = h.degree
    x = np.arange(n)
    inv = np.empty_like(arrs)
    for i in range(arrs.shape[0]):
        inv[i, arrs[i]] = np.arange(n)
    for letter in reversed(letters):
        x = (arrs if letter > 0 else inv)[abs(letter) - 1][x]
    return Permutation(tuple(x.tolist()))


# ---------------------------------------------------------------------------
# Rejection sampling

@njit(cache=True, nogil=True)
def _shuffle(gen, a, n):
    """Fisher-Yates shuffle drawing all indices from a few uniform doubles.

    Each double is decoded in mixed radix: x = u (i+1), j = floor(x),
    u = x - j. A fresh double is drawn once the consumed radix product
    reaches 2^20, so every index is read from at least 33 random bits.
    """
    for i in range(n):
        a[i] = i
    u = gen.random()
    used = 1.0
    for i in range(n - 1, 0, -1):
        if used * (i + 1) > 1048576.0:
            u = gen.random()
            used = 1.0
        x = u * (i + 1)
        j = np.int64(x)
        if j > i:
            j = i
        u = x - j
        used *= i + 1
        t = a[i]
        a[i] = a[j]
        a[j] = t


@njit(cache=True, nogil=True)
def _rejection_block(gen, genus, n, count, cap, out, trials):
    """Fill ``out[k]`` with accepted generator tuples; return -1 or the index
    of the first sample exceeding ``cap`` trials."""
    m = 2 * genus
    a = np.empty((m, n), np.int64)
    inv = np.empty((m, n), np.int64)
    for k in range(count):
        t = 0
        while True:
            t += 1
            if t > cap:
                trials[k] = t - 1
                return k
            for g in range(m):
                _shuffle(gen, a[g], n)
                for i in range(n):
                    inv[g, a[g, i]] = i
            ok = True
            for x0 in range(n):
                x = x0
                # word a1 a2 A1 A2 a3 a4 A3 A4 ..., applied right to left
                for c in range(genus - 1, -1, -1):
                    p = 2 * c
                    x = inv[p + 1, x]
                    x = inv[p, x]
                    x = a[p + 1, x]
                    x = a[p, x]
                if x != x0:
                    ok = False
                    break
            if ok:
                break
        for g in range(m):
            for i in range(n):
                out[k, g, i] = a[g, i]
        trials[k] = t
    return -1


DEFAULT_TRIAL_CAP = 10**12
BLOCK_SIZE = 64


def sample_hom_rejection(g: int, n: int, rng: np.random.Generator,
                         max_trials: int = DEFAULT_TRIAL_CAP) -> tuple[CoverHom, int]:
    """Exact uniform sample from Hom(Gamma, S_n) and the number of trials used."""
    if g < 2 or n < 1:
        raise ValueError("need g >= 2 and n >= 1")
    out = np.empty((1, 2 * g, n), np.int64)
    trials = np.zeros(1, np.int64)
    bad = _rejection_block(rng, g, n, 1, max_trials, out, trials)
    if bad >= 0:
        raise BudgetExceeded(f"no acceptance within {max_trials} trials at n={n}")
    return CoverHom.from_arrays(g, out[0]), int(trials[0])


def block_generator(seed: int, g: int, n: int, block: int) -> np.random.Generator:
    """Independent stream for one block of samples.

    The stream depends only on (seed, g, n, block), so results do not depend
    on how blocks are distributed over threads.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, g, n, block])))


def default_threads() -> int:
    env = os.environ.get("HYPERCOVER_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class HomSample:
    """A batch of accepted homomorphisms stored as arrays."""

    genus: int
    degree: int
    gens: np.ndarray    # (count, 2g, n)
    trials: np.ndarray  # (count,)

    def __len__(self):
        return self.gens.shape[0]

    def hom(self, k: int) -> CoverHom:
        return CoverHom.from_arrays(self.genus, self.gens[k])


def sample_homs(g: int, n: int, count: int, seed: int, threads: int | None = None,
                max_trials: int = DEFAULT_TRIAL_CAP) -> HomSample:
    """``count`` independent uniform samples, reproducible from ``seed``."""
    threads = threads or default_threads()
    nblocks = -(-count // BLOCK_SIZE)
    out = np.empty((count, 2 * g, n), np.int64)
    trials = np.zeros(count, np.int64)

    def run(b):
        lo = b * BLOCK_SIZE
        hi = min(count, lo + BLOCK_SIZE)
        gen = block_generator(seed, g, n, b)
        return _rejection_block(gen, g, n, hi - lo, max_trials, out[lo:hi], trials[lo:hi])

    if threads == 1 or nblocks == 1:
        status = [run(b) for b in range(nblocks)]
    else:
        with ThreadPoolExecutor(threads) as pool:
            status = list(pool.map(run, range(nblocks)))
    if any(s >= 0 for s in status):
        raise BudgetExceeded(f"a sample exceeded {max_trials} trials at n={n}")
    return HomSample(g, n, out, trials)


def format_sample_line(h: CoverHom, trials: int) -> str:
    gens = ";".join(",".join(str(x) for x in p.images) for p in h.gens)
    return f"n={h.degree} gens={gens} trials={trials}"


def parse_sample_line(line: str, genus: int = 2) -> tuple[CoverHom, int]:
    parts = dict(tok.split("=", 1) for tok in line.split())
    arrays = [[int(x) for x in p.split(",")] for p in parts["gens"].split(";")]
    h = CoverHom.from_arrays(genus, arrays)
    if h.degree != int(parts["n"]):
        raise ValueError("degree field disagrees with generator images")
    return h, int(parts["trials"])


# ---------------------------------------------------------------------------
# Exact enumeration

MAX_ENUM_DEGREE = 5


@lru_cache(maxsize=None)
def perm_table(n: int) -> np.ndarray:
    """All permutations of {0..n-1} in lexicographic order of images."""
    return np.array(list(permutations(range(n))), dtype=np.int64).reshape(-1, n)


@njit(cache=True)
def _enumerate_genus2(table, fill, out):
    """Count (or write) all index tuples (i1, i2, i3, i4) satisfying the relation."""
    m, n = table.shape
    inv = np.empty((m, n), np.int64)
    for k in range(m):
        for i in range(n):
            inv[k, table[k, i]] = i
    c = np.empty(n, np.int64)
    cnt = 0
    for i1 in range(m):
        for i2 in range(m):
            # c = a1 a2 A1 A2 as a map x -> a1(a2(A1(A2(x))))
            for x in range(n):
                c[x] = table[i1, table[i2, inv[i1, inv[i2, x]]]]
            for i3 in range(m):
                for i4 in range(m):
                    ok = True
                    for x in range(n):
                        y = c[table[i3, table[i4, inv[i3, inv[i4, x]]]]]
                        if y != x:
                            ok = False
                            break
                    if ok:
                        if fill:
                            out[cnt, 0] = i1
                            out[cnt, 1] = i2
                            out[cnt, 2] = i3
                            out[cnt, 3] = i4
                        cnt += 1
    return cnt


@lru_cache(maxsize=None)
def hom_index_table(n: int) -> np.ndarray:
    """Rows (i1..i4) of permutation indices for every element of Hom(Gamma, S_n)."""
    if n > MAX_ENUM_DEGREE:
        raise TooLarge(f"exact enumeration supports n <= {MAX_ENUM_DEGREE}")
    table = perm_table(n)
    dummy = np.empty((0, 4), np.int64)
    cnt = _enumerate_genus2(table, False, dummy)
    out = np.empty((cnt, 4), np.int64)
    _enumerate_genus2(table, True, out)
    out.setflags(write=False)
    return out


def enumerate_homs(g: int, n: int) -> Iterator[CoverHom]:
    """Every element of Hom(Gamma, S_n), lexicographic in the generator tuple."""
    if g != 2:
        raise ValueError("exact enumeration is implemented for genus 2")
    idx = hom_index_table(n)
    table = perm_table(n)
    for row in idx:
        yield CoverHom.from_arrays(2, table[row])


def enumerate_hom_arrays(n: int) -> np.ndarray:
    """All homomorphisms as an array of shape (count, 4, n)."""
    return perm_table(n)[hom_index_table(n)]


# ---------------------------------------------------------------------------
# Counting

@dataclass(frozen=True)
class PartitionEntry:
    parts: tuple[int, ...]
    dim: int


@dataclass(frozen=True)
class PartitionTable:
    n: int
    entries: tuple[PartitionEntry, ...]


def _partitions(n: int, largest: int | None = None) -> Iterator[tuple[int, ...]]:
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for k in range(min(n, largest), 0, -1):
        for rest in _partitions(n - k, k):
            yield (k,) + rest


def hook_dimension(parts: Sequence[int]) -> int:
    n = sum(parts)
    conj = [sum(1 for p in parts if p > j) for j in range(parts[0])] if parts else []
    hooks = 1
    for i, row in enumerate(parts):
        for j in range(row):
            hooks *= (row - j - 1) + (conj[j] - i - 1) + 1
    return math.factorial(n) // hooks


@lru_cache(maxsize=None)
def partition_table(n: int) -> PartitionTable:
    entries = tuple(PartitionEntry(p, hook_dimension(p)) for p in _partitions(n))
    return PartitionTable(n, entries)


def witten_zeta(s: int, n: int, exact: bool = False):
    """zeta(s; S_n) = sum over irreducible characters of dim^-s."""
    if n < 1:
        raise ValueError("n must be positive")
    total = sum(Fraction(1, e.dim ** s) for e in partition_table(n).entries)
    return total if exact else float(total)


LOG_THRESHOLD_DEGREE = 60
NEAR_TRIVIAL_DEPTH = 12


def _zeta_near_trivial(s: int, n: int, depth: int = NEAR_TRIVIAL_DEPTH) -> float:
    """zeta(s; S_n) summed over partitions with a first row or first column of
    length >= n - depth; requires n > 2 depth + 1 so the two families are disjoint.

    Every omitted partition has dimension at least that of (n - depth - 1, depth + 1),
    which for n > 60 makes the omitted part negligible in double precision.
    """
    if n <= 2 * depth + 1:
        raise ValueError("degree too small for the near-trivial sum")
    total = 0.0
    for j in range(depth + 1):
        for mu in _partitions(j):
            total += 1.0 / float(hook_dimension((n - j,) + mu)) ** s
    return 2.0 * total


def hom_count(g: int, n: int, log: bool | None = None):
    """|Hom(Gamma_g, S_n)| = (n!)^(2g-1) zeta(2g-2; S_n).

    Returns the exact integer, or its natural logarithm when ``log`` is set
    (default: for n above ``LOG_THRESHOLD_DEGREE``).
    """
    if log is None:
        log = n > LOG_THRESHOLD_DEGREE
    if log and n > LOG_THRESHOLD_DEGREE:
        # the full partition sum is out of reach (p(80) ~ 1.6e7)
        return (2 * g - 1) * math.lgamma(n + 1) + math.log(_zeta_near_trivial(2 * g - 2, n))
    z = witten_zeta(2 * g - 2, n, exact=True)
    if log:
        return (2 * g - 1) * math.lgamma(n + 1) + math.log(z)
    count = math.factorial(n) ** (2 * g - 1) * z
    assert count.denominator == 1
    return int(count)


def acceptance_rate(g: int, n: int) -> float:
    return float(witten_zeta(2 * g - 2, n, exact=True) / math.factorial(n))


# ---------------------------------------------------------------------------
# Moments

def word_images(gens: np.ndarray, w) -> np.ndarray:
    """Images of a word under a batch of homomorphisms; gens has shape (H, 2g, n)."""
    H, _, n = gens.shape
    rows = np.arange(H)[:, None]
    x = np.broadcast_to(np.arange(n), (H, n)).copy()
    inv = None
    for letter in reversed(_letters(w)):
        if letter > 0:
            x = gens[:, letter - 1, :][rows, x]
        else:
            if inv is None:
                inv = np.empty_like(gens)
                np.put_along_axis(inv, gens, np.broadcast_to(np.arange(n), gens.shape), axis=2)
            x = inv[:, -letter - 1, :][rows, x]
    return x


def batch_fix_counts(gens: np.ndarray, w) -> np.ndarray:
    x = word_images(gens, w)
    return (x == np.arange(gens.shape[2])).sum(axis=1)


def moment_exact(g: int, n: int, words: Sequence, diagonal: int | None = None,
                 exact: bool = False):
    """E over uniform Hom(Gamma, S_n) of prod_w Fix(rho(w)), or of
    prod_w 1[rho(w)(i) = i] when ``diagonal = i``."""
    if g != 2:
        raise ValueError("exact moments are implemented for genus 2")
    if n > MAX_ENUM_DEGREE:
        raise TooLarge(f"exact moments support n <= {MAX_ENUM_DEGREE}")
    gens = enumerate_hom_arrays(n)
    prod = np.ones(gens.shape[0], dtype=np.int64)
    for w in words:
        if diagonal is None:
            prod *= batch_fix_counts(gens, w)
        else:
            prod *= word_images(gens, w)[:, diagonal] == diagonal
    value = Fraction(int(prod.sum()), gens.shape[0])
    return value if exact else float(value)


@dataclass(frozen=True)
class RationalFit:
    coeffs: np.ndarray  # increasing powers of t = 1/n
    residuals: np.ndarray
    limit: float

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.coeffs)


def rational_fit(momentsByDegree: Iterable[tuple[int, float]], maxDeg: int) -> RationalFit:
    """Least-squares polynomial in t = 1/n through (n, value) data."""
    data = list(momentsByDegree)
    ns = [n for n, _ in data]
    if len(set(ns)) != len(ns):
        raise UnderdeterminedFit("degrees must be distinct")
    if len(data) < maxDeg + 1:
        raise UnderdeterminedFit(f"need at least {maxDeg + 1} points, got {len(data)}")
    t = 1.0 / np.array(ns, dtype=float)
    y = np.array([float(v) for _, v in data])
    coeffs = np.polynomial.polynomial.polyfit(t, y, maxDeg)
    resid = y - np.polynomial.polynomial.polyval(t, coeffs)
    return RationalFit(coeffs, resid, float(coeffs[0]))
