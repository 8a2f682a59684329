"""Genus-2 surface group: words, conjugacy canonical forms, the Bolza
Fuchsian realization and the primitive closed geodesic catalog.

Letters are signed integers ``±1 .. ±2g``; a negative letter is the inverse
generator. The surface relator is ``a1 a2 a1^-1 a2^-1 a3 a4 a3^-1 a4^-1``.
"""
from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from numba import njit


class NonHyperbolic(ValueError):
    """Raised when a matrix is elliptic or parabolic."""


class CatalogUnstable(RuntimeError):
    """Raised when the catalog changes between word bounds L and L+2."""


class GroupConstructionError(RuntimeError):
    pass


def _letters(w) -> tuple[int, ...]:
    if isinstance(w, GroupWord):
        return w.letters
    return tuple(int(x) for x in w)


@dataclass(frozen=True)
class GroupWord:
    """A freely reduced word in the surface group generators."""

    letters: tuple[int, ...] = ()
    genus: int = 2

    def __post_init__(self):
        letters = tuple(int(x) for x in self.letters)
        object.__setattr__(self, "letters", letters)
        if self.genus < 2:
            raise ValueError("genus must be at least 2")
        top = 2 * self.genus
        for i, x in enumerate(letters):
            if x == 0 or abs(x) > top:
                raise ValueError(f"letter {x} outside ±1..±{top}")
            if i and letters[i - 1] == -x:
                raise ValueError("word is not freely reduced")

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def inverse(self) -> "GroupWord":
        return GroupWord(tuple(-x for x in reversed(self.letters)), self.genus)

    def __mul__(self, other: "GroupWord") -> "GroupWord":
        return free_reduce(self.letters + _letters(other), self.genus)

    def __str__(self):
        return ",".join(str(x) for x in self.letters)


def letter_key(x: int) -> int:
    """Sort key for the generator order a1 < a1^-1 < a2 < a2^-1 < ..."""
    return 2 * (abs(x) - 1) + (x < 0)


def free_reduce(w, genus: int = 2) -> GroupWord:
    out: list[int] = []
    for x in _letters(w):
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return GroupWord(tuple(out), genus)


def _cyclic_free_reduce(letters: Sequence[int]) -> tuple[int, ...]:
    out: list[int] = []
    for x in letters:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    i, j = 0, len(out)
    while j - i >= 2 and out[i] == -out[j - 1]:
        i += 1
        j -= 1
    return tuple(out[i:j])


def _inv(letters: Sequence[int]) -> tuple[int, ...]:
    return tuple(-x for x in reversed(letters))


def surface_relator(genus: int = 2) -> GroupWord:
    out = []
    for i in range(genus):
        a, b = 2 * i + 1, 2 * i + 2
        out += [a, b, -a, -b]
    return GroupWord(tuple(out), genus)


def _min_rotation(letters: tuple[int, ...]) -> tuple[int, ...]:
    if not letters:
        return letters
    keys = [letter_key(x) for x in letters]
    n = len(keys)
    best = min(range(n), key=lambda i: keys[i:] + keys[:i])
    return letters[best:] + letters[:best]


def _primitive_root(letters: tuple[int, ...]) -> tuple[tuple[int, ...], int]:
    n = len(letters)
    for d in range(1, n // 2 + 1):
        if n % d == 0 and letters[:d] * (n // d) == letters:
            return letters[:d], n // d
    return letters, 1


class _Relator:
    """Lookup tables for a relator with pieces of length one.

    Every two-letter cyclic subword of the relator and its inverse occurs in
    exactly one rotation, so the rotation matching a subword is determined by
    its first two letters.
    """

    def __init__(self, relator: tuple[int, ...]):
        self.word = relator
        self.n = len(relator)
        rots = []
        for r in (relator, _inv(relator)):
            for i in range(self.n):
                rots.append(r[i:] + r[:i])
        self.by_pair: dict[tuple[int, int], tuple[int, ...]] = {}
        for r in rots:
            key = (r[0], r[1])
            if key in self.by_pair:
                raise ValueError("relator has pieces longer than one letter")
            self.by_pair[key] = r
        self.half = self.n // 2

    def match(self, cyc: tuple[int, ...], i: int, maxlen: int):
        """Longest m such that cyc[i:i+m] (cyclically) is a prefix of a rotation."""
        L = len(cyc)
        r = self.by_pair.get((cyc[i % L], cyc[(i + 1) % L]))
        if r is None:
            return 0, None
        m = 2
        top = min(maxlen, self.n)
        while m < top and cyc[(i + m) % L] == r[m]:
            m += 1
        return m, r


@lru_cache(maxsize=None)
def _relator_table(relator: tuple[int, ...]) -> _Relator:
    return _Relator(relator)


def _splice(cyc: tuple[int, ...], i: int, m: int, repl: tuple[int, ...]) -> tuple[int, ...]:
    L = len(cyc)
    doubled = cyc + cyc
    rest = doubled[i + m: i + L]
    return _cyclic_free_reduce(repl + rest)


def _dehn(cyc: tuple[int, ...], tab: _Relator) -> tuple[int, ...]:
    """Greedy cyclic Dehn reduction: longest match first, leftmost tie-break."""
    cyc = _cyclic_free_reduce(cyc)
    while len(cyc) > tab.half:
        best_m, best_i, best_r = tab.half, -1, None
        for i in range(len(cyc)):
            m, r = tab.match(cyc, i, len(cyc))
            if m > best_m:
                best_m, best_i, best_r = m, i, r
        if best_r is None:
            break
        cyc = _splice(cyc, best_i, best_m, _inv(best_r[best_m:]))
    return cyc


def _half_swaps(cyc: tuple[int, ...], tab: _Relator):
    """Replace a half-relator subword by the inverse of the other half."""
    L = len(cyc)
    h = tab.half
    if L < h:
        return
    for i in range(L):
        m, r = tab.match(cyc, i, h)
        if m == h:
            yield _dehn(_splice(cyc, i, h, _inv(r[h:])), tab)


def _ring_moves(cyc: tuple[int, ...], tab: _Relator, alphabet: tuple[int, ...]):
    """Slide a relator cell all the way around the cyclic word.

    Handles annular diagrams in which every cell meets each boundary in a
    piece of length h-1 (no single half-swap applies to either boundary).
    """
    L = len(cyc)
    step = tab.half - 1
    if L % step:
        return
    for p in range(L):
        base = cyc[p:] + cyc[:p]
        for e in alphabet:
            defect = -e
            out: list[int] = []
            ok = True
            for k in range(0, L, step):
                window = (defect,) + base[k:k + step]
                m, r = tab.match(window, 0, len(window))
                if m < len(window) or r is None:
                    ok = False
                    break
                comp = _inv(r[len(window):])
                out.extend(comp[:-1])
                defect = comp[-1]
            if ok and defect == -e:
                # the trailing defect cancels the conjugating letter
                yield _dehn(tuple(out), tab)


def _explore(start: tuple[int, ...], tab: _Relator, alphabet) -> tuple[tuple[int, ...], set]:
    """All minimal cyclic words reachable from ``start`` by length-preserving moves."""
    cur = _dehn(start, tab)
    while True:
        length = len(cur)
        seen = {_min_rotation(cur)}
        queue = deque(seen)
        shorter = None
        while queue and shorter is None:
            x = queue.popleft()
            for y in _neighbours(x, tab, alphabet):
                if len(y) < length:
                    shorter = y
                    break
                if len(y) == length:
                    k = _min_rotation(y)
                    if k not in seen:
                        seen.add(k)
                        queue.append(k)
        if shorter is None:
            return cur, seen
        cur = shorter


def _neighbours(x, tab, alphabet):
    yield from _half_swaps(x, tab)
    yield from _ring_moves(x, tab, alphabet)


@dataclass(frozen=True)
class CyclicClass:
    """Canonical representative of a conjugacy class."""

    canonical: GroupWord
    wordLength: int
    primitive: bool
    powerRoot: "tuple[CyclicClass, int] | None" = None

    @property
    def letters(self) -> tuple[int, ...]:
        return self.canonical.letters

    def __str__(self):
        return str(self.canonical)


@lru_cache(maxsize=200_000)
def _canonical_letters(letters: tuple[int, ...], relator: tuple[int, ...], genus: int):
    tab = _relator_table(relator)
    alphabet = tuple(s * i for i in range(1, 2 * genus + 1) for s in (1, -1))
    _, words = _explore(letters, tab, alphabet)
    canon = min(words, key=lambda w: [letter_key(x) for x in w])
    root, k = canon, 1
    for w in words:
        r, j = _primitive_root(w)
        if j > 1:
            root, k = _canonical_letters(r, relator, genus)[0], j
            canon = root * k
            break
    return canon, root, k


def dehn_cyclic_reduce(w, relator: GroupWord | None = None) -> CyclicClass:
    """Canonical conjugacy class representative of ``w``.

    Greedy Dehn reduction brings the cyclic word to minimal length; the
    remaining ambiguity (half-relator swaps and slid relator rings) is
    removed by exploring all minimal cyclic words of the class and taking
    the lexicographically smallest rotation.
    """
    genus = w.genus if isinstance(w, GroupWord) else (relator.genus if relator else 2)
    rel = relator if relator is not None else surface_relator(genus)
    canon, root, k = _canonical_letters(_letters(w), rel.letters, genus)
    if k > 1:
        base = CyclicClass(GroupWord(root, genus), len(root), True)
        return CyclicClass(GroupWord(canon, genus), len(canon), False, (base, k))
    return CyclicClass(GroupWord(canon, genus), len(canon), len(canon) > 0)


def same_element(u, v, relator: GroupWord | None = None) -> bool:
    """Word problem: u and v represent the same group element."""
    rel = relator if relator is not None else surface_relator()
    w = _letters(u) + _inv(_letters(v))
    return len(_dehn(w, _relator_table(rel.letters))) == 0


# ---------------------------------------------------------------------------
# Fuchsian realization

def _rotation(theta: float) -> np.ndarray:
    """Elliptic element rotating the upper half plane about i by angle theta."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, s], [-s, c]])


def _inverse2(m: np.ndarray) -> np.ndarray:
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])


# Side pairings g_0..g_3 of the regular octagon, written in the commutator
# basis: a1 = g2^-1, a2 = g3, a3 = g0^-1 g1, a4 = g2^-1 g3 g0.
SIDE_PAIRING_WORDS = ((-2, -1, 4), (-2, -1, 4, 3), (-1,), (2,))


@dataclass(frozen=True, eq=False)
class FuchsianGroup:
    genus: int
    generators: tuple[np.ndarray, ...]
    relatorWord: GroupWord
    sidePairings: tuple[np.ndarray, ...] = ()
    sidePairingWords: tuple[GroupWord, ...] = ()
    surfaceId: str = "bolza"
    _table: dict = field(default_factory=dict, repr=False)

    def letter_matrix(self, x: int) -> np.ndarray:
        return self._table[x]


def _matrix_error_pm_identity(m: np.ndarray) -> float:
    eye = np.eye(2)
    return float(min(np.abs(m - eye).max(), np.abs(m + eye).max()))


def build_genus2_group() -> FuchsianGroup:
    """Bolza surface group with all four generators of systole length."""
    c = 1.0 + math.sqrt(2.0)
    s = math.sqrt(c * c - 1.0)
    hyp = np.array([[c, s], [s, c]])
    g = [_rotation(k * math.pi / 4) @ hyp @ _rotation(-k * math.pi / 4) for k in range(4)]
    gi = [_inverse2(m) for m in g]
    a = (gi[2], g[3], gi[0] @ g[1], gi[2] @ g[3] @ g[0])
    table = {}
    for i, m in enumerate(a, start=1):
        table[i] = m
        table[-i] = _inverse2(m)
    rel = surface_relator(2)
    grp = FuchsianGroup(
        genus=2,
        generators=a,
        relatorWord=rel,
        sidePairings=tuple(g),
        sidePairingWords=tuple(GroupWord(w) for w in SIDE_PAIRING_WORDS),
        _table=table,
    )
    for m in a:
        if abs(np.linalg.det(m) - 1.0) > 1e-12:
            raise GroupConstructionError("generator determinant differs from 1")
    if _matrix_error_pm_identity(word_matrix(grp, rel)) > 1e-9:
        raise GroupConstructionError("relator does not evaluate to ±I")
    return grp


def word_matrix(g: FuchsianGroup, w) -> np.ndarray:
    m = np.eye(2)
    for x in _letters(w):
        m = m @ g.letter_matrix(x)
    return m


def geodesic_length(m: np.ndarray) -> float:
    t = abs(float(m[0, 0] + m[1, 1]))
    if t <= 2.0 + 1e-9:
        raise NonHyperbolic(f"|trace| = {t} is not > 2")
    return 2.0 * math.acosh(t / 2.0)


# ---------------------------------------------------------------------------
# Catalog

@dataclass(frozen=True)
class CatalogEntry:
    cls: CyclicClass
    length: float


@dataclass(frozen=True)
class GeodesicCatalog:
    surfaceId: str
    lengthCutoff: float
    entries: tuple[CatalogEntry, ...]
    wordBoundUsed: int
    empiricalK1K2: tuple[float, float]

    def __len__(self):
        return len(self.entries)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([e.length for e in self.entries])

    @property
    def words(self) -> list[tuple[int, ...]]:
        return [e.cls.letters for e in self.entries]


def _trace_cut(cutoff: float) -> float:
    return 2.0 * math.cosh(cutoff / 2.0)


@njit(cache=True, nogil=True)
def _dfs_words(mats, forbidden, wordbound, tcut, start, maxhits):
    """Depth-first enumeration of cyclically reduced words.

    Letters are indices 0..7 in the order a1, a1^-1, a2, ...; the inverse of
    letter i is i ^ 1. Only words whose first letter is their smallest
    letter are generated (every cyclic word has such a rotation), and words
    containing a forbidden five-letter subword are pruned.
    """
    nl = mats.shape[0]
    hits = np.zeros((maxhits, wordbound), np.int8)
    hitlen = np.zeros(maxhits, np.int64)
    nh = 0
    word = np.zeros(wordbound, np.int64)
    prod = np.zeros((wordbound + 1, 2, 2))
    choice = np.zeros(wordbound + 1, np.int64)
    prod[0, 0, 0] = 1.0
    prod[0, 1, 1] = 1.0
    word[0] = start
    prod[1] = mats[start]
    depth = 1
    choice[1] = start
    while depth >= 1:
        # examine the word of length ``depth``
        m = prod[depth]
        tr = abs(m[0, 0] + m[1, 1])
        if word[depth - 1] != (start ^ 1) and tr > 2.0 + 1e-9 and tr <= tcut:
            if nh < maxhits:
                for i in range(depth):
                    hits[nh, i] = word[i]
                hitlen[nh] = depth
            nh += 1
        # descend
        if depth < wordbound:
            choice[depth + 1] = start
            depth += 1
        else:
            choice[depth] += 1
        # find the next admissible letter at this depth, backtracking as needed
        while depth >= 2:
            c = choice[depth]
            prev = word[depth - 2]
            ok = False
            while c < nl:
                if c != (prev ^ 1):
                    if depth >= 5:
                        code = ((word[depth - 5] * nl + word[depth - 4]) * nl
                                + word[depth - 3]) * nl + word[depth - 2]
                        if not forbidden[code * nl + c]:
                            ok = True
                            break
                    else:
                        ok = True
                        break
                c += 1
            if ok:
                choice[depth] = c
                word[depth - 1] = c
                a = prod[depth - 1]
                b = mats[c]
                q = prod[depth]
                q[0, 0] = a[0, 0] * b[0, 0] + a[0, 1] * b[1, 0]
                q[0, 1] = a[0, 0] * b[0, 1] + a[0, 1] * b[1, 1]
                q[1, 0] = a[1, 0] * b[0, 0] + a[1, 1] * b[1, 0]
                q[1, 1] = a[1, 0] * b[0, 1] + a[1, 1] * b[1, 1]
                break
            depth -= 1
            choice[depth] += 1
        if depth == 1:
            break
    return hits, hitlen, nh


_ALPHABET = (1, -1, 2, -2, 3, -3, 4, -4)


def _forbidden_table(tab: "_Relator") -> np.ndarray:
    nl = len(_ALPHABET)
    idx = {x: i for i, x in enumerate(_ALPHABET)}
    table = np.zeros(nl ** (tab.half + 1), dtype=np.bool_)
    for r in tab.by_pair.values():
        code = 0
        for x in r[: tab.half + 1]:
            code = code * nl + idx[x]
        table[code] = True
    return table


def _enumerate_candidates(g: FuchsianGroup, wordbound: int, cutoff: float) -> set:
    """Canonical primitive classes among cyclically reduced words of length
    <= wordbound whose trace is within the cutoff.

    Words containing more than half of a relator are skipped: every class
    has a Dehn-reduced cyclic representative, and each rotation of it avoids
    such subwords.
    """
    tab = _relator_table(g.relatorWord.letters)
    mats = np.stack([g.letter_matrix(x) for x in _ALPHABET])
    forbidden = _forbidden_table(tab)
    tcut = _trace_cut(cutoff) + 1e-9
    found = set()
    maxhits = 1 << 16
    for start in range(len(_ALPHABET)):
        while True:
            hits, hitlen, nh = _dfs_words(mats, forbidden, wordbound, tcut, start, maxhits)
            if nh <= maxhits:
                break
            maxhits = 2 * nh
        for row, n in zip(hits[:nh].tolist(), hitlen[:nh].tolist()):
            found.add(_min_rotation(tuple(_ALPHABET[i] for i in row[:n])))
    classes = set()
    for w in found:
        cls = dehn_cyclic_reduce(GroupWord(w))
        if cls.primitive:
            classes.add(cls.letters)
    return classes


def _fit_k1k2(entries: Sequence[CatalogEntry]) -> tuple[float, float]:
    if not entries:
        return 0.0, 0.0
    ell = np.array([e.length for e in entries])
    wl = np.array([e.cls.wordLength for e in entries], dtype=float)
    if np.ptp(ell) < 1e-9:
        k1, k2 = 0.0, float(wl.mean())
    else:
        k1, k2 = np.polyfit(ell, wl, 1)
    # shift the intercept so the bound covers every entry
    k2 += max(0.0, float(np.max(wl - (k1 * ell + k2))))
    return float(k1), float(k2)


def _catalog_at(g: FuchsianGroup, cutoff: float, wordbound: int) -> tuple[CatalogEntry, ...]:
    entries = []
    for letters in _enumerate_candidates(g, wordbound, cutoff):
        ell = geodesic_length(word_matrix(g, letters))
        if ell <= cutoff:
            entries.append(CatalogEntry(dehn_cyclic_reduce(GroupWord(letters)), ell))
    entries.sort(key=lambda e: (e.length, [letter_key(x) for x in e.cls.letters]))
    return tuple(entries)


# Provisional constants for the word bound; refined by the bootstrap pass.
_BOOTSTRAP_CUTOFF = 5.0
_SAFETY = 1.5


def build_catalog(g: FuchsianGroup, lengthCutoff: float, wordbound: int | None = None) -> GeodesicCatalog:
    """Primitive oriented closed geodesics with length <= lengthCutoff.

    Without an explicit ``wordbound`` the bound is L = ceil(1.5 (K1' l + K2'))
    with K1', K2' fitted on a bootstrap catalog. The result is accepted only
    if enumerating to L+2 gives the same classes.
    """
    if lengthCutoff <= 0:
        raise ValueError("lengthCutoff must be positive")
    if wordbound is None:
        boot = _catalog_at(g, _BOOTSTRAP_CUTOFF, 6)
        k1, k2 = _fit_k1k2(boot)
        wordbound = max(1, math.ceil(_SAFETY * (k1 * lengthCutoff + k2)))
    entries = _catalog_at(g, lengthCutoff, wordbound)
    check = _catalog_at(g, lengthCutoff, wordbound + 2)
    if [e.cls.letters for e in entries] != [e.cls.letters for e in check]:
        raise CatalogUnstable(
            f"catalog at word bound {wordbound} differs from bound {wordbound + 2}"
        )
    return GeodesicCatalog(g.surfaceId, float(lengthCutoff), entries, wordbound, _fit_k1k2(entries))


def catalog_body(cat: GeodesicCatalog) -> str:
    lines = []
    for e in cat.entries:
        word = ",".join(str(x) for x in e.cls.letters)
        lines.append(f"word={word} len={e.length:.17g} primitive=1\n")
    return "".join(lines)


def write_catalog(cat: GeodesicCatalog, path, preamble: str = "") -> None:
    """Write the catalog; ``preamble`` lines (each starting with "# ") go first."""
    body = catalog_body(cat)
    sha = hashlib.sha256(body.encode()).hexdigest()
    header = (
        f"#hypercover-catalog v1 surface={cat.surfaceId} cutoff={cat.lengthCutoff:.17g} "
        f"wordbound={cat.wordBoundUsed} sha={sha}\n"
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(preamble + header + body)


def read_catalog(path) -> GeodesicCatalog:
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline()
        while header.startswith("# "):
            header = fh.readline()
        body = fh.read()
    if not header.startswith("#hypercover-catalog v1 "):
        raise ValueError("not a catalog file")
    fields = dict(tok.split("=", 1) for tok in header.split()[2:])
    if hashlib.sha256(body.encode()).hexdigest() != fields["sha"]:
        raise ValueError("catalog checksum mismatch")
    entries = []
    for line in body.splitlines():
        parts = dict(tok.split("=", 1) for tok in line.split())
        letters = tuple(int(x) for x in parts["word"].split(",")) if parts["word"] else ()
        cls = CyclicClass(GroupWord(letters), len(letters), parts["primitive"] == "1")
        entries.append(CatalogEntry(cls, float(parts["len"])))
    return GeodesicCatalog(
        fields["surface"], float(fields["cutoff"]), tuple(entries),
        int(fields["wordbound"]), _fit_k1k2(entries),
    )


def random_word(rng: np.random.Generator, length: int, genus: int = 2) -> GroupWord:
    """Uniform freely reduced word of the given length."""
    out: list[int] = []
    top = 2 * genus
    while len(out) < length:
        x = int(rng.integers(1, top + 1)) * (1 if rng.random() < 0.5 else -1)
        if out and out[-1] == -x:
            continue
        out.append(x)
    return GroupWord(tuple(out), genus)


def conjugate(w, c) -> GroupWord:
    c = _letters(c)
    return free_reduce(c + _letters(w) + _inv(c))


def words_of_classes(classes: Iterable[CyclicClass]) -> list[tuple[int, ...]]:
    return [c.letters for c in classes]
