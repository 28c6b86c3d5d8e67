"""Combinatorics of substitutions: words, iteration, matrices, return words.

Letters are stored internally as 0-based indices into ``Substitution.letters``;
words are flat ``numpy`` integer arrays.  User-facing text uses the letter
labels (``"a->abbb; b->a"``).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import LengthCapExceeded, NoReturnWordFound, ParseError

DEFAULT_CAP = 10**8

_RULE_RE = re.compile(r"^([^\s\-;>]+)->([^\s;]+)$")


@dataclass(frozen=True)
class Substitution:
    letters: tuple[str, ...]
    rules: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        m = len(self.letters)
        if m < 2:
            raise ValueError("alphabet must have at least two letters")
        if len(self.rules) != m:
            raise ValueError("need exactly one rule per letter")
        for j, rule in enumerate(self.rules):
            if not rule:
                raise ValueError(f"rule for {self.letters[j]!r} is empty")
            if min(rule) < 0 or max(rule) >= m:
                raise ValueError(f"rule for {self.letters[j]!r} uses an unknown symbol")

    @property
    def m(self) -> int:
        return len(self.letters)

    @property
    def dtype(self):
        return np.uint8 if self.m <= 256 else np.int32

    def word(self, text: str | Sequence[int]) -> np.ndarray:
        """Convert a letter string (or index sequence) to an index array."""
        if isinstance(text, str):
            index = {c: i for i, c in enumerate(self.letters)}
            try:
                return np.array([index[c] for c in text], dtype=self.dtype)
            except KeyError as exc:
                raise ValueError(f"unknown letter {exc.args[0]!r}") from None
        arr = np.asarray(text, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= self.m):
            raise ValueError("symbol out of range")
        return arr.astype(self.dtype)

    def format(self, w: Sequence[int]) -> str:
        sep = "" if all(len(c) == 1 for c in self.letters) else " "
        return sep.join(self.letters[int(i)] for i in w)

    def rule_lengths(self) -> np.ndarray:
        return np.array([len(r) for r in self.rules], dtype=np.int64)

    def describe(self) -> str:
        return "; ".join(
            f"{c}->{self.format(r)}" for c, r in zip(self.letters, self.rules)
        )


@dataclass(frozen=True)
class ReturnWord:
    v: tuple[int, ...]
    c: int
    power: int

    def __post_init__(self):
        if not self.v or self.v[0] != self.c:
            raise ValueError("return word must start with c")
        if self.power < 1:
            raise ValueError("power must be >= 1")


@dataclass
class AssumptionReport:
    primitive: bool
    primitivity_power: int | None
    aperiodic_heuristic: bool
    complexity: list[int]
    char_poly: list[int]
    char_poly_irreducible: bool | None
    eigenvalues: list[complex]
    second_eigenvalue_expanding: bool
    notes: list[str] = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return bool(
            self.primitive
            and self.aperiodic_heuristic
            and self.char_poly_irreducible
            and self.second_eigenvalue_expanding
        )

    def failures(self) -> list[str]:
        out = []
        if not self.primitive:
            out.append("substitution matrix is not primitive")
        if not self.aperiodic_heuristic:
            out.append("prefix looks periodic (complexity p(n) <= n)")
        if self.char_poly_irreducible is not True:
            out.append("characteristic polynomial is reducible" if self.char_poly_irreducible is False
                       else "irreducibility undecided")
        if not self.second_eigenvalue_expanding:
            mod = abs(self.eigenvalues[1]) if len(self.eigenvalues) > 1 else 0.0
            out.append(f"|theta_2| = {mod:.6g} is not > 1")
        return out

    def as_dict(self) -> dict:
        return {
            "primitive": self.primitive,
            "primitivity_power": self.primitivity_power,
            "aperiodic_heuristic": self.aperiodic_heuristic,
            "complexity": self.complexity,
            "char_poly": self.char_poly,
            "char_poly_irreducible": self.char_poly_irreducible,
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "second_eigenvalue_expanding": self.second_eigenvalue_expanding,
            "all_hold": self.all_hold,
            "failures": self.failures(),
            "notes": self.notes,
        }


# --------------------------------------------------------------------------
# parsing

def _from_mapping(rules: Mapping[str, str]) -> Substitution:
    letters: list[str] = []
    for key in rules:
        if key not in letters:
            letters.append(key)
    for image in rules.values():
        for ch in image:
            if ch not in letters:
                raise ParseError(f"letter {ch!r} has no rule")
    index = {c: i for i, c in enumerate(letters)}
    try:
        return Substitution(
            tuple(letters), tuple(tuple(index[c] for c in rules[k]) for k in letters)
        )
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def parse_substitution(spec: str | Mapping) -> Substitution:
    """Parse ``"a->abbb; b->a"`` or ``{"rules": {"a": "abbb", "b": "a"}}``.

    Letters are numbered in order of first appearance on the left-hand sides.
    A JSON string is also accepted.
    """
    if isinstance(spec, Mapping):
        rules = spec.get("rules", spec)
        if not isinstance(rules, Mapping) or not rules:
            raise ParseError("expected a non-empty 'rules' mapping")
        return _from_mapping({str(k): str(v) for k, v in rules.items()})
    text = spec.strip()
    if text.startswith("{"):
        try:
            return parse_substitution(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON substitution: {exc}") from None
    rules: dict[str, str] = {}
    for part in text.split(";"):
        part = re.sub(r"\s+", "", part)
        if not part:
            continue
        match = _RULE_RE.match(part)
        if not match:
            raise ParseError(f"cannot parse rule {part!r}")
        lhs, rhs = match.groups()
        if len(lhs) != 1:
            raise ParseError(f"left-hand side {lhs!r} must be a single letter")
        if lhs in rules:
            raise ParseError(f"duplicate rule for {lhs!r}")
        rules[lhs] = rhs
    if not rules:
        raise ParseError("empty substitution")
    return _from_mapping(rules)


# --------------------------------------------------------------------------
# matrices and population vectors

def substitution_matrix(sub: Substitution) -> np.ndarray:
    """Entry (i, j) counts the symbol i in the image of j."""
    S = np.zeros((sub.m, sub.m), dtype=np.int64)
    for j, rule in enumerate(sub.rules):
        for i in rule:
            S[i, j] += 1
    return S


def population_vector(w: Sequence[int], m: int) -> np.ndarray:
    w = np.asarray(w)
    if w.size == 0:
        return np.zeros(m, dtype=np.int64)
    return np.bincount(w.astype(np.int64), minlength=m).astype(np.int64)


def matrix_power_exact(S, n: int) -> np.ndarray:
    """Integer matrix power with Python big integers (object array)."""
    M = np.array(S, dtype=object)
    result = np.identity(M.shape[0], dtype=np.int64).astype(object)
    while n > 0:
        if n & 1:
            result = result.dot(M)
        M = M.dot(M)
        n >>= 1
    return result


def image_length(sub: Substitution, w: Sequence[int], n: int) -> int:
    """Exact |zeta^n(w)| without expanding the word."""
    pop = population_vector(w, sub.m).astype(object)
    return int(sum(matrix_power_exact(substitution_matrix(sub), n).dot(pop)))


# --------------------------------------------------------------------------
# iteration

def _padded_rules(sub: Substitution) -> np.ndarray:
    width = max(len(r) for r in sub.rules)
    table = np.zeros((sub.m, width), dtype=sub.dtype)
    for j, rule in enumerate(sub.rules):
        table[j, : len(rule)] = rule
    return table


def _apply_once(w: np.ndarray, table: np.ndarray, lens: np.ndarray,
                limit: int | None = None) -> np.ndarray:
    if limit is not None and w.size > limit:
        # each rule has length >= 1, so the first `limit` letters of the image
        # depend only on the first `limit` letters of w
        w = w[:limit]
    if w.size == 0:
        return w
    wl = lens[w]
    ends = np.cumsum(wl)
    total = int(ends[-1])
    starts = ends - wl
    letter = np.repeat(w, wl)
    pos = np.arange(total, dtype=np.int64) - np.repeat(starts, wl)
    out = table[letter, pos]
    if limit is not None:
        out = out[:limit]
    return out


def apply_power(sub: Substitution, w: Sequence[int] | str, n: int,
                cap: int = DEFAULT_CAP) -> np.ndarray:
    """Return zeta^n(w).

    Raises LengthCapExceeded before any expansion when the exact image
    length exceeds ``cap``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    w = sub.word(w)
    length = image_length(sub, w, n)
    if length > cap:
        raise LengthCapExceeded(
            f"|zeta^{n}(w)| = {length} exceeds cap {cap}; reduce n"
        )
    table, lens = _padded_rules(sub), sub.rule_lengths()
    for _ in range(n):
        w = _apply_once(w, table, lens)
    return w


def prefix_orbit(sub: Substitution, a: int | str, target_len: int,
                 cap: int = DEFAULT_CAP) -> np.ndarray:
    """Prefix of length ``target_len`` of zeta^n(a), n least with |zeta^n(a)| >= target_len.

    Long prefixes of zeta^n(a) stand in for points of the substitution space.
    """
    if isinstance(a, str):
        a = sub.letters.index(a)
    if target_len > cap:
        raise LengthCapExceeded(f"target length {target_len} exceeds cap {cap}")
    if target_len <= 0:
        return np.zeros(0, dtype=sub.dtype)
    table, lens = _padded_rules(sub), sub.rule_lengths()
    S = substitution_matrix(sub)
    pop = np.zeros(sub.m, dtype=object)
    pop[a] = 1
    w = np.array([a], dtype=sub.dtype)
    n = 0
    while int(pop.sum()) < target_len:
        new_pop = S.astype(object).dot(pop)
        if all(new_pop[i] == pop[i] for i in range(sub.m)):
            raise LengthCapExceeded("orbit does not grow (non-primitive substitution?)")
        pop = new_pop
        w = _apply_once(w, table, lens, limit=target_len)
        n += 1
    return w[:target_len].copy()


# --------------------------------------------------------------------------
# primitivity, complexity, assumptions

def primitivity_power(S: np.ndarray) -> int | None:
    """Least k <= m^2 - 2m + 2 (Wielandt) with S^k > 0, else None."""
    m = S.shape[0]
    B = (np.asarray(S) > 0).astype(np.int64)
    P = B.copy()
    for k in range(1, m * m - 2 * m + 3):
        if P.all():
            return k
        P = ((P @ B) > 0).astype(np.int64)
    return None


def subword_complexity(w: Sequence[int], depth: int) -> list[int]:
    """Exact factor counts p(1..depth) of a finite word.

    Factors of length n are ranked by refining the ranks of length n-1 with
    one more letter, so no hashing is involved.
    """
    w = np.asarray(w, dtype=np.int64)
    out: list[int] = []
    if w.size == 0:
        return [0] * depth
    _, rank = np.unique(w, return_inverse=True)
    rank = rank.astype(np.int64)
    base = int(w.max()) + 1
    for n in range(1, depth + 1):
        if n > w.size:
            out.append(0)
            continue
        if n > 1:
            key = rank[: w.size - n + 1] * base + w[n - 1:]
            _, rank = np.unique(key, return_inverse=True)
            rank = rank.astype(np.int64)
        out.append(int(rank.max()) + 1)
    return out


def validate_assumptions(sub: Substitution, complexity_depth: int = 64,
                         prefix_len: int = 20000) -> AssumptionReport:
    """Check the standing hypotheses; report-style, never raises.

    Aperiodicity is only heuristic: a prefix whose complexity satisfies
    p(n) <= n for some n <= depth is flagged as (eventually) periodic
    by the Morse-Hedlund criterion.
    """
    from .perron import char_poly_analysis, eigen_system

    S = substitution_matrix(sub)
    k = primitivity_power(S)
    notes: list[str] = []
    cp = char_poly_analysis(S)
    try:
        es = eigen_system(S)
        eigenvalues = [complex(z) for z in es.eigenvalues]
    except Exception as exc:  # repeated roots etc.; report, do not raise
        notes.append(f"eigen_system failed: {exc}")
        eigenvalues = sorted((complex(z) for z in np.linalg.eigvals(S.astype(float))),
                             key=lambda z: -abs(z))
    expanding = len(eigenvalues) > 1 and abs(eigenvalues[1]) > 1 + 1e-12

    complexity: list[int] = []
    aperiodic = False
    if k is not None:
        w = prefix_orbit(sub, 0, prefix_len)
        complexity = subword_complexity(w, complexity_depth)
        aperiodic = all(p > n for n, p in enumerate(complexity, start=1))
        notes.append(f"aperiodicity heuristic: Morse-Hedlund on a {w.size}-letter prefix")
    else:
        notes.append("not primitive; aperiodicity not tested")
    if cp.irreducible is None:
        notes.append("irreducibility unknown (degree > 8)")
    return AssumptionReport(
        primitive=k is not None,
        primitivity_power=k,
        aperiodic_heuristic=aperiodic,
        complexity=complexity,
        char_poly=list(cp.coefficients),
        char_poly_irreducible=cp.irreducible,
        eigenvalues=eigenvalues,
        second_eigenvalue_expanding=bool(expanding),
        notes=notes,
    )


# --------------------------------------------------------------------------
# return words

def _contains(haystack: np.ndarray, needle: np.ndarray) -> bool:
    if needle.size > haystack.size:
        return False
    if haystack.dtype.itemsize == 1:
        return haystack.tobytes().find(needle.astype(haystack.dtype).tobytes()) >= 0
    windows = np.lib.stride_tricks.sliding_window_view(haystack, needle.size)
    return bool((windows == needle).all(axis=1).any())


def _factors(w: np.ndarray, n: int) -> set[tuple[int, ...]]:
    return {tuple(int(c) for c in w[i:i + n]) for i in range(w.size - n + 1)}


def find_return_word(sub: Substitution, ell_max: int = 8,
                     cap: int = 10**6) -> ReturnWord:
    """Shortest return word v (ties: lexicographic) with vc in zeta^l(b) for all b.

    For each candidate v (ordered by length, then lexicographically) the
    least power l <= ell_max is returned; c is the first letter of v.
    """
    if ell_max < 1:
        raise NoReturnWordFound("ell_max < 1: empty search space")
    images: list[list[np.ndarray]] = []
    for ell in range(1, ell_max + 1):
        try:
            images.append([apply_power(sub, [b], ell, cap=cap) for b in range(sub.m)])
        except LengthCapExceeded:
            break
    if not images:
        raise NoReturnWordFound("no power of zeta fits under the length cap")
    longest = max(min(w.size for w in imgs) for imgs in images)
    for n in range(1, longest):
        candidates: set[tuple[int, ...]] = set()
        for imgs in images:
            candidates |= _factors(imgs[0], n)
        for v in sorted(candidates):
            needle = np.array(v + (v[0],), dtype=images[0][0].dtype)
            for ell, imgs in enumerate(images, start=1):
                if all(_contains(w, needle) for w in imgs):
                    return ReturnWord(v=v, c=v[0], power=ell)
    raise NoReturnWordFound(f"no return word for powers <= {len(images)}; raise ell_max")
