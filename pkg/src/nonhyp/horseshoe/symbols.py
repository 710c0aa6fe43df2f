"""Symbol sequences over {0, 1}: eventually periodic words, their canonical
form and the metric sum_k 2^-k |a_k - b_k|."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import lcm


def _primitive(cycle: tuple[int, ...]) -> tuple[int, ...]:
    n = len(cycle)
    for p in range(1, n + 1):
        if n % p == 0 and cycle == cycle[:p] * (n // p):
            return cycle[:p]
    return cycle


@dataclass(frozen=True)
class SymbolWord:
    """The sequence ``prefix + letters + letters + ...`` when ``periodic``;
    a non-periodic word is ``prefix + letters`` followed by zeros.

    Instances are always canonical: the cycle is its primitive root and the
    prefix does not end with the cycle's last letter.
    """

    letters: tuple[int, ...]
    periodic: bool = True
    prefix: tuple[int, ...] = ()

    def __post_init__(self):
        letters = tuple(int(c) for c in self.letters)
        prefix = tuple(int(c) for c in self.prefix)
        if not letters:
            raise ValueError("a word needs at least one letter")
        if any(c not in (0, 1) for c in letters + prefix):
            raise ValueError("letters must be 0 or 1")
        if not self.periodic:
            prefix, letters = prefix + letters, (0,)
            object.__setattr__(self, "periodic", True)
        letters = _primitive(letters)
        while prefix and prefix[-1] == letters[-1]:
            prefix = prefix[:-1]
            letters = letters[-1:] + letters[:-1]
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "prefix", prefix)

    @classmethod
    def parse(cls, text: str) -> "SymbolWord":
        """``"01"`` is the periodic word 0101...; ``"1(0)"`` is 1000...."""
        text = text.strip()
        if "(" in text:
            head, _, rest = text.partition("(")
            if not rest.endswith(")"):
                raise ValueError(f"malformed word {text!r}")
            return cls(tuple(int(c) for c in rest[:-1]), True, tuple(int(c) for c in head))
        if not text or any(c not in "01" for c in text):
            raise ValueError(f"malformed word {text!r}")
        return cls(tuple(int(c) for c in text))

    @property
    def period(self) -> int:
        return len(self.letters)

    def __len__(self) -> int:
        return len(self.prefix) + len(self.letters)

    def __getitem__(self, k: int) -> int:
        if k < len(self.prefix):
            return self.prefix[k]
        return self.letters[(k - len(self.prefix)) % len(self.letters)]

    def take(self, n: int) -> tuple[int, ...]:
        return tuple(self[k] for k in range(n))

    def shift(self, times: int = 1) -> "SymbolWord":
        seq = self.prefix
        letters = self.letters
        for _ in range(times):
            if seq:
                seq = seq[1:]
            else:
                letters = letters[1:] + letters[:1]
        return SymbolWord(letters, True, seq)

    def prepend(self, letter: int) -> "SymbolWord":
        return SymbolWord(self.letters, True, (int(letter),) + self.prefix)

    def __str__(self) -> str:
        cyc = "".join(map(str, self.letters))
        if not self.prefix:
            return cyc
        return "".join(map(str, self.prefix)) + f"({cyc})"


def symbol_metric(a: SymbolWord, b: SymbolWord) -> float:
    """sum_{k >= 0} 2^-k |a_k - b_k|, summed exactly as a rational."""
    pre = max(len(a.prefix), len(b.prefix))
    per = lcm(a.period, b.period)
    head = sum(Fraction(abs(a[k] - b[k]), 2**k) for k in range(pre))
    cyc = sum(Fraction(abs(a[pre + j] - b[pre + j]), 2**j) for j in range(per))
    total = head + Fraction(1, 2**pre) * cyc / (1 - Fraction(1, 2**per))
    return float(total)


def primitive_words(max_len: int) -> list[SymbolWord]:
    """One representative (lexicographically least rotation) of every
    primitive cycle of length <= max_len."""
    out = []
    for n in range(1, max_len + 1):
        for bits in itertools.product((0, 1), repeat=n):
            if _primitive(bits) != bits:
                continue
            if bits != min(bits[i:] + bits[:i] for i in range(n)):
                continue
            out.append(SymbolWord(bits))
    return out


def champernowne(n_letters: int) -> tuple[int, ...]:
    """Concatenation of all binary words of length 1, 2, 3, ... (a sequence
    whose shift orbit is dense), truncated to ``n_letters``."""
    out: list[int] = []
    n = 1
    while len(out) < n_letters:
        for bits in itertools.product((0, 1), repeat=n):
            out.extend(bits)
            if len(out) >= n_letters:
                break
        n += 1
    return tuple(out[:n_letters])
