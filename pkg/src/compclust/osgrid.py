"""Ordnance Survey National Grid reference parsing.

A reference like "SU 230870" names a 100m x 100m square; the two letters give
the 100 km square of the grid covering Great Britain (letter I is never
used), the digits split evenly into easting and northing within it. Parsed
locations are returned at the center of the named square.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

__all__ = ["OSGridError", "ParsedGridRef", "parse_osgrid"]


class OSGridError(ValueError):
    """Malformed grid reference."""


@dataclass(frozen=True)
class ParsedGridRef:
    easting: float  # meters
    northing: float  # meters
    precision: str  # "100m", "1km" or "circa"

    @property
    def km(self) -> tuple[float, float]:
        return self.easting / 1000.0, self.northing / 1000.0


_REF_RE = re.compile(r"^(?P<circa>c\.?\s+)?(?P<letters>[A-Za-z]{2})\s*(?P<digits>[\d\s]+)$")


def _letter_index(ch: str) -> int:
    o = ord(ch.upper()) - ord("A")
    if ch.upper() == "I":
        raise OSGridError(f"letter I is not used in grid references: {ch!r}")
    if not 0 <= o <= 25:
        raise OSGridError(f"invalid grid letter {ch!r}")
    if o > 8:  # skip I
        o -= 1
    return o


def parse_osgrid(text: str) -> ParsedGridRef:
    """Parse a grid reference into square-center easting/northing (meters).

    Accepts "SU 230870" (100 m square), "SU 2387" (1 km square) and an
    optional "c." prefix marking an approximate location.
    """
    m = _REF_RE.match(text.strip())
    if not m:
        raise OSGridError(f"unparseable grid reference: {text!r}")
    circa = m.group("circa") is not None
    l1, l2 = m.group("letters")
    digits = re.sub(r"\s", "", m.group("digits"))
    if len(digits) not in (4, 6):
        raise OSGridError(
            f"expected 4 or 6 digits, got {len(digits)} in {text!r}")
    i1 = _letter_index(l1)
    i2 = _letter_index(l2)
    e100 = ((i1 - 2) % 5) * 5 + (i2 % 5)
    n100 = (19 - (i1 // 5) * 5) - (i2 // 5)
    if not (0 <= e100 <= 12 and 0 <= n100 <= 12):
        raise OSGridError(f"grid letters {l1}{l2} fall outside the national grid")
    half = len(digits) // 2
    e_digits, n_digits = digits[:half], digits[half:]
    square = 100.0 if half == 3 else 1000.0  # meters
    easting = e100 * 100_000 + int(e_digits) * square + square / 2.0
    northing = n100 * 100_000 + int(n_digits) * square + square / 2.0
    precision = "circa" if circa else ("100m" if half == 3 else "1km")
    return ParsedGridRef(easting=easting, northing=northing, precision=precision)
