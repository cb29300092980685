"""
Piecewise polynomial perturbations f^k, g^k (k = 1..4) and their JSON spec
files.

Regions: 1 is x > 0, y > eta; 2 is x > 0, y < eta; 3 is x < 0, y < eta;
4 is x < 0, y > eta.
"""

import json
import logging
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_serializer, field_validator, model_validator

from app.errors import SpecValidationError
from app.utils.algebra import as_fraction, format_fraction

logger = logging.getLogger(__name__)

PIECES = (1, 2, 3, 4)

Piece = Dict[Tuple[int, int], Fraction]
Table = Dict[int, Piece]


class Case(str, Enum):
    GENERAL = "general"
    THM2 = "thm2"  # only x = 0 switches: pieces 1 = 2, 3 = 4
    THM3 = "thm3"  # only y = eta switches: pieces 1 = 4, 2 = 3
    SMOOTH = "smooth"


# pieces that must carry identical tables in each case
_CASE_TIES = {
    Case.GENERAL: (),
    Case.THM2: ((1, 2), (3, 4)),
    Case.THM3: ((1, 4), (2, 3)),
    Case.SMOOTH: ((1, 2), (2, 3), (3, 4)),
}


def _parse_piece(k: int, raw: Any) -> Piece:
    """[[i, j, "p/q"], ...] or {"i,j": "p/q"} -> {(i, j): Fraction}"""
    if isinstance(raw, Mapping):
        entries = []
        for key, value in raw.items():
            i, j = (int(part) for part in str(key).split(","))
            entries.append((i, j, value))
    else:
        entries = list(raw or [])
    piece: Piece = {}
    for entry in entries:
        if len(entry) != 3:
            raise ValueError(f"piece {k}: expected [i, j, coefficient], got {entry!r}")
        i, j, value = entry
        if isinstance(i, bool) or isinstance(j, bool) or int(i) != i or int(j) != j:
            raise ValueError(f"piece {k}: monomial exponents must be integers, got ({i!r}, {j!r})")
        key = (int(i), int(j))
        if key in piece:
            raise ValueError(f"piece {k}: duplicate monomial x^{key[0]} y^{key[1]}")
        try:
            coeff = as_fraction(value)
        except TypeError as e:
            raise ValueError(f"piece {k}: {e}") from e
        if coeff != 0:
            piece[key] = coeff
    return piece


def _parse_table(raw: Any) -> Table:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise ValueError("coefficient table must map piece numbers to monomial lists")
    table: Table = {}
    for key, value in raw.items():
        k = int(key)
        if k not in PIECES:
            raise ValueError(f"piece index must be one of {PIECES}, got {key!r}")
        piece = value if _is_parsed(value) else _parse_piece(k, value)
        if piece:
            table[k] = dict(piece)
    return table


def _is_parsed(value: Any) -> bool:
    return isinstance(value, dict) and all(isinstance(key, tuple) for key in value)


class PerturbationSpec(BaseModel):
    """
    Coefficients a^k_{i,j} (of f^k) and b^k_{i,j} (of g^k), i + j <= n.

    Pieces that are missing from a table are zero.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    eta: Fraction
    n: int = Field(ge=1)
    case: Case = Case.GENERAL
    f: Table = {}
    g: Table = {}

    @field_validator("eta", mode="before")
    @classmethod
    def _parse_eta(cls, value: Any) -> Fraction:
        try:
            eta = as_fraction(value)
        except TypeError as e:
            raise ValueError(str(e)) from e
        if eta <= 0:
            raise ValueError("eta must be a positive rational")
        return eta

    @field_validator("f", "g", mode="before")
    @classmethod
    def _parse_coefficients(cls, value: Any) -> Table:
        return _parse_table(value)

    @model_validator(mode="after")
    def _check_invariants(self) -> "PerturbationSpec":
        for kind, table in (("f", self.f), ("g", self.g)):
            for k, piece in table.items():
                for i, j in piece:
                    if i < 0 or j < 0:
                        raise ValueError(f"{kind}^{k}: negative exponent in x^{i} y^{j}")
                    if i + j > self.n:
                        raise ValueError(f"{kind}^{k}: x^{i} y^{j} exceeds degree n={self.n}")
            for first, second in _CASE_TIES[self.case]:
                if table.get(first, {}) != table.get(second, {}):
                    raise ValueError(
                        f"case {self.case.value} needs {kind}^{first} = {kind}^{second}"
                    )
        return self

    @field_serializer("eta")
    def _dump_eta(self, eta: Fraction) -> str:
        return format_fraction(eta)

    @field_serializer("f", "g")
    def _dump_table(self, table: Table) -> Dict[str, List[List[Any]]]:
        return {
            str(k): [[i, j, format_fraction(c)] for (i, j), c in sorted(table[k].items())]
            for k in sorted(table)
        }

    def piece(self, kind: str, k: int) -> Piece:
        if kind not in ("f", "g"):
            raise ValueError(f"kind must be 'f' or 'g', got {kind!r}")
        return dict(getattr(self, kind).get(k, {}))

    def coefficient(self, kind: str, k: int, i: int, j: int) -> Fraction:
        return self.piece(kind, k).get((i, j), Fraction(0))

    def terms(self, kind: str, k: int) -> Iterator[Tuple[int, int, Fraction]]:
        """Nonzero monomials of one piece, sorted by (i, j)"""
        for (i, j), c in sorted(self.piece(kind, k).items()):
            yield i, j, c

    def is_zero(self) -> bool:
        return not self.f and not self.g

    def evaluate(self, kind: str, k: int, x: float, y: float) -> float:
        """f^k(x, y) or g^k(x, y) in floating point"""
        return float(sum(float(c) * x**i * y**j for (i, j), c in self.piece(kind, k).items()))

    def with_case(self, case: Union[Case, str]) -> "PerturbationSpec":
        """Same coefficients under another case label (re-validated)"""
        return PerturbationSpec.from_json({**self.model_dump(), "case": Case(case)})

    def __add__(self, other: "PerturbationSpec") -> "PerturbationSpec":
        if self.eta != other.eta:
            raise SpecValidationError(f"eta mismatch: {self.eta} vs {other.eta}")
        tables = {}
        for kind in ("f", "g"):
            merged: Table = {}
            for k in PIECES:
                piece = self.piece(kind, k)
                for key, c in other.piece(kind, k).items():
                    piece[key] = piece.get(key, Fraction(0)) + c
                piece = {key: c for key, c in piece.items() if c != 0}
                if piece:
                    merged[k] = piece
            tables[kind] = merged
        case = self.case if self.case == other.case else Case.GENERAL
        return PerturbationSpec(eta=self.eta, n=max(self.n, other.n), case=case, **tables)

    def to_json(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "PerturbationSpec":
        """Validate a spec mapping, raising SpecValidationError with the schema diagnostics"""
        try:
            return cls.model_validate(dict(data))
        except ValidationError as e:
            raise SpecValidationError(_describe(e)) from e

    @classmethod
    def one_line(
        cls,
        axis: str,
        eta: Any,
        n: int,
        first: Optional[Mapping[str, Any]] = None,
        second: Optional[Mapping[str, Any]] = None,
    ) -> "PerturbationSpec":
        """
        Spec with a single switching line.

        axis "x": only x = 0 switches; `first` holds the {"f": ..., "g": ...}
        pieces for x > 0 and `second` for x < 0 (case thm2).
        axis "y": only y = eta switches; `first` is y > eta and `second`
        y < eta (case thm3).
        """
        first = first or {}
        second = second or {}
        if axis == "x":
            layout, case = {1: first, 2: first, 3: second, 4: second}, Case.THM2
        elif axis == "y":
            layout, case = {1: first, 4: first, 2: second, 3: second}, Case.THM3
        else:
            raise SpecValidationError(f"axis must be 'x' or 'y', got {axis!r}")
        data = {
            "eta": eta,
            "n": n,
            "case": case,
            "f": {k: part.get("f", []) for k, part in layout.items()},
            "g": {k: part.get("g", []) for k, part in layout.items()},
        }
        return cls.from_json(data)


def _describe(error: ValidationError) -> str:
    parts = []
    for issue in error.errors():
        location = ".".join(str(p) for p in issue.get("loc", ())) or "spec"
        parts.append(f"{location}: {issue.get('msg')}")
    return "; ".join(parts)


def load_spec(path: Union[str, Path]) -> PerturbationSpec:
    """Read and validate a JSON spec file"""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise SpecValidationError(f"spec file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise SpecValidationError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(data, Mapping):
        raise SpecValidationError(f"{path}: top level must be an object")
    spec = PerturbationSpec.from_json(data)
    logger.info(f"Loaded spec {path.name}: n={spec.n}, case={spec.case.value}, eta={format_fraction(spec.eta)}")
    return spec


def _random_piece(n: int, rng: np.random.Generator, density: float, max_num: int, max_den: int) -> List[List[Any]]:
    piece = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            if rng.random() >= density:
                continue
            num = int(rng.integers(-max_num, max_num + 1))
            den = int(rng.integers(1, max_den + 1))
            if num:
                piece.append([i, j, format_fraction(Fraction(num, den))])
    return piece


def random_spec(
    n: int,
    case: Union[Case, str],
    eta: Any = 1,
    rng: Optional[np.random.Generator] = None,
    density: float = 0.6,
    max_num: int = 5,
    max_den: int = 4,
) -> PerturbationSpec:
    """Spec with small random rational coefficients satisfying the case ties"""
    case = Case(case)
    rng = rng if rng is not None else np.random.default_rng()
    sources = {
        Case.GENERAL: {1: 1, 2: 2, 3: 3, 4: 4},
        Case.THM2: {1: 1, 2: 1, 3: 3, 4: 3},
        Case.THM3: {1: 1, 4: 1, 2: 2, 3: 2},
        Case.SMOOTH: {1: 1, 2: 1, 3: 1, 4: 1},
    }[case]
    tables: Dict[str, Dict[int, List[List[Any]]]] = {}
    for kind in ("f", "g"):
        drawn = {src: _random_piece(n, rng, density, max_num, max_den) for src in sorted(set(sources.values()))}
        tables[kind] = {k: drawn[src] for k, src in sources.items()}
    return PerturbationSpec.from_json({"eta": eta, "n": n, "case": case, **tables})
