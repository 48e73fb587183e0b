"""Valuation curves, the value/cut query oracle and grid discretization."""

from __future__ import annotations

import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, InstanceLoadError, UnattainableValueError

TOL = 1e-9
KINDS = ("piecewise_linear", "power", "capped_linear", "inverted_power")

_CHECK_POINTS = 4097


@dataclass(frozen=True)
class ValuationFn:
    """A non-decreasing, Lipschitz value curve on [0, 1] with f(0) = 0.

    ``params`` is kind-specific:

    * ``piecewise_linear``: ``(zs, vs)`` breakpoint coordinates
    * ``power``: ``(exponent, scale)`` for ``scale * z**exponent``
    * ``capped_linear``: ``(slope, cap)`` for ``min(slope * z, cap)``
    * ``inverted_power``: ``(exponent, scale)`` for ``scale * (1 - (1 - z)**exponent)``
    """

    kind: str
    params: tuple
    lipschitz: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown valuation kind {self.kind!r}")
        if self.lipschitz is None or not math.isfinite(self.lipschitz) or self.lipschitz < 0:
            raise DomainError(f"Lipschitz constant must be a finite non-negative number, got {self.lipschitz!r}")
        if self.kind == "piecewise_linear":
            zs, vs = self.params
            if len(zs) != len(vs) or len(zs) < 2:
                raise DomainError("piecewise-linear curve needs at least two breakpoints")
            if zs[0] != 0.0 or vs[0] != 0.0 or zs[-1] != 1.0:
                raise DomainError("piecewise-linear points must start at [0, 0] and end at z = 1")
            if any(b <= a for a, b in zip(zs, zs[1:])):
                raise DomainError("breakpoint positions must be strictly increasing")
            if any(b < a for a, b in zip(vs, vs[1:])):
                raise DomainError("breakpoint values must be non-decreasing")
            zs_a = np.asarray(zs, dtype=float)
            vs_a = np.asarray(vs, dtype=float)
            object.__setattr__(self, "_zs", zs_a)
            object.__setattr__(self, "_vs", vs_a)
            object.__setattr__(self, "_slopes", np.diff(vs_a) / np.diff(zs_a))
            object.__setattr__(self, "_inv_slopes", _safe_inverse(np.diff(zs_a), np.diff(vs_a)))
        elif self.kind in ("power", "inverted_power"):
            p, scale = self.params
            if p < 1:
                raise DomainError("exponent must be >= 1")
            if scale < 0:
                raise DomainError("scale must be non-negative")
        else:
            slope, cap = self.params
            if slope < 0 or cap < 0:
                raise DomainError("slope and cap must be non-negative")
        self._check_lipschitz()

    # constructors

    @classmethod
    def piecewise_linear(cls, points: Iterable[Sequence[float]], lipschitz: float | None = None) -> "ValuationFn":
        pts = [(float(z), float(v)) for z, v in points]
        zs = tuple(z for z, _ in pts)
        vs = tuple(v for _, v in pts)
        if lipschitz is None:
            slopes = [(v1 - v0) / (z1 - z0) for (z0, v0), (z1, v1) in zip(pts, pts[1:]) if z1 > z0]
            lipschitz = max(slopes, default=0.0)
        return cls("piecewise_linear", (zs, vs), float(lipschitz))

    @classmethod
    def linear(cls, scale: float = 1.0) -> "ValuationFn":
        return cls.piecewise_linear([(0.0, 0.0), (1.0, scale)], lipschitz=scale)

    @classmethod
    def power(cls, exponent: float, scale: float = 1.0, lipschitz: float | None = None) -> "ValuationFn":
        if lipschitz is None:
            lipschitz = scale * exponent
        return cls("power", (float(exponent), float(scale)), float(lipschitz))

    @classmethod
    def capped_linear(cls, slope: float, cap: float, lipschitz: float | None = None) -> "ValuationFn":
        if lipschitz is None:
            lipschitz = slope
        return cls("capped_linear", (float(slope), float(cap)), float(lipschitz))

    @classmethod
    def inverted_power(cls, exponent: float, scale: float = 1.0, lipschitz: float | None = None) -> "ValuationFn":
        if lipschitz is None:
            lipschitz = scale * exponent
        return cls("inverted_power", (float(exponent), float(scale)), float(lipschitz))

    # evaluation

    def value(self, z):
        """Value of receiving a fraction ``z`` of the item."""
        arr = np.asarray(z, dtype=float)
        if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
            raise DomainError(f"allocation must lie in [0, 1], got {z!r}")
        out = self._eval(arr)
        return float(out) if out.ndim == 0 else out

    __call__ = value

    def values_unchecked(self, z: np.ndarray) -> np.ndarray:
        return self._eval(np.asarray(z, dtype=float))

    def _eval(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "piecewise_linear":
            zs, vs, slopes = self._zs, self._vs, self._slopes
            j = np.clip(np.searchsorted(zs, z, side="right") - 1, 0, len(zs) - 2)
            out = vs[j] + (z - zs[j]) * slopes[j]
            return np.where(z >= 1.0, vs[-1], out)
        if self.kind == "power":
            p, scale = self.params
            return scale * z**p
        if self.kind == "capped_linear":
            slope, cap = self.params
            return np.minimum(slope * z, cap)
        p, scale = self.params
        return scale * (1.0 - (1.0 - z) ** p)

    @property
    def full_value(self) -> float:
        return float(self._eval(np.asarray(1.0)))

    def cut(self, v: float) -> float:
        """Smallest z in [0, 1] with f(z) = v."""
        v = float(v)
        if math.isnan(v) or v < 0.0:
            raise DomainError(f"cut value must be non-negative, got {v!r}")
        top = self.full_value
        if v > top + TOL:
            raise UnattainableValueError(f"value {v!r} exceeds f(1) = {top!r}")
        v = min(v, top)
        if v == 0.0:
            return 0.0
        if self.kind == "piecewise_linear":
            zs, vs = self._zs, self._vs
            j = int(np.searchsorted(vs, v, side="left"))
            if vs[j] == v:
                return float(zs[j])
            return float(zs[j - 1] + (v - vs[j - 1]) * self._inv_slopes[j - 1])
        if self.kind == "power":
            p, scale = self.params
            return float(min(1.0, (v / scale) ** (1.0 / p)))
        if self.kind == "capped_linear":
            slope, _ = self.params
            return float(min(1.0, v / slope))
        p, scale = self.params
        return float(min(1.0, 1.0 - (1.0 - v / scale) ** (1.0 / p)))

    def _check_lipschitz(self):
        z = np.linspace(0.0, 1.0, _CHECK_POINTS)
        f = self._eval(z)
        if abs(f[0]) > TOL:
            raise DomainError("valuation must satisfy f(0) = 0")
        df = np.diff(f)
        if np.any(df < -TOL):
            raise DomainError("valuation must be non-decreasing")
        if np.any(np.abs(df) > self.lipschitz * np.diff(z) * (1 + 1e-9) + TOL):
            raise DomainError(f"valuation violates its Lipschitz constant {self.lipschitz}")

    # serialization

    def to_dict(self) -> dict:
        if self.kind == "piecewise_linear":
            zs, vs = self.params
            spec = {"kind": self.kind, "points": [[z, v] for z, v in zip(zs, vs)]}
        elif self.kind == "capped_linear":
            spec = {"kind": self.kind, "slope": self.params[0], "cap": self.params[1]}
        else:
            spec = {"kind": self.kind, "exponent": self.params[0], "scale": self.params[1]}
        spec["lipschitz"] = self.lipschitz
        return spec

    @classmethod
    def from_dict(cls, spec: dict) -> "ValuationFn":
        kind = spec.get("kind")
        if "lipschitz" not in spec:
            raise DomainError("missing Lipschitz constant")
        C = spec["lipschitz"]
        if kind == "piecewise_linear":
            return cls.piecewise_linear(spec["points"], lipschitz=C)
        if kind == "power":
            return cls.power(spec["exponent"], spec.get("scale", 1.0), lipschitz=C)
        if kind == "capped_linear":
            return cls.capped_linear(spec["slope"], spec["cap"], lipschitz=C)
        if kind == "inverted_power":
            return cls.inverted_power(spec["exponent"], spec.get("scale", 1.0), lipschitz=C)
        raise DomainError(f"unknown valuation kind {kind!r}")


def _safe_inverse(dz: np.ndarray, dv: np.ndarray) -> np.ndarray:
    out = np.zeros_like(dz)
    np.divide(dz, dv, out=out, where=dv > 0)
    return out


@dataclass(frozen=True)
class Instance:
    """``n`` agents by ``m`` items grid of valuation curves."""

    valuations: tuple

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.valuations)
        if not rows or not rows[0]:
            raise DomainError("an instance needs at least one agent and one item")
        if any(len(r) != len(rows[0]) for r in rows):
            raise DomainError("every agent needs a valuation for every item")
        if not all(isinstance(f, ValuationFn) for r in rows for f in r):
            raise DomainError("every cell must hold a ValuationFn")
        object.__setattr__(self, "valuations", rows)

    @property
    def n(self) -> int:
        return len(self.valuations)

    @property
    def m(self) -> int:
        return len(self.valuations[0])

    @property
    def lipschitz(self) -> float:
        return max(f.lipschitz for r in self.valuations for f in r)

    def full_values(self) -> np.ndarray:
        return np.array([[f.full_value for f in r] for r in self.valuations])

    def proportional_shares(self) -> np.ndarray:
        return self.full_values().sum(axis=1) / self.n

    def cross_utilities(self, alloc: np.ndarray) -> np.ndarray:
        """``U[..., i, j] = sum_k f_ik(alloc[..., j, k])``."""
        x = np.asarray(alloc, dtype=float)
        if np.any(x < -TOL) or np.any(x > 1.0 + TOL):
            raise DomainError("allocations must lie in [0, 1]")
        x = np.clip(x, 0.0, 1.0)
        out = np.zeros(x.shape[:-2] + (self.n, self.n))
        for i, row in enumerate(self.valuations):
            for k, f in enumerate(row):
                out[..., i, :] += f.values_unchecked(x[..., :, k])
        return out

    def utilities(self, alloc: np.ndarray) -> np.ndarray:
        """Each agent's utility for her own bundle."""
        return np.diagonal(self.cross_utilities(alloc), axis1=-2, axis2=-1).copy()

    def to_dict(self) -> dict:
        return {
            "agents": self.n,
            "items": self.m,
            "valuations": [[f.to_dict() for f in r] for r in self.valuations],
        }


# ---------------------------------------------------------------- queries


@dataclass(frozen=True)
class Query:
    kind: str
    arg: float
    response: float


class QueryLedger:
    """Append-only record of value/cut queries, per (agent, item)."""

    def __init__(self):
        self._by_cell: dict[tuple[int, int], list[Query]] = defaultdict(list)
        self._transcript: list[tuple[int, int, Query]] = []

    def record(self, agent: int, item: int, kind: str, arg: float, response: float) -> None:
        q = Query(kind, float(arg), float(response))
        self._by_cell[(agent, item)].append(q)
        self._transcript.append((agent, item, q))

    def entries(self, agent: int, item: int) -> tuple[Query, ...]:
        return tuple(self._by_cell.get((agent, item), ()))

    @property
    def transcript(self) -> tuple[tuple[int, int, Query], ...]:
        return tuple(self._transcript)

    @property
    def value_count(self) -> int:
        return sum(1 for _, _, q in self._transcript if q.kind == "value")

    @property
    def cut_count(self) -> int:
        return sum(1 for _, _, q in self._transcript if q.kind == "cut")

    @property
    def total(self) -> int:
        return len(self._transcript)

    def counts(self) -> dict[tuple[int, int], int]:
        return {cell: len(qs) for cell, qs in sorted(self._by_cell.items())}

    def merge(self, other: "QueryLedger") -> None:
        for agent, item, q in other._transcript:
            self.record(agent, item, q.kind, q.arg, q.response)

    def summary(self) -> dict:
        return {
            "value_queries": self.value_count,
            "cut_queries": self.cut_count,
            "total": self.total,
            "per_cell": {f"{i},{k}": c for (i, k), c in self.counts().items()},
        }


class QueryOracle:
    """Answers value/cut queries from an instance, logging each one."""

    def __init__(self, instance: Instance, ledger: QueryLedger | None = None):
        self.instance = instance
        self.ledger = ledger if ledger is not None else QueryLedger()

    @property
    def n(self) -> int:
        return self.instance.n

    @property
    def m(self) -> int:
        return self.instance.m

    def value(self, agent: int, item: int, z: float) -> float:
        r = self.instance.valuations[agent][item].value(z)
        self.ledger.record(agent, item, "value", z, r)
        return r

    def cut(self, agent: int, item: int, v: float) -> float:
        r = self.instance.valuations[agent][item].cut(v)
        self.ledger.record(agent, item, "cut", v, r)
        return r


# ---------------------------------------------------------------- grid


def grid_pieces(epsilon) -> int:
    """Number of pieces ``1/epsilon``; rejects non-integral values."""
    if isinstance(epsilon, str):
        try:
            epsilon = Fraction(epsilon.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse epsilon {epsilon!r}") from exc
    if isinstance(epsilon, Fraction):
        if epsilon <= 0 or epsilon > 1 or (1 / epsilon).denominator != 1:
            raise ConfigError(f"1/epsilon must be a positive integer, got epsilon = {epsilon}")
        return int(1 / epsilon)
    eps = float(epsilon)
    if not (0.0 < eps <= 1.0):
        raise ConfigError(f"epsilon must lie in (0, 1], got {eps}")
    k = round(1.0 / eps)
    if abs(k * eps - 1.0) > TOL:
        raise ConfigError(f"1/epsilon must be an integer, got 1/{eps} = {1.0 / eps}")
    return int(k)


@dataclass(frozen=True)
class GridValues:
    """``values[i, k, y] = f_ik(y / pieces)``."""

    pieces: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[2] != self.pieces + 1:
            raise ConfigError("grid table must have shape (n, m, pieces + 1)")
        if np.any(v[:, :, 0] != 0.0):
            raise ConfigError("grid values must start at 0")
        if np.any(np.diff(v, axis=2) < -TOL):
            raise ConfigError("grid values must be non-decreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def epsilon(self) -> float:
        return 1.0 / self.pieces

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_instance(cls, instance: Instance, pieces: int) -> "GridValues":
        """Exact table without query accounting (for oracles and tests)."""
        z = np.arange(pieces + 1) / pieces
        vals = np.array([[f.values_unchecked(z) for f in row] for row in instance.valuations])
        vals[:, :, 0] = 0.0
        return cls(pieces, vals)


def discretize(source, epsilon, ledger: QueryLedger | None = None) -> GridValues:
    """Query every agent's curve for every item at ``epsilon, 2 epsilon, ..., 1``.

    ``source`` is an :class:`Instance` or anything with ``n``, ``m`` and a
    ``value(agent, item, z)`` method (e.g. an adversary). Grid point 0 is
    not queried since f(0) = 0.
    """
    k = grid_pieces(epsilon)
    oracle = QueryOracle(source, ledger) if isinstance(source, Instance) else source
    vals = np.zeros((oracle.n, oracle.m, k + 1))
    for i in range(oracle.n):
        for item in range(oracle.m):
            for y in range(1, k + 1):
                vals[i, item, y] = oracle.value(i, item, y / k)
    return GridValues(k, vals)


# ---------------------------------------------------------------- files


def instance_from_dict(data: dict, text: str | None = None) -> Instance:
    def where(i, k):
        ctx = f"valuations[{i}][{k}]"
        line = _line_of_cell(text, i * m + k) if text is not None else None
        return f"{ctx} (line {line})" if line else ctx

    try:
        n, m = int(data["agents"]), int(data["items"])
        rows = data["valuations"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceLoadError(f"instance needs 'agents', 'items' and 'valuations': {exc}") from exc
    if n < 1 or m < 1:
        raise InstanceLoadError("an instance needs at least one agent and one item")
    if len(rows) != n or any(len(r) != m for r in rows):
        raise InstanceLoadError(f"'valuations' must be a {n} x {m} array")
    out = []
    for i, row in enumerate(rows):
        parsed = []
        for k, spec in enumerate(row):
            try:
                parsed.append(ValuationFn.from_dict(spec))
            except (DomainError, KeyError, TypeError, ValueError) as exc:
                raise InstanceLoadError(f"{where(i, k)}: {exc}") from exc
        out.append(tuple(parsed))
    return Instance(tuple(out))


def _line_of_cell(text: str, index: int) -> int | None:
    hits = [m.start() for m in re.finditer(r'"kind"', text)]
    if index >= len(hits):
        return None
    return text.count("\n", 0, hits[index]) + 1


def load_instance(path) -> Instance:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceLoadError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(data, text)


def dump_instance(instance: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance.to_dict(), indent=2) + "\n")
