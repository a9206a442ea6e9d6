"""Candidate architectures of the DenseNet-style search space.

An architecture is ``N_c`` cells of ``d_c`` convolution layers each. Cell ``c``
has width ``w_c = base_width_c * w_m`` and every layer in it may concatenate up
to ``t_c`` channels produced by earlier layers of the same cell.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import accumulate, product
from typing import Iterator, Sequence

import numpy as np

from .exceptions import DataError, DomainError, InfeasibleError


@dataclass(frozen=True, order=True)
class ArchConfig:
    """One candidate architecture.

    Ordering is lexicographic on ``(w_m, n_c, d_c, t)``, which is the
    tie-breaking order used by every search routine.
    """

    w_m: int
    n_c: int
    d_c: int
    t: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "t", tuple(int(v) for v in self.t))
        for name in ("w_m", "n_c", "d_c"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if len(self.t) != self.n_c:
            raise DomainError(f"t has {len(self.t)} entries but n_c={self.n_c}")
        if min((self.w_m, self.n_c, self.d_c, *self.t)) < 0:
            raise DomainError("architecture fields must be non-negative")

    @property
    def key(self) -> tuple[int, ...]:
        return (self.w_m, self.n_c, self.d_c, *self.t)

    def to_record(self) -> dict:
        """Flat record used by CSV files: ``t`` is semicolon-joined."""
        return {"w_m": self.w_m, "n_c": self.n_c, "d_c": self.d_c,
                "t": ";".join(str(v) for v in self.t)}

    def to_dict(self) -> dict:
        return {"w_m": self.w_m, "n_c": self.n_c, "d_c": self.d_c, "t": list(self.t)}

    @classmethod
    def from_record(cls, record: dict) -> "ArchConfig":
        """Build from a CSV row or JSON object; ``t`` may be a list or ``"a;b;c"``."""
        try:
            t = record["t"]
            if isinstance(t, str):
                t = [int(v) for v in t.split(";") if v.strip() != ""]
            else:
                t = [int(v) for v in t]
            n_c = int(record.get("n_c", len(t)))
            return cls(int(record["w_m"]), n_c, int(record["d_c"]), tuple(t))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DataError(f"malformed architecture record {record!r}: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "ArchConfig":
        try:
            return cls.from_record(json.loads(text))
        except json.JSONDecodeError as exc:
            raise DataError(f"architecture is not valid JSON: {exc}") from exc


@dataclass(frozen=True)
class SpaceSpec:
    """Bounds and coupling rules of the search space.

    ``n_c`` is either a fixed cell count or an inclusive ``(min, max)`` pair.
    Cells beyond ``base_widths`` use ``16 * 2**(c - 1)`` channels.
    """

    w_m_min: int = 1
    w_m_max: int = 3
    d_c_min: int = 5
    d_c_max: int = 30
    n_c: int | tuple[int, int] = 3
    base_widths: tuple[int, ...] = (16, 32, 64)
    t1_min: int = 5
    coupling: int = 2

    def __post_init__(self):
        n_c = self.n_c
        if isinstance(n_c, (list, tuple)):
            lo, hi = (int(v) for v in n_c)
            n_c = lo if lo == hi else (lo, hi)
        else:
            n_c = int(n_c)
        object.__setattr__(self, "n_c", n_c)
        object.__setattr__(self, "base_widths", tuple(int(v) for v in self.base_widths))

    @property
    def n_c_range(self) -> range:
        if isinstance(self.n_c, tuple):
            return range(self.n_c[0], self.n_c[1] + 1)
        return range(self.n_c, self.n_c + 1)

    @property
    def w_m_range(self) -> range:
        return range(self.w_m_min, self.w_m_max + 1)

    @property
    def d_c_range(self) -> range:
        return range(self.d_c_min, self.d_c_max + 1)

    def base_width(self, cell: int) -> int:
        """Base channel count of zero-based ``cell``."""
        if cell < len(self.base_widths):
            return self.base_widths[cell]
        return 16 * 2 ** cell

    def ceilings(self, w_m: int, n_c: int, d_c: int) -> list[int]:
        """Per-cell upper bound ``w_c * (d_c - 2)`` on ``t_c``."""
        return [self.base_width(c) * w_m * (d_c - 2) for c in range(n_c)]

    def to_dict(self) -> dict:
        return {
            "w_m_min": self.w_m_min, "w_m_max": self.w_m_max,
            "d_c_min": self.d_c_min, "d_c_max": self.d_c_max,
            "n_c": list(self.n_c) if isinstance(self.n_c, tuple) else self.n_c,
            "base_widths": list(self.base_widths), "t1_min": self.t1_min,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpaceSpec":
        known = {"w_m_min", "w_m_max", "d_c_min", "d_c_max", "n_c", "base_widths",
                 "t1_min", "coupling"}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown SpaceSpec keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise DataError(f"malformed SpaceSpec: {exc}") from exc


DEFAULT_SPEC = SpaceSpec()


@dataclass(frozen=True)
class LayerDescriptor:
    cell: int
    index: int
    kx: int
    ky: int
    n_if: int
    n_of: int
    h: int
    w: int
    concat_count: int


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def cell_widths(w_m: int, spec: SpaceSpec = DEFAULT_SPEC, n_c: int | None = None) -> list[int]:
    if not spec.w_m_min <= w_m <= spec.w_m_max:
        raise DomainError(f"w_m={w_m} outside [{spec.w_m_min}, {spec.w_m_max}]")
    if n_c is None:
        n_c = spec.n_c_range.start
    return [spec.base_width(c) * w_m for c in range(n_c)]


def validate(config: ArchConfig, spec: SpaceSpec = DEFAULT_SPEC) -> ValidationReport:
    """List every constraint of ``spec`` that ``config`` violates. Never raises."""
    report = ValidationReport()
    v = report.violations
    if not spec.w_m_min <= config.w_m <= spec.w_m_max:
        v.append(f"w_m={config.w_m} outside [{spec.w_m_min}, {spec.w_m_max}]")
    if config.n_c not in spec.n_c_range:
        v.append(f"n_c={config.n_c} outside [{spec.n_c_range.start}, {spec.n_c_range.stop - 1}]")
    if not spec.d_c_min <= config.d_c <= spec.d_c_max:
        v.append(f"d_c={config.d_c} outside [{spec.d_c_min}, {spec.d_c_max}]")
    t = config.t
    if t and t[0] < spec.t1_min:
        v.append(f"t_1={t[0]} < {spec.t1_min}")
    for c in range(1, len(t)):
        if t[c] < spec.coupling * t[c - 1]:
            v.append(f"t_{c + 1} < {spec.coupling}·t_{c}: {t[c]} < {spec.coupling * t[c - 1]}")
    for c, tc in enumerate(t):
        ceil = spec.base_width(c) * config.w_m * (config.d_c - 2)
        if tc > ceil:
            v.append(f"t_{c + 1} > {spec.base_width(c)}·{config.w_m}·({config.d_c}−2)={ceil}: "
                     f"t_{c + 1}={tc}")
    return report


def is_valid(config: ArchConfig, spec: SpaceSpec = DEFAULT_SPEC) -> bool:
    return validate(config, spec).ok


def _count_t(ceilings: Sequence[int], t1_min: int, coupling: int) -> int:
    # suffix-sum recursion over t_N, ..., t_1 with t_{k+1} >= coupling * t_k
    n = len(ceilings)
    if n == 0:
        return 1
    ways = [1] * (ceilings[-1] + 1)
    for k in range(n - 2, -1, -1):
        # tail[x] = sum of ways[x:], so completions of t_k = tail[coupling * t_k]
        tail = list(accumulate(reversed(ways)))[::-1] + [0]
        nxt_len = len(ways)
        ways = [tail[min(coupling * tk, nxt_len)] for tk in range(ceilings[k] + 1)]
    lo = max(t1_min, 0)
    return sum(ways[lo:])


def search_space_size(spec: SpaceSpec = DEFAULT_SPEC) -> int:
    """Exact number of valid configurations (arbitrary-precision integer)."""
    total = 0
    for w_m, n_c, d_c in product(spec.w_m_range, spec.n_c_range, spec.d_c_range):
        ceilings = spec.ceilings(w_m, n_c, d_c)
        if min(ceilings, default=0) < 0:
            continue
        total += _count_t(ceilings, spec.t1_min, spec.coupling)
    return total


def search_space_size_closed_form(spec: SpaceSpec = DEFAULT_SPEC) -> int:
    """Three-cell quadruple sum with the two innermost sums in closed form.

    Only defined for a fixed three-cell spec; kept as a second route to the size.
    """
    if spec.n_c_range != range(3, 4):
        raise DomainError("closed form requires n_c == 3")
    k = spec.coupling
    total = 0
    for w_m, d_c in product(spec.w_m_range, spec.d_c_range):
        c1, c2, c3 = spec.ceilings(w_m, 3, d_c)
        hi = min(c2, c3 // k)  # beyond this no t_3 fits
        for t1 in range(max(spec.t1_min, 0), c1 + 1):
            lo = k * t1
            m = hi - lo + 1
            if m > 0:
                # sum of (c3 + 1 - k * t2) over t2 = lo..hi
                total += m * (c3 + 1) - k * ((lo + hi) * m // 2)
    return total


def iter_space(spec: SpaceSpec = DEFAULT_SPEC) -> Iterator[ArchConfig]:
    """Yield every valid configuration in lexicographic order."""
    for w_m, n_c, d_c in product(spec.w_m_range, spec.n_c_range, spec.d_c_range):
        ceilings = spec.ceilings(w_m, n_c, d_c)
        if n_c == 0:
            yield ArchConfig(w_m, 0, d_c, ())
            continue

        def rec(prefix):
            c = len(prefix)
            lo = spec.t1_min if c == 0 else spec.coupling * prefix[-1]
            for tc in range(max(lo, 0), ceilings[c] + 1):
                if c + 1 == n_c:
                    yield (*prefix, tc)
                else:
                    yield from rec((*prefix, tc))

        for t in rec(()):
            yield ArchConfig(w_m, n_c, d_c, t)


def sample_uniform(spec: SpaceSpec = DEFAULT_SPEC, seed: int = 0, n: int = 1,
                   batch: int = 65536) -> list[ArchConfig]:
    """Draw ``n`` configurations uniformly from the valid set.

    Rejection sampling from the bounding box; with a range of cell counts the
    count is drawn first, weighted by how many configurations each count has.
    """
    if n < 0:
        raise DomainError("n must be non-negative")
    sizes = {n_c: search_space_size(_with_n_c(spec, n_c)) for n_c in spec.n_c_range}
    total = sum(sizes.values())
    if total == 0:
        raise InfeasibleError("search space contains no valid configuration")
    rng = np.random.default_rng(seed)
    if n == 0:
        return []
    counts = list(sizes.items())
    if len(counts) == 1:
        per_nc = {counts[0][0]: n}
    else:
        probs = np.array([c for _, c in counts], dtype=float) / total
        picks = rng.choice(len(counts), size=n, p=probs)
        per_nc = {nc: int(np.sum(picks == i)) for i, (nc, _) in enumerate(counts)}
        order = [counts[i][0] for i in picks]
    drawn = {nc: _rejection(spec, nc, k, rng, batch) for nc, k in per_nc.items() if k}
    if len(counts) == 1:
        return drawn[counts[0][0]]
    cursor = {nc: 0 for nc in drawn}
    out = []
    for nc in order:
        out.append(drawn[nc][cursor[nc]])
        cursor[nc] += 1
    return out


def _with_n_c(spec: SpaceSpec, n_c: int) -> SpaceSpec:
    d = spec.to_dict()
    d["n_c"] = n_c
    d["coupling"] = spec.coupling
    return SpaceSpec(**d)


def _rejection(spec, n_c, n, rng, batch):
    w_lo, w_hi = spec.w_m_min, spec.w_m_max
    d_lo, d_hi = spec.d_c_min, spec.d_c_max
    base = np.array([spec.base_width(c) for c in range(n_c)], dtype=np.int64)
    t_hi = base * w_hi * (d_hi - 2)
    t_lo = np.zeros(n_c, dtype=np.int64)
    if n_c:
        t_lo[0] = max(spec.t1_min, 0)
    out: list[ArchConfig] = []
    while len(out) < n:
        w = rng.integers(w_lo, w_hi + 1, size=batch)
        d = rng.integers(d_lo, d_hi + 1, size=batch)
        t = rng.integers(t_lo, t_hi + 1, size=(batch, n_c))
        ok = np.all(t <= base[None, :] * (w * (d - 2))[:, None], axis=1)
        if n_c > 1:
            ok &= np.all(t[:, 1:] >= spec.coupling * t[:, :-1], axis=1)
        for i in np.flatnonzero(ok):
            out.append(ArchConfig(int(w[i]), n_c, int(d[i]), tuple(int(v) for v in t[i])))
            if len(out) == n:
                break
    return out


def feature_map_sizes(n_c: int, h0: int, w0: int) -> list[tuple[int, int]]:
    """Output (H, W) of each cell; halves at every cell boundary, rounding up."""
    sizes = []
    h, w = h0, w0
    for c in range(n_c):
        if c:
            h, w = math.ceil(h / 2), math.ceil(w / 2)
        sizes.append((h, w))
    return sizes


def concat_counts(w_c: int, d_c: int, t_c: int) -> list[int]:
    """Skip channels concatenated at each zero-based layer of a cell."""
    return [min((i - 1) * w_c, t_c) if 2 <= i <= d_c - 1 else 0 for i in range(d_c)]


def realize_layers(config: ArchConfig, spec: SpaceSpec = DEFAULT_SPEC, hw=None) -> list[LayerDescriptor]:
    """Expand ``config`` into one descriptor per convolution layer.

    ``hw`` supplies kernel size and the input tensor shape; see
    :class:`flashnas.hardware.HwConfig`.
    """
    if hw is None:
        from .hardware import HwConfig
        hw = HwConfig()
    layers = []
    prev = hw.c0
    for c, (h, w) in enumerate(feature_map_sizes(config.n_c, hw.h0, hw.w0)):
        w_c = spec.base_width(c) * config.w_m
        for i, cc in enumerate(concat_counts(w_c, config.d_c, config.t[c])):
            n_if = prev if i == 0 else w_c + cc
            layers.append(LayerDescriptor(c, i, hw.kx, hw.ky, n_if, w_c, h, w, cc))
        prev = w_c
    return layers
