"""NN-Degree: the summed average node degree of every cell.

Channels are nodes and convolution kernels are links. Within cell ``c`` the
short-range links contribute ``w_c`` to the average degree and the
concatenated skip channels contribute ``SC_c / (w_c * d_c)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DomainError
from .space import DEFAULT_SPEC, ArchConfig, LayerDescriptor, SpaceSpec, validate


@dataclass(frozen=True)
class DegreeReport:
    g_exact: Fraction
    lattice_exact: Fraction
    random_exact: Fraction
    per_cell: tuple[Fraction, ...]
    sc: tuple[int, ...]

    @property
    def g(self) -> float:
        return float(self.g_exact)

    @property
    def g_lattice(self) -> float:
        return float(self.lattice_exact)

    @property
    def g_random(self) -> float:
        return float(self.random_exact)

    def to_dict(self) -> dict:
        return {"g": self.g, "g_lattice": self.g_lattice, "g_random": self.g_random,
                "per_cell": [float(v) for v in self.per_cell], "sc": list(self.sc)}


def skip_channel_sum(w_c: int, d_c: int, t_c: int) -> int:
    """``sum(min((i - 1) * w_c, t_c) for i in 2..d_c-1)`` without the loop."""
    m = d_c - 2
    if m <= 0:
        return 0
    if w_c <= 0:
        return 0
    k = min(m, t_c // w_c)  # terms where j * w_c <= t_c
    return w_c * k * (k + 1) // 2 + (m - k) * t_c


def skip_connections(config: ArchConfig, spec: SpaceSpec = DEFAULT_SPEC) -> list[int]:
    """Per-cell skip kernel counts ``SC_c = w_c * sum_i min((i-1) w_c, t_c)``."""
    out = []
    for c, t_c in enumerate(config.t):
        w_c = spec.base_width(c) * config.w_m
        out.append(w_c * skip_channel_sum(w_c, config.d_c, t_c))
    return out


def nn_degree(config: ArchConfig, spec: SpaceSpec = DEFAULT_SPEC, check: bool = True) -> DegreeReport:
    """Compute NN-Degree with exact rational arithmetic.

    Pass ``check=False`` to score a configuration outside ``spec`` (the formula
    itself only needs the base widths).
    """
    if check:
        report = validate(config, spec)
        if not report.ok:
            raise DomainError("invalid architecture: " + "; ".join(report.violations))
    if config.d_c <= 0 and config.n_c:
        raise DomainError("d_c must be positive")
    lattice = Fraction(0)
    random = Fraction(0)
    per_cell = []
    sc = skip_connections(config, spec)
    for c, sc_c in enumerate(sc):
        w_c = spec.base_width(c) * config.w_m
        g_rand = Fraction(sc_c, w_c * config.d_c) if w_c else Fraction(0)
        lattice += w_c
        random += g_rand
        per_cell.append(w_c + g_rand)
    return DegreeReport(lattice + random, lattice, random, tuple(per_cell), tuple(sc))


@dataclass(frozen=True)
class CellKernelCount:
    lattice_kernels: int
    skip_kernels: int
    nodes: int

    @property
    def degree(self) -> Fraction:
        return Fraction(self.lattice_kernels + self.skip_kernels, self.nodes)


def count_kernels_oracle(layers: list[LayerDescriptor]) -> list[CellKernelCount]:
    """Count links per cell directly from layer descriptors.

    Every layer has ``N_of * N_of`` short-range kernels (a cell's first layer
    is counted at its own width) plus ``concat_count * N_of`` skip kernels.
    """
    cells: dict[int, list[int]] = {}
    for layer in layers:
        acc = cells.setdefault(layer.cell, [0, 0, 0])
        acc[0] += layer.n_of * layer.n_of
        acc[1] += layer.concat_count * layer.n_of
        acc[2] += layer.n_of
    return [CellKernelCount(*cells[c]) for c in sorted(cells)]


def oracle_degree(layers: list[LayerDescriptor]) -> Fraction:
    return sum((cell.degree for cell in count_kernels_oracle(layers)), Fraction(0))


def degree_array(configs, spec: SpaceSpec = DEFAULT_SPEC) -> np.ndarray:
    """Float NN-Degree of many configurations, each correctly rounded.

    ``g = (sum_c w_c * d_c + sum_c S_c) / d_c`` is formed as an exact integer
    ratio, so every entry equals ``float(nn_degree(c).g_exact)``.
    """
    out = np.empty(len(configs))
    for i, c in enumerate(configs):
        num = 0
        for cell, t_c in enumerate(c.t):
            w_c = spec.base_width(cell) * c.w_m
            num += w_c * c.d_c + skip_channel_sum(w_c, c.d_c, t_c)
        out[i] = num / c.d_c if c.d_c else 0.0
    return out


class NNDegreeTransformer(TransformerMixin, BaseEstimator):
    """Map a sequence of :class:`ArchConfig` to a ``(n, 1)`` array of NN-Degree.

    Stateless; ``fit`` only records the number of output features.
    """

    def __init__(self, spec: SpaceSpec = DEFAULT_SPEC, check: bool = True):
        self.spec = spec
        self.check = check

    def fit(self, X, y=None):
        self.n_features_out_ = 1
        return self

    def transform(self, X):
        X = list(X)
        if self.check:
            for c in X:
                report = validate(c, self.spec)
                if not report.ok:
                    raise DomainError("invalid architecture: " + "; ".join(report.violations))
        return degree_array(X, self.spec).reshape(-1, 1)

    def get_feature_names_out(self, input_features=None):
        return np.array(["nn_degree"], dtype=object)
