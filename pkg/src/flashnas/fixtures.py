"""Synthetic measurement tables with known ground truth.

They stand in for simulator or device measurements so the whole pipeline can
run and be tested offline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hardware import DEFAULT_HW, ENERGY_FEATURES, LATENCY_FEATURES, HwConfig, feature_matrix, FEATURE_NAMES
from .predictor import AccuracyModel
from .space import DEFAULT_SPEC, SpaceSpec, sample_uniform
from .topology import nn_degree

# per-unit contributions sized for the default CIFAR-style space
TRUE_LATENCY = (0.5, 0.1, 1.0, 0.02, 5e-7, 4e-9)
TRUE_ENERGY = (1e-3, 2e-4, 5e-4, 1e-10, 1e-12, 2e-14, 1e-9)
TRUE_ACCURACY = AccuracyModel(a=1.02, b=300.0, c=-3.5)

FIXTURE_SPEC = SpaceSpec(w_m_min=1, w_m_max=3, d_c_min=5, d_c_max=7, n_c=3,
                         base_widths=(2, 4, 8), t1_min=2)


@dataclass
class GroundTruth:
    latency: tuple = TRUE_LATENCY
    energy: tuple = TRUE_ENERGY
    accuracy: AccuracyModel = TRUE_ACCURACY
    hw: HwConfig = DEFAULT_HW


@dataclass
class SyntheticTables:
    configs: list
    accuracy: np.ndarray
    latency_ms: np.ndarray
    energy_mj: np.ndarray
    area_mm2: np.ndarray
    features: np.ndarray = field(repr=False, default=None)

    def rows(self, column: str) -> list[dict]:
        values = getattr(self, column)
        return [{**c.to_record(), column: float(v)} for c, v in zip(self.configs, values)]


def exact_measurements(configs, spec: SpaceSpec = DEFAULT_SPEC, truth: GroundTruth = GroundTruth()):
    F = feature_matrix(configs, spec, truth.hw)
    col = {name: F[:, j] for j, name in enumerate(FEATURE_NAMES)}
    lat = sum(w * col[n] for w, n in zip(truth.latency, LATENCY_FEATURES))
    energy = sum(w * col[n] for w, n in zip(truth.energy, ENERGY_FEATURES)) * col["n_tiles"]
    area = col["n_tiles"] * (truth.hw.a_tile + truth.hw.a_router) + truth.hw.a_rest
    g = np.array([nn_degree(c, spec, check=False).g for c in configs])
    a = truth.accuracy
    theta = 1.0 / (a.a + np.exp(a.b / g + a.c))
    return F, theta, lat, energy, area


def generate(spec: SpaceSpec = DEFAULT_SPEC, n: int = 180, seed: int = 0,
             noise: float = 0.0, accuracy_noise: float = 0.0,
             truth: GroundTruth = GroundTruth()) -> SyntheticTables:
    """Sample ``n`` architectures and attach synthetic measurements.

    ``noise`` is the relative standard deviation of multiplicative Gaussian
    noise on latency, energy and area; ``accuracy_noise`` is additive.
    """
    configs = sample_uniform(spec, seed, n)
    F, theta, lat, energy, area = exact_measurements(configs, spec, truth)
    rng = np.random.default_rng(seed + 1)
    if noise:
        lat = lat * (1 + noise * rng.standard_normal(n))
        energy = energy * (1 + noise * rng.standard_normal(n))
        area = area * (1 + noise * rng.standard_normal(n))
    if accuracy_noise:
        theta = np.clip(theta + accuracy_noise * rng.standard_normal(n), 1e-6, 1 - 1e-6)
    return SyntheticTables(configs, theta, lat, energy, area, F)
