"""Mapping onto the in-memory-computing accelerator and its cost models.

Each layer's weights occupy ``N_r x N_cols`` crossbars (imPEs); tiles hold
``c * p`` imPEs. Area is affine in the tile count, latency is linear in
architecture features, and energy is a linear per-tile model times the tile
count.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_X_y

from .exceptions import DataError, DomainError, FitError, ModelStateError, check_fitted
from .space import (DEFAULT_SPEC, ArchConfig, LayerDescriptor, SpaceSpec, feature_map_sizes,
                    realize_layers)
from .topology import skip_connections

FEATURE_NAMES = ("w_m", "d_c", "n_c", "n_c_d_c_w_m2", "sc", "comm", "flop", "fm", "n_tiles")
LATENCY_FEATURES = ("w_m", "d_c", "n_c", "n_c_d_c_w_m2", "sc", "comm")
ENERGY_FEATURES = ("w_m", "d_c", "n_c", "sc", "comm", "flop", "fm")
AREA_FEATURES = ("n_tiles", "one")


@dataclass(frozen=True)
class HwConfig:
    """Accelerator mapping constants. Areas are in mm²."""

    pe_x: int = 128
    pe_y: int = 128
    n_bits: int = 8
    ce_per_tile: int = 4
    impe_per_ce: int = 4
    kx: int = 3
    ky: int = 3
    h0: int = 32
    w0: int = 32
    c0: int = 3
    a_tile: float = 0.25
    a_router: float = 0.05
    a_rest: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise DomainError(f"HwConfig.{f.name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "HwConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown HwConfig keys: {sorted(unknown)}")
        return cls(**data)


DEFAULT_HW = HwConfig()


def tile_requirements(layer: LayerDescriptor, hw: HwConfig = DEFAULT_HW) -> tuple[int, int, int]:
    """Crossbar rows, crossbar columns and tiles needed by one layer."""
    n_r = -(-layer.kx * layer.ky * layer.n_if // hw.pe_x)
    n_cols = -(-layer.n_of * hw.n_bits // hw.pe_y)
    tiles = -(-n_r * n_cols // (hw.ce_per_tile * hw.impe_per_ce))
    return n_r, n_cols, tiles


@dataclass(frozen=True)
class TileCount:
    per_layer: tuple[tuple[int, int, int], ...]

    @property
    def n_t(self) -> int:
        return sum(t for _, _, t in self.per_layer)


def tile_count(config: ArchConfig, spec: SpaceSpec = DEFAULT_SPEC, hw: HwConfig = DEFAULT_HW) -> TileCount:
    return TileCount(tuple(tile_requirements(l, hw) for l in realize_layers(config, spec, hw)))


def total_tiles(config: ArchConfig, spec: SpaceSpec = DEFAULT_SPEC, hw: HwConfig = DEFAULT_HW) -> int:
    return _profile(config, spec, hw)["n_tiles"]


def area(config: ArchConfig, spec: SpaceSpec = DEFAULT_SPEC, hw: HwConfig = DEFAULT_HW) -> float:
    return total_tiles(config, spec, hw) * (hw.a_tile + hw.a_router) + hw.a_rest


@lru_cache(maxsize=65536)
def _profile(config: ArchConfig, spec: SpaceSpec, hw: HwConfig) -> dict:
    layers = realize_layers(config, spec, hw)
    sc = skip_connections(config, spec)
    n_t = 0
    flop = 0
    fm = 0
    comm = 0
    seen_cells = set()
    for layer in layers:
        n_t += tile_requirements(layer, hw)[2]
        flop += 2 * layer.kx * layer.ky * layer.n_if * layer.n_of * layer.h * layer.w
        if layer.cell not in seen_cells:
            seen_cells.add(layer.cell)
            hw_c = layer.h * layer.w
            comm += sc[layer.cell] * hw_c
            fm += config.d_c * layer.n_of * hw_c
    return {
        "w_m": config.w_m, "d_c": config.d_c, "n_c": config.n_c,
        "n_c_d_c_w_m2": config.n_c * config.d_c * config.w_m ** 2,
        "sc": sum(sc), "comm": comm, "flop": flop, "fm": fm, "n_tiles": n_t,
    }


def features(config: ArchConfig, spec: SpaceSpec = DEFAULT_SPEC, hw: HwConfig = DEFAULT_HW) -> dict:
    """Feature vectors of the latency and energy models plus the tile count."""
    p = _profile(config, spec, hw)
    return {
        "F_comp": [p[k] for k in LATENCY_FEATURES[:4]],
        "F_NoC": [p[k] for k in LATENCY_FEATURES[4:]],
        "F_E": [p[k] for k in ENERGY_FEATURES],
        "N_T": p["n_tiles"],
    }


def feature_matrix(configs: Sequence[ArchConfig], spec: SpaceSpec = DEFAULT_SPEC,
                   hw: HwConfig = DEFAULT_HW) -> np.ndarray:
    """Vectorized equivalent of stacking ``_profile`` rows in ``FEATURE_NAMES`` order."""
    out = np.zeros((len(configs), len(FEATURE_NAMES)), dtype=np.int64)
    by_nc: dict[int, list[int]] = {}
    for i, c in enumerate(configs):
        by_nc.setdefault(c.n_c, []).append(i)
    cp = hw.ce_per_tile * hw.impe_per_ce
    for n_c, rows in by_nc.items():
        rows = np.array(rows)
        sub = [configs[i] for i in rows]
        wm = np.array([c.w_m for c in sub], dtype=np.int64)
        d = np.array([c.d_c for c in sub], dtype=np.int64)
        t = np.array([c.t for c in sub], dtype=np.int64).reshape(len(sub), n_c)
        i = np.arange(int(d.max()) if len(sub) else 0, dtype=np.int64)[None, :]
        live = i < d[:, None]
        skip_ok = (i >= 2) & (i <= d[:, None] - 1)
        n_t = np.zeros(len(sub), dtype=np.int64)
        flop = np.zeros_like(n_t)
        sc = np.zeros_like(n_t)
        comm = np.zeros_like(n_t)
        fm = np.zeros_like(n_t)
        prev = np.full(len(sub), hw.c0, dtype=np.int64)
        for c, (h, w) in enumerate(feature_map_sizes(n_c, hw.h0, hw.w0)):
            w_c = spec.base_width(c) * wm
            concat = np.where(skip_ok, np.minimum((i - 1) * w_c[:, None], t[:, c:c + 1]), 0)
            n_if = np.where(i == 0, prev[:, None], w_c[:, None] + concat)
            n_r = -(-(hw.kx * hw.ky * n_if) // hw.pe_x)
            n_cols = -(-(w_c * hw.n_bits) // hw.pe_y)
            tiles = -(-(n_r * n_cols[:, None]) // cp)
            n_t += np.where(live, tiles, 0).sum(axis=1)
            flop += 2 * hw.kx * hw.ky * h * w * (np.where(live, n_if, 0).sum(axis=1) * w_c)
            sc_c = w_c * np.where(live, concat, 0).sum(axis=1)
            sc += sc_c
            comm += sc_c * h * w
            fm += d * w_c * h * w
            prev = w_c
        cols = {"w_m": wm, "d_c": d, "n_c": np.full(len(sub), n_c), "n_c_d_c_w_m2": n_c * d * wm ** 2,
                "sc": sc, "comm": comm, "flop": flop, "fm": fm, "n_tiles": n_t}
        for j, name in enumerate(FEATURE_NAMES):
            out[rows, j] = cols[name]
    return out.astype(float)


class HardwareFeatures(TransformerMixin, BaseEstimator):
    """Turn architectures into the feature matrix used by the cost models.

    Columns follow ``FEATURE_NAMES``; all values are exact integers stored as
    floats.
    """

    def __init__(self, spec: SpaceSpec = DEFAULT_SPEC, hw: HwConfig = DEFAULT_HW):
        self.spec = spec
        self.hw = hw

    def fit(self, X, y=None):
        self.n_features_out_ = len(FEATURE_NAMES)
        return self

    def transform(self, X):
        return feature_matrix(list(X), self.spec, self.hw)

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)


def _columns(F, names):
    if F.shape[1] != len(FEATURE_NAMES):
        raise DataError(f"expected {len(FEATURE_NAMES)} feature columns, got {F.shape[1]}")
    cols = []
    for n in names:
        cols.append(np.ones(F.shape[0]) if n == "one" else F[:, FEATURE_NAMES.index(n)])
    return np.column_stack(cols)


def fit_linear(X, y, names: Sequence[str] | None = None, rtol: float = 1e-10) -> np.ndarray:
    """Ordinary least squares with an explicit rank check.

    Columns are scaled to unit norm before solving. Raises :class:`FitError`
    naming the columns that pivoted QR finds linearly dependent.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(k)]
    if n < k:
        raise FitError(f"need at least {k} rows to fit {k} weights, got {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("non-finite values in regression data")
    scale = np.linalg.norm(X, axis=0)
    zero = [names[j] for j in range(k) if scale[j] == 0]
    if zero:
        raise FitError(f"rank-deficient features: all-zero column(s) {zero}")
    Xs = X / scale
    _, r, piv = scipy.linalg.qr(Xs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > rtol * diag[0]))
    if rank < k:
        dependent = [names[j] for j in piv[rank:]]
        raise FitError(f"rank-deficient features: {dependent} are linear combinations of the others")
    w, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    return w / scale


def _accumulate(D, w):
    # column-by-column sum keeps every row's result independent of batch size
    out = np.zeros(D.shape[0])
    for j in range(D.shape[1]):
        out = out + w[j] * D[:, j]
    return out


class _LinearCostModel(RegressorMixin, BaseEstimator):
    kind = ""
    feature_columns: tuple[str, ...] = ()

    def _design(self, X):
        X = check_array(X, dtype=float)
        return _columns(X, self.feature_columns)

    def _target(self, X, y):
        return y

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if np.any(y <= 0):
            raise DataError(f"{self.kind} measurements must be positive")
        self.weights_ = fit_linear(self._design(X), self._target(X, y), self.feature_columns)
        pred = self.predict(X)
        self.rmse_ = float(np.sqrt(np.mean((pred - y) ** 2)))
        self.n_samples_ = int(len(y))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_fitted(self, "weights_")
        return _accumulate(self._design(X), self.weights_)

    def to_dict(self) -> dict:
        check_fitted(self, "weights_")
        return {"kind": self.kind, "weights": [float(w) for w in self.weights_],
                "rmse": float(self.rmse_), "n_samples": int(self.n_samples_)}

    @classmethod
    def from_dict(cls, data: dict):
        if data.get("kind") != cls.kind:
            raise DataError(f"expected a {cls.kind} model, got kind={data.get('kind')!r}")
        weights = data.get("weights")
        if not isinstance(weights, list) or len(weights) != len(cls.feature_columns):
            raise DataError(f"{cls.kind} model needs {len(cls.feature_columns)} weights")
        est = cls()
        est.weights_ = np.array([float(w) for w in weights])
        est.rmse_ = float(data.get("rmse", 0.0))
        est.n_samples_ = int(data.get("n_samples", 0))
        est.n_features_in_ = len(FEATURE_NAMES)
        return est

    @classmethod
    def from_weights(cls, weights):
        return cls.from_dict({"kind": cls.kind, "weights": list(weights)})


class LatencyModel(_LinearCostModel):
    """``L = Λ_comp·F_comp + Λ_NoC·F_NoC`` in milliseconds."""

    kind = "latency"
    feature_columns = LATENCY_FEATURES


class EnergyModel(_LinearCostModel):
    """``E = (Λ_E·F_E)·N_T`` in millijoules; fitted on per-tile energy."""

    kind = "energy"
    feature_columns = ENERGY_FEATURES

    def _target(self, X, y):
        return y / _columns(X, ("n_tiles",))[:, 0]

    def predict(self, X):
        check_fitted(self, "weights_")
        X = check_array(X, dtype=float)
        return _accumulate(_columns(X, self.feature_columns), self.weights_) * _columns(X, ("n_tiles",))[:, 0]


class AreaModel(_LinearCostModel):
    """``A = N_T·(A_T + A_R) + A_rest``; weights are ``[A_T + A_R, A_rest]``."""

    kind = "area"
    feature_columns = AREA_FEATURES

    @classmethod
    def from_hw(cls, hw: HwConfig):
        return cls.from_weights([hw.a_tile + hw.a_router, hw.a_rest])


@dataclass
class CostModels:
    """Fitted hardware models bundled with the mapping they were fitted for."""

    latency: LatencyModel | None = None
    energy: EnergyModel | None = None
    area: AreaModel | None = None
    hw: HwConfig = DEFAULT_HW
    spec: SpaceSpec = DEFAULT_SPEC

    def _need(self, name):
        model = getattr(self, name)
        if model is None or not hasattr(model, "weights_"):
            raise ModelStateError(f"{name} model is not fitted")
        return model

    def area_model(self) -> "AreaModel":
        return self.area if self.area is not None else AreaModel.from_hw(self.hw)

    def metric_arrays(self, configs, need=("latency_ms", "energy_mj", "area_mm2")) -> dict:
        """Vectorized latency/energy/area predictions for ``configs``."""
        F = feature_matrix(configs, self.spec, self.hw)
        out = {}
        if "latency_ms" in need:
            out["latency_ms"] = self._need("latency").predict(F)
        if "energy_mj" in need:
            out["energy_mj"] = self._need("energy").predict(F)
        if "area_mm2" in need:
            out["area_mm2"] = self.area_model().predict(F)
        return out

    def latency_ms(self, config: ArchConfig) -> float:
        return float(self.metric_arrays([config], ("latency_ms",))["latency_ms"][0])

    def energy_mj(self, config: ArchConfig) -> float:
        return float(self.metric_arrays([config], ("energy_mj",))["energy_mj"][0])

    def area_mm2(self, config: ArchConfig) -> float:
        return float(self.metric_arrays([config], ("area_mm2",))["area_mm2"][0])


def predict_latency(models: CostModels, config: ArchConfig) -> float:
    return models.latency_ms(config)


def predict_energy(models: CostModels, config: ArchConfig) -> float:
    return models.energy_mj(config)
