"""CSV sample ingestion and the on-disk model store."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .hardware import DEFAULT_HW, AreaModel, CostModels, EnergyModel, HwConfig, LatencyModel
from .predictor import AccuracyModel
from .space import DEFAULT_SPEC, ArchConfig, SpaceSpec, validate

SCHEMA_VERSION = 1
MEASURES = ("accuracy", "latency_ms", "energy_mj", "area_mm2")
ARCH_COLUMNS = ("w_m", "n_c", "d_c", "t")


@dataclass
class SampleTable:
    configs: list[ArchConfig]
    measures: dict[str, np.ndarray]
    path: str = ""
    lines: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.configs)

    def column(self, name: str) -> np.ndarray:
        if name not in self.measures:
            raise DataError(f"{self.path or 'sample table'} has no {name!r} column")
        return self.measures[name]


def _measure(name: str, raw: str, where: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise DataError(f"{where}: {name}={raw!r} is not a number") from None
    if not math.isfinite(v) or v <= 0:
        raise DataError(f"{where}: {name} must be finite and positive, got {raw!r}")
    if name == "accuracy":
        if v > 1:  # percentage
            v /= 100.0
        if not v < 1:
            raise DataError(f"{where}: accuracy {raw!r} is not below 100%")
    return v


def load_samples(path, spec: SpaceSpec = DEFAULT_SPEC) -> SampleTable:
    """Read a ``w_m,n_c,d_c,t,<measure>...`` CSV and validate every row.

    Accuracy values above 1 are read as percentages.
    """
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in ARCH_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: header lacks columns {missing}")
        extra = [c for c in header if c not in ARCH_COLUMNS and c not in MEASURES]
        if extra:
            raise DataError(f"{path}: unknown columns {extra}; expected some of {list(MEASURES)}")
        present = [m for m in MEASURES if m in header]
        configs, lines = [], []
        values = {m: [] for m in present}
        try:
            for row in reader:
                where = f"{path}: row {len(configs) + 1} (line {reader.line_num})"
                if None in row or any(row[c] is None for c in header):
                    raise DataError(f"{where}: expected {len(header)} fields")
                try:
                    config = ArchConfig.from_record(row)
                except (DataError, ValueError) as exc:
                    raise DataError(f"{where}: {exc}") from None
                report = validate(config, spec)
                if not report.ok:
                    raise DataError(f"{where}: invalid architecture: " + "; ".join(report.violations))
                for m in present:
                    values[m].append(_measure(m, row[m], where))
                configs.append(config)
                lines.append(reader.line_num)
        except csv.Error as exc:
            raise DataError(f"{path}: malformed CSV: {exc}") from exc
    if not configs:
        raise DataError(f"{path}: no sample rows")
    return SampleTable(configs, {m: np.array(v) for m, v in values.items()}, str(path), lines)


def write_samples(path, configs, measures: dict) -> None:
    """Inverse of :func:`load_samples`."""
    names = [m for m in MEASURES if m in measures]
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([*ARCH_COLUMNS, *names])
        for i, c in enumerate(configs):
            rec = c.to_record()
            writer.writerow([*(rec[k] for k in ARCH_COLUMNS), *(repr(float(measures[m][i])) for m in names)])


# -- JSON ---------------------------------------------------------------------


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def read_json(path, what: str = "file") -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {what} {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{what} {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise DataError(f"{what} {path} must hold a JSON object")
    return data


def load_spec(path) -> SpaceSpec:
    return SpaceSpec.from_dict(read_json(path, "spec"))


def load_hw(path) -> HwConfig:
    data = read_json(path, "hardware config")
    data.pop("schema_version", None)
    try:
        return HwConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise DataError(f"malformed hardware config {path}: {exc}") from exc


class ModelStore:
    """A directory holding one JSON file per fitted model plus ``hw.json``."""

    FILES = {"accuracy": AccuracyModel, "latency": LatencyModel, "energy": EnergyModel, "area": AreaModel}

    def __init__(self, root):
        self.root = Path(root)

    def path(self, kind: str) -> Path:
        return self.root / f"{kind}.json"

    def save(self, kind: str, model) -> Path:
        if kind != "hw" and kind not in self.FILES:
            raise DataError(f"unknown model kind {kind!r}")
        self.root.mkdir(parents=True, exist_ok=True)
        data = {"schema_version": SCHEMA_VERSION, **model.to_dict()}
        p = self.path(kind)
        p.write_text(dumps(data))
        return p

    def _read(self, kind: str):
        p = self.path(kind)
        if not p.exists():
            return None
        data = read_json(p, f"{kind} model")
        version = data.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise DataError(f"{p}: schema_version {version!r} is not supported "
                            f"(expected {SCHEMA_VERSION})")
        return data

    def load(self, kind: str):
        data = self._read(kind)
        if data is None:
            return None
        if kind == "hw":
            try:
                return HwConfig.from_dict(data)
            except (TypeError, ValueError) as exc:
                raise DataError(f"{self.path(kind)}: {exc}") from exc
        return self.FILES[kind].from_dict(data)

    def hw(self) -> HwConfig:
        return self.load("hw") or DEFAULT_HW

    def cost_models(self, spec: SpaceSpec = DEFAULT_SPEC) -> CostModels:
        return CostModels(self.load("latency"), self.load("energy"), self.load("area"), self.hw(), spec)
