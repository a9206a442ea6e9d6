"""Constrained architecture search.

``shgo_minimize`` is a derivative-free integer-lattice minimizer in the spirit
of simplicial homology global optimization: sample a lattice, keep the
lattice-local minimizers, refine each by coordinate descent.
``hierarchical_search`` runs it in three levels (fixed width multiplier,
coarse step, fine step around the coarse optimum).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import islice, product
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import DomainError, InfeasibleError, ModelStateError, SpaceTooLargeError
from .hardware import CostModels
from .predictor import AccuracyModel
from .space import DEFAULT_SPEC, ArchConfig, SpaceSpec, iter_space, sample_uniform, search_space_size
from .topology import degree_array

logger = logging.getLogger(__name__)

MODES = ("full", "device", "nn_degree")
BRUTE_FORCE_LIMIT = 10 ** 7


@dataclass(frozen=True)
class Constraints:
    theta_min: Optional[float] = None
    area_max: Optional[float] = None
    latency_max: Optional[float] = None
    energy_max: Optional[float] = None

    def __post_init__(self):
        if self.theta_min is not None and not 0 < self.theta_min < 1:
            raise DomainError("theta_min must lie in (0, 1)")
        for name in ("area_max", "latency_max", "energy_max"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"{name} must be positive")

    @property
    def active(self) -> dict:
        return {k: v for k, v in (("theta", self.theta_min), ("area_mm2", self.area_max),
                                  ("latency_ms", self.latency_max), ("energy_mj", self.energy_max))
                if v is not None}

    def violation(self, metrics: dict):
        """Sum of relative overshoots; zero exactly when every bound holds.

        Works elementwise when the metric values are arrays.
        """
        total = 0.0
        for key, bound in self.active.items():
            v = np.asarray(metrics[key], dtype=float)
            over = (bound - v) if key == "theta" else (v - bound)
            total = total + np.where(over > 0, over / bound, 0.0)
        return total


@dataclass
class Objective:
    """What to maximize.

    ``full``      theta / (area * latency * energy)
    ``device``    theta / (latency * energy)
    ``nn_degree`` the NN-Degree itself
    """

    mode: str = "full"
    accuracy: Optional[AccuracyModel] = None
    costs: Optional[CostModels] = None
    spec: SpaceSpec = DEFAULT_SPEC

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"unknown objective mode {self.mode!r}; expected one of {MODES}")

    def required(self, constraints: Constraints) -> set[str]:
        need = set(constraints.active)
        if self.mode == "full":
            need |= {"theta", "area_mm2", "latency_ms", "energy_mj"}
        elif self.mode == "device":
            need |= {"theta", "latency_ms", "energy_mj"}
        return need

    def check(self, constraints: Constraints):
        need = self.required(constraints)
        if "theta" in need and self.accuracy is None:
            raise ModelStateError(f"mode {self.mode!r} needs an accuracy model")
        for key, attr in (("latency_ms", "latency"), ("energy_mj", "energy")):
            if key in need and (self.costs is None or getattr(self.costs, attr) is None):
                raise ModelStateError(f"mode {self.mode!r} needs a fitted {attr} model")
        if "area_mm2" in need and self.costs is None:
            raise ModelStateError(f"mode {self.mode!r} needs hardware models for area")

    def metric_arrays(self, configs: Sequence[ArchConfig], need: set[str]) -> dict:
        out = {"g": degree_array(configs, self.spec)}
        if self.accuracy is not None:
            a = self.accuracy
            out["theta"] = 1.0 / (a.a + np.exp(a.b / out["g"] + a.c))
        if self.costs is not None:
            hw_need = [k for k in ("latency_ms", "energy_mj", "area_mm2")
                       if k in need or (k == "latency_ms" and self.costs.latency is not None)
                       or (k == "energy_mj" and self.costs.energy is not None)
                       or (k == "area_mm2" and self.costs.area is not None)]
            out.update(self.costs.metric_arrays(configs, hw_need))
        return out

    def values(self, m: dict) -> np.ndarray:
        if self.mode == "nn_degree":
            return m["g"]
        denom = m["latency_ms"] * m["energy_mj"]
        if self.mode == "full":
            denom = denom * m["area_mm2"]
        return m["theta"] / denom


@dataclass(frozen=True)
class Evaluation:
    value: float
    feasible: bool
    violation: float
    metrics: dict

    def sort_key(self):
        """Feasibility-first: smaller is better."""
        return (0, -self.value) if self.feasible else (1, self.violation)


def evaluate_many(configs: Sequence[ArchConfig], objective: Objective,
                  constraints: Constraints = Constraints()) -> list[Evaluation]:
    """Vectorized :func:`evaluate`; each result is independent of the batch it came in."""
    objective.check(constraints)
    if not configs:
        return []
    m = objective.metric_arrays(configs, objective.required(constraints))
    viol = constraints.violation(m)
    viol = np.broadcast_to(np.asarray(viol, dtype=float), (len(configs),))
    vals = objective.values(m)
    keys = list(m)
    return [Evaluation(float(vals[i]), bool(viol[i] == 0), float(viol[i]),
                       {k: float(m[k][i]) for k in keys})
            for i in range(len(configs))]


def evaluate(config: ArchConfig, objective: Objective, constraints: Constraints = Constraints()) -> Evaluation:
    return evaluate_many([config], objective, constraints)[0]


@dataclass
class SearchResult:
    best: ArchConfig
    value: float
    metrics: dict
    evaluations: int
    feasible: bool
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"best": self.best.to_dict(), "value": self.value,
                "metrics": {k: self.metrics.get(k) for k in ("theta", "area_mm2", "latency_ms",
                                                              "energy_mj", "g")},
                "evaluations": self.evaluations, "feasible": self.feasible, "trace": self.trace}


# -- generic lattice minimizer ------------------------------------------------


@dataclass
class ShgoResult:
    point: tuple[int, ...]
    value: float
    evaluations: int
    feasible: bool
    violation: float
    minimizers: list[tuple[int, ...]]
    steps: tuple[int, ...]
    local_minima: list[tuple[int, ...]] = field(default_factory=list)  # refined, best first


def _axis(lo, hi, s):
    vals = list(range(lo, hi + 1, s))
    if vals[-1] != hi:
        vals.append(hi)
    return vals


def _coarsen(bounds, step, max_points):
    steps = [step] * len(bounds)
    if max_points is None:
        return steps

    def size():
        return math.prod(len(_axis(lo, hi, s)) for (lo, hi), s in zip(bounds, steps))

    while size() > max_points:
        counts = [len(_axis(lo, hi, s)) for (lo, hi), s in zip(bounds, steps)]
        j = int(np.argmax(counts))
        if counts[j] <= 2:
            break
        steps[j] *= 2
    return steps


class _Memo:
    """Evaluation cache; a ``None`` key marks points outside the function's domain."""

    def __init__(self, f, constraints, cache=None, vectorized=False):
        self.f = f
        self.constraints = list(constraints or [])
        self.cache = {} if cache is None else cache
        self.vectorized = vectorized
        self.calls = 0

    def _key(self, p, val):
        if val is None:
            return None
        self.calls += 1
        if isinstance(val, tuple):  # (rank, score) supplied by the caller
            return val
        viol = sum(max(0.0, -c(p)) for c in self.constraints)
        return (0, float(val)) if viol == 0 else (1, viol)

    def many(self, points):
        todo = list(dict.fromkeys(p for p in points if p not in self.cache))
        if todo:
            vals = self.f(todo) if self.vectorized else [self.f(p) for p in todo]
            for p, v in zip(todo, vals):
                self.cache[p] = self._key(p, v)
        return [_rank(self.cache[p], p) for p in points]


def _rank(key, p):
    return (3, 0.0, p) if key is None else (key[0], key[1], p)


def shgo_minimize(f: Callable, bounds: Sequence[tuple[int, int]], step: int = 1,
                  constraints: Sequence[Callable] = (), max_points: Optional[int] = None,
                  cache: Optional[dict] = None, vectorized: bool = False,
                  directions: Sequence[Sequence[int]] = (),
                  refine_bounds: Optional[Sequence[tuple[int, int]]] = None) -> ShgoResult:
    """Minimize ``f`` over the integer box ``bounds``.

    ``f(point)`` returns a float, ``None`` for points outside its domain, or a
    ready-made ``(rank, score)`` key where rank 0 means feasible; with
    ``vectorized=True`` it maps a list of points to a list of such results.
    Constraints are callables that must be ``>= 0``. Points compare
    feasibility-first, ties broken lexicographically. With ``max_points`` the
    lattice step grows per axis until the lattice fits, and refinement walks
    the step back down to ``step``.
    """
    bounds = [(int(lo), int(hi)) for lo, hi in bounds]
    if step < 1:
        raise DomainError("step must be >= 1")
    if not bounds or any(lo > hi for lo, hi in bounds):
        raise DomainError("empty search box")
    outer = bounds if refine_bounds is None else [(int(lo), int(hi)) for lo, hi in refine_bounds]
    if any(not (olo <= lo and hi <= ohi) for (lo, hi), (olo, ohi) in zip(bounds, outer)):
        raise DomainError("refine_bounds must contain the search box")
    memo = _Memo(f, constraints, cache, vectorized)
    steps = _coarsen(bounds, step, max_points)
    axes = [_axis(lo, hi, s) for (lo, hi), s in zip(bounds, steps)]
    shape = tuple(len(a) for a in axes)

    points = list(product(*axes))
    ranked = memo.many(points)
    keys = dict(zip(product(*(range(n) for n in shape)), ranked))

    minimizers = []
    for idx, k in keys.items():
        if k[0] == 3:
            continue
        local = True
        for d in range(len(shape)):
            for j in (idx[d] - 1, idx[d] + 1):
                if 0 <= j < shape[d] and keys[idx[:d] + (j,) + idx[d + 1:]] < k:
                    local = False
                    break
            if not local:
                break
        if local:
            minimizers.append(k)
    minimizers.sort()

    refined = sorted(set(_descend(memo, outer, k, steps, step, directions) for k in minimizers))
    best = refined[0] if refined else None
    if best is None:
        raise InfeasibleError("no point of the box lies in the function's domain")
    rank, score, point = best
    if rank != 0:
        raise InfeasibleError("no feasible lattice point", best=point,
                              detail={"violation": score, "evaluations": memo.calls})
    return ShgoResult(point, score, memo.calls, True, 0.0, [k[2] for k in minimizers], tuple(steps),
                      [k[2] for k in refined if k[0] == 0])


def _descend(memo, bounds, start_key, steps, final_step, extra=()):
    """Best-improvement descent along the axes and ``extra`` directions.

    Each direction keeps its own step, halved down to ``final_step`` once no
    move improves; an extra direction starts at the step of its first axis.
    """
    n = len(bounds)
    dirs = [tuple(int(i == d) for i in range(n)) for d in range(n)]
    dir_steps = list(steps)
    for v in extra:
        v = tuple(int(x) for x in v)
        if len(v) != n or not any(v):
            raise DomainError(f"bad search direction {v}")
        dirs.append(v)
        dir_steps.append(steps[next(i for i, x in enumerate(v) if x)])
    dirs = np.array(dirs, dtype=np.int64)
    lo, hi = np.array(bounds, dtype=np.int64).T
    cur = start_key
    moves = None
    while True:
        if moves is None:
            scaled = dirs * np.array(dir_steps, dtype=np.int64)[:, None]
            moves = np.concatenate([-scaled, scaled])
        q = np.asarray(cur[2], dtype=np.int64) + moves
        q = q[np.all((q >= lo) & (q <= hi), axis=1)]
        best = min(memo.many(list(map(tuple, q.tolist()))), default=cur)
        if best < cur:
            cur = best
        elif all(s == final_step for s in dir_steps):
            return cur
        else:
            dir_steps = [max(final_step, s // 2) for s in dir_steps]
            moves = None


# -- architecture search ------------------------------------------------------


class _ArchProblem:
    """Decision vector for fixed ``w_m`` and ``d_c``: ``[n_c?] + [t_1, slack_2, ...]``.

    Slack ``s_k = t_k - coupling * t_{k-1}`` makes every point satisfy the
    coupling rule, so only the per-cell ceilings can reject a point.
    """

    def __init__(self, spec, w_m, d_c, objective, constraints, evaluations):
        self.spec = spec
        self.w_m = w_m
        self.d_c = d_c
        self.objective = objective
        self.constraints = constraints
        self.evals = evaluations  # shared {config: Evaluation}
        self.vary_nc = len(spec.n_c_range) > 1
        self.n_max = spec.n_c_range[-1]
        self._ceil = spec.ceilings(w_m, self.n_max, d_c)

    def bounds(self):
        s = self.spec
        b = [(s.n_c_range[0], s.n_c_range[-1])] if self.vary_nc else []
        ceil = s.ceilings(self.w_m, self.n_max, self.d_c)
        t_min = max(s.t1_min, 0)
        for c in range(self.n_max):
            if c == 0:
                b.append((t_min, max(t_min, ceil[0])))
            else:
                b.append((0, max(0, ceil[c] - s.coupling * t_min)))
                t_min *= s.coupling
        return b

    def directions(self):
        """Extra descent moves: every ``{-1, 0, 1}`` step in ``t`` space,
        written in slack coordinates, that is not already a slack axis."""
        off = int(self.vary_nc)
        k2 = self.spec.coupling
        out = []
        for dt in product((-1, 0, 1), repeat=self.n_max):
            v = [dt[0]] + [dt[k] - k2 * dt[k - 1] for k in range(1, self.n_max)]
            first = next((x for x in v if x), 0)
            if first > 0 and sum(x != 0 for x in v) > 1:  # descent tries both signs
                out.append([0] * off + v)
        return out

    def _unpack(self, p):
        n_c = p[0] if self.vary_nc else self.n_max
        slack = p[1:] if self.vary_nc else p
        t = [slack[0]]
        for c in range(1, n_c):
            t.append(self.spec.coupling * t[-1] + slack[c])
        over = sum(max(0, tc - cc) for tc, cc in zip(t, self._ceil))
        return n_c, tuple(t), over

    def decode(self, p) -> tuple[ArchConfig, int]:
        n_c, t, over = self._unpack(p)
        return ArchConfig(self.w_m, n_c, self.d_c, t), over

    def __call__(self, points):
        configs = []
        for p in points:
            n_c, t, over = self._unpack(p)
            configs.append(None if over else ArchConfig(self.w_m, n_c, self.d_c, t))
        fresh = list(dict.fromkeys(c for c in configs if c is not None and c not in self.evals))
        for c, ev in zip(fresh, evaluate_many(fresh, self.objective, self.constraints)):
            self.evals[c] = ev
        # unused slacks alias one config when n_c varies; the lexicographic point tie-break is harmless
        return [None if c is None else self.evals[c].sort_key() for c in configs]


def _better(a: tuple[ArchConfig, Evaluation], b: tuple[ArchConfig, Evaluation]) -> bool:
    return (a[1].sort_key(), a[0].key) < (b[1].sort_key(), b[0].key)


def _result(config, ev, evaluations, trace) -> SearchResult:
    return SearchResult(config, ev.value, dict(ev.metrics), evaluations, ev.feasible, trace)


def hierarchical_search(spec: SpaceSpec, objective: Objective, constraints: Constraints = Constraints(),
                        lam: int = 4, max_points: Optional[int] = 20000, starts: int = 3) -> SearchResult:
    """Three-level search: enumerate ``w_m`` and ``d_c``, coarse lattice over
    the ``t`` coordinates at step ``lam``, then step-1 search within
    ``±2·step`` of each of the ``starts`` best coarse local minima.

    ``max_points`` caps the lattice size of each level; ``None`` disables the
    cap and makes every level an exact lattice scan.
    """
    if lam < 1:
        raise DomainError("lambda must be >= 1")
    if starts < 1:
        raise DomainError("starts must be >= 1")
    objective.check(constraints)
    evals: dict[ArchConfig, Evaluation] = {}
    trace = []
    cas = []
    for w_m, d_c in product(spec.w_m_range, spec.d_c_range):
        problem = _ArchProblem(spec, w_m, d_c, objective, constraints, evals)
        bounds = problem.bounds()
        cache: dict = {}
        try:
            coarse = shgo_minimize(problem, bounds, lam, max_points=max_points, cache=cache,
                                   vectorized=True, directions=problem.directions(),
                                   refine_bounds=bounds)
            centres, steps = coarse.local_minima[:starts], coarse.steps
        except InfeasibleError as exc:
            if exc.best is None:
                continue
            centres = [exc.best]
            steps = tuple(_coarsen(bounds, lam, max_points))
        config, _ = problem.decode(centres[0])
        trace.append({"w_m": w_m, "d_c": d_c, "level": "coarse", "best": config.to_dict(),
                      "value": evals[config].value, "feasible": evals[config].feasible})
        found = []
        for centre in centres:
            local = [(max(lo, c - 2 * s), min(hi, c + 2 * s))
                     for (lo, hi), c, s in zip(bounds, centre, steps)]
            try:
                fine = shgo_minimize(problem, local, 1, max_points=max_points, cache=cache,
                                     vectorized=True, directions=problem.directions(),
                                     refine_bounds=bounds)
            except InfeasibleError:
                continue
            config, _ = problem.decode(fine.point)
            found.append((config, evals[config]))
        if not found:
            logger.debug("w_m=%d d_c=%d: no feasible point near the coarse optima", w_m, d_c)
            continue
        best = found[0]
        for cand in found[1:]:
            if _better(cand, best):
                best = cand
        trace.append({"w_m": w_m, "d_c": d_c, "level": "fine", "best": best[0].to_dict(),
                      "value": best[1].value, "feasible": best[1].feasible})
        cas.append(best)
    n_evals = len(evals)
    if not cas:
        raise InfeasibleError("no feasible architecture for any w_m", detail={"evaluations": n_evals})
    best = cas[0]
    for cand in cas[1:]:
        if _better(cand, best):
            best = cand
    return _result(best[0], best[1], n_evals, trace)


def brute_force_search(spec: SpaceSpec, objective: Objective, constraints: Constraints = Constraints(),
                       limit: int = BRUTE_FORCE_LIMIT, chunk: int = 50000) -> SearchResult:
    """Evaluate every valid configuration; exact optimum."""
    size = search_space_size(spec)
    if size > limit:
        raise SpaceTooLargeError(size, limit)
    objective.check(constraints)
    need = objective.required(constraints)
    best = least_bad = None  # (sort key, config)
    n = 0
    it = iter_space(spec)
    while True:
        block = list(islice(it, chunk))
        if not block:
            break
        n += len(block)
        m = objective.metric_arrays(block, need)
        viol = np.broadcast_to(np.asarray(constraints.violation(m), dtype=float), (len(block),))
        vals = objective.values(m)
        ok = viol == 0
        # iter_space yields in lexicographic order, so the first extremum is the tie-break winner
        if ok.any():
            i = int(np.flatnonzero(ok)[np.argmax(vals[ok])])
            cand = ((0, -float(vals[i])), block[i])
            if best is None or cand < best:
                best = cand
        else:
            i = int(np.argmin(viol))
            cand = ((1, float(viol[i])), block[i])
            if least_bad is None or cand < least_bad:
                least_bad = cand
    if best is None:
        raise InfeasibleError("no feasible architecture in the space",
                              best=least_bad[1] if least_bad else None, detail={"evaluations": n})
    config = best[1]
    return _result(config, evaluate(config, objective, constraints), n, [])


def training_free_search(spec: SpaceSpec, objective: Objective, constraints: Constraints = Constraints(),
                         n: int = 20000, seed: int = 0) -> SearchResult:
    """Maximize NN-Degree over ``n`` uniform samples that meet the hardware bounds.

    ``objective`` only supplies the hardware models; the score is always the
    NN-Degree, and a ``theta_min`` bound is ignored. Ties go to the
    lexicographically smallest configuration.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    hw_only = Constraints(area_max=constraints.area_max, latency_max=constraints.latency_max,
                          energy_max=constraints.energy_max)
    scorer = Objective("nn_degree", objective.accuracy, objective.costs, spec)
    samples = sample_uniform(spec, seed, n)
    evs = evaluate_many(samples, scorer, hw_only)
    feasible = [i for i, ev in enumerate(evs) if ev.feasible]
    trace = [{"samples": n, "feasible": len(feasible), "feasibility_rate": len(feasible) / n}]
    if not feasible:
        raise InfeasibleError("no sampled architecture meets the hardware constraints",
                              detail={"feasibility_rate": 0.0, "samples": n})
    i = min(feasible, key=lambda i: (-evs[i].value, samples[i].key))
    return SearchResult(samples[i], evs[i].value, dict(evs[i].metrics), n, True, trace)
