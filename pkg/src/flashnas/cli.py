"""``flash`` command-line entry point.

JSON results go to stdout (or ``--out``); logs go to stderr. Exit codes:
0 success, 1 usage error, 2 infeasible search, 3 bad data or models.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .exceptions import DataError, DomainError, FitError, FlashError, InfeasibleError, ModelStateError
from .fixtures import FIXTURE_SPEC, generate
from .hardware import DEFAULT_HW, AreaModel, EnergyModel, LatencyModel, feature_matrix
from .predictor import AccuracyPredictor
from .search import (Constraints, Objective, brute_force_search, evaluate, hierarchical_search,
                     training_free_search)
from .space import DEFAULT_SPEC, ArchConfig, sample_uniform, search_space_size, validate
from .topology import degree_array, nn_degree

logger = logging.getLogger("flashnas")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_DATA = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj, out=None):
    text = io.dumps(obj)
    if out:
        Path(out).write_text(text)
        logger.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _spec(args):
    return io.load_spec(args.spec) if getattr(args, "spec", None) else DEFAULT_SPEC


def _arch(text: str) -> ArchConfig:
    """``--arch`` takes inline JSON or a path to a JSON file."""
    if not text.lstrip().startswith("{"):
        p = Path(text)
        if not p.exists():
            raise DataError(f"--arch: {text!r} is neither JSON nor an existing file")
        text = p.read_text()
    return ArchConfig.from_json(text)


def _checked_arch(text, spec):
    config = _arch(text)
    report = validate(config, spec)
    if not report.ok:
        raise DataError("invalid architecture: " + "; ".join(report.violations))
    return config


# -- subcommands --------------------------------------------------------------


def cmd_space_size(args):
    _emit({"size": search_space_size(_spec(args))}, args.out)


def cmd_space_sample(args):
    configs = sample_uniform(_spec(args), args.seed, args.n)
    _emit([c.to_dict() for c in configs], args.out)


def cmd_degree(args):
    spec = _spec(args)
    _emit(nn_degree(_checked_arch(args.arch, spec), spec).to_dict(), args.out)


def cmd_fit(args):
    spec = _spec(args)
    store = io.ModelStore(args.out)
    table = io.load_samples(args.samples, spec)
    if args.kind == "accuracy":
        est = AccuracyPredictor().fit(degree_array(table.configs, spec), table.column("accuracy"))
        model = est.model_
    else:
        hw = io.load_hw(args.hw) if args.hw else store.hw()
        existing = store.load("hw")
        if existing is not None and existing != hw:
            raise DataError(f"{store.path('hw')} holds a different hardware config; "
                            "use a fresh --out directory")
        F = feature_matrix(table.configs, spec, hw)
        cls = {"latency": LatencyModel, "energy": EnergyModel, "area": AreaModel}[args.kind]
        model = cls().fit(F, table.column({"latency": "latency_ms", "energy": "energy_mj",
                                           "area": "area_mm2"}[args.kind]))
        store.save("hw", hw)
    path = store.save(args.kind, model)
    logger.info("fitted %s model on %d samples -> %s", args.kind, len(table), path)
    _emit(model.to_dict())


def _objective(args, spec, mode):
    store = io.ModelStore(args.models)
    if not store.root.is_dir():
        raise DataError(f"model directory {store.root} does not exist")
    return Objective(mode, store.load("accuracy"), store.cost_models(spec), spec)


def cmd_predict(args):
    spec = _spec(args)
    config = _checked_arch(args.arch, spec)
    obj = _objective(args, spec, "nn_degree")
    costs = obj.costs
    out = {"theta": None, "area_mm2": None, "latency_ms": None, "energy_mj": None,
           "g": nn_degree(config, spec).g}
    need = ["area_mm2"]
    if costs.latency is not None:
        need.append("latency_ms")
    if costs.energy is not None:
        need.append("energy_mj")
    m = evaluate(config, obj).metrics
    for k in ("theta", *need):
        if k in m:
            out[k] = m[k]
    _emit(out, args.out)


def cmd_search(args):
    spec = _spec(args)
    cons = Constraints(args.theta_min, args.area_max, args.latency_max, args.energy_max)
    obj = _objective(args, spec, "nn_degree" if args.mode == "training-free" else args.objective)
    if args.mode == "shgo":
        result = hierarchical_search(spec, obj, cons, lam=args.lam)
    elif args.mode == "brute":
        result = brute_force_search(spec, obj, cons)
    else:
        result = training_free_search(spec, obj, cons, n=args.samples, seed=args.seed)
    logger.info("best %s after %d evaluations", result.best.key, result.evaluations)
    _emit(result.to_dict(), args.out)


def cmd_export(args):
    """Write a synthetic fixture set: samples.csv, spec.json and hw.json."""
    spec = io.load_spec(args.spec) if args.spec else FIXTURE_SPEC
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tab = generate(spec, n=args.n, seed=args.seed, noise=args.noise, accuracy_noise=args.accuracy_noise)
    io.write_samples(out / "samples.csv", tab.configs,
                     {"accuracy": tab.accuracy, "latency_ms": tab.latency_ms,
                      "energy_mj": tab.energy_mj, "area_mm2": tab.area_mm2})
    (out / "spec.json").write_text(io.dumps(spec.to_dict()))
    (out / "hw.json").write_text(io.dumps(DEFAULT_HW.to_dict()))
    _emit({"samples": str(out / "samples.csv"), "spec": str(out / "spec.json"),
           "hw": str(out / "hw.json"), "n": len(tab.configs)})


# -- parser -------------------------------------------------------------------


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flash", description="Training-free, hardware-aware architecture search.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, spec=True, out=True):
        if spec:
            sp.add_argument("--spec", help="SpaceSpec JSON file (default: built-in space)")
        if out:
            sp.add_argument("--out", help="write JSON here instead of stdout")

    space = sub.add_parser("space", help="search-space utilities")
    ssub = space.add_subparsers(dest="space_command", required=True, parser_class=_Parser)
    sp = ssub.add_parser("size", help="exact number of valid architectures")
    common(sp)
    sp.set_defaults(func=cmd_space_size)
    sp = ssub.add_parser("sample", help="uniform random architectures")
    common(sp)
    sp.add_argument("--n", type=_positive(int), default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_space_sample)

    sp = sub.add_parser("degree", help="NN-Degree of one architecture")
    common(sp)
    sp.add_argument("--arch", required=True, help="architecture JSON or a file holding it")
    sp.set_defaults(func=cmd_degree)

    sp = sub.add_parser("fit", help="fit one model from a sample CSV")
    sp.add_argument("kind", choices=("accuracy", "latency", "energy", "area"))
    sp.add_argument("--samples", required=True, help="CSV with w_m,n_c,d_c,t and measurement columns")
    sp.add_argument("--hw", help="HwConfig JSON file (default: built-in)")
    sp.add_argument("--spec", help="SpaceSpec JSON file (default: built-in space)")
    sp.add_argument("--out", required=True, help="model directory")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="predicted metrics of one architecture")
    common(sp)
    sp.add_argument("--arch", required=True, help="architecture JSON or a file holding it")
    sp.add_argument("--models", required=True, help="model directory")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("search", help="constrained architecture search")
    common(sp)
    sp.add_argument("--mode", choices=("shgo", "training-free", "brute"), default="shgo",
                    help="hierarchical lattice search, NN-Degree sampling or exhaustive scan")
    sp.add_argument("--objective", choices=("full", "device", "nn_degree"), default="full",
                    help="full: theta/(area*latency*energy); device drops area")
    sp.add_argument("--models", required=True, help="model directory")
    sp.add_argument("--theta-min", type=float, help="minimum predicted accuracy, a fraction")
    sp.add_argument("--area-max", type=_positive(float), help="mm^2")
    sp.add_argument("--latency-max", type=_positive(float), help="ms")
    sp.add_argument("--energy-max", type=_positive(float), help="mJ")
    sp.add_argument("--lambda", dest="lam", type=_positive(int), default=4, help="coarse lattice step")
    sp.add_argument("--samples", type=_positive(int), default=20000, help="training-free sample count")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("export", help="write a synthetic sample set with known ground truth")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--spec", help="SpaceSpec JSON file (default: small fixture space)")
    sp.add_argument("--n", type=_positive(int), default=180)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--noise", type=float, default=0.0, help="relative sigma on latency, energy and area")
    sp.add_argument("--accuracy-noise", type=float, default=0.0, help="absolute sigma on accuracy")
    sp.set_defaults(func=cmd_export)
    return p


def _setup_logging(verbose: int) -> None:
    # our own handler: stderr only, and rebound on every call so tests see the live stream
    for h in list(logger.handlers):
        if getattr(h, "_flash_cli", False):
            logger.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler._flash_cli = True
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.WARNING - 10 * min(verbose, 2))
    logger.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        args.func(args)
    except InfeasibleError as exc:
        logger.error("%s", exc)
        detail = {k: v for k, v in exc.detail.items() if isinstance(v, (int, float, str))}
        if exc.best is not None and isinstance(exc.best, ArchConfig):
            detail["best_infeasible"] = exc.best.to_dict()
        sys.stdout.write(io.dumps({"error": "infeasible", "message": str(exc), **detail}))
        return EXIT_INFEASIBLE
    except (DataError, FitError, ModelStateError) as exc:
        logger.error("%s", exc)
        sys.stdout.write(io.dumps({"error": "data", "message": str(exc)}))
        return EXIT_DATA
    except (DomainError, FlashError) as exc:
        logger.error("%s", exc)
        sys.stdout.write(io.dumps({"error": "usage", "message": str(exc)}))
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
