"""Command-line entry point: ``tocsynth <command> [options]``.

Every command writes a JSON manifest holding its effective settings,
library versions and timings.  A manifest can be passed back through
``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import math
import json
import logging
import os
import platform
import re
import sys
import time
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _backend
from .errors import SolverStalledError

log = logging.getLogger("tocsynth")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def substream(seed: int, name: str) -> int:
    """Seed for the named stream derived from the root ``seed``."""
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(1)[0])


def parse_floats(text: str) -> list:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def parse_ints(text: str) -> list:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def on_off(text: str):
    t = str(text).lower()
    if t in ("on", "true", "1", "yes"):
        return True
    if t in ("off", "false", "0", "no"):
        return False
    if t == "auto":
        return None
    raise argparse.ArgumentTypeError(f"expected on/off/auto, got {text!r}")


def read_config(path) -> dict:
    """Flat ``key=value`` file, or the ``config`` block of a run manifest."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        return {k: v for k, v in json.loads(text).get("config", {}).items() if v is not None}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file or a previous run manifest")
    p.add_argument("--seed", type=int, default=0, help="root seed")
    p.add_argument("--outdir", help="directory for the run manifest")
    p.add_argument("--threads", type=int, default=1, help="cap on worker processes")
    p.add_argument("--log-level", default="WARNING")


def _state_args(p, need_u0=False):
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--x", required=True, help='comma-separated state, e.g. "-1,0"')
    p.add_argument("--b", help="input vector (default e_n)")
    if need_u0:
        p.add_argument("--u0", type=int, choices=(-1, 1), default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tocsynth", description="Time-optimal control synthesis for integrator chains.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("dump-system", help="print the switching-time polynomial system")
    _state_args(p, need_u0=True)
    p.add_argument("--out")
    _common(p)

    p = sub.add_parser("solve", help="time-optimal switching sequence from a state")
    _state_args(p)
    p.add_argument("--hermite", type=on_off, default=None, help="on, off or auto")
    p.add_argument("--u0", type=int, choices=(-1, 1), help="list the roots for this initial sign instead")
    p.add_argument("--n-roots", type=int, help="roots to request with --u0 (default: Hermite count)")
    p.add_argument("--p", type=int, default=2, help="deflation power")
    p.add_argument("--xi", type=float, default=1.0, help="deflation shift")
    p.add_argument("--solver-seed", type=int, help="restart seed (default: derived from --seed)")
    p.add_argument("--out")
    _common(p)

    p = sub.add_parser("count-roots", help="Hermite real-root count for one initial sign")
    _state_args(p, need_u0=True)
    p.add_argument("--out")
    _common(p)

    p = sub.add_parser("trajectory", help="exact optimal trajectory samples as CSV")
    _state_args(p)
    p.add_argument("--k", "--samples", dest="k", type=int, default=100)
    p.add_argument("--out")
    _common(p)

    p = sub.add_parser("gen-data", help="generate a JSONL training set")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ns", type=int, required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--bounds", type=parse_floats, default=[-1.0, 1.0])
    p.add_argument("--hermite", type=on_off, default=None)
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("train", help="train the feedback classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--layers", type=parse_ints, help='e.g. "2,100,1" (default n,100,1)')
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-final", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("eval", help="metrics of a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    _common(p)

    for name, help_text in (("simulate", "one closed-loop run"), ("montecarlo", "noisy Monte Carlo study")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--x", required=True)
        p.add_argument("--model")
        p.add_argument("--dt", type=float)
        p.add_argument("--eps", type=float, default=0.01, help="confidence threshold for the solver fallback")
        p.add_argument("--stop-radius", type=float, default=1e-2)
        p.add_argument("--max-time", type=float, default=10.0)
        p.add_argument("--noise-sigma", type=float, default=0.0)
        p.add_argument("--noise-variance", type=on_off, default=False, help="read --noise-sigma as a variance")
        p.add_argument("--noise-scaling", choices=("direct", "dt", "sqrt_dt"), default="sqrt_dt")
        p.add_argument("--b")
        if name == "simulate":
            p.add_argument("--mode", choices=("net", "net-fallback", "oracle"), default="net-fallback")
        else:
            p.add_argument("--mode", choices=("open", "net", "net-fallback"), default="net-fallback")
            p.add_argument("--m", type=int, default=1000)
        p.add_argument("--out")
        _common(p)
    return parser


_NEG_VALUE = re.compile(r"^-[\d.]")


def _join_negative_values(argv: list) -> list:
    """``--x -1,0`` would read as an option; rewrite it as ``--x=-1,0``."""
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--") and "=" not in tok and i + 1 < len(argv) and _NEG_VALUE.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def _state(args, n=None) -> np.ndarray:
    x = np.array(parse_floats(args.x))
    n = n if n is not None else getattr(args, "n", None)
    if n is not None and x.size != n:
        raise UsageError(f"--x has {x.size} entries but --n is {n}")
    return x


def _b(args):
    return None if not getattr(args, "b", None) else tuple(parse_floats(args.b))


def _write_json(obj, path) -> None:
    if path:
        Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _emit(obj, args) -> dict:
    print(json.dumps(obj))
    _write_json(obj, getattr(args, "out", None))
    return obj


# -- commands ------------------------------------------------------------

def cmd_dump_system(args, seeds):
    from .poly import Q
    from .sysgen import ProblemSpec, build_system

    x = tuple(Q(v) for v in args.x.replace(" ", "").split(","))
    b = None if not args.b else tuple(Q(v) for v in args.b.split(","))
    sys_ = build_system(ProblemSpec(args.n, x, args.u0, b))
    return _emit({
        "n": args.n,
        "u0": args.u0,
        "equations": [e.render() for e in sys_.equations],
        "jacobian": [[e.render() for e in row] for row in sys_.jacobian],
    }, args)


def _solve_roots(args, x, solver):
    from .hermite import count_real_roots
    from .newton import deflated_solve, is_admissible
    from .poly import Q
    from .sysgen import ProblemSpec, system_factory

    b = _b(args)
    n_roots = args.n_roots
    if n_roots is None:
        use_hermite = args.hermite if args.hermite is not None else x.size <= 4
        n_roots = count_real_roots(ProblemSpec(x.size, tuple(Q(float(v)) for v in x), args.u0, b)) if use_hermite else math.factorial(x.size)
    cs = system_factory(x.size, b).instantiate(x, args.u0)
    res = deflated_solve(cs, replace(solver, n_roots=n_roots))
    return _emit({
        "u0": args.u0,
        "n_roots_requested": n_roots,
        "status": res.status.value,
        "iterations": res.iterations,
        "roots": [
            {"t": [float(v) for v in r], "admissible": is_admissible(r), "residual": float(np.max(np.abs(cs.residual(r))))}
            for r in res.roots
        ],
    }, args)


def cmd_solve(args, seeds):
    from .newton import SolveOptions
    from .openloop import OpenLoopOptions, solve_time_optimal, propagate_exact

    x = _state(args)
    seed = args.solver_seed if args.solver_seed is not None else seeds["solve"]
    solver = SolveOptions.for_dimension(x.size, p=args.p, xi=args.xi, seed=seed)
    if args.u0 is not None:
        return _solve_roots(args, x, solver)
    sol = solve_time_optimal(x, OpenLoopOptions(hermite=args.hermite, solver=solver, b=_b(args)))
    out = sol.to_dict()
    out["final_state_error"] = float(np.max(np.abs(propagate_exact(x, sol, sol.T, _b(args))))) if sol.T else 0.0
    return _emit(out, args)


def cmd_count_roots(args, seeds):
    from .hermite import hermite_report
    from .poly import Q
    from .sysgen import ProblemSpec

    x = tuple(Q(v) for v in args.x.replace(" ", "").split(","))
    if len(x) != args.n:
        raise UsageError(f"--x has {len(x)} entries but --n is {args.n}")
    b = None if not args.b else tuple(Q(v) for v in args.b.split(","))
    rep = hermite_report(ProblemSpec(args.n, x, args.u0, b))
    return _emit({
        "n": args.n,
        "u0": args.u0,
        "signature": rep.signature,
        "rank": rep.rank,
        "quotient_dim": rep.quotient_dim,
        "hermite_matrix": [[str(v) for v in row] for row in rep.H],
    }, args)


def cmd_trajectory(args, seeds):
    from .openloop import OpenLoopOptions, sample_trajectory, solve_time_optimal

    x = _state(args)
    b = _b(args)
    sol = solve_time_optimal(x, OpenLoopOptions(b=b))
    rows = [(0.0, x, sol.u0)]
    if sol.T > 0:
        taus, states, controls = sample_trajectory(x, sol, args.k, b)
        rows += list(zip(taus, states, controls))
    lines = ["tau," + ",".join(f"y{i + 1}" for i in range(x.size)) + ",u"]
    lines += [",".join([repr(float(t))] + [repr(float(v)) for v in y] + [str(int(u))]) for t, y, u in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return {"solution": sol.to_dict(), "points": len(rows)}


def cmd_gen_data(args, seeds):
    from .dataset import DatasetMeta, build_dataset

    bounds = tuple(args.bounds)
    if len(bounds) != 2:
        raise UsageError("--bounds takes lo,hi")
    meta = DatasetMeta(n=args.n, N_s=args.ns, K=args.k, seed=seeds["data"], bounds=bounds, hermite=args.hermite)
    ds = build_dataset(meta, args.out, workers=max(1, args.threads))
    result = {"samples": len(ds), "skipped_count": meta.skipped_count, "out": args.out}
    print(json.dumps(result))
    return result


def cmd_train(args, seeds):
    from .dataset import read_dataset
    from .nn import TrainConfig, save_model, train

    ds = read_dataset(args.data)
    Z, U = ds.arrays()
    layers = args.layers or [ds.meta.n, 100, 1]
    if layers[0] != ds.meta.n:
        raise UsageError(f"first layer width {layers[0]} does not match state dimension {ds.meta.n}")
    kw = {"seed": seeds["train"]}
    for flag, key in (("lr", "learning_rate"), ("lr_final", "lr_final"), ("epochs", "epochs"), ("batch", "batch_size")):
        if getattr(args, flag) is not None:
            kw[key] = getattr(args, flag)
    res = train(Z, U, layers, TrainConfig(**kw))
    save_model(res.model, args.out)
    result = {"train": res.train.to_dict(), "test": res.test.to_dict(), "layers": list(layers), "out": args.out,
              "history": res.history}
    print(json.dumps({k: v for k, v in result.items() if k != "history"}))
    return result


def cmd_eval(args, seeds):
    from .dataset import read_dataset
    from .nn import evaluate, load_model

    model = load_model(args.model)
    Z, U = read_dataset(args.data).arrays()
    return _emit(evaluate(model, Z, U).to_dict(), args)


def _sim_config(args, seeds):
    from .feedback import SimConfig

    return SimConfig(dt=args.dt, confidence_eps=args.eps, stop_radius=args.stop_radius, max_time=args.max_time,
                     noise_sigma=args.noise_sigma, noise_is_variance=bool(args.noise_variance),
                     noise_scaling=args.noise_scaling, seed=seeds["noise"], b=_b(args))


def _model_for(args, n):
    from .nn import load_model

    if args.model is None:
        if args.mode in ("net", "net-fallback"):
            raise UsageError(f"--mode {args.mode} needs --model")
        return None
    model = load_model(args.model)
    if model.n_inputs != n:
        raise UsageError(f"model expects {model.n_inputs} inputs, --x has {n}")
    return model


def cmd_simulate(args, seeds):
    from .feedback import simulate_closed_loop

    x = _state(args)
    rec = simulate_closed_loop(_model_for(args, x.size), x, _sim_config(args, seeds), mode=args.mode)
    if args.out:
        rec.write_csv(args.out)
    result = {"T_NN": rec.T_NN, "steps": len(rec.points), "fallback_fraction": rec.fallback_fraction,
              "fallback_failures": rec.fallback_failures, "final_state": list(rec.final_y)}
    print(json.dumps(result))
    return result


def cmd_montecarlo(args, seeds):
    from .feedback import monte_carlo

    x = _state(args)
    stats = monte_carlo(args.mode, x, _sim_config(args, seeds), args.m, model=_model_for(args, x.size))
    if args.out:
        stats.write_csv(args.out)
    result = stats.summary()
    print(json.dumps(result))
    return result


COMMANDS = {
    "dump-system": cmd_dump_system,
    "solve": cmd_solve,
    "count-roots": cmd_count_roots,
    "trajectory": cmd_trajectory,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
}

_RUNTIME_KEYS = ("config", "outdir", "log_level", "command")


def _versions() -> dict:
    from importlib import metadata

    out = {"python": platform.python_version(), "numpy": np.__version__, "backend": _backend.name_in_use}
    for dist in ("artifact", "gmpy2"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _manifest_path(args) -> Path:
    if args.outdir:
        base = Path(args.outdir)
    elif getattr(args, "out", None):
        base = Path(args.out).parent
    else:
        base = Path.cwd()
    base.mkdir(parents=True, exist_ok=True)
    return base / f"{args.command}.manifest.json"


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    argv = _join_negative_values(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    early, _ = pre.parse_known_args(argv)
    choices = parser._subparsers._group_actions[0].choices
    try:
        if early.config and early.command in choices:
            sub = choices[early.command]
            actions = {a.dest: a for a in sub._actions}
            cfg = read_config(early.config)
            unknown = sorted(set(cfg) - set(actions) - set(_RUNTIME_KEYS))
            if unknown:
                raise UsageError(f"unknown config keys: {', '.join(unknown)}")
            cfg = {k: v for k, v in cfg.items() if k not in _RUNTIME_KEYS}
            for key in cfg:
                actions[key].required = False
            sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    os.environ.setdefault("OMP_NUM_THREADS", str(max(1, args.threads)))
    seeds = {name: substream(args.seed, name) for name in ("data", "train", "noise", "solve")}
    t0 = time.perf_counter()
    try:
        result = COMMANDS[args.command](args, seeds)
        code = EXIT_OK
        error = None
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except (SolverStalledError, ArithmeticError, ValueError, OSError, RuntimeError, KeyError) as exc:
        error = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(error), file=sys.stderr)
        result, code = None, EXIT_FAILURE
    elapsed = time.perf_counter() - t0
    config = {k: v for k, v in vars(args).items() if k not in _RUNTIME_KEYS}
    manifest = {
        "command": args.command,
        "argv": argv,
        "config": config,
        "seeds": seeds,
        "versions": _versions(),
        "timings": {"wall_seconds": elapsed},
        "exit_code": code,
        "result": result,
        "error": error,
    }
    try:
        _manifest_path(args).write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    except OSError as exc:
        log.warning("could not write manifest: %s", exc)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
