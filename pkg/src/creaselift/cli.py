"""Command-line entry points.

Exit codes: 0 success, 2 usage, 3 validation (bad scene/checkpoint/file),
4 numeric failure (non-finite loss, aborted solve, benchmark mismatch).
Every subcommand is deterministic given its --seed (or the scene's seeds).
"""

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .basis import infer_basis, sample_domain, train_basis
from .scene import (CheckpointError, SceneError, load_checkpoint, load_scene,
                    save_checkpoint, export_trajectory)
from .sim import displacement_objective, optimize_shape

USAGE_OK = 0
USAGE_ERROR = 2
VALIDATION_ERROR = 3
NUMERIC_ERROR = 4


def _load_net(args, scene):
    if getattr(args, "fresh", False):
        return scene.network()
    return load_checkpoint(args.checkpoint, expect=scene.spec)


def _net_options(sub):
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--checkpoint", help="trained network (.npz)")
    group.add_argument("--fresh", action="store_true",
                       help="use an untrained network (plumbing checks)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    scene = load_scene(args.scene)
    training = scene.training
    if args.seed is not None:
        training = replace(training, seed=args.seed)
    net, trace = train_basis(scene.train_problem(), scene.network(),
                             training, trace_path=args.trace,
                             log_every=args.log_every)
    save_checkpoint(args.out, net)
    print(f"trained '{scene.name}': {training.epochs} epochs, "
          f"final loss {trace[-1][1]:.6e}, gram penalty {trace[-1][2]:.3e}")
    print(f"checkpoint written to {args.out}")
    return USAGE_OK


def cmd_basis(args) -> int:
    scene = load_scene(args.scene)
    net = _load_net(args, scene)
    alpha = scene.alpha if args.alpha is None else args.alpha
    scene.family.check(alpha)
    problem = scene.train_problem()
    m = problem.lift_map(alpha)
    seed = scene.seed if args.seed is None else args.seed
    X = sample_domain(problem.domain, m, args.points, seed)
    bset = infer_basis(net, m, X, alpha)
    k = bset.phi.shape[1]
    header = " ".join([f"x{a}" for a in range(X.shape[1])]
                      + [f"phi{j}" for j in range(k)])
    np.savetxt(args.out, np.concatenate([X, bset.phi], axis=1),
               header=header)
    gram_inf = float(np.abs(bset.gram() - np.eye(k)).max())
    print(f"basis at alpha={alpha:g}: {args.points} points, k={k}, "
          f"|gram - I|_inf {gram_inf:.4f}")
    print(f"values written to {args.out}")
    return USAGE_OK


def _parse_alpha_schedule(entries):
    sched = {}
    for entry in entries or ():
        step_s, _, alpha_s = entry.partition(":")
        try:
            sched[int(step_s)] = float(alpha_s)
        except ValueError:
            raise SceneError(
                f"bad --set-alpha '{entry}' (expected STEP:ALPHA)") from None
    return sched


def cmd_simulate(args) -> int:
    scene = load_scene(args.scene)
    net = _load_net(args, scene)
    sim = scene.simulation(net)
    schedule = _parse_alpha_schedule(args.set_alpha)
    frames = []
    aborted = 0
    for t in range(args.steps):
        if t in schedule:
            sim.queue_set_alpha(schedule[t])
        frames.append(sim.step())
        if sim.last_report.aborted:
            aborted += 1
    export_trajectory(frames, args.out)
    print(f"simulated {args.steps} steps (alpha {sim.alpha:g}); "
          f"trajectory written to {args.out}")
    if aborted:
        print(f"numeric failure: {aborted} step(s) aborted the inner solve",
              file=sys.stderr)
        return NUMERIC_ERROR
    return USAGE_OK


def cmd_optimize_shape(args) -> int:
    scene = load_scene(args.scene)
    net = _load_net(args, scene)

    def factory(alpha):
        return scene.simulation(net, alpha=alpha)

    evaluate = displacement_objective(factory, args.steps)
    alpha0 = scene.alpha if args.alpha0 is None else args.alpha0
    result = optimize_shape(evaluate, alpha0, scene.family.alpha_range,
                            iterations=args.iterations, fd_step=args.fd_step)
    for a, j in result.trace:
        print(f"  alpha {a:8.5f}  J {j:.6e}")
    print(f"best alpha {result.alpha:.5f}  J {result.objective:.6e}"
          + ("  (aborted)" if result.aborted else ""))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"alpha": result.alpha,
                       "objective": result.objective,
                       "trace": [list(t) for t in result.trace],
                       "aborted": result.aborted}, fh, indent=2)
            fh.write("\n")
    return NUMERIC_ERROR if result.aborted else USAGE_OK


def cmd_bench_hash(args) -> int:
    from . import bench
    report = bench.hash_vs_brute(n_segments=args.segments,
                                 n_queries=args.queries, s=args.s,
                                 seed=args.seed)
    print("\n".join(report.lines()))
    ok = report.agree
    if args.kernels:
        rows = bench.kernel_bench(seed=args.seed)
        print()
        print("\n".join(bench.kernel_table(rows)))
        ok = ok and all(r.match for r in rows)
    return USAGE_OK if ok else NUMERIC_ERROR


def cmd_oracle(args) -> int:
    from . import oracle
    if args.dim == 1:
        def w_fn(mids):
            return np.where(mids < args.split, args.w_left, args.w_right)
        lam, U = oracle.fem_modes_1d(args.elements, w_fn, args.k,
                                     cache_dir=args.cache_dir)
    else:
        def w_fn(cent):
            return np.where(cent[:, 0] < args.split, args.w_left,
                            args.w_right)
        lam, U = oracle.fem_modes_2d(args.nx, args.ny, w_fn, args.k,
                                     cache_dir=args.cache_dir)
    np.savetxt(args.out, np.concatenate([lam[:, None], U.T], axis=1),
               delimiter=",")
    print(f"eigenvalues: {np.array2string(lam, precision=6)}")
    print(f"modes written to {args.out}")
    return USAGE_OK


def cmd_serve(args) -> int:
    from . import service
    scene = load_scene(args.scene)
    net = _load_net(args, scene)
    service.serve(scene, net, host=args.host, port=args.port,
                  max_fps=args.max_fps)
    return USAGE_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="creaselift",
        description="Lifted neural fields for reduced elastodynamics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a basis per the scene config")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--trace", help="per-epoch loss CSV")
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--seed", type=int, help="override the training seed")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("basis", help="infer basis values and dump them")
    p.add_argument("--scene", required=True)
    _net_options(p)
    p.add_argument("--alpha", type=float, help="defaults to the scene alpha")
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--seed", type=int, help="override the sampling seed")
    p.add_argument("--out", required=True, help="text table destination")
    p.set_defaults(fn=cmd_basis)

    p = sub.add_parser("simulate", help="run the reduced integrator")
    p.add_argument("--scene", required=True)
    _net_options(p)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--set-alpha", action="append", metavar="STEP:ALPHA",
                   help="queue an alpha edit before the given step")
    p.add_argument("--out", required=True, help="trajectory destination")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("optimize-shape",
                       help="gradient ascent on the displacement objective")
    p.add_argument("--scene", required=True)
    _net_options(p)
    p.add_argument("--steps", type=int, default=100,
                   help="simulation steps per objective evaluation")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--fd-step", type=float, default=0.02)
    p.add_argument("--alpha0", type=float,
                   help="defaults to the scene alpha")
    p.add_argument("--out", help="JSON result destination")
    p.set_defaults(fn=cmd_optimize_shape)

    p = sub.add_parser("bench-hash",
                       help="hash vs brute-force agreement and timing")
    p.add_argument("--segments", type=int, default=10000)
    p.add_argument("--queries", type=int, default=10000)
    p.add_argument("--s", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernels", action="store_true",
                   help="also compare numba kernels against numpy twins")
    p.set_defaults(fn=cmd_bench_hash)

    p = sub.add_parser("oracle", help="dense FEM reference modes")
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--elements", type=int, default=400, help="1D elements")
    p.add_argument("--nx", type=int, default=24, help="2D grid columns")
    p.add_argument("--ny", type=int, default=24, help="2D grid rows")
    p.add_argument("--split", type=float, default=0.5,
                   help="weight step position along x")
    p.add_argument("--w-left", type=float, default=1.0)
    p.add_argument("--w-right", type=float, default=4.0)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--cache-dir", help="CSV result cache directory")
    p.add_argument("--out", required=True, help="modes CSV destination")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("serve", help="live simulation endpoint")
    p.add_argument("--scene", required=True)
    _net_options(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--max-fps", type=float, default=60.0)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (SceneError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return VALIDATION_ERROR
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return VALIDATION_ERROR
    except RuntimeError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return NUMERIC_ERROR
    except KeyboardInterrupt:
        return USAGE_OK


if __name__ == "__main__":
    sys.exit(main())
