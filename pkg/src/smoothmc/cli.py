"""Command-line front end: ``smoothmc <subcommand> [options]``.

Exit status is 0 on success, 1 on a runtime failure or a failed
certificate, and 2 on bad arguments or an invalid config.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimator import complete, default_grid, oracle_select, theoretical_lambda
from .experiments import RateExperimentConfig, run_delta_scaling, run_rate_experiment
from .io import read_matrix, write_matrix
from .manifold import generate_matrix
from .rng import Rng
from .sampling import WITH_REPLACEMENT, WITHOUT_REPLACEMENT, observe, read_observations, \
    sample_masks, write_observations
from .theory import certify_packing, j_star_count

logger = logging.getLogger("smoothmc")


class UsageError(Exception):
    """Invalid input detected after argument parsing (exit status 2)."""


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _write_json(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def cmd_generate(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = Rng(args.seed)
    M, spec = generate_matrix(args.n, args.p, args.L, args.K, args.num_basis, rng.spawn(0),
                              theta_mode=args.theta)
    N = args.N if args.N is not None else max(1, round((1.0 - args.nu) * args.n * args.p))
    try:
        masks = sample_masks(args.n, args.p, N, args.mode, rng.spawn(1))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    obs = observe(M, masks, args.sigma, rng.spawn(2), mode=args.mode, seed=args.seed)
    write_matrix(M, out / "M.csv")
    spec.save(out / "embedding.json")
    write_observations(obs, out / "obs.csv")
    logger.info("wrote %s (n=%d, p=%d, N=%d)", out, args.n, args.p, N)
    return 0


def cmd_complete(args) -> int:
    obs = read_observations(args.input, args.sidecar)
    truth = read_matrix(args.truth) if args.truth else None
    if args.oracle:
        if truth is None:
            raise UsageError("--oracle needs --truth")
        grid = default_grid(obs.n, obs.p, obs.N)
        _, _, result = oracle_select(truth, obs, grid)
    else:
        lam = args.lam if args.lam is not None else theoretical_lambda(obs.n, obs.p, obs.N, args.C2)
        if not lam > 0:
            raise UsageError(f"--lambda must be positive, got {lam}")
        result = complete(obs, lam)
        if truth is not None:
            result.mse = float(np.mean((result.m_hat - truth) ** 2))
    write_matrix(result.m_hat, Path(args.out))
    result_path = Path(args.result) if args.result else Path(args.out).with_suffix(".result.json")
    _write_json(result.to_json(), result_path)
    return 0


def cmd_rate_experiment(args) -> int:
    try:
        cfg = RateExperimentConfig.load(args.config)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"invalid config {args.config}: {exc}") from exc
    result = run_rate_experiment(cfg, threads=args.threads)
    paths = result.write(args.out_dir)
    logger.info("wrote %s", ", ".join(str(p) for p in paths))
    return 0


def cmd_delta_scaling(args) -> int:
    N_values = args.N_values or [2**k * args.n for k in range(3, 8)]
    M = None
    if args.L is not None:
        M, _ = generate_matrix(args.n, args.p, args.L, 1, args.num_basis, Rng(args.seed).spawn(0))
    result = run_delta_scaling(args.n, args.p, N_values, args.sigma, args.replicates,
                               Rng(args.seed).spawn(1), M=M, threads=args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "delta_scaling.csv").write_text(result.table_csv())
    _write_json(result.to_json(), out / "delta_scaling.json")
    return 0


def cmd_verify_packing(args) -> int:
    try:
        report = certify_packing(args.n, args.p, args.b, args.gamma, args.L, args.K, args.count,
                                 Rng(args.seed), N=args.N, sigma=args.sigma,
                                 mc_samples=args.mc_samples)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _write_json(report, Path(args.out) if args.out else None)
    failed = [k for k, v in report["checks"].items() if v != "pass"]
    if failed:
        logger.error("failed checks: %s", ", ".join(failed))
        return 1
    return 0


def cmd_jstar(args) -> int:
    eps_values = args.eps or [2.0**-k for k in range(1, 9)]
    lines = ["epsilon,L,K,gamma,count"]
    for L in args.L:
        for K in args.K:
            for eps in eps_values:
                lines.append(f"{eps!r},{L},{K},{args.gamma!r},{j_star_count(eps, L, K, args.gamma)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothmc",
        description="Nuclear-norm matrix completion for smoothly embedded matrices.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a synthetic matrix and noisy observations")
    p.add_argument("--n", type=int, required=True, help="rows")
    p.add_argument("--p", type=int, required=True, help="columns")
    p.add_argument("--L", type=int, default=1, help="smoothness order")
    p.add_argument("--K", type=int, default=1, help="latent dimension")
    p.add_argument("--num-basis", type=int, default=100, help="series terms per column")
    p.add_argument("--theta", choices=["uniform", "equispaced"], default="uniform")
    p.add_argument("--nu", type=float, default=0.3, help="missingness rate (ignored with --N)")
    p.add_argument("--N", type=int, default=None, help="number of observations")
    p.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")
    p.add_argument("--mode", choices=[WITHOUT_REPLACEMENT, WITH_REPLACEMENT],
                   default=WITHOUT_REPLACEMENT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True, help="writes M.csv, embedding.json, obs.csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("complete", help="run the soft-thresholding estimator")
    p.add_argument("--in", dest="input", required=True, help="observation CSV (row,col,y)")
    p.add_argument("--sidecar", default=None, help="observation JSON sidecar (default: .json)")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="regularization level (default: theoretical level)")
    p.add_argument("--C2", type=float, default=1.0, help="constant of the theoretical level")
    p.add_argument("--truth", default=None, help="true matrix CSV, enables the MSE report")
    p.add_argument("--oracle", action="store_true", help="pick lambda by oracle MSE over the default grid")
    p.add_argument("--out", required=True, help="completed matrix CSV")
    p.add_argument("--result", default=None, help="result JSON (default: <out>.result.json)")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("rate-experiment", help="rate-of-convergence simulation")
    p.add_argument("--config", required=True, help="JSON config")
    p.add_argument("--out-dir", default=".", help="writes rate_results.csv, rate_summary.json")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: SMOOTHMC_THREADS or CPU count)")
    p.set_defaults(func=cmd_rate_experiment)

    p = sub.add_parser("delta-scaling", help="operator norm of the stochastic error vs N")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--N-values", type=_int_list, default=None,
                   help="comma-separated sample sizes (default: 2^3..2^7 times n)")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--L", type=int, default=None, help="use a generated matrix instead of zero")
    p.add_argument("--num-basis", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out-dir", default=".", help="writes delta_scaling.csv, delta_scaling.json")
    p.set_defaults(func=cmd_delta_scaling)

    p = sub.add_parser("verify-packing", help="certify the lower-bound packing construction")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--p", type=int, default=8)
    p.add_argument("--b", type=int, default=4)
    p.add_argument("--L", type=int, default=1)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--N", type=int, default=None, help="observations for the KL check (default: n*p)")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="report JSON (default: stdout)")
    p.set_defaults(func=cmd_verify_packing)

    p = sub.add_parser("jstar", help="tabulate the basis-count function")
    p.add_argument("--L", type=_int_list, default=[1, 2, 3])
    p.add_argument("--K", type=_int_list, default=[1, 2])
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--eps", type=_float_list, default=None,
                   help="comma-separated accuracies (default: 2^-1..2^-8)")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_jstar)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"smoothmc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to exit status 1
        print(f"smoothmc {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
