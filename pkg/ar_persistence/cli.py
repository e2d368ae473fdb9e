"""
Command-line front end.

Subcommands:
    classify        Decay regime of a generating polynomial.
    simulate        One simulated path as CSV.
    impulse         Impulse response as CSV.
    persist         Persistence estimates over an N grid, plus an exponent fit.
    fit             Refit an estimates CSV.
    cone-exponent   AR3 persistence exponent from the cone eigenvalue.
    sweep           Exponents at a rational angle and perturbed irrational angles.

Exit codes: 0 success, 1 usage or generic failure, 2 precondition error,
3 numerical error, 130 interrupted.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import pandas as pd

from ar_persistence import arproc, cone, persist, regime
from ar_persistence._logger import configure_logging
from ar_persistence.config import (
    ExperimentConfig,
    parse_angle,
    parse_coeffs,
    parse_n_grid,
    parse_offsets,
    parse_resolution,
    parse_zeros,
)
from ar_persistence.errors import ArPersistenceError, NumericalError, PreconditionError
from ar_persistence.models import (
    EstimateModel,
    ImpulseModel,
    MaskModel,
    PathModel,
    SweepModel,
    header_comment,
    read_table,
    render_table,
    write_table,
)

logger = logging.getLogger("ar_persistence")

# ----------------------    CONSTANTS    ----------------------
LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}

EPILOG = """Example Usage:
    poetry run python analyze_persistence.py classify --coeffs=-1,1,1
    poetry run python analyze_persistence.py classify --zeros 1,-1:2
    poetry run python analyze_persistence.py persist --coeffs 1 --N-grid 64:16384:x2 --method splitting
    poetry run python analyze_persistence.py cone-exponent --theta pi/2 --resolution 128x256
    poetry run python analyze_persistence.py sweep --theta pi/2 --offsets=1e-2*sqrt2,-1e-2*sqrt2
"""


# ----------------------    HELPER FUNCTIONS    ----------------------
def _step(title: str):
    banner = "=" * (len(title) + 12)
    logger.info(banner)
    logger.info(f"=  STEP: {title}  =")
    logger.info(banner)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed of every random stream.")
    common.add_argument("--threads", type=int, help="worker threads (default: min(32, cpu_count + 4)).")
    common.add_argument("--out", metavar="DIR", help="directory for CSV and JSON artifacts.")
    common.add_argument("--config", metavar="YAML", help="configuration file (default: config/experiment.yaml).")
    common.add_argument(
        "-v",
        "--verbose",
        choices=LEVELS.keys(),
        default="WARNING",
        help="set the verbose level (default: %(default)s).",
    )
    return common


def _add_polynomial(parser: argparse.ArgumentParser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--coeffs", metavar="A1,...,AL", help="recurrence coefficients a_1..a_L.")
    group.add_argument("--zeros", metavar="RE+IMi:MULT,...", help="zeros of Q; conjugates are added.")
    parser.add_argument("--cluster-tol", type=float, help="root merge radius.")
    parser.add_argument("--critical-band", type=float, help="|r* - 1| treated as critical.")


def build_parser() -> argparse.ArgumentParser:
    """
    Build the argument parser of every subcommand.

    Returns:
        argparse.ArgumentParser: The top-level parser.
    """
    parser = argparse.ArgumentParser(
        prog="ar-persistence",
        description="Persistence probabilities of Gaussian auto-regressive processes.",
        epilog=EPILOG,
        formatter_class=argparse.RawTextHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    common = _common_parser()

    classify = subparsers.add_parser("classify", parents=[common], help="decay regime of Q.")
    _add_polynomial(classify)

    simulate = subparsers.add_parser("simulate", parents=[common], help="simulate one path.")
    _add_polynomial(simulate)
    simulate.add_argument("--N", type=int, required=True, help="number of values X_0..X_(N-1).")

    impulse = subparsers.add_parser("impulse", parents=[common], help="impulse response h_0..h_N.")
    _add_polynomial(impulse)
    impulse.add_argument("--N", type=int, required=True, help="last index of the response.")

    estimate = subparsers.add_parser("persist", parents=[common], help="persistence estimates and fit.")
    _add_polynomial(estimate)
    estimate.add_argument("--N-grid", dest="n_grid", help="n1,n2,... or start:stop:step or start:stop:xk.")
    estimate.add_argument("--N", dest="single_n", type=int, help="single horizon (same as --N-grid N).")
    estimate.add_argument("--method", choices=[m.value for m in persist.Method], help="estimator.")
    estimate.add_argument("--samples", type=int, help="naive Monte Carlo paths.")
    estimate.add_argument("--particles", type=int, help="splitting particles per stage.")
    estimate.add_argument("--replicates", type=int, help="independent splitting runs.")
    estimate.add_argument("--model", choices=[m.value for m in regime.DecayModel], help="fit model override.")

    fit = subparsers.add_parser("fit", parents=[common], help="refit an estimates CSV.")
    fit.add_argument("--estimates", required=True, metavar="CSV", help="CSV written by persist.")
    fit.add_argument("--model", choices=[m.value for m in regime.DecayModel], help="fit model.")
    fit.add_argument("--window", dest="fit_window", type=int, help="points per drift window.")
    _add_polynomial(fit)

    cone_exponent = subparsers.add_parser("cone-exponent", parents=[common], help="AR3 exponent from the cone.")
    cone_exponent.add_argument("--theta", required=True, help="angle: radians, pi/q or p*pi/q.")
    cone_exponent.add_argument("--resolution", help="grid n_polar x n_azimuth, e.g. 128x256.")
    cone_exponent.add_argument("--boundary", choices=cone.BOUNDARY_MODES, help="Dirichlet boundary treatment.")
    cone_exponent.add_argument("--cap", dest="denominator_cap", type=int, help="rationality denominator cap.")
    cone_exponent.add_argument("--mask", action="store_true", help="also write the domain mask CSV.")
    cone_exponent.add_argument("--mc", action="store_true", help="cross-check with Brownian survival in the cone.")
    cone_exponent.add_argument("--bm-paths", dest="bm_paths", type=int, help="Brownian paths of the cross-check.")
    cone_exponent.add_argument("--bm-dt", dest="bm_dt", type=float, help="Euler step of the cross-check.")
    cone_exponent.add_argument(
        "--bm-horizon", dest="bm_horizon", type=float, help="last survival time of the cross-check."
    )

    sweep = subparsers.add_parser("sweep", parents=[common], help="discontinuity sweep around a rational angle.")
    sweep.add_argument("--theta", required=True, help="rational angle: pi/q or p*pi/q.")
    sweep.add_argument("--offsets", required=True, help="comma-separated offsets, e.g. 1e-2*sqrt2.")
    sweep.add_argument("--resolution", help="grid n_polar x n_azimuth.")
    sweep.add_argument("--boundary", choices=cone.BOUNDARY_MODES, help="Dirichlet boundary treatment.")
    sweep.add_argument("--cap", dest="denominator_cap", type=int, help="rationality denominator cap.")

    return parser


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge the YAML defaults with the parsed flags."""
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key not in ("config", "verbose", "mask", "mc", "estimates", "single_n") and value is not None
    }
    if getattr(args, "coeffs", None) is not None:
        overrides["coeffs"] = parse_coeffs(args.coeffs)
    if getattr(args, "zeros", None) is not None:
        overrides["zeros"] = parse_zeros(args.zeros)
    if getattr(args, "n_grid", None) is not None:
        overrides["n_grid"] = parse_n_grid(args.n_grid)
    if getattr(args, "single_n", None) is not None:
        overrides["n_grid"] = (args.single_n,)
    if getattr(args, "resolution", None) is not None:
        overrides["resolution"] = parse_resolution(args.resolution)
    if getattr(args, "offsets", None) is not None:
        overrides["offsets"] = parse_offsets(args.offsets)
    return ExperimentConfig.from_sources(args.config, overrides)


class Emitter:
    """Writes artifacts to --out when given and summaries to stdout."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.hash = config.config_hash()
        self.out = Path(config.out) if config.out else None
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)

    @property
    def header(self) -> str:
        return header_comment(self.hash, self.config.seed, self.config.command)

    def table(self, frame: pd.DataFrame, schema_model, name: str, truncated: bool = False):
        if self.out:
            path = write_table(frame, schema_model, self.out / name, self.header, truncated)
            logger.info(f"Wrote {path}")
            return
        sys.stdout.write(render_table(frame, schema_model, self.header))
        if truncated:
            sys.stdout.write("# truncated\n")

    def json(self, payload: dict, name: str):
        payload = dict(payload, config_hash=self.hash, seed=self.config.seed)
        text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
        if self.out:
            path = self.out / name
            with open(path, "w", encoding="utf-8", newline="\n") as fd:
                fd.write(text)
            logger.info(f"Wrote {path}")
        sys.stdout.write(text)


# -----------------------------------------------------------------------
# -----------------------        Commands          ----------------------
# -----------------------------------------------------------------------
def cmd_classify(config: ExperimentConfig, emit: Emitter) -> int:
    _step("Roots")
    poly, zeros = config.polynomial()
    _step("Classification")
    result = regime.classify_zeros(zeros, config.critical_band, config.modulus_tol)
    report = result.to_json()
    report["coeffs"] = list(poly.coeffs)
    report["zeros"] = zeros.to_json()
    emit.json(report, "classify.json")
    return 0


def cmd_simulate(config: ExperimentConfig, emit: Emitter) -> int:
    poly, _ = config.polynomial()
    _step("Simulation")
    sample = arproc.simulate(poly, config.N, config.seed)
    emit.table(sample.to_frame(), PathModel, "path.csv")
    return 0


def cmd_impulse(config: ExperimentConfig, emit: Emitter) -> int:
    poly, _ = config.polynomial()
    _step("Impulse response")
    emit.table(arproc.impulse_response(poly, config.N).to_frame(), ImpulseModel, "impulse.csv")
    return 0


def _fit_model(config: ExperimentConfig, zeros) -> regime.DecayModel:
    if config.model is not None:
        return regime.DecayModel(config.model)
    return regime.decay_model(regime.classify_zeros(zeros, config.critical_band, config.modulus_tol))


def _fit_report(estimates, model: regime.DecayModel, window: int) -> dict:
    report: dict = {"model": model.value}
    try:
        report["fit"] = persist.fit_exponent(estimates, model).to_json()
    except PreconditionError as e:
        logger.warning(f"No exponent fit: {e}")
        report["fit"] = None
        return report
    try:
        windows = persist.fit_windows(estimates, model, window)
        exponents = [w.exponent for w in windows]
        report["windows"] = [w.to_json() for w in windows]
        report["drift"] = max(exponents) - min(exponents)
    except PreconditionError:
        report["windows"] = []
    return report


def cmd_persist(config: ExperimentConfig, emit: Emitter) -> int:
    poly, zeros = config.polynomial()
    model = _fit_model(config, zeros)
    method = persist.Method(config.method)
    horizons = list(config.n_grid)
    threads = config.worker_threads

    _step("Estimation")
    estimates: list[persist.PersistenceEstimate] = []
    truncated = False
    try:
        if method is persist.Method.NAIVE:
            estimates = persist.naive_persistence_curve(
                poly, horizons, config.samples, config.seed, threads, config.chunk_size
            )
        elif method is persist.Method.SPLITTING:
            checkpoints = persist.default_checkpoints(horizons[-1], model)
            splitting = persist.SplittingConfig(checkpoints, config.particles, config.replicates)
            estimates = persist.splitting_persistence_curve(poly, horizons, splitting, config.seed, threads)
        elif method is persist.Method.ORACLE:
            for N in horizons:
                estimates.append(persist.orthant_oracle(poly, N, config.seed))
        else:
            if poly.coeffs != (1.0,):
                raise PreconditionError("The exact method is only available for the random walk (--coeffs 1).")
            for N in horizons:
                estimates.append(persist.random_walk_estimate(N))
    except persist.InterruptedCurve as e:
        estimates = list(e.estimates)
        logger.warning(f"Interrupted; writing the {len(estimates)} horizons the finished work supports.")
        truncated = True
    except KeyboardInterrupt:
        logger.warning(f"Interrupted after {len(estimates)} horizons; writing partial results.")
        truncated = True

    for estimate in estimates:
        if estimate.flag:
            logger.warning(f"N={estimate.N}: {estimate.flag}")
    emit.table(persist.estimates_to_frame(estimates), EstimateModel, "estimates.csv", truncated=truncated)
    if truncated:
        return 130

    _step("Fit")
    emit.json(_fit_report(estimates, model, config.fit_window), "fit.json")
    return 0


def cmd_fit(config: ExperimentConfig, emit: Emitter, estimates_path: str) -> int:
    _step("Loading")
    estimates = persist.estimates_from_frame(read_table(estimates_path, EstimateModel))
    if config.model is not None:
        model = regime.DecayModel(config.model)
    elif config.coeffs is not None or config.zeros is not None:
        model = _fit_model(config, config.polynomial()[1])
    else:
        raise PreconditionError("fit needs --model or a polynomial (--coeffs/--zeros).")
    _step("Fit")
    emit.json(_fit_report(estimates, model, config.fit_window), "fit.json")
    return 0


def _angle(config: ExperimentConfig) -> tuple[float, cone.Rationality | None]:
    theta, fraction = parse_angle(config.theta)
    if fraction is None:
        return theta, cone.classify_rationality(theta, config.denominator_cap, config.rational_tol)
    if fraction.denominator > config.denominator_cap:
        return theta, cone.Rationality(None, None, config.denominator_cap)
    return theta, cone.Rationality(fraction.numerator, fraction.denominator, config.denominator_cap)


def cmd_cone(config: ExperimentConfig, emit: Emitter, write_mask: bool = False, monte_carlo: bool = False) -> int:
    theta, rationality = _angle(config)
    _step("Domain")
    spec = cone.modal_constants_ar3(theta, rationality, config.denominator_cap)
    domain = cone.build_domain(spec, config.resolution, boundary=config.boundary)
    if write_mask:
        emit.table(domain.to_frame(), MaskModel, "mask.csv")
    _step("Eigenvalue")
    result = cone.principal_eigenvalue(domain, config.eigen_tol, config.eigen_max_iter)
    report = dict(
        result.to_json(),
        theta=theta,
        rationality=str(spec.rationality),
        c0=spec.c0,
        c1=spec.c1,
        phase=spec.phase,
        area=domain.area(),
    )
    if monte_carlo:
        _step("Brownian survival")
        fit = cone.cone_survival_mc(
            domain,
            config.bm_horizon,
            config.bm_paths,
            config.seed,
            config.bm_dt,
            x0=domain.deepest_point(),
            threads=config.worker_threads,
        )
        report["mc_exponent"] = fit.exponent
        report["mc_r_squared"] = fit.r_squared
        report["mc_paths"] = fit.n_paths
        if abs(fit.exponent - result.persistence_exponent) > 0.1:
            logger.warning(
                f"Brownian survival exponent {fit.exponent:.4f} differs from the eigenvalue exponent "
                f"{result.persistence_exponent:.4f}; increase --bm-paths or --bm-horizon."
            )
    emit.json(report, "cone_exponent.json")
    return 0


def cmd_sweep(config: ExperimentConfig, emit: Emitter) -> int:
    theta, rationality = _angle(config)
    if not rationality.rational:
        raise PreconditionError(f"sweep needs a rational angle, got theta={theta} ({rationality}).")
    _step("Sweep")
    result = cone.discontinuity_sweep(
        theta, config.offsets, config.resolution, rationality, config.denominator_cap, config.boundary
    )
    emit.table(result.to_frame(), SweepModel, "sweep.csv")
    emit.json({"theta": theta, "min_gap": result.min_gap, "offsets": list(config.offsets)}, "sweep.json")
    return 0


# ---------------------------------------------------------------------------
# ----------------------    M A I N   F U N C T I O N    --------------------
# ---------------------------------------------------------------------------
def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_help(sys.stderr)
        return 1  # Exit with error code 1

    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1

    configure_logging(LEVELS[args.verbose])
    logger.info(f"CLI arguments: {args}")

    try:
        config = build_config(args)
        config = replace(config, command=args.command)
        emit = Emitter(config)
        if args.command == "classify":
            return cmd_classify(config, emit)
        if args.command == "simulate":
            return cmd_simulate(config, emit)
        if args.command == "impulse":
            return cmd_impulse(config, emit)
        if args.command == "persist":
            return cmd_persist(config, emit)
        if args.command == "fit":
            return cmd_fit(config, emit, args.estimates)
        if args.command == "cone-exponent":
            return cmd_cone(config, emit, args.mask, args.mc)
        return cmd_sweep(config, emit)
    except PreconditionError as e:
        logger.error(f"Precondition failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return PreconditionError.exit_code
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return NumericalError.exit_code
    except ArPersistenceError as e:
        logger.error(f"{e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
