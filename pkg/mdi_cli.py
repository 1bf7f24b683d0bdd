#!/usr/bin/env python3
"""
Command-line interface for MDI entanglement detection experiments
"""

import argparse
import logging
import os
import sys
import time
from typing import Dict, Any, List, Optional

import numpy as np
import pandas as pd

from artifacts import read_json, write_csv, write_json
from config import RunConfig, ConfigError, COMMANDS, FORMATS, PRIORS, SCHEMES
from gaussian_core import GaussianState, LossChannel, tmsv, apply_loss
from priors import PriorSpec, prior_report
from sampler import MeasurementScheme, run_batch
from witness import (
    WitnessSpec,
    NoiseParams,
    ScoreReport,
    duan_ew,
    mdi_score_analytic,
    noisy_tmsv_ew,
    separable_bound_ew,
    mdi_bound,
    minimal_sigma,
    optimal_kappa,
    optimize_witness,
    verdict,
    contour_scan,
)
from fock_lab import ReconstructionError
from fock_verify import run_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3

# numerical failures; LinAlgError would otherwise pass as a ValueError
COMPUTE_ERRORS = (ReconstructionError, np.linalg.LinAlgError, ArithmeticError)

OUTPUT_FILES = {
    "witness-eval": "witness_eval",
    "mdi-samples": "mdi_samples.csv",
    "mdi-report": "mdi_report.json",
    "contour-values": "contour_values.csv",
    "contour-boundaries": "contour_boundaries.csv",
    "fock-verify": "fock_verify.json",
    "prior-fim": "prior_fim.json",
}


def print_banner():
    banner = """
╔══════════════════════════════════════════════════════════════╗
║        MDI Entanglement Detection for Continuous Variables   ║
║                     Experiment CLI v1.0                      ║
╚══════════════════════════════════════════════════════════════╝
    """
    print(banner)


def _float_list(text: str) -> List[float]:
    """'1,2,3' -> [1.0, 2.0, 3.0]; '' -> []"""
    text = text.strip()
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _grid(text: str) -> List[float]:
    """'start:stop:num' or a comma-separated list"""
    if ":" in text:
        try:
            start, stop, num = text.split(":")
            return np.linspace(float(start), float(stop), int(num)).tolist()
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected start:stop:num, got '{text}'")
    return _float_list(text)


def _kappa(text: str):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"kappa must be a number or 'auto', got '{text}'")


def _sigma(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sigma must be a number or 'inf', got '{text}'")


def _output_path(config: RunConfig, key: str) -> str:
    return os.path.join(config.out, OUTPUT_FILES[key])


# --- state helpers --------------------------------------------------------

def build_state(config: RunConfig) -> GaussianState:
    """State from --state-file, else a TMSV sent through the two loss channels"""
    if config.state_file:
        try:
            return GaussianState.from_dict(read_json(config.state_file))
        except FileNotFoundError:
            raise ConfigError(f"State file not found: {config.state_file}")
    state = tmsv(config.r)
    state = apply_loss(state, LossChannel(0, config.eta_a))
    return apply_loss(state, LossChannel(1, config.eta_b))


def resolve_kappa(config: RunConfig, state: Optional[GaussianState] = None) -> WitnessSpec:
    if config.kappa != "auto":
        return WitnessSpec(float(config.kappa))
    if config.state_file and state is not None:
        return optimize_witness(state).spec()
    return WitnessSpec(optimal_kappa(config.eta_a, config.eta_b))


def build_prior(config: RunConfig) -> PriorSpec:
    if config.prior == "smooth-box":
        return PriorSpec.smooth_box(config.l, config.delta)
    return PriorSpec.gaussian(config.sigma)


# --- subcommands ----------------------------------------------------------

def cmd_witness_eval(config: RunConfig) -> Dict[str, Any]:
    """Closed-form EW and MDI scores with their separable bounds"""
    state = build_state(config)
    spec = resolve_kappa(config, state)
    kappa = spec.kappa

    ew = duan_ew(state, spec)
    mdiew = mdi_score_analytic(state, spec)
    bound = mdi_bound(kappa, config.sigma)
    sigma = float("inf") if config.sigma is None else float(config.sigma)
    report = ScoreReport(score=mdiew, std_error=0.0, bound=bound, kappa=kappa, sigma=sigma,
                         verdict=verdict(mdiew, 0.0, bound, config.n_sigma))
    result = {
        "ew": ew,
        "ew_bound": separable_bound_ew(kappa),
        "mdiew": mdiew,
        "mdi_bound": bound,
        "kappa": kappa,
        "sigma": sigma,
        "minimal_sigma": minimal_sigma(mdiew, kappa),
        "verdict": report.verdict,
        "report": report.to_dict(),
        "witness": spec.to_dict(),
        "verdict_sigmas": config.n_sigma,
    }
    if not config.state_file:
        result["state"] = NoiseParams(config.eta_a, config.eta_b, config.r).to_dict()
        result["ew_closed_form"] = noisy_tmsv_ew(NoiseParams(config.eta_a, config.eta_b, config.r), kappa)

    if config.format == "csv":
        flat = {k: v for k, v in result.items() if not isinstance(v, dict)}
        path = write_csv(pd.DataFrame([flat]), _output_path(config, "witness-eval") + ".csv")
    else:
        path = write_json(result, _output_path(config, "witness-eval") + ".json")

    print(f"[OK] EW_kappa = {ew:.6f} (separable bound {separable_bound_ew(kappa):.6f}), kappa = {kappa:.5f}")
    print(f"[OK] MDIEW_kappa = {mdiew:.6f} (bound {bound:.6f}) -> {report.verdict}")
    print(f"[INFO] Results saved to: {path}")
    return result


def cmd_mdi_simulate(config: RunConfig) -> Dict[str, Any]:
    """Monte Carlo protocol rounds, sample dump and scored report"""
    state = build_state(config)
    spec = resolve_kappa(config, state)
    prior = build_prior(config)
    scheme = MeasurementScheme.from_state(state, variant=config.scheme, orientation=spec.orientation or None)

    kappas = sorted(set([spec.kappa] + [float(k) for k in config.kappa_grid]))
    print(f"[INFO] Simulating {config.trials} rounds ({config.scheme}, {prior!r}, seed {config.seed})")
    batch = run_batch(config.trials, state, prior, scheme, config.seed, kappa_grid=kappas, n_jobs=config.n_jobs,
                      n_sigma=config.n_sigma)

    primary = next(entry for entry in batch.summary["kappa"] if entry["kappa"] == spec.kappa)
    report = dict(batch.summary)
    report["primary"] = primary
    if config.scheme == "paper-optimal":
        report["analytic_score"] = mdi_score_analytic(state, spec)

    if config.dump_samples:
        path = batch.write_samples_csv(_output_path(config, "mdi-samples"))
        print(f"[INFO] Samples saved to: {path}")
    path = write_json(report, _output_path(config, "mdi-report"))

    print(f"[OK] MDIEW_kappa = {primary['score']:.6f} +/- {primary['std_error']:.6f} "
          f"(bound {primary['bound']:.6f}) -> {primary['verdict']}")
    print(f"[INFO] Report saved to: {path}")
    return report


def cmd_contour(config: RunConfig) -> Dict[str, Any]:
    """kappa=1 score grid over (r, eta) and the sigma boundary curves"""
    values, boundaries = contour_scan(config.r_grid, config.eta_grid, config.sigma_list, n_jobs=config.n_jobs)
    values_path = write_csv(values, _output_path(config, "contour-values"))
    print(f"[OK] {len(values)} grid points saved to: {values_path}")
    result = {"values": values_path, "n_values": len(values)}
    if config.sigma_list:
        boundaries_path = write_csv(boundaries, _output_path(config, "contour-boundaries"))
        print(f"[OK] {len(config.sigma_list)} boundary curves saved to: {boundaries_path}")
        result["boundaries"] = boundaries_path
    return result


def cmd_fock_verify(config: RunConfig) -> Dict[str, Any]:
    """Seeded invariant suite for the Fock-space reduction"""
    print(f"[INFO] Running Fock verification (cutoff {config.cutoff}, {config.instances} instances, "
          f"lambda {config.lam})")
    report = run_suite(
        cutoff=config.cutoff,
        instances=config.instances,
        lam=config.lam,
        seed=config.seed,
        tomography=config.tomography,
        energy_scale=config.energy_scale,
        n_jobs=config.n_jobs,
    )
    path = write_json(report, _output_path(config, "fock-verify"))
    for check in report["checks"]:
        tag = "[OK]" if check["passed"] else "[ERROR]"
        print(f"{tag} {check['name']:<24} max error {check['max_error']:.3e} (tolerance {check['tolerance']:.1e})")
    for message in report["warnings"]:
        print(f"[WARNING] {message}")
    print(f"[INFO] TMSV truncation deficit at cutoff {config.cutoff}: {report['tmsv_truncation_deficit']:.3e} "
          f"(recommended cutoff {report['recommended_cutoff']})")
    print(f"[INFO] Report saved to: {path}")
    return report


def cmd_prior_fim(config: RunConfig) -> Dict[str, Any]:
    """Prior Fisher information and the separable bound it implies"""
    prior = build_prior(config)
    report = prior_report(prior, float(config.kappa))
    path = write_json(report, _output_path(config, "prior-fim"))
    print(f"[OK] FIM diagonal = {np.diag(report['fim']).tolist()}, bound = {report['separable_mdi_bound']:.6f}")
    if report["possibly_loose"]:
        print("[WARNING] Bound may be loose for this prior shape")
    print(f"[INFO] Report saved to: {path}")
    return report


COMMAND_HANDLERS = {
    "witness-eval": cmd_witness_eval,
    "mdi-simulate": cmd_mdi_simulate,
    "contour": cmd_contour,
    "fock-verify": cmd_fock_verify,
    "prior-fim": cmd_prior_fim,
}


# --- parser ---------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser):
    # defaults stay None so config-file values are only overridden by explicit flags
    parser.add_argument("--config", dest="config_path", help="JSON config file")
    parser.add_argument("--seed", type=int, help="Unsigned 64-bit seed")
    parser.add_argument("--out", help="Output directory (default: results)")
    parser.add_argument("--format", choices=FORMATS, help="Output format where a choice exists")
    parser.add_argument("--n-jobs", dest="n_jobs", type=int, help="joblib workers (-1 for all cores)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings only")
    parser.add_argument("--no-banner", action="store_true", help="Don't show banner")


def _add_state(parser: argparse.ArgumentParser):
    parser.add_argument("--r", type=float, help="TMSV squeezing parameter")
    parser.add_argument("--eta-a", dest="eta_a", type=float, help="Loss fraction on mode A")
    parser.add_argument("--eta-b", dest="eta_b", type=float, help="Loss fraction on mode B")
    parser.add_argument("--kappa", type=_kappa, help="Witness weight or 'auto'")
    parser.add_argument("--sigma", type=_sigma, help="Gaussian prior width ('inf' for no bound tightening)")
    parser.add_argument("--state-file", dest="state_file", help="Two-mode Gaussian state JSON")
    parser.add_argument("--n-sigma", dest="n_sigma", type=float,
                        help="Standard errors required below the bound (default 3)")


def _add_prior(parser: argparse.ArgumentParser):
    parser.add_argument("--prior", choices=PRIORS, help="Amplitude prior shape")
    parser.add_argument("--l", type=float, help="Smooth-box width")
    parser.add_argument("--delta", type=float, help="Smooth-box edge width")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Measurement-device-independent entanglement detection for continuous variables",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s witness-eval --r 0.5 --kappa 1
  %(prog)s witness-eval --kappa auto --eta-a 0 --eta-b 0.75
  %(prog)s mdi-simulate --r 0.5 --sigma 3 --trials 1000000 --seed 7
  %(prog)s contour --sigma-list 1,2,3,5,10 --r-grid 0:2.5:51
  %(prog)s fock-verify --cutoff 8 --instances 20 --lambda 0.5 --tomography
  %(prog)s prior-fim --prior smooth-box --l 3.14159 --delta 3.14159
        """
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("witness-eval", help="Closed-form witness scores")
    _add_common(p)
    _add_state(p)

    p = sub.add_parser("mdi-simulate", help="Monte Carlo MDI protocol")
    _add_common(p)
    _add_state(p)
    _add_prior(p)
    p.add_argument("--trials", type=int, help="Number of protocol rounds")
    p.add_argument("--scheme", choices=SCHEMES, help="Measurement strategy")
    p.add_argument("--kappa-grid", dest="kappa_grid", type=_float_list, help="Extra kappa values to score")
    p.add_argument("--no-dump-samples", dest="dump_samples", action="store_const", const=False,
                   help="Skip the per-round CSV")

    p = sub.add_parser("contour", help="Loss tolerance contours")
    _add_common(p)
    p.add_argument("--sigma-list", dest="sigma_list", type=_float_list, help="Prior widths, comma-separated")
    p.add_argument("--r-grid", dest="r_grid", type=_grid, help="start:stop:num or list")
    p.add_argument("--eta-grid", dest="eta_grid", type=_grid, help="start:stop:num or list")

    p = sub.add_parser("fock-verify", help="Fock-space invariant suite")
    _add_common(p)
    p.add_argument("--cutoff", type=int, help="Per-mode Fock cutoff (<= 14)")
    p.add_argument("--instances", type=int, help="Random instances per check")
    p.add_argument("--lambda", dest="lam", type=float, help="tanh r of the projecting TMSV")
    p.add_argument("--energy-scale", dest="energy_scale", type=float, help="Energy scale N of the witness")
    p.add_argument("--tomography", action="store_const", const=True, help="Add the reconstruction round trip")

    p = sub.add_parser("prior-fim", help="Prior Fisher information and bounds")
    _add_common(p)
    _add_prior(p)
    p.add_argument("--sigma", type=_sigma, help="Gaussian prior width")
    p.add_argument("--kappa", type=_kappa, help="Witness weight")
    return parser


def _setup_logging(verbose: bool, quiet: bool):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level)
    logging.getLogger().setLevel(level)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command not in COMMANDS:
        parser.print_help()
        return EXIT_CONFIG

    _setup_logging(args.verbose, args.quiet)
    if not args.no_banner:
        print_banner()

    flags = {k: v for k, v in vars(args).items()
             if k not in ("command", "config_path", "verbose", "quiet", "no_banner")}
    start_time = time.time()
    try:
        config = RunConfig.from_sources(args.command, flags, args.config_path).validate()
        result = COMMAND_HANDLERS[args.command](config)
    except COMPUTE_ERRORS as e:
        logger.debug("Computation failed", exc_info=True)
        print(f"[ERROR] {args.command} failed: {e}")
        return EXIT_COMPUTE
    except ValueError as e:
        print(f"[ERROR] Invalid input: {e}")
        return EXIT_CONFIG
    except Exception as e:
        logger.debug("Computation failed", exc_info=True)
        print(f"[ERROR] {args.command} failed: {e}")
        return EXIT_COMPUTE

    logger.info(f"{args.command} finished in {time.time() - start_time:.3f}s")
    if args.command == "fock-verify" and not result["passed"]:
        print("[ERROR] Verification suite reported failures")
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
