#!/usr/bin/env python3
"""
Invariant suite for the Fock-space reduction

Runs seeded random instances through fock_lab and reports one entry per
named check with its worst error and tolerance.
"""

import json
import logging
import sys
import time
from typing import Dict, Any, List, Optional

import numpy as np
from joblib import Parallel, delayed

from artifacts import to_jsonable
from fock_operators import (
    FockError,
    random_density_matrix,
    random_hermitian,
    random_product_decomposition,
)
from fock_lab import (
    TruncationError,
    BRUTEFORCE_TOLERANCE,
    SEPARABLE_TOLERANCE,
    PSD_TOLERANCE,
    povm_prefactor,
    povm_element,
    povm_element_bruteforce,
    multimode_povm_element,
    witness_tilde,
    damping_factor,
    energy_scale_witness,
    duan_fock_witness,
    tmsv_density,
    tmsv_truncation_deficit,
    separable_transform_check,
    npt_signature,
    recommended_cutoff,
    polar_input_grid,
    grid_probabilities,
    reconstruct_povm,
)
from sampler import RngStream

logger = logging.getLogger(__name__)

TRACE_TOLERANCE = 1e-9
DAMPING_TOLERANCE = 0.01
CONVERGENCE_SLACK = 1.1
TOMOGRAPHY_TOLERANCE = 1e-6
TOMOGRAPHY_CUTOFF = 3
MULTIMODE_CUTOFF = 4
NPT_CUTOFF = 3
CONVERGENCE_CUTOFFS = (6, 8, 10)
CONVERGENCE_R = 0.5
DAMPING_SCALES = (1.0, 10.0, 100.0)

# disjoint RNG stream ranges per check
STREAM_OFFSETS = {
    "bruteforce_equivalence": 0,
    "trace_identity": 100_000,
    "separable_transform": 200_000,
    "npt_preservation": 300_000,
    "multimode_identity": 400_000,
    "positivity": 500_000,
}


def _check(name: str, errors: List[float], tolerance: float, passed: Optional[bool] = None,
           **extra) -> Dict[str, Any]:
    max_error = float(max(errors)) if errors else 0.0
    if passed is None:
        passed = max_error <= tolerance
    result = {"name": name, "passed": bool(passed), "max_error": max_error, "tolerance": tolerance}
    result.update(extra)
    level = logging.INFO if passed else logging.WARNING
    logger.log(level, f"{name}: {'passed' if passed else 'FAILED'} (max error {max_error:.3e}, tolerance {tolerance:.1e})")
    return result


def _rng(seed, check, instance):
    return RngStream(seed, STREAM_OFFSETS[check] + instance).generator()


# --- per-instance workers -------------------------------------------------

def _bruteforce_instance(seed, i, cutoff, lam):
    rho = random_density_matrix((cutoff, cutoff), _rng(seed, "bruteforce_equivalence", i))
    closed = povm_element(rho, lam, "projector")
    explicit = povm_element_bruteforce(rho, lam)
    return float(np.max(np.abs(closed.matrix - explicit.matrix)))


def _trace_identity_error(rho, W, lam, normalization):
    M = povm_element(rho, lam, normalization)
    lhs = M.expectation(witness_tilde(W, lam)).real
    c = povm_prefactor(rho.n_modes, lam, normalization)
    rhs = c * rho.expectation(W).real
    return abs(lhs - rhs) / max(abs(rhs), c)


def _trace_identity_instance(seed, i, cutoff, lam):
    rng = _rng(seed, "trace_identity", i)
    rho = random_density_matrix((cutoff, cutoff), rng)
    W = random_hermitian((cutoff, cutoff), rng)
    return _trace_identity_error(rho, W, lam, "projector")


def _separable_instance(seed, i, cutoff, lam):
    terms = random_product_decomposition((cutoff, cutoff), _rng(seed, "separable_transform", i))
    return separable_transform_check(terms, lam)


def _npt_instance(seed, i, lam):
    rng = _rng(seed, "npt_preservation", i)
    rank = int(rng.integers(1, NPT_CUTOFF ** 2 + 1))
    rho = random_density_matrix((NPT_CUTOFF, NPT_CUTOFF), rng, rank=rank)
    before, after = npt_signature(rho, lam)
    # inertia is kept by the congruence, so exact zeros stay ambiguous in floating point
    if abs(before) < PSD_TOLERANCE:
        return True
    return bool(np.sign(before) == np.sign(after))


def _multimode_instance(seed, i, lam):
    rng = _rng(seed, "multimode_identity", i)
    cutoffs = (MULTIMODE_CUTOFF,) * 3
    rho = random_density_matrix(cutoffs, rng)
    W = random_hermitian(cutoffs, rng)
    M = multimode_povm_element(rho, lam, (2, 1), "amplitude")
    lhs = M.expectation(witness_tilde(W, lam)).real
    c = povm_prefactor(3, lam, "amplitude")
    rhs = c * rho.expectation(W).real
    return abs(lhs - rhs) / max(abs(rhs), c)


def _positivity_instance(seed, i, cutoff, lam):
    rng = _rng(seed, "positivity", i)
    rho = random_density_matrix((cutoff, cutoff), rng)
    M = povm_element(rho, lam)
    eigenvalues = np.linalg.eigvalsh(M.matrix)
    positive = random_density_matrix((cutoff, cutoff), rng)
    tilde_min = witness_tilde(positive, lam).min_eigenvalue()
    return float(max(-eigenvalues[0], eigenvalues[-1] - 1.0, -tilde_min, 0.0))


# --- checks ---------------------------------------------------------------

def check_damping(lam: float, cutoff: int, energy_scale: Optional[float] = None) -> Dict[str, Any]:
    """Window edges, the 2/N asymptotic, and rejection exactly at lam <= e^{-1/N}"""
    scales = list(DAMPING_SCALES)
    if energy_scale is not None and energy_scale not in scales:
        scales.append(float(energy_scale))
    W = duan_fock_witness((cutoff, cutoff))

    windows_ok = True
    for N in scales:
        info = damping_factor(N)
        lower = info["window"][0]
        windows_ok = windows_ok and abs(info["factor"] - (1 - lower ** 2)) < 1e-12
        damped = energy_scale_witness(W, N)
        try:
            witness_tilde(damped, lower, energy_scale=N)
            windows_ok = False
        except TruncationError:
            pass
        inside = lower + 0.5 * (1 - lower)
        witness_tilde(damped, inside, energy_scale=N)

    asymptotic = damping_factor(100.0)["factor"]
    error = abs(asymptotic - 2.0 / 100.0) / (2.0 / 100.0)
    return _check("damping_window", [error], DAMPING_TOLERANCE, passed=windows_ok and error <= DAMPING_TOLERANCE,
                  scales=scales)


def convergence_residuals(lam: float, cutoffs=CONVERGENCE_CUTOFFS, r: float = CONVERGENCE_R) -> List[float]:
    """
    |Tr[M W~] - c (e^{-2r} - 1)| for a truncated TMSV and the balanced Duan
    witness, one residual per cutoff
    """
    exact = povm_prefactor(2, lam) * (np.exp(-2 * r) - 1.0)
    residuals = []
    for d in cutoffs:
        M = povm_element(tmsv_density(r, d), lam)
        W_t = witness_tilde(duan_fock_witness((d, d)), lam)
        residuals.append(float(abs(M.expectation(W_t).real - exact)))
    return residuals


def check_convergence(lam: float) -> Dict[str, Any]:
    residuals = convergence_residuals(lam)
    deficits = [tmsv_density(CONVERGENCE_R, d).truncation_deficit for d in CONVERGENCE_CUTOFFS]
    ratios = [b / a for a, b in zip(residuals, residuals[1:]) if a > 0]
    worst = max(ratios) if ratios else 0.0
    return _check("truncation_convergence", [worst], CONVERGENCE_SLACK,
                  cutoffs=list(CONVERGENCE_CUTOFFS), residuals=residuals, tmsv_deficits=deficits)


def check_tomography(lam: float, r: float = CONVERGENCE_R) -> Dict[str, Any]:
    """Noiseless round trip at cutoff 3 on a polar 8x8 input grid per side"""
    d = TOMOGRAPHY_CUTOFF
    M = povm_element(tmsv_density(r, d), lam)
    inputs = polar_input_grid(8, 8, 2.0)
    grid = grid_probabilities(M, inputs, inputs)
    result = reconstruct_povm(grid, d)
    frobenius = float(np.linalg.norm(result.operator.matrix - M.matrix))
    witness_value = result.operator.expectation(witness_tilde(duan_fock_witness((d, d)), lam)).real
    passed = frobenius <= TOMOGRAPHY_TOLERANCE and witness_value < 0
    return _check("tomography_round_trip", [frobenius], TOMOGRAPHY_TOLERANCE, passed=passed,
                  witness_value=float(witness_value), **result.to_dict())


def run_suite(cutoff: int = 8, instances: int = 20, lam: float = 0.5, seed: int = 0, tomography: bool = False,
              energy_scale: Optional[float] = None, n_jobs: int = 1) -> Dict[str, Any]:
    if cutoff < 2:
        raise FockError(f"cutoff must be >= 2, got {cutoff}")
    if instances < 1:
        raise FockError(f"instances must be >= 1, got {instances}")
    if energy_scale is not None:
        # rejects lam outside (e^{-1/N}, 1) before any work
        witness_tilde(energy_scale_witness(duan_fock_witness((cutoff, cutoff)), energy_scale), lam, energy_scale)
    start_time = time.time()

    warnings = []
    suggested = recommended_cutoff(lam)
    deficit = tmsv_truncation_deficit(np.arctanh(lam), cutoff)
    if cutoff < suggested:
        message = f"cutoff {cutoff} is below the recommended {suggested} for lambda={lam}"
        logger.warning(message)
        warnings.append(message)

    parallel = Parallel(n_jobs=n_jobs)
    checks = []

    errors = parallel(delayed(_bruteforce_instance)(seed, i, cutoff, lam) for i in range(instances))
    checks.append(_check("bruteforce_equivalence", errors, BRUTEFORCE_TOLERANCE))

    errors = parallel(delayed(_trace_identity_instance)(seed, i, cutoff, lam) for i in range(instances))
    checks.append(_check("trace_identity", errors, TRACE_TOLERANCE))

    reports = parallel(delayed(_separable_instance)(seed, i, cutoff, lam) for i in range(instances))
    checks.append(_check("separable_transform", [rep["max_error"] for rep in reports], SEPARABLE_TOLERANCE,
                         passed=all(rep["passed"] for rep in reports)))

    agreements = parallel(delayed(_npt_instance)(seed, i, lam) for i in range(instances))
    mismatches = float(len(agreements) - sum(agreements))
    checks.append(_check("npt_preservation", [mismatches], 0.0))

    errors = parallel(delayed(_multimode_instance)(seed, i, lam) for i in range(instances))
    checks.append(_check("multimode_identity", errors, TRACE_TOLERANCE))

    errors = parallel(delayed(_positivity_instance)(seed, i, cutoff, lam) for i in range(instances))
    checks.append(_check("positivity", errors, PSD_TOLERANCE))

    checks.append(check_damping(lam, cutoff, energy_scale))
    checks.append(check_convergence(lam))

    if tomography:
        checks.append(check_tomography(lam))

    passed = all(c["passed"] for c in checks)
    elapsed = time.time() - start_time
    logger.info(f"Fock verification {'passed' if passed else 'FAILED'}: {sum(c['passed'] for c in checks)}/"
                f"{len(checks)} checks in {elapsed:.3f}s")
    return {
        "passed": passed,
        "checks": checks,
        "config": {
            "cutoff": cutoff,
            "instances": instances,
            "lambda": lam,
            "seed": seed,
            "tomography": tomography,
            "energy_scale": energy_scale,
        },
        "recommended_cutoff": suggested,
        "tmsv_truncation_deficit": deficit,
        "warnings": warnings,
    }


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    report = run_suite()
    print(json.dumps(to_jsonable(report), indent=2))
    sys.exit(0 if report["passed"] else 3)
