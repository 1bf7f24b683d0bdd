"""
Duan witness EW_kappa, the MDI score MDIEW_kappa and their separable bounds

EW_kappa    = Var(kappa x_A - x_B/kappa) + Var(kappa p_A + p_B/kappa)
MDIEW_kappa = <U_kappa^2> + <V_kappa^2>, with
U_kappa = kappa a1 - b1/kappa - (kappa alpha_x - beta_x/kappa)/sqrt2
V_kappa = kappa a2 + b2/kappa - (kappa alpha_p + beta_p/kappa)/sqrt2
"""

import logging
import time
from dataclasses import dataclass, asdict
from typing import Dict, Any, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import sqrtm
from scipy.optimize import minimize, minimize_scalar

from gaussian_core import (
    GaussianState,
    local_map,
    apply_symplectic,
    is_ppt,
    ppt_min_eigenvalue,
)
from priors import PriorSpec, bayesian_crb_sum, separable_mdi_bound

logger = logging.getLogger(__name__)

VERDICT_CERTIFIED = "entangled-certified"
VERDICT_INCONCLUSIVE = "inconclusive"
DEFAULT_VERDICT_SIGMAS = 3.0
DEFAULT_JACKKNIFE_BLOCKS = 256

LOG_KAPPA_RANGE = (-3.0, 3.0)
KAPPA_TOLERANCE = 1e-8
KAPPA_GRID_POINTS = 61
ORIENTATION_GRID = 64
# below this EW - bound counts as a violation
VIOLATION_TOLERANCE = 1e-12


class WitnessParameterError(ValueError):
    """Raised for kappa <= 0, sigma <= 0 or loss fractions outside the valid range"""


def _check_kappa(kappa: float) -> float:
    if kappa is None or not np.isfinite(kappa) or kappa <= 0:
        raise WitnessParameterError(f"kappa must be positive and finite, got {kappa}")
    return float(kappa)


def _check_eta(name: str, eta: float) -> float:
    if eta is None or not np.isfinite(eta) or eta < 0 or eta > 1:
        raise WitnessParameterError(f"{name} must lie in [0, 1], got {eta}")
    return float(eta)


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


class WitnessSpec:
    """kappa plus optional 2x2 local symplectic blocks selecting the measured quadratures"""

    def __init__(self, kappa: float = 1.0, orientation: Optional[Dict[int, Any]] = None):
        self.kappa = _check_kappa(kappa)
        self.orientation = {}
        for mode, block in (orientation or {}).items():
            block = np.asarray(block, dtype=float)
            if int(mode) not in (0, 1):
                raise WitnessParameterError(f"Orientation mode must be 0 (A) or 1 (B), got {mode}")
            if block.shape != (2, 2) or abs(np.linalg.det(block) - 1.0) > 1e-10:
                raise WitnessParameterError(f"Orientation block for mode {mode} is not symplectic")
            self.orientation[int(mode)] = block

    def oriented(self, state: GaussianState) -> GaussianState:
        if not self.orientation:
            return state
        return apply_symplectic(state, local_map(state.n_modes, self.orientation))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kappa": self.kappa,
            "orientation": {str(m): b.tolist() for m, b in self.orientation.items()},
        }


class NoiseParams:
    """Loss fractions on A and B and the squeezing of the source TMSV"""

    def __init__(self, eta_a: float = 0.0, eta_b: float = 0.0, r: float = 0.0):
        self.eta_a = _check_eta("eta_A", eta_a)
        self.eta_b = _check_eta("eta_B", eta_b)
        if r is None or not np.isfinite(r):
            raise WitnessParameterError(f"Squeezing r must be finite, got {r}")
        self.r = float(r)

    def to_dict(self) -> Dict[str, Any]:
        return {"eta_a": self.eta_a, "eta_b": self.eta_b, "r": self.r}


@dataclass
class ScoreReport:
    score: float
    std_error: float
    bound: float
    kappa: float
    sigma: float
    verdict: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class WitnessOptimum:
    kappa: float
    orientation: Dict[int, np.ndarray]
    score: float
    ew: float
    bound: float
    ppt_entangled: bool
    stage: str
    flagged: bool = False

    @property
    def violated(self) -> bool:
        return self.score < -VIOLATION_TOLERANCE

    def spec(self) -> WitnessSpec:
        return WitnessSpec(self.kappa, self.orientation)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["orientation"] = {str(m): np.asarray(b).tolist() for m, b in self.orientation.items()}
        data["violated"] = self.violated
        return data


# --- bounds ---------------------------------------------------------------

def separable_bound_ew(kappa: float) -> float:
    kappa = _check_kappa(kappa)
    return (kappa ** 2 + kappa ** -2) / 2


def mdi_bound(kappa: float, sigma: Optional[float]) -> float:
    """Separable bound of the MDI score for a Gaussian prior; sigma=None or inf means no prior penalty"""
    if sigma is None:
        sigma = np.inf
    if np.isnan(sigma) or sigma <= 0:
        raise WitnessParameterError(f"sigma must be positive, got {sigma}")
    return separable_bound_ew(kappa) * bayesian_crb_sum(sigma)


def verdict(score: float, std_error: float, bound: float, n_sigma: float = DEFAULT_VERDICT_SIGMAS) -> str:
    if np.isfinite(std_error) and score + n_sigma * std_error < bound:
        return VERDICT_CERTIFIED
    return VERDICT_INCONCLUSIVE


def minimal_sigma(mdiew_value: float, kappa: float = 1.0) -> float:
    """Smallest Gaussian prior width whose bound exceeds the given MDI score"""
    bound = separable_bound_ew(kappa)
    if mdiew_value <= 0:
        return 0.0
    if mdiew_value >= bound:
        return float("inf")
    return float(np.sqrt(mdiew_value / (bound - mdiew_value)))


# --- Duan witness ---------------------------------------------------------

def ew_quadratic_form(cov: np.ndarray) -> Tuple[float, float, float]:
    """
    (P, Q, R) with EW_kappa = kappa^2 P + kappa^-2 Q + R

    P = Var x_A + Var p_A, Q = Var x_B + Var p_B,
    R = 2 (Cov(p_A, p_B) - Cov(x_A, x_B))
    """
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (4, 4):
        raise WitnessParameterError(f"Duan witness needs a two-mode covariance, got shape {cov.shape}")
    P = cov[0, 0] + cov[1, 1]
    Q = cov[2, 2] + cov[3, 3]
    R = 2.0 * (cov[1, 3] - cov[0, 2])
    return float(P), float(Q), float(R)


def duan_ew(state: GaussianState, spec: WitnessSpec) -> float:
    if state.n_modes != 2:
        raise WitnessParameterError(f"Duan witness needs a two-mode state, got {state.n_modes} modes")
    P, Q, R = ew_quadratic_form(spec.oriented(state).cov)
    k2 = spec.kappa ** 2
    return k2 * P + Q / k2 + R


def mdi_score_analytic(state: GaussianState, spec: WitnessSpec) -> float:
    """<MDIEW_kappa> = ((kappa^2 + kappa^-2)/2 + EW_kappa)/2 for offset-corrected outcomes"""
    return 0.5 * (separable_bound_ew(spec.kappa) + duan_ew(state, spec))


def noisy_tmsv_ew(params: NoiseParams, kappa: float) -> float:
    kappa = _check_kappa(kappa)
    ta = np.sqrt(1.0 - params.eta_a)
    tb = np.sqrt(1.0 - params.eta_b)
    return (
        0.5 * (kappa ** 2 * params.eta_a + params.eta_b / kappa ** 2)
        + np.exp(2 * params.r) / 4 * (kappa * ta - tb / kappa) ** 2
        + np.exp(-2 * params.r) / 4 * (kappa * ta + tb / kappa) ** 2
    )


def optimal_kappa(eta_a: float, eta_b: float) -> float:
    """kappa balancing kappa sqrt(1-eta_A) = sqrt(1-eta_B)/kappa"""
    eta_a = _check_eta("eta_A", eta_a)
    eta_b = _check_eta("eta_B", eta_b)
    if eta_a == 1.0 or eta_b == 1.0:
        raise WitnessParameterError(
            f"No finite balancing kappa with total loss (eta_A={eta_a}, eta_B={eta_b})"
        )
    return float(((1.0 - eta_b) / (1.0 - eta_a)) ** 0.25)


def asymptotic_mdi_score(eta_a: float, eta_b: float, kappa: Optional[float] = None) -> float:
    """
    Large-squeezing limit of the noisy-TMSV MDI score,
    (kappa^2 (1+eta_A) + kappa^-2 (1+eta_B))/4 for the balancing kappa.
    An unbalanced kappa diverges as e^{2r}.
    """
    if kappa is None:
        kappa = optimal_kappa(eta_a, eta_b)
    kappa = _check_kappa(kappa)
    mismatch = kappa * np.sqrt(1.0 - eta_a) - np.sqrt(1.0 - eta_b) / kappa
    if abs(mismatch) > 1e-12:
        return float("inf")
    return 0.25 * (kappa ** 2 * (1 + eta_a) + (1 + eta_b) / kappa ** 2)


# --- Monte Carlo score ----------------------------------------------------

def mdi_score_terms(samples: pd.DataFrame, kappa: float) -> Tuple[np.ndarray, np.ndarray]:
    kappa = _check_kappa(kappa)
    a1, a2 = np.asarray(samples["a1"]), np.asarray(samples["a2"])
    b1, b2 = np.asarray(samples["b1"]), np.asarray(samples["b2"])
    ax, ap = np.asarray(samples["alpha_x"]), np.asarray(samples["alpha_p"])
    bx, bp = np.asarray(samples["beta_x"]), np.asarray(samples["beta_p"])
    U = kappa * a1 - b1 / kappa - (kappa * ax - bx / kappa) / np.sqrt(2.0)
    V = kappa * a2 + b2 / kappa - (kappa * ap + bp / kappa) / np.sqrt(2.0)
    return U, V


def jackknife_mean(values: np.ndarray, n_blocks: int = DEFAULT_JACKKNIFE_BLOCKS) -> Tuple[float, float]:
    """Delete-one-block jackknife over contiguous blocks; error is inf below two values"""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n == 0:
        raise WitnessParameterError("Cannot average an empty sample")
    mean = float(values.mean())
    if n < 2:
        return mean, float("inf")

    blocks = np.array_split(values, min(n_blocks, n))
    sums = np.array([b.sum() for b in blocks])
    counts = np.array([b.shape[0] for b in blocks])
    leave_one_out = (sums.sum() - sums) / (n - counts)
    B = len(blocks)
    std_error = np.sqrt((B - 1) / B * np.sum((leave_one_out - leave_one_out.mean()) ** 2))
    return mean, float(std_error)


def mdi_score_from_samples(samples: pd.DataFrame, spec: WitnessSpec, sigma: Optional[float] = None,
                           prior: Optional[PriorSpec] = None, n_sigma: float = DEFAULT_VERDICT_SIGMAS,
                           n_blocks: int = DEFAULT_JACKKNIFE_BLOCKS) -> ScoreReport:
    """
    Mean of U_kappa^2 + V_kappa^2 with jackknife error

    The bound comes from `prior` when given (any supported shape), otherwise
    from the Gaussian width `sigma`.
    """
    if len(samples) == 0:
        raise WitnessParameterError("No samples to score")
    U, V = mdi_score_terms(samples, spec.kappa)
    score, std_error = jackknife_mean(U ** 2 + V ** 2, n_blocks)

    if prior is not None:
        bound = separable_mdi_bound(spec.kappa, prior)
        if prior.kind == "gaussian":
            sigma = prior.sigma
    else:
        bound = mdi_bound(spec.kappa, sigma)
    if sigma is None:
        sigma = float("inf")

    return ScoreReport(
        score=score,
        std_error=std_error,
        bound=bound,
        kappa=spec.kappa,
        sigma=float(sigma),
        verdict=verdict(score, std_error, bound, n_sigma),
    )


# --- loss tolerance contours ----------------------------------------------

def contour_value(r: float, eta: float) -> float:
    """MDI score at kappa=1 for symmetric losses, (1 + eta + (1-eta) e^{-2r})/2"""
    return 0.5 * (1.0 + eta + (1.0 - eta) * np.exp(-2 * r))


def boundary_eta(sigma: float, r: float) -> float:
    """Loss fraction at which the kappa=1 score meets the sigma bound; nan at r=0"""
    b = bayesian_crb_sum(sigma)
    e = np.exp(-2 * r)
    if 1.0 - e <= 0:
        return float("nan")
    return float((2 * b - 1 - e) / (1 - e))


def boundary_r(sigma: float, eta: float) -> float:
    """Squeezing needed to certify at loss eta; inf when no squeezing suffices"""
    b = bayesian_crb_sum(sigma)
    if eta >= 1.0 or 2 * b - 1 - eta <= 0:
        return float("inf")
    return float(-0.5 * np.log((2 * b - 1 - eta) / (1 - eta)))


def _contour_row(r: float, eta_grid: Sequence[float]) -> List[Tuple[float, float, float]]:
    rows = []
    for eta in eta_grid:
        ew = noisy_tmsv_ew(NoiseParams(eta, eta, r), 1.0)
        rows.append((float(r), float(eta), 0.5 * (separable_bound_ew(1.0) + ew)))
    return rows


def contour_scan(r_grid: Sequence[float], eta_grid: Sequence[float], sigma_list: Sequence[float],
                 n_jobs: int = 1) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    kappa=1 MDI scores over (r, eta) for symmetric losses, plus the curves
    where the score equals each sigma bound

    Returns (values with columns r, eta, mdiew_value;
             boundaries with columns sigma, eta, r_star).
    """
    start_time = time.time()
    rows = Parallel(n_jobs=n_jobs)(delayed(_contour_row)(r, list(eta_grid)) for r in r_grid)
    values = pd.DataFrame([row for chunk in rows for row in chunk], columns=["r", "eta", "mdiew_value"])

    boundary_rows = []
    for sigma in sigma_list:
        for eta in eta_grid:
            r_star = boundary_r(sigma, eta)
            if np.isfinite(r_star):
                boundary_rows.append((float(sigma), float(eta), r_star))
    boundaries = pd.DataFrame(boundary_rows, columns=["sigma", "eta", "r_star"])

    logger.info(
        f"Contour scan of {len(values)} points and {len(sigma_list)} boundaries "
        f"in {time.time() - start_time:.3f}s"
    )
    return values, boundaries


# --- witness search -------------------------------------------------------

def _score(cov, log_kappa):
    """EW_kappa - (kappa^2 + kappa^-2)/2"""
    P, Q, R = ew_quadratic_form(cov)
    k2 = np.exp(2 * log_kappa)
    return k2 * (P - 0.5) + (Q - 0.5) / k2 + R


def _best_log_kappa(cov: np.ndarray, log_kappa_range: Tuple[float, float]) -> float:
    """Golden-section search on log kappa, bracketed from a coarse grid so it stays in range"""
    grid = np.linspace(log_kappa_range[0], log_kappa_range[1], KAPPA_GRID_POINTS)
    values = np.array([_score(cov, t) for t in grid])
    i = int(np.argmin(values))
    if i == 0 or i == len(grid) - 1:
        return float(grid[i])
    try:
        result = minimize_scalar(
            lambda t: _score(cov, t),
            bracket=(grid[i - 1], grid[i], grid[i + 1]),
            method="golden",
            options={"xtol": KAPPA_TOLERANCE},
        )
    except ValueError:
        # flat in kappa, any point of the cell is optimal
        return float(grid[i])
    return float(np.clip(result.x, grid[i - 1], grid[i + 1]))


def _transform(cov, block_a, block_b):
    L = np.zeros((4, 4))
    L[:2, :2] = block_a
    L[2:, 2:] = block_b
    return L @ cov @ L.T


def _cross_term(theta_a, theta_b, cross):
    C = _rotation(theta_a) @ cross @ _rotation(theta_b).T
    return 2.0 * (C[1, 1] - C[0, 0])


def _rotation_stage(cov, log_kappa_range, n_angles):
    # P and Q are rotation invariant, so the angles only act on the cross term R
    cross = cov[:2, 2:]
    angles = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    grid = np.array([[_cross_term(ta, tb, cross) for tb in angles] for ta in angles])
    ia, ib = np.unravel_index(np.argmin(grid), grid.shape)

    refined = minimize(
        lambda t: _cross_term(t[0], t[1], cross),
        x0=[angles[ia], angles[ib]],
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 2000},
    )
    theta_a, theta_b = refined.x if refined.fun <= grid[ia, ib] else (angles[ia], angles[ib])

    blocks = (_rotation(theta_a), _rotation(theta_b))
    rotated = _transform(cov, *blocks)
    log_kappa = _best_log_kappa(rotated, log_kappa_range)
    return log_kappa, blocks, _score(rotated, log_kappa)


def standard_form_blocks(cov: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Local symplectic blocks bringing a two-mode covariance to the form
    [[a,0,c1,0],[0,a,0,c2],[c1,0,b,0],[0,c2,0,b]] with c1 >= |c2|, c1*c2 <= 0 when entangled
    """
    blocks = []
    for k in range(2):
        local = cov[2 * k:2 * k + 2, 2 * k:2 * k + 2]
        normalized = local / np.sqrt(np.linalg.det(local))
        blocks.append(np.linalg.inv(np.real(sqrtm(normalized))))
    whitened = _transform(cov, *blocks)

    U, D, Vt = np.linalg.svd(whitened[:2, 2:])
    if np.linalg.det(U) < 0:
        U[:, 1] *= -1
    if np.linalg.det(Vt) < 0:
        Vt[1, :] *= -1
    block_a = U.T @ blocks[0]
    block_b = Vt @ blocks[1]

    C = (_transform(cov, block_a, block_b))[:2, 2:]
    if C[0, 0] < 0:
        # a pi rotation on B flips both correlations
        block_b = -block_b
    return block_a, block_b


def _squeezing_stage(cov, log_kappa_range):
    base_a, base_b = standard_form_blocks(cov)

    def blocks_for(params):
        s_a, s_b = params[0], params[1]
        return (
            np.diag([np.exp(s_a), np.exp(-s_a)]) @ base_a,
            np.diag([np.exp(s_b), np.exp(-s_b)]) @ base_b,
        )

    def objective(params):
        log_kappa = np.clip(params[2], *log_kappa_range)
        return _score(_transform(cov, *blocks_for(params)), log_kappa)

    best = None
    for start in [(0.0, 0.0), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5), (-0.5, -0.5)]:
        result = minimize(
            objective,
            x0=[start[0], start[1], 0.0],
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 20000, "maxfev": 40000},
        )
        if best is None or result.fun < best.fun:
            best = result

    log_kappa = float(np.clip(best.x[2], *log_kappa_range))
    return log_kappa, blocks_for(best.x), float(best.fun)


def optimize_witness(state: GaussianState, kappa_range: Tuple[float, float] = LOG_KAPPA_RANGE,
                     n_angles: int = ORIENTATION_GRID) -> WitnessOptimum:
    """
    Minimize EW_kappa - (kappa^2 + kappa^-2)/2 over kappa and local quadrature choice

    kappa_range is in log kappa. Phase rotations are tried first (grid, then
    Nelder-Mead); if that finds no violation for a PPT-entangled state, the
    state is reduced to standard form and local squeezings are optimized too.
    """
    if state.n_modes != 2:
        raise WitnessParameterError(f"Witness search needs a two-mode state, got {state.n_modes} modes")
    start_time = time.time()
    cov = np.asarray(state.cov)
    entangled = not is_ppt(state)

    log_kappa, blocks, score = _rotation_stage(cov, kappa_range, n_angles)
    stage = "rotation"

    if entangled and score >= -VIOLATION_TOLERANCE:
        logger.debug(f"Rotation search found no violation (score {score:.3e}), trying standard form")
        log_kappa_sq, blocks_sq, score_sq = _squeezing_stage(cov, kappa_range)
        if score_sq < score:
            log_kappa, blocks, score = log_kappa_sq, blocks_sq, score_sq
            stage = "standard-form"

    kappa = float(np.exp(log_kappa))
    bound = separable_bound_ew(kappa)
    flagged = entangled and score >= -VIOLATION_TOLERANCE
    if flagged:
        logger.warning(
            f"No witness violation found for a PPT-entangled state "
            f"(min PT symplectic eigenvalue {ppt_min_eigenvalue(state):.6g}, best score {score:.3e})"
        )

    logger.debug(f"Witness search ({stage}) finished in {time.time() - start_time:.3f}s")
    return WitnessOptimum(
        kappa=kappa,
        orientation={0: blocks[0], 1: blocks[1]},
        score=float(score),
        ew=float(score + bound),
        bound=bound,
        ppt_entangled=entangled,
        stage=stage,
        flagged=flagged,
    )
