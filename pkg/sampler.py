"""
Monte Carlo rounds of the coherent-state MDI protocol

Each side mixes its coherent input with its half of rho_AB on a balanced
beam splitter and homodynes x on the sum port and p on the difference port.
The four outcomes commute, so their joint law given (alpha, beta) is an
exact 4-dimensional Gaussian whose mean is linear in the amplitudes.
"""

import logging
import math
import time
from typing import Dict, Any, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import sqrtm

from gaussian_core import (
    GaussianState,
    InvalidParameterError,
    beam_splitter_map,
    local_map,
    apply_symplectic,
    vacuum,
    tensor,
)
from priors import PriorSpec, inverse_cdf_table
from witness import (
    WitnessSpec,
    mdi_score_from_samples,
    mdi_score_terms,
    DEFAULT_JACKKNIFE_BLOCKS,
    DEFAULT_VERDICT_SIGMAS,
)
from artifacts import write_csv, write_json

logger = logging.getLogger(__name__)

SAMPLE_COLUMNS = ["trial", "alpha_x", "alpha_p", "beta_x", "beta_p", "a1", "a2", "b1", "b2"]
OUTCOME_COLUMNS = ["a1", "a2", "b1", "b2"]
SCHEMES = ("paper-optimal", "separable-heterodyne")
CHUNK_SIZE = 65536
# Var of sqrt2 * (one heterodyne port) for a coherent input
HETERODYNE_VARIANCE = 0.5

# modes of the joint state: [alpha, A, B, beta]
# a1 = x on the (alpha, A) sum port, a2 = p on its difference port, same for beta/B
OUTCOME_INDICES = [0, 3, 6, 5]
AMPLITUDE_INDICES = [0, 1, 6, 7]


class SamplingError(ArithmeticError):
    """Raised when the outcome covariance cannot be factorized or outcomes are not finite"""


class MdiSample(NamedTuple):
    alpha_x: float
    alpha_p: float
    beta_x: float
    beta_p: float
    a1: float
    a2: float
    b1: float
    b2: float


class RngStream:
    """Counter-based stream: identical (seed, stream) gives an identical sequence"""

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or seed >= 2 ** 64:
            raise InvalidParameterError(f"Seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.stream = int(stream)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(self.stream,))))


class MeasurementScheme:
    """
    How the measuring parties turn their inputs into (a1, a2, b1, b2)

    offsets are the known means (<x_A>, <p_A>, <x_B>, <p_B>) of the state
    after orientation; orientation holds optional 2x2 local symplectic blocks
    applied to rho_AB before mixing.
    """

    def __init__(self, offsets: Sequence[float] = (0.0, 0.0, 0.0, 0.0), variant: str = "paper-optimal",
                 orientation: Optional[Dict[int, Any]] = None):
        offsets = np.asarray(offsets, dtype=float)
        if offsets.shape != (4,) or not np.all(np.isfinite(offsets)):
            raise InvalidParameterError(f"Offsets must be 4 finite numbers, got {offsets}")
        if variant not in SCHEMES:
            raise InvalidParameterError(f"Unknown measurement scheme '{variant}', expected one of {SCHEMES}")
        self.offsets = offsets
        self.variant = variant
        self.orientation = {int(m): np.asarray(b, dtype=float) for m, b in (orientation or {}).items()}

    @classmethod
    def from_state(cls, state: GaussianState, variant: str = "paper-optimal",
                   orientation: Optional[Dict[int, Any]] = None) -> "MeasurementScheme":
        scheme = cls(variant=variant, orientation=orientation)
        scheme.offsets = np.asarray(scheme.oriented(state).mean, dtype=float)
        return scheme

    @classmethod
    def from_witness(cls, state: GaussianState, spec: WitnessSpec) -> "MeasurementScheme":
        return cls.from_state(state, orientation=spec.orientation)

    def oriented(self, state: GaussianState) -> GaussianState:
        if not self.orientation:
            return state
        return apply_symplectic(state, local_map(state.n_modes, self.orientation))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "variant": self.variant,
            "offsets": self.offsets.tolist(),
            "orientation": {str(m): b.tolist() for m, b in self.orientation.items()},
        }


class OutcomeLaw:
    """outcomes | (alpha, beta) ~ N(gain @ amplitudes + constant, cov)"""

    def __init__(self, gain: np.ndarray, constant: np.ndarray, cov: np.ndarray):
        self.gain = gain
        self.constant = constant
        self.cov = cov
        root = sqrtm(cov)
        if np.max(np.abs(np.imag(root))) > 1e-10 or not np.all(np.isfinite(root)):
            raise SamplingError("Outcome covariance could not be factorized")
        self.sqrt_cov = np.real(root)

    def sample(self, amplitudes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """amplitudes: (n, 4) array of (alpha_x, alpha_p, beta_x, beta_p)"""
        noise = rng.standard_normal(size=(amplitudes.shape[0], 4))
        outcomes = amplitudes @ self.gain.T + self.constant + noise @ self.sqrt_cov.T
        if not np.all(np.isfinite(outcomes)):
            raise SamplingError("Non-finite outcomes sampled")
        return outcomes


def outcome_law(rho_AB: GaussianState, scheme: MeasurementScheme) -> OutcomeLaw:
    """Exact conditional Gaussian law of (a1, a2, b1, b2) for the beam-splitter scheme"""
    if rho_AB.n_modes != 2:
        raise InvalidParameterError(f"rho_AB must have 2 modes, got {rho_AB.n_modes}")
    rho = scheme.oriented(rho_AB)

    joint = tensor(tensor(vacuum(1), rho), vacuum(1))
    smap = beam_splitter_map(4, 3, 2).compose(beam_splitter_map(4, 0, 1))
    S = smap.matrix[OUTCOME_INDICES]

    x_a, p_a, x_b, p_b = scheme.offsets
    correction = np.array([-x_a, p_a, -x_b, p_b]) / np.sqrt(2.0)

    gain = S[:, AMPLITUDE_INDICES]
    constant = S @ joint.mean + correction
    cov = apply_symplectic(joint, smap).cov[np.ix_(OUTCOME_INDICES, OUTCOME_INDICES)]
    return OutcomeLaw(gain, constant, cov)


# --- priors ---------------------------------------------------------------

def smooth_box_sample(l: float, delta: float, rng: np.random.Generator, size) -> np.ndarray:
    """Inverse-CDF sampling from the tabulated smooth-box CDF"""
    cdf, support = inverse_cdf_table(float(l), float(delta))
    return np.interp(rng.random(size), cdf, support)


def draw_prior(prior: PriorSpec, rng: np.random.Generator, size: Optional[int] = None):
    """(alpha_x, alpha_p); scalars when size is None, arrays otherwise"""
    n = 1 if size is None else size
    if prior.kind == "gaussian":
        alpha = rng.normal(scale=prior.sigma / np.sqrt(2.0), size=(2, n))
    elif prior.kind == "smooth_box":
        alpha = smooth_box_sample(prior.l, prior.delta, rng, (2, n))
    else:
        alpha = np.array([[prior.alpha_x] * n, [prior.alpha_p] * n], dtype=float)
    if size is None:
        return float(alpha[0, 0]), float(alpha[1, 0])
    return alpha[0], alpha[1]


def _draw_amplitudes(prior, rng, n):
    ax, ap = draw_prior(prior, rng, n)
    bx, bp = draw_prior(prior, rng, n)
    return np.column_stack([ax, ap, bx, bp])


def _heterodyne_estimates(amplitudes: np.ndarray, prior: PriorSpec, rng: np.random.Generator) -> np.ndarray:
    """
    Each side heterodynes its own input and reports the linear posterior-mean
    estimate of each quadrature, divided by sqrt2 to land in the a/b slots
    """
    v = prior.variance()
    readout = amplitudes + rng.normal(scale=np.sqrt(HETERODYNE_VARIANCE), size=amplitudes.shape)
    estimates = v / (v + HETERODYNE_VARIANCE) * readout
    return estimates / np.sqrt(2.0)


# --- rounds ---------------------------------------------------------------

def _to_sample(amplitudes, outcomes):
    sample = MdiSample(*[float(v) for v in np.concatenate([amplitudes, outcomes])])
    if not all(np.isfinite(sample)):
        raise SamplingError(f"Non-finite sample {sample}")
    return sample


def mdi_round(rho_AB: GaussianState, prior: PriorSpec, scheme: MeasurementScheme,
              rng: np.random.Generator) -> MdiSample:
    """One protocol round with the given scheme"""
    if scheme.variant == "separable-heterodyne":
        if rho_AB.n_modes != 2:
            raise InvalidParameterError(f"rho_AB must have 2 modes, got {rho_AB.n_modes}")
        return separable_adversary_round(prior, rng)
    law = outcome_law(rho_AB, scheme)
    amplitudes = _draw_amplitudes(prior, rng, 1)
    return _to_sample(amplitudes[0], law.sample(amplitudes, rng)[0])


def separable_adversary_round(prior: PriorSpec, rng: np.random.Generator) -> MdiSample:
    """Optimal product strategy: independent heterodyne estimation on each side"""
    amplitudes = _draw_amplitudes(prior, rng, 1)
    return _to_sample(amplitudes[0], _heterodyne_estimates(amplitudes, prior, rng)[0])


# --- batches --------------------------------------------------------------

class BatchResult:
    """Samples, summary moments and the chunk layout of one batch"""

    def __init__(self, samples: pd.DataFrame, summary: Dict[str, Any], n_chunks: int):
        self.samples = samples
        self.summary = summary
        self.n_chunks = n_chunks

    def write_samples_csv(self, path: str) -> str:
        return write_csv(self.samples, path)

    def summary_to_json(self, path: str) -> str:
        return write_json(self.summary, path)


def _sample_chunk(chunk: int, n: int, seed: int, law: Optional[OutcomeLaw], prior: PriorSpec) -> np.ndarray:
    rng = RngStream(seed, chunk).generator()
    amplitudes = _draw_amplitudes(prior, rng, n)
    if law is None:
        outcomes = _heterodyne_estimates(amplitudes, prior, rng)
    else:
        outcomes = law.sample(amplitudes, rng)
    trials = np.arange(chunk * CHUNK_SIZE, chunk * CHUNK_SIZE + n, dtype=float)
    return np.column_stack([trials, amplitudes, outcomes])


def summarize(samples: pd.DataFrame, kappa_grid: Sequence[float], prior: Optional[PriorSpec] = None,
              n_blocks: int = DEFAULT_JACKKNIFE_BLOCKS, n_sigma: float = DEFAULT_VERDICT_SIGMAS) -> Dict[str, Any]:
    """Count, per-slot means and the (U, V) second moments for each kappa"""
    summary = {
        "count": int(len(samples)),
        "means": {col: float(samples[col].mean()) for col in SAMPLE_COLUMNS[1:]},
        "kappa": [],
        "verdict_sigmas": float(n_sigma),
    }
    # a point prior has no separable bound beyond the sigma -> inf limit
    bound_prior = prior if prior is not None and prior.kind != "point" else None
    for kappa in kappa_grid:
        report = mdi_score_from_samples(samples, WitnessSpec(kappa), prior=bound_prior, n_blocks=n_blocks,
                                        n_sigma=n_sigma)
        U, V = mdi_score_terms(samples, kappa)
        summary["kappa"].append({
            "kappa": float(kappa),
            "mean_u2": float(np.mean(U ** 2)),
            "mean_v2": float(np.mean(V ** 2)),
            "score": report.score,
            "std_error": report.std_error,
            "bound": report.bound,
            "verdict": report.verdict,
        })
    return summary


def run_batch(trials: int, rho_AB: GaussianState, prior: PriorSpec, scheme: MeasurementScheme,
              seed: int, kappa_grid: Sequence[float] = (1.0,), n_jobs: int = 1,
              n_sigma: float = DEFAULT_VERDICT_SIGMAS) -> BatchResult:
    """
    Deterministic batch of protocol rounds

    Trials are cut into chunks of CHUNK_SIZE, chunk c drawing from
    RngStream(seed, c), so the output does not depend on n_jobs.
    """
    if not isinstance(trials, (int, np.integer)) or trials < 1:
        raise InvalidParameterError(f"trials must be a positive integer, got {trials}")
    if rho_AB.n_modes != 2:
        raise InvalidParameterError(f"rho_AB must have 2 modes, got {rho_AB.n_modes}")
    start_time = time.time()

    law = None if scheme.variant == "separable-heterodyne" else outcome_law(rho_AB, scheme)
    n_chunks = math.ceil(trials / CHUNK_SIZE)
    sizes = [min(CHUNK_SIZE, trials - c * CHUNK_SIZE) for c in range(n_chunks)]

    chunks = Parallel(n_jobs=n_jobs)(
        delayed(_sample_chunk)(c, n, seed, law, prior) for c, n in enumerate(sizes)
    )
    samples = pd.DataFrame(np.vstack(chunks), columns=SAMPLE_COLUMNS)
    samples["trial"] = samples["trial"].astype(np.int64)
    logger.debug(f"Sampled {trials} rounds in {n_chunks} chunks")

    summary = summarize(samples, kappa_grid, prior, n_sigma=n_sigma)
    summary.update({
        "seed": int(seed),
        "trials": int(trials),
        "chunk_size": CHUNK_SIZE,
        "prior": prior.to_dict(),
        "scheme": scheme.to_dict(),
    })

    logger.info(f"Batch of {trials} rounds ({scheme.variant}) in {time.time() - start_time:.3f}s")
    return BatchResult(samples, summary, n_chunks)
