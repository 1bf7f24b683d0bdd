"""
Truncated Fock-space laboratory for the MDI reduction

Projecting a coherent input and one half of rho onto a two-mode squeezed
vacuum (lam = tanh r) on each side yields the POVM element

    M = c(lam) lam^n rho^T lam^n,

with the transpose in the Fock basis. Any witness W of rho maps to
W~ = lam^-n W^T lam^-n with Tr[M W~] = c(lam) Tr[rho W].
"""

import logging
import time
from typing import Dict, Any, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.linear_model import Ridge

from fock_operators import (
    FockError,
    FockOperator,
    annihilation,
    embed_single_mode,
    number_diag,
    lambda_power_diag,
    coherent_vector,
    coherent_deficit,
    squeeze_operator,
    beam_splitter_unitary,
    mix_product_terms,
)

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("projector", "amplitude")
OVERFLOW_LIMIT = 1e12
COHERENT_DEFICIT_LIMIT = 1e-10
TMSV_DEFICIT_LIMIT = 1e-12
CONDITION_LIMIT = 1e12
RIDGE_WEIGHT = 1e-10
BRUTEFORCE_TOLERANCE = 1e-8
SEPARABLE_TOLERANCE = 1e-10
PSD_TOLERANCE = 1e-10
GRID_COLUMNS = ["alpha_re", "alpha_im", "beta_re", "beta_im", "p11"]


class TruncationError(FockError):
    """Raised when truncation makes a construction unreliable"""


class ReconstructionError(FockError):
    """Raised for underdetermined or ill-conditioned tomography"""


def _check_lambda(lam: float) -> float:
    if lam is None or not np.isfinite(lam) or lam <= 0 or lam >= 1:
        raise FockError(f"lambda must lie in (0, 1), got {lam}")
    return float(lam)


def povm_prefactor(n_modes: int, lam: float, normalization: str = "amplitude") -> float:
    """
    projector: (1 - lam^2) per mode, what the explicit projection gives
    amplitude: (1 - lam^2)^(1/2) per mode, i.e. (1 - lam^2) for a pair
    """
    if normalization not in NORMALIZATIONS:
        raise FockError(f"Unknown normalization '{normalization}', expected one of {NORMALIZATIONS}")
    exponent = n_modes if normalization == "projector" else n_modes / 2
    return (1.0 - lam ** 2) ** exponent


# --- TMSV -----------------------------------------------------------------

def tmsv_truncation_deficit(r: float, cutoff: int) -> float:
    """Norm lost when the Schmidt series is cut at `cutoff` levels, tanh(r)^(2 cutoff)"""
    return float(np.tanh(abs(r)) ** (2 * cutoff))


def truncated_tmsv(r: float, cutoff: int, renormalize: bool = True) -> Tuple[np.ndarray, float]:
    """sqrt(1 - lam^2) sum_i lam^i |ii> on cutoff x cutoff levels, and the norm the cut dropped"""
    if cutoff < 1:
        raise FockError(f"cutoff must be >= 1, got {cutoff}")
    lam = np.tanh(r)
    vector = np.zeros(cutoff * cutoff, dtype=complex)
    levels = np.arange(cutoff)
    vector[levels * cutoff + levels] = np.sqrt(1 - lam ** 2) * lam ** levels
    if renormalize:
        vector /= np.linalg.norm(vector)
    return vector, tmsv_truncation_deficit(r, cutoff)


def tmsv_vector(r: float, cutoff: int, renormalize: bool = True) -> np.ndarray:
    return truncated_tmsv(r, cutoff, renormalize)[0]


def tmsv_density(r: float, cutoff: int) -> FockOperator:
    """Renormalized TMSV projector; the dropped norm is kept as `truncation_deficit`"""
    v, deficit = truncated_tmsv(r, cutoff)
    rho = FockOperator(np.outer(v, v.conj()), (cutoff, cutoff))
    rho.truncation_deficit = deficit
    if deficit > TMSV_DEFICIT_LIMIT:
        logger.debug(f"TMSV r={r} at cutoff {cutoff} drops {deficit:.3e} of its norm")
    return rho


def tmsv_from_squeezers(r: float, cutoff: int, work_cutoff: int = 30) -> np.ndarray:
    """
    Opposite single-mode squeezed vacua mixed on a balanced beam splitter,
    built with matrix exponentials on work_cutoff levels and cut to `cutoff`
    """
    if work_cutoff < cutoff:
        raise FockError(f"work_cutoff {work_cutoff} must be >= cutoff {cutoff}")
    vac = np.zeros(work_cutoff, dtype=complex)
    vac[0] = 1.0
    # x -> e^r x on mode 1 is S(xi) with xi = -r
    mode_1 = squeeze_operator(-r, work_cutoff) @ vac
    mode_2 = squeeze_operator(r, work_cutoff) @ vac
    joint = beam_splitter_unitary(work_cutoff) @ np.kron(mode_1, mode_2)
    return joint.reshape(work_cutoff, work_cutoff)[:cutoff, :cutoff].reshape(-1)


# --- POVM element and witness transform -----------------------------------

def _conjugate_transpose(op: FockOperator, diag: np.ndarray) -> np.ndarray:
    """diag @ op^T @ diag"""
    return diag[:, None] * op.matrix.T * diag[None, :]


def povm_element(rho: FockOperator, lam: float, normalization: str = "amplitude") -> FockOperator:
    lam = _check_lambda(lam)
    weights = lambda_power_diag(rho.mode_cutoffs, lam)
    prefactor = povm_prefactor(rho.n_modes, lam, normalization)
    return FockOperator(prefactor * _conjugate_transpose(rho, weights), rho.mode_cutoffs)


def multimode_povm_element(rho: FockOperator, lam: float, partition: Sequence[int] = (2, 1),
                           normalization: str = "amplitude") -> FockOperator:
    """Per-mode lam^n conjugation for parties holding `partition` modes each"""
    if sum(partition) != rho.n_modes or any(p < 1 for p in partition):
        raise FockError(f"Partition {list(partition)} does not match a {rho.n_modes}-mode state")
    return povm_element(rho, lam, normalization)


def povm_element_bruteforce(rho: FockOperator, lam: float) -> FockOperator:
    """
    Tr_AB[(Phi_AA' x Phi_BB')(rho_AB x 1_A'B')] by explicit contraction,
    with the un-renormalized truncated TMSV on each side
    """
    lam = _check_lambda(lam)
    if rho.n_modes != 2 or rho.mode_cutoffs[0] != rho.mode_cutoffs[1]:
        raise FockError(f"Brute force needs two modes with equal cutoffs, got {rho.mode_cutoffs}")
    d = rho.mode_cutoffs[0]
    phi = tmsv_vector(np.arctanh(lam), d, renormalize=False).reshape(d, d)
    rho4 = rho.matrix.reshape(d, d, d, d)
    # M[a',b',c',e'] = sum phi[a,a'] conj(phi[c,c']) phi[b,b'] conj(phi[e,e']) rho[c,e,a,b]
    M = np.einsum("xp,zr,yq,ws,zwxy->pqrs", phi, phi.conj(), phi, phi.conj(), rho4, optimize=True)
    return FockOperator(M.reshape(d * d, d * d), rho.mode_cutoffs)


def witness_tilde(W: FockOperator, lam: float, energy_scale: Optional[float] = None) -> FockOperator:
    """
    lam^-n W^T lam^-n

    With energy_scale N the witness is taken to carry the e^{-n/N} damping of
    energy_scale_witness, and lam must lie in (e^{-1/N}, 1).
    """
    lam = _check_lambda(lam)
    if energy_scale is not None:
        window = damping_factor(energy_scale)["window"]
        if lam <= window[0]:
            raise TruncationError(
                f"lambda={lam} lies outside the window (e^(-1/N), 1) = ({window[0]:.6g}, 1) "
                f"for energy scale N={energy_scale}; increase lambda or the energy scale"
            )
    else:
        n_max = float(np.max(number_diag(W.mode_cutoffs)))
        growth = lam ** -n_max
        if growth > OVERFLOW_LIMIT:
            raise TruncationError(
                f"lambda^(-n_max) = {growth:.3e} exceeds {OVERFLOW_LIMIT:.0e} at cutoffs {W.mode_cutoffs}; "
                f"use lambda > {OVERFLOW_LIMIT ** (-1.0 / n_max):.6g} or smaller cutoffs"
            )
    weights = lambda_power_diag(W.mode_cutoffs, lam, power=-1.0)
    return FockOperator(_conjugate_transpose(W, weights), W.mode_cutoffs)


def damping_factor(energy_scale: float) -> Dict[str, Any]:
    """Admissible lambda window (e^{-1/N}, 1) and the bound 1 - e^{-2/N} on 1 - lambda^2"""
    if energy_scale is None or not np.isfinite(energy_scale) or energy_scale <= 0:
        raise FockError(f"Energy scale must be positive, got {energy_scale}")
    return {
        "window": (float(np.exp(-1.0 / energy_scale)), 1.0),
        "factor": float(1.0 - np.exp(-2.0 / energy_scale)),
    }


def energy_scale_witness(W: FockOperator, energy_scale: float) -> FockOperator:
    """e^{-n/N} W e^{-n/N}"""
    damping_factor(energy_scale)
    weights = np.exp(-number_diag(W.mode_cutoffs) / energy_scale)
    return FockOperator(weights[:, None] * W.matrix * weights[None, :], W.mode_cutoffs)


def duan_fock_witness(cutoffs: Sequence[int], kappa: float = 1.0) -> FockOperator:
    """
    kappa^2 n_A + kappa^-2 n_B - (ab + a^dag b^dag), whose expectation is
    <u^2> + <v^2> - (kappa^2 + kappa^-2)/2 for the Duan pair u, v
    """
    if kappa <= 0:
        raise FockError(f"kappa must be positive, got {kappa}")
    cutoffs = tuple(cutoffs)
    if len(cutoffs) != 2:
        raise FockError(f"Duan witness acts on two modes, got cutoffs {cutoffs}")
    a = embed_single_mode(annihilation(cutoffs[0]), cutoffs, 0)
    b = embed_single_mode(annihilation(cutoffs[1]), cutoffs, 1)
    n_a = np.diag(number_diag(cutoffs, modes=[0]))
    n_b = np.diag(number_diag(cutoffs, modes=[1]))
    pair = a @ b
    W = kappa ** 2 * n_a + n_b / kappa ** 2 - (pair + pair.conj().T)
    return FockOperator(W, cutoffs)


def recommended_cutoff(lam: float, alphas: Sequence[complex] = ()) -> int:
    """Smallest d with lam^(2d) < 1e-12 and every input deficit below 1e-10"""
    lam = _check_lambda(lam)
    d = int(np.floor(np.log(TMSV_DEFICIT_LIMIT) / (2 * np.log(lam)))) + 1
    for alpha in alphas:
        while coherent_deficit(alpha, d) >= COHERENT_DEFICIT_LIMIT:
            d += 1
    return max(d, 2)


# --- separability ---------------------------------------------------------

def _reverse_conjugation(op: FockOperator, lam: float) -> FockOperator:
    """lam^n op^T lam^n, read as an unnormalized state"""
    weights = lambda_power_diag(op.mode_cutoffs, lam)
    return FockOperator(_conjugate_transpose(op, weights), op.mode_cutoffs)


def separable_transform_check(terms: Sequence[Tuple[float, FockOperator, FockOperator]], lam: float,
                              normalization: str = "amplitude") -> Dict[str, Any]:
    """
    Build M^mu (x) N^mu for every product term of a separable rho and check
    that they are PSD, mix to povm_element(rho), and map back to PSD operators
    """
    lam = _check_lambda(lam)
    weights = np.array([t[0] for t in terms], dtype=float)
    if len(terms) == 0 or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise FockError(f"Product weights must be non-negative and sum to 1, got {weights.tolist()}")

    local_psd = True
    reverse_psd = True
    mixed = None
    for p, rho_a, sigma_b in terms:
        M = povm_element(rho_a, lam, normalization)
        N = povm_element(sigma_b, lam, normalization)
        local_psd = local_psd and M.is_psd() and N.is_psd()
        reverse_psd = reverse_psd and _reverse_conjugation(M, lam).is_psd() \
            and _reverse_conjugation(N, lam).is_psd()
        term = p * M.tensor(N)
        mixed = term if mixed is None else mixed + term

    direct = povm_element(mix_product_terms(terms), lam, normalization)
    max_error = float(np.max(np.abs(direct.matrix - mixed.matrix)))
    return {
        "n_terms": len(terms),
        "max_error": max_error,
        "local_psd": bool(local_psd),
        "reverse_psd": bool(reverse_psd),
        "passed": bool(local_psd and reverse_psd and max_error <= SEPARABLE_TOLERANCE),
    }


def npt_signature(rho: FockOperator, lam: float) -> Tuple[float, float]:
    """Minimal partial-transpose eigenvalues of rho and of its POVM element"""
    M = povm_element(rho, lam)
    return rho.partial_transpose([1]).min_eigenvalue(), M.partial_transpose([1]).min_eigenvalue()


# --- coherent-state statistics --------------------------------------------

class CoherentInput:
    """Truncated coherent state whose missing norm stays below 1e-10"""

    def __init__(self, alpha: complex, cutoff: int, check: bool = True):
        self.alpha = complex(alpha)
        self.cutoff = int(cutoff)
        self.deficit = coherent_deficit(self.alpha, self.cutoff)
        if check and self.deficit > COHERENT_DEFICIT_LIMIT:
            raise TruncationError(
                f"Cutoff {self.cutoff} misses {self.deficit:.3e} of |alpha={self.alpha}>; "
                f"need a deficit below {COHERENT_DEFICIT_LIMIT:.0e}"
            )
        self.vector = coherent_vector(self.alpha, self.cutoff)


def p11_statistic(rho: FockOperator, r: float, alpha: complex, beta: complex, cutoff: Optional[int] = None,
                  normalization: str = "amplitude") -> float:
    """
    Probability that both TMSV projections succeed for inputs |alpha>, |beta>

    Computed from the four-mode projection and from the POVM element; the two
    must agree to 1e-8.
    """
    if rho.n_modes != 2:
        raise FockError(f"rho must have two modes, got {rho.n_modes}")
    lam = _check_lambda(np.tanh(r))
    if cutoff is None:
        cutoff = max(rho.mode_cutoffs)
    rho = rho.embed((cutoff, cutoff))
    coherent_a = CoherentInput(alpha, cutoff).vector
    coherent_b = CoherentInput(beta, cutoff).vector

    # <Phi_AA'|alpha>_A' as a bra on A, one per side
    phi = tmsv_vector(r, cutoff, renormalize=False).reshape(cutoff, cutoff)
    k = np.kron(phi.conj() @ coherent_a, phi.conj() @ coherent_b)
    projected = float(np.real(k @ rho.matrix @ k.conj()))
    projected *= povm_prefactor(2, lam, normalization) / povm_prefactor(2, lam, "projector")

    v = np.kron(coherent_a, coherent_b)
    via_povm = float(np.real(v.conj() @ povm_element(rho, lam, normalization).matrix @ v))

    if abs(projected - via_povm) > BRUTEFORCE_TOLERANCE:
        raise FockError(f"P(1,1) paths disagree: projection {projected:.12g} vs POVM {via_povm:.12g}")
    return via_povm


def heterodyne_vacuum_projection(rho_single_mode: FockOperator, confidence_radius: float, samples: int,
                                 rng: np.random.Generator) -> Dict[str, float]:
    """
    Estimate <0|rho|0> from simulated heterodyne outcomes by counting those
    within `confidence_radius` of the origin

    The Husimi density near the origin is <0|rho|0>/pi, so the count
    fraction over R^2 converges to it with a bias of order R^2/2.
    """
    if confidence_radius <= 0:
        raise FockError(f"Confidence radius must be positive, got {confidence_radius}")
    if rho_single_mode.n_modes != 1:
        raise FockError(f"Expected a single-mode state, got {rho_single_mode.n_modes} modes")
    populations = np.clip(np.real(np.diag(rho_single_mode.matrix)), 0.0, None)
    populations /= populations.sum()

    # the radial Q-function marginal is a photon-number mixture of Gamma(n+1) laws;
    # the phase is uniform and does not enter the count
    n = rng.choice(populations.shape[0], size=samples, p=populations)
    radius_sq = rng.gamma(n + 1.0)

    R2 = confidence_radius ** 2
    fraction = float(np.mean(radius_sq <= R2))
    return {
        "estimate": fraction / R2,
        "std_error": float(np.sqrt(fraction * (1 - fraction) / samples) / R2),
        "bias_bound": R2 / 2,
        "exact": float(populations[0]),
    }


# --- tomography -----------------------------------------------------------

class TomographyGrid:
    """Input amplitudes and the table P(1,1 | alpha_i, beta_j)"""

    def __init__(self, alphas: Sequence[complex], betas: Sequence[complex], p11: np.ndarray,
                 regularization: float = RIDGE_WEIGHT):
        self.alphas = np.asarray(alphas, dtype=complex)
        self.betas = np.asarray(betas, dtype=complex)
        self.p11 = np.asarray(p11, dtype=float).reshape(len(self.alphas), len(self.betas))
        self.regularization = float(regularization)
        if np.any(self.p11 < -1e-12) or np.any(self.p11 > 1 + 1e-12):
            raise FockError("Tomography probabilities must lie in [0, 1]")

    @property
    def n_inputs(self) -> int:
        return self.p11.size

    def to_frame(self) -> pd.DataFrame:
        ia, ib = np.meshgrid(np.arange(len(self.alphas)), np.arange(len(self.betas)), indexing="ij")
        a = self.alphas[ia.ravel()]
        b = self.betas[ib.ravel()]
        return pd.DataFrame({
            "alpha_re": a.real, "alpha_im": a.imag,
            "beta_re": b.real, "beta_im": b.imag,
            "p11": self.p11.ravel(),
        }, columns=GRID_COLUMNS)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, regularization: float = RIDGE_WEIGHT) -> "TomographyGrid":
        alphas = list(dict.fromkeys(frame["alpha_re"].to_numpy() + 1j * frame["alpha_im"].to_numpy()))
        betas = list(dict.fromkeys(frame["beta_re"].to_numpy() + 1j * frame["beta_im"].to_numpy()))
        ai = {a: i for i, a in enumerate(alphas)}
        bi = {b: j for j, b in enumerate(betas)}
        table = np.full((len(alphas), len(betas)), np.nan)
        for row in frame.itertuples(index=False):
            table[ai[complex(row.alpha_re, row.alpha_im)], bi[complex(row.beta_re, row.beta_im)]] = row.p11
        if np.any(np.isnan(table)):
            raise FockError("Tomography frame is not a full alpha x beta grid")
        return cls(alphas, betas, table, regularization)


def polar_input_grid(n_radii: int = 8, n_angles: int = 8, max_radius: float = 2.0) -> np.ndarray:
    """Amplitudes on rings of radius max_radius*k/n_radii, k=1..n_radii"""
    radii = max_radius * np.arange(1, n_radii + 1) / n_radii
    angles = 2 * np.pi * np.arange(n_angles) / n_angles
    return (radii[:, None] * np.exp(1j * angles)[None, :]).ravel()


def grid_probabilities(M: FockOperator, alphas: Sequence[complex], betas: Sequence[complex]) -> TomographyGrid:
    """Noiseless P(1,1|alpha_i,beta_j) = Tr[M |alpha_i><alpha_i| x |beta_j><beta_j|]"""
    if M.n_modes != 2:
        raise FockError(f"POVM element must act on two modes, got {M.n_modes}")
    d_a, d_b = M.mode_cutoffs
    A = np.array([coherent_vector(a, d_a) for a in alphas])
    B = np.array([coherent_vector(b, d_b) for b in betas])
    M4 = M.matrix.reshape(d_a, d_b, d_a, d_b)
    table = np.einsum("ia,jb,abce,ic,je->ij", A.conj(), B.conj(), M4, A, B, optimize=True)
    return TomographyGrid(alphas, betas, np.real(table))


def hermitian_basis_features(vectors: np.ndarray) -> np.ndarray:
    """
    Rows v^H B_m v for the real basis of Hermitian matrices: E_kk, then
    E_kl + E_lk and i(E_kl - E_lk) for k < l
    """
    dim = vectors.shape[1]
    iu, ju = np.triu_indices(dim, k=1)
    z = vectors.conj()[:, iu] * vectors[:, ju]
    return np.hstack([np.abs(vectors) ** 2, 2 * z.real, -2 * z.imag])


def _hermitian_from_coefficients(coeffs: np.ndarray, dim: int) -> np.ndarray:
    iu, ju = np.triu_indices(dim, k=1)
    n_off = iu.shape[0]
    M = np.diag(coeffs[:dim]).astype(complex)
    upper = coeffs[dim:dim + n_off] + 1j * coeffs[dim + n_off:]
    M[iu, ju] = upper
    M[ju, iu] = upper.conj()
    return M


class ReconstructionResult:
    def __init__(self, operator: FockOperator, residual_norm: float, condition_number: float,
                 n_inputs: int, n_parameters: int):
        self.operator = operator
        self.residual_norm = residual_norm
        self.condition_number = condition_number
        self.n_inputs = n_inputs
        self.n_parameters = n_parameters

    def to_dict(self) -> Dict[str, Any]:
        return {
            "residual_norm": self.residual_norm,
            "condition_number": self.condition_number,
            "n_inputs": self.n_inputs,
            "n_parameters": self.n_parameters,
            "cutoffs": list(self.operator.mode_cutoffs),
        }


def reconstruct_povm(grid: TomographyGrid, cutoff: int, clip_negative: bool = False) -> ReconstructionResult:
    """
    Ridge-regularized linear inversion of P(1,1|alpha,beta) = Tr[M |alpha,beta><alpha,beta|]
    over Hermitian M on cutoff x cutoff levels
    """
    start_time = time.time()
    dim = cutoff * cutoff
    n_parameters = dim * dim
    if grid.n_inputs < n_parameters:
        raise ReconstructionError(
            f"Underdetermined grid: {grid.n_inputs} inputs for {n_parameters} real parameters at cutoff {cutoff}"
        )

    A = np.array([coherent_vector(a, cutoff) for a in grid.alphas])
    B = np.array([coherent_vector(b, cutoff) for b in grid.betas])
    vectors = np.einsum("ia,jb->ijab", A, B).reshape(-1, dim)
    X = hermitian_basis_features(vectors)
    y = grid.p11.ravel()

    singular = np.linalg.svd(X, compute_uv=False)
    condition = float(singular[0] / singular[-1]) if singular[-1] > 0 else float("inf")
    if condition > CONDITION_LIMIT:
        raise ReconstructionError(f"Design matrix condition number {condition:.3e} exceeds {CONDITION_LIMIT:.0e}")

    # Tikhonov weight w = reg * ||X||_2 enters the ridge objective squared
    ridge = Ridge(alpha=(grid.regularization * singular[0]) ** 2, fit_intercept=False, solver="svd")
    ridge.fit(X, y)
    coeffs = ridge.coef_
    M = _hermitian_from_coefficients(coeffs, dim)

    if clip_negative:
        values, vecs = np.linalg.eigh(M)
        M = (vecs * np.clip(values, 0.0, None)) @ vecs.conj().T

    residual = float(np.linalg.norm(X @ coeffs - y))
    logger.info(
        f"Reconstructed POVM element at cutoff {cutoff} from {grid.n_inputs} inputs "
        f"(cond {condition:.3e}, residual {residual:.3e}) in {time.time() - start_time:.3f}s"
    )
    return ReconstructionResult(FockOperator(M, (cutoff, cutoff)), residual, condition, grid.n_inputs, n_parameters)
