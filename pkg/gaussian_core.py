"""
Gaussian phase-space engine for bosonic modes
Quadratures are ordered (x1, p1, ..., xn, pn) with a = x + ip, [x, p] = i/2,
so the vacuum covariance is Identity/4
"""

import json
import logging
from typing import Dict, Any, List, Optional, Sequence

import numpy as np
from scipy.linalg import block_diag
from scipy.stats import unitary_group

logger = logging.getLogger(__name__)

VACUUM_VARIANCE = 0.25
PSD_TOLERANCE = 1e-10
SYMPLECTIC_TOLERANCE = 1e-10
# asymmetry beyond this is a malformed input, not rounding drift
ASYMMETRY_LIMIT = 1e-8

BEAM_SPLITTER_CONVENTIONS = {
    # (q_i, q_j) -> ((q_i + q_j)/sqrt2, (q_i - q_j)/sqrt2), its own inverse
    "sum_difference": np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0),
    "rotation": np.array([[1.0, 1.0], [-1.0, 1.0]]) / np.sqrt(2.0),
    "rotation_dagger": np.array([[1.0, -1.0], [1.0, 1.0]]) / np.sqrt(2.0),
}


class InvalidStateError(ValueError):
    """Raised when a mean/covariance pair is not a physical Gaussian state"""


class InvalidParameterError(ValueError):
    """Raised for out-of-range mode indices, loss fractions and mode subsets"""


def symplectic_form(n_modes: int) -> np.ndarray:
    """Standard symplectic form for the interleaved (x, p) ordering"""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """
    Symplectic eigenvalues of a covariance matrix, ascending

    The spectrum of i*Omega*cov is {+nu_k, -nu_k}; sorting the moduli lists
    every nu_k twice, so every other entry is kept.
    """
    cov = np.asarray(cov, dtype=float)
    n_modes = cov.shape[0] // 2
    spectrum = np.linalg.eigvals(1j * symplectic_form(n_modes) @ cov)
    return np.sort(np.abs(spectrum))[::2]


def _check_mode(n_modes: int, mode: int) -> int:
    if not isinstance(mode, (int, np.integer)) or mode < 0 or mode >= n_modes:
        raise InvalidParameterError(f"Mode index {mode} out of range for {n_modes} modes")
    return int(mode)


def _quadrature_indices(modes: Sequence[int]) -> List[int]:
    indices = []
    for mode in modes:
        indices.extend([2 * mode, 2 * mode + 1])
    return indices


class GaussianState:
    """Mean vector and covariance matrix of n bosonic modes (immutable)"""

    def __init__(self, mean, cov, validate: bool = True):
        mean = np.array(mean, dtype=float).reshape(-1)
        cov = np.array(cov, dtype=float)

        if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2 or cov.shape[0] == 0:
            raise InvalidStateError(f"Covariance must be a non-empty 2n x 2n matrix, got shape {cov.shape}")
        if mean.shape[0] != cov.shape[0]:
            raise InvalidStateError(f"Mean of length {mean.shape[0]} does not match covariance of size {cov.shape[0]}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidStateError("Mean and covariance must be finite")

        asymmetry = np.max(np.abs(cov - cov.T))
        if asymmetry > ASYMMETRY_LIMIT * max(1.0, np.max(np.abs(cov))):
            raise InvalidStateError(f"Covariance is not symmetric (max asymmetry {asymmetry:.3e})")
        cov = (cov + cov.T) / 2

        mean.setflags(write=False)
        cov.setflags(write=False)
        self._mean = mean
        self._cov = cov

        if validate:
            self.validate()

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def cov(self) -> np.ndarray:
        return self._cov

    @property
    def n_modes(self) -> int:
        return self._cov.shape[0] // 2

    def validate(self):
        """Check the uncertainty principle cov + (i/4) Omega >= 0"""
        condition = self._cov + 0.25j * symplectic_form(self.n_modes)
        min_eig = np.min(np.linalg.eigvalsh(condition))
        if min_eig < -PSD_TOLERANCE:
            raise InvalidStateError(
                f"Covariance violates the uncertainty principle (min eigenvalue {min_eig:.3e})"
            )

    def variance(self, index: int) -> float:
        return float(self._cov[index, index])

    def covariance(self, i: int, j: int) -> float:
        return float(self._cov[i, j])

    def allclose(self, other: "GaussianState", atol: float = 1e-12) -> bool:
        return (
            self.n_modes == other.n_modes
            and np.allclose(self._mean, other.mean, rtol=0.0, atol=atol)
            and np.allclose(self._cov, other.cov, rtol=0.0, atol=atol)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_modes": self.n_modes,
            "mean": [float(v) for v in self._mean],
            "cov": [[float(v) for v in row] for row in self._cov],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GaussianState":
        try:
            n_modes = int(data["n_modes"])
            state = cls(data["mean"], data["cov"])
        except KeyError as e:
            raise InvalidStateError(f"Missing field in state document: {e}")
        if state.n_modes != n_modes:
            raise InvalidStateError(f"n_modes={n_modes} does not match covariance size {state.cov.shape[0]}")
        return state

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GaussianState":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"GaussianState(n_modes={self.n_modes}, mean={self._mean.tolist()})"


class SymplecticMap:
    """Affine symplectic map: mean -> S mean + d, cov -> S cov S^T"""

    def __init__(self, matrix, displacement=None, validate: bool = True):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2:
            raise InvalidParameterError(f"Symplectic matrix must be 2n x 2n, got shape {matrix.shape}")
        if displacement is None:
            displacement = np.zeros(matrix.shape[0])
        displacement = np.array(displacement, dtype=float).reshape(-1)
        if displacement.shape[0] != matrix.shape[0]:
            raise InvalidParameterError("Displacement length does not match the symplectic matrix")

        matrix.setflags(write=False)
        displacement.setflags(write=False)
        self.matrix = matrix
        self.displacement = displacement

        if validate:
            omega = symplectic_form(self.n_modes)
            defect = np.linalg.norm(matrix.T @ omega @ matrix - omega)
            # absolute tolerance on entries of order one, relative for large squeezing
            if defect > SYMPLECTIC_TOLERANCE * max(1.0, np.linalg.norm(matrix) ** 2):
                raise InvalidParameterError(f"Matrix is not symplectic (defect {defect:.3e})")

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2

    @classmethod
    def identity(cls, n_modes: int) -> "SymplecticMap":
        return cls(np.eye(2 * n_modes), validate=False)

    def compose(self, first: "SymplecticMap") -> "SymplecticMap":
        """Map equal to applying `first`, then self"""
        if first.n_modes != self.n_modes:
            raise InvalidParameterError(f"Cannot compose maps on {first.n_modes} and {self.n_modes} modes")
        return SymplecticMap(
            self.matrix @ first.matrix,
            self.matrix @ first.displacement + self.displacement,
            validate=False,
        )

    def embed(self, n_modes: int, modes: Sequence[int]) -> "SymplecticMap":
        """Lift a map on len(modes) modes into an n_modes system, identity elsewhere"""
        modes = [_check_mode(n_modes, m) for m in modes]
        if len(modes) != self.n_modes or len(set(modes)) != len(modes):
            raise InvalidParameterError(f"Need {self.n_modes} distinct target modes, got {modes}")
        indices = _quadrature_indices(modes)
        matrix = np.eye(2 * n_modes)
        matrix[np.ix_(indices, indices)] = self.matrix
        displacement = np.zeros(2 * n_modes)
        displacement[indices] = self.displacement
        return SymplecticMap(matrix, displacement, validate=False)

    def apply(self, state: GaussianState) -> GaussianState:
        return apply_symplectic(state, self)


def apply_symplectic(state: GaussianState, smap: SymplecticMap) -> GaussianState:
    if smap.n_modes != state.n_modes:
        raise InvalidParameterError(f"Map acts on {smap.n_modes} modes, state has {state.n_modes}")
    S = smap.matrix
    return GaussianState(S @ state.mean + smap.displacement, S @ state.cov @ S.T)


class LossChannel:
    """Pure loss on one mode; eta is the LOST fraction (eta=0 is noiseless)"""

    def __init__(self, mode: int, eta: float):
        if not np.isfinite(eta) or eta < 0.0 or eta > 1.0:
            raise InvalidParameterError(f"Loss fraction eta must lie in [0, 1], got {eta}")
        if not isinstance(mode, (int, np.integer)) or mode < 0:
            raise InvalidParameterError(f"Invalid loss mode {mode}")
        self.mode = int(mode)
        self.eta = float(eta)

    def __repr__(self):
        return f"LossChannel(mode={self.mode}, eta={self.eta})"


# --- single-operation maps -------------------------------------------------

def beam_splitter_map(n_modes: int, mode_i: int, mode_j: int,
                      sign_convention: str = "sum_difference") -> SymplecticMap:
    mode_i = _check_mode(n_modes, mode_i)
    mode_j = _check_mode(n_modes, mode_j)
    if mode_i == mode_j:
        raise InvalidParameterError(f"Beam splitter needs two distinct modes, got {mode_i} twice")
    if sign_convention not in BEAM_SPLITTER_CONVENTIONS:
        raise InvalidParameterError(
            f"Unknown beam splitter convention '{sign_convention}', "
            f"expected one of {sorted(BEAM_SPLITTER_CONVENTIONS)}"
        )
    # orthogonal mode mixing acts identically on x and p
    local = np.kron(BEAM_SPLITTER_CONVENTIONS[sign_convention], np.eye(2))
    return SymplecticMap(local, validate=False).embed(n_modes, [mode_i, mode_j])


def squeeze_map(n_modes: int, mode: int, r: float) -> SymplecticMap:
    mode = _check_mode(n_modes, mode)
    local = np.diag([np.exp(r), np.exp(-r)])
    return SymplecticMap(local, validate=False).embed(n_modes, [mode])


def phase_rotation_map(n_modes: int, mode: int, theta: float) -> SymplecticMap:
    mode = _check_mode(n_modes, mode)
    c, s = np.cos(theta), np.sin(theta)
    local = np.array([[c, s], [-s, c]])
    return SymplecticMap(local, validate=False).embed(n_modes, [mode])


def local_map(n_modes: int, blocks: Dict[int, np.ndarray]) -> SymplecticMap:
    """Direct sum of 2x2 single-mode symplectic blocks, identity on other modes"""
    matrix = np.eye(2 * n_modes)
    for mode, block in blocks.items():
        mode = _check_mode(n_modes, mode)
        block = np.asarray(block, dtype=float)
        if block.shape != (2, 2) or abs(np.linalg.det(block) - 1.0) > SYMPLECTIC_TOLERANCE:
            raise InvalidParameterError(f"Block for mode {mode} is not a 2x2 symplectic matrix")
        matrix[2 * mode:2 * mode + 2, 2 * mode:2 * mode + 2] = block
    return SymplecticMap(matrix, validate=False)


# --- states ---------------------------------------------------------------

def vacuum(n_modes: int) -> GaussianState:
    if not isinstance(n_modes, (int, np.integer)) or n_modes < 1:
        raise InvalidParameterError(f"Mode count must be a positive integer, got {n_modes}")
    return GaussianState(np.zeros(2 * n_modes), VACUUM_VARIANCE * np.eye(2 * n_modes))


def coherent(alpha_x: float, alpha_p: float) -> GaussianState:
    if not (np.isfinite(alpha_x) and np.isfinite(alpha_p)):
        raise InvalidParameterError(f"Coherent amplitude must be finite, got ({alpha_x}, {alpha_p})")
    return GaussianState([alpha_x, alpha_p], VACUUM_VARIANCE * np.eye(2))


def thermal(n_thermal: float) -> GaussianState:
    if n_thermal < 0:
        raise InvalidParameterError(f"Mean thermal photon number must be >= 0, got {n_thermal}")
    return GaussianState(np.zeros(2), (2 * n_thermal + 1) * VACUUM_VARIANCE * np.eye(2))


def tmsv(r: float) -> GaussianState:
    """
    Two-mode squeezed vacuum

    Var(x_A)=Var(p_A)=Var(x_B)=Var(p_B)=cosh(2r)/4,
    Cov(x_A,x_B)=+sinh(2r)/4, Cov(p_A,p_B)=-sinh(2r)/4.
    """
    c = np.cosh(2 * r) / 4
    s = np.sinh(2 * r) / 4
    cov = np.array([
        [c, 0.0, s, 0.0],
        [0.0, c, 0.0, -s],
        [s, 0.0, c, 0.0],
        [0.0, -s, 0.0, c],
    ])
    return GaussianState(np.zeros(4), cov)


# --- operations -----------------------------------------------------------

def beam_splitter_50_50(state: GaussianState, mode_i: int, mode_j: int,
                        sign_convention: str = "sum_difference") -> GaussianState:
    return apply_symplectic(state, beam_splitter_map(state.n_modes, mode_i, mode_j, sign_convention))


def squeeze_single_mode(state: GaussianState, mode: int, r: float) -> GaussianState:
    """x -> e^r x, p -> e^-r p on one mode"""
    return apply_symplectic(state, squeeze_map(state.n_modes, mode, r))


def phase_rotation(state: GaussianState, mode: int, theta: float) -> GaussianState:
    return apply_symplectic(state, phase_rotation_map(state.n_modes, mode, theta))


def two_mode_squeeze(state: GaussianState, mode_i: int, mode_j: int, r: float) -> GaussianState:
    """Opposite single-mode squeezers followed by a balanced beam splitter"""
    smap = beam_splitter_map(state.n_modes, mode_i, mode_j).compose(
        squeeze_map(state.n_modes, mode_j, -r).compose(squeeze_map(state.n_modes, mode_i, r))
    )
    return apply_symplectic(state, smap)


def apply_loss(state: GaussianState, channel: LossChannel) -> GaussianState:
    """
    Mix the target mode with vacuum: a -> sqrt(1-eta) a + sqrt(eta) a_noise
    """
    mode = _check_mode(state.n_modes, channel.mode)
    scale = np.ones(2 * state.n_modes)
    scale[2 * mode:2 * mode + 2] = np.sqrt(1.0 - channel.eta)
    X = np.diag(scale)

    cov = X @ state.cov @ X
    cov[2 * mode:2 * mode + 2, 2 * mode:2 * mode + 2] += channel.eta * VACUUM_VARIANCE * np.eye(2)
    return GaussianState(scale * state.mean, cov)


def tensor(state_1: GaussianState, state_2: GaussianState) -> GaussianState:
    return GaussianState(
        np.concatenate([state_1.mean, state_2.mean]),
        block_diag(state_1.cov, state_2.cov),
    )


def restrict(state: GaussianState, modes: Sequence[int]) -> GaussianState:
    """Partial trace onto the listed modes, keeping their order"""
    modes = list(modes)
    if not modes:
        raise InvalidParameterError("Cannot restrict to an empty mode subset")
    if len(set(modes)) != len(modes):
        raise InvalidParameterError(f"Mode subset has repeated indices: {modes}")
    modes = [_check_mode(state.n_modes, m) for m in modes]
    indices = _quadrature_indices(modes)
    return GaussianState(state.mean[indices], state.cov[np.ix_(indices, indices)])


def purity(state: GaussianState) -> float:
    """Tr[rho^2] = 1/sqrt(det(4 cov))"""
    return float(1.0 / np.sqrt(np.linalg.det(4.0 * state.cov)))


def is_pure(state: GaussianState, tol: float = 1e-10) -> bool:
    return bool(np.all(np.abs(symplectic_eigenvalues(state.cov) - VACUUM_VARIANCE) <= tol))


def partial_transpose(state: GaussianState, modes: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Covariance of the partial transpose (p -> -p on `modes`, default: last mode)

    The result need not be a physical covariance, so a bare matrix is returned.
    """
    if modes is None:
        modes = [state.n_modes - 1]
    flip = np.ones(2 * state.n_modes)
    for mode in modes:
        flip[2 * _check_mode(state.n_modes, mode) + 1] = -1.0
    return flip[:, None] * state.cov * flip[None, :]


def ppt_min_eigenvalue(state: GaussianState, modes: Optional[Sequence[int]] = None) -> float:
    return float(symplectic_eigenvalues(partial_transpose(state, modes))[0])


def is_ppt(state: GaussianState, modes: Optional[Sequence[int]] = None, tol: float = 1e-12) -> bool:
    """
    Simon criterion: PPT iff the smallest partially transposed symplectic
    eigenvalue is >= 1/4. Necessary and sufficient for 1 x 1 mode states.
    """
    return ppt_min_eigenvalue(state, modes) >= VACUUM_VARIANCE - tol


# --- random instances -----------------------------------------------------

def _interleave_permutation(n_modes: int) -> np.ndarray:
    """P with P @ (x1..xn, p1..pn) = (x1, p1, ..., xn, pn)"""
    P = np.zeros((2 * n_modes, 2 * n_modes))
    for k in range(n_modes):
        P[2 * k, k] = 1.0
        P[2 * k + 1, n_modes + k] = 1.0
    return P


def random_passive_map(n_modes: int, rng: np.random.Generator) -> SymplecticMap:
    """Orthogonal symplectic map from a Haar-random interferometer"""
    if n_modes == 1:
        theta = rng.uniform(0.0, 2 * np.pi)
        return phase_rotation_map(1, 0, theta)
    U = unitary_group.rvs(n_modes, random_state=rng)
    X, Y = U.real, U.imag
    P = _interleave_permutation(n_modes)
    block = np.block([[X, -Y], [Y, X]])
    return SymplecticMap(P @ block @ P.T)


def random_symplectic(n_modes: int, rng: np.random.Generator, max_squeeze: float = 1.0) -> SymplecticMap:
    """Passive - squeezers - passive (Bloch-Messiah form)"""
    squeezes = rng.uniform(-max_squeeze, max_squeeze, size=n_modes)
    Z = np.diag(np.ravel(np.column_stack([np.exp(squeezes), np.exp(-squeezes)])))
    middle = SymplecticMap(Z, validate=False)
    return random_passive_map(n_modes, rng).compose(middle.compose(random_passive_map(n_modes, rng)))


def random_local_symplectic(rng: np.random.Generator, max_squeeze: float = 1.0) -> np.ndarray:
    """Random 2x2 single-mode symplectic block"""
    return random_symplectic(1, rng, max_squeeze).matrix


def random_single_mode_state(rng: np.random.Generator, max_squeeze: float = 1.0,
                             max_thermal: float = 1.0, displacement_scale: float = 0.5) -> GaussianState:
    state = thermal(rng.uniform(0.0, max_thermal))
    state = apply_symplectic(state, SymplecticMap(random_local_symplectic(rng, max_squeeze)))
    return GaussianState(rng.normal(scale=displacement_scale, size=2), state.cov)


def random_two_mode_state(rng: np.random.Generator, max_squeeze: float = 1.0,
                          max_thermal: float = 1.0, displacement_scale: float = 0.5) -> GaussianState:
    """Thermal product state under a random two-mode symplectic, randomly displaced"""
    state = tensor(thermal(rng.uniform(0.0, max_thermal)), thermal(rng.uniform(0.0, max_thermal)))
    state = apply_symplectic(state, random_symplectic(2, rng, max_squeeze))
    return GaussianState(rng.normal(scale=displacement_scale, size=4), state.cov)


def random_entangled_state(rng: np.random.Generator, max_attempts: int = 10000, **kwargs) -> GaussianState:
    for attempt in range(1, max_attempts + 1):
        state = random_two_mode_state(rng, **kwargs)
        if not is_ppt(state):
            logger.debug(f"Entangled state drawn after {attempt} attempts")
            return state
    raise RuntimeError(f"No entangled state found in {max_attempts} draws")


def mixture_moments(weights: Sequence[float], states: Sequence[GaussianState]) -> GaussianState:
    """Gaussian state with the first and second moments of a convex mixture"""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise InvalidParameterError(f"Mixture weights must be non-negative and sum to 1, got {weights}")
    mean = sum(w * s.mean for w, s in zip(weights, states))
    second = sum(w * (s.cov + np.outer(s.mean, s.mean)) for w, s in zip(weights, states))
    return GaussianState(mean, second - np.outer(mean, mean))


def random_separable_state(rng: np.random.Generator, n_terms: int = 3, **kwargs) -> GaussianState:
    """
    Moments of a convex mixture of random product states

    Duan's bound only involves second moments, so the Gaussian state sharing
    them is a valid separable test instance.
    """
    products = [
        tensor(random_single_mode_state(rng, **kwargs), random_single_mode_state(rng, **kwargs))
        for _ in range(n_terms)
    ]
    weights = rng.dirichlet(np.ones(n_terms))
    return mixture_moments(weights, products)
