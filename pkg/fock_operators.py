"""
Dense operators on truncated multi-mode Fock spaces
Basis is the tensor product of |0>..|d-1> per mode, row-major in mode order
"""

import json
import logging
from functools import reduce
from typing import Dict, Any, List, Sequence, Tuple

import numpy as np
from scipy.linalg import expm, eigvalsh
from scipy.stats import poisson

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-12
TRACE_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10


class FockError(ValueError):
    """Raised for malformed operators and invalid Fock-space parameters"""


def _check_cutoffs(cutoffs: Sequence[int]) -> Tuple[int, ...]:
    cutoffs = tuple(int(d) for d in cutoffs)
    if not cutoffs or any(d < 1 for d in cutoffs):
        raise FockError(f"Cutoffs must be positive integers, got {cutoffs}")
    return cutoffs


class FockOperator:
    """Dense complex matrix on prod(cutoffs) basis states"""

    # norm dropped by truncating an infinite state, set by constructors that know it
    truncation_deficit = 0.0

    def __init__(self, matrix, mode_cutoffs: Sequence[int]):
        self.mode_cutoffs = _check_cutoffs(mode_cutoffs)
        matrix = np.array(matrix, dtype=complex)
        dim = int(np.prod(self.mode_cutoffs))
        if matrix.shape != (dim, dim):
            raise FockError(f"Matrix shape {matrix.shape} does not match cutoffs {self.mode_cutoffs} (dim {dim})")
        matrix.setflags(write=False)
        self.matrix = matrix

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_modes(self) -> int:
        return len(self.mode_cutoffs)

    def _same_space(self, other: "FockOperator"):
        if other.mode_cutoffs != self.mode_cutoffs:
            raise FockError(f"Operators live on different spaces: {self.mode_cutoffs} vs {other.mode_cutoffs}")

    def __add__(self, other: "FockOperator") -> "FockOperator":
        self._same_space(other)
        return FockOperator(self.matrix + other.matrix, self.mode_cutoffs)

    def __sub__(self, other: "FockOperator") -> "FockOperator":
        self._same_space(other)
        return FockOperator(self.matrix - other.matrix, self.mode_cutoffs)

    def __mul__(self, scalar) -> "FockOperator":
        return FockOperator(scalar * self.matrix, self.mode_cutoffs)

    __rmul__ = __mul__

    def __matmul__(self, other: "FockOperator") -> "FockOperator":
        self._same_space(other)
        return FockOperator(self.matrix @ other.matrix, self.mode_cutoffs)

    def dagger(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T, self.mode_cutoffs)

    def transpose(self) -> "FockOperator":
        """Full transpose in the Fock number basis"""
        return FockOperator(self.matrix.T, self.mode_cutoffs)

    def _as_tensor(self) -> np.ndarray:
        return self.matrix.reshape(self.mode_cutoffs + self.mode_cutoffs)

    def partial_transpose(self, modes: Sequence[int]) -> "FockOperator":
        n = self.n_modes
        axes = list(range(2 * n))
        for mode in modes:
            if mode < 0 or mode >= n:
                raise FockError(f"Mode {mode} out of range for {n} modes")
            axes[mode], axes[n + mode] = axes[n + mode], axes[mode]
        tensor = np.transpose(self._as_tensor(), axes)
        return FockOperator(tensor.reshape(self.dim, self.dim), self.mode_cutoffs)

    def permute(self, order: Sequence[int]) -> "FockOperator":
        """Reorder modes: new mode k is old mode order[k]"""
        order = list(order)
        if sorted(order) != list(range(self.n_modes)):
            raise FockError(f"Invalid mode permutation {order}")
        n = self.n_modes
        tensor = np.transpose(self._as_tensor(), order + [n + k for k in order])
        cutoffs = tuple(self.mode_cutoffs[k] for k in order)
        return FockOperator(tensor.reshape(self.dim, self.dim), cutoffs)

    def tensor(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(np.kron(self.matrix, other.matrix), self.mode_cutoffs + other.mode_cutoffs)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def expectation(self, other: "FockOperator") -> complex:
        """Tr[self @ other]"""
        self._same_space(other)
        return complex(np.sum(self.matrix * other.matrix.T))

    def is_hermitian(self, tol: float = HERMITIAN_TOLERANCE) -> bool:
        scale = max(1.0, np.linalg.norm(self.matrix))
        return bool(np.linalg.norm(self.matrix - self.matrix.conj().T) <= tol * scale)

    def min_eigenvalue(self) -> float:
        return float(eigvalsh((self.matrix + self.matrix.conj().T) / 2)[0])

    def is_psd(self, tol: float = PSD_TOLERANCE) -> bool:
        return self.is_hermitian() and self.min_eigenvalue() >= -tol

    def is_density_matrix(self) -> bool:
        return self.is_psd() and abs(self.trace() - 1.0) <= TRACE_TOLERANCE

    def embed(self, mode_cutoffs: Sequence[int]) -> "FockOperator":
        """Zero-pad into larger per-mode cutoffs"""
        mode_cutoffs = _check_cutoffs(mode_cutoffs)
        if len(mode_cutoffs) != self.n_modes or any(b < a for a, b in zip(self.mode_cutoffs, mode_cutoffs)):
            raise FockError(f"Cannot embed cutoffs {self.mode_cutoffs} into {mode_cutoffs}")
        tensor = np.zeros(mode_cutoffs + mode_cutoffs, dtype=complex)
        index = tuple(slice(0, d) for d in self.mode_cutoffs) * 2
        tensor[index] = self._as_tensor()
        dim = int(np.prod(mode_cutoffs))
        return FockOperator(tensor.reshape(dim, dim), mode_cutoffs)

    def allclose(self, other: "FockOperator", atol: float = 1e-12) -> bool:
        return self.mode_cutoffs == other.mode_cutoffs and np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cutoffs": list(self.mode_cutoffs),
            "real": self.matrix.real.tolist(),
            "imag": self.matrix.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FockOperator":
        try:
            matrix = np.array(data["real"], dtype=float) + 1j * np.array(data["imag"], dtype=float)
            return cls(matrix, data["cutoffs"])
        except KeyError as e:
            raise FockError(f"Missing field in operator document: {e}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FockOperator":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"FockOperator(cutoffs={self.mode_cutoffs})"


# --- basis helpers --------------------------------------------------------

def annihilation(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)


def mode_numbers(cutoffs: Sequence[int]) -> np.ndarray:
    """(dim, n_modes) photon numbers of every basis state"""
    cutoffs = _check_cutoffs(cutoffs)
    grids = np.indices(cutoffs).reshape(len(cutoffs), -1)
    return grids.T


def number_diag(cutoffs: Sequence[int], modes: Sequence[int] = None) -> np.ndarray:
    """Total photon number (over `modes`, default all) of every basis state"""
    numbers = mode_numbers(cutoffs)
    if modes is not None:
        numbers = numbers[:, list(modes)]
    return numbers.sum(axis=1).astype(float)


def lambda_power_diag(cutoffs: Sequence[int], lam: float, power: float = 1.0) -> np.ndarray:
    """Diagonal of lam^(power * n_total)"""
    return lam ** (power * number_diag(cutoffs))


def embed_single_mode(op: np.ndarray, cutoffs: Sequence[int], mode: int) -> np.ndarray:
    cutoffs = _check_cutoffs(cutoffs)
    factors = [op if k == mode else np.eye(d) for k, d in enumerate(cutoffs)]
    return reduce(np.kron, factors)


def coherent_vector(alpha: complex, d: int) -> np.ndarray:
    """Truncated (not renormalized) amplitudes e^{-|a|^2/2} a^k / sqrt(k!)"""
    coeffs = np.empty(d, dtype=complex)
    coeffs[0] = np.exp(-abs(alpha) ** 2 / 2)
    for k in range(1, d):
        coeffs[k] = coeffs[k - 1] * alpha / np.sqrt(k)
    return coeffs


def coherent_deficit(alpha: complex, d: int) -> float:
    """Probability weight of |alpha> above the cutoff"""
    return float(poisson.sf(d - 1, abs(alpha) ** 2))


def squeeze_operator(r: float, d: int) -> np.ndarray:
    """exp((r* a^2 - r a^dag^2)/2) on a d-level truncation"""
    a = annihilation(d)
    return expm(0.5 * (np.conj(r) * a @ a - r * a.conj().T @ a.conj().T))


def beam_splitter_unitary(d: int) -> np.ndarray:
    """
    Balanced two-mode mixer on d x d levels, followed by a pi phase on the
    second mode, matching the sum/difference quadrature convention
    """
    a = np.kron(annihilation(d), np.eye(d))
    b = np.kron(np.eye(d), annihilation(d))
    mixer = expm(np.pi / 4 * (a.conj().T @ b - a @ b.conj().T))
    phase = np.diag(np.exp(1j * np.pi * number_diag((d, d), modes=[1])))
    return phase @ mixer


# --- random instances -----------------------------------------------------

def random_density_matrix(cutoffs: Sequence[int], rng: np.random.Generator, rank: int = None) -> FockOperator:
    """Ginibre-distributed mixed state"""
    cutoffs = _check_cutoffs(cutoffs)
    dim = int(np.prod(cutoffs))
    rank = dim if rank is None else rank
    G = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = G @ G.conj().T
    return FockOperator(rho / np.trace(rho).real, cutoffs)


def random_pure_state(cutoffs: Sequence[int], rng: np.random.Generator) -> FockOperator:
    return random_density_matrix(cutoffs, rng, rank=1)


def random_hermitian(cutoffs: Sequence[int], rng: np.random.Generator, scale: float = 1.0) -> FockOperator:
    cutoffs = _check_cutoffs(cutoffs)
    dim = int(np.prod(cutoffs))
    H = rng.normal(scale=scale, size=(dim, dim)) + 1j * rng.normal(scale=scale, size=(dim, dim))
    return FockOperator((H + H.conj().T) / 2, cutoffs)


def random_product_decomposition(cutoffs: Tuple[int, int], rng: np.random.Generator,
                                 n_terms: int = 3) -> List[Tuple[float, FockOperator, FockOperator]]:
    """Convex weights with random local states, [(p, rho_A, sigma_B), ...]"""
    d_a, d_b = _check_cutoffs(cutoffs)
    weights = rng.dirichlet(np.ones(n_terms))
    return [
        (float(p), random_density_matrix((d_a,), rng), random_density_matrix((d_b,), rng))
        for p in weights
    ]


def mix_product_terms(terms: Sequence[Tuple[float, FockOperator, FockOperator]]) -> FockOperator:
    total = None
    for p, rho_a, sigma_b in terms:
        term = p * rho_a.tensor(sigma_b)
        total = term if total is None else total + term
    return total
