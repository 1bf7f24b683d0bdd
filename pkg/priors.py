"""
Amplitude priors, their Fisher information and the Bayesian Cramer-Rao
bound on the separable MDI score
"""

import logging
from functools import lru_cache
from typing import Dict, Any, List, Tuple

import numpy as np
from scipy.integrate import quad, dblquad

logger = logging.getLogger(__name__)

QUAD_TOLERANCE = 1e-10
GAUSSIAN_TAIL_STDS = 12.0
# heterodyne information per quadrature for a coherent input with vacuum variance 1/4
HETERODYNE_INFORMATION = 2.0

PRIOR_KINDS = ("gaussian", "smooth_box", "point")


class PriorError(ValueError):
    """Raised for invalid or unsupported prior parameters"""


class PriorSpec:
    """
    Distribution of a coherent amplitude alpha = alpha_x + i alpha_p

    gaussian:   P(alpha) = exp(-|alpha|^2/sigma^2)/(pi sigma^2)
    smooth_box: P = I(alpha_x) I(alpha_p)/l^2 with I a smoothed indicator of
                [-l/2, l/2] whose edges ramp over a width delta
    point:      alpha pinned to a fixed value
    """

    def __init__(self, kind: str, sigma: float = None, l: float = None, delta: float = None,
                 alpha_x: float = 0.0, alpha_p: float = 0.0):
        if kind not in PRIOR_KINDS:
            raise PriorError(f"Unsupported prior shape '{kind}', expected one of {PRIOR_KINDS}")
        if kind == "gaussian":
            if sigma is None or not np.isfinite(sigma) or sigma <= 0:
                raise PriorError(f"Gaussian prior width must be positive and finite, got sigma={sigma}")
        elif kind == "smooth_box":
            if l is None or delta is None or not (np.isfinite(l) and np.isfinite(delta)):
                raise PriorError(f"Smooth-box prior needs finite l and delta, got l={l}, delta={delta}")
            if delta <= 0:
                raise PriorError(f"Smooth-box edge width must be positive, got delta={delta}")
            if delta > l:
                raise PriorError(f"Smooth-box prior needs delta <= l, got delta={delta} > l={l}")
        elif not (np.isfinite(alpha_x) and np.isfinite(alpha_p)):
            raise PriorError(f"Point prior must be finite, got ({alpha_x}, {alpha_p})")

        self.kind = kind
        self.sigma = float(sigma) if sigma is not None else None
        self.l = float(l) if l is not None else None
        self.delta = float(delta) if delta is not None else None
        self.alpha_x = float(alpha_x)
        self.alpha_p = float(alpha_p)

    @classmethod
    def gaussian(cls, sigma: float) -> "PriorSpec":
        return cls("gaussian", sigma=sigma)

    @classmethod
    def smooth_box(cls, l: float, delta: float) -> "PriorSpec":
        return cls("smooth_box", l=l, delta=delta)

    @classmethod
    def point(cls, alpha_x: float = 0.0, alpha_p: float = 0.0) -> "PriorSpec":
        return cls("point", alpha_x=alpha_x, alpha_p=alpha_p)

    def variance(self) -> float:
        """Per-component variance of alpha_x (equal to that of alpha_p)"""
        return prior_variance(self)

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "gaussian":
            return {"kind": self.kind, "sigma": self.sigma}
        if self.kind == "smooth_box":
            return {"kind": self.kind, "l": self.l, "delta": self.delta}
        return {"kind": self.kind, "alpha_x": self.alpha_x, "alpha_p": self.alpha_p}

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.to_dict().items() if k != "kind")
        return f"PriorSpec.{self.kind}({params})"


# --- smooth box density ---------------------------------------------------

def smooth_indicator(x, l: float, delta: float):
    """Smoothed indicator of [-l/2, l/2]; sinusoidal ramps of width delta"""
    x = np.asarray(x, dtype=float)
    inner = l / 2 - delta / 2
    outer = l / 2 + delta / 2
    ax = np.abs(x)
    # symmetric in x, so the falling edge formula covers both ramps
    ramp = 0.5 - 0.5 * np.sin(np.pi / delta * np.clip(ax - l / 2, -delta / 2, delta / 2))
    return np.where(ax <= inner, 1.0, np.where(ax >= outer, 0.0, ramp))


def smooth_box_pdf(x, l: float, delta: float):
    return smooth_indicator(x, l, delta) / l


def _smooth_box_pdf_derivative(x, l: float, delta: float):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    on_ramp = (ax > l / 2 - delta / 2) & (ax < l / 2 + delta / 2)
    slope = -0.5 * np.pi / delta * np.cos(np.pi / delta * (ax - l / 2)) / l
    return np.where(on_ramp, np.sign(x) * slope, 0.0)


def smooth_box_cdf(x, l: float, delta: float):
    """Analytic CDF of one smooth-box component"""
    x = np.asarray(x, dtype=float)
    left = -np.abs(x)
    x0 = -l / 2 - delta / 2
    x1 = -l / 2 + delta / 2

    ramp = 0.5 * (left - x0) - delta / (2 * np.pi) * np.cos(np.pi * np.clip(left + l / 2, -delta / 2, delta / 2) / delta)
    mass = np.where(left <= x0, 0.0, np.where(left <= x1, ramp, delta / 2 + (left - x1))) / l
    return np.where(x <= 0, mass, 1.0 - mass)


def smooth_box_breakpoints(l: float, delta: float) -> List[float]:
    return [-l / 2 - delta / 2, -l / 2 + delta / 2, l / 2 - delta / 2, l / 2 + delta / 2]


@lru_cache(maxsize=32)
def inverse_cdf_table(l: float, delta: float, n_knots: int = 2 ** 14) -> Tuple[np.ndarray, np.ndarray]:
    """(cdf values, abscissae) on n_knots points over the support"""
    support = np.linspace(-l / 2 - delta / 2, l / 2 + delta / 2, n_knots)
    cdf = smooth_box_cdf(support, l, delta)
    cdf[0], cdf[-1] = 0.0, 1.0
    cdf.setflags(write=False)
    support.setflags(write=False)
    return cdf, support


def prior_variance(prior: PriorSpec) -> float:
    if prior.kind == "gaussian":
        return prior.sigma ** 2 / 2
    if prior.kind == "point":
        return 0.0
    l, d = prior.l, prior.delta
    plateau = (l - d) ** 3 / 12
    ramps = d * l ** 2 / 4 + d ** 3 / 12 - 2 * l * d ** 2 / np.pi ** 2
    return (plateau + ramps) / l


# --- Fisher information ---------------------------------------------------

def fim_gaussian(sigma: float) -> np.ndarray:
    if sigma is None or not np.isfinite(sigma) or sigma <= 0:
        raise PriorError(f"sigma must be positive and finite, got {sigma}")
    return np.diag([2.0 / sigma ** 2, 2.0 / sigma ** 2])


def fim_smooth_box(l: float, delta: float) -> np.ndarray:
    PriorSpec.smooth_box(l, delta)
    entry = np.pi ** 2 / (l * delta)
    return np.diag([entry, entry])


def fim_for_prior(prior: PriorSpec) -> np.ndarray:
    if prior.kind == "gaussian":
        return fim_gaussian(prior.sigma)
    if prior.kind == "smooth_box":
        return fim_smooth_box(prior.l, prior.delta)
    raise PriorError(f"No Fisher information for a {prior.kind} prior")


def _component_density(prior: PriorSpec):
    """(pdf, derivative, integration breakpoints) for one quadrature component"""
    if prior.kind == "gaussian":
        v = prior.sigma ** 2 / 2

        def pdf(x):
            return np.exp(-x * x / (2 * v)) / np.sqrt(2 * np.pi * v)

        def dpdf(x):
            return -x / v * pdf(x)

        half_width = GAUSSIAN_TAIL_STDS * np.sqrt(v)
        return pdf, dpdf, [-half_width, 0.0, half_width]

    if prior.kind == "smooth_box":
        l, d = prior.l, prior.delta
        return (
            lambda x: float(smooth_box_pdf(x, l, d)),
            lambda x: float(_smooth_box_pdf_derivative(x, l, d)),
            smooth_box_breakpoints(l, d),
        )
    raise PriorError(f"No density for a {prior.kind} prior")


def fim_quadrature(prior: PriorSpec, two_dimensional: bool = False) -> np.ndarray:
    """
    Fisher information A_ij = int (d_i P)(d_j P)/P by adaptive quadrature,
    split at the points where the density changes piece
    """
    pdf, dpdf, breaks = _component_density(prior)

    def score_sq(x):
        p = pdf(x)
        return dpdf(x) ** 2 / p if p > 0 else 0.0

    if not two_dimensional:
        total = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            value, _ = quad(score_sq, a, b, epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE, limit=200)
            total += value
        return np.diag([total, total])

    def integrand(i, j):
        def f(y, x):
            p = pdf(x) * pdf(y)
            if p <= 0:
                return 0.0
            grad = (dpdf(x) * pdf(y), pdf(x) * dpdf(y))
            return grad[i] * grad[j] / p
        return f

    fim = np.zeros((2, 2))
    for i, j in [(0, 0), (0, 1), (1, 1)]:
        total = 0.0
        for xa, xb in zip(breaks[:-1], breaks[1:]):
            for ya, yb in zip(breaks[:-1], breaks[1:]):
                value, _ = dblquad(integrand(i, j), xa, xb, ya, yb,
                                   epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE)
                total += value
        fim[i, j] = fim[j, i] = total
    return fim


def density_normalization(prior: PriorSpec) -> float:
    """Integral of one component density (should be 1)"""
    pdf, _, breaks = _component_density(prior)
    return sum(
        quad(pdf, a, b, epsabs=QUAD_TOLERANCE, epsrel=QUAD_TOLERANCE)[0]
        for a, b in zip(breaks[:-1], breaks[1:])
    )


# --- bounds ---------------------------------------------------------------

def bayesian_crb_from_fim(fim: np.ndarray) -> float:
    """Minimal sum of estimation variances, sum_i 1/(A_ii + 2)"""
    fim = np.asarray(fim, dtype=float)
    return float(np.sum(1.0 / (np.diag(fim) + HETERODYNE_INFORMATION)))


def bayesian_crb_sum(sigma: float) -> float:
    """sigma^2/(1+sigma^2); the limit 1 is returned for sigma = inf"""
    if sigma is None or np.isnan(sigma) or sigma <= 0:
        raise PriorError(f"sigma must be positive, got {sigma}")
    if np.isinf(sigma):
        return 1.0
    return sigma ** 2 / (1 + sigma ** 2)


def bound_is_possibly_loose(prior: PriorSpec) -> bool:
    """The multi-parameter bound is only known to be tight for Gaussian-equivalent priors"""
    return prior.kind == "smooth_box" and prior.delta < prior.l


def separable_mdi_bound(kappa: float, prior: PriorSpec) -> float:
    """(kappa^2 + kappa^-2)/2 times the Bayesian bound of the prior"""
    if kappa is None or not np.isfinite(kappa) or kappa <= 0:
        raise PriorError(f"kappa must be positive and finite, got {kappa}")
    crb = bayesian_crb_from_fim(fim_for_prior(prior))
    if bound_is_possibly_loose(prior):
        logger.warning(f"Separable bound for {prior} uses a multi-parameter CRB that is possibly loose")
    return 0.5 * (kappa ** 2 + kappa ** -2) * crb


def prior_report(prior: PriorSpec, kappa: float = 1.0) -> Dict[str, Any]:
    """Closed-form and quadrature FIM plus bounds, as a JSON-ready dict"""
    closed = fim_for_prior(prior)
    numeric = fim_quadrature(prior)
    report = {
        "prior": prior.to_dict(),
        "kappa": kappa,
        "fim": closed.tolist(),
        "fim_quadrature": numeric.tolist(),
        "fim_max_abs_error": float(np.max(np.abs(closed - numeric))),
        "normalization": density_normalization(prior),
        "component_variance": prior.variance(),
        "crb_sum": bayesian_crb_from_fim(closed),
        "separable_mdi_bound": separable_mdi_bound(kappa, prior),
        "possibly_loose": bound_is_possibly_loose(prior),
    }
    if prior.kind == "smooth_box" and prior.delta == prior.l:
        report["equivalent_gaussian_sigma"] = float(np.sqrt(2.0) * prior.l / np.pi)
    if prior.kind == "gaussian":
        report["equivalent_smooth_box_l"] = float(np.pi * prior.sigma / np.sqrt(2.0))
    return report
