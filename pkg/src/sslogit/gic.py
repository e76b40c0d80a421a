"""Information criterion for tuning-parameter selection.

The criterion is a weighted deviance on the labeled block plus twice the
trace of Q R^{-1}, where Q collects outer products of the per-point score
contributions and R is the penalized observed information, both averaged
over the labeled count. Only labeled points and the r-direction weights
enter; the unlabeled block influences the criterion through the fitted
coefficients alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .data import SplitDataset, build_design
from .em import FittedModel
from .errors import NumericalError
from .objective import TuningParams, power_weights
from .ratios import RatioWeights


@dataclass(frozen=True)
class GicMatrices:
    """Score-outer-product matrix Q and penalized information matrix R."""

    q: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class GicReport:
    """Criterion value with its two terms: gic = weighted_nll + 2 trace_term."""

    gic: float
    weighted_nll: float
    trace_term: float
    params: TuningParams


def _matrices(
    w: np.ndarray,
    x_lab: np.ndarray,
    y: np.ndarray,
    eta: np.ndarray,
    lam: float,
) -> GicMatrices:
    n1 = x_lab.shape[0]
    pi = expit(x_lab @ w)
    resid = y - pi
    kw = w.copy()
    kw[0] = 0.0
    u = eta * resid  # per-point score weight on the design row
    q = (x_lab * (u**2)[:, None]).T @ x_lab - lam * np.outer(kw, u @ x_lab)
    r = (x_lab * (eta * pi * (1.0 - pi))[:, None]).T @ x_lab
    r = 0.5 * (r + r.T)
    idx = np.arange(1, x_lab.shape[1])
    r[idx, idx] += n1 * lam
    return GicMatrices(q=q / n1, r=r / n1)


def _weighted_nll(w, x_lab, y, eta) -> float:
    z = x_lab @ w
    return -2.0 * float(eta @ (y * z - np.logaddexp(0.0, z)))


def _trace_term(mats: GicMatrices) -> float:
    """tr(Q R^{-1}) via a Cholesky solve; R must be positive definite."""
    try:
        factor = cho_factor(mats.r)
    except np.linalg.LinAlgError:
        try:
            factor = cho_factor(mats.r + 1e-10 * np.eye(mats.r.shape[0]))
        except np.linalg.LinAlgError:
            raise NumericalError("degenerate information matrix") from None
    return float(np.trace(cho_solve(factor, mats.q)))


def _report(w, x_lab, y, eta, params) -> GicReport:
    nll = _weighted_nll(w, x_lab, y, eta)
    trace = _trace_term(_matrices(w, x_lab, y, eta, params.lam))
    return GicReport(
        gic=nll + 2.0 * trace,
        weighted_nll=nll,
        trace_term=trace,
        params=params,
    )


def gic_matrices(
    model: FittedModel,
    data: SplitDataset,
    weights: RatioWeights,
) -> GicMatrices:
    """Q and R for the weighted fit, averaged over the labeled count."""
    x_lab = build_design(data.labeled_x)
    eta = power_weights(weights.r_labeled, model.params.gamma1)
    return _matrices(
        model.w, x_lab, data.labeled_y.astype(np.float64), eta, model.params.lam
    )


def gic_score(
    model: FittedModel,
    data: SplitDataset,
    weights: RatioWeights,
) -> GicReport:
    """Criterion for a density-ratio-weighted semi-supervised fit."""
    x_lab = build_design(data.labeled_x)
    eta = power_weights(weights.r_labeled, model.params.gamma1)
    return _report(model.w, x_lab, data.labeled_y.astype(np.float64), eta, model.params)


def gic_lsslr(model: FittedModel, data: SplitDataset) -> GicReport:
    """Criterion for the unit-weight semi-supervised fit."""
    x_lab = build_design(data.labeled_x)
    eta = np.ones(data.n_labeled)
    return _report(model.w, x_lab, data.labeled_y.astype(np.float64), eta, model.params)


def gic_slr(model: FittedModel, data: SplitDataset) -> GicReport:
    """Criterion for the labeled-only fit; same unit-weight formula."""
    return gic_lsslr(model, data)
