"""Constrained fitting of the rank-indexed monotone calibration maps.

The fit minimizes the mean NLL of the calibrated probabilities subject to
the linear ordering constraints on ``w`` and ``b``, using SLSQP with
analytic objective and constraint gradients.  There is no randomness
anywhere in the fit path: identical inputs and configuration produce
bitwise-identical results.
"""

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from . import core
from .transform import (
    DIRECT,
    INVERSE,
    MODES,
    MonotoneParams,
    label_positions,
    order_violations,
    sorted_nll_objective,
    truncate_training_set,
)


@dataclass(frozen=True)
class SolverConfig:
    """Solver tolerances and limits.

    ``w_floor`` is the lower bound imposed on every scale entry: strict
    positivity is an open condition unusable as a solver constraint, so the
    feasible set is closed at a negligible distance from it.
    """

    max_iterations: int = 500
    stationarity_tol: float = 1e-8
    constraint_tol: float = 1e-9
    w_floor: float = 1e-8

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("stationarity_tol", "constraint_tol", "w_floor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, doc):
        known = {f: doc[f] for f in ("max_iterations", "stationarity_tol", "constraint_tol", "w_floor") if f in doc}
        unknown = set(doc) - set(known)
        if unknown:
            raise ValueError(f"unknown solver config fields: {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True)
class FitResult:
    params: MonotoneParams
    final_loss: float
    iterations: int
    converged: bool
    constraint_violation: float
    dropped_samples: int = 0


def init_params(mode, k, m=None, w_floor=SolverConfig.w_floor):
    """Starting point of the fit.

    Direct mode: ``w`` equally spaced ascending over [0, 1] with the first
    entry lifted to ``w_floor``, ``b`` zero.  Inverse mode: ``w`` all ones,
    ``b`` zero.  Both satisfy their constraint systems exactly.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if k < 2:
        raise ValueError("need k >= 2")
    if mode == DIRECT:
        w = np.linspace(0.0, 1.0, k)
        w[0] = w_floor
    else:
        w = np.ones(k)
    return MonotoneParams(w=w, b=np.zeros(k), mode=mode, m=k if m is None else m)


def _chain_constraints(mode, k):
    """Linear inequality constraints encoding the ordering invariants.

    Rows of the w-chain are ``w[i+1] - w[i]`` (direct) or ``w[i] - w[i+1]``
    (inverse); the b-chain is ``b[i+1] - b[i]`` in both modes.  Jacobians are
    constant, so they are materialized once.
    """
    jac_w = np.zeros((k - 1, 2 * k))
    jac_b = np.zeros((k - 1, 2 * k))
    idx = np.arange(k - 1)
    sign = -1.0 if mode == DIRECT else 1.0
    jac_w[idx, idx] = sign
    jac_w[idx, idx + 1] = -sign
    jac_b[idx, k + idx] = -1.0
    jac_b[idx, k + idx + 1] = 1.0
    return [
        {"type": "ineq", "fun": lambda x: jac_w @ x, "jac": lambda x: jac_w},
        {"type": "ineq", "fun": lambda x: jac_b @ x, "jac": lambda x: jac_b},
    ]


def _repair(w, b, mode, w_floor):
    """Make a near-feasible iterate exactly feasible.

    SLSQP can overshoot linear constraints by a few ulp; the cumulative
    max/min below removes any residual inversion without moving feasible
    entries at all.
    """
    if mode == DIRECT:
        w = np.maximum(np.maximum.accumulate(w), w_floor)
    else:
        w = np.maximum(np.minimum.accumulate(w), w_floor)
    return w, np.maximum.accumulate(b)


def constraint_violation(params, w_floor=SolverConfig.w_floor):
    """Largest violation of the ordering constraints and the scale floor (0 if feasible)."""
    dw = np.diff(params.w)
    if params.mode == INVERSE:
        dw = -dw
    worst = max(
        float((-dw).max(initial=0.0)),
        float((-np.diff(params.b)).max(initial=0.0)),
        float((w_floor - params.w).max(initial=0.0)),
    )
    return worst if worst > 0.0 else 0.0


def fit_mcct(z, y, mode=DIRECT, k=None, cfg=None):
    """Fit a monotone calibration map by constrained NLL minimization.

    With ``k`` below the class count, each row's sorted logits are truncated
    to the top k columns and samples whose true class falls outside them are
    dropped from the fitting set (their count is reported on the result).

    The returned parameters are always exactly feasible and never worse in
    loss than the initialization.
    """
    cfg = cfg or SolverConfig()
    z = core.validate_logits(z)
    n, m = z.shape
    y = core.validate_labels(y, m, n=n)
    if n < 2:
        raise ValueError("need at least 2 samples to fit")
    k = m if k is None else int(k)
    if not 2 <= k <= m:
        raise ValueError(f"need 2 <= k <= m, got k={k}, m={m}")
    ties = core.validate_distinct(z)
    if ties:
        warnings.warn(
            f"{len({row for row, _ in ties})} rows contain tied logits; "
            "rank order within ties follows column index"
        )
    if np.unique(y).size == 1:
        warnings.warn("all calibration labels are identical; the fit is degenerate")

    s, perm = core.sort_rows(z)
    pos = label_positions(perm, y)
    s_fit, pos_fit, dropped = truncate_training_set(s, pos, k)
    if s_fit.shape[0] == 0:
        raise ValueError("every sample's true class fell outside the top k ranks")

    def fun(x):
        loss, gw, gb = sorted_nll_objective(s_fit, pos_fit, x[:k], x[k:], mode)
        return loss, np.concatenate([gw, gb])

    start = init_params(mode, k, m=m, w_floor=cfg.w_floor)
    x0 = np.concatenate([start.w, start.b])
    init_loss = fun(x0)[0]
    res = minimize(
        fun,
        x0,
        jac=True,
        method="SLSQP",
        bounds=[(cfg.w_floor, None)] * k + [(None, None)] * k,
        constraints=_chain_constraints(mode, k),
        options={"maxiter": cfg.max_iterations, "ftol": cfg.stationarity_tol},
    )
    w, b = _repair(res.x[:k], res.x[k:], mode, cfg.w_floor)
    final_loss = sorted_nll_objective(s_fit, pos_fit, w, b, mode)[0]
    converged = bool(res.success)
    if final_loss > init_loss:
        w, b, final_loss, converged = start.w, start.b, init_loss, False
    params = MonotoneParams(w=w, b=b, mode=mode, m=m)
    broken = order_violations(z, params)
    if broken:
        warnings.warn(
            f"fitted map reorders scores on {broken} of {n} calibration rows "
            "(possible for rows with negative score pairs; predictions for rows "
            "with a non-negative maximum are still preserved)"
        )
    return FitResult(
        params=params,
        final_loss=float(final_loss),
        iterations=int(res.nit),
        converged=converged,
        constraint_violation=constraint_violation(params, cfg.w_floor),
        dropped_samples=dropped,
    )
