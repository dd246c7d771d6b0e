"""Rank-indexed monotone calibration maps on sorted logits.

A map is parameterized by a scale vector ``w`` and a bias vector ``b``
indexed by rank (position in the per-row ascending sort), not by class.
Each row is sorted, transformed elementwise, and scattered back to its
original column order:

* direct mode:   sorted row ``s`` maps to ``s * w + b`` with ``w`` positive
  and non-decreasing and ``b`` non-decreasing;
* inverse mode:  ``s / w + b`` with ``w`` positive and non-increasing and
  ``b`` non-decreasing (an equivalent parameterization whose gradient in
  ``w`` shrinks as ``1 / w**2``, implicitly discouraging large scales).

With fewer parameters than classes (``k < m``), the top k ranks get their
own entries and every lower rank is transformed with the first (lowest-rank)
scale/bias pair.

Order preservation is conditional, not universal.  Rescaling two sorted
values keeps their order only when the pair is not both negative: for
``s = (-10, -1)`` and ``w = (0.1, 2)`` the transform yields ``(-1, -2)``
and reverses them.  The exact guarantees (either mode, any valid
parameters) are:

* every comparison involving a non-negative value is preserved, so rows
  whose entries are all non-negative are fully order-preserved, and the
  argmax is preserved for every row whose maximum is non-negative
  (true of real classifier logits in practice);
* constant ``w`` with zero ``b`` preserves every row exactly (temperature
  scaling).

Pairs of negative values can swap when the scale gap is large relative to
the value gap.  :func:`order_violations` counts affected rows, and the
fitting routine warns when a fitted map violates ordering on its own
calibration data.
"""

from dataclasses import dataclass

import numpy as np

from . import core

DIRECT = "direct"
INVERSE = "inverse"
MODES = (DIRECT, INVERSE)


@dataclass(frozen=True)
class MonotoneParams:
    """Fitted parameters of a rank-indexed monotone map.

    ``w`` and ``b`` have length ``k <= m`` where ``m`` is the number of
    classes the map applies to.  The ordering invariants (see module
    docstring) are checked on construction.
    """

    w: np.ndarray
    b: np.ndarray
    mode: str
    m: int

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if w.ndim != 1 or b.ndim != 1 or w.shape != b.shape:
            raise ValueError("w and b must be 1-D vectors of equal length")
        k = w.shape[0]
        if not 2 <= k <= self.m:
            raise ValueError(f"need 2 <= k <= m, got k={k}, m={self.m}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("parameters must be finite")
        if np.any(w <= 0):
            raise ValueError("every scale entry must be strictly positive")
        dw = np.diff(w)
        if self.mode == DIRECT and np.any(dw < 0):
            raise ValueError("direct mode requires non-decreasing w")
        if self.mode == INVERSE and np.any(dw > 0):
            raise ValueError("inverse mode requires non-increasing w")
        if np.any(np.diff(b) < 0):
            raise ValueError("b must be non-decreasing")

    @property
    def k(self):
        return self.w.shape[0]

    def to_json(self):
        """JSON document with the fixed interchange field names."""
        return {
            "mode": self.mode,
            "m": int(self.m),
            "k": int(self.k),
            "w": [float(v) for v in self.w],
            "b": [float(v) for v in self.b],
        }

    @classmethod
    def from_json(cls, doc):
        params = cls(
            w=np.asarray(doc["w"], dtype=np.float64),
            b=np.asarray(doc["b"], dtype=np.float64),
            mode=doc["mode"],
            m=int(doc["m"]),
        )
        if params.k != int(doc["k"]):
            raise ValueError(f"declared k={doc['k']} does not match len(w)={params.k}")
        return params


def constraint_vectors(params):
    """Consecutive-difference vectors whose non-negativity encodes the invariants.

    Direct mode returns ``(w[i+1] - w[i], b[i+1] - b[i])``; inverse mode
    returns ``(w[i] - w[i+1], b[i+1] - b[i])``.  Both are length k-1 and
    elementwise >= 0 for valid parameters.
    """
    dw = np.diff(params.w)
    if params.mode == INVERSE:
        dw = -dw
    return dw, np.diff(params.b)


def _rank_aligned_wb(params):
    """Length-m scale/bias vectors: top k ranks get w/b, lower ranks w[0]/b[0]."""
    pad = params.m - params.k
    if pad == 0:
        return params.w, params.b
    return (
        np.concatenate([np.full(pad, params.w[0]), params.w]),
        np.concatenate([np.full(pad, params.b[0]), params.b]),
    )


def _transform_sorted(s, w, b, mode):
    if mode == DIRECT:
        return s * w + b
    return s / w + b


def apply_map(z, params):
    """Apply a full-rank (k == m) monotone map to a logit matrix."""
    if params.k != params.m:
        raise ValueError("apply_map requires k == m; use apply_map_topk for truncated maps")
    return apply_map_topk(z, params)


def apply_map_topk(z, params):
    """Apply a monotone map with k <= m retained ranks to a logit matrix.

    The k largest sorted logits of each row are transformed with the k
    scale/bias entries aligned to the top ranks; every lower-ranked logit is
    transformed with the first entry pair.  The per-row ordering of the
    output matches the input's.
    """
    z = core.validate_logits(z)
    if z.shape[1] != params.m:
        raise ValueError(f"map was built for m={params.m} classes, data has m={z.shape[1]}")
    s, perm = core.sort_rows(z)
    w, b = _rank_aligned_wb(params)
    return core.inverse_sort_rows(_transform_sorted(s, w, b, params.mode), perm)


def order_violations(z, params):
    """Number of rows whose score ordering the map fails to preserve.

    A row is counted when the transformed sorted values are not strictly
    ascending (see the module docstring for when this can happen).
    """
    z = core.validate_logits(z)
    s, _ = core.sort_rows(z)
    w, b = _rank_aligned_wb(params)
    t = _transform_sorted(s, w, b, params.mode)
    return int((np.diff(t, axis=1) <= 0).any(axis=1).sum())


def label_positions(perm, y):
    """Rank position (0 = smallest logit) of each sample's true class."""
    inv = np.argsort(perm, axis=1, kind="stable")
    return inv[np.arange(perm.shape[0]), y]


def truncate_training_set(z_sorted, y_pos, k):
    """Restrict a sorted fitting set to its top-k columns.

    ``y_pos`` holds per-sample rank positions of the true class (as from
    :func:`label_positions`).  Samples whose true class falls below the top
    k ranks would have no target inside the retained columns, so they are
    dropped from the fitting set and counted.

    Returns ``(reduced sorted matrix, reduced positions, dropped count)``
    where positions are re-indexed into [0, k).
    """
    z_sorted = np.asarray(z_sorted, dtype=np.float64)
    n, m = z_sorted.shape
    if not 2 <= k <= m:
        raise ValueError(f"need 2 <= k <= m, got k={k}, m={m}")
    y_pos = np.asarray(y_pos)
    cut = m - k
    keep = y_pos >= cut
    return z_sorted[keep][:, cut:], (y_pos[keep] - cut).astype(np.int64), int(n - keep.sum())


def sorted_nll_objective(s, y_pos, w, b, mode):
    """Mean NLL of the transformed sorted logits, with analytic gradients.

    ``s`` is an (n, k) ascending-sorted logit block and ``y_pos`` the true
    class's position within each row.  Returns ``(loss, grad_w, grad_b)``
    where the gradients are means over samples of the per-sample expressions
    ``s * (p - e_y)`` (direct) or ``-s / w**2 * (p - e_y)`` (inverse) and
    ``p - e_y`` respectively, with ``p`` the row softmax of the transformed
    block and ``e_y`` the one-hot target at ``y_pos``.
    """
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("scale entries must be strictly positive")
    t = _transform_sorted(s, w, b, mode)
    t = t - t.max(axis=1, keepdims=True)
    e = np.exp(t)
    p = e / e.sum(axis=1, keepdims=True)
    n = s.shape[0]
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(p[rows, y_pos], core.LOG_FLOOR)).mean())
    resid = p.copy()
    resid[rows, y_pos] -= 1.0
    grad_b = resid.mean(axis=0)
    if mode == DIRECT:
        grad_w = (s * resid).mean(axis=0)
    else:
        grad_w = (-(s / (w * w)) * resid).mean(axis=0)
    return loss, grad_w, grad_b


def objective_and_gradient(z, y, params):
    """Fitting objective for a full-rank map: mean NLL and its (w, b) gradient.

    The loss equals ``nll(softmax_rows(apply_map(z, params)), y)``; the
    gradients are evaluated in the sorted domain against the per-row
    permuted one-hot target, which is the same quantity.
    """
    z = core.validate_logits(z)
    y = core.validate_labels(y, z.shape[1], n=z.shape[0])
    if params.k != params.m or params.m != z.shape[1]:
        raise ValueError("objective_and_gradient requires a full-rank map matching the data")
    s, perm = core.sort_rows(z)
    pos = label_positions(perm, y)
    return sorted_nll_objective(s, pos, params.w, params.b, params.mode)
