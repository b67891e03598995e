"""Per-dimension charge-assignment weights, derivatives, and lookup tables.

The assignment family is the centered cardinal B-spline of odd order S.  An
atom sits at fractional offset t in [-1/2, 1/2) from its nearest grid node
(in units of the grid spacing) and spreads over the S nearest nodes
j = -(S-1)/2 .. (S-1)/2.  The weight on node j is M_S(t + S/2 - j), where M_S
is the cardinal B-spline supported on [0, S], so the weights sum to exactly 1
for every t (partition of unity) and the derivative rows sum to exactly 0.

Rows are zero-padded to a fixed length of 8 so downstream accumulation loops
can always consume a full row without masking; the padding entries contribute
exactly nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SUPPORTED_ORDERS

PADDED_LEN = 8


def _check_order(order):
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported stencil order {order}; expected one of {SUPPORTED_ORDERS}")


def _check_offset(t):
    if not np.isfinite(t):
        raise ValueError("fractional offset must be finite")
    if not (-0.5 <= t < 0.5):
        raise ValueError(f"fractional offset {t} outside [-1/2, 1/2)")


def weight_rows(t, order):
    """Assignment and derivative rows for offsets ``t`` (no domain checks).

    ``t`` may be a scalar or any-shape array; returns two arrays of shape
    ``t.shape + (8,)``.  Entries ``order`` .. 7 are exactly zero.  Row entry i
    belongs to node j = i - (order-1)/2, lowest grid index first.

    Evaluation uses the triangular recurrence on the unit-spaced sample points
    M_m(w + k) with w = t + 1/2, which costs O(order^2) vector operations and
    is numerically identical for scalar and batched inputs.
    """
    t = np.asarray(t, dtype=float)
    w = t + 0.5  # in [0, 1): position inside the lowest support cell
    shape = t.shape

    # samples[k] = M_m(w + k) for the current order m, k = 0 .. m-1
    samples = np.zeros(shape + (order,))
    samples[..., 0] = 1.0
    deriv_samples = None
    for m in range(2, order + 1):
        if m == order:
            # M_S'(x) = M_{S-1}(x) - M_{S-1}(x - 1), evaluated at x = w + k
            deriv_samples = np.zeros(shape + (order,))
            deriv_samples[..., 0] = samples[..., 0]
            for k in range(1, order - 1):
                deriv_samples[..., k] = samples[..., k] - samples[..., k - 1]
            deriv_samples[..., order - 1] = -samples[..., order - 2]
        lifted = np.zeros(shape + (order,))
        lifted[..., 0] = w * samples[..., 0] / (m - 1)
        for k in range(1, m - 1):
            lifted[..., k] = ((w + k) * samples[..., k] + (m - w - k) * samples[..., k - 1]) / (m - 1)
        lifted[..., m - 1] = (m - w - (m - 1)) * samples[..., m - 2] / (m - 1)
        samples = lifted

    # Node i holds the sample at w + (order-1-i): reverse the k axis.
    assign = np.zeros(shape + (PADDED_LEN,))
    deriv = np.zeros(shape + (PADDED_LEN,))
    assign[..., :order] = samples[..., ::-1]
    deriv[..., :order] = deriv_samples[..., ::-1]
    return assign, deriv


def assignment_weights(t, order):
    """Length-8 zero-padded assignment weight row at fractional offset ``t``.

    ``t`` must lie in [-1/2, 1/2); ``order`` must be 3, 5, or 7.  The leading
    ``order`` entries are the B-spline weights of the ``order`` nearest nodes,
    lowest grid index first; they are non-negative and sum to 1.
    """
    _check_order(order)
    _check_offset(t)
    assign, _ = weight_rows(float(t), order)
    return assign


def derivative_weights(t, order):
    """Length-8 zero-padded derivative row: d/dt of :func:`assignment_weights`.

    The derivative is taken with respect to the atom offset ``t`` (in grid
    spacing units); the entries sum to 0.
    """
    _check_order(order)
    _check_offset(t)
    _, deriv = weight_rows(float(t), order)
    return deriv


@dataclass(frozen=True)
class StencilTable:
    """Precomputed assignment and derivative rows over the offset domain.

    Bin k covers the half-open interval [-1/2 + k/n, -1/2 + (k+1)/n); the
    stored row is the exact evaluation at the bin center, so a lookup is off
    by at most half a bin width of offset quantization.
    """

    order: int
    n_points: int
    assignment: np.ndarray  # (n_points, 8)
    derivative: np.ndarray  # (n_points, 8)

    @property
    def bin_width(self) -> float:
        return 1.0 / self.n_points

    def bin_index(self, t):
        """Bin containing offset ``t`` (vectorized, clipped to valid range)."""
        idx = np.floor((np.asarray(t, dtype=float) + 0.5) * self.n_points).astype(np.intp)
        return np.clip(idx, 0, self.n_points - 1)


def build_table(order, n_points=5000) -> StencilTable:
    """Tabulate both weight families at the ``n_points`` bin centers."""
    _check_order(order)
    n_points = int(n_points)
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    centers = -0.5 + (np.arange(n_points) + 0.5) / n_points
    assign, deriv = weight_rows(centers, order)
    assign.flags.writeable = False
    deriv.flags.writeable = False
    return StencilTable(order=order, n_points=n_points, assignment=assign, derivative=deriv)


def lookup_weights(table: StencilTable, t):
    """Nearest-entry table lookup: rows of the bin containing ``t``.

    Returns ``(assignment_row, derivative_row)``.  No interpolation is done;
    an offset exactly at a bin center reproduces the direct evaluation
    bitwise.
    """
    _check_offset(t)
    idx = int(table.bin_index(float(t)))
    return table.assignment[idx], table.derivative[idx]
