"""RTS smoothing over a stored forward EKF pass.

The backward recursion is the standard Rauch-Tung-Striebel pass expressed in
the variant's error coordinates: the smoothed-vs-predicted state difference
at k+1 is mapped into a 15-vector with the group logarithm, pulled back
through the smoother gain, and retracted into the filtered nominal at k.
"""

from dataclasses import dataclass

import numpy as np

from liese_nav.errors import SingularPredCov
from liese_nav.filter import apply_correction, error_state
from liese_nav.sensors import BiasState


@dataclass
class ForwardRecord:
    """One stored epoch of the forward pass.

    ``nav``/``bias``/``p_post`` are the post-update estimate at t. ``phi``
    is the accumulated transition matrix from t to the next epoch and
    ``p_pred``/``nav_pred``/``bias_pred`` the resulting next-epoch prior;
    they are None for the final record.
    """

    t: float
    nav: object
    bias: BiasState
    p_post: np.ndarray
    phi: np.ndarray = None
    p_pred: np.ndarray = None
    nav_pred: object = None
    bias_pred: BiasState = None


@dataclass
class SmoothedEpoch:
    t: float
    nav: object
    bias: BiasState
    p: np.ndarray


def rts_smooth(variant, records):
    """Backward RTS pass; returns a list of SmoothedEpoch, oldest first."""
    if not records:
        return []
    last = records[-1]
    out = [SmoothedEpoch(last.t, last.nav.copy(), last.bias.copy(), last.p_post.copy())]
    for rec in reversed(records[:-1]):
        nxt = out[-1]
        p_pred = rec.p_pred + 1e-12 * np.eye(15)
        try:
            # C = P_post Phi' P_pred^{-1}, via a solve on the transpose
            c = np.linalg.solve(p_pred, rec.phi @ rec.p_post).T
        except np.linalg.LinAlgError as exc:
            raise SingularPredCov(
                f"predicted covariance singular at t={rec.t}"
            ) from exc
        if not np.all(np.isfinite(c)):
            raise SingularPredCov(
                f"predicted covariance numerically singular at t={rec.t}"
            )
        dx_next = error_state(
            variant, nxt.nav, nxt.bias, rec.nav_pred, rec.bias_pred
        )
        dx = c @ dx_next
        nav, bias = apply_correction(variant, rec.nav, rec.bias, dx)
        p = rec.p_post + c @ (nxt.p - rec.p_pred) @ c.T
        p = 0.5 * (p + p.T)
        out.append(SmoothedEpoch(rec.t, nav, bias, p))
    out.reverse()
    return out
