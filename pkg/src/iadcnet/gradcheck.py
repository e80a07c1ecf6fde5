"""Central finite-difference verification of recorded gradients.

Perturbations that would move a straight-through node across its
discontinuity or band edge are screened: for each scalar parameter the graph
is re-recorded at ``p - eps`` and ``p + eps`` and, if the discrete decisions
of any surrogate node (or the active region of a clip) differ from those at
``p``, or an input moved by the perturbation lies within ``band_guard`` of a
switching point,
the parameter is skipped and reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import InconclusiveCheckError

_GUARDED_OPS = {"quantize_sign", "heaviside", "round", "hardtanh", "clip", "relu", "abs", "encoder_cycle"}


@dataclass
class GradCheckReport:
    max_relative_error: float
    checked: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    worst: tuple | None = None


def _margin(op: str, v: np.ndarray, out: np.ndarray) -> float:
    if op in ("quantize_sign", "abs", "relu", "heaviside"):
        return float(np.min(np.abs(v)))
    if op == "round":
        return float(np.min(np.abs(v - np.floor(v) - 0.5)))
    # hardtanh / clip: distance to the bound, recovered from clipped entries
    clipped = out != v
    if not np.any(clipped):
        return np.inf
    bound = np.max(np.abs(out[clipped]))
    return float(np.min(np.abs(np.abs(v) - bound)))


def _branch_margin(tape: ad.Tape, base: ad.Tape) -> float:
    """Smallest distance to a switching point among entries the perturbation moved."""
    if len(tape.nodes) != len(base.nodes):
        return -np.inf
    margin = np.inf
    for node, ref in zip(tape.nodes, base.nodes):
        if node.op not in _GUARDED_OPS or not node.parents:
            continue
        if node.op == "encoder_cycle":
            if not np.array_equal(node.value, ref.value):
                margin = min(margin, node.meta[1])
            continue
        v = tape.nodes[node.parents[0]].value
        moved = v != base.nodes[ref.parents[0]].value
        if np.any(moved):
            margin = min(margin, _margin(node.op, np.atleast_1d(v)[np.atleast_1d(moved)],
                                         np.atleast_1d(node.value)[np.atleast_1d(moved)]))
    return margin


def _decisions(tape: ad.Tape) -> list:
    """Discrete state of every non-smooth node, in recording order."""
    out = []
    nodes = tape.nodes
    for node in nodes:
        if node.op == "encoder_cycle":
            out.append(node.meta[0])
        elif node.op in ("quantize_sign", "heaviside", "round"):
            out.append(node.value.tobytes())
        elif node.op in ("hardtanh", "clip", "relu", "abs") and node.parents:
            v = nodes[node.parents[0]].value
            out.append((node.value == v).tobytes() + np.signbit(v).tobytes())
    return out


def finite_diff_check(model_eval, params: dict, epsilon: float = 1e-5, band_guard: float = 1e-6,
                      names=None, max_params: int | None = None, rng=None,
                      abs_tol: float = 1e-9) -> GradCheckReport:
    """Compare :func:`autodiff.backward` with central differences.

    Returns a report whose ``max_relative_error`` is
    ``|g_ad - g_fd| / max(|g_ad|, |g_fd|)`` maximized over every unskipped
    scalar parameter. Coordinates where both gradients are below ``abs_tol``
    count as agreeing (relative error 0): there the difference quotient is
    pure round-off. Raises :class:`InconclusiveCheckError` when all
    parameters are skipped.
    """
    params = {k: np.array(v, dtype=float) for k, v in params.items()}
    _, tape = ad.forward_record(model_eval, params)
    grads = ad.backward(tape)
    base_decisions = _decisions(tape)
    names = list(params) if names is None else list(names)
    coords = [(name, idx) for name in names for idx in np.ndindex(params[name].shape)]
    if max_params is not None and len(coords) > max_params:
        rng = np.random.default_rng(0) if rng is None else rng
        pick = rng.choice(len(coords), size=max_params, replace=False)
        coords = [coords[i] for i in sorted(pick)]
    report = GradCheckReport(0.0)
    for name, idx in coords:
        values = []
        screened = False
        for sign in (1.0, -1.0):
            p = {k: v.copy() for k, v in params.items()}
            p[name][idx] += sign * epsilon
            f, t = ad.forward_record(model_eval, p)
            if _decisions(t) != base_decisions or _branch_margin(t, tape) < band_guard:
                screened = True
                break
            values.append(f)
        if screened:
            report.skipped.append((name, idx))
            continue
        fd = (values[0] - values[1]) / (2.0 * epsilon)
        g = float(grads[name][idx])
        scale = max(abs(g), abs(fd))
        rel = 0.0 if scale < abs_tol else abs(g - fd) / scale
        report.checked.append((name, idx, g, fd, rel))
        if rel >= report.max_relative_error:
            report.max_relative_error = rel
            report.worst = (name, idx, g, fd)
    if not report.checked:
        raise InconclusiveCheckError(f"all {len(report.skipped)} parameters were screened out")
    return report
