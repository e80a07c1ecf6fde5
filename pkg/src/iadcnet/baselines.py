"""Classical topologies: oracles, initializers and comparison points."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .constraints import RealizedWeights, weight_sigma
from .core import DecoderParams, EncoderWeights, IADCModel, Topology
from .errors import DegenerateModelWarning, DomainError, StructuralError

FIRST_ORDER_ENTRIES = {
    (0, "x", 0): 0.5,
    (0, "zeta_star", 0): -0.5,
    (0, "xi_star", 0): 1.0,
}


@dataclass
class ClassicalSpec:
    """A hand-sized topology.

    ``entries`` maps ``(target_stage, kind, source_stage)`` (0-based) to a
    gain, with ``kind`` one of ``x``, ``zeta``, ``xi``, ``zeta_star``,
    ``xi_star``.
    """

    name: str
    K: int
    entries: dict = field(default_factory=dict)
    decoder_depth: int | None = None
    input_scales: tuple | None = None
    N: int = 80


def classical_topology(spec: ClassicalSpec):
    """Instantiate ``(EncoderWeights, DecoderParams)`` from a spec."""
    if spec.K < 1:
        raise StructuralError("K must be >= 1")
    weights = EncoderWeights.from_entries(spec.K, spec.entries)
    if not np.any(weights.W):
        warnings.warn(f"classical topology {spec.name!r} has no active path", DegenerateModelWarning, stacklevel=2)
    depth = spec.K if spec.decoder_depth is None else spec.decoder_depth
    scales = np.ones(depth) if spec.input_scales is None else np.asarray(spec.input_scales, dtype=float)
    if len(scales) != depth:
        raise StructuralError("one input scale per decoder cell is required")
    return weights, DecoderParams.build(scales, spec.N)


def first_order(N: int = 80):
    """First-order modulator (delayed feedback and integration) with a counter decoder."""
    return classical_topology(ClassicalSpec("first-order", 1, dict(FIRST_ORDER_ENTRIES), 1, (1.0,), N))


def closed_form_reference(x: float, n: int):
    """Direct evaluation of the first-order summation formulas.

    Returns ``(xi, bitstream)`` where ``xi`` is the stage value after ``n``
    cycles and ``bitstream`` holds ``zeta[1..n]``. No saturation is modeled.
    """
    if abs(x) > 0.5:
        raise DomainError("|x| must not exceed 0.5")
    if n < 1:
        raise DomainError("n must be >= 1")
    zeta = np.empty(n)
    total = 0.0  # sum of zeta[1..m-1]
    xi = 0.0
    for m in range(1, n + 1):
        xi = 0.5 * (m * x - total)
        zeta[m - 1] = 0.5 if xi >= 0 else -0.5
        total += zeta[m - 1]
    return xi, zeta


def realized_from_weights(W: np.ndarray, q: float, C_unit) -> RealizedWeights:
    """Hardware view of a classical weight matrix sitting on the ``q`` grid."""
    W = np.asarray(W, dtype=float)
    W_int = np.round(W / q)
    if not np.allclose(q * W_int, W, atol=1e-12):
        raise DomainError("coefficients are not integer multiples of q")
    C_unit = np.broadcast_to(np.asarray(C_unit, dtype=float), (W.shape[0],)).copy()
    caps = C_unit[:, None] * np.abs(W_int)
    return RealizedWeights(
        M=(W_int != 0).astype(float), W_int=W_int, W=q * W_int, q=q,
        C_unit=C_unit, caps=caps, C_tot=float(caps.sum()),
    )


def first_order_model(N: int = 80, delta: float = 0.4, q: float = 0.5, C_unit: float = 1.0) -> tuple[IADCModel, RealizedWeights]:
    """Ready-to-evaluate first-order converter with kT/C levels for unit caps of ``C_unit`` pF."""
    weights, decoder = first_order(N)
    realized = realized_from_weights(weights.W, q, C_unit)
    topo = Topology(K=1, N=N, Q=int(np.max(np.abs(realized.W_int))), delta=delta, decoder_depth=1)
    model = IADCModel(topo, weights, decoder, weight_sigma(realized), meta={"name": "first-order"})
    return model, realized
