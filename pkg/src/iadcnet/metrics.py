"""Conversion-quality and hardware-complexity metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .constraints import RealizedWeights
from .core import IADCModel, column, convert

FULL_SCALE = 1.0
ENOB_CEILING = 24.0
TEST_RANGE = (-0.35, 0.35)
TEST_POINTS = 1000
SNR_TRIALS = 32


def test_grid(count: int = TEST_POINTS, lo: float = TEST_RANGE[0], hi: float = TEST_RANGE[1]) -> np.ndarray:
    """Evenly spaced DC levels, endpoints included."""
    return np.linspace(lo, hi, count)


def enob_from_errors(errors, full_scale: float = FULL_SCALE, ceiling: float = ENOB_CEILING, with_flag: bool = False):
    """ENOB of an ideal uniform quantizer with the same RMS error.

    ``log2(full_scale / (sqrt(12) * rms))``; an exact conversion (``rms == 0``)
    returns ``ceiling`` and, with ``with_flag``, ``exact=True``.
    """
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("no errors to evaluate")
    if full_scale <= 0:
        raise ValueError("full_scale must be positive")
    rms = float(np.sqrt(np.mean(e * e)))
    exact = rms == 0.0
    enob = ceiling if exact else float(np.log2(full_scale / (np.sqrt(12.0) * rms)))
    enob = min(enob, ceiling)
    return (enob, exact) if with_flag else enob


def evaluate_sqnr(model: IADCModel, test_inputs=None, cycles: int | None = None) -> float:
    """Noise-free ENOB at ``cycles`` (default: the topology's N)."""
    x = test_grid() if test_inputs is None else np.asarray(test_inputs, dtype=float)
    trace = convert(x, model, cycles, noise_on=False)
    return enob_from_errors(x - trace.estimate())


def evaluate_snr(model: IADCModel, test_inputs=None, cycles: int | None = None, trials: int = SNR_TRIALS,
                 seed: int = 0) -> float:
    """ENOB with kT/C noise, errors pooled over ``trials`` noise realizations."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    x = test_grid() if test_inputs is None else np.asarray(test_inputs, dtype=float)
    rng = np.random.default_rng(seed)
    batch = np.tile(x, trials)
    trace = convert(batch, model, cycles, noise_on=True, rng=rng)
    return enob_from_errors(batch - trace.estimate())


def enis(realized: RealizedWeights) -> int:
    """Stages with a nonzero self-recurrent weight (delayed or not)."""
    W = realized.W_int
    count = 0
    for k in range(W.shape[0]):
        if W[k, column("xi", k)] != 0 or W[k, column("xi_star", k)] != 0:
            count += 1
    return count


def active_paths(realized: RealizedWeights) -> int:
    return int(np.count_nonzero(realized.W_int))


def enob_curve(model: IADCModel, test_inputs=None, max_cycles: int | None = None, noise_on: bool = False,
               trials: int = SNR_TRIALS, seed: int = 0):
    """ENOB after every cycle ``1..max_cycles`` and the average ENOB per cycle."""
    x = test_grid() if test_inputs is None else np.asarray(test_inputs, dtype=float)
    max_cycles = model.topology.N if max_cycles is None else int(max_cycles)
    if noise_on:
        x_run = np.tile(x, trials)
        trace = convert(x_run, model, max_cycles, noise_on=True, rng=np.random.default_rng(seed))
    else:
        x_run = x
        trace = convert(x_run, model, max_cycles)
    curve = np.array([enob_from_errors(x_run - trace.y[:, n]) for n in range(max_cycles)])
    return curve, float(curve[-1] / max_cycles)


@dataclass
class MetricBundle:
    sqnr_enob: float
    snr_enob: float
    enis: int
    ap: int
    c_tot: float
    enob_per_cycle: float
    enob_curve: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricBundle":
        return cls(**d)


def evaluate_model(model: IADCModel, realized: RealizedWeights, test_inputs=None, cycles: int | None = None,
                   trials: int = SNR_TRIALS, seed: int = 0) -> MetricBundle:
    x = test_grid() if test_inputs is None else np.asarray(test_inputs, dtype=float)
    cycles = model.topology.N if cycles is None else cycles
    curve, per_cycle = enob_curve(model, x, cycles)
    snr = evaluate_snr(model, x, cycles, trials, seed) if model.weight_sigma is not None else float(curve[-1])
    return MetricBundle(
        sqnr_enob=float(curve[-1]),
        snr_enob=float(snr),
        enis=enis(realized),
        ap=active_paths(realized),
        c_tot=float(realized.C_tot),
        enob_per_cycle=per_cycle,
        enob_curve=[float(v) for v in curve],
    )
