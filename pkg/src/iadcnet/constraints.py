"""Hardware constraints expressed as losses, weight realization and noise.

Covers the mapping from circuit concerns to training mechanisms: the
log-sum-exp fidelity loss, the dynamic-range regularizer, the capacitor-area
hinge, the masked and quantized weight realization, and kT/C sampling noise
sized from the realized capacitors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DegenerateModelWarning, DomainError, StructuralError

BOLTZMANN = 1.380649e-23  # J/K
TEMPERATURE = 300.0  # K
V_REF = 1.0  # V per normalized unit
C_MIN = 0.01  # pF
PICO = 1e-12


@dataclass
class LatentParams:
    W_l: np.ndarray
    M_l: np.ndarray
    q: float
    C_unit: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.W_l = np.asarray(self.W_l, dtype=float)
        self.M_l = np.asarray(self.M_l, dtype=float)
        self.C_unit = np.asarray(self.C_unit, dtype=float).reshape(-1)
        self.omega = np.asarray(self.omega, dtype=float).reshape(-1)
        self.q = float(self.q)
        if self.W_l.shape != self.M_l.shape:
            raise StructuralError("latent weights and latent mask must share a shape")
        if self.q <= 0:
            raise DomainError("quantization step q must be positive")
        if len(self.C_unit) != self.W_l.shape[0]:
            raise StructuralError("need one unit capacitor per stage")

    def to_unconstrained(self) -> dict[str, np.ndarray]:
        """Optimizer view: log-parameterized step and capacitors."""
        return {
            "W_l": self.W_l.copy(),
            "M_l": self.M_l.copy(),
            "log_q": np.array(np.log(self.q)),
            "log_c": np.log(np.maximum(self.C_unit, C_MIN)),
            "omega": self.omega.copy(),
        }

    @classmethod
    def from_unconstrained(cls, p: dict) -> "LatentParams":
        return cls(
            W_l=np.array(p["W_l"]),
            M_l=np.array(p["M_l"]),
            q=float(np.exp(p["log_q"])),
            C_unit=np.exp(np.asarray(p["log_c"])),
            omega=np.array(p["omega"]),
        )


@dataclass
class RealizedWeights:
    M: np.ndarray
    W_int: np.ndarray
    W: np.ndarray
    q: float
    C_unit: np.ndarray
    caps: np.ndarray
    C_tot: float

    @property
    def K(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class LossWeights:
    lambda_dr: float = 0.01
    lambda_tpt: float = 0.0001
    tpt: float = 16.0

    def __post_init__(self):
        if min(self.lambda_dr, self.lambda_tpt, self.tpt) < 0:
            raise DomainError("loss weights and threshold must be non-negative")


def binarize_mask(M_l):
    """Strict heaviside of the latent mask (``M_l == 0`` maps to 0)."""
    return ad.heaviside(M_l)


def realize_tensors(W_l, M_l, q, C_unit, Q: int):
    """Recordable realization; returns ``(M, W_int, W, caps)``.

    Accepts numpy arrays or tape variables for every parameter.
    """
    M = binarize_mask(M_l)
    W_int = ad.clip(ad.round_ste(ad.div(ad.mul(M, W_l), q)), -Q, Q)
    W = ad.mul(q, W_int)
    caps = ad.mul(ad.reshape(C_unit, (-1, 1)), ad.absolute(W_int))
    return M, W_int, W, caps


def realize_weights(params: LatentParams, Q: int) -> RealizedWeights:
    """Masked, rounded (ties away from zero) and clipped weights on the ``q`` grid."""
    if params.q <= 0:
        raise DomainError("quantization step q must be positive")
    # plain numpy, same operation order as realize_tensors
    M = (np.asarray(params.M_l) > 0).astype(float)
    W_int = np.minimum(np.maximum(ad.round_half_away((M * params.W_l) / params.q), -Q), Q)
    W = params.q * W_int
    caps = params.C_unit[:, None] * np.abs(W_int)
    if not M.any():
        warnings.warn("all encoder paths are masked", DegenerateModelWarning, stacklevel=2)
    return RealizedWeights(
        M=M,
        W_int=W_int,
        W=W,
        q=params.q,
        C_unit=params.C_unit.copy(),
        caps=caps,
        C_tot=float(caps.sum()),
    )


# --- losses ----------------------------------------------------------------


def loss_lse(x_a, x_q):
    """``log(log(sum_s exp|x_a - x_q|))`` with a max-shifted inner sum."""
    n = len(ad.value_of(x_a))
    if n != len(ad.value_of(x_q)):
        raise StructuralError("x_a and x_q must have the same length")
    if n < 3:
        raise DomainError("the fidelity loss needs at least 3 samples")
    err = ad.absolute(ad.sub(x_a, x_q))
    return ad.log(ad.logsumexp(err))


def loss_dr(xi_final, delta):
    """Squared excursion of end-of-conversion stage values beyond ``+-delta``."""
    delta = np.asarray(delta, dtype=float)
    if ad.value_of(xi_final).shape[-1] != delta.size and delta.size != 1:
        raise StructuralError("one bound per stage is required")
    excess = ad.sub(xi_final, ad.clip(xi_final, -delta, delta))
    return ad.sum(ad.square(excess))


def loss_tpt(c_tot, tpt: float):
    """Linear hinge on total capacitance above the threshold."""
    return ad.relu(ad.sub(c_tot, tpt))


def total_loss(x_a, x_q, xi_final, c_tot, delta, lw: LossWeights):
    loss = loss_lse(x_a, x_q)
    if lw.lambda_dr:
        loss = ad.add(loss, ad.mul(lw.lambda_dr, loss_dr(xi_final, delta)))
    if lw.lambda_tpt:
        loss = ad.add(loss, ad.mul(lw.lambda_tpt, loss_tpt(c_tot, lw.tpt)))
    return loss


# --- kT/C noise --------------------------------------------------------------


def ktc_sigma(cap, temperature: float = TEMPERATURE, v_ref: float = V_REF):
    """RMS sampling noise of a ``cap`` pF capacitor, in normalized units."""
    cap_arr = np.asarray(ad.value_of(cap), dtype=float)
    if np.any(cap_arr <= 0):
        raise DomainError("capacitance must be positive")
    out = np.sqrt(BOLTZMANN * temperature / (cap_arr * PICO)) / v_ref
    return float(out) if out.ndim == 0 else out


def weight_sigma(realized: RealizedWeights, temperature: float = TEMPERATURE, v_ref: float = V_REF) -> np.ndarray:
    """Per-weight noise level; 0 where there is no capacitor."""
    caps = np.asarray(realized.caps, dtype=float)
    inv = np.divide(BOLTZMANN * temperature / PICO, caps, out=np.zeros_like(caps), where=caps > 0)
    return np.sqrt(inv) / v_ref


def sample_noise(realized: RealizedWeights, rng: np.random.Generator, batch: int | None = None,
                 temperature: float = TEMPERATURE, v_ref: float = V_REF) -> np.ndarray:
    """Independent draws for one cycle, one per weight (``(K, 4K+1)`` or ``(batch, K, 4K+1)``)."""
    sigma = weight_sigma(realized, temperature, v_ref)
    shape = sigma.shape if batch is None else (batch,) + sigma.shape
    return rng.standard_normal(shape) * sigma


def stage_sigma_tensor(W_int, C_unit, temperature: float = TEMPERATURE, v_ref: float = V_REF):
    """Recordable per-stage noise level of the summed per-weight draws.

    The per-weight draws of one stage are independent, so their sum is
    Gaussian with variance ``kT / C_k * sum_i 1/|W_int[k, i]|`` over active
    weights.
    """
    active = (ad.value_of(W_int) != 0).astype(float)
    inv = ad.mul(active, ad.div(1.0, ad.add(ad.absolute(W_int), 1.0 - active)))
    per_stage = ad.sum(inv, axis=1)
    var = ad.div(per_stage, C_unit)
    return ad.mul(np.sqrt(BOLTZMANN * temperature / PICO) / v_ref, ad.sqrt(var))
