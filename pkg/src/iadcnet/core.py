"""Behavioral simulation of the K-stage incremental modulator and its decoder.

Encoder weight layout (one row per stage ``k``, ``4K + 1`` columns)::

    [x, zeta_1, xi_1, zeta*_1, xi*_1, ..., zeta_K, xi_K, zeta*_K, xi*_K]

One conversion cycle runs in three phases:

1. the non-delayed values ``xi``/``zeta`` are reset to the delayed snapshot
   ``xi*``/``zeta*`` of the previous cycle;
2. stages are evaluated in ascending order, each one seeing the values already
   refreshed during this cycle for lower stages and the copies for the others;
3. the refreshed values become the next cycle's delayed snapshot.

The decoder is a cascade of ``J`` accumulators fed by the last stage's bit,
followed by a per-cycle normalization so that a constant full-scale bitstream
decodes to itself at every cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from . import autodiff as ad
from .errors import DegenerateDecoderError, DomainError, StructuralError

FIELDS = ("zeta", "xi", "zeta_star", "xi_star")
INPUT_LIMIT = 0.5


def column(kind: str, stage: int) -> int:
    """Column of the weight matrix fed by ``kind`` of (0-based) ``stage``."""
    if kind == "x":
        return 0
    try:
        offset = FIELDS.index(kind)
    except ValueError:
        raise StructuralError(f"unknown weight source {kind!r}") from None
    return 1 + 4 * stage + offset


@dataclass(frozen=True)
class Topology:
    K: int
    N: int = 80
    Q: int = 32
    delta: tuple[float, ...] | float = 0.4
    dac_levels: tuple[float, float] = (-0.5, 0.5)
    decoder_depth: int | None = None

    def __post_init__(self):
        if not (1 <= int(self.K) <= 8):
            raise DomainError(f"K must be in 1..8, got {self.K}")
        if self.N < 1 or self.Q < 1:
            raise DomainError("N and Q must be >= 1")
        delta = self.delta
        if np.isscalar(delta):
            delta = (float(delta),) * self.K
        delta = tuple(float(d) for d in delta)
        if len(delta) != self.K:
            raise StructuralError(f"need {self.K} saturation bounds, got {len(delta)}")
        if any(d <= 0 for d in delta):
            raise DomainError("saturation bounds must be positive")
        object.__setattr__(self, "delta", delta)
        lo, hi = (float(v) for v in self.dac_levels)
        if lo != -hi:
            raise DomainError("DAC levels must be symmetric about 0")
        object.__setattr__(self, "dac_levels", (lo, hi))
        depth = self.K if self.decoder_depth is None else int(self.decoder_depth)
        if depth < 1:
            raise DomainError("decoder_depth must be >= 1")
        object.__setattr__(self, "decoder_depth", depth)

    @property
    def n_inputs(self) -> int:
        return 4 * self.K + 1

    @property
    def weight_shape(self) -> tuple[int, int]:
        return (self.K, self.n_inputs)

    @property
    def delta_array(self) -> np.ndarray:
        return np.asarray(self.delta, dtype=float)


@dataclass
class EncoderState:
    xi: np.ndarray
    zeta: np.ndarray
    xi_star: np.ndarray
    zeta_star: np.ndarray

    @property
    def K(self) -> int:
        return self.xi.shape[-1]


@dataclass
class EncoderWeights:
    W: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        if self.W.ndim != 2 or self.W.shape[1] != 4 * self.W.shape[0] + 1:
            raise StructuralError(f"weight matrix must be K x (4K+1), got {self.W.shape}")

    @property
    def K(self) -> int:
        return self.W.shape[0]

    @classmethod
    def from_entries(cls, K: int, entries: dict) -> "EncoderWeights":
        """Build from ``{(target_stage, kind, source_stage): value}`` (0-based).

        ``kind == "x"`` ignores ``source_stage``.
        """
        W = np.zeros((K, 4 * K + 1))
        for (target, kind, source), value in entries.items():
            if not 0 <= target < K or (kind != "x" and not 0 <= source < K):
                raise StructuralError(f"invalid weight position {(target, kind, source)} for K={K}")
            W[target, column(kind, source)] = value
        return cls(W)


@dataclass
class DecoderParams:
    input_scales: np.ndarray
    norm_gains: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.input_scales)

    @classmethod
    def build(cls, input_scales, N: int) -> "DecoderParams":
        scales = np.asarray(input_scales, dtype=float).reshape(-1)
        return cls(scales, compute_decoder_norm(scales, len(scales), N))


@dataclass
class ConversionTrace:
    y: np.ndarray
    xi_final: np.ndarray
    bitstream: np.ndarray

    def estimate(self, cycles: int | None = None) -> np.ndarray:
        """Decoded value after ``cycles`` cycles (default: the last one)."""
        n = self.y.shape[1] if cycles is None else cycles
        return self.y[:, n - 1]


@dataclass
class IADCModel:
    """A realized converter: topology, effective weights, decoder and noise."""

    topology: Topology
    weights: EncoderWeights
    decoder: DecoderParams
    weight_sigma: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def stage_sigma(self) -> np.ndarray | None:
        if self.weight_sigma is None:
            return None
        return np.sqrt(np.sum(np.square(self.weight_sigma), axis=1))


# --- scalar / elementwise building blocks ---------------------------------


def hardtanh(v, delta):
    if np.any(np.asarray(delta) <= 0):
        raise DomainError("delta must be positive")
    return ad.hardtanh(v, delta)


def quantize_sign(xi):
    out = ad.quantize_sign(xi)
    if isinstance(out, np.ndarray) and out.ndim == 0:
        return float(out)
    return out


def reset_state(topology: Topology, batch: int | None = None) -> EncoderState:
    shape = (topology.K,) if batch is None else (batch, topology.K)
    return EncoderState(*(np.zeros(shape) for _ in range(4)))


# --- encoder ---------------------------------------------------------------


def _cycle_kernel(x, zeta_prev, xi_prev, W, delta, stage_noise=None):
    """One batched cycle. Returns new (zeta, xi) plus the cached stage inputs."""
    S, K = xi_prev.shape
    use_noise = stage_noise is not None
    noise = np.ascontiguousarray(stage_noise, dtype=float) if use_noise else _NO_NOISE
    return _kernels.cycle_forward(
        np.ascontiguousarray(x, dtype=float),
        np.ascontiguousarray(zeta_prev, dtype=float),
        np.ascontiguousarray(xi_prev, dtype=float),
        np.ascontiguousarray(W, dtype=float),
        np.asarray(delta, dtype=float),
        noise,
        use_noise,
    )


_NO_NOISE = np.zeros((1, 1))


def _cycle_vjp(g_zeta, g_xi, W, delta, used, pre, xi):
    return _kernels.cycle_backward(
        np.ascontiguousarray(g_zeta),
        np.ascontiguousarray(g_xi),
        np.ascontiguousarray(W, dtype=float),
        np.asarray(delta, dtype=float),
        used,
        pre,
        xi,
        ad.SIGN_STE_BAND if ad.surrogate_enabled() else -1.0,
    )


def cycle_op(x, state, W, delta, draws=None, scale=None):
    """Fused, recordable conversion cycle on a packed ``(S, 2K)`` state.

    ``state`` holds ``[zeta | xi]`` of the previous cycle (the delayed
    snapshot). The stage noise is ``draws * scale``: ``draws`` is a constant
    ``(S, K)`` array and ``scale`` a per-stage ``(K,)`` level (array or
    variable; ``None`` means 1). Gradients reach ``state``, ``W`` and
    ``scale`` with the same rules as the elementwise primitives.
    """
    x = np.asarray(x, dtype=float)
    sv, Wv = ad.value_of(state), ad.value_of(W)
    noise = None
    if draws is not None:
        draws = np.asarray(draws, dtype=float)
        noise = draws if scale is None else draws * ad.value_of(scale)
    K = Wv.shape[0]
    zeta, xi, used, pre = _cycle_kernel(x, sv[:, :K], sv[:, K:], Wv, delta, noise)
    out = np.concatenate([zeta, xi], axis=1)
    inputs = [v for v in (state, W, scale) if isinstance(v, ad.Var)]
    tape = ad._tape_of(*inputs)
    if tape is None:
        return out

    def vjp(g):
        gz_prev, gx_prev, gW, gn = _cycle_vjp(g[:, :K], g[:, K:], Wv, delta, used, pre, xi)
        grads = []
        if isinstance(state, ad.Var):
            grads.append(np.concatenate([gz_prev, gx_prev], axis=1))
        if isinstance(W, ad.Var):
            grads.append(gW)
        if isinstance(scale, ad.Var):
            grads.append(np.sum(gn * draws, axis=0))
        return tuple(grads)

    delta_arr = np.asarray(delta, dtype=float)
    margin = min(float(np.min(np.abs(xi))), float(np.min(np.abs(np.abs(pre) - delta_arr))))
    decisions = (zeta.tobytes() + (np.abs(pre) <= delta_arr).tobytes(), margin)
    return tape.record("encoder_cycle", out, inputs, vjp, rule="ste", meta=decisions)


def cycle_primitive(x, state, W, delta, draws=None, scale=None, quantizer=None):
    """Same cycle as :func:`cycle_op`, built from elementwise primitives only.

    Slower; used as an independent reference for the fused gradient.
    ``quantizer`` replaces the sign quantizer (e.g. by the identity to obtain
    a graph free of straight-through nodes).
    """
    quantizer = ad.quantize_sign if quantizer is None else quantizer
    x = np.asarray(x, dtype=float)
    K = ad.value_of(W).shape[0]
    zeta_prev = [state[:, j] for j in range(K)]
    xi_prev = [state[:, K + j] for j in range(K)]
    zeta, xi = list(zeta_prev), list(xi_prev)
    for k in range(K):
        cols = [x]
        for j in range(K):
            cols += [zeta[j], xi[j], zeta_prev[j], xi_prev[j]]
        u = ad.stack(cols, axis=1)
        a = ad.matmul(u, W[k])
        if draws is not None:
            a = a + (draws[:, k] if scale is None else ad.mul(draws[:, k], scale[k]))
        xi[k] = ad.hardtanh(a, delta[k])
        zeta[k] = quantizer(xi[k])
    return ad.stack(zeta + xi, axis=1)


def _check_inputs(inputs) -> np.ndarray:
    x = np.atleast_1d(np.asarray(inputs, dtype=float))
    if x.ndim != 1:
        raise StructuralError("inputs must be a 1-D batch of DC levels")
    if np.any(np.abs(x) > INPUT_LIMIT):
        raise DomainError(f"DC inputs must satisfy |x| <= {INPUT_LIMIT}")
    return x


def encoder_cycle(state: EncoderState, x_n, weights: EncoderWeights, topology: Topology, noise=None) -> EncoderState:
    """Advance one cycle. Works on a single sample (shape ``(K,)``) or a batch.

    ``noise`` holds one draw per weight entry (shape ``(..., K, 4K+1)``); each
    draw is added to its product term before the stage summation.
    """
    K = topology.K
    if weights.W.shape != topology.weight_shape:
        raise StructuralError(f"weights {weights.W.shape} do not match topology {topology.weight_shape}")
    single = state.xi.ndim == 1
    if state.xi.shape[-1] != K or any(getattr(state, f).shape != state.xi.shape for f in ("zeta", "xi_star", "zeta_star")):
        raise StructuralError("state dimensions do not match K")
    as2d = (lambda a: a[None, :]) if single else (lambda a: a)
    x = np.atleast_1d(np.asarray(x_n, dtype=float))
    stage_noise = None
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.shape[-2:] != topology.weight_shape:
            raise StructuralError(f"noise must have one draw per weight, got {noise.shape}")
        stage_noise = noise.sum(axis=-1)
        stage_noise = stage_noise[None, :] if stage_noise.ndim == 1 else stage_noise
    zeta, xi, _, _ = _cycle_kernel(
        np.broadcast_to(x, (as2d(state.xi).shape[0],)),
        as2d(state.zeta_star),
        as2d(state.xi_star),
        weights.W,
        topology.delta,
        stage_noise,
    )
    if single:
        zeta, xi = zeta[0], xi[0]
    return EncoderState(xi=xi, zeta=zeta, xi_star=xi.copy(), zeta_star=zeta.copy())


def run_encoder(inputs, weights: EncoderWeights, topology: Topology, cycles: int | None = None,
                noise_source: Callable[[int, int], np.ndarray] | None = None):
    """Convert a batch of DC levels; returns ``(bitstream, xi_trace)``.

    ``noise_source(n, S)`` returns the noise for cycle ``n`` (0-based), either
    per weight ``(S, K, 4K+1)`` or already summed per stage ``(S, K)``.
    """
    x = _check_inputs(inputs)
    cycles = topology.N if cycles is None else int(cycles)
    if not 1 <= cycles <= topology.N:
        raise DomainError(f"cycles must be in 1..{topology.N}")
    if weights.W.shape != topology.weight_shape:
        raise StructuralError("weights do not match topology")
    S, K = len(x), topology.K
    zeta, xi = np.zeros((S, K)), np.zeros((S, K))
    bits = np.empty((S, cycles))
    trace = np.empty((S, cycles, K))
    for n in range(cycles):
        stage_noise = None
        if noise_source is not None:
            stage_noise = np.asarray(noise_source(n, S), dtype=float)
            if stage_noise.ndim == 3:
                stage_noise = stage_noise.sum(axis=-1)
        zeta, xi, _, _ = _cycle_kernel(x, zeta, xi, weights.W, topology.delta, stage_noise)
        bits[:, n] = zeta[:, K - 1]
        trace[:, n] = xi
    return bits, trace


# --- decoder ---------------------------------------------------------------


def _accumulate(stream, scales):
    u = stream
    for j in range(len(ad.value_of(scales))):
        u = ad.cumsum(u * scales[j], axis=-1)
    return u


def compute_decoder_norm(input_scales, depth: int, N: int):
    """Per-cycle divisors ``g[n]``: unscaled response to a constant +0.5 stream."""
    if depth < 1 or N < 1:
        raise DomainError("decoder depth and N must be >= 1")
    if len(ad.value_of(input_scales)) != depth:
        raise StructuralError(f"expected {depth} input scales")
    g = _accumulate(np.full(N, 0.5), input_scales) / 0.5
    if np.any(ad.value_of(g) == 0):
        raise DegenerateDecoderError("decoder normalization has a zero gain")
    return g


def decode(bitstream, input_scales, norm_gains):
    """Recordable decoder: ``cascade(bitstream) / g``."""
    n = ad.value_of(bitstream).shape[-1]
    if n > ad.value_of(norm_gains).shape[-1]:
        raise StructuralError(f"bitstream length {n} exceeds available normalization gains")
    return _accumulate(bitstream, input_scales) / norm_gains[..., :n]


def run_decoder(bitstream, params: DecoderParams) -> np.ndarray:
    return decode(np.asarray(bitstream, dtype=float), params.input_scales, params.norm_gains)


# --- full model ------------------------------------------------------------


def simulate(x, W, topology: Topology, cycles: int, input_scales, draws=None, noise_scale=None, fused: bool = True,
             quantizer=None):
    """Recordable end-to-end conversion.

    ``draws`` is a constant ``(cycles, S, K)`` array of standard-normal (or
    already scaled) stage noise, multiplied by the per-stage ``noise_scale``.
    Returns ``(y, xi_final, bitstream)`` with ``y`` of shape ``(S, cycles)``.
    """
    x = np.asarray(x, dtype=float)
    S, K = len(x), topology.K
    if quantizer is not None and fused:
        raise ValueError("a custom quantizer requires the unfused path")
    state = np.zeros((S, 2 * K))
    states = []
    for n in range(cycles):
        draws_n = None if draws is None else draws[n]
        if fused:
            state = cycle_op(x, state, W, topology.delta, draws_n, noise_scale)
        else:
            state = cycle_primitive(x, state, W, topology.delta, draws_n, noise_scale, quantizer)
        states.append(state)
    bits = ad.transpose(ad.stack(states, axis=0)[:, :, K - 1])
    norm = compute_decoder_norm(input_scales, len(ad.value_of(input_scales)), cycles)
    y = decode(bits, input_scales, norm)
    return y, state[:, K:], bits


def convert(inputs, model: IADCModel, cycles: int | None = None, noise_on: bool = False,
            rng: np.random.Generator | None = None) -> ConversionTrace:
    """Encode then decode a batch of DC levels with a realized model."""
    topo = model.topology
    x = _check_inputs(inputs)
    cycles = topo.N if cycles is None else int(cycles)
    if not 1 <= cycles <= topo.N:
        raise DomainError(f"cycles must be in 1..{topo.N}")
    noise_source = None
    if noise_on:
        sigma = model.stage_sigma
        if sigma is None:
            raise DomainError("noise requested but the model carries no noise levels")
        rng = np.random.default_rng() if rng is None else rng
        draws = rng.standard_normal((cycles, len(x), topo.K)) * sigma

        def noise_source(n, S):
            return draws[n]

    bits, trace = run_encoder(x, model.weights, topo, cycles, noise_source)
    y = run_decoder(bits, model.decoder)
    return ConversionTrace(y=y, xi_final=trace[:, -1, :], bitstream=bits)
