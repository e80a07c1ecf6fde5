"""Dataset generation and the two-phase training loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from .. import constraints as cs
from .. import core
from ..baselines import FIRST_ORDER_ENTRIES
from ..errors import DomainError, IADCError
from ..metrics import MetricBundle, enob_from_errors, evaluate_model, test_grid
from ..optim import OptimizerState, adam_step, clip_global_norm
from .config import RunConfig

log = logging.getLogger(__name__)

VALIDATION_POINTS = 256
# parameters leaving this box in log space count as divergence
LOG_PARAM_LIMIT = 20.0
ENCODER_KEYS = frozenset({"W_l", "M_l", "log_q", "log_c"})


class Divergence(RuntimeError):
    pass


def generate_dataset(count: int, value_range=(-0.35, 0.35), seed=0) -> np.ndarray:
    """I.i.d. uniform DC levels on ``value_range``."""
    lo, hi = (float(v) for v in value_range)
    if count < 1:
        raise DomainError("count must be >= 1")
    if not lo < hi:
        raise DomainError("empty input range")
    if lo < -0.5 or hi > 0.5:
        raise DomainError("input range must lie within [-0.5, 0.5]")
    return np.random.default_rng(seed).uniform(lo, hi, count)


def validation_grid(lo: float, hi: float, count: int = VALIDATION_POINTS) -> np.ndarray:
    """Cell midpoints of a uniform partition, disjoint from the test grid's endpoints."""
    edges = np.linspace(lo, hi, count + 1)
    return 0.5 * (edges[:-1] + edges[1:])


@dataclass
class Snapshot:
    """Realized hardware parameters, sufficient to rebuild the model."""

    W_int: np.ndarray
    q: float
    M: np.ndarray
    C_unit: np.ndarray
    omega: np.ndarray

    def realized(self) -> cs.RealizedWeights:
        W_int = np.asarray(self.W_int, dtype=float)
        C_unit = np.asarray(self.C_unit, dtype=float)
        caps = C_unit[:, None] * np.abs(W_int)
        return cs.RealizedWeights(M=np.asarray(self.M, dtype=float), W_int=W_int, W=self.q * W_int, q=float(self.q),
                                  C_unit=C_unit, caps=caps, C_tot=float(caps.sum()))

    def model(self, topology: core.Topology) -> tuple[core.IADCModel, cs.RealizedWeights]:
        r = self.realized()
        decoder = core.DecoderParams.build(np.asarray(self.omega, dtype=float), topology.N)
        return core.IADCModel(topology, core.EncoderWeights(r.W), decoder, cs.weight_sigma(r)), r

    def to_dict(self) -> dict:
        return {
            "W_int": np.asarray(self.W_int).astype(int).tolist(),
            "q": float(self.q),
            "M": np.asarray(self.M).astype(int).tolist(),
            "C_unit": [float(c) for c in self.C_unit],
            "omega": [float(o) for o in self.omega],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Snapshot":
        return cls(np.array(d["W_int"], dtype=float), float(d["q"]), np.array(d["M"], dtype=float),
                   np.array(d["C_unit"], dtype=float), np.array(d["omega"], dtype=float))

    @classmethod
    def from_params(cls, params: dict, Q: int) -> "Snapshot":
        r = cs.realize_weights(cs.LatentParams.from_unconstrained(params), Q)
        return cls(r.W_int, r.q, r.M, r.C_unit, np.array(params["omega"], dtype=float))


@dataclass
class RunResult:
    config: RunConfig
    status: str
    snapshot: Snapshot | None
    metrics: MetricBundle | None
    history: list = field(default_factory=list)
    duration_s: float = 0.0
    diagnostics: str = ""
    run_id: str = ""

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def initial_params(config: RunConfig, rng: np.random.Generator) -> dict:
    topo = config.topology()
    depth = topo.decoder_depth
    if config.init == "first_order":
        if config.K != 1:
            raise DomainError("first_order init requires K=1")
        W = core.EncoderWeights.from_entries(1, FIRST_ORDER_ENTRIES).W
        # strictly positive mask logits keep every first-order path active
        M_l = np.where(W != 0, 1.0, -1.0)
        latent = cs.LatentParams(W, M_l, config.q_init, np.full(1, config.c_init), np.ones(depth))
    else:
        latent = cs.LatentParams(
            rng.uniform(-0.5, 0.5, topo.weight_shape),
            rng.uniform(0.0, 1.0, topo.weight_shape),
            config.q_init,
            np.full(config.K, config.c_init),
            np.ones(depth),
        )
    return latent.to_unconstrained()


def _training_loss(pv, x, draws, config: RunConfig, topo: core.Topology, lw: cs.LossWeights):
    q = ad.exp(pv["log_q"])
    C = ad.exp(pv["log_c"])
    _, W_int, W, caps = cs.realize_tensors(pv["W_l"], pv["M_l"], q, C, config.Q)
    scale = None if draws is None else cs.stage_sigma_tensor(W_int, C)
    y, xi_final, _ = core.simulate(x, W, topo, topo.N, pv["omega"], draws, scale)
    loss = cs.total_loss(x, y[:, -1], xi_final, ad.sum(caps), topo.delta, lw)
    for n in config.curriculum:
        if n != topo.N:
            loss = loss + cs.loss_lse(x, y[:, n - 1])
    return loss


def _check_params(params: dict) -> None:
    for k, v in params.items():
        if not np.all(np.isfinite(v)):
            raise Divergence(f"non-finite parameter {k}")
    for k in ("log_q", "log_c"):
        if np.any(np.abs(params[k]) > LOG_PARAM_LIMIT):
            raise Divergence(f"{k} left the admissible range: {params[k]}")


def _selection_score(params: dict, config: RunConfig, topo: core.Topology, grid: np.ndarray) -> float:
    """Validation ENOB (noisy when training with noise) used for checkpoint selection."""
    try:
        model, _ = Snapshot.from_params(params, config.Q).model(topo)
    except IADCError:
        return -math.inf
    if config.train_noise:
        batch = np.tile(grid, config.select_trials)
        trace = core.convert(batch, model, noise_on=True, rng=np.random.default_rng(config.seed))
    else:
        batch = grid
        trace = core.convert(batch, model)
    return enob_from_errors(batch - trace.estimate())


def _batches(rng, n, size):
    order = rng.permutation(n)
    for start in range(0, n, size):
        idx = order[start:start + size]
        if len(idx) >= 3:
            yield idx


def _phase1(params, config, topo, data, rng, history):
    lw = config.loss_weights()
    steps_per_epoch = sum(1 for _ in range(0, len(data), config.batch_size))
    state = OptimizerState.zeros_like(params, lr_max=config.lr_max, lr_min=config.lr_min,
                                      total_steps=config.epochs * steps_per_epoch)
    grid = validation_grid(config.input_low, config.input_high)
    log_c_min = math.log(cs.C_MIN)
    best_score, best = _selection_score(params, config, topo, grid), {k: v.copy() for k, v in params.items()}
    for epoch in range(1, config.epochs + 1):
        losses = []
        for idx in _batches(rng, len(data), config.batch_size):
            x = data[idx]
            draws = rng.standard_normal((topo.N, len(x), topo.K)) if config.train_noise else None
            loss, grads, _ = ad.value_and_grad(lambda pv: _training_loss(pv, x, draws, config, topo, lw), params)
            if not math.isfinite(loss):
                raise Divergence(f"non-finite loss at epoch {epoch}")
            grads, _ = clip_global_norm(grads, config.grad_clip)
            params, state = adam_step(params, grads, state)
            params["log_c"] = np.maximum(params["log_c"], log_c_min)
            _check_params(params)
            losses.append(loss)
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            score = _selection_score(params, config, topo, grid)
            history.append({"phase": 1, "epoch": epoch, "loss": float(np.mean(losses)), "score": float(score)})
            log.debug("epoch %d loss %.5f score %.3f", epoch, np.mean(losses), score)
            if score > best_score:
                best_score, best = score, {k: v.copy() for k, v in params.items()}
    return best


def _phase2(params, config, topo, data, rng, history):
    """Decoder finetuning on the reconstruction loss with the encoder frozen."""
    snap = Snapshot.from_params(params, config.Q)
    model, _ = snap.model(topo)
    bits = core.convert(data, model).bitstream

    def lse(pv, idx):
        scales = pv["omega"]
        norm = core.compute_decoder_norm(scales, topo.decoder_depth, topo.N)
        y = core.decode(bits[idx], scales, norm)
        return cs.loss_lse(data[idx], y[:, -1])

    everything = np.arange(len(data))

    def full_loss(p):
        try:
            return float(lse(p, everything))
        except IADCError:
            return math.inf

    state = OptimizerState.zeros_like(params, lr_max=config.finetune_lr, lr_min=config.finetune_lr,
                                      total_steps=max(config.finetune_epochs, 1))
    frozen = ENCODER_KEYS
    best_loss, best = full_loss(params), {k: v.copy() for k, v in params.items()}
    history.append({"phase": 2, "epoch": 0, "loss": best_loss})
    for epoch in range(1, config.finetune_epochs + 1):
        for idx in _batches(rng, len(data), config.batch_size):
            try:
                _, grads, _ = ad.value_and_grad(lambda pv: lse(pv, idx), params)
            except IADCError:
                break
            grads = {k: (g if k == "omega" else np.zeros_like(g)) for k, g in grads.items()}
            grads, _ = clip_global_norm(grads, config.grad_clip)
            params, state = adam_step(params, grads, state, frozen=frozen)
            _check_params(params)
        current = full_loss(params)
        history.append({"phase": 2, "epoch": epoch, "loss": current})
        if current < best_loss:
            best_loss, best = current, {k: v.copy() for k, v in params.items()}
    return best


def train_run(config: RunConfig, run_id: str = "") -> RunResult:
    """Phase 1 joint training, phase 2 decoder finetuning, then evaluation.

    Numeric failures and parameter blow-ups end the run with
    ``status="aborted"`` and a diagnostic message instead of raising.
    """
    start = time.perf_counter()
    topo = config.topology()
    rng = np.random.default_rng(config.seed)
    data = generate_dataset(config.dataset_size, (config.input_low, config.input_high), config.dataset_seed)
    history: list = []
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            params = initial_params(config, rng)
            params = _phase1(params, config, topo, data, rng, history)
            params = _phase2(params, config, topo, data, rng, history)
        snapshot = Snapshot.from_params(params, config.Q)
        model, realized = snapshot.model(topo)
        metrics = evaluate_model(model, realized, test_grid(), topo.N, config.snr_trials, config.seed)
    except (Divergence, ad.NumericError, FloatingPointError, IADCError, ValueError) as exc:
        log.warning("run %s aborted: %s", run_id or config.seed, exc)
        return RunResult(config, "aborted", None, None, history, time.perf_counter() - start,
                         f"{type(exc).__name__}: {exc}", run_id)
    return RunResult(config, "ok", snapshot, metrics, history, time.perf_counter() - start, "", run_id)


def reevaluate(result: RunResult, cycles: int | None = None, noise_trials: int | None = None,
               seed: int | None = None) -> MetricBundle:
    """Recompute a stored run's metrics from its snapshot."""
    if result.snapshot is None:
        raise DomainError("aborted runs carry no snapshot")
    topo = result.config.topology()
    model, realized = result.snapshot.model(topo)
    trials = result.config.snr_trials if noise_trials is None else noise_trials
    seed = result.config.seed if seed is None else seed
    return evaluate_model(model, realized, test_grid(), topo.N if cycles is None else cycles, trials, seed)
