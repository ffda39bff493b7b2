"""Dataset generation, surrogate loss, Adam, and the train/eval loops.

Training uses only noisy all-zero codewords; the multiplicative-noise
formulation makes that distributionally equivalent to training on any
codeword mix.  The surrogate is binary cross-entropy on the hard noise
targets, since the bit-error indicator itself has no gradient.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import channel, model
from .channel import ChannelSample, NoiseModel
from .codes import CodeError, ParityCheckMatrix, derive_generator
from .masking import MaskMatrix
from .model import ECCTConfig, ECCTWeights, GradientSet

EPS_DIV = 1e-9


class NumericAbort(RuntimeError):
    """Training hit a non-finite loss; carries the last finite state."""

    def __init__(self, message: str, weights: ECCTWeights, history: list):
        super().__init__(message)
        self.weights = weights
        self.history = history


@dataclass(frozen=True)
class TrainConfig:
    m: int = 12800
    ebn0_db: float = 2.0
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_size: int = 128000

    def __post_init__(self):
        if not self.m >= self.batch_size >= 1:
            raise ValueError(f"need m >= batch_size >= 1, got m={self.m}, batch={self.batch_size}")


@dataclass
class ExperimentRecord:
    code: str
    T: int
    L: int
    d: int
    m: int
    seed: int
    train_ber: float
    test_ber: float
    gap: float
    normalized_gap: float
    wall_time: float


def generalization_gap(train_ber: float, test_ber: float) -> tuple[float, float]:
    """gap = test - train; normalized by train BER with a divide guard."""
    if not (0.0 <= train_ber <= 1.0 and 0.0 <= test_ber <= 1.0):
        raise ValueError("BER values must lie in [0, 1]")
    gap = test_ber - train_ber
    return gap, gap / max(train_ber, EPS_DIV)


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


def make_dataset(H: ParityCheckMatrix, m: int, ebn0_db: float, seed: int) -> list[ChannelSample]:
    """m noisy all-zero-codeword samples with per-index derived RNG streams."""
    if m < 1:
        raise ValueError("m must be >= 1")
    nm = NoiseModel.from_ebn0(ebn0_db, H.rate())
    zero = np.zeros(H.n, dtype=np.uint8)
    return [make_indexed_sample(zero, H, nm, seed, i) for i in range(m)]


def make_indexed_sample(
    x: np.ndarray, H: ParityCheckMatrix, nm: NoiseModel, seed: int, index: int
) -> ChannelSample:
    return channel.make_sample(x, H, nm, channel.sample_rng(seed, index))


def stack_inputs(samples: list[ChannelSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(y_tilde, target, y, xs) arrays for batched passes."""
    y_tilde = np.stack([s.y_tilde for s in samples])
    target = np.stack([s.target for s in samples])
    y = np.stack([s.y for s in samples])
    xs = np.stack([s.xs for s in samples])
    return y_tilde, target, y, xs


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def bce_loss(z_hat: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy of logits against flip targets, with gradient.

    Stable form: per bit, softplus(z) - e*z; gradient (sigmoid(z) - e)/n.
    For a batch the loss and gradient are additionally averaged over rows.
    """
    z = np.asarray(z_hat, dtype=np.float64)
    e = np.asarray(target, dtype=np.float64)
    if z.shape != e.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {e.shape}")
    softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    per_bit = softplus - e * z
    n = z.shape[-1]
    ez = np.exp(-np.abs(z))
    sig = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    grad = (sig - e) / n
    if z.ndim == 2:
        grad = grad / z.shape[0]
    return float(per_bit.mean()), grad


def ber_loss(x_hat_s: np.ndarray, x_s: np.ndarray) -> float:
    """Fraction of mismatched symbol positions."""
    a = np.asarray(x_hat_s)
    b = np.asarray(x_s)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean(a != b))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(
    weights: ECCTWeights,
    grads: GradientSet,
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> AdamState:
    """Standard bias-corrected Adam update, applied in place to the weights."""
    b1, b2 = betas
    state.step += 1
    t = state.step
    for (name, w), (gname, g) in zip(weights.named_arrays(), grads.named_arrays()):
        if name != gname:
            raise ValueError(f"weight/gradient mismatch: {name} vs {gname}")
        if w.shape != g.shape:
            raise ValueError(f"{name}: shape mismatch {w.shape} vs {g.shape}")
        m = state.m.setdefault(name, np.zeros_like(w))
        v = state.v.setdefault(name, np.zeros_like(w))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        w -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


# ---------------------------------------------------------------------------
# training / evaluation
# ---------------------------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_ber: float


def _dataset_forward_ber(
    y_tilde: np.ndarray,
    y: np.ndarray,
    xs: np.ndarray,
    weights: ECCTWeights,
    mask: MaskMatrix | None,
    cfg: ECCTConfig,
    chunk: int = 512,
) -> float:
    errors = 0.0
    total = 0
    for lo in range(0, y_tilde.shape[0], chunk):
        hi = min(lo + chunk, y_tilde.shape[0])
        z_hat, _ = model.forward(y_tilde[lo:hi], weights, mask, cfg)
        x_hat = model.decide(y[lo:hi], z_hat)
        errors += float((x_hat != xs[lo:hi]).sum())
        total += (hi - lo) * y.shape[1]
    return errors / total


def train(
    H: ParityCheckMatrix,
    mask: MaskMatrix | None,
    cfg: ECCTConfig,
    tcfg: TrainConfig,
) -> tuple[ECCTWeights, list[EpochStats]]:
    """Adam on the BCE surrogate; fully deterministic for a given seed.

    Per-epoch history carries the running mean loss and BER over batches.
    A non-finite loss aborts with the last finite weights attached to the
    raised NumericAbort.
    """
    samples = make_dataset(H, tcfg.m, tcfg.ebn0_db, tcfg.seed)
    y_tilde, target, y, xs = stack_inputs(samples)

    init_seed = int(np.random.SeedSequence((tcfg.seed, 1)).generate_state(1)[0])
    weights = model.init_weights(cfg, init_seed)
    state = AdamState()
    history: list[EpochStats] = []
    last_finite = weights.copy()

    for epoch in range(tcfg.epochs):
        order = np.random.default_rng((tcfg.seed, 2, epoch)).permutation(tcfg.m)
        loss_sum = 0.0
        err_sum = 0.0
        seen = 0
        for lo in range(0, tcfg.m, tcfg.batch_size):
            idx = order[lo:lo + tcfg.batch_size]
            try:
                zb, cache = model.forward(y_tilde[idx], weights, mask, cfg)
            except model.NumericError as exc:
                raise NumericAbort(
                    f"non-finite forward pass in epoch {epoch}: {exc}", last_finite, history
                ) from exc
            loss, dz = bce_loss(zb, target[idx])
            if not math.isfinite(loss):
                raise NumericAbort(
                    f"non-finite loss in epoch {epoch}", last_finite, history
                )
            grads = model.backward(cache, weights, mask, cfg, dz)
            adam_step(weights, grads, state, tcfg.learning_rate,
                      (tcfg.adam_beta1, tcfg.adam_beta2), tcfg.adam_eps)
            x_hat = model.decide(y[idx], zb)
            err_sum += float((x_hat != xs[idx]).sum())
            loss_sum += loss * len(idx)
            seen += len(idx)
        last_finite = weights.copy()
        history.append(EpochStats(
            epoch=epoch,
            loss=loss_sum / seen,
            train_ber=err_sum / (seen * H.n),
        ))
    return weights, history


def train_set_ber(
    H: ParityCheckMatrix,
    mask: MaskMatrix | None,
    cfg: ECCTConfig,
    tcfg: TrainConfig,
    weights: ECCTWeights,
) -> float:
    """Empirical BER of fixed weights on the (regenerated) training set."""
    samples = make_dataset(H, tcfg.m, tcfg.ebn0_db, tcfg.seed)
    y_tilde, _, y, xs = stack_inputs(samples)
    return _dataset_forward_ber(y_tilde, y, xs, weights, mask, cfg)


def evaluate(
    weights: ECCTWeights,
    H: ParityCheckMatrix,
    mask: MaskMatrix | None,
    cfg: ECCTConfig,
    n_samples: int,
    ebn0_db: float,
    seed: int,
    codeword_source: str = "all_zero",
    chunk: int = 512,
) -> float:
    """Monte Carlo BER on fresh samples.

    codeword_source selects all-zero transmissions or random codewords drawn
    through the derived generator (which requires full-rank H).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if codeword_source not in ("all_zero", "random_from_G"):
        raise ValueError(f"unknown codeword_source {codeword_source!r}")
    nm = NoiseModel.from_ebn0(ebn0_db, H.rate())
    gen = None
    if codeword_source == "random_from_G":
        gen = derive_generator(H)

    errors = 0.0
    zero = np.zeros(H.n, dtype=np.uint8)
    for lo in range(0, n_samples, chunk):
        hi = min(lo + chunk, n_samples)
        batch = []
        for i in range(lo, hi):
            rng = channel.sample_rng(seed, i)
            if gen is None:
                x = zero
            else:
                msg = rng.integers(0, 2, size=gen.k).astype(np.uint8)
                x = gen.encode(msg)
            batch.append(channel.make_sample(x, H, nm, rng))
        y_tilde, _, y, xs = stack_inputs(batch)
        z_hat, _ = model.forward(y_tilde, weights, mask, cfg)
        x_hat = model.decide(y, z_hat)
        errors += float((x_hat != xs).sum())
    return errors / (n_samples * H.n)


def run_experiment(
    H: ParityCheckMatrix,
    mask: MaskMatrix | None,
    cfg: ECCTConfig,
    tcfg: TrainConfig,
    eval_seed_offset: int = 0x7E57,
    timing: bool = True,
) -> tuple[ExperimentRecord, ECCTWeights, list[EpochStats]]:
    """Train, measure train/test BER, and assemble an ExperimentRecord."""
    t0 = time.perf_counter()
    weights, history = train(H, mask, cfg, tcfg)
    train_ber = train_set_ber(H, mask, cfg, tcfg, weights)
    test_ber = evaluate(
        weights, H, mask, cfg, tcfg.eval_size, tcfg.ebn0_db,
        seed=tcfg.seed + eval_seed_offset, codeword_source="all_zero",
    )
    gap, norm_gap = generalization_gap(train_ber, test_ber)
    wall = time.perf_counter() - t0 if timing else 0.0
    record = ExperimentRecord(
        code=H.name or "custom", T=cfg.T, L=cfg.L, d=cfg.d, m=tcfg.m,
        seed=tcfg.seed, train_ber=train_ber, test_ber=test_ber,
        gap=gap, normalized_gap=norm_gap, wall_time=wall,
    )
    return record, weights, history
