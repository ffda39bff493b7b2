"""BPSK over AWGN, the multiplicative-noise view, and decoder input preprocessing.

The decoder never sees the transmitted word directly: the received vector y
is reduced to magnitudes plus a hard-decision syndrome, and the learning
target is the sign pattern of the multiplicative noise z = y * x_bpsk.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .codes import CodeError, ParityCheckMatrix, syndrome


@dataclass(frozen=True)
class NoiseModel:
    """AWGN parameters; sigma is tied to Eb/N0 by sigma^2 = 1/(2 R 10^(dB/10))."""

    ebn0_db: float
    rate: float
    sigma: float

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ValueError(f"rate must be in (0, 1], got {self.rate}")
        expected = sigma_from_ebn0(self.ebn0_db, self.rate)
        if not math.isclose(self.sigma, expected, rel_tol=1e-12):
            raise ValueError(f"sigma {self.sigma} inconsistent with Eb/N0; expected {expected}")

    @classmethod
    def from_ebn0(cls, ebn0_db: float, rate: float) -> "NoiseModel":
        return cls(ebn0_db=ebn0_db, rate=rate, sigma=sigma_from_ebn0(ebn0_db, rate))


def sigma_from_ebn0(ebn0_db: float, rate: float) -> float:
    """Noise standard deviation for unit-energy BPSK symbols."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    return math.sqrt(1.0 / (2.0 * rate * 10.0 ** (ebn0_db / 10.0)))


@dataclass(frozen=True)
class ChannelSample:
    """One decoding instance.

    x: codeword bits; xs: BPSK symbols; y: received vector; z: multiplicative
    noise y * xs; y_tilde: decoder input [|y|, syndrome signs]; target: 1
    where z < 0 (the bit positions the channel flipped).
    """

    x: np.ndarray
    xs: np.ndarray
    y: np.ndarray
    z: np.ndarray
    y_tilde: np.ndarray
    target: np.ndarray


def bpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """Map bits to symbols: 0 -> +1, 1 -> -1."""
    bits = np.asarray(bits)
    return 1.0 - 2.0 * bits.astype(np.float64)


def transmit(xs: np.ndarray, model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Add white Gaussian noise with standard deviation model.sigma."""
    xs = np.asarray(xs, dtype=np.float64)
    return xs + model.sigma * rng.standard_normal(xs.shape)


def hard_decision(y: np.ndarray) -> np.ndarray:
    """bin(y): 1 where y < 0, else 0 (ties at zero decide 0)."""
    return (np.asarray(y) < 0).astype(np.uint8)


def preprocess(y: np.ndarray, H: ParityCheckMatrix, syndrome_pm1: bool = True) -> np.ndarray:
    """Decoder input of length L = n + r: [|y|, mapped syndrome of bin(y)].

    Syndrome bits are embedded as +1/-1 (0 -> +1) by default; the {0,1}
    embedding is kept behind a flag for ablations.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != H.n:
        raise CodeError(f"expected length {H.n}, got {y.shape[-1]}")
    s = syndrome(H, hard_decision(y)).astype(np.float64)
    s_part = 1.0 - 2.0 * s if syndrome_pm1 else s
    return np.concatenate([np.abs(y), s_part], axis=-1)


def make_sample(
    x: np.ndarray,
    H: ParityCheckMatrix,
    model: NoiseModel,
    rng: np.random.Generator,
    syndrome_pm1: bool = True,
) -> ChannelSample:
    """Transmit codeword x over the channel and assemble a ChannelSample."""
    x = np.asarray(x, dtype=np.uint8)
    xs = bpsk_modulate(x)
    y = transmit(xs, model, rng)
    z = y * xs
    return ChannelSample(
        x=x,
        xs=xs,
        y=y,
        z=z,
        y_tilde=preprocess(y, H, syndrome_pm1=syndrome_pm1),
        target=(z < 0).astype(np.float64),
    )


def sample_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent per-sample generator derived from (seed, stream, index)."""
    return np.random.default_rng((seed, stream, index))


def q_function(t) -> np.ndarray | float:
    """Standard Gaussian upper-tail probability Q(t) = P(N(0,1) > t)."""
    return 0.5 * erfc(np.asarray(t, dtype=np.float64) / math.sqrt(2.0))


def tail_probability(b_x: float, b_emb: float, rho: float, n: int) -> float:
    """Union-bound probability that any magnitude row exceeds the b_x budget.

    For BPSK symbols through AWGN with deviation rho, a position exceeds
    tau = b_x / b_emb with probability Q((tau-1)/rho) + Q((tau+1)/rho);
    the result is n times that, clamped to [0, 1].
    """
    if b_x <= 0 or b_emb <= 0 or rho <= 0:
        raise ValueError("b_x, b_emb and rho must be positive")
    tau = b_x / b_emb
    p = n * (float(q_function((tau - 1.0) / rho)) + float(q_function((tau + 1.0) / rho)))
    return min(1.0, max(0.0, p))


def samples_to_csv(samples, fileobj) -> None:
    """Dump samples as CSV rows: index, y[0..n), z[0..n), target[0..n)."""
    writer = csv.writer(fileobj)
    n = len(samples[0].y) if samples else 0
    header = (
        ["index"]
        + [f"y{j}" for j in range(n)]
        + [f"z{j}" for j in range(n)]
        + [f"target{j}" for j in range(n)]
    )
    writer.writerow(header)
    for i, s in enumerate(samples):
        row = [i]
        row += [repr(float(v)) for v in s.y]
        row += [repr(float(v)) for v in s.z]
        row += [str(int(v)) for v in s.target]
        writer.writerow(row)
