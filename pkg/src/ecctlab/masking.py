"""Attention mask construction from the parity-check structure.

Positions 0..n-1 of the decoder input are codeword bits and positions
n..n+r-1 are parity checks.  A pair of positions stays visible to attention
iff it is the diagonal, a bit sits in a check, or two bits share a check.
The mask is kept as a boolean support set; masked softmax normalizes over
the support only, so excluded entries are exact zeros rather than exp(-inf).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import ParityCheckMatrix


@dataclass(frozen=True)
class MaskMatrix:
    """Boolean L-by-L attention support; symmetric with a full diagonal."""

    omega: np.ndarray

    def __post_init__(self):
        om = np.ascontiguousarray(np.asarray(self.omega, dtype=bool))
        if om.ndim != 2 or om.shape[0] != om.shape[1]:
            raise ValueError(f"mask must be square, got {om.shape}")
        if not np.array_equal(om, om.T):
            raise ValueError("mask must be symmetric")
        if not om.diagonal().all():
            raise ValueError("mask diagonal must be all true")
        om.setflags(write=False)
        object.__setattr__(self, "omega", om)

    @property
    def size(self) -> int:
        return self.omega.shape[0]


@dataclass(frozen=True)
class SparsityProfile:
    """Row population statistics of a mask; P is the maximum row count."""

    P: int
    row_counts: np.ndarray
    density: float


def build_mask(H: ParityCheckMatrix) -> MaskMatrix:
    """Mask support for H: diagonal, bit-check incidence, shared-check bit pairs."""
    n, r = H.n, H.r
    L = n + r
    h = H.entries.astype(np.int64)
    omega = np.eye(L, dtype=bool)
    # bits j and k interact iff some check row contains both
    omega[:n, :n] |= (h.T @ h) > 0
    # bit j visible to check i and vice versa iff H[i, j] = 1
    incidence = h.T.astype(bool)
    omega[:n, n:] |= incidence
    omega[n:, :n] |= incidence.T
    return MaskMatrix(omega)


def full_mask(L: int) -> MaskMatrix:
    """Dense support (no masking)."""
    return MaskMatrix(np.ones((L, L), dtype=bool))


def identity_mask(L: int) -> MaskMatrix:
    """Diagonal-only support (degenerate case used in tests)."""
    return MaskMatrix(np.eye(L, dtype=bool))


def sparsity(mask: MaskMatrix) -> SparsityProfile:
    counts = mask.omega.sum(axis=1)
    L = mask.size
    return SparsityProfile(
        P=int(counts.max()),
        row_counts=counts.astype(np.int64),
        density=float(counts.sum()) / float(L * L),
    )


def contraction_factor(P: int, L: int, T: int) -> float:
    """Sparse-over-dense Lipschitz ratio bound (P/L)^(T/2)."""
    if not 1 <= P <= L:
        raise ValueError(f"need 1 <= P <= L, got P={P}, L={L}")
    if T < 1:
        raise ValueError(f"need T >= 1, got {T}")
    return float((P / L) ** (T / 2.0))


def mask_to_grid(mask: MaskMatrix) -> str:
    """0/1 text grid, one mask row per line (1 = preserved)."""
    return "\n".join(" ".join("1" if v else "0" for v in row) for row in mask.omega) + "\n"


def mask_pairs(mask: MaskMatrix) -> list[tuple[int, int]]:
    """Sorted (i, j) pairs in the support."""
    ii, jj = np.nonzero(mask.omega)
    return list(zip(ii.tolist(), jj.tolist()))
