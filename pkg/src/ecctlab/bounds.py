"""Closed-form complexity quantities: per-weight Lipschitz constants, covering
numbers, and the four generalization-bound variants.

Everything that can overflow (per-layer constants, global Lipschitz products,
covering-number logs) lives in natural-log domain end to end.  Formulas are
evaluated verbatim per variant; the single-layer aggregate constant B keeps
its own bookkeeping (squared factors) and is reported separately from the
per-weight constants, without reconciling the two conventions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import tail_probability
from .masking import contraction_factor
from .model import NormBudget


def _log(x: float) -> float:
    if x < 0:
        raise ValueError(f"expected non-negative value, got {x}")
    return -math.inf if x == 0 else math.log(x)


@dataclass(frozen=True)
class Dims:
    L: int
    d: int
    u: int
    T: int

    def __post_init__(self):
        if self.L < 2 or self.d < 1 or self.u < 1 or self.T < 1:
            raise ValueError(f"invalid dims {self}")


@dataclass(frozen=True)
class LipschitzSet:
    """Per-weight output sensitivities for a single attention layer."""

    l_o2: float
    l_o1: float
    l_f2: float
    l_f1: float
    l_v: float
    l_qk: float
    variant: str = "dense"

    def as_dict(self) -> dict:
        return {
            "l_o2": self.l_o2, "l_o1": self.l_o1, "l_f2": self.l_f2,
            "l_f1": self.l_f1, "l_v": self.l_v, "l_qk": self.l_qk,
            "variant": self.variant,
        }


def _require_budget(nb: NormBudget) -> None:
    for name, value in nb.as_dict().items():
        if value < 0:
            raise ValueError(f"negative budget entry {name} = {value}")


def lipschitz_dense(nb: NormBudget, L: int) -> LipschitzSet:
    """The six per-weight constants of the unmasked single-layer decoder."""
    _require_budget(nb)
    if L < 1:
        raise ValueError("L must be >= 1")
    core = nb.l_sigma * L * nb.b_x
    return LipschitzSet(
        l_o2=nb.b_o1 * nb.b_f2 * nb.b_f1 * nb.b_v * core,
        l_o1=nb.b_o2 * nb.b_f2 * nb.b_f1 * nb.b_v * core,
        l_f2=nb.b_o1 * nb.b_o2 * nb.b_f1 * nb.b_v * core,
        l_f1=nb.b_o1 * nb.b_o2 * nb.b_f2 * nb.b_v * core,
        l_v=nb.b_o1 * nb.b_o2 * nb.b_f2 * nb.b_f1 * core,
        l_qk=nb.b_o1 * nb.l_sigma * nb.b_f2 * nb.b_f1 * nb.b_v * L**2 * nb.b_x**3 * nb.w,
        variant="dense",
    )


def lipschitz_qk_sparse(nb: NormBudget, L: int, P: int) -> float:
    """Query-key constant under a P-sparse mask: L^1.5 sqrt(P) b_x^3 w K."""
    _require_budget(nb)
    if not 1 <= P <= L:
        raise ValueError(f"need 1 <= P <= L, got P={P}, L={L}")
    K = nb.b_o1 * nb.l_sigma * nb.b_f2 * nb.b_f1 * nb.b_v
    return L**1.5 * math.sqrt(P) * nb.b_x**3 * nb.w * K


def lipschitz_sparse(nb: NormBudget, L: int, P: int) -> LipschitzSet:
    """Dense set with the query-key constant tightened by the mask."""
    dense = lipschitz_dense(nb, L)
    return LipschitzSet(
        l_o2=dense.l_o2, l_o1=dense.l_o1, l_f2=dense.l_f2, l_f1=dense.l_f1,
        l_v=dense.l_v, l_qk=lipschitz_qk_sparse(nb, L, P), variant="sparse",
    )


def alpha_t(nb: NormBudget, P: int) -> float:
    """Layer-to-layer Lipschitz factor sqrt(P) L_sig B_V B_F1 B_F2 (1 + 2 B_QK b_x^2)."""
    _require_budget(nb)
    if P < 1:
        raise ValueError("P must be >= 1")
    return math.sqrt(P) * nb.l_sigma * nb.b_v * nb.b_f1 * nb.b_f2 * (1.0 + 2.0 * nb.b_qk * nb.b_x**2)


def log_alpha_t(nb: NormBudget, P: int) -> float:
    _require_budget(nb)
    if P < 1:
        raise ValueError("P must be >= 1")
    return (
        0.5 * _log(P) + _log(nb.l_sigma) + _log(nb.b_v) + _log(nb.b_f1) + _log(nb.b_f2)
        + math.log1p(2.0 * nb.b_qk * nb.b_x**2)
    )


def log_lambda_t(nb: NormBudget, L: int, P: int, T: int) -> float:
    """log of the T-layer global Lipschitz bound (never exponentiated)."""
    _require_budget(nb)
    if not 1 <= P <= L:
        raise ValueError(f"need 1 <= P <= L, got P={P}, L={L}")
    if T < 1:
        raise ValueError("T must be >= 1")
    prefix = (
        _log(nb.b_o1) + _log(nb.l_sigma) + _log(nb.b_v) + _log(nb.b_f1) + _log(nb.b_f2)
        + 3.0 * _log(nb.b_x) + _log(nb.w) + 1.5 * _log(L) + 0.5 * _log(P)
    )
    return prefix + (T - 1) * log_alpha_t(nb, P)


def log_aggregate_b(nb: NormBudget) -> float:
    """log of the single-layer aggregate constant B (squared-factor bookkeeping)."""
    _require_budget(nb)
    return (
        2.0 * _log(nb.b_o1) + _log(nb.l_sigma) + 2.0 * _log(nb.b_f1) + 2.0 * _log(nb.b_f2)
        + 2.0 * _log(nb.b_v) + _log(nb.b_qk) + 3.0 * _log(nb.b_x) + 2.0 * _log(nb.w)
    )


def log_lipschitz_multilayer(
    nb: NormBudget, L: int, P: int, T: int
) -> tuple[list[dict[str, float]], float, float]:
    """Per-layer log constants for a T-layer masked decoder.

    Layer i picks up the product of alpha factors of all layers above it.
    Returns (per-layer dicts with keys qk/v/f1/f2, log L_o1, log L_o2).
    """
    _require_budget(nb)
    if not 1 <= P <= L:
        raise ValueError(f"need 1 <= P <= L, got P={P}, L={L}")
    log_alpha = log_alpha_t(nb, P)
    core = _log(nb.l_sigma) + _log(L) + _log(nb.b_x)
    base = {
        "qk": (
            _log(nb.b_o1) + _log(nb.l_sigma) + _log(nb.b_v) + _log(nb.b_f1) + _log(nb.b_f2)
            + 3.0 * _log(nb.b_x) + _log(nb.w) + 1.5 * _log(L) + 0.5 * _log(P)
        ),
        "f2": _log(nb.b_o1) + _log(nb.b_o2) + _log(nb.b_f1) + _log(nb.b_v) + core,
        "f1": _log(nb.b_o1) + _log(nb.b_o2) + _log(nb.b_f2) + _log(nb.b_v) + core,
        "v": _log(nb.b_o1) + _log(nb.b_o2) + _log(nb.b_f2) + _log(nb.b_f1) + core,
    }
    per_layer = [
        {k: v + (T - 1 - i) * log_alpha for k, v in base.items()} for i in range(T)
    ]
    log_l_o1 = _log(nb.b_o2) + _log(nb.b_f2) + _log(nb.b_f1) + _log(nb.b_v) + core
    log_l_o2 = _log(nb.b_o1) + _log(nb.b_f2) + _log(nb.b_f1) + _log(nb.b_v) + core
    return per_layer, log_l_o1, log_l_o2


def log_covering_number(
    eps: float,
    lips,
    dims: Dims,
    nb: NormBudget,
    t_factor: float,
) -> float:
    """log covering number as a sum of per-weight matrix-covering logs.

    `lips` is either a single-layer LipschitzSet (use t_factor = 6) or the
    triple returned by log_lipschitz_multilayer (use t_factor = 4T + 2).
    Each weight object contributes exponent * log(1 + 2 scale t_factor L_i / eps)
    with exponents d^2, u d^2, d, and L, evaluated via logaddexp.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    log_eps = math.log(eps)
    log_tf = _log(t_factor)
    d, u, L = dims.d, dims.u, dims.L
    sqrt_d = 0.5 * math.log(d)

    def term(exponent: float, log_scale: float, log_l: float) -> float:
        return exponent * np.logaddexp(0.0, math.log(2.0) + log_scale + log_tf + log_l - log_eps)

    if isinstance(lips, LipschitzSet):
        pieces = [
            (d * d, sqrt_d + _log(nb.b_qk), _log(lips.l_qk)),
            (d * d, sqrt_d + _log(nb.b_v), _log(lips.l_v)),
            (u * d * d, sqrt_d + _log(nb.b_f1), _log(lips.l_f1)),
            (u * d * d, sqrt_d + _log(nb.b_f2), _log(lips.l_f2)),
            (d, _log(nb.b_o1), _log(lips.l_o1)),
            (L, _log(nb.b_o2), _log(lips.l_o2)),
        ]
    else:
        per_layer, log_l_o1, log_l_o2 = lips
        pieces = []
        for layer in per_layer:
            pieces += [
                (d * d, sqrt_d + _log(nb.b_qk), layer["qk"]),
                (d * d, sqrt_d + _log(nb.b_v), layer["v"]),
                (u * d * d, sqrt_d + _log(nb.b_f1), layer["f1"]),
                (u * d * d, sqrt_d + _log(nb.b_f2), layer["f2"]),
            ]
        pieces += [
            (d, _log(nb.b_o1), log_l_o1),
            (L, _log(nb.b_o2), log_l_o2),
        ]
    return float(sum(term(*p) for p in pieces))


def log_covering_number_aggregate(
    eps: float, dims: Dims, log_lambda: float, multi_layer: bool = False
) -> float:
    """Aggregated closed-form covering log that upper-bounds the product form."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    d, u, L, T = dims.d, dims.u, dims.L, dims.T
    if multi_layer:
        exponent = L + (2 * u + 2) * d * d * T
        log_const = math.log(4.0 * math.sqrt(d) * (2 * T + 1))
    else:
        exponent = L + (2 * u + 2) * d * d
        log_const = math.log(12.0 * math.sqrt(d))
    return exponent * float(np.logaddexp(0.0, log_const + log_lambda - math.log(eps)))


# ---------------------------------------------------------------------------
# bound reports
# ---------------------------------------------------------------------------


THEOREMS = ("T1", "T2", "T3", "T4")


@dataclass
class BoundReport:
    theorem: str
    inputs: dict
    log_lambda: float
    eta: float
    terms: dict
    total: float
    bx_star: float | None = None
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "theorem": self.theorem,
            "inputs": self.inputs,
            "log_lambda": self.log_lambda,
            "eta": self.eta,
            "terms": self.terms,
            "total": self.total,
            "bx_star": self.bx_star,
            "flags": self.flags,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def eta(P: int, L: int, T: int) -> float:
    """Sparse-over-dense contraction (P/L)^(T/2); T = 1 gives the single-layer ratio."""
    return contraction_factor(P, L, T)


def _complexity_term(exp_factor: float, log_arg: float, m: int) -> float:
    return 12.0 * math.sqrt(exp_factor * log_arg / m)


def gen_bound(theorem: str, m: int, delta: float, dims: Dims, nb: NormBudget, P: int) -> BoundReport:
    """Generalization bound per stated theorem variant.

    Terms: statistical 4/sqrt(m), confidence sqrt(log(1/delta)/2m), and the
    Dudley complexity 12 sqrt(E log(C sqrt(md) Lambda)/m) with
    (E, C, Lambda) = (L+(2u+2)d^2, 18, B L^2) for T1,
    the same with Lambda = B L^1.5 sqrt(P) for T2, and
    (L+(2u+2)d^2 T, 6, Lambda^(T)) for T3.  A log argument <= 1 marks the
    report vacuous instead of clamping.
    """
    if theorem not in ("T1", "T2", "T3"):
        raise ValueError(f"theorem must be one of T1, T2, T3, got {theorem!r}")
    if m < 2:
        raise ValueError("m must be >= 2")
    if not 0.0 < delta <= 1.0:
        raise ValueError("delta must be in (0, 1]")
    _require_budget(nb)
    L, d, u, T = dims.L, dims.d, dims.u, dims.T

    if theorem == "T1":
        log_lam = log_aggregate_b(nb) + 2.0 * _log(L)
        exp_factor = L + (2 * u + 2) * d * d
        log_c = math.log(18.0)
        eta_val = 1.0
    elif theorem == "T2":
        log_lam = log_aggregate_b(nb) + 1.5 * _log(L) + 0.5 * _log(P)
        exp_factor = L + (2 * u + 2) * d * d
        log_c = math.log(18.0)
        eta_val = eta(P, L, 1)
    else:
        log_lam = log_lambda_t(nb, L, P, T)
        exp_factor = L + (2 * u + 2) * d * d * T
        log_c = math.log(6.0)
        eta_val = eta(P, L, T)

    flags = []
    if theorem == "T3" and T > L / 10:
        flags.append("depth_large_vs_length")

    statistical = 4.0 / math.sqrt(m)
    confidence = math.sqrt(math.log(1.0 / delta) / (2.0 * m))
    log_arg = log_c + 0.5 * (math.log(m) + math.log(d)) + log_lam
    if log_arg <= 0.0:
        flags.append("vacuous")
        complexity = math.nan
        total = math.nan
    else:
        complexity = _complexity_term(exp_factor, log_arg, m)
        total = statistical + confidence + complexity

    return BoundReport(
        theorem=theorem,
        inputs={
            "m": m, "delta": delta, "L": L, "d": d, "u": u, "T": T, "P": P,
            "budget": nb.as_dict(),
        },
        log_lambda=log_lam,
        eta=eta_val,
        terms={"statistical": statistical, "confidence": confidence,
               "complexity": complexity, "tail": 0.0},
        total=total,
        flags=flags,
    )


@dataclass(frozen=True)
class GridSpec:
    """Search grid for the unbounded-input bound minimization."""

    points: int = 256
    lo: float | None = None
    hi: float | None = None
    golden_iters: int = 200

    def __post_init__(self):
        if self.points < 200:
            raise ValueError("grid needs at least 200 points")


def _golden_section(f, lo: float, hi: float, iters: int) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a <= 1e-15 * max(1.0, abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def gen_bound_awgn(
    m: int,
    delta: float,
    dims: Dims,
    nb: NormBudget,
    P: int,
    rho: float,
    b_emb: float,
    n: int,
    search: GridSpec | None = None,
) -> BoundReport:
    """Unbounded-input bound: minimize complexity(b_x) + tail(b_x) over b_x.

    The complexity term re-evaluates the T-layer bound with the input-norm
    budget replaced by the candidate b_x; the tail is the union-bound
    probability that any magnitude row exceeds it.  Search: log-spaced grid
    then one golden-section refinement on the best bracket.
    """
    if rho <= 0 or b_emb <= 0:
        raise ValueError("rho and b_emb must be positive")
    if search is None:
        search = GridSpec()
    _require_budget(nb)
    L, d, u, T = dims.L, dims.d, dims.u, dims.T
    exp_factor = L + (2 * u + 2) * d * d * T
    log_c = math.log(6.0)
    statistical = 4.0 / math.sqrt(m)
    confidence = math.sqrt(math.log(1.0 / delta) / (2.0 * m))

    def pieces(b_x: float) -> tuple[float, float, float]:
        nb_x = NormBudget(**{**nb.as_dict(), "b_x": b_x})
        log_lam = log_lambda_t(nb_x, L, P, T)
        log_arg = log_c + 0.5 * (math.log(m) + math.log(d)) + log_lam
        tail = tail_probability(b_x, b_emb, rho, n)
        if log_arg <= 0.0:
            return math.inf, tail, log_lam
        return _complexity_term(exp_factor, log_arg, m), tail, log_lam

    def objective(b_x: float) -> float:
        comp, tail, _ = pieces(b_x)
        return comp + tail

    lo = search.lo
    hi = search.hi
    if lo is None:
        lo = b_emb * max(0.0, 1.0 - 5.0 * rho) + 1e-6 * b_emb
    if hi is None:
        hi = b_emb * (1.0 + 10.0 * rho)
    if not 0 < lo < hi:
        raise ValueError(f"invalid search interval [{lo}, {hi}]")
    grid = np.exp(np.linspace(math.log(lo), math.log(hi), search.points))
    values = np.array([objective(b) for b in grid])
    best = int(np.argmin(values))
    bracket_lo = grid[max(best - 1, 0)]
    bracket_hi = grid[min(best + 1, len(grid) - 1)]
    bx_star, refined = _golden_section(objective, bracket_lo, bracket_hi, search.golden_iters)
    if refined > values[best]:
        bx_star, refined = float(grid[best]), float(values[best])

    complexity, tail, log_lam = pieces(bx_star)
    flags = []
    if T > L / 10:
        flags.append("depth_large_vs_length")
    if not math.isfinite(complexity):
        flags.append("vacuous")
        total = math.nan
    else:
        total = statistical + confidence + complexity + tail

    return BoundReport(
        theorem="T4",
        inputs={
            "m": m, "delta": delta, "L": L, "d": d, "u": u, "T": T, "P": P,
            "rho": rho, "b_emb": b_emb, "n": n, "budget": nb.as_dict(),
        },
        log_lambda=log_lam,
        eta=eta(P, L, T),
        terms={"statistical": statistical, "confidence": confidence,
               "complexity": complexity, "tail": tail},
        total=total,
        bx_star=float(bx_star),
        flags=flags,
    )
