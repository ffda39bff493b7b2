"""The decoder network: embedding, masked attention layers, output projection.

Everything is plain float64 numpy with a hand-written backward pass, so tests
can reach every intermediate quantity (pre-mask logits, attention rows,
per-layer activations) and every gradient, including the gradients with
respect to the logits that the masking analysis cares about.

Shapes follow the row convention: activations are L-by-d, attention is
L-by-L row-stochastic, and the output is one logit per codeword bit.  All
public entry points accept a single input (1-D y_tilde) or a batch (2-D).
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .codes import ParityCheckMatrix
from .masking import MaskMatrix

ACTIVATIONS = ("relu", "gelu", "identity")

# Lipschitz constants of the supported activations ("identity" is test-only).
ACTIVATION_LIPSCHITZ = {"relu": 1.0, "gelu": 1.13, "identity": 1.0}

_POWER_ITER_SEED = 0x5EC7_0001


class NumericError(RuntimeError):
    """Non-finite value during evaluation; carries the 0-based layer index."""

    def __init__(self, layer: int, message: str):
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class ECCTConfig:
    n: int
    r: int
    d: int
    u: int = 1
    T: int = 1
    activation: str = "relu"
    masked: bool = True
    softmax_scale: bool = False

    def __post_init__(self):
        if self.n < 2 or self.r < 1:
            raise ValueError(f"invalid code dims n={self.n}, r={self.r}")
        if self.d < 1 or self.u < 1 or self.T < 1:
            raise ValueError(f"invalid model dims d={self.d}, u={self.u}, T={self.T}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def L(self) -> int:
        return self.n + self.r

    @property
    def l_sigma(self) -> float:
        return ACTIVATION_LIPSCHITZ[self.activation]


@dataclass
class LayerWeights:
    w_qk: np.ndarray  # d x d, the query-key product parameterized directly
    w_v: np.ndarray   # d x d
    w_f1: np.ndarray  # d x ud
    w_f2: np.ndarray  # ud x d

    def copy(self) -> "LayerWeights":
        return LayerWeights(self.w_qk.copy(), self.w_v.copy(), self.w_f1.copy(), self.w_f2.copy())


@dataclass
class ECCTWeights:
    w_emb: np.ndarray            # L x d
    layers: list[LayerWeights]   # T entries
    w_o1: np.ndarray             # (d,)
    w_o2: np.ndarray             # L x n

    def copy(self) -> "ECCTWeights":
        return ECCTWeights(
            self.w_emb.copy(), [lw.copy() for lw in self.layers], self.w_o1.copy(), self.w_o2.copy()
        )

    def named_arrays(self):
        """Yield (name, array) pairs in a fixed order; arrays are live views."""
        yield "w_emb", self.w_emb
        for t, lw in enumerate(self.layers):
            yield f"layer{t}.w_qk", lw.w_qk
            yield f"layer{t}.w_v", lw.w_v
            yield f"layer{t}.w_f1", lw.w_f1
            yield f"layer{t}.w_f2", lw.w_f2
        yield "w_o1", self.w_o1
        yield "w_o2", self.w_o2


@dataclass
class LayerCache:
    x_in: np.ndarray    # input activations
    u: np.ndarray       # attention logits (after optional 1/sqrt(d) scaling)
    a: np.ndarray       # row-stochastic attention, exact zeros off support
    h_att: np.ndarray   # a @ x_in
    h_v: np.ndarray     # value projection
    h_f1: np.ndarray    # hidden pre-activation
    h_sigma: np.ndarray # hidden activation
    x_out: np.ndarray   # layer output (the transposed H_F2 of the norm chain)


@dataclass
class ForwardCache:
    x0: np.ndarray
    layers: list[LayerCache]
    h_o1: np.ndarray    # per-position scalar projections, length L
    z_hat: np.ndarray
    y_tilde: np.ndarray
    batched: bool


@dataclass
class LayerGradients:
    w_qk: np.ndarray
    w_v: np.ndarray
    w_f1: np.ndarray
    w_f2: np.ndarray
    du: np.ndarray
    da: np.ndarray


@dataclass
class GradientSet:
    w_emb: np.ndarray
    layers: list[LayerGradients]
    w_o1: np.ndarray
    w_o2: np.ndarray
    dx0: np.ndarray

    def named_arrays(self):
        yield "w_emb", self.w_emb
        for t, lg in enumerate(self.layers):
            yield f"layer{t}.w_qk", lg.w_qk
            yield f"layer{t}.w_v", lg.w_v
            yield f"layer{t}.w_f1", lg.w_f1
            yield f"layer{t}.w_f2", lg.w_f2
        yield "w_o1", self.w_o1
        yield "w_o2", self.w_o2


@dataclass(frozen=True)
class NormBudget:
    """Measured norm constants that parameterize every bound formula.

    b_x bounds input row norms; B_* are spectral norms (max across layers);
    b_o1/b_o2 are Euclidean norms; w is the largest absolute weight entry.
    l_sm (softmax Lipschitz constant) is reported but enters no formula.
    """

    b_x: float
    b_qk: float
    b_v: float
    b_f1: float
    b_f2: float
    b_emb: float
    b_o1: float
    b_o2: float
    w: float
    l_sigma: float
    l_sm: float = 1.0

    def as_dict(self) -> dict:
        return {
            "b_x": self.b_x, "b_qk": self.b_qk, "b_v": self.b_v, "b_f1": self.b_f1,
            "b_f2": self.b_f2, "b_emb": self.b_emb, "b_o1": self.b_o1, "b_o2": self.b_o2,
            "w": self.w, "l_sigma": self.l_sigma, "l_sm": self.l_sm,
        }


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "gelu":
        from scipy.special import erf

        return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))
    return x


def _act_deriv(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (x > 0.0).astype(np.float64)
    if name == "gelu":
        from scipy.special import erf

        phi = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        return 0.5 * (1.0 + erf(x / math.sqrt(2.0))) + x * phi
    return np.ones_like(x)


# ---------------------------------------------------------------------------
# initialization and checkpointing
# ---------------------------------------------------------------------------


def init_weights(cfg: ECCTConfig, seed: int) -> ECCTWeights:
    """Uniform init on [-1/sqrt(d), 1/sqrt(d)]; w_o2 on [-1/sqrt(L), 1/sqrt(L)]."""
    rng = np.random.default_rng(seed)
    d, L, n = cfg.d, cfg.L, cfg.n
    lim = 1.0 / math.sqrt(d)

    def draw(shape, limit=lim):
        return rng.uniform(-limit, limit, size=shape)

    w_emb = draw((L, d))
    layers = [
        LayerWeights(
            w_qk=draw((d, d)),
            w_v=draw((d, d)),
            w_f1=draw((d, cfg.u * d)),
            w_f2=draw((cfg.u * d, d)),
        )
        for _ in range(cfg.T)
    ]
    w_o1 = draw((d,))
    w_o2 = draw((L, n), limit=1.0 / math.sqrt(L))
    return ECCTWeights(w_emb=w_emb, layers=layers, w_o1=w_o1, w_o2=w_o2)


CHECKPOINT_VERSION = 1


def save_checkpoint(path, weights: ECCTWeights, cfg: ECCTConfig,
                    H: ParityCheckMatrix | None = None) -> None:
    """Bit-exact checkpoint: config JSON header plus row-major float64 arrays."""
    arrays = {name: arr for name, arr in weights.named_arrays()}
    header = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "n": cfg.n, "r": cfg.r, "d": cfg.d, "u": cfg.u, "T": cfg.T,
            "activation": cfg.activation, "masked": cfg.masked,
            "softmax_scale": cfg.softmax_scale,
        },
        "code_name": H.name if H is not None else None,
    }
    arrays["_header_json"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    if H is not None:
        arrays["_h_entries"] = H.entries
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[ECCTWeights, ECCTConfig, ParityCheckMatrix | None]:
    with np.load(path) as data:
        header = json.loads(bytes(data["_header_json"]).decode())
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        cfg = ECCTConfig(**header["config"])
        layers = [
            LayerWeights(
                w_qk=data[f"layer{t}.w_qk"],
                w_v=data[f"layer{t}.w_v"],
                w_f1=data[f"layer{t}.w_f1"],
                w_f2=data[f"layer{t}.w_f2"],
            )
            for t in range(cfg.T)
        ]
        weights = ECCTWeights(
            w_emb=data["w_emb"], layers=layers, w_o1=data["w_o1"], w_o2=data["w_o2"]
        )
        H = None
        if "_h_entries" in data:
            H = ParityCheckMatrix(data["_h_entries"], name=header.get("code_name") or "")
    return weights, cfg, H


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def embed(y_tilde: np.ndarray, w_emb: np.ndarray) -> np.ndarray:
    """Row scaling: X[i, :] = y_tilde[i] * w_emb[i, :]."""
    y_tilde = np.asarray(y_tilde, dtype=np.float64)
    if y_tilde.shape[-1] != w_emb.shape[0]:
        raise ValueError(f"length {y_tilde.shape[-1]} does not match L = {w_emb.shape[0]}")
    return y_tilde[..., :, None] * w_emb


def masked_softmax(u: np.ndarray, omega: np.ndarray | None) -> np.ndarray:
    """Row softmax over the support only; excluded entries come out exactly 0."""
    if omega is None:
        shifted = u - u.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
    else:
        neg = np.where(omega, u, -np.inf)
        e = np.exp(neg - neg.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def attention_layer(
    x_in: np.ndarray,
    lw: LayerWeights,
    mask: MaskMatrix | None,
    cfg: ECCTConfig,
) -> tuple[np.ndarray, LayerCache]:
    """One attention + FFN block; returns output and all cached intermediates."""
    x_in = np.asarray(x_in, dtype=np.float64)
    squeeze = x_in.ndim == 2
    x = x_in[None] if squeeze else x_in
    omega = mask.omega if mask is not None else None
    scale = 1.0 / math.sqrt(cfg.d) if cfg.softmax_scale else 1.0
    u = scale * ((x @ lw.w_qk) @ x.transpose(0, 2, 1))
    a = masked_softmax(u, omega)
    h_att = a @ x
    h_v = h_att @ lw.w_v
    h_f1 = h_v @ lw.w_f1
    h_sigma = _act(cfg.activation, h_f1)
    x_out = h_sigma @ lw.w_f2
    cache = LayerCache(x_in=x, u=u, a=a, h_att=h_att, h_v=h_v,
                       h_f1=h_f1, h_sigma=h_sigma, x_out=x_out)
    if squeeze:
        cache = LayerCache(*(arr[0] for arr in (
            cache.x_in, cache.u, cache.a, cache.h_att, cache.h_v,
            cache.h_f1, cache.h_sigma, cache.x_out)))
        return cache.x_out, cache
    return x_out, cache


def forward(
    y_tilde: np.ndarray,
    weights: ECCTWeights,
    mask: MaskMatrix | None,
    cfg: ECCTConfig,
) -> tuple[np.ndarray, ForwardCache]:
    """Full pass: embed, T attention layers, bilinear output head.

    Accepts a single input of length L or a batch (B, L).  Raises
    NumericError with the offending layer index if anything goes non-finite.
    """
    y_tilde = np.asarray(y_tilde, dtype=np.float64)
    squeeze = y_tilde.ndim == 1
    y = y_tilde[None] if squeeze else y_tilde
    if cfg.masked and mask is None:
        raise ValueError("config says masked but no mask given")
    omega_mask = mask if cfg.masked else None

    x = embed(y, weights.w_emb)
    x0 = x
    layer_caches = []
    for t, lw in enumerate(weights.layers):
        x, cache = attention_layer(x, lw, omega_mask, cfg)
        layer_caches.append(cache)
        if not np.isfinite(x).all():
            raise NumericError(t, f"non-finite activations in layer {t}")
    h_o1 = x @ weights.w_o1         # (B, L)
    z_hat = h_o1 @ weights.w_o2     # (B, n)
    if not np.isfinite(z_hat).all():
        raise NumericError(cfg.T - 1, "non-finite output logits")

    cache = ForwardCache(x0=x0, layers=layer_caches, h_o1=h_o1, z_hat=z_hat,
                         y_tilde=y, batched=not squeeze)
    if squeeze:
        cache.x0 = x0[0]
        cache.layers = [
            LayerCache(*(arr[0] for arr in (
                c.x_in, c.u, c.a, c.h_att, c.h_v, c.h_f1, c.h_sigma, c.x_out)))
            for c in layer_caches
        ]
        cache.h_o1 = h_o1[0]
        cache.z_hat = z_hat[0]
        cache.y_tilde = y[0]
        return z_hat[0], cache
    return z_hat, cache


def decide(y: np.ndarray, z_hat: np.ndarray) -> np.ndarray:
    """Hard decision on the recovered symbols.

    The logit is read through a sigmoid as the flip probability p; p > 1/2
    estimates the multiplicative noise as -1, otherwise +1 (so an exactly
    neutral logit predicts no flip), and the symbol estimate is the sign of
    y times that, with sign(0) taken as +1.
    """
    y = np.asarray(y, dtype=np.float64)
    z_hat = np.asarray(z_hat, dtype=np.float64)
    if y.shape != z_hat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {z_hat.shape}")
    sign_y = np.where(y < 0, -1.0, 1.0)
    noise_est = np.where(z_hat > 0, -1.0, 1.0)
    return sign_y * noise_est


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def backward(
    cache: ForwardCache,
    weights: ECCTWeights,
    mask: MaskMatrix | None,
    cfg: ECCTConfig,
    dl_dzhat: np.ndarray,
    check_contraction: bool = False,
) -> GradientSet:
    """Exact gradients of a scalar loss with upstream gradient dl_dzhat.

    Returns gradients for every weight plus, per layer, the gradients with
    respect to the attention matrix (da) and the pre-mask logits (du).  The
    softmax backward is the row-wise Jacobian restricted to the support, so
    masked positions of du are exactly zero.  With check_contraction the
    Frobenius inequality ||du||_F <= ||da||_F is asserted per layer.
    """
    dz = np.asarray(dl_dzhat, dtype=np.float64)
    squeeze = not cache.batched
    if squeeze:
        if dz.ndim != 1:
            raise ValueError("cache holds a single sample but gradient is batched")
        dz = dz[None]
    if dz.shape[-1] != cfg.n:
        raise ValueError(f"expected {cfg.n} output gradients, got {dz.shape[-1]}")

    def lift(arr):
        return arr[None] if squeeze else arr

    h_o1 = lift(cache.h_o1)
    x_top = lift(cache.layers[-1].x_out) if cache.layers else lift(cache.x0)
    y = lift(cache.y_tilde)

    g_w_o2 = np.einsum("bl,bn->ln", h_o1, dz)
    dh_o1 = dz @ weights.w_o2.T
    g_w_o1 = np.einsum("bld,bl->d", x_top, dh_o1)
    dx = dh_o1[:, :, None] * weights.w_o1[None, None, :]

    scale = 1.0 / math.sqrt(cfg.d) if cfg.softmax_scale else 1.0
    layer_grads: list[LayerGradients | None] = [None] * cfg.T
    for t in range(cfg.T - 1, -1, -1):
        lc = cache.layers[t]
        lw = weights.layers[t]
        x_in = lift(lc.x_in)
        a = lift(lc.a)
        h_sigma = lift(lc.h_sigma)
        h_f1 = lift(lc.h_f1)
        h_v = lift(lc.h_v)
        h_att = lift(lc.h_att)

        dh_sigma = dx @ lw.w_f2.T
        g_w_f2 = np.einsum("blu,bld->ud", h_sigma, dx)
        dh_f1 = dh_sigma * _act_deriv(cfg.activation, h_f1)
        g_w_f1 = np.einsum("bld,blu->du", h_v, dh_f1)
        dh_v = dh_f1 @ lw.w_f1.T
        g_w_v = np.einsum("bld,ble->de", h_att, dh_v)
        dh_att = dh_v @ lw.w_v.T

        da = dh_att @ x_in.transpose(0, 2, 1)
        dx_in = a.transpose(0, 2, 1) @ dh_att

        weighted_mean = (da * a).sum(axis=-1, keepdims=True)
        du = a * (da - weighted_mean)
        if check_contraction:
            du_norm = np.sqrt((du * du).sum(axis=(-2, -1)))
            da_norm = np.sqrt((da * da).sum(axis=(-2, -1)))
            if not (du_norm <= da_norm + 1e-10).all():
                raise AssertionError(
                    f"layer {t}: ||du||_F = {du_norm} exceeds ||da||_F = {da_norm}"
                )

        t1 = du @ x_in
        g_w_qk = scale * np.einsum("bli,bld->id", x_in, t1)
        dx_in = dx_in + scale * (
            du @ (x_in @ lw.w_qk.T) + du.transpose(0, 2, 1) @ (x_in @ lw.w_qk)
        )

        layer_grads[t] = LayerGradients(
            w_qk=g_w_qk, w_v=g_w_v, w_f1=g_w_f1, w_f2=g_w_f2,
            du=du[0] if squeeze else du, da=da[0] if squeeze else da,
        )
        dx = dx_in

    g_w_emb = np.einsum("bl,bld->ld", y, dx)
    dx0 = dx[0] if squeeze else dx
    return GradientSet(w_emb=g_w_emb, layers=layer_grads, w_o1=g_w_o1, w_o2=g_w_o2, dx0=dx0)


# ---------------------------------------------------------------------------
# norm budget
# ---------------------------------------------------------------------------


def power_iteration(
    M: np.ndarray, tol: float = 1e-8, max_iter: int = 1000, seed: int = _POWER_ITER_SEED
) -> float:
    """Largest singular value by alternating power iteration with a fixed start."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        return float(np.linalg.norm(M))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    nv = np.linalg.norm(v)
    if nv == 0 or not M.any():
        return 0.0
    v /= nv
    sigma_prev = 0.0
    for _ in range(max_iter):
        u = M @ v
        sigma = float(np.linalg.norm(u))
        if sigma == 0.0:
            return 0.0
        w = M.T @ (u / sigma)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return sigma
        v = w / nw
        if abs(sigma - sigma_prev) <= tol * max(sigma, 1.0):
            return float(np.linalg.norm(M @ v))
        sigma_prev = sigma
    return float(np.linalg.norm(M @ v))


def measure_norm_budget(
    weights: ECCTWeights, x_sample: np.ndarray, cfg: ECCTConfig
) -> NormBudget:
    """Norm constants measured from trained weights and a sample of embedded inputs.

    x_sample holds embedded inputs, shape (S, L, d) or a single (L, d); b_x is
    the largest row norm seen.  Spectral bounds take the max across layers.
    """
    xs = np.asarray(x_sample, dtype=np.float64)
    if xs.ndim == 2:
        xs = xs[None]
    if xs.size == 0:
        raise ValueError("empty input sample")
    b_x = float(np.sqrt((xs * xs).sum(axis=-1)).max())

    b_qk = max(power_iteration(lw.w_qk) for lw in weights.layers)
    b_v = max(power_iteration(lw.w_v) for lw in weights.layers)
    b_f1 = max(power_iteration(lw.w_f1) for lw in weights.layers)
    b_f2 = max(power_iteration(lw.w_f2) for lw in weights.layers)
    b_emb = power_iteration(weights.w_emb)
    b_o1 = float(np.linalg.norm(weights.w_o1))
    b_o2 = float(np.sqrt((weights.w_o2 * weights.w_o2).sum(axis=0)).max())
    w_max = max(float(np.abs(arr).max()) for _, arr in weights.named_arrays())
    return NormBudget(
        b_x=b_x, b_qk=b_qk, b_v=b_v, b_f1=b_f1, b_f2=b_f2, b_emb=b_emb,
        b_o1=b_o1, b_o2=b_o2, w=w_max, l_sigma=cfg.l_sigma, l_sm=1.0,
    )
