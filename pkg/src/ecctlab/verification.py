"""Executable certification of the provable properties.

Each check draws randomized instances, measures the worst violation of the
claimed inequality or identity, and reports pass/fail against a fixed
threshold.  The unmasked gradient-sparsity run is a control that must fail,
guarding the masked check against vacuity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds, channel, model, training
from .codes import ParityCheckMatrix
from .masking import MaskMatrix, build_mask, sparsity
from .model import ECCTConfig, ECCTWeights, NormBudget


@dataclass
class VerificationReport:
    name: str
    trials: int
    max_violation: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "name": self.name,
            "trials": self.trials,
            "max_violation": self.max_violation,
            "threshold": self.threshold,
            "passed": self.passed,
            "details": self.details,
        }
        return json.dumps(payload, indent=2, sort_keys=True, default=float)


def _report(name, trials, max_violation, threshold, details=None) -> VerificationReport:
    return VerificationReport(
        name=name,
        trials=trials,
        max_violation=float(max_violation),
        threshold=threshold,
        passed=bool(max_violation <= threshold),
        details=details or {},
    )


def _random_input(H: ParityCheckMatrix, rng: np.random.Generator) -> np.ndarray:
    """A structurally valid decoder input from a random received vector."""
    y = rng.standard_normal(H.n) + channel.bpsk_modulate(rng.integers(0, 2, size=H.n))
    return channel.preprocess(y, H)


def _trial_weights(cfg: ECCTConfig, rng: np.random.Generator) -> ECCTWeights:
    return model.init_weights(cfg, int(rng.integers(0, 2**63 - 1)))


# ---------------------------------------------------------------------------
# gradient sparsity
# ---------------------------------------------------------------------------


def _sparsity_violation(
    cfg: ECCTConfig, H: ParityCheckMatrix, mask: MaskMatrix, trials: int, seed: int
) -> tuple[float, dict]:
    rng = np.random.default_rng(seed)
    off = ~mask.omega
    worst = 0.0
    worst_case = {}
    for trial in range(trials):
        weights = _trial_weights(cfg, rng)
        y_tilde = _random_input(H, rng)
        z_hat, cache = model.forward(y_tilde, weights, mask, cfg)
        target = rng.integers(0, 2, size=cfg.n).astype(np.float64)
        _, dz = training.bce_loss(z_hat, target)
        grads = model.backward(cache, weights, mask, cfg, dz)
        for t, lg in enumerate(grads.layers):
            violation = float(np.abs(lg.du[off]).max()) if off.any() else 0.0
            if violation > worst:
                worst = violation
                worst_case = {"trial": trial, "layer": t}
    return worst, worst_case


def check_gradient_sparsity(
    cfg: ECCTConfig,
    H: ParityCheckMatrix,
    trials: int = 50,
    seed: int = 0,
    threshold: float = 1e-12,
) -> VerificationReport:
    """Logit gradients outside the mask support must vanish to threshold."""
    if not cfg.masked:
        raise ValueError("gradient sparsity check needs a masked config")
    mask = build_mask(H)
    worst, worst_case = _sparsity_violation(cfg, H, mask, trials, seed)
    return _report(
        f"gradient_sparsity_T{cfg.T}_{H.name or 'custom'}", trials, worst, threshold,
        {"worst_case": worst_case, "P": sparsity(mask).P, "L": mask.size},
    )


def check_gradient_sparsity_control(
    cfg: ECCTConfig,
    H: ParityCheckMatrix,
    trials: int = 10,
    seed: int = 0,
    threshold: float = 1e-12,
) -> VerificationReport:
    """Control: the unmasked model must violate the mask sparsity pattern."""
    dense_cfg = ECCTConfig(
        n=cfg.n, r=cfg.r, d=cfg.d, u=cfg.u, T=cfg.T,
        activation=cfg.activation, masked=False, softmax_scale=cfg.softmax_scale,
    )
    mask = build_mask(H)
    worst, worst_case = _sparsity_violation(dense_cfg, H, mask, trials, seed)
    report = _report(
        f"gradient_sparsity_control_{H.name or 'custom'}", trials, worst, threshold,
        {"worst_case": worst_case, "expected": "fail"},
    )
    return report


# ---------------------------------------------------------------------------
# BER equivalence
# ---------------------------------------------------------------------------


def check_lemma_equivalence(
    weights: ECCTWeights,
    H: ParityCheckMatrix,
    mask: MaskMatrix | None,
    cfg: ECCTConfig,
    n_samples: int = 10000,
    seed: int = 0,
    codeword_source: str = "random_from_G",
    force_logits: np.ndarray | None = None,
    ebn0_db: float = 2.0,
) -> VerificationReport:
    """Codeword-side BER equals noise-side BER, sample by sample, exactly.

    force_logits substitutes fixed logits for the network output (used to
    exercise adversarial all-flip behavior).
    """
    from .codes import derive_generator

    nm = channel.NoiseModel.from_ebn0(ebn0_db, H.rate())
    gen = derive_generator(H) if codeword_source == "random_from_G" else None
    worst = 0.0
    zero = np.zeros(H.n, dtype=np.uint8)
    chunk = 1024
    for lo in range(0, n_samples, chunk):
        hi = min(lo + chunk, n_samples)
        batch = []
        for i in range(lo, hi):
            rng = channel.sample_rng(seed, i)
            if gen is None:
                x = zero
            else:
                x = gen.encode(rng.integers(0, 2, size=gen.k).astype(np.uint8))
            batch.append(channel.make_sample(x, H, nm, rng))
        y_tilde, target, y, xs = training.stack_inputs(batch)
        if force_logits is not None:
            z_hat = np.broadcast_to(force_logits, (hi - lo, H.n)).copy()
        else:
            z_hat, _ = model.forward(y_tilde, weights, mask, cfg)
        x_hat = model.decide(y, z_hat)
        ber_codeword = (x_hat != xs).mean(axis=1)
        predicted_flip = (z_hat > 0).astype(np.float64)
        ber_noise = (predicted_flip != target).mean(axis=1)
        worst = max(worst, float(np.abs(ber_codeword - ber_noise).max()))
    return _report(
        f"lemma_equivalence_{codeword_source}", n_samples, worst, 0.0,
        {"code": H.name or "custom"},
    )


# ---------------------------------------------------------------------------
# empirical Lipschitz domination
# ---------------------------------------------------------------------------


def _project_spectral(mat: np.ndarray, limit: float) -> np.ndarray:
    s = np.linalg.norm(mat, 2)
    if s > limit > 0:
        return mat * (limit / s)
    return mat


def _theoretical_constants(nb: NormBudget, L: int, P: int, T: int, masked: bool) -> dict[str, float]:
    p_eff = P if masked else L
    per_layer, log_o1, log_o2 = bounds.log_lipschitz_multilayer(nb, L, p_eff, T)
    consts = {"w_o1": math.exp(log_o1), "w_o2": math.exp(log_o2)}
    for t, layer in enumerate(per_layer):
        consts[f"layer{t}.w_qk"] = math.exp(layer["qk"])
        consts[f"layer{t}.w_v"] = math.exp(layer["v"])
        consts[f"layer{t}.w_f1"] = math.exp(layer["f1"])
        consts[f"layer{t}.w_f2"] = math.exp(layer["f2"])
    return consts


def check_lipschitz_empirical(
    weights: ECCTWeights,
    H: ParityCheckMatrix,
    mask: MaskMatrix | None,
    cfg: ECCTConfig,
    nb: NormBudget | None = None,
    trials: int = 200,
    perturbation_scale: float = 1e-3,
    seed: int = 0,
    n_inputs: int = 8,
) -> VerificationReport:
    """Per-weight output ratios must stay below the theoretical constants.

    One weight is perturbed at a time (matching the telescoping argument);
    perturbed weights are projected back into the measured norm budget so the
    constants apply.  Violation is max(ratio - constant); threshold 0.
    """
    rng = np.random.default_rng(seed)
    inputs = np.stack([_random_input(H, rng) for _ in range(n_inputs)])
    x_embedded = model.embed(inputs, weights.w_emb)
    if nb is None:
        nb = model.measure_norm_budget(weights, x_embedded, cfg)
    P = sparsity(mask).P if (mask is not None and cfg.masked) else cfg.L
    consts = _theoretical_constants(nb, cfg.L, P, cfg.T, cfg.masked)
    base_out, _ = model.forward(inputs, weights, mask, cfg)

    budget_limits = {"w_o1": nb.b_o1, "w_o2": nb.b_o2}
    for t in range(cfg.T):
        budget_limits[f"layer{t}.w_qk"] = nb.b_qk
        budget_limits[f"layer{t}.w_v"] = nb.b_v
        budget_limits[f"layer{t}.w_f1"] = nb.b_f1
        budget_limits[f"layer{t}.w_f2"] = nb.b_f2

    worst = -math.inf
    detail = {}
    skipped = 0
    for name, base_arr in weights.named_arrays():
        if name == "w_emb":
            continue  # the telescoping set covers attention and output weights only
        limit = consts[name]
        max_ratio = 0.0
        for _ in range(trials):
            delta = perturbation_scale * rng.standard_normal(base_arr.shape)
            if not delta.any():
                skipped += 1
                continue
            perturbed_arr = base_arr + delta
            cap = budget_limits[name]
            if name == "w_o1":
                norm = np.linalg.norm(perturbed_arr)
                if norm > cap > 0:
                    perturbed_arr = perturbed_arr * (cap / norm)
            elif name == "w_o2":
                col = np.sqrt((perturbed_arr**2).sum(axis=0))
                scale_cols = np.where(col > cap, cap / np.maximum(col, 1e-300), 1.0)
                perturbed_arr = perturbed_arr * scale_cols
            else:
                perturbed_arr = _project_spectral(perturbed_arr, cap)
            diff = perturbed_arr - base_arr
            dnorm = float(np.linalg.norm(diff))
            if dnorm == 0.0:
                skipped += 1
                continue
            trial_weights = weights.copy()
            _assign_named(trial_weights, name, perturbed_arr)
            out, _ = model.forward(inputs, trial_weights, mask, cfg)
            ratio = float(np.abs(out - base_out).max()) / dnorm
            max_ratio = max(max_ratio, ratio)
        violation = max_ratio - limit
        worst = max(worst, violation)
        detail[name] = {"constant": limit, "max_ratio": max_ratio, "violation": violation}
    return _report(
        f"lipschitz_domination_{'masked' if cfg.masked else 'dense'}_{H.name or 'custom'}",
        trials, worst, 0.0, {"per_weight": detail, "skipped": skipped, "P": P},
    )


def _assign_named(weights: ECCTWeights, name: str, value: np.ndarray) -> None:
    if name == "w_emb":
        weights.w_emb = value
    elif name == "w_o1":
        weights.w_o1 = value
    elif name == "w_o2":
        weights.w_o2 = value
    else:
        layer, attr = name.split(".")
        setattr(weights.layers[int(layer[5:])], attr, value)


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def check_finite_difference(
    cfg: ECCTConfig,
    H: ParityCheckMatrix,
    mask: MaskMatrix | None,
    trials: int = 5,
    eps: float = 1e-5,
    seed: int = 0,
    threshold: float = 1e-4,
) -> VerificationReport:
    """Analytic gradients against central differences over every weight entry.

    The violation is the relative error of the concatenated gradient vector
    per trial; normalizing per weight matrix would divide fd roundoff noise
    by near-zero norms and measure conditioning instead of correctness.
    Per-weight norms are kept in the details for forensics.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps outside [1e-7, 1e-3]")
    rng = np.random.default_rng(seed)
    worst = 0.0
    detail = {}
    for trial in range(trials):
        weights = _trial_weights(cfg, rng)
        y_tilde = _random_input(H, rng)
        target = rng.integers(0, 2, size=cfg.n).astype(np.float64)

        z_hat, cache = model.forward(y_tilde, weights, mask, cfg)
        _, dz = training.bce_loss(z_hat, target)
        grads = model.backward(cache, weights, mask, cfg, dz)

        def loss_at() -> float:
            z, _ = model.forward(y_tilde, weights, mask, cfg)
            return training.bce_loss(z, target)[0]

        analytic = dict(grads.named_arrays())
        err_sq = 0.0
        ga_sq = 0.0
        fd_sq = 0.0
        per_weight = {}
        for name, arr in weights.named_arrays():
            fd = np.zeros_like(arr)
            flat = arr.reshape(-1)
            fd_flat = fd.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = loss_at()
                flat[i] = orig - eps
                down = loss_at()
                flat[i] = orig
                fd_flat[i] = (up - down) / (2.0 * eps)
            ga = analytic[name]
            err_sq += float(((ga - fd) ** 2).sum())
            ga_sq += float((ga * ga).sum())
            fd_sq += float((fd * fd).sum())
            per_weight[name] = {
                "analytic_norm": float(np.linalg.norm(ga)),
                "err_norm": float(np.linalg.norm(ga - fd)),
            }
        denom = max(math.sqrt(ga_sq), math.sqrt(fd_sq), 1e-12)
        rel = math.sqrt(err_sq) / denom
        if rel > worst:
            worst = rel
            detail = {"trial": trial, "per_weight": per_weight}
    return _report(
        f"finite_difference_T{cfg.T}_{'masked' if cfg.masked else 'dense'}",
        trials, worst, threshold, detail,
    )


# ---------------------------------------------------------------------------
# Frobenius contraction
# ---------------------------------------------------------------------------


def check_frobenius_contraction(
    cfg: ECCTConfig,
    H: ParityCheckMatrix,
    mask: MaskMatrix | None,
    trials: int = 100,
    seed: int = 0,
    threshold: float = 1e-10,
) -> VerificationReport:
    """||grad wrt logits||_F must not exceed ||grad wrt attention||_F."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(trials):
        weights = _trial_weights(cfg, rng)
        y_tilde = _random_input(H, rng)
        z_hat, cache = model.forward(y_tilde, weights, mask, cfg)
        target = rng.integers(0, 2, size=cfg.n).astype(np.float64)
        _, dz = training.bce_loss(z_hat, target)
        grads = model.backward(cache, weights, mask, cfg, dz)
        for lg in grads.layers:
            worst = max(worst, float(np.linalg.norm(lg.du) - np.linalg.norm(lg.da)))
    return _report(
        f"frobenius_contraction_{'masked' if cfg.masked else 'dense'}",
        trials, worst, threshold,
    )


# ---------------------------------------------------------------------------
# aggregate runner
# ---------------------------------------------------------------------------


def run_all(
    H: ParityCheckMatrix,
    d: int = 8,
    u: int = 1,
    sparsity_trials: int = 50,
    lemma_samples: int = 10000,
    fd_trials: int = 5,
    lipschitz_trials: int = 200,
    frobenius_trials: int = 100,
    seed: int = 0,
) -> tuple[list[VerificationReport], VerificationReport]:
    """All five checks on one code; returns (reports, control_report).

    The control report is the unmasked sparsity run and is expected to fail.
    """
    mask = build_mask(H)
    reports = []
    for T in (1, 2, 3):
        cfg = ECCTConfig(n=H.n, r=H.r, d=d, u=u, T=T, masked=True)
        reports.append(check_gradient_sparsity(cfg, H, trials=sparsity_trials, seed=seed))

    cfg1 = ECCTConfig(n=H.n, r=H.r, d=d, u=u, T=1, masked=True)
    weights = model.init_weights(cfg1, seed)
    reports.append(check_lemma_equivalence(
        weights, H, mask, cfg1, n_samples=lemma_samples, seed=seed))

    fd_cfg = ECCTConfig(n=H.n, r=H.r, d=min(d, 4), u=u, T=2, masked=True)
    reports.append(check_finite_difference(fd_cfg, H, mask, trials=fd_trials, seed=seed))

    reports.append(check_lipschitz_empirical(
        weights, H, mask, cfg1, trials=lipschitz_trials, seed=seed))

    reports.append(check_frobenius_contraction(cfg1, H, mask, trials=frobenius_trials, seed=seed))

    control = check_gradient_sparsity_control(cfg1, H, trials=10, seed=seed)
    return reports, control
