"""Command-line surface: mask, train, eval, bound, verify, sweep, report.

Exit codes: 0 success, 1 check failure, 2 usage error, 3 numeric abort.
Every run that writes outputs also writes its fully-resolved config snapshot
(config.json) plus its sha256 (meta.json) into the output directory, so
results stay attributable.  Config files supply defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import bounds, masking, model, reporting, training, verification
from .codes import (
    BUILTIN_CODES, CodeError, ParityCheckMatrix, parse_alist, parse_dense,
    random_regular_code,
)
from .masking import build_mask, full_mask, mask_pairs, mask_to_grid, sparsity
from .model import ECCTConfig, NumericError
from .training import NumericAbort, TrainConfig

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _load_code(args) -> ParityCheckMatrix:
    if args.code:
        if args.code in BUILTIN_CODES:
            return BUILTIN_CODES[args.code]()
        if args.code.startswith("regular:"):
            # regular:n,r,col_weight,seed
            try:
                n, r, w, seed = (int(tok) for tok in args.code.split(":", 1)[1].split(","))
            except ValueError:
                raise CodeError(f"bad regular code spec {args.code!r}")
            return random_regular_code(n, r, w, seed)
        raise CodeError(f"unknown code {args.code!r}; builtins: {sorted(BUILTIN_CODES)}")
    if args.alist:
        with open(args.alist) as fh:
            return parse_alist(fh.read())
    if args.dense:
        with open(args.dense) as fh:
            return parse_dense(fh.read())
    raise CodeError("no code given; use --code, --alist, or --dense")


def _add_code_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--code", help="builtin name or regular:n,r,w,seed")
    p.add_argument("--alist", help="path to an alist file")
    p.add_argument("--dense", help="path to a dense 0/1 text file")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=None, help="embedding dimension")
    p.add_argument("--u", type=int, default=None, help="FFN hidden scaling factor")
    p.add_argument("--T", type=int, default=None, help="number of attention layers")
    p.add_argument("--activation", choices=model.ACTIVATIONS, default=None)
    p.add_argument("--unmasked", action="store_true", help="disable the parity mask")
    p.add_argument("--softmax-scale", action="store_true", help="divide logits by sqrt(d)")


def _resolve(args, file_cfg: dict, key: str, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return default


def _model_config(args, file_cfg: dict, H: ParityCheckMatrix) -> ECCTConfig:
    return ECCTConfig(
        n=H.n,
        r=H.r,
        d=int(_resolve(args, file_cfg, "d", 32)),
        u=int(_resolve(args, file_cfg, "u", 1)),
        T=int(_resolve(args, file_cfg, "T", 1)),
        activation=_resolve(args, file_cfg, "activation", "relu"),
        masked=not (args.unmasked or file_cfg.get("unmasked", False)),
        softmax_scale=bool(getattr(args, "softmax_scale", False) or file_cfg.get("softmax_scale", False)),
    )


def _train_config(args, file_cfg: dict) -> TrainConfig:
    return TrainConfig(
        m=int(_resolve(args, file_cfg, "m", 12800)),
        ebn0_db=float(_resolve(args, file_cfg, "ebn0", 2.0)),
        epochs=int(_resolve(args, file_cfg, "epochs", 20)),
        batch_size=int(_resolve(args, file_cfg, "batch_size", 128)),
        learning_rate=float(_resolve(args, file_cfg, "lr", 1e-3)),
        seed=int(_resolve(args, file_cfg, "seed", 0)),
        eval_size=int(_resolve(args, file_cfg, "eval_size", 128000)),
    )


def _file_cfg(args) -> dict:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            return json.load(fh)
    return {}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_mask(args) -> int:
    H = _load_code(args)
    mask = full_mask(H.L) if args.dense_mask else build_mask(H)
    prof = sparsity(mask)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "mask_grid.txt"), "w") as fh:
        fh.write(mask_to_grid(mask))
    with open(os.path.join(args.out, "mask_pairs.csv"), "w") as fh:
        fh.write("i,j\n")
        for i, j in mask_pairs(mask):
            fh.write(f"{i},{j}\n")
    with open(os.path.join(args.out, "sparsity.json"), "w") as fh:
        json.dump({
            "P": prof.P,
            "L": mask.size,
            "density": prof.density,
            "row_counts": prof.row_counts.tolist(),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    reporting.write_config_snapshot(args.out, {
        "command": "mask", "code": H.name or args.code or args.alist or args.dense,
        "dense_mask": bool(args.dense_mask),
    })
    print(f"mask: L={mask.size} P={prof.P} density={prof.density:.4f} -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    file_cfg = _file_cfg(args)
    H = _load_code(args)
    cfg = _model_config(args, file_cfg, H)
    tcfg = _train_config(args, file_cfg)
    mask = build_mask(H) if cfg.masked else None
    os.makedirs(args.out, exist_ok=True)
    weights, history = training.train(H, mask, cfg, tcfg)
    model.save_checkpoint(os.path.join(args.out, "checkpoint.npz"), weights, cfg, H)
    with open(os.path.join(args.out, "history.csv"), "w") as fh:
        fh.write("epoch,loss,train_ber\n")
        for row in history:
            fh.write(f"{row.epoch},{row.loss!r},{row.train_ber!r}\n")
    reporting.write_config_snapshot(args.out, {
        "command": "train", "code": H.name, "model": cfg.__dict__, "train": tcfg.__dict__,
    })
    final = history[-1].train_ber if history else float("nan")
    print(f"train: epochs={tcfg.epochs} final_epoch_ber={final:.5f} -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    weights, cfg, H = model.load_checkpoint(args.checkpoint)
    if H is None:
        raise CodeError("checkpoint has no embedded parity-check matrix")
    mask = build_mask(H) if cfg.masked else None
    ber = training.evaluate(
        weights, H, mask, cfg, args.samples, args.ebn0, args.seed,
        codeword_source=args.source,
    )
    payload = {
        "ber": ber, "n_samples": args.samples, "ebn0_db": args.ebn0,
        "seed": args.seed, "source": args.source, "code": H.name,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.json"), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        reporting.write_config_snapshot(args.out, {"command": "eval", **payload})
    return EXIT_OK


def _budget_from_checkpoint(args, n_budget_samples: int = 256):
    weights, cfg, H = model.load_checkpoint(args.checkpoint)
    if H is None:
        raise CodeError("checkpoint has no embedded parity-check matrix")
    mask = build_mask(H) if cfg.masked else None
    samples = training.make_dataset(H, n_budget_samples, args.ebn0, args.seed)
    y_tilde, _, _, _ = training.stack_inputs(samples)
    x_embedded = model.embed(y_tilde, weights.w_emb)
    nb = model.measure_norm_budget(weights, x_embedded, cfg)
    P = sparsity(build_mask(H)).P if cfg.masked else cfg.L
    return nb, cfg, H, P


def cmd_bound(args) -> int:
    if args.checkpoint:
        nb, cfg, H, P = _budget_from_checkpoint(args)
        dims = bounds.Dims(L=cfg.L, d=cfg.d, u=cfg.u, T=cfg.T)
        n = H.n
    else:
        with open(args.budget) as fh:
            spec = json.load(fh)
        nb = model.NormBudget(**spec["budget"])
        dims = bounds.Dims(**spec["dims"])
        P = int(spec["P"])
        n = int(spec.get("n", dims.L // 2))

    theorem = f"T{args.theorem}"
    if theorem == "T4":
        report = bounds.gen_bound_awgn(
            args.m, args.delta, dims, nb, P, rho=args.rho, b_emb=nb.b_emb, n=n,
        )
    else:
        report = bounds.gen_bound(theorem, args.m, args.delta, dims, nb, P)

    print("theorem m delta L d u T P log_lambda eta "
          "statistical confidence complexity tail total flags")
    t = report.terms
    print(
        f"{report.theorem} {args.m} {args.delta} {dims.L} {dims.d} {dims.u} {dims.T} {P} "
        f"{report.log_lambda:.6g} {report.eta:.6g} {t['statistical']:.6g} "
        f"{t['confidence']:.6g} {t['complexity']:.6g} {t['tail']:.6g} "
        f"{report.total:.6g} {';'.join(report.flags) or '-'}"
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "bound.json"), "w") as fh:
            fh.write(report.to_json() + "\n")
        reporting.write_config_snapshot(args.out, {
            "command": "bound", "theorem": theorem, "m": args.m, "delta": args.delta,
            "rho": args.rho, "checkpoint": args.checkpoint, "budget": args.budget,
        })
    return EXIT_OK


def cmd_verify(args) -> int:
    H = _load_code(args) if (args.code or args.alist or args.dense) else None
    if H is None:
        from .codes import hamming_7_4

        H = hamming_7_4()
    reports, control = verification.run_all(
        H, d=args.d or 8,
        sparsity_trials=args.trials, lemma_samples=args.lemma_samples, seed=args.seed,
    )
    all_pass = all(r.passed for r in reports)
    control_ok = not control.passed
    for r in reports:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: "
              f"max_violation={r.max_violation:.3e} threshold={r.threshold:.0e}")
    print(f"[{'PASS' if control_ok else 'FAIL'}] {control.name} (expected to fail): "
          f"max_violation={control.max_violation:.3e}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "verify.json"), "w") as fh:
            payload = {
                "reports": [json.loads(r.to_json()) for r in reports],
                "control": json.loads(control.to_json()),
                "passed": all_pass and control_ok,
            }
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        reporting.write_config_snapshot(args.out, {
            "command": "verify", "code": H.name, "trials": args.trials, "seed": args.seed,
        })
    return EXIT_OK if (all_pass and control_ok) else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _sweep_task(task: dict) -> dict:
    """One (axis value, trial) training run; returns a results-CSV row."""
    axis = task["axis"]
    if axis == "L":
        H = random_regular_code(task["value"], task["value"] // 2, 3, seed=task["family_seed"])
    elif task["code"] in BUILTIN_CODES:
        H = BUILTIN_CODES[task["code"]]()
    else:
        H = random_regular_code(*task["regular_params"])

    cfg = ECCTConfig(
        n=H.n, r=H.r, d=task["d"], u=task["u"],
        T=task["value"] if axis == "T" else task["T"],
        masked=task["masked"],
    )
    m = task["value"] if axis == "m" else task["m"]
    tcfg = TrainConfig(
        m=m, ebn0_db=task["ebn0_db"], epochs=task["epochs"],
        batch_size=min(task["batch_size"], m), learning_rate=task["lr"],
        seed=task["trial_seed"], eval_size=task["eval_size"],
    )
    mask = build_mask(H) if cfg.masked else None
    record, weights, _ = training.run_experiment(H, mask, cfg, tcfg, timing=task["timing"])

    samples = training.make_dataset(H, min(256, m), tcfg.ebn0_db, tcfg.seed)
    y_tilde, _, _, _ = training.stack_inputs(samples)
    nb = model.measure_norm_budget(weights, model.embed(y_tilde, weights.w_emb), cfg)
    P = sparsity(mask).P if mask is not None else cfg.L
    dims = bounds.Dims(L=cfg.L, d=cfg.d, u=cfg.u, T=cfg.T)
    theorem = {"T": "T3", "L": "T2", "m": "T3"}[axis]
    bound = bounds.gen_bound(theorem, m, task["delta"], dims, nb, P)

    return {
        "code": H.name or "custom", "n": H.n, "r": H.r, "L": cfg.L, "d": cfg.d,
        "u": cfg.u, "T": cfg.T, "P": P, "masked": cfg.masked, "m": m,
        "ebn0_db": tcfg.ebn0_db, "seed": tcfg.seed,
        "train_ber": record.train_ber, "test_ber": record.test_ber,
        "gap": record.gap, "normalized_gap": record.normalized_gap,
        "log_lambda": bound.log_lambda, "bound_total": bound.total,
        "wall_time_s": record.wall_time,
    }


def run_sweep(
    axis: str,
    values: list[int],
    trials: int,
    base: dict,
    out_dir: str,
    workers: int = 1,
) -> tuple[list[dict], list[dict], int]:
    """Train/evaluate one model per (value, trial); emit records, summary, SVG."""
    tasks = []
    for vi, value in enumerate(values):
        for ti in range(trials):
            trial_seed = int(np.random.SeedSequence((base["seed"], vi, ti)).generate_state(1)[0])
            tasks.append({**base, "axis": axis, "value": value, "trial_seed": trial_seed})

    failures = 0
    rows = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_task, tasks))
        rows = results
    else:
        for task in tasks:
            try:
                rows.append(_sweep_task(task))
            except (NumericAbort, NumericError) as exc:
                print(f"trial failed ({task['axis']}={task['value']}): {exc}", file=sys.stderr)
                failures += 1

    os.makedirs(out_dir, exist_ok=True)
    reporting.write_records_csv(os.path.join(out_dir, "records.csv"), rows)
    summary = reporting.summarize_sweep(axis, rows)
    reporting.write_summary_csv(os.path.join(out_dir, "summary.csv"), summary)
    svg = reporting.render_sweep_svg(
        summary, axis, title=f"normalized gap vs {axis}",
        bound_label={"T": "Theorem-3 bound", "L": "Theorem-2 bound", "m": "Theorem-3 bound"}[axis],
    )
    with open(os.path.join(out_dir, "sweep.svg"), "w") as fh:
        fh.write(svg)
    reporting.write_config_snapshot(out_dir, {
        "command": "sweep", "axis": axis, "values": values, "trials": trials, **base,
    })
    return rows, summary, failures


def cmd_sweep(args) -> int:
    file_cfg = _file_cfg(args)
    values = [int(v) for v in args.values.split(",")]
    if not values:
        raise CodeError("empty sweep values")
    base = {
        "code": _resolve(args, file_cfg, "code", "hamming74") or "hamming74",
        "regular_params": None,
        "family_seed": int(_resolve(args, file_cfg, "family_seed", 7)),
        "d": int(_resolve(args, file_cfg, "d", 32)),
        "u": int(_resolve(args, file_cfg, "u", 1)),
        "T": int(_resolve(args, file_cfg, "T", 1)),
        "m": int(_resolve(args, file_cfg, "m", 12800)),
        "ebn0_db": float(_resolve(args, file_cfg, "ebn0", 2.0)),
        "epochs": int(_resolve(args, file_cfg, "epochs", 20)),
        "batch_size": int(_resolve(args, file_cfg, "batch_size", 128)),
        "lr": float(_resolve(args, file_cfg, "lr", 1e-3)),
        "eval_size": int(_resolve(args, file_cfg, "eval_size", 128000)),
        "seed": int(_resolve(args, file_cfg, "seed", 0)),
        "delta": float(_resolve(args, file_cfg, "delta", 0.05)),
        "masked": not (args.unmasked or file_cfg.get("unmasked", False)),
        "timing": not args.no_timing,
    }
    if base["code"].startswith("regular:"):
        base["regular_params"] = [int(t) for t in base["code"].split(":", 1)[1].split(",")]
        base["code"] = "regular"
    _, summary, failures = run_sweep(args.axis, values, args.trials, base, args.out,
                                     workers=args.workers)
    for row in summary:
        print(f"{args.axis}={row['value']}: median={row['median']:.5f} "
              f"q1={row['q1']:.5f} q3={row['q3']:.5f} bound={row['bound_median']:.4g}")
    return EXIT_CHECK_FAILED if failures else EXIT_OK


def cmd_report(args) -> int:
    rows = reporting.read_records_csv(args.records)
    summary = reporting.summarize_sweep(args.axis, rows)
    os.makedirs(args.out, exist_ok=True)
    reporting.write_summary_csv(os.path.join(args.out, "summary.csv"), summary)
    svg = reporting.render_sweep_svg(summary, args.axis, title=f"normalized gap vs {args.axis}")
    with open(os.path.join(args.out, "sweep.svg"), "w") as fh:
        fh.write(svg)
    reporting.write_config_snapshot(args.out, {
        "command": "report", "records": args.records, "axis": args.axis,
    })
    print(f"report: {len(rows)} records, {len(summary)} summary rows -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecctlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="build and export the attention mask")
    _add_code_args(p)
    p.add_argument("--dense-mask", action="store_true", help="export the unmasked grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("train", help="train a decoder")
    _add_code_args(p)
    _add_model_args(p)
    p.add_argument("--config", help="JSON config file supplying defaults")
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--ebn0", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eval-size", type=int, default=None, dest="eval_size")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Monte Carlo BER of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--ebn0", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source", choices=["all_zero", "random_from_G"], default="all_zero")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bound", help="evaluate a generalization bound")
    p.add_argument("--theorem", type=int, choices=[1, 2, 3, 4], required=True)
    p.add_argument("--checkpoint", help="measure the norm budget from this checkpoint")
    p.add_argument("--budget", help="JSON with budget/dims/P instead of a checkpoint")
    p.add_argument("--m", type=int, default=12800)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--rho", type=float, default=0.5, help="noise deviation for theorem 4")
    p.add_argument("--ebn0", type=float, default=2.0, help="budget-measurement channel")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("verify", help="run all property checks")
    _add_code_args(p)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--lemma-samples", type=int, default=10000, dest="lemma_samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="train/evaluate across an axis")
    p.add_argument("--axis", choices=["T", "L", "m"], required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--config", help="JSON config file supplying defaults")
    p.add_argument("--code", default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--u", type=int, default=None)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--ebn0", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--eval-size", type=int, default=None, dest="eval_size")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--unmasked", action="store_true")
    p.add_argument("--no-timing", action="store_true",
                   help="record wall_time_s as 0 for byte-identical reruns")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize a records CSV")
    p.add_argument("--records", required=True)
    p.add_argument("--axis", choices=["T", "L", "m"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CodeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericAbort, NumericError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
