"""Command-line entry point.

Subcommands::

    deblur IMAGE --kernel-size L [--config FILE] [--sigma0] [--single-scale]
           [--out-image P] [--out-kernel P] [--out-kernel-png P]
    simulate {amplification,perturbed,rank,cost-ratio,logdet-size,blind1d} --out CSV
    eval --est P --gt P --blurry P --gt-kernel P [--est-kernel P]
    prox-demo

The thread count of the numerical libraries follows ``LOWRANK_DEBLUR_THREADS``
when set.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

THREAD_ENV = "LOWRANK_DEBLUR_THREADS"


def _apply_thread_env() -> None:
    n = os.environ.get(THREAD_ENV)
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = n


def _odd_size(text: str):
    parts = [p for p in text.lower().replace("x", ",").split(",") if p.strip()]
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad kernel size {text!r}") from None
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2 or any(d < 1 or d % 2 == 0 for d in dims):
        raise argparse.ArgumentTypeError("kernel size must be odd, e.g. 23 or 23,31")
    return dims


def _int_list(text: str):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lowrank-deblur", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("deblur", help="blind deconvolution of one image")
    d.add_argument("image")
    d.add_argument("--kernel-size", type=_odd_size, required=True)
    d.add_argument("--config", help="key = value config file")
    d.add_argument("--sigma0", action="store_true", help="disable the low-rank kernel prior")
    d.add_argument("--single-scale", action="store_true")
    d.add_argument("--seed", type=int)
    d.add_argument("--out-image", default="deblurred.png")
    d.add_argument("--out-kernel", default="kernel.txt")
    d.add_argument("--out-kernel-png")

    s = sub.add_parser("simulate", help="run a numerical study and write a CSV report")
    s.add_argument("experiment", choices=["amplification", "perturbed", "rank", "cost-ratio",
                                          "logdet-size", "blind1d"])
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trials", type=int)
    s.add_argument("--m", type=int, help="signal length")
    s.add_argument("--sizes", type=_int_list)
    s.add_argument("--rel-noise", type=float, default=0.01)
    s.add_argument("--gamma", type=float, default=10.0)
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--epsilons", type=_float_list)
    s.add_argument("--kernel", help="kernel file for cost-ratio / logdet-size")
    s.add_argument("--row-image", help="image whose middle row is the 1-D signal")
    s.add_argument("--iters", type=int, default=49)

    e = sub.add_parser("eval", help="score a restoration against ground truth")
    e.add_argument("--est", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--blurry", required=True)
    e.add_argument("--gt-kernel", required=True)
    e.add_argument("--est-kernel")
    e.add_argument("--threshold", type=float, default=3.0)

    sub.add_parser("prox-demo", help="print singular values before and after the log-det prox")
    return p


def _load_config(args):
    from .types import default_config, parse_config_text

    cfg = default_config()
    if args.config:
        cfg = parse_config_text(Path(args.config).read_text(), cfg)
    changes = {"kernel_size": args.kernel_size}
    if args.sigma0:
        changes["sigma"] = 0.0
    if args.seed is not None:
        changes["seed"] = args.seed
    return cfg.with_(**changes)


def cmd_deblur(args) -> int:
    from . import io, pipeline

    cfg = _load_config(args)
    y = io.load_image(args.image)
    if args.single_scale:
        res = pipeline.deblur_single_scale(y, cfg)
    else:
        res = pipeline.deblur_blind(y, cfg)
    io.save_image(args.out_image, res.image)
    io.save_kernel(args.out_kernel, res.kernel)
    if args.out_kernel_png:
        io.save_kernel_png(args.out_kernel_png, res.kernel)
    return 0


def _default_kernel(seed):
    from .synthetic import motion_kernel

    return motion_kernel(11, seed)


def cmd_simulate(args) -> int:
    from . import analysis, io
    from .synthetic import marginalize

    exp = args.experiment
    sampler = analysis.HyperLaplacianSampler(args.gamma, args.alpha, args.seed)
    kernel = io.load_kernel(args.kernel, normalize=True) if args.kernel else _default_kernel(args.seed)
    if exp == "amplification":
        x = None
        if args.row_image:
            img = io.load_image(args.row_image)
            x = img[img.shape[0] // 2]
        elif args.m:
            x = analysis.default_signal(args.m, args.seed)
        rep = analysis.experiment_noise_amplification(
            x, args.sizes or list(range(3, 32, 2)), args.trials or 50, args.seed)
    elif exp == "perturbed":
        rep = analysis.experiment_perturbed_pseudoinverse(
            args.m or 254, args.sizes or [5, 9, 13, 17, 21], args.trials or 100, sampler, args.rel_noise)
    elif exp == "rank":
        rep = analysis.experiment_toeplitz_rank(args.m or 21, args.trials or 1000, sampler)
    elif exp == "cost-ratio":
        rep = analysis.cost_ratio_curve(kernel, epsilons=args.epsilons or [0.0, 0.05, 0.1, 0.2, 0.3],
                                        trials=args.trials or 20, seed=args.seed)
    elif exp == "logdet-size":
        sizes = args.sizes or [23, 31, 39, 47, 55, 63]
        rep = analysis.logdet_vs_size_curve(kernel, sizes, seed=args.seed, trials=args.trials or 20)
    else:
        x = None
        if args.row_image:
            img = io.load_image(args.row_image)
            x = img[img.shape[0] // 2]
        k1 = None if not args.kernel else marginalize(kernel)
        rep = analysis.experiment_1d_blind(x, k1, args.sizes or [23, 47, 93], args.iters, seed=args.seed)
    io.save_report(args.out, rep)
    return 0


def cmd_eval(args) -> int:
    from . import io, metrics

    est = io.load_image(args.est)
    gt = io.load_image(args.gt)
    y = io.load_image(args.blurry)
    k_gt = io.load_kernel(args.gt_kernel, normalize=True)
    x_kgt = metrics.deconv_hyper_laplacian(y, k_gt)
    err = metrics.error_ratio_from(est, x_kgt, gt, metrics.kernel_border(k_gt))
    print(f"err_ratio {err:.6g}")
    print(f"psnr_db {metrics.psnr(est, gt):.6g}")
    print(f"success {int(err <= args.threshold)}")
    if args.est_kernel:
        k_est = io.load_kernel(args.est_kernel, normalize=True)
        print(f"ssd_kernel {metrics.ssd_kernel_aligned(k_est, k_gt):.6g}")
        print(f"ssd_kernel_raw {metrics.ssd_kernel_raw(k_est, k_gt):.6g}")
    return 0


def cmd_prox_demo(args) -> int:
    import numpy as np

    from . import kstep

    rng = np.random.default_rng(0)
    tau, delta = 5e-2, 1e-2
    for name, m in (("random 7x7", rng.standard_normal((7, 7))),
                    ("rank-2 7x7 plus noise", rng.standard_normal((7, 2)) @ rng.standard_normal((2, 7))
                     + 0.05 * rng.standard_normal((7, 7)))):
        s = np.linalg.svd(m, compute_uv=False)
        out = np.linalg.svd(kstep.prox_logdet(m, m, tau, delta), compute_uv=False)
        print(f"{name}: tau={tau} delta={delta}")
        print("  input  " + " ".join(f"{v:.4f}" for v in s))
        print("  shrunk " + " ".join(f"{v:.4f}" for v in out))
    return 0


COMMANDS = {"deblur": cmd_deblur, "simulate": cmd_simulate, "eval": cmd_eval,
            "prox-demo": cmd_prox_demo}


def main(argv=None) -> int:
    _apply_thread_env()
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
