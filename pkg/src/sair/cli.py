"""Command-line surface: simulation, training, prediction, evaluation, sweeps.

Every command wraps exactly one library entry point and writes a JSON run
manifest (full configuration + seeds + library version) next to its main
output. Exit codes: 0 success, 2 usage errors, 3 I/O errors, 4 numerical
divergence, 1 other failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import __version__
from .dataset import TrainConfig, build_training_set, ratio_from_spacing, upsample_lowres
from .errors import NiftiError, NumericalDivergenceError, SairError
from .fba import EnsembleConfig
from .metrics import evaluate
from .nifti import read_nifti, write_nifti
from .operators import ForwardModelConfig, apply_forward_model, gaussian_profile
from .phantom import PhantomSpec, generate_phantom
from .pipeline import ReconstructionJob, reconstruct, run_sair
from .sweep import SweepSpec, rerun_manifest, sweep_noise, sweep_r
from .unet.params import load_params, save_params
from .unet.training import DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, train
from .volume import Mask, Volume, normalize_intensities

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4


def _write_manifest(out_path: str, command: str, params: dict) -> None:
    manifest = {
        "library_version": __version__,
        "command": command,
        "params": params,
    }
    with open(f"{out_path}.manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _cmd_phantom(args) -> int:
    spec = PhantomSpec(
        dims=(args.size,) * 3,
        seed=args.seed,
        n_ellipsoids=args.ellipsoids,
        texture_amplitude=args.texture,
    )
    vol, mask = generate_phantom(spec)
    write_nifti(vol, args.out)
    if args.mask_out:
        write_nifti(Volume(mask.data.astype(float), vol.spacing), args.mask_out)
    _write_manifest(args.out, "phantom", vars(args))
    return 0


def _cmd_simulate(args) -> int:
    gt = read_nifti(getattr(args, "in"))
    cfg = ForwardModelConfig(args.r, gaussian_profile(args.r), args.sigma, args.seed)
    lr = apply_forward_model(gt, cfg, "z")
    write_nifti(lr, args.out)
    _write_manifest(args.out, "simulate", vars(args))
    return 0


def _resolve_r(args, vol) -> int:
    return args.r if args.r else ratio_from_spacing(vol)


def _cmd_train(args) -> int:
    x_lr = read_nifti(getattr(args, "in"))
    r = _resolve_r(args, x_lr)
    cfg = TrainConfig.for_ratio(r, sigma=args.sigma, seed=args.seed, n_train=args.n_train)
    normalized, _ = normalize_intensities(x_lr)
    from .pipeline import _pad_square_xy

    padded, _ = _pad_square_xy(normalized)
    pairs = build_training_set(upsample_lowres(padded, r), cfg)
    net, report = train(
        pairs, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed
    )
    save_params(net, args.out)
    params = dict(vars(args), r=r, final_loss=report.final_loss,
                  epoch_losses=report.epoch_losses)
    _write_manifest(args.out, "train", params)
    return 0


def _cmd_predict(args) -> int:
    x_lr = read_nifti(getattr(args, "in"))
    r = _resolve_r(args, x_lr)
    net = load_params(args.model)
    job = ReconstructionJob(
        x_lr=x_lr,
        r=r,
        train_cfg=TrainConfig.for_ratio(r, sigma=args.sigma, seed=args.seed),
        ens_cfg=EnsembleConfig(n_pred=args.n_pred),
        net=net,
        seed=args.seed,
    )
    write_nifti(reconstruct(job), args.out)
    _write_manifest(args.out, "predict", dict(vars(args), r=r))
    return 0


def _cmd_run(args) -> int:
    x_lr = read_nifti(getattr(args, "in"))
    r = _resolve_r(args, x_lr)
    cfg = TrainConfig.for_ratio(r, sigma=args.sigma, seed=args.seed, n_train=args.n_train)
    recon, report = run_sair(
        x_lr,
        r=r,
        train_cfg=cfg,
        ens_cfg=EnsembleConfig(n_pred=args.n_pred),
        epochs=args.epochs,
        seed=args.seed,
    )
    write_nifti(recon, args.out)
    params = dict(vars(args), r=r, final_loss=report.final_loss)
    _write_manifest(args.out, "run", params)
    return 0


def _cmd_evaluate(args) -> int:
    recon = read_nifti(args.recon)
    ref = read_nifti(args.ref)
    mask_vol = read_nifti(args.mask)
    nx, ny, nz = (min(a, b) for a, b in zip(recon.dims, ref.dims))
    crop = lambda v: v.data[:nx, :ny, :nz]  # noqa: E731
    res = evaluate(
        Volume(crop(recon), recon.spacing),
        Volume(crop(ref), ref.spacing),
        Mask(crop(mask_vol) > 0.5),
    )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mse_db", "ssim", "voxels_evaluated"])
        writer.writerow([res.mse_db, res.ssim, res.voxels_evaluated])
    _write_manifest(args.out, "evaluate", vars(args))
    print(f"mse_db={res.mse_db:.4f} ssim={res.ssim:.6f} n={res.voxels_evaluated}")
    return 0


def _sweep_spec(args, seeds_default_kind: str) -> SweepSpec:
    seeds = tuple(range(args.seeds)) if args.seeds else ()
    return SweepSpec(
        out_dir=args.out_dir,
        r_values=tuple(args.r_values) if getattr(args, "r_values", None) else (2, 3, 4, 5, 6),
        sigma_values=tuple(args.sigma_values)
        if getattr(args, "sigma_values", None)
        else SweepSpec.sigma_values,
        r_sweep_sigma=getattr(args, "sigma", 0.035),
        seeds=seeds,
        epochs=args.epochs,
        size=args.size,
        phantom_seed=args.phantom_seed,
        n_train=args.n_train,
        n_pred=args.n_pred,
    )


def _cmd_sweep_r(args) -> int:
    path = sweep_r(_sweep_spec(args, "r"))
    print(path)
    return 0


def _cmd_sweep_noise(args) -> int:
    path = sweep_noise(_sweep_spec(args, "noise"))
    print(path)
    return 0


def _cmd_rerun(args) -> int:
    row = rerun_manifest(args.manifest)
    print(json.dumps(row, indent=2, sort_keys=True))
    return 0


def _add_common_pipeline_args(p, epochs_default=DEFAULT_EPOCHS):
    p.add_argument("--r", type=int, default=0, help="anisotropy factor (0: from spacing)")
    p.add_argument("--sigma", type=float, default=0.0, help="training degradation noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=epochs_default)
    p.add_argument("--n-train", dest="n_train", type=int, default=10)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=DEFAULT_BATCH_SIZE)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sair",
        description="Self-supervised isotropic restoration of anisotropic 3D volumes",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic ground-truth volume")
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out", dest="mask_out", default="")
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--ellipsoids", type=int, default=5)
    p.add_argument("--texture", type=float, default=0.05)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("simulate", help="degrade a volume with the acquisition model")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="fit the per-volume network")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    _add_common_pipeline_args(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="reconstruct with a trained checkpoint")
    p.add_argument("--in", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-pred", dest="n_pred", type=int, default=15)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("run", help="train + predict in one go")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    _add_common_pipeline_args(p)
    p.add_argument("--n-pred", dest="n_pred", type=int, default=15)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("evaluate", help="masked MSE (dB) and SSIM vs a reference")
    p.add_argument("--recon", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=_cmd_evaluate)

    for name, func in (("sweep-r", _cmd_sweep_r), ("sweep-noise", _cmd_sweep_noise)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} experiment")
        p.add_argument("--out-dir", dest="out_dir", required=True)
        p.add_argument("--seeds", type=int, default=0, help="number of realizations")
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--size", type=int, default=96)
        p.add_argument("--phantom-seed", dest="phantom_seed", type=int, default=7)
        p.add_argument("--n-train", dest="n_train", type=int, default=10)
        p.add_argument("--n-pred", dest="n_pred", type=int, default=15)
        if name == "sweep-r":
            p.add_argument("--r-values", dest="r_values", type=int, nargs="+")
            p.add_argument("--sigma", type=float, default=0.035)
        else:
            p.add_argument("--sigma-values", dest="sigma_values", type=float, nargs="+")
        p.set_defaults(func=func)

    p = sub.add_parser("rerun", help="re-execute a sweep-cell manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_cmd_rerun)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, NiftiError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (SairError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
