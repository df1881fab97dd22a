"""Experiment harness: seeded sweeps over anisotropy and noise, CSV + manifests.

Every sweep cell (one phantom simulation + one full restoration run) is a
pure function of its manifest, so any row of the output CSV can be
reproduced bit-for-bit by re-running its manifest. Cells run in a process
pool ("spawn" children, single-threaded BLAS); the parent is the only
writer of the CSV.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import multiprocessing as mp

import numpy as np

from . import __version__
from .dataset import TrainConfig
from .fba import EnsembleConfig
from .metrics import evaluate
from .operators import ForwardModelConfig, apply_forward_model, gaussian_profile
from .phantom import PhantomSpec, generate_phantom
from .pipeline import run_sair
from .dataset import upsample_lowres
from .volume import Mask, Volume

__all__ = ["SweepSpec", "run_cell", "rerun_manifest", "sweep_r", "sweep_noise"]

CSV_FORMAT_VERSION = 1
R_SWEEP_HEADER = ("r", "seed", "mse_db_lr", "ssim_lr", "mse_db_sair", "ssim_sair", "wall_seconds", "status")
NOISE_SWEEP_HEADER = ("sigma", "seed", "mse_db_lr", "ssim_lr", "mse_db_sair", "ssim_sair", "wall_seconds", "status")
DEFAULT_SIGMA_LEVELS = (0.035, 0.075, 0.15)
NOISE_SWEEP_R = 3  # the clinical anisotropy ratio


@dataclass(frozen=True)
class SweepSpec:
    """Sweep configuration; defaults echo the reference experiment design."""

    out_dir: str
    r_values: tuple = (2, 3, 4, 5, 6)
    sigma_values: tuple = DEFAULT_SIGMA_LEVELS
    r_sweep_sigma: float = 0.035
    seeds: tuple = ()
    epochs: int | None = None
    size: int = 96
    phantom_seed: int = 7
    texture_amplitude: float = 0.05
    n_train: int = 10
    n_pred: int = 15

    def seeds_for(self, kind: str) -> tuple:
        if self.seeds:
            return tuple(self.seeds)
        return tuple(range(9 if kind == "r" else 6))


def _cell_manifest(spec: SweepSpec, r: int, sigma: float, seed: int) -> dict:
    from .unet.training import DEFAULT_EPOCHS

    return {
        "csv_format_version": CSV_FORMAT_VERSION,
        "library_version": __version__,
        "kind": "sweep-cell",
        "params": {
            "r": int(r),
            "sigma": float(sigma),
            "seed": int(seed),
            "size": int(spec.size),
            "phantom_seed": int(spec.phantom_seed),
            "texture_amplitude": float(spec.texture_amplitude),
            "epochs": int(spec.epochs if spec.epochs is not None else DEFAULT_EPOCHS),
            "n_train": int(spec.n_train),
            "n_pred": int(spec.n_pred),
        },
    }


def run_cell(manifest: dict) -> dict:
    """Simulate, restore, and score one sweep cell; returns the CSV row.

    Deterministic: the result is a pure function of the manifest params.
    """
    p = manifest["params"]
    t0 = time.perf_counter()
    gt, mask = generate_phantom(
        PhantomSpec(
            dims=(p["size"],) * 3,
            seed=p["phantom_seed"],
            texture_amplitude=p["texture_amplitude"],
        )
    )
    fm = ForwardModelConfig(p["r"], gaussian_profile(p["r"]), p["sigma"], seed=p["seed"])
    x_lr = apply_forward_model(gt, fm, "z")

    x_up = upsample_lowres(x_lr, p["r"])
    nz = x_up.dims[2]
    gt_c = Volume(gt.data[:, :, :nz], gt.spacing)
    mask_c = Mask(mask.data[:, :, :nz])
    base = evaluate(x_up, gt_c, mask_c)

    train_cfg = TrainConfig.for_ratio(
        p["r"], sigma=p["sigma"], seed=p["seed"], n_train=p["n_train"]
    )
    recon, _ = run_sair(
        x_lr,
        r=p["r"],
        train_cfg=train_cfg,
        ens_cfg=EnsembleConfig(n_pred=p["n_pred"]),
        epochs=p["epochs"],
        seed=p["seed"],
    )
    res = evaluate(recon, gt_c, mask_c)
    return {
        "r": p["r"],
        "sigma": p["sigma"],
        "seed": p["seed"],
        "mse_db_lr": base.mse_db,
        "ssim_lr": base.ssim,
        "mse_db_sair": res.mse_db,
        "ssim_sair": res.ssim,
        "wall_seconds": time.perf_counter() - t0,
        "status": "ok",
    }


def rerun_manifest(path) -> dict:
    """Re-execute a stored cell manifest; metrics must reproduce."""
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != "sweep-cell":
        raise ValueError(f"{path}: not a sweep-cell manifest")
    return run_cell(manifest)


def _worker_count(n_cells: int) -> int:
    cap = os.environ.get("SAIR_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_cells, limit))


def _run_pool(manifests: list[dict], workers: int | None = None) -> list[dict]:
    """Run cells in spawn-mode worker processes with single-threaded BLAS.

    A failed cell yields a flagged row instead of aborting the sweep.
    """
    n = _worker_count(len(manifests)) if workers is None else workers
    rows: list[dict | None] = [None] * len(manifests)

    def fail_row(manifest, exc):
        p = manifest["params"]
        return {
            "r": p["r"],
            "sigma": p["sigma"],
            "seed": p["seed"],
            "mse_db_lr": float("nan"),
            "ssim_lr": float("nan"),
            "mse_db_sair": float("nan"),
            "ssim_sair": float("nan"),
            "wall_seconds": float("nan"),
            "status": f"failed: {type(exc).__name__}",
        }

    if n == 1:
        for i, m in enumerate(manifests):
            try:
                rows[i] = run_cell(m)
            except Exception as exc:  # noqa: BLE001 - flagged, sweep continues
                rows[i] = fail_row(m, exc)
        return rows

    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=n, mp_context=ctx) as pool:
        futures = [pool.submit(run_cell, m) for m in manifests]
        for i, fut in enumerate(futures):
            try:
                rows[i] = fut.result()
            except Exception as exc:  # noqa: BLE001
                rows[i] = fail_row(manifests[i], exc)
    return rows


def _write_manifests(spec: SweepSpec, manifests: list[dict], tag: str) -> None:
    os.makedirs(spec.out_dir, exist_ok=True)
    for m in manifests:
        p = m["params"]
        name = f"{tag}_r{p['r']}_sigma{p['sigma']:g}_seed{p['seed']}.json"
        with open(os.path.join(spec.out_dir, name), "w") as fh:
            json.dump(m, fh, indent=2, sort_keys=True)


def _write_csv(path, header: tuple, rows: list[dict], group_key: str) -> None:
    """RFC-4180 CSV: one row per cell plus a median row per group."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[c] if c in row else "" for c in header])
        for value in sorted({row[group_key] for row in rows}):
            group = [r for r in rows if r[group_key] == value and r["status"] == "ok"]
            if not group:
                continue
            med = {
                c: float(np.median([g[c] for g in group]))
                for c in ("mse_db_lr", "ssim_lr", "mse_db_sair", "ssim_sair", "wall_seconds")
            }
            writer.writerow(
                [value, "median"] + [med[c] for c in header[2:-1]] + ["ok"]
            )


def sweep_r(spec: SweepSpec, workers: int | None = None) -> str:
    """Performance as a function of the anisotropy ratio; returns CSV path."""
    manifests = [
        _cell_manifest(spec, r, spec.r_sweep_sigma, seed)
        for r in spec.r_values
        for seed in spec.seeds_for("r")
    ]
    _write_manifests(spec, manifests, "rsweep")
    rows = _run_pool(manifests, workers)
    path = os.path.join(spec.out_dir, "sweep_r.csv")
    _write_csv(path, R_SWEEP_HEADER, rows, "r")
    return path


def sweep_noise(spec: SweepSpec, workers: int | None = None) -> str:
    """Performance across noise levels at the clinical ratio; returns CSV path."""
    manifests = [
        _cell_manifest(spec, NOISE_SWEEP_R, sigma, seed)
        for sigma in spec.sigma_values
        for seed in spec.seeds_for("noise")
    ]
    _write_manifests(spec, manifests, "noisesweep")
    rows = _run_pool(manifests, workers)
    path = os.path.join(spec.out_dir, "sweep_noise.csv")
    _write_csv(path, NOISE_SWEEP_HEADER, rows, "sigma")
    return path
