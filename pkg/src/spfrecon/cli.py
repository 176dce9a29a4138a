"""Command line entry points: phantom, simulate, reconstruct, evaluate.

Every subcommand resolves its configuration from built-in defaults, then an
optional ``--config`` file of ``key = value`` lines, then explicit flags, and
writes the resolved configuration to ``config.txt`` in the output directory.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .evaluation import conical_fsc, fsc, register_to_ground_truth, ssim3d
from .exceptions import ConfigError, DegenerateInputError, FormatError, MissingFileError, SpfError
from .forward import PsfSpec, SimConfig, generate_dataset, make_phantom
from .recon import ReconConfig, reconstruct

logger = logging.getLogger("spfrecon")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_FORMAT = 4
EXIT_DEGENERATE = 5

SIM_KEYS = {
    "n_views": int,
    "noise_sigma": float,
    "dol_spots": int,
    "sigma_xy": float,
    "sigma_z": float,
    "spot_sigma_range": list,
    "spot_intensity_range": list,
    "translation_max": float,
    "seed": int,
}
RECON_KEYS = {
    "mu": float,
    "epochs": int,
    "M_d": int,
    "M_psi": int,
    "N_d": int,
    "N_psi": int,
    "alpha_r": float,
    "beta_d": float,
    "beta_psi": float,
    "seed": int,
    "init": str,
    "oversample": int,
    "shift_method": str,
    "recenter": bool,
    "positivity": bool,
    "known_poses": bool,
    "early_stop_tol": float,
    "threads": int,
    "sampler_csv": bool,
}
EVAL_KEYS = {
    "register": bool,
    "cfsc": bool,
    "cone_half_angle_deg": float,
    "cfsc_directions": int,
    "fsc_cutoff": float,
}


def _sim_defaults():
    cfg = SimConfig()
    return {
        "n_views": cfg.n_views,
        "noise_sigma": cfg.noise_sigma,
        "dol_spots": cfg.dol_spots,
        "sigma_xy": cfg.psf.sigma_xy,
        "sigma_z": cfg.psf.sigma_z,
        "spot_sigma_range": list(cfg.spot_sigma_range),
        "spot_intensity_range": list(cfg.spot_intensity_range),
        "translation_max": cfg.translation_max,
        "seed": cfg.seed,
    }


def _recon_defaults():
    cfg = ReconConfig()
    return {
        "mu": None,
        "epochs": cfg.epochs,
        "M_d": cfg.M_d,
        "M_psi": cfg.M_psi,
        "N_d": cfg.N_d,
        "N_psi": cfg.N_psi,
        "alpha_r": cfg.alpha_r,
        "beta_d": cfg.beta_d,
        "beta_psi": cfg.beta_psi,
        "seed": cfg.seed,
        "init": cfg.init,
        "oversample": cfg.oversample,
        "shift_method": cfg.shift_method,
        "recenter": cfg.recenter,
        "positivity": cfg.positivity,
        "known_poses": False,
        "early_stop_tol": None,
        "threads": os.cpu_count() or 1,
        "sampler_csv": False,
    }


def _eval_defaults():
    return {
        "register": True,
        "cfsc": True,
        "cone_half_angle_deg": 20.0,
        "cfsc_directions": 12,
        "fsc_cutoff": 0.143,
    }


def _coerce(key, value, kind):
    if value is None:
        return None
    try:
        if kind is list:
            return [float(v) for v in (value if isinstance(value, list) else [value])]
        if kind is bool:
            if isinstance(value, bool):
                return value
            raise ValueError
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {value!r}") from None


def resolve_config(defaults, schema, config_path=None, overrides=None):
    """Merge defaults, an optional config file and flag overrides; unknown keys are errors."""
    resolved = dict(defaults)
    layers = []
    if config_path is not None:
        layers.append(io.read_config(config_path))
    if overrides:
        layers.append({k: v for k, v in overrides.items() if v is not None})
    for layer in layers:
        for key, value in layer.items():
            if key not in schema:
                raise ConfigError(f"unknown configuration key {key!r}")
            resolved[key] = _coerce(key, value, schema[key])
    return resolved


def _sim_config(c):
    return SimConfig(
        n_views=c["n_views"],
        noise_sigma=c["noise_sigma"],
        dol_spots=c["dol_spots"],
        spot_sigma_range=tuple(c["spot_sigma_range"]),
        spot_intensity_range=tuple(c["spot_intensity_range"]),
        seed=c["seed"],
        psf=PsfSpec(c["sigma_xy"], c["sigma_z"]),
        translation_max=c["translation_max"],
    )


def cmd_phantom(args):
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_volume(make_phantom(args.size, seed=args.seed, n_blobs=args.blobs), out)
    print(out)
    return EXIT_OK


def cmd_simulate(args):
    overrides = {k: getattr(args, k, None) for k in SIM_KEYS}
    c = resolve_config(_sim_defaults(), SIM_KEYS, args.config, overrides)
    try:
        cfg = _sim_config(c)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    gt = io.read_volume(args.gt)
    views = generate_dataset(gt, cfg)
    out = Path(args.out)
    manifest = io.save_dataset(views, out, seed=cfg.seed, sim_config=cfg.to_dict())
    io.write_config(c, out / "config.txt")
    print(manifest)
    return EXIT_OK


def cmd_reconstruct(args):
    overrides = {k: getattr(args, k, None) for k in RECON_KEYS}
    c = resolve_config(_recon_defaults(), RECON_KEYS, args.config, overrides)
    views = io.load_dataset(args.manifest)
    if c["known_poses"] and views.true_poses is None:
        raise ConfigError("--known-poses needs poses in the manifest")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sampler_csv = out / "sampler.csv"
    if c["sampler_csv"] and sampler_csv.exists():
        sampler_csv.unlink()
    try:
        cfg = ReconConfig(
            mu=c["mu"],
            epochs=c["epochs"],
            M_d=c["M_d"],
            M_psi=c["M_psi"],
            N_d=c["N_d"],
            N_psi=c["N_psi"],
            alpha_r=c["alpha_r"],
            beta_d=c["beta_d"],
            beta_psi=c["beta_psi"],
            seed=c["seed"],
            init=c["init"],
            oversample=c["oversample"],
            shift_method=c["shift_method"],
            recenter=c["recenter"],
            positivity=c["positivity"],
            known_poses=views.true_poses if c["known_poses"] else None,
            early_stop_tol=c["early_stop_tol"],
            n_threads=c["threads"],
            sampler_csv=str(sampler_csv) if c["sampler_csv"] else None,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    io.write_config(c, out / "config.txt")
    volume, poses, diag = reconstruct(views, cfg)
    io.write_volume(volume, out / "recon.spfv")
    io.write_poses_csv(out / "poses.csv", poses)
    io.write_csv(out / "energy.csv", ["epoch", "mean_energy", "alpha"], [
        (i + 1, e, a) for i, (e, a) in enumerate(zip(diag["energy_trace"], diag["alpha"]))
    ])
    io.write_json(out / "diagnostics.json", {
        "mu": diag["mu"],
        "epochs_run": diag["epochs_run"],
        "degenerate_updates": diag["degenerate_updates"],
        "final_view_energies": diag["view_energies"],
        "dataset": views.info,
    })
    # a written artifact that cannot be read back is a failed run
    io.read_volume(out / "recon.spfv")
    print(out / "recon.spfv")
    return EXIT_OK


def cmd_evaluate(args):
    overrides = {k: getattr(args, k, None) for k in EVAL_KEYS}
    c = resolve_config(_eval_defaults(), EVAL_KEYS, args.config, overrides)
    recon = io.read_volume(args.recon)
    gt = io.read_volume(args.gt)
    n = max(max(recon.shape), max(gt.shape))
    recon, gt = io._pad_to(recon, n), io._pad_to(gt, n)
    for name, v in (("reconstruction", recon), ("ground truth", gt)):
        if np.ptp(v) == 0:
            raise DegenerateInputError(f"{name} volume is constant")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_config(c, out / "config.txt")
    pose = None
    if c["register"]:
        pose, recon = register_to_ground_truth(recon, gt)
        io.write_volume(recon, out / "aligned.spfv")
    curve = fsc(recon, gt, cutoff=c["fsc_cutoff"])
    io.write_csv(out / "fsc.csv", ["radius", "fsc"], curve.rows())
    metrics = {
        "ssim": ssim3d(recon, gt),
        "fsc_resolution": curve.cutoff_resolution,
        "fsc_cutoff": c["fsc_cutoff"],
        "pose": pose,
    }
    if c["cfsc"]:
        cmap = conical_fsc(
            recon,
            gt,
            n_directions=c["cfsc_directions"],
            cone_half_angle=np.radians(c["cone_half_angle_deg"]),
            cutoff=c["fsc_cutoff"],
        )
        io.write_csv(out / "cfsc.csv", ["phi1", "phi2", "resolution"], cmap.rows())
        metrics["cfsc_z_resolution"] = cmap.z_resolution()
        metrics["cfsc_lateral_resolution"] = cmap.lateral_resolution()
    io.write_json(out / "metrics.json", metrics)
    print(f"ssim {metrics['ssim']:.4f}  fsc resolution {metrics['fsc_resolution']:.4f}")
    return EXIT_OK


def _flag(parser, name, kind, help_text, dest=None, aliases=()):
    flags = ["--" + name.replace("_", "-")] + list(aliases)
    if kind is bool:
        parser.add_argument(*flags, dest=dest or name, action=argparse.BooleanOptionalAction, default=None, help=help_text)
    elif kind is list:
        parser.add_argument(*flags, dest=dest or name, type=float, nargs=2, default=None, help=help_text)
    else:
        parser.add_argument(*flags, dest=dest or name, type=kind, default=None, help=help_text)


def build_parser():
    parser = argparse.ArgumentParser(prog="spfrecon", description="Single-particle reconstruction for fluorescence microscopy.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress (repeat for debug output)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a synthetic asymmetric blob phantom")
    p.add_argument("out", help="output volume file")
    p.add_argument("--size", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blobs", type=int, default=6)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("simulate", help="simulate a view set from a ground-truth volume")
    p.add_argument("gt", help="ground-truth volume file")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--config", help="key = value configuration file")
    _flag(p, "n_views", int, "number of views", aliases=("--views",))
    _flag(p, "noise_sigma", float, "Gaussian noise standard deviation", aliases=("--noise",))
    _flag(p, "dol_spots", int, "defect spots subtracted per view", aliases=("--spots",))
    _flag(p, "sigma_xy", float, "lateral PSF standard deviation (voxels)")
    _flag(p, "sigma_z", float, "axial PSF standard deviation (voxels)")
    _flag(p, "spot_sigma_range", list, "spot width range as a fraction of the grid")
    _flag(p, "spot_intensity_range", list, "spot amplitude range")
    _flag(p, "translation_max", float, "maximum translation as a fraction of the grid")
    _flag(p, "seed", int, "generator seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="jointly estimate the volume and the poses")
    p.add_argument("manifest", help="dataset manifest or directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="key = value configuration file")
    _flag(p, "mu", float, "SGD step size (default: scaled to the PSF and view count)")
    _flag(p, "epochs", int, "number of passes over the views")
    _flag(p, "M_d", int, "number of grid axes", aliases=("--Md",))
    _flag(p, "M_psi", int, "number of grid angles", aliases=("--Mpsi",))
    _flag(p, "N_d", int, "axes sampled per step", aliases=("--Nd",))
    _flag(p, "N_psi", int, "angles sampled per step", aliases=("--Npsi",))
    _flag(p, "alpha_r", float, "annealing ratio of the uniform weight")
    _flag(p, "beta_d", float, "axis kernel concentration")
    _flag(p, "beta_psi", float, "angle kernel concentration")
    _flag(p, "seed", int, "random seed")
    _flag(p, "init", str, "random_spectral, random_uniform or zeros")
    _flag(p, "oversample", int, "zero-padding factor of the spectral rotation")
    _flag(p, "shift_method", str, "translation solver: phase or cross")
    _flag(p, "recenter", bool, "move the volume's center of mass to the grid center after each epoch")
    _flag(p, "positivity", bool, "clip negative voxels after each epoch")
    _flag(p, "known_poses", bool, "use the manifest poses instead of searching")
    _flag(p, "early_stop_tol", float, "stop when the epoch energy changes by less than this fraction")
    _flag(p, "threads", int, "worker threads for the orientation search")
    _flag(p, "sampler_csv", bool, "write sampler distributions after every epoch")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="register a reconstruction to the ground truth and score it")
    p.add_argument("recon", help="reconstructed volume file")
    p.add_argument("gt", help="ground-truth volume file")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--config", help="key = value configuration file")
    _flag(p, "register", bool, "register to the ground truth before scoring")
    _flag(p, "cfsc", bool, "compute the conical FSC map")
    _flag(p, "cone_half_angle_deg", float, "cone half-angle in degrees")
    _flag(p, "cfsc_directions", int, "direction grid density")
    _flag(p, "fsc_cutoff", float, "FSC threshold")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingFileError, FileNotFoundError) as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FormatError as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except DegenerateInputError as exc:
        print(f"degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (SpfError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
