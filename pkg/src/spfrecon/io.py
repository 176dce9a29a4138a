"""Volume files, dataset manifests, run configuration and report writers.

Volume file layout (little-endian throughout)::

    bytes 0-5    magic  b"SPFV1\\0"
    bytes 6-17   nx, ny, nz as uint32
    bytes 18-    nx*ny*nz float32 values, C order with z slowest

Dataset manifests are JSON documents next to the volume files they list.
"""

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DataError, FormatError, LengthError, MissingFileError
from .forward import ViewSet
from .so3 import Orientation, Pose

MAGIC = b"SPFV1\x00"
HEADER = struct.Struct("<6sIII")
MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "spfrecon-dataset"
MANIFEST_VERSION = 1
_F32_MAX = float(np.finfo(np.float32).max)


def write_volume(v, path):
    """Write a 3-D array ``[z, y, x]`` as float32."""
    arr = np.asarray(v)
    if arr.ndim != 3:
        raise FormatError(f"expected a 3-D volume, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating) and not np.issubdtype(arr.dtype, np.integer):
        raise DataError(f"cannot store dtype {arr.dtype}")
    if not np.all(np.isfinite(arr)):
        raise DataError("volume contains NaN or Inf")
    if np.abs(arr).max(initial=0.0) > _F32_MAX:
        raise DataError("volume exceeds the float32 range")
    nz, ny, nx = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, nx, ny, nz))
        fh.write(payload.tobytes())
    os.replace(tmp, path)


def read_volume(path, dtype=np.float64):
    """Read a volume file, validating magic, length and values.

    The stored float32 values are returned as ``dtype`` (float64 by
    default, which represents them exactly).
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such volume file: {path}")
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise LengthError(f"{path}: {len(data)} bytes is shorter than the header")
    magic, nx, ny, nz = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = HEADER.size + 4 * nx * ny * nz
    if len(data) != expected:
        raise LengthError(f"{path}: dims ({nx}, {ny}, {nz}) need {expected} bytes, file has {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(nz, ny, nx)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: payload contains NaN or Inf")
    return arr.astype(dtype)


def pose_to_dict(pose):
    o = pose.orientation
    return {"phi1": o.phi1, "phi2": o.phi2, "psi": o.psi, "t": list(pose.t)}


def pose_from_dict(d):
    try:
        return Pose(Orientation(float(d["phi1"]), float(d["phi2"]), float(d["psi"])), tuple(d["t"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed pose entry {d!r}") from exc


def _pad_to(v, n):
    pads = []
    for d in v.shape:
        extra = n - d
        pads.append((extra // 2, extra - extra // 2))
    return np.pad(v, pads) if any(sum(p) for p in pads) else v


def save_dataset(viewset, directory, *, seed=None, sim_config=None):
    """Write views, PSF and manifest into ``directory``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(len(viewset.views) - 1)))
    names = []
    for idx, v in enumerate(viewset.views):
        name = f"view_{idx:0{width}d}.spfv"
        write_volume(v, directory / name)
        names.append(name)
    write_volume(viewset.psf, directory / "psf.spfv")
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "views": names,
        "psf": "psf.spfv",
        "poses": None if viewset.true_poses is None else [pose_to_dict(p) for p in viewset.true_poses],
        "seed": seed,
        "sim_config": sim_config,
    }
    path = directory / MANIFEST_NAME
    # json writes floats with the shortest repr that round-trips exactly
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_dataset(manifest_path):
    """Load a dataset; views of differing sizes are zero-padded symmetrically to a common cube."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingFileError(f"no such manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    if manifest.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{manifest_path}: not a dataset manifest")
    base = manifest_path.parent
    names = manifest.get("views") or []
    if not names:
        raise FormatError(f"{manifest_path}: no views listed")
    files = [base / n for n in names] + [base / manifest["psf"]]
    missing = [str(f) for f in files if not f.is_file()]
    if missing:
        raise MissingFileError(f"missing dataset files: {', '.join(missing)}")
    views = [read_volume(f) for f in files[:-1]]
    psf = read_volume(files[-1])
    poses = manifest.get("poses")
    if poses is not None:
        if len(poses) != len(views):
            raise FormatError(f"{manifest_path}: {len(poses)} poses for {len(views)} views")
        poses = [pose_from_dict(p) for p in poses]
    n = max(max(v.shape) for v in views + [psf])
    padded = [i for i, v in enumerate(views) if v.shape != (n, n, n)]
    views = [_pad_to(v, n) for v in views]
    info = {"manifest": str(manifest_path), "size": n, "padded_views": padded, "seed": manifest.get("seed")}
    if psf.shape != (n, n, n):
        info["padded_psf"] = True
        psf = _pad_to(psf, n)
    if manifest.get("sim_config") is not None:
        info["sim_config"] = manifest["sim_config"]
    return ViewSet(views, psf, poses, info)


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def _parse_scalar(text):
    low = text.lower()
    if low in ("none", "null", ""):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment and commas make lists."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        key = key.replace("-", "_")
        if "," in value:
            out[key] = [_parse_scalar(v.strip()) for v in value.split(",")]
        else:
            out[key] = _parse_scalar(value)
    return out


def read_config(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such config file: {path}")
    return parse_config_text(path.read_text(), str(path))


def format_config(config):
    return "".join(f"{key} = {_format_value(config[key])}\n" for key in sorted(config))


def write_config(config, path):
    Path(path).write_text(format_config(config))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_poses_csv(path, poses):
    rows = []
    for idx, pose in enumerate(poses):
        o = pose.orientation
        rows.append([idx, o.phi1, o.phi2, o.psi, *pose.t])
    write_csv(path, ["view", "phi1", "phi2", "psi", "tx", "ty", "tz"], rows)


def read_poses_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        Pose(
            Orientation(float(r["phi1"]), float(r["phi2"]), float(r["psi"])),
            (float(r["tx"]), float(r["ty"]), float(r["tz"])),
        )
        for r in rows
    ]


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Pose):
        return pose_to_dict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")
