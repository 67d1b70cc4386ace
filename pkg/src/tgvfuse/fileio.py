"""File formats: PFM and PGM images, pose lists, intrinsics, config.

PFM fields are written grayscale ("Pf"), 32-bit floats, rows bottom-up,
with the sign of the scale line encoding endianness (negative =
little-endian). Write-then-read round-trips are bitwise exact. PGM
(binary "P5", maxval 65535, big-endian samples) is a visualization
export with a linear depth-to-gray mapping.

Pose files carry one camera per line as 12 whitespace-separated reals,
the row-major 3x4 [R|t] of the camera-to-world transform; intrinsics
files carry "f cu cv" on one line. Config files are line-oriented
"key = value" with [model] [solver] [scene] sections (see
docs/config.md for the key list).
"""

import configparser

import numpy as np

from .geometry import CameraIntrinsics, Pose

__all__ = [
    "PfmParseError",
    "read_pfm",
    "write_pfm",
    "read_pgm",
    "write_pgm",
    "read_poses",
    "write_poses",
    "read_intrinsics",
    "write_intrinsics",
    "read_config",
    "write_config",
]


class PfmParseError(ValueError):
    """Malformed image file; carries the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def _read_token(f):
    """Next whitespace-delimited ASCII token; returns (token, offset)."""
    token = b""
    offset = f.tell()
    while True:
        ch = f.read(1)
        if not ch:
            if token:
                return token, offset
            raise PfmParseError("unexpected end of header", f.tell())
        if ch.isspace():
            if token:
                return token, offset
            offset = f.tell()
        else:
            token += ch


def read_pfm(path):
    """Read a grayscale PFM depth field as a float32 (H, W) array."""
    with open(path, "rb") as f:
        magic, off = _read_token(f)
        if magic != b"Pf":
            raise PfmParseError(f"bad magic {magic!r}, expected b'Pf'", off)
        wtok, off = _read_token(f)
        htok, hoff = _read_token(f)
        try:
            width, height = int(wtok), int(htok)
        except ValueError:
            raise PfmParseError("non-integer dimensions", off) from None
        if width < 1 or height < 1:
            raise PfmParseError("non-positive dimensions", off)
        stok, soff = _read_token(f)
        try:
            scale = float(stok)
        except ValueError:
            raise PfmParseError("non-numeric scale", soff) from None
        if scale == 0.0:
            raise PfmParseError("zero scale", soff)
        payload_off = f.tell()
        count = width * height
        raw = f.read(4 * count)
        if len(raw) != 4 * count:
            raise PfmParseError(
                f"truncated payload: expected {4 * count} bytes, "
                f"got {len(raw)}", payload_off + len(raw),
            )
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(raw, dtype=dtype).reshape(height, width)
        return np.flipud(data).astype(np.float32, copy=True)


def write_pfm(path, field):
    """Write a (H, W) field as little-endian grayscale PFM (scale -1)."""
    field = np.asarray(field, dtype=np.float32)
    if field.ndim != 2:
        raise ValueError("PFM export expects a 2-D field")
    h, w = field.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(field).astype("<f4").tobytes())


def write_pgm(path, field, lo=None, hi=None):
    """Visualization export: linear map [lo, hi] -> [0, 65535], binary P5.

    lo/hi default to the finite value range; non-finite pixels map to 0.
    Returns the (lo, hi) actually used.
    """
    field = np.asarray(field, dtype=np.float64)
    finite = np.isfinite(field)
    if not finite.any():
        raise ValueError("field has no finite values to export")
    lo = float(field[finite].min()) if lo is None else float(lo)
    hi = float(field[finite].max()) if hi is None else float(hi)
    span = hi - lo if hi > lo else 1.0
    gray = np.clip((field - lo) / span, 0.0, 1.0)
    gray = np.where(finite, np.round(gray * 65535.0), 0.0).astype(">u2")
    h, w = field.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(gray.tobytes())
    return lo, hi


def read_pgm(path):
    """Read a binary P5 PGM written by :func:`write_pgm` (uint16 gray)."""
    with open(path, "rb") as f:
        magic, off = _read_token(f)
        if magic != b"P5":
            raise PfmParseError(f"bad magic {magic!r}, expected b'P5'", off)
        wtok, _ = _read_token(f)
        htok, _ = _read_token(f)
        mtok, moff = _read_token(f)
        width, height = int(wtok), int(htok)
        maxval = int(mtok)
        if maxval != 65535:
            raise PfmParseError("only maxval 65535 is supported", moff)
        payload_off = f.tell()
        raw = f.read(2 * width * height)
        if len(raw) != 2 * width * height:
            raise PfmParseError("truncated payload", payload_off + len(raw))
        return np.frombuffer(raw, dtype=">u2").reshape(height, width).copy()


def write_poses(path, poses):
    with open(path, "w") as f:
        for pose in poses:
            rt = np.hstack([pose.rotation, pose.translation[:, None]])
            f.write(" ".join(f"{v:.17g}" for v in rt.ravel()) + "\n")


def read_poses(path):
    poses = []
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            vals = [float(tok) for tok in line.split()]
            if len(vals) != 12:
                raise ValueError(
                    f"{path}:{line_no}: expected 12 values per pose line, "
                    f"got {len(vals)}"
                )
            rt = np.array(vals).reshape(3, 4)
            poses.append(Pose(rt[:, :3], rt[:, 3]))
    return poses


def write_intrinsics(path, intrinsics):
    with open(path, "w") as f:
        f.write(f"{intrinsics.f:.17g} {intrinsics.cu:.17g} "
                f"{intrinsics.cv:.17g}\n")


def read_intrinsics(path):
    with open(path) as f:
        vals = [float(tok) for tok in f.read().split()]
    if len(vals) != 3:
        raise ValueError(f"{path}: expected 'f cu cv', got {len(vals)} values")
    return CameraIntrinsics(*vals)


def read_config(path):
    """Parse a [model]/[solver]/[scene] config file into nested dicts."""
    parser = configparser.ConfigParser()
    with open(path) as f:
        parser.read_file(f)
    return {s: dict(parser.items(s)) for s in parser.sections()}


def write_config(path, sections):
    parser = configparser.ConfigParser()
    for name, kv in sections.items():
        parser[name] = {k: str(v) for k, v in kv.items()}
    with open(path, "w") as f:
        parser.write(f)
