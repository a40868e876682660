"""File formats and the synthetic hyperspectral dataset.

All binary files are little-endian and start with a 4-byte magic and a
16-bit version:

==========  =====  =========================================================
magic       kind   body after ``magic, version``
==========  =====  =========================================================
``HSPC``    cube   u32 height, u32 width, u32 bands, f64 start_nm, f64 step_nm,
                   then H*W*bands f64 (band fastest, row-major pixels)
``HSRG``    rgb    u32 height, u32 width, then H*W*3 f64
``HSNM``    null   u32 bands, f64 start_nm, f64 step_nm, then the f64 matrices
                   S, S(S^T S)^-1, N, P_S, P_N in row-major order
``HSMD``    model  u32 n, n bytes of UTF-8 JSON metadata, u64 count, count f64
==========  =====  =========================================================
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.ndimage import zoom

from .exceptions import FormatError
from .plausible import NullSpaceModel, Recentering
from .regression import RegressorSpec, TrainedModel
from .spectral import HyperCube, RgbImage, SensitivitySet, SpectralGrid

VERSION = 1
CUBE_MAGIC = b"HSPC"
RGB_MAGIC = b"HSRG"
NULL_MAGIC = b"HSNM"
MODEL_MAGIC = b"HSMD"
SENSITIVITY_HEADER = ["wavelength_nm", "s1", "s2", "s3"]

_PREAMBLE = struct.Struct("<4sH")
_CUBE_HEAD = struct.Struct("<IIIdd")
_RGB_HEAD = struct.Struct("<II")
_NULL_HEAD = struct.Struct("<Idd")


class _Reader:
    """Cursor over a byte string that reports offsets in its errors."""

    def __init__(self, buf: bytes, what: str):
        self.buf = buf
        self.pos = 0
        self.what = what

    def unpack(self, st: struct.Struct, label: str):
        if self.pos + st.size > len(self.buf):
            raise FormatError(f"{self.what}: truncated {label}", self.pos)
        out = st.unpack_from(self.buf, self.pos)
        self.pos += st.size
        return out

    def floats(self, count: int, label: str) -> np.ndarray:
        nbytes = 8 * count
        if self.pos + nbytes > len(self.buf):
            have = (len(self.buf) - self.pos) // 8
            raise FormatError(
                f"{self.what}: truncated {label}, expected {count} floats, found {have}",
                self.pos + 8 * have)
        arr = np.frombuffer(self.buf, dtype="<f8", count=count, offset=self.pos)
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise FormatError(f"{self.what}: non-finite value in {label}", self.pos + 8 * int(bad[0]))
        self.pos += nbytes
        return arr.astype(np.float64)

    def preamble(self, magic: bytes):
        got, version = self.unpack(_PREAMBLE, "header")
        if got != magic:
            raise FormatError(f"{self.what}: bad magic {got!r}, expected {magic!r}", 0)
        if version != VERSION:
            raise FormatError(f"{self.what}: unsupported version {version}", 4)

    def finish(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{self.what}: {len(self.buf) - self.pos} trailing bytes", self.pos)


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _read_bytes(path) -> bytes:
    return Path(path).read_bytes()


# cubes and rgb images ------------------------------------------------------

def cube_to_bytes(cube: HyperCube) -> bytes:
    g = cube.grid
    return (_PREAMBLE.pack(CUBE_MAGIC, VERSION)
            + _CUBE_HEAD.pack(cube.height, cube.width, g.bands, g.start_nm, g.step_nm)
            + _f64(cube.data))


def cube_from_bytes(buf: bytes, what: str = "cube") -> HyperCube:
    rd = _Reader(buf, what)
    rd.preamble(CUBE_MAGIC)
    h, w, bands, start, step = rd.unpack(_CUBE_HEAD, "cube header")
    try:
        grid = SpectralGrid(start, step, bands)
    except ValueError as exc:
        raise FormatError(f"{what}: invalid grid ({exc})", _PREAMBLE.size) from None
    data = rd.floats(h * w * bands, "payload").reshape(h, w, bands)
    rd.finish()
    return HyperCube(grid, data)


def write_cube(path, cube: HyperCube):
    Path(path).write_bytes(cube_to_bytes(cube))


def read_cube(path) -> HyperCube:
    return cube_from_bytes(_read_bytes(path), str(path))


def write_rgb_image(path, img: RgbImage):
    Path(path).write_bytes(_PREAMBLE.pack(RGB_MAGIC, VERSION)
                           + _RGB_HEAD.pack(img.height, img.width) + _f64(img.data))


def read_rgb_image(path) -> RgbImage:
    rd = _Reader(_read_bytes(path), str(path))
    rd.preamble(RGB_MAGIC)
    h, w = rd.unpack(_RGB_HEAD, "image header")
    data = rd.floats(h * w * 3, "payload").reshape(h, w, 3)
    rd.finish()
    return RgbImage(data)


def write_ppm(path, img: RgbImage, gamma: float = 2.2):
    """8-bit binary PPM preview, normalised by the image maximum."""
    d = np.clip(img.data, 0, None)
    peak = d.max()
    if peak > 0:
        d = d / peak
    d = np.round(255 * d ** (1.0 / gamma)).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(d.tobytes())


# sensitivities --------------------------------------------------------------

def parse_sensitivities(text: str, what: str = "sensitivities") -> SensitivitySet:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != SENSITIVITY_HEADER:
        raise FormatError(f"{what}: header must be {','.join(SENSITIVITY_HEADER)}", 1)
    wl, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise FormatError(f"{what}: expected 4 columns, got {len(row)}", lineno)
        try:
            nums = [float(c) for c in row]
        except ValueError:
            raise FormatError(f"{what}: non-numeric entry", lineno) from None
        if not all(math.isfinite(v) for v in nums):
            raise FormatError(f"{what}: non-finite entry", lineno)
        if wl and nums[0] <= wl[-1]:
            raise FormatError(f"{what}: wavelengths must be strictly increasing", lineno)
        if min(nums[1:]) < 0:
            raise FormatError(f"{what}: negative sensitivity", lineno)
        wl.append(nums[0])
        values.append(nums[1:])
    try:
        grid = SpectralGrid.from_wavelengths(wl)
    except ValueError as exc:
        raise FormatError(f"{what}: {exc}") from None
    return SensitivitySet(grid, np.array(values))


def read_sensitivities(path) -> SensitivitySet:
    """Load a ``wavelength_nm,s1,s2,s3`` CSV; rank is checked on construction."""
    return parse_sensitivities(Path(path).read_text(), str(path))


def write_sensitivities(path, s: SensitivitySet):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(SENSITIVITY_HEADER)
        for lam, row in zip(s.grid.wavelengths, s.matrix):
            out.writerow([repr(float(lam)), *(repr(float(v)) for v in row)])


def load_cie1964() -> SensitivitySet:
    """CIE 1964 10-degree colour matching functions, 400-700 nm every 10 nm."""
    text = resources.files("spectral_plausible").joinpath("data/cie1964_10deg.csv").read_text()
    return parse_sensitivities(text, "cie1964_10deg.csv")


# null-space models ----------------------------------------------------------

def null_model_to_bytes(model: NullSpaceModel) -> bytes:
    g = model.sensitivities.grid
    return b"".join([
        _PREAMBLE.pack(NULL_MAGIC, VERSION),
        _NULL_HEAD.pack(g.bands, g.start_nm, g.step_nm),
        _f64(model.sensitivities.matrix), _f64(model.pinv_factor), _f64(model.null_basis),
        _f64(model.proj_s), _f64(model.proj_n),
    ])


def null_model_from_bytes(buf: bytes, what: str = "null model") -> NullSpaceModel:
    rd = _Reader(buf, what)
    rd.preamble(NULL_MAGIC)
    bands, start, step = rd.unpack(_NULL_HEAD, "null model header")
    try:
        grid = SpectralGrid(start, step, bands)
    except ValueError as exc:
        raise FormatError(f"{what}: invalid grid ({exc})", _PREAMBLE.size) from None
    n = bands
    mats = {}
    for name, shape in (("sensitivities", (n, 3)), ("pinv_factor", (n, 3)),
                        ("null_basis", (n, n - 3)), ("proj_s", (n, n)), ("proj_n", (n, n))):
        mats[name] = rd.floats(shape[0] * shape[1], name).reshape(shape)
    rd.finish()
    s = SensitivitySet(grid, mats.pop("sensitivities"))
    return NullSpaceModel(s, **mats)


def write_null_model(path, model: NullSpaceModel):
    Path(path).write_bytes(null_model_to_bytes(model))


def read_null_model(path) -> NullSpaceModel:
    return null_model_from_bytes(_read_bytes(path), str(path))


# trained models -------------------------------------------------------------

def model_to_bytes(model: TrainedModel) -> bytes:
    spec = model.spec
    meta = {
        "spec": {
            "mode": spec.mode,
            "kind": spec.kind,
            "hidden_layers": list(spec.hidden_layers),
            "output_activation": spec.output_activation,
            "recentering": (None if spec.recentering is None
                            else [spec.recentering.offset, spec.recentering.divisor]),
            "seed": spec.seed,
        },
        "n_outputs": model.n_outputs,
        "fingerprint": model.fingerprint,
        "input_scale": model.input_scale,
        "output_scale": model.output_scale,
        "final_loss": model.final_loss,
        "out_of_range_fraction": model.out_of_range_fraction,
        "meta": model.meta,
    }
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    return b"".join([
        _PREAMBLE.pack(MODEL_MAGIC, VERSION),
        struct.pack("<I", len(header)), header,
        struct.pack("<Q", model.weights.size), _f64(model.weights),
    ])


def model_from_bytes(buf: bytes, what: str = "model") -> TrainedModel:
    rd = _Reader(buf, what)
    rd.preamble(MODEL_MAGIC)
    (hlen,) = rd.unpack(struct.Struct("<I"), "metadata length")
    if rd.pos + hlen > len(buf):
        raise FormatError(f"{what}: truncated metadata", rd.pos)
    try:
        meta = json.loads(buf[rd.pos:rd.pos + hlen].decode("utf-8"))
        sp = meta["spec"]
        rc = sp["recentering"]
        spec = RegressorSpec(
            mode=sp["mode"], kind=sp["kind"], hidden_layers=tuple(sp["hidden_layers"]),
            output_activation=sp["output_activation"],
            recentering=None if rc is None else Recentering(*rc), seed=sp["seed"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{what}: invalid metadata ({exc})", rd.pos) from None
    rd.pos += hlen
    (count,) = rd.unpack(struct.Struct("<Q"), "parameter count")
    weights = rd.floats(count, "parameters")
    rd.finish()
    try:
        return TrainedModel(spec, weights, meta["n_outputs"], meta["fingerprint"],
                            input_scale=meta["input_scale"], output_scale=meta["output_scale"],
                            final_loss=meta["final_loss"],
                            out_of_range_fraction=meta["out_of_range_fraction"],
                            meta=meta["meta"])
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{what}: inconsistent model ({exc})") from None


def write_model(path, model: TrainedModel):
    Path(path).write_bytes(model_to_bytes(model))


def read_model(path) -> TrainedModel:
    return model_from_bytes(_read_bytes(path), str(path))


# synthetic data -------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Settings for :func:`generate_synthetic`.

    ``intensity_spread`` bounds the per-pixel brightness multiplier to
    ``[1 - spread, 1 + spread]``; the shape of each spectrum is a smooth
    random mixture of ``latent_dim`` Gaussian bumps.
    """

    num_images: int = 20
    height: int = 32
    width: int = 32
    latent_dim: int = 4
    noise_level: float = 0.0
    floor: float = 1e-4
    seed: int = 0
    amplitude: float = 1.0
    intensity_spread: float = 0.2
    bump_width_nm: float = 60.0
    field_cells: int = 4

    def __post_init__(self):
        if min(self.num_images, self.height, self.width) < 1:
            raise ValueError("num_images, height and width must be >= 1")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        if not self.floor > 0:
            raise ValueError("floor must be positive")
        if not 0 <= self.intensity_spread < 1:
            raise ValueError("intensity_spread must lie in [0, 1)")
        if self.amplitude <= 0 or self.bump_width_nm <= 0 or self.field_cells < 1:
            raise ValueError("amplitude, bump_width_nm and field_cells must be positive")


def latent_bumps(cfg: SynthConfig, grid: SpectralGrid) -> np.ndarray:
    """(m, n) Gaussian profiles centred at the midpoints of m equal slices of the grid."""
    wl = grid.wavelengths
    lo, hi = wl[0], wl[-1]
    centers = lo + (np.arange(cfg.latent_dim) + 0.5) * (hi - lo) / cfg.latent_dim
    return np.exp(-0.5 * ((wl[None, :] - centers[:, None]) / cfg.bump_width_nm) ** 2)


def _smooth_field(rng, cfg: SynthConfig, lo: float, hi: float) -> np.ndarray:
    c = cfg.field_cells
    coarse = rng.uniform(lo, hi, size=(c, c))
    # linear interpolation keeps values inside [lo, hi]
    out = zoom(coarse, (cfg.height / c, cfg.width / c), order=1, grid_mode=True, mode="nearest")
    return out[:cfg.height, :cfg.width]


def generate_synthetic(cfg: SynthConfig = SynthConfig(),
                       grid: SpectralGrid = SpectralGrid()) -> list[HyperCube]:
    """Deterministic smooth hyperspectral images.

    Each pixel is ``floor + amplitude * b * sum_j c_j G_j + noise`` with
    mixture weights ``c`` (non-negative, summing to one) and brightness ``b``
    drawn from low-frequency random fields. Noise is a per-pixel random
    combination of low-order cosines across the band axis; the result is
    clipped at ``floor``.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    bumps = latent_bumps(cfg, grid)
    x = (grid.wavelengths - grid.wavelengths[0]) / (grid.wavelengths[-1] - grid.wavelengths[0])
    ripples = np.cos(np.pi * np.arange(1, 4)[:, None] * x[None, :])
    cubes = []
    for _ in range(cfg.num_images):
        mix = np.stack([_smooth_field(rng, cfg, 0.05, 1.0) for _ in range(cfg.latent_dim)], axis=-1)
        mix /= mix.sum(axis=-1, keepdims=True)
        bright = _smooth_field(rng, cfg, 1 - cfg.intensity_spread, 1 + cfg.intensity_spread)
        data = cfg.floor + cfg.amplitude * (mix * bright[..., None]) @ bumps
        if cfg.noise_level > 0:
            coef = rng.normal(size=(cfg.height, cfg.width, ripples.shape[0]))
            data = data + cfg.noise_level * cfg.amplitude * coef @ ripples / ripples.shape[0]
        cubes.append(HyperCube(grid, np.maximum(data, cfg.floor)))
    return cubes
