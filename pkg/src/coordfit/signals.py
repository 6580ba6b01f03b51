"""Loading, sampling, and differentiating 1D/2D signals, plus fidelity metrics.

Signals live on a regular lattice with coordinates normalized to [0,1] per axis
and values normalized to [0,1] per channel. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

PSNR_CAP_DB = 100.0


@dataclass(frozen=True)
class SampledSignal:
    """A discretized signal: full-lattice coordinates and target values.

    coords  -- (P, N) float64, row-major lattice positions in [0,1]^N
    values  -- (P, M) float64, targets in [0,1]^M
    grid_shape -- extents per axis, P == prod(grid_shape)
    """

    coords: np.ndarray
    values: np.ndarray
    grid_shape: tuple[int, ...]

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "grid_shape", tuple(int(g) for g in self.grid_shape))
        n_points = int(np.prod(self.grid_shape))
        if coords.shape[0] != n_points or values.shape[0] != n_points:
            raise ValueError(
                f"lattice size mismatch: {coords.shape[0]} coords, "
                f"{values.shape[0]} values, grid {self.grid_shape}"
            )
        if coords.min() < -1e-12 or coords.max() > 1 + 1e-12:
            raise ValueError("coordinates must lie in [0,1]")
        if values.min() < -1e-12 or values.max() > 1 + 1e-12:
            raise ValueError("values must lie in [0,1]")

    @property
    def n_dims_in(self) -> int:
        return len(self.grid_shape)

    @property
    def n_dims_out(self) -> int:
        return self.values.shape[1]

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class SplitPlan:
    """Train/test partition of the lattice indices."""

    train_idx: np.ndarray
    test_idx: np.ndarray
    scheme: str
    fraction: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "train_idx", np.asarray(self.train_idx, dtype=np.int64))
        object.__setattr__(self, "test_idx", np.asarray(self.test_idx, dtype=np.int64))


def lattice_coords(grid_shape) -> np.ndarray:
    """Row-major lattice coordinates, each axis normalized to [0,1]."""
    grid_shape = tuple(int(g) for g in grid_shape)
    for extent in grid_shape:
        if extent < 2:
            raise ValueError(f"axis extent {extent} < 2")
    axes = [np.arange(g, dtype=np.float64) / (g - 1) for g in grid_shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


# ---------------------------------------------------------------------------
# File I/O: binary netpbm (P5/P6) and single-column CSV
# ---------------------------------------------------------------------------

def read_netpbm(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6), maxval <= 255.

    Returns uint8 array of shape (H, W) or (H, W, 3).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 2:
        raise ValueError(f"{path}: not a netpbm file")
    magic = data[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ValueError(f"{path}: unsupported magic {magic!r} (need binary P5/P6)")

    # header tokenizer: whitespace-separated ints, '#' comments run to EOL
    pos = 2
    tokens = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise ValueError(f"{path}: truncated header")
        c = data[pos : pos + 1]
        if c == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(int(data[pos:end]))
            pos = end
    width, height, maxval = tokens
    if maxval > 255 or maxval < 1:
        raise ValueError(f"{path}: maxval {maxval} not in 1..255")
    pos += 1  # single whitespace byte after maxval
    n_bytes = width * height * channels
    raster = data[pos : pos + n_bytes]
    if len(raster) != n_bytes:
        raise ValueError(f"{path}: raster has {len(raster)} bytes, expected {n_bytes}")
    img = np.frombuffer(raster, dtype=np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return img.reshape(shape)


def write_netpbm(path, values: np.ndarray) -> None:
    """Write values in [0,1] as binary PGM/PPM, maxval 255.

    (H, W) or (H, W, 1) arrays become P5; (H, W, 3) becomes P6. Values are
    clamped to [0,1] then rounded.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 3 and values.shape[2] == 1:
        values = values[:, :, 0]
    if values.ndim == 2:
        magic = b"P5"
    elif values.ndim == 3 and values.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write shape {values.shape} as PGM/PPM")
    height, width = values.shape[:2]
    quantized = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (width, height))
        fh.write(quantized.tobytes())


def load_signal(path, kind: str) -> SampledSignal:
    """Load a signal file as a normalized SampledSignal.

    kind "csv_1d": one value per line; values shifted/scaled to [0,1] by
    (v - min) / (max - min) (a constant column maps to all zeros).
    kind "image_2d": binary PGM/PPM; values divided by 255.
    """
    if kind == "csv_1d":
        with open(path) as fh:
            lines = [ln.strip() for ln in fh]
        raw = np.array([float(ln) for ln in lines if ln], dtype=np.float64)
        if raw.size == 0:
            raise ValueError(f"{path}: empty signal")
        if raw.size < 2:
            raise ValueError(f"{path}: extent {raw.size} < 2")
        span = raw.max() - raw.min()
        vals = (raw - raw.min()) / span if span > 0 else np.zeros_like(raw)
        grid_shape = (raw.size,)
        return SampledSignal(lattice_coords(grid_shape), vals[:, None], grid_shape)
    if kind == "image_2d":
        img = read_netpbm(path)
        if img.shape[0] < 2 or img.shape[1] < 2:
            raise ValueError(f"{path}: extent < 2 on an axis")
        vals = img.reshape(img.shape[0] * img.shape[1], -1) / 255.0
        grid_shape = img.shape[:2]
        return SampledSignal(lattice_coords(grid_shape), vals, grid_shape)
    raise ValueError(f"unknown signal kind {kind!r}")


def signal_from_values(values: np.ndarray, grid_shape) -> SampledSignal:
    """Wrap an in-memory value grid (already in [0,1]) as a SampledSignal."""
    grid_shape = tuple(int(g) for g in grid_shape)
    vals = np.asarray(values, dtype=np.float64).reshape(int(np.prod(grid_shape)), -1)
    return SampledSignal(lattice_coords(grid_shape), vals, grid_shape)


# ---------------------------------------------------------------------------
# Sampling and differentiation
# ---------------------------------------------------------------------------

def make_split(signal: SampledSignal, scheme: str, fraction: float, seed: int) -> SplitPlan:
    """Partition the lattice into train/test index sets.

    "regular" keeps a constant-stride sublattice with per-axis stride
    round((1/fraction)^(1/N)), starting at index 0 (for 1D this is
    round(1/fraction)). "random" draws round(fraction * P) indices without
    replacement from a generator seeded with `seed`.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction {fraction} not in (0, 1]")
    n_points = signal.n_points
    all_idx = np.arange(n_points, dtype=np.int64)

    if fraction == 1.0:
        return SplitPlan(all_idx, np.empty(0, dtype=np.int64), scheme, fraction, seed)

    if scheme == "regular":
        n_axes = signal.n_dims_in
        stride = max(1, round((1.0 / fraction) ** (1.0 / n_axes)))
        mesh = np.unravel_index(all_idx, signal.grid_shape)
        on_sublattice = np.ones(n_points, dtype=bool)
        for axis_idx in mesh:
            on_sublattice &= axis_idx % stride == 0
        train = all_idx[on_sublattice]
        test = all_idx[~on_sublattice]
    elif scheme == "random":
        n_train = int(round(fraction * n_points))
        if n_train == 0 or n_train == n_points:
            raise ValueError(f"fraction {fraction} yields a degenerate split")
        perm = np.random.default_rng(seed).permutation(n_points)
        train = np.sort(perm[:n_train])
        test = np.sort(perm[n_train:])
    else:
        raise ValueError(f"unknown split scheme {scheme!r}")

    if train.size == 0 or test.size == 0:
        raise ValueError(f"fraction {fraction} yields an empty train or test set")
    return SplitPlan(train, test, scheme, fraction, seed)


def jacobian_frobenius(signal: SampledSignal) -> np.ndarray:
    """Frobenius norm of the target Jacobian at every lattice point.

    Central differences on interior points, one-sided at boundaries, with
    per-axis spacing 1/(extent-1) in normalized coordinates. Returns (P,).
    """
    grid = signal.values.reshape(signal.grid_shape + (signal.n_dims_out,))
    sq_sum = np.zeros(signal.grid_shape, dtype=np.float64)
    for axis, extent in enumerate(signal.grid_shape):
        spacing = 1.0 / (extent - 1)
        partial = np.gradient(grid, spacing, axis=axis, edge_order=1)
        sq_sum += (partial ** 2).sum(axis=-1)
    return np.sqrt(sq_sum).reshape(-1)


def mean_channel_gradient(signal: SampledSignal) -> np.ndarray:
    """Gradient norm of the channel-mean signal (the sigma predictor's input)."""
    mean_vals = signal.values.mean(axis=1, keepdims=True)
    mono = SampledSignal(signal.coords, mean_vals, signal.grid_shape)
    return jacobian_frobenius(mono)


# ---------------------------------------------------------------------------
# Fidelity metrics
# ---------------------------------------------------------------------------

def psnr(pred, truth) -> float:
    """PSNR in dB for values in [0,1]; zero-MSE returns the 100 dB cap."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    mse = float(np.mean((pred - truth) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2
    w = np.exp(-(offsets ** 2) / (2 * sigma ** 2))
    return w / w.sum()


def _local_mean(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    # separable correlation; callers crop to the valid interior afterwards
    out = ndimage.correlate1d(img, window, axis=0, mode="constant")
    return ndimage.correlate1d(out, window, axis=1, mode="constant")


def ssim(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (std 1.5), range 1.

    RGB inputs are averaged to a single luma channel first. Local statistics
    use only windows fully inside the image, so both extents must be >= 11.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.ndim == 3:
        pred = pred.mean(axis=2)
        truth = truth.mean(axis=2)
    if pred.ndim != 2:
        raise ValueError("ssim expects 2D images")
    if min(pred.shape) < _SSIM_WINDOW:
        raise ValueError(f"image {pred.shape} smaller than {_SSIM_WINDOW}x{_SSIM_WINDOW} window")

    window = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    margin = _SSIM_WINDOW // 2
    valid = (slice(margin, pred.shape[0] - margin), slice(margin, pred.shape[1] - margin))

    mu1 = _local_mean(pred, window)[valid]
    mu2 = _local_mean(truth, window)[valid]
    var1 = _local_mean(pred * pred, window)[valid] - mu1 ** 2
    var2 = _local_mean(truth * truth, window)[valid] - mu2 ** 2
    cov = _local_mean(pred * truth, window)[valid] - mu1 * mu2

    ssim_map = ((2 * mu1 * mu2 + _SSIM_C1) * (2 * cov + _SSIM_C2)) / (
        (mu1 ** 2 + mu2 ** 2 + _SSIM_C1) * (var1 + var2 + _SSIM_C2)
    )
    return float(ssim_map.mean())
