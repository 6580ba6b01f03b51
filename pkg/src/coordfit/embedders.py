"""Positional embedding functions and their analytic derivatives.

Two families: a super-Gaussian radial-basis embedder with a per-coordinate
width sigma, and a fixed random-Fourier-feature baseline. Both expose exact
derivatives with respect to the input coordinate; the super-Gaussian also
differentiates with respect to sigma, which is what the width optimizer needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .textcfg import read_kv_file, write_kv_file

DEFAULT_D_EMBED = 256
DEFAULT_B = 2.0
DEFAULT_SIGMA_MIN = 1e-3


@dataclass(frozen=True)
class SuperGaussianConfig:
    """Parameters of the super-Gaussian embedder.

    Component i of the embedding is exp(-b * (p - t_i)^2 / (2 sigma^2)) where
    p is either the scalar projection x . alpha ("projected" mode) or, in
    "per_axis" mode, one coordinate component with its own block of centers.
    """

    centers: np.ndarray  # projected: (D,); per_axis: (D // N,) shared per axis
    b: float
    alpha: np.ndarray  # (N,), ignored in per_axis mode
    mode: str  # "projected" | "per_axis"
    d_embed: int
    n_dims_in: int
    sigma_min: float = DEFAULT_SIGMA_MIN

    @property
    def center_spacing(self) -> float:
        return float(self.centers[1] - self.centers[0])


@dataclass(frozen=True)
class RffConfig:
    """Fixed random Fourier frequency matrix; never trained."""

    b_matrix: np.ndarray  # (D/2, N), entries ~ N(0, sigma_r^2)
    sigma_r: float
    seed: int

    @property
    def d_embed(self) -> int:
        return 2 * self.b_matrix.shape[0]

    @property
    def n_dims_in(self) -> int:
        return self.b_matrix.shape[1]


def make_super_gaussian(
    n_dims_in: int,
    d_embed: int = DEFAULT_D_EMBED,
    b: float = DEFAULT_B,
    mode: str | None = None,
    alpha=None,
    sigma_min: float = DEFAULT_SIGMA_MIN,
) -> SuperGaussianConfig:
    """Build a SuperGaussianConfig with evenly spaced centers.

    Default mode is "projected" for 1D inputs and "per_axis" for 2D, where
    the D components split into D/N per-axis blocks (keeps the embedding
    injective without picking a projection direction).
    """
    if b <= 0:
        raise ValueError(f"exponent b must be > 0, got {b}")
    if d_embed < 2:
        raise ValueError(f"d_embed must be >= 2, got {d_embed}")
    if mode is None:
        mode = "projected" if n_dims_in == 1 else "per_axis"

    if mode == "projected":
        alpha = np.ones(n_dims_in) if alpha is None else np.asarray(alpha, dtype=np.float64)
        if alpha.shape != (n_dims_in,):
            raise ValueError(f"alpha must have shape ({n_dims_in},)")
        # centers span the range of x . alpha over the unit box
        lo = float(np.minimum(alpha, 0.0).sum())
        hi = float(np.maximum(alpha, 0.0).sum())
        centers = np.linspace(lo, hi, d_embed)
    elif mode == "per_axis":
        if d_embed % n_dims_in != 0:
            raise ValueError(f"d_embed {d_embed} not divisible by n_dims_in {n_dims_in}")
        per_axis = d_embed // n_dims_in
        if per_axis < 2:
            raise ValueError("need at least 2 centers per axis")
        centers = np.linspace(0.0, 1.0, per_axis)
        alpha = np.ones(n_dims_in)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return SuperGaussianConfig(centers, float(b), alpha, mode, d_embed, n_dims_in, sigma_min)


def make_rff(n_dims_in: int, d_embed: int = DEFAULT_D_EMBED, sigma_r: float = 1.0, seed: int = 0) -> RffConfig:
    if d_embed % 2 != 0:
        raise ValueError(f"RFF d_embed must be even, got {d_embed}")
    rng = np.random.default_rng(seed)
    b_matrix = rng.normal(0.0, sigma_r, size=(d_embed // 2, n_dims_in))
    return RffConfig(b_matrix, float(sigma_r), int(seed))


def _as_batch(x, n_dims: int):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape != (n_dims,):
            raise ValueError(f"coordinate shape {x.shape}, expected ({n_dims},)")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != n_dims:
        raise ValueError(f"coordinate batch shape {x.shape}, expected (B, {n_dims})")
    return x, False


def _sigma_batch(sigma, n: int, sigma_min: float) -> np.ndarray:
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (n,))
    if np.any(sigma < sigma_min * (1 - 1e-12)):
        raise ValueError(f"sigma below floor {sigma_min}")
    return sigma


# ---------------------------------------------------------------------------
# Super-Gaussian embedding and derivatives
# ---------------------------------------------------------------------------

def _sg_offsets(x: np.ndarray, cfg: SuperGaussianConfig):
    """Per-component offsets p - t as (B, D); per_axis concatenates axis blocks."""
    if cfg.mode == "projected":
        proj = x @ cfg.alpha
        return proj[:, None] - cfg.centers[None, :]
    blocks = [x[:, n, None] - cfg.centers[None, :] for n in range(cfg.n_dims_in)]
    return np.concatenate(blocks, axis=1)


def super_gaussian_embed(x, sigma, cfg: SuperGaussianConfig) -> np.ndarray:
    """Embed coordinates: (N,) -> (D,), or (B, N) -> (B, D).

    sigma is a scalar or a per-row vector; must be >= cfg.sigma_min. The
    exponent is computed in one shot (exp(-b z^2 / (2 sigma^2))) rather than
    powering a Gaussian, which avoids underflow-then-power.
    """
    xb, single = _as_batch(x, cfg.n_dims_in)
    sig = _sigma_batch(sigma, xb.shape[0], cfg.sigma_min)
    z = _sg_offsets(xb, cfg)
    emb = np.exp(-cfg.b * z ** 2 / (2.0 * sig[:, None] ** 2))
    return emb[0] if single else emb


def super_gaussian_embed_dsigma(x, sigma, cfg: SuperGaussianConfig) -> np.ndarray:
    """d embedding / d sigma, same shape as the embedding."""
    xb, single = _as_batch(x, cfg.n_dims_in)
    sig = _sigma_batch(sigma, xb.shape[0], cfg.sigma_min)
    z = _sg_offsets(xb, cfg)
    emb = np.exp(-cfg.b * z ** 2 / (2.0 * sig[:, None] ** 2))
    grad = emb * cfg.b * z ** 2 / sig[:, None] ** 3
    return grad[0] if single else grad


def super_gaussian_embed_dx(x, sigma, cfg: SuperGaussianConfig) -> np.ndarray:
    """d embedding / d coordinate: (B, D, N) (or (D, N) for a single input)."""
    xb, single = _as_batch(x, cfg.n_dims_in)
    sig = _sigma_batch(sigma, xb.shape[0], cfg.sigma_min)
    z = _sg_offsets(xb, cfg)
    emb = np.exp(-cfg.b * z ** 2 / (2.0 * sig[:, None] ** 2))
    dphi_dz = emb * (-cfg.b * z / sig[:, None] ** 2)
    if cfg.mode == "projected":
        jac = dphi_dz[:, :, None] * cfg.alpha[None, None, :]
    else:
        n_per = cfg.centers.size
        jac = np.zeros((xb.shape[0], cfg.d_embed, cfg.n_dims_in))
        for n in range(cfg.n_dims_in):
            jac[:, n * n_per : (n + 1) * n_per, n] = dphi_dz[:, n * n_per : (n + 1) * n_per]
    return jac[0] if single else jac


def super_gaussian_jacobian(x, sigma, cfg: SuperGaussianConfig) -> np.ndarray:
    """Exact analytic Jacobian of the embedding at one coordinate, as (D, N)."""
    jac = super_gaussian_embed_dx(x, sigma, cfg)
    if jac.ndim == 3:
        raise ValueError("super_gaussian_jacobian takes a single coordinate")
    return jac


def metric_tensor(x, sigma, cfg: SuperGaussianConfig) -> np.ndarray:
    """Metric tensor of the embedded manifold at x: J^T J, an (N, N) PSD matrix."""
    jac = super_gaussian_jacobian(x, sigma, cfg)
    return jac.T @ jac


def volume_element(x, sigma, cfg: SuperGaussianConfig) -> float:
    """sqrt(det(metric_tensor)), clamped at 0 against rounding."""
    det = float(np.linalg.det(metric_tensor(x, sigma, cfg)))
    return float(np.sqrt(max(det, 0.0)))


# ---------------------------------------------------------------------------
# Random Fourier features
# ---------------------------------------------------------------------------

def rff_embed(x, cfg: RffConfig) -> np.ndarray:
    """[cos(2 pi B x); sin(2 pi B x)]: (N,) -> (D,) or (B, N) -> (B, D)."""
    xb, single = _as_batch(x, cfg.n_dims_in)
    phase = 2.0 * np.pi * (xb @ cfg.b_matrix.T)
    emb = np.concatenate([np.cos(phase), np.sin(phase)], axis=1)
    return emb[0] if single else emb


def rff_embed_dx(x, cfg: RffConfig) -> np.ndarray:
    """d embedding / d coordinate for RFF: (B, D, N) (or (D, N) single)."""
    xb, single = _as_batch(x, cfg.n_dims_in)
    phase = 2.0 * np.pi * (xb @ cfg.b_matrix.T)
    scaled_b = 2.0 * np.pi * cfg.b_matrix  # (D/2, N)
    dcos = -np.sin(phase)[:, :, None] * scaled_b[None, :, :]
    dsin = np.cos(phase)[:, :, None] * scaled_b[None, :, :]
    jac = np.concatenate([dcos, dsin], axis=1)
    return jac[0] if single else jac


# ---------------------------------------------------------------------------
# Manifold diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InjectivityReport:
    min_distance: float
    offending_pair: tuple[int, int] | None
    n_flagged: int

    INJECTIVITY_TOL = 1e-9

    @property
    def injective(self) -> bool:
        return self.offending_pair is None


def check_injectivity(cfg: SuperGaussianConfig, lattice, sigma_field) -> InjectivityReport:
    """Scan all lattice pairs for (near-)coincident embeddings.

    Flags pairs whose embedding distance falls below 1e-9; returns the minimum
    pairwise distance and the closest pair when flagged.
    """
    lattice = np.asarray(lattice, dtype=np.float64)
    emb = super_gaussian_embed(lattice, sigma_field, cfg)
    sq_norms = (emb ** 2).sum(axis=1)
    sq_dist = sq_norms[:, None] + sq_norms[None, :] - 2.0 * emb @ emb.T
    np.fill_diagonal(sq_dist, np.inf)
    sq_dist = np.maximum(sq_dist, 0.0, where=np.isfinite(sq_dist), out=sq_dist)
    flat = int(np.argmin(sq_dist))
    i, j = divmod(flat, sq_dist.shape[1])
    min_dist = float(np.sqrt(sq_dist[i, j]))
    n_flagged = int((np.sqrt(sq_dist[np.triu_indices_from(sq_dist, k=1)]) < InjectivityReport.INJECTIVITY_TOL).sum())
    pair = (min(i, j), max(i, j)) if min_dist < InjectivityReport.INJECTIVITY_TOL else None
    return InjectivityReport(min_dist, pair, n_flagged)


# ---------------------------------------------------------------------------
# Config file round-trip (plain-text key=value)
# ---------------------------------------------------------------------------

def save_embedder_config(path, sg: SuperGaussianConfig, rff: RffConfig) -> None:
    write_kv_file(
        path,
        {
            "d_embed": sg.d_embed,
            "b": sg.b,
            "mode": sg.mode,
            "sigma_min": sg.sigma_min,
            "alpha": ",".join(repr(a) for a in sg.alpha),
            "rff_sigma_r": rff.sigma_r,
            "seed": rff.seed,
        },
    )


def load_embedder_config(path, n_dims_in: int) -> tuple[SuperGaussianConfig, RffConfig]:
    kv = read_kv_file(path)
    alpha = np.array([float(tok) for tok in kv["alpha"].split(",")])
    sg = make_super_gaussian(
        n_dims_in,
        d_embed=int(kv["d_embed"]),
        b=float(kv["b"]),
        mode=kv["mode"],
        alpha=alpha if kv["mode"] == "projected" else None,
        sigma_min=float(kv["sigma_min"]),
    )
    rff = make_rff(n_dims_in, d_embed=int(kv["d_embed"]), sigma_r=float(kv["rff_sigma_r"]), seed=int(kv["seed"]))
    return sg, rff
