"""Lifting images to orientation scores; vesselness and cost fields.

Image convention
----------------
Images are stored as ``(height, width)`` arrays indexed ``[row, col]``.
Physical planar coordinates are x = col * pixel_size, y = row *
pixel_size (y grows downward, as on screen), and orientations theta are
measured from the +x axis toward +y.  Lifted volumes follow the package
grid layout (x, y, theta), i.e. the per-orientation response maps are
transposed when assembled into a volume.

Cake wavelets
-------------
The filters are built in the Fourier domain: for orientation theta_k =
2 pi k / n the filter is an angular B-spline wedge centered on the
direction theta_k + pi/2 (a line's spectrum is perpendicular to the
line) times an isotropic radial low-pass with an erf taper, with the
low-frequency disk split equally across orientations:

    psi_hat_k(w) = [ (1 - d(rho)) B_s((phi_w - theta_k - pi/2) / s_phi)
                     + d(rho) / n ] * M(rho),

with s_phi = 2 pi / n, B_s the cardinal B-spline of the requested
degree, M(rho) = (1 - erf((rho - rho_mid) / sigma)) / 2 and d a Gaussian
blend that is 1 at DC.  Because cardinal B-splines form a partition of
unity, the filters sum to M(rho) exactly, which gives the reconstruction
property: summing the orientation responses returns the M-band-passed
image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image as _PILImage
from scipy.interpolate import BSpline
from scipy.ndimage import gaussian_filter, map_coordinates
from scipy.special import erf

from .errors import BadConfig
from .grids import CostVolume, GridSpec
from .projection import CameraGeometry, pi

__all__ = [
    "Image",
    "load_image",
    "normalize_intensities",
    "WaveletStack",
    "build_cake_wavelets",
    "OrientationScore",
    "orientation_score",
    "vesselness_m2",
    "FrangiParams",
    "frangi_vesselness",
    "cost_from_vesselness",
    "cost_w2_from_r2",
]


def normalize_intensities(arr: np.ndarray) -> np.ndarray:
    """Map raw intensities into [0, 1]; idempotent.

    Negative values are shifted to zero first; values above 1 are then
    scaled by the maximum.  Arrays already inside [0, 1] pass through
    unchanged, so applying the map twice equals applying it once.
    """
    a = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(a)):
        raise BadConfig("image intensities must be finite")
    lo = a.min() if a.size else 0.0
    if lo < 0.0:
        a = a - lo
    hi = a.max() if a.size else 0.0
    if hi > 1.0:
        a = a / hi
    return a


@dataclass(frozen=True)
class Image:
    """A grayscale image with intensities normalized to [0, 1]."""

    intensities: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.intensities, dtype=float)
        if a.ndim != 2:
            raise BadConfig("images must be 2-D grayscale arrays")
        if not np.all(np.isfinite(a)):
            raise BadConfig("image intensities must be finite")
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            a = normalize_intensities(a)
        object.__setattr__(self, "intensities", a)

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]


def load_image(path) -> Image:
    """Load an 8- or 16-bit grayscale PNG (color inputs are converted).

    Intensities are divided by the full dtype range (255 or 65535), so
    absolute levels are preserved rather than stretched.
    """
    with _PILImage.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B", "I;16L"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            if im.mode not in ("L", "LA"):
                im = im.convert("L")
            elif im.mode == "LA":
                im = im.convert("L")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    return Image(intensities=np.clip(arr, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Cake wavelets
# ---------------------------------------------------------------------------

def _cardinal_bspline(t: np.ndarray, degree: int) -> np.ndarray:
    """Centered cardinal B-spline of the given degree, zero outside its
    support [-(degree+1)/2, (degree+1)/2]."""
    knots = np.arange(degree + 2, dtype=float) - (degree + 1) / 2.0
    basis = BSpline.basis_element(knots, extrapolate=False)
    out = basis(np.asarray(t, dtype=float))
    return np.nan_to_num(out, nan=0.0)


@dataclass(frozen=True)
class WaveletStack:
    """A bank of complex orientation filters with tiling Fourier supports.

    ``filters[k]`` is the centered spatial filter for orientation
    ``angles[k]`` = 2 pi k / n; ``fourier[k]`` is its transform on the
    stack's own size x size frequency grid (unshifted layout).  The
    Fourier magnitudes sum to the radial window M, which is 1 within
    5 % on the retained disk rho <= ``reconstruction_radius`` (cycles
    per pixel).
    """

    n_orientations: int
    size: int
    spline_order: int
    inflection: float
    filters: np.ndarray
    fourier: np.ndarray
    angles: np.ndarray
    reconstruction_radius: float


def build_cake_wavelets(
    n_orientations: int = 32,
    size: int = 51,
    spline_order: int = 3,
    inflection: float = 0.8,
) -> WaveletStack:
    """Construct the orientation filter bank (see the module docstring).

    Args:
        n_orientations: number of orientations on [0, 2 pi); at least 4.
        size: odd spatial support in pixels.
        spline_order: degree of the angular B-spline profile.
        inflection: fraction of the Nyquist frequency at which the
            radial taper reaches 1/2.

    Raises:
        BadConfig: for fewer than 4 orientations, an even or too-small
            size, or an inflection outside (0, 1).
    """
    if n_orientations < 4:
        raise BadConfig("need at least 4 orientations")
    if size % 2 == 0 or size < 5:
        raise BadConfig("wavelet size must be odd and at least 5")
    if spline_order < 1:
        raise BadConfig("spline order must be at least 1")
    if not 0.0 < inflection < 1.0:
        raise BadConfig("inflection must be a fraction of Nyquist in (0, 1)")

    n = int(n_orientations)
    freqs = np.fft.fftfreq(size)
    fy = freqs[:, None]  # rows
    fx = freqs[None, :]  # cols
    rho = np.hypot(fx, fy)
    phi_w = np.arctan2(fy, fx)

    rho_mid = 0.5 * inflection
    sigma = (0.5 - rho_mid) / 3.0
    radial = 0.5 * (1.0 - erf((rho - rho_mid) / sigma))
    dc_blend = np.exp(-((rho / (2.0 / size)) ** 2))

    s_phi = 2.0 * np.pi / n
    angles = s_phi * np.arange(n)
    fourier = np.empty((n, size, size), dtype=complex)
    for k in range(n):
        arg = np.angle(np.exp(1j * (phi_w - angles[k] - np.pi / 2.0)))
        wedge = _cardinal_bspline(arg / s_phi, spline_order)
        fourier[k] = ((1.0 - dc_blend) * wedge + dc_blend / n) * radial
    filters = np.fft.fftshift(np.fft.ifft2(fourier, axes=(1, 2)), axes=(1, 2))

    return WaveletStack(
        n_orientations=n,
        size=size,
        spline_order=int(spline_order),
        inflection=float(inflection),
        filters=filters,
        fourier=fourier,
        angles=angles,
        reconstruction_radius=float(rho_mid - 2.0 * sigma),
    )


# ---------------------------------------------------------------------------
# Orientation scores
# ---------------------------------------------------------------------------

@dataclass
class OrientationScore:
    """Complex orientation responses on an (x, y, theta) grid.

    ``values[ix, iy, k]`` is the correlation of the image with the
    filter of orientation ``grid`` theta-coordinate k; the transform is
    linear in the image and summing over orientations recovers the
    band-passed image (module docstring).
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise BadConfig("score array shape does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise BadConfig("orientation scores must be finite")


def _embedded_fourier(psi: WaveletStack, shape: tuple[int, int]) -> np.ndarray:
    """Transforms of the spatial filters zero-padded to the image shape,
    with the filter center at pixel (0, 0)."""
    h, w = shape
    m = psi.size
    half = (m - 1) // 2
    full = np.zeros((psi.n_orientations, h, w), dtype=complex)
    full[:, :m, :m] = psi.filters
    full = np.roll(full, (-half, -half), axis=(1, 2))
    return np.fft.fft2(full, axes=(1, 2))


def orientation_score(f: Image, psi: WaveletStack, pixel_size: float = 1.0) -> OrientationScore:
    """Correlate an image with every rotated filter (Fourier domain).

    The result is linear in the image and shift-covariant by
    construction.  The returned grid has origin (0, 0, 0), spacing
    (pixel_size, pixel_size, 2 pi / n) and a periodic orientation axis,
    so node (ix, iy, k) sits at pixel (row iy, col ix) and orientation
    2 pi k / n.

    Raises:
        BadConfig: if the image is smaller than the filter support.
    """
    img = f.intensities
    if img.shape[0] < psi.size or img.shape[1] < psi.size:
        raise BadConfig(
            f"image {img.shape} is smaller than the wavelet support {psi.size}"
        )
    fhat = np.fft.fft2(img)
    khat = _embedded_fourier(psi, img.shape)
    scores = np.fft.ifft2(fhat[None] * np.conj(khat), axes=(1, 2))
    # (k, row, col) -> (x=col, y=row, k)
    values = np.transpose(scores, (2, 1, 0))
    grid = GridSpec(
        manifold="m2",
        shape=values.shape,
        origin=(0.0, 0.0, 0.0),
        spacing=(pixel_size, pixel_size, 2.0 * np.pi / psi.n_orientations),
    )
    return OrientationScore(grid=grid, values=values)


# ---------------------------------------------------------------------------
# Vesselness
# ---------------------------------------------------------------------------

def vesselness_m2(U: OrientationScore, scales, *, normalize: bool = True) -> np.ndarray:
    """Orientation-indexed vesselness from an orientation score.

    Substitute filter (documented design decision): within each
    orientation slice of |U|, the negative second Gaussian derivative
    along the lateral direction (-sin theta, cos theta), scale-
    normalized by sigma^2, half-wave rectified and averaged over scales.
    A bright elongated structure of orientation theta produces a ridge
    in the |U| slice at theta, hence a strong lateral curvature response
    there and (because overlapping structures of different orientation
    live in different slices) crossings do not suppress each other.

    Args:
        U: orientation score.
        scales: Gaussian standard deviations in pixels.
        normalize: scale the result to max 1 (when nonzero).

    Returns:
        Array of shape ``U.grid.shape`` with values >= 0.
    """
    scales = [float(s) for s in np.atleast_1d(scales)]
    if not scales or any(s <= 0 for s in scales):
        raise BadConfig("scales must be positive standard deviations")
    mag = np.abs(U.values)
    px = U.grid.spacing[0]
    thetas = U.grid.axis_coords(2)
    out = np.zeros_like(mag)
    for k, th in enumerate(thetas):
        sl = mag[:, :, k]  # (x, y)
        nx, ny = -np.sin(th), np.cos(th)
        for s in scales:
            sp = s / px  # pixel units
            sxx = gaussian_filter(sl, sp, order=(2, 0), mode="nearest")
            syy = gaussian_filter(sl, sp, order=(0, 2), mode="nearest")
            sxy = gaussian_filter(sl, sp, order=(1, 1), mode="nearest")
            lat = nx * nx * sxx + 2.0 * nx * ny * sxy + ny * ny * syy
            out[:, :, k] += np.maximum(0.0, -(sp * sp) * lat)
    out /= len(scales)
    if normalize:
        peak = out.max()
        if peak > 0.0:
            out /= peak
    return out


@dataclass(frozen=True)
class FrangiParams:
    """Parameters of the two-eigenvalue Hessian vesselness measure.

    ``beta`` weights the blobness ratio, ``c`` the structureness norm
    (None: half the per-scale maximum, a standard data-driven choice);
    ``dark_ridges`` selects dark-on-bright structures (retinal vessels)
    rather than bright-on-dark.
    """

    beta: float = 0.5
    c: float | None = None
    dark_ridges: bool = True


def frangi_vesselness(f: Image, scales, params: FrangiParams = FrangiParams()) -> np.ndarray:
    """Multiscale Hessian vesselness on the flat image, values in [0, 1].

    For each scale the Gaussian Hessian is scale-normalized (sigma^2),
    its eigenvalues ordered |l1| <= |l2|, and the response
    exp(-RB^2 / (2 beta^2)) (1 - exp(-S^2 / (2 c^2))) with RB = l1/l2,
    S = sqrt(l1^2 + l2^2) is kept where l2 has the ridge sign (positive
    for dark ridges, negative for bright ones).  The result is the
    maximum over scales, shaped like the image (rows, cols).
    """
    scales = [float(s) for s in np.atleast_1d(scales)]
    if not scales or any(s <= 0 for s in scales):
        raise BadConfig("scales must be positive standard deviations")
    img = f.intensities
    eigs = []
    for s in scales:
        hrr = (s * s) * gaussian_filter(img, s, order=(2, 0), mode="nearest")
        hcc = (s * s) * gaussian_filter(img, s, order=(0, 2), mode="nearest")
        hrc = (s * s) * gaussian_filter(img, s, order=(1, 1), mode="nearest")
        # eigenvalues of [[hrr, hrc], [hrc, hcc]]
        half_tr = 0.5 * (hrr + hcc)
        disc = np.sqrt(np.maximum(0.25 * (hrr - hcc) ** 2 + hrc * hrc, 0.0))
        ea = half_tr + disc
        eb = half_tr - disc
        swap = np.abs(ea) > np.abs(eb)
        l1 = np.where(swap, eb, ea)
        l2 = np.where(swap, ea, eb)
        eigs.append((l1, l2, np.hypot(l1, l2)))
    # one structureness scale for all sigmas, so the max over scales
    # keeps its scale selectivity
    cval = params.c
    if cval is None:
        cval = 0.5 * max(max(st.max() for _, _, st in eigs), 1e-30)
    best = np.zeros_like(img)
    for l1, l2, structure in eigs:
        with np.errstate(divide="ignore", invalid="ignore"):
            blob = np.where(l2 != 0.0, (l1 / l2) ** 2, 0.0)
        resp = np.exp(-blob / (2.0 * params.beta**2)) * (
            1.0 - np.exp(-(structure**2) / (2.0 * cval**2))
        )
        ridge = (l2 > 0.0) if params.dark_ridges else (l2 < 0.0)
        best = np.maximum(best, np.where(ridge, resp, 0.0))
    return np.clip(best, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------

def cost_from_vesselness(
    V: np.ndarray,
    grid: GridSpec,
    lam: float = 100.0,
    p: float = 2.0,
    *,
    provenance: dict | None = None,
) -> CostVolume:
    """Map a vesselness field to a speed cost C = 1 / (1 + lam * V**p).

    C lies in (0, 1] and equals 1 exactly where V = 0; larger vesselness
    means cheaper passage.

    Raises:
        BadConfig: if lam <= 0, p <= 0, V is negative, or shapes differ.
    """
    if lam <= 0.0 or p <= 0.0:
        raise BadConfig("cost parameters lam and p must be positive")
    V = np.asarray(V, dtype=float)
    if V.shape != grid.shape:
        raise BadConfig("vesselness shape does not match the grid")
    if not np.all(np.isfinite(V)) or V.min() < 0.0:
        raise BadConfig("vesselness must be finite and non-negative")
    values = 1.0 / (1.0 + lam * np.power(V, p))
    meta = {"lambda": float(lam), "p": float(p)}
    if provenance:
        meta.update(provenance)
    meta.setdefault("source", "vesselness")
    return CostVolume(grid=grid, values=values, provenance=meta)


def cost_w2_from_r2(
    V_r2: np.ndarray,
    grid_w2: GridSpec,
    geom: CameraGeometry,
    lam: float = 100.0,
    p: float = 2.0,
    *,
    pixel_size: float = 1.0,
    center: tuple[float, float] | None = None,
) -> CostVolume:
    """Orientation-independent spherical cost from a flat vesselness map.

    Every spherical node (alpha, beta, phi) is assigned the planar cost
    at the projection of its position: the flat field is sampled
    bilinearly at pi(alpha, beta) (pixel mapping col = x / pixel_size +
    cx, row = y / pixel_size + cy with (cx, cy) the image center by
    default), then mapped through C = 1 / (1 + lam V**p).  The result is
    constant along phi.  Nodes projecting outside the image get cost 1.0
    and are marked False in the coverage mask.
    """
    if lam <= 0.0 or p <= 0.0:
        raise BadConfig("cost parameters lam and p must be positive")
    if grid_w2.manifold != "w2":
        raise BadConfig("cost_w2_from_r2 targets a spherical grid")
    V_r2 = np.asarray(V_r2, dtype=float)
    if V_r2.ndim != 2 or not np.all(np.isfinite(V_r2)) or V_r2.min() < 0.0:
        raise BadConfig("flat vesselness must be a finite non-negative 2-D array")
    h, w = V_r2.shape
    cx, cy = center if center is not None else ((w - 1) / 2.0, (h - 1) / 2.0)

    alphas = grid_w2.axis_coords(0)
    betas = grid_w2.axis_coords(1)
    aa, bb = np.meshgrid(alphas, betas, indexing="ij")
    x, y = pi(geom, aa, bb)
    col = x / pixel_size + cx
    row = y / pixel_size + cy
    inside = (col >= 0) & (col <= w - 1) & (row >= 0) & (row <= h - 1)
    sampled = map_coordinates(
        V_r2, [row.ravel(), col.ravel()], order=1, mode="constant", cval=0.0
    ).reshape(aa.shape)
    vess = np.where(inside, sampled, 0.0)
    plane = 1.0 / (1.0 + lam * np.power(vess, p))

    n_phi = grid_w2.shape[2]
    values = np.repeat(plane[:, :, None], n_phi, axis=2)
    coverage = np.repeat(inside[:, :, None], n_phi, axis=2)
    return CostVolume(
        grid=grid_w2,
        values=values,
        provenance={
            "source": "frangi_r2_pullback",
            "lambda": float(lam),
            "p": float(p),
            "camera": {"a": geom.a, "c": geom.c},
            "pixel_size": float(pixel_size),
            "center": [float(cx), float(cy)],
        },
        coverage=coverage,
    )
