"""Back-focal-plane (BFP) images to angular emission profiles and
collection efficiency within a numerical aperture.

A BFP pixel at radius ``r`` (pixels) from the optical axis sees emission at
``n sin(theta) = r * pixel_scale`` where ``n`` is the immersion index. An
aplanatic objective maps power per solid angle ``I(theta)`` onto the BFP with
an extra ``1 / cos(theta)`` in areal density, so the radiance profile is the
BFP intensity multiplied by ``cos(theta)``. The correction is on by default
and recorded in every profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class BFPImage:
    """BFP intensity map with its calibration.

    ``pixel_scale`` is NA per pixel and ``center`` the optical axis as
    ``(row, col)`` in pixel coordinates (pixel centres at integers).
    """

    intensity: np.ndarray
    pixel_scale: float
    center: tuple[float, float]
    na_max: float
    immersion_index: float = 1.0

    def __post_init__(self):
        img = np.asarray(self.intensity, dtype=float)
        if img.ndim != 2 or img.size == 0:
            raise ValueError("intensity must be a non-empty 2-D array")
        if not np.all(np.isfinite(img)) or np.any(img < 0):
            raise ValueError("intensity must be finite and non-negative")
        if not self.pixel_scale > 0:
            raise ValueError("pixel_scale must be positive")
        if self.immersion_index < 1:
            raise ValueError("immersion_index must be at least 1")
        if not 0 < self.na_max <= self.immersion_index:
            raise ValueError(f"na_max must lie in (0, {self.immersion_index}] for immersion "
                             f"index {self.immersion_index}")
        object.__setattr__(self, "intensity", img)
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def theta_max(self) -> float:
        """Largest captured polar angle in degrees."""
        return math.degrees(math.asin(self.na_max / self.immersion_index))


@dataclass(frozen=True, eq=False)
class AngularProfile:
    """Azimuthally averaged radiance versus polar angle.

    ``intensity`` is power per solid angle (arbitrary units) per bin;
    ``n_pixels`` counts the BFP pixels behind each bin, zero where the value
    was interpolated from neighbours.
    """

    theta_bin_edges: np.ndarray
    intensity: np.ndarray
    na_max: float
    apodization: bool = True
    immersion_index: float = 1.0
    n_pixels: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = np.asarray(self.theta_bin_edges, dtype=float)
        vals = np.asarray(self.intensity, dtype=float)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("theta_bin_edges must be strictly increasing")
        if len(vals) != len(edges) - 1:
            raise ValueError("need len(intensity) == len(theta_bin_edges) - 1")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("intensity must be finite and non-negative")
        if not 0 < self.na_max <= self.immersion_index:
            raise ValueError("na_max must lie in (0, immersion_index]")
        theta_max = math.degrees(math.asin(self.na_max / self.immersion_index))
        if edges[0] < 0 or abs(edges[-1] - theta_max) > 1e-9 * max(theta_max, 1.0):
            raise ValueError(f"theta edges must span [0, {theta_max:.9g}] degrees")
        object.__setattr__(self, "theta_bin_edges", edges)
        object.__setattr__(self, "intensity", vals)
        if self.n_pixels is not None:
            object.__setattr__(self, "n_pixels", np.asarray(self.n_pixels, dtype=np.int64))

    @property
    def theta_centers(self) -> np.ndarray:
        return 0.5 * (self.theta_bin_edges[1:] + self.theta_bin_edges[:-1])

    @classmethod
    def from_function(cls, radiance, na_max: float, n_theta_bins: int = 90,
                      immersion_index: float = 1.0) -> "AngularProfile":
        """Profile sampled from ``radiance(theta_deg)`` at the bin centres."""
        theta_max = math.degrees(math.asin(na_max / immersion_index))
        edges = np.linspace(0.0, theta_max, n_theta_bins + 1)
        vals = np.asarray(radiance(0.5 * (edges[1:] + edges[:-1])), dtype=float)
        return cls(edges, np.broadcast_to(vals, (n_theta_bins,)).copy(), na_max,
                   apodization=False, immersion_index=immersion_index)


def bfp_to_angular(img: BFPImage, n_theta_bins: int = 90, apodization: bool = True) -> AngularProfile:
    """Azimuthal mean of the BFP radiance in equal-width polar-angle bins.

    Pixels beyond ``na_max`` are dropped. Bins that receive no pixel centre
    (typical near the axis) are filled by linear interpolation in angle.
    """
    if n_theta_bins < 4:
        raise ValueError("n_theta_bins must be at least 4")
    rows, cols = img.intensity.shape
    r0, c0 = img.center
    if not (-0.5 <= r0 <= rows - 0.5 and -0.5 <= c0 <= cols - 0.5):
        raise ValueError(f"center {img.center} lies outside the {rows}x{cols} image")

    rr, cc = np.indices(img.intensity.shape, dtype=float)
    na = np.hypot(rr - r0, cc - c0) * img.pixel_scale
    inside = na <= img.na_max
    theta = np.degrees(np.arcsin(na[inside] / img.immersion_index))
    vals = img.intensity[inside]
    if apodization:
        vals = vals * np.cos(np.radians(theta))

    edges = np.linspace(0.0, img.theta_max, n_theta_bins + 1)
    idx = np.minimum(np.searchsorted(edges, theta, side="right") - 1, n_theta_bins - 1)
    n_pix = np.bincount(idx, minlength=n_theta_bins)
    sums = np.bincount(idx, weights=vals, minlength=n_theta_bins)
    filled = n_pix > 0
    if not filled.any():
        raise ValueError("no pixel falls inside na_max; check pixel_scale and center")
    centers = 0.5 * (edges[1:] + edges[:-1])
    profile = np.zeros(n_theta_bins)
    profile[filled] = sums[filled] / n_pix[filled]
    profile[~filled] = np.interp(centers[~filled], centers[filled], profile[filled])
    return AngularProfile(edges, profile, img.na_max, apodization, img.immersion_index, n_pix,
                          {"pixel_scale": img.pixel_scale, "center": list(img.center)})


def _shell_weights(profile: AngularProfile, theta_cut: float) -> np.ndarray:
    """Power in each bin below ``theta_cut`` (radians), ``I * (cos lo - cos hi)``."""
    edges = np.radians(profile.theta_bin_edges)
    hi = np.minimum(edges[1:], theta_cut)
    lo = np.minimum(edges[:-1], theta_cut)
    return profile.intensity * (np.cos(lo) - np.cos(hi))


def collection_efficiency(profile: AngularProfile, na: float) -> float:
    """Fraction of the power captured within ``na_max`` that falls inside ``na``.

    Integrates ``I(theta) sin(theta)`` exactly over each bin, with the bin
    containing ``asin(na / n)`` counted in part.
    """
    if not na > 0:
        raise ValueError("na must be positive")
    if na > profile.na_max * (1 + 1e-12):
        raise ValueError(f"na {na} exceeds the captured aperture na_max={profile.na_max}; "
                         "power beyond it was never imaged")
    total = _shell_weights(profile, math.inf).sum()
    if total <= 0:
        raise ValueError("profile carries no power")
    if na >= profile.na_max:
        return 1.0
    part = _shell_weights(profile, math.asin(na / profile.immersion_index)).sum()
    return float(min(part / total, 1.0))


def efficiency_curve(profile: AngularProfile, nas) -> np.ndarray:
    return np.array([collection_efficiency(profile, float(v)) for v in np.atleast_1d(nas)])
