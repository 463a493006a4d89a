"""Deterministic synthetic shapes and pseudo-anomaly injection.

Shapes are sampled antipodally (every generated point is paired with its
mirror through the origin) so the sample centroid is exactly zero and unit
normalization leaves analytic surfaces at their nominal radius. Anomalies
are smooth normal-direction offsets: one amplitude drawn per region from
[lo, hi], shaped by a raised-cosine falloff that is 1 at the region center
and 0 at its boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, normalize_cloud
from .errors import InvalidArgument

SHAPE_KINDS = ("sphere", "cylinder", "torus", "superellipsoid")


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    n: int = 4096
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise InvalidArgument(f"kind must be one of {SHAPE_KINDS}")
        if self.n < 100:
            raise InvalidArgument("n must be >= 100")
        if self.sigma < 0:
            raise InvalidArgument("sigma must be >= 0")


@dataclass(frozen=True)
class AnomalySpec:
    region_radius: float = 0.2
    amplitude_lo: float = 0.04
    amplitude_hi: float = 0.10
    sign: str = "bump"  # bump | dent | random
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.region_radius < 1.0:
            raise InvalidArgument("region_radius must be in (0, 1)")
        if not 0.0 <= self.amplitude_lo <= self.amplitude_hi:
            raise InvalidArgument("need 0 <= amplitude_lo <= amplitude_hi")
        if self.sign not in ("bump", "dent", "random"):
            raise InvalidArgument("sign must be bump, dent or random")


# Fixed shape constants, chosen so each class mixes flat, convex and
# saddle regions at distinct distances from the center (the sphere is the
# homogeneous control).
_CYL_RADIUS = 0.6
_CYL_HALF_HEIGHT = 1.1
_TORUS_R = 0.75
_TORUS_TUBE = 0.3
# The tube fattens and thins four times around the ring (keeping the
# surface antipodally symmetric). Thin sections carry dome-like curvature
# that a global bank confuses with bump anomalies on fat sections, and
# the fat/thin wedges sit at distinct centroid radii so rank matching
# keeps them apart.
_TORUS_TUBE_VAR = 0.0


def torus_tube_radius(ring_angle):
    """Tube radius at a ring angle; the torus implicit surface is
    (sqrt(x^2+y^2) - R)^2 + z^2 = torus_tube_radius(atan2(y, x))^2."""
    return _TORUS_TUBE + _TORUS_TUBE_VAR * np.cos(4.0 * np.asarray(ring_angle))
# Drum: circular cross-section swept with a boxy profile, so the wall is
# cylinder-like, the caps nearly flat, and the rounded rim rings sit only
# at the two ends.
_SUPER_PROFILE_EXP = 0.22
_SUPER_RADIUS = 0.5
_SUPER_HALF_HEIGHT = 1.0

# Cylinder and superellipsoid carry a fixed equatorial ring of dome studs:
# normal-by-design surface details whose local geometry matches what a
# bump anomaly elsewhere looks like. A global feature bank confuses the
# two; spatially separated banks do not. Stud amplitudes span the anomaly
# amplitude range; antipodal pairs share one amplitude so the exact-zero
# centroid of the sampler survives.
_STUD_AMPLITUDES = (0.055, 0.065, 0.075, 0.085, 0.055, 0.065, 0.075, 0.085)


def _stud_ring(radius_xy: float, phase: float, stud_radius: float = 0.22) -> tuple:
    angles = phase + np.linspace(0.0, np.pi, 8, endpoint=False)
    studs = []
    for angle, amplitude in zip(angles, _STUD_AMPLITUDES):
        for sign in (1.0, -1.0):
            studs.append(
                (
                    (
                        sign * radius_xy * np.cos(angle),
                        sign * radius_xy * np.sin(angle),
                        0.0,
                    ),
                    stud_radius,
                    amplitude,
                )
            )
    return tuple(studs)


_DETAILS = {
    "cylinder": _stud_ring(_CYL_RADIUS, 0.0),
    "superellipsoid": _stud_ring(_SUPER_RADIUS, np.pi / 6),
}


def _apply_details(pts: np.ndarray, nrm: np.ndarray, details) -> np.ndarray:
    for center, radius, amplitude in details:
        d = np.linalg.norm(pts - np.asarray(center), axis=1)
        m = d < radius
        falloff = 0.5 * (1.0 + np.cos(np.pi * d[m] / radius))
        pts[m] += (amplitude * falloff)[:, None] * nrm[m]
    return pts


# Circumferential V-grooves (|z| center, half-width, depth). The triangular
# profile leaves crisp crease circles, mirrored across the equator.
_GROOVES = {"superellipsoid": ((0.78, 0.06, 0.05),)}


def _apply_grooves(pts: np.ndarray, nrm: np.ndarray, grooves) -> np.ndarray:
    for z_center, width, depth in grooves:
        offset = np.abs(np.abs(pts[:, 2]) - z_center)
        m = offset < width
        pts[m] -= (depth * (1.0 - offset[m] / width))[:, None] * nrm[m]
    return pts


def _sphere(rng, half):
    v = rng.normal(size=(half, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v, v.copy()


def _cylinder(rng, half):
    # Lateral wall plus caps, proportional to surface area.
    lateral_area = 2 * np.pi * _CYL_RADIUS * 2 * _CYL_HALF_HEIGHT
    cap_area = 2 * np.pi * _CYL_RADIUS**2
    n_lat = int(round(half * lateral_area / (lateral_area + cap_area)))
    t = rng.uniform(0, 2 * np.pi, size=half)
    pts = np.empty((half, 3))
    nrm = np.empty((half, 3))
    z = rng.uniform(-_CYL_HALF_HEIGHT, _CYL_HALF_HEIGHT, size=n_lat)
    pts[:n_lat] = np.c_[_CYL_RADIUS * np.cos(t[:n_lat]), _CYL_RADIUS * np.sin(t[:n_lat]), z]
    nrm[:n_lat] = np.c_[np.cos(t[:n_lat]), np.sin(t[:n_lat]), np.zeros(n_lat)]
    n_cap = half - n_lat
    r = _CYL_RADIUS * np.sqrt(rng.uniform(size=n_cap))
    side = np.where(rng.uniform(size=n_cap) < 0.5, 1.0, -1.0)
    pts[n_lat:] = np.c_[r * np.cos(t[n_lat:]), r * np.sin(t[n_lat:]), side * _CYL_HALF_HEIGHT]
    nrm[n_lat:] = np.c_[np.zeros(n_cap), np.zeros(n_cap), side]
    return pts, nrm


def _torus(rng, half):
    # Area-uniform (u, v) pairs via rejection: the element scales like
    # (R + r(u) cos v) * r(u), else the inner ring and thin sections are
    # oversampled.
    rmax = _TORUS_TUBE + _TORUS_TUBE_VAR
    bound = (_TORUS_R + rmax) * rmax
    u = np.empty(0)
    v = np.empty(0)
    while len(u) < half:
        cu = rng.uniform(0, 2 * np.pi, size=2 * half)
        cv = rng.uniform(0, 2 * np.pi, size=2 * half)
        r_u = torus_tube_radius(cu)
        accept = rng.uniform(size=2 * half) <= (
            (_TORUS_R + r_u * np.cos(cv)) * r_u / bound
        )
        u = np.concatenate([u, cu[accept]])
        v = np.concatenate([v, cv[accept]])
    u, v = u[:half], v[:half]
    cx = np.c_[np.cos(u), np.sin(u), np.zeros(half)]
    ring = _TORUS_R * cx
    # Cross-section direction; the exact normal tilts by O(r'/R), which the
    # feature pipeline re-estimates anyway.
    nrm = np.cos(v)[:, None] * cx
    nrm[:, 2] += np.sin(v)
    pts = ring + torus_tube_radius(u)[:, None] * nrm
    return pts, nrm


def _superellipsoid(rng, half):
    """Superellipse profile revolved around z, sampled uniformly by area.

    The profile (rho, z) = (a cos^e t, c sgn(sin t)|sin t|^e) is tabulated
    densely; points are drawn proportional to the surface-of-revolution
    area element rho * ds, which keeps the equator and rim evenly covered
    where the raw parametrization would starve them.
    """
    e = _SUPER_PROFILE_EXP
    a, c = _SUPER_RADIUS, _SUPER_HALF_HEIGHT

    def spow(x, p):
        return np.sign(x) * np.abs(x) ** p

    t = np.linspace(-np.pi / 2, np.pi / 2, 4096)
    rho_t = a * np.abs(np.cos(t)) ** e
    z_t = c * spow(np.sin(t), e)
    mid_rho = 0.5 * (rho_t[1:] + rho_t[:-1])
    seg = np.hypot(np.diff(rho_t), np.diff(z_t))
    weights = np.cumsum(mid_rho * seg)

    draw = rng.uniform(0.0, weights[-1], size=half)
    idx = np.searchsorted(weights, draw)
    frac = rng.uniform(size=half)
    rho = rho_t[idx] + frac * (rho_t[idx + 1] - rho_t[idx])
    z = z_t[idx] + frac * (z_t[idx + 1] - z_t[idx])
    theta = rng.uniform(0, 2 * np.pi, size=half)
    pts = np.c_[rho * np.cos(theta), rho * np.sin(theta), z]

    # Outward normal from grad f, f = ((x^2+y^2)/a^2)^(1/e) + |z/c|^(2/e).
    rr = np.maximum((pts[:, 0] ** 2 + pts[:, 1] ** 2) / a**2, 1e-300)
    radial = rr ** (1.0 / e - 1.0) / a**2
    grad = np.c_[
        pts[:, 0] * radial,
        pts[:, 1] * radial,
        spow(pts[:, 2] / c, 2.0 / e - 1.0) / c,
    ]
    lengths = np.linalg.norm(grad, axis=1, keepdims=True)
    lengths[lengths == 0] = 1.0
    return pts, grad / lengths


_GENERATORS = {
    "sphere": _sphere,
    "cylinder": _cylinder,
    "torus": _torus,
    "superellipsoid": _superellipsoid,
}


def make_shape(spec: SynthSpec) -> PointCloud:
    """Sample a surface, add Gaussian jitter, and unit-normalize.

    Deterministic per seed. With even n the antipodal pairing puts the
    centroid exactly at the origin, so sigma=0 surfaces keep their analytic
    radii after normalization.
    """
    rng = np.random.default_rng(spec.seed)
    half = (spec.n + 1) // 2
    pts, nrm = _GENERATORS[spec.kind](rng, half)
    pts = np.ascontiguousarray(np.concatenate([pts, -pts])[: spec.n])
    nrm = np.ascontiguousarray(np.concatenate([nrm, -nrm])[: spec.n])
    pts = _apply_details(pts, nrm, _DETAILS.get(spec.kind, ()))
    if spec.sigma > 0:
        pts = pts + rng.normal(scale=spec.sigma, size=pts.shape)
    lengths = np.linalg.norm(nrm, axis=1, keepdims=True)
    cloud = PointCloud(points=pts, normals=nrm / lengths, id=f"{spec.kind}-{spec.seed}")
    return normalize_cloud(cloud)


def inject_anomaly(cloud: PointCloud, spec: AnomalySpec) -> PointCloud:
    """Offset one seeded region along its normals; mask marks the region.

    The region is every point within region_radius of a randomly chosen
    seed point. A single amplitude is drawn from [lo, hi] and applied with
    a raised-cosine falloff; sign decides bump (outward) or dent (inward).
    """
    if cloud.normals is None:
        raise InvalidArgument("inject_anomaly needs normals")
    n = len(cloud)
    if n == 0:
        raise InvalidArgument("empty cloud")
    rng = np.random.default_rng(spec.seed)
    center_idx = int(rng.integers(n))
    center = cloud.points[center_idx]
    dist = np.linalg.norm(cloud.points - center, axis=1)
    mask = dist <= spec.region_radius
    if not np.any(mask):
        raise InvalidArgument("anomaly region is empty")

    amplitude = float(rng.uniform(spec.amplitude_lo, spec.amplitude_hi))
    if spec.sign == "dent":
        amplitude = -amplitude
    elif spec.sign == "random" and rng.uniform() < 0.5:
        amplitude = -amplitude

    falloff = 0.5 * (1.0 + np.cos(np.pi * dist[mask] / spec.region_radius))
    pts = cloud.points.copy()
    pts[mask] += (amplitude * falloff)[:, None] * cloud.normals[mask]
    if cloud.anomaly_mask is not None:
        mask = mask | cloud.anomaly_mask  # injections compose
    return PointCloud(points=pts, normals=cloud.normals, anomaly_mask=mask, id=cloud.id)
