"""Depth sensing over voxel terrain: front camera, five-face cube map, foot probes, corruption."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import geom
from ._kernels import occupied_aabb, raycast_batch_kernel
from .terrain import VoxelTerrain

MIN_RANGE = 0.05
MAX_RANGE = 4.0
FRONT_W, FRONT_H = 48, 32
FACE_RES = 16
FOOT_PROBE_RANGE = 0.5
FACE_ORDER = ("front", "upward", "downward", "left", "right")

# Per-face (forward, image-right, image-up) bases in the body frame.
_FACE_BASES = {
    "front": ((1, 0, 0), (0, -1, 0), (0, 0, 1)),
    "upward": ((0, 0, 1), (0, -1, 0), (1, 0, 0)),
    "downward": ((0, 0, -1), (0, -1, 0), (-1, 0, 0)),
    "left": ((0, 1, 0), (-1, 0, 0), (0, 0, 1)),
    "right": ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
}

# World-frame probe directions per foot: down, +x, -x, +y, -y.
FOOT_PROBE_DIRS = np.array([
    [0.0, 0.0, -1.0],
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
])


@dataclass
class DepthImage:
    data: np.ndarray  # (height, width) float32 meters
    max_range: float = MAX_RANGE
    min_range: float = MIN_RANGE

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]


@dataclass
class CubeMap:
    faces: np.ndarray  # (5, res, res) float32, FACE_ORDER
    max_range: float = MAX_RANGE

    def face(self, name):
        return self.faces[FACE_ORDER.index(name)]


@dataclass
class FootProximity:
    samples: np.ndarray  # (4, K) float32 clearances
    probe_range: float = FOOT_PROBE_RANGE


@dataclass
class PrivilegedVision:
    cube: CubeMap
    foot: FootProximity

    def flat(self):
        """Concatenated [cube faces, foot probes] vector (5*res*res + 4K)."""
        return np.concatenate([self.cube.faces.ravel(), self.foot.samples.ravel()])


@dataclass
class CameraModel:
    translation: np.ndarray = field(default_factory=lambda: np.array([0.25, 0.0, 0.05]))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    hfov: float = math.radians(87.0)
    vfov: float = math.radians(58.0)
    width: int = FRONT_W
    height: int = FRONT_H
    max_range: float = MAX_RANGE
    min_range: float = MIN_RANGE
    z_offset: float = 0.0  # mount perturbation, meters in [0, 0.2]

    def ray_grid(self):
        """Unit ray directions per texel center in the camera frame (+x forward)."""
        u = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0) * math.tan(self.hfov / 2)
        v = (1.0 - 2.0 * (np.arange(self.height) + 0.5) / self.height) * math.tan(self.vfov / 2)
        uu, vv = np.meshgrid(u, v)
        dirs = np.stack([np.ones_like(uu), -uu, vv], axis=-1)  # right = -y, up = +z
        return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)


def _terrain_aabb(t: VoxelTerrain):
    cached = getattr(t, "_occ_aabb", None)
    if cached is None:
        cached = occupied_aabb(t.occupancy)
        if cached is None:
            cached = (np.zeros(3, dtype=np.int64), np.full(3, -1, dtype=np.int64), False)
        else:
            cached = (cached[0], cached[1], True)
        t._occ_aabb = cached
    return cached


def raycast_batch(t: VoxelTerrain, origins, dirs, max_range=MAX_RANGE):
    """Vector of first-hit distances; misses clamp to max_range."""
    lo, hi, has_occ = _terrain_aabb(t)
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    out = np.empty(origins.shape[0], dtype=np.float64)
    raycast_batch_kernel(t.occupancy, t.origin[0], t.origin[1], t.origin[2],
                         t.cell_size, lo, hi, has_occ, origins, dirs,
                         float(max_range), out)
    return out


def raycast(t: VoxelTerrain, origin, direction, max_range=MAX_RANGE) -> float:
    """Distance to the first occupied-cell boundary along a unit ray."""
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
        raise ValueError("raycast direction must be a unit vector")
    return float(raycast_batch(t, np.asarray(origin, dtype=np.float64)[None, :],
                               direction[None, :], max_range)[0])


def render_front(t: VoxelTerrain, cam: CameraModel, body_pos, body_quat) -> DepthImage:
    """Pinhole depth image from the body-mounted front camera."""
    R = geom.quat_to_matrix(body_quat) @ cam.rotation
    offset = cam.translation + np.array([0.0, 0.0, cam.z_offset])
    origin = np.asarray(body_pos, dtype=np.float64) + geom.quat_rotate(body_quat, offset)
    dirs = cam.ray_grid().reshape(-1, 3) @ R.T
    origins = np.broadcast_to(origin, dirs.shape)
    dist = raycast_batch(t, origins, dirs, cam.max_range)
    img = np.clip(dist, cam.min_range, cam.max_range).reshape(cam.height, cam.width)
    return DepthImage(img.astype(np.float32), cam.max_range, cam.min_range)


def _face_dirs(res):
    u = 2.0 * (np.arange(res) + 0.5) / res - 1.0
    v = 1.0 - 2.0 * (np.arange(res) + 0.5) / res
    uu, vv = np.meshgrid(u, v)
    return uu, vv


_FACE_DIR_CACHE = {}


def _cube_dirs_body(res):
    """Unit ray directions for all five faces in the body frame, (5*res*res, 3)."""
    if res not in _FACE_DIR_CACHE:
        uu, vv = _face_dirs(res)
        all_dirs = []
        for name in FACE_ORDER:
            f, r, up = (np.array(b, dtype=np.float64) for b in _FACE_BASES[name])
            d = f[None, None] + uu[..., None] * r[None, None] + vv[..., None] * up[None, None]
            d /= np.linalg.norm(d, axis=-1, keepdims=True)
            all_dirs.append(d.reshape(-1, 3))
        _FACE_DIR_CACHE[res] = np.concatenate(all_dirs, axis=0)
    return _FACE_DIR_CACHE[res]


def render_cubemap(t: VoxelTerrain, body_pos, body_quat, res=FACE_RES,
                   max_range=MAX_RANGE, min_range=MIN_RANGE) -> CubeMap:
    """Five egocentric 90-degree depth faces sharing the body-frame origin (no rear)."""
    R = geom.quat_to_matrix(body_quat)
    dirs = _cube_dirs_body(res) @ R.T
    origins = np.broadcast_to(np.asarray(body_pos, dtype=np.float64), dirs.shape)
    dist = raycast_batch(t, origins, dirs, max_range)
    faces = np.clip(dist, min_range, max_range).reshape(5, res, res)
    return CubeMap(faces.astype(np.float32), max_range)


def probe_feet(t: VoxelTerrain, foot_positions, probe_range=FOOT_PROBE_RANGE) -> FootProximity:
    """Short clearance raycasts (down, +-x, +-y) around each of the four feet."""
    feet = np.asarray(foot_positions, dtype=np.float64).reshape(4, 3)
    if not np.all(np.isfinite(feet)):
        raise ValueError("foot positions must be finite")
    k = FOOT_PROBE_DIRS.shape[0]
    origins = np.repeat(feet, k, axis=0)
    dirs = np.tile(FOOT_PROBE_DIRS, (4, 1))
    dist = raycast_batch(t, origins, dirs, probe_range)
    return FootProximity(dist.reshape(4, k).astype(np.float32), probe_range)


def patterned_rects(shape, seed):
    """Seeded occlusion rectangles whose union covers 10-60% of the image."""
    h, w = shape
    rng = np.random.default_rng(np.uint64(seed))
    n_rect = int(rng.integers(1, 4))
    for _ in range(200):
        rects = []
        mask = np.zeros(shape, dtype=bool)
        for _ in range(n_rect):
            rw = int(rng.integers(max(1, w // 6), max(2, (2 * w) // 3)))
            rh = int(rng.integers(max(1, h // 6), max(2, (2 * h) // 3)))
            x0 = int(rng.integers(0, w - rw + 1))
            y0 = int(rng.integers(0, h - rh + 1))
            rects.append((y0, x0, rh, rw))
            mask[y0:y0 + rh, x0:x0 + rw] = True
        frac = mask.mean()
        if 0.10 <= frac <= 0.60:
            return rects, mask
    # deterministic fallback: one rectangle of ~30% area
    rh, rw = max(1, int(h * 0.55)), max(1, int(w * 0.55))
    mask = np.zeros(shape, dtype=bool)
    mask[:rh, :rw] = True
    return [(0, 0, rh, rw)], mask


def corrupt(d: DepthImage, mode: str, seed: int = 0) -> DepthImage:
    """Sensor corruption: none (identity), patterned occlusion, or fully blind."""
    if mode == "none":
        return DepthImage(d.data.copy(), d.max_range, d.min_range)
    if mode == "blind":
        return DepthImage(np.full_like(d.data, d.min_range), d.max_range, d.min_range)
    if mode != "patterned":
        raise ValueError(f"unknown corruption mode {mode!r}")
    rng = np.random.default_rng(np.uint64(seed))
    img = d.data.astype(np.float64) + rng.normal(0.0, 0.02, size=d.data.shape)
    img = np.clip(img, d.min_range, d.max_range)
    salt = rng.random(d.data.shape) < 0.01
    img[salt] = d.max_range
    _, mask = patterned_rects(d.data.shape, seed)
    img[mask] = d.min_range
    return DepthImage(img.astype(np.float32), d.max_range, d.min_range)


def _rect_solid_angle(x0, x1, y0, y1):
    """Solid angle of the rectangle [x0,x1]x[y0,y1] on the z=1 plane."""
    def corner(x, y):
        return math.atan2(x * y, math.sqrt(1.0 + x * x + y * y))

    return corner(x1, y1) - corner(x0, y1) - corner(x1, y0) + corner(x0, y0)


def solid_angle_stats(face_resolution: int):
    """(min, max, max/min) of per-texel solid angles on one 90-degree cube face."""
    if face_resolution < 2:
        raise ValueError("face resolution must be >= 2")
    edges = np.linspace(-1.0, 1.0, face_resolution + 1)
    omega = np.empty((face_resolution, face_resolution))
    for i in range(face_resolution):
        for j in range(face_resolution):
            omega[i, j] = _rect_solid_angle(edges[j], edges[j + 1], edges[i], edges[i + 1])
    return float(omega.min()), float(omega.max()), float(omega.max() / omega.min())


def face_solid_angle_total(face_resolution: int) -> float:
    edges = np.linspace(-1.0, 1.0, face_resolution + 1)
    total = 0.0
    for i in range(face_resolution):
        for j in range(face_resolution):
            total += _rect_solid_angle(edges[j], edges[j + 1], edges[i], edges[i + 1])
    return total


def save_pgm(d: DepthImage, path):
    """16-bit PGM debug dump, depth in millimeters."""
    scaled = np.clip(d.data * 1000.0, 0, 65535).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{d.width} {d.height}\n65535\n".encode())
        f.write(scaled.tobytes())
