"""Procedural voxel terrains for each skill family, plus occupancy queries and curriculum."""

import struct
from dataclasses import dataclass, field, replace

import numpy as np

FAMILIES = ("flat", "high_step", "gap", "stairs", "overhang", "discrete")

DEFAULT_CELL = 0.05
DEFAULT_ARENA = (12.0, 4.0, 2.0)  # meters, x (course) / y / z
DEFAULT_ORIGIN = (-2.0, -2.0, 0.0)
MAX_CELLS = 1 << 24  # rejection bound for runaway extents

MAGIC = b"VOXLOCOTERRAIN\x00"  # 15 bytes, +1 version byte = 16-byte header
FORMAT_VERSION = 1

# Difficulty -> obstacle magnitude endpoints per family.
HIGH_STEP_RANGE = (0.10, 0.70)   # step height, meters
GAP_RANGE = (0.10, 0.90)         # gap length
STAIR_RISE_RANGE = (0.05, 0.15)  # per-step rise
OVERHANG_RANGE = (0.35, 0.20)    # clearance, decreasing with difficulty
DISCRETE_RANGE = (0.05, 0.20)    # max block height

STAIR_RUN = 0.30
STAIR_COUNT = 5
GAP_FLOOR = 0.30  # raised walking floor so the gap has a drop


class TerrainError(ValueError):
    pass


@dataclass(frozen=True)
class TerrainSpec:
    family: str
    difficulty: float
    seed: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise TerrainError(f"unknown terrain family {self.family!r}")
        if not 0.0 <= self.difficulty <= 1.0:
            raise TerrainError(f"difficulty {self.difficulty} outside [0, 1]")


@dataclass
class VoxelTerrain:
    """Sparse occupancy over a bounded arena.

    Cells at world z < 0 are occupied by rule (bedrock); everything else
    outside the extents is open.
    """

    cell_size: float
    occupancy: np.ndarray  # uint8 (nx, ny, nz)
    origin: np.ndarray     # world position of cell (0, 0, 0)
    start_zone: tuple = ((-0.6, -0.6), (0.6, 0.6))  # world xy AABB
    goal_zone: tuple = ((2.4, -0.6), (3.6, 0.6))
    family: str = "flat"
    difficulty: float = 0.0
    obstacle_magnitude: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def extents(self):
        return self.occupancy.shape

    @property
    def upper(self):
        return self.origin + self.cell_size * np.asarray(self.occupancy.shape)

    def cell_of(self, p):
        return np.floor((np.asarray(p, dtype=float) - self.origin) / self.cell_size).astype(int)


def _zone_box(cx, cy, half=0.6):
    return ((cx - half, cy - half), (cx + half, cy + half))


def _cells(t, x0, x1, y0, y1, z0, z1):
    """Clip a world-frame box to cell index ranges (half-open)."""
    nx, ny, nz = t.occupancy.shape
    c = t.cell_size
    o = t.origin
    ix0 = max(0, int(np.floor((x0 - o[0]) / c)))
    ix1 = min(nx, int(np.round((x1 - o[0]) / c)))
    iy0 = max(0, int(np.floor((y0 - o[1]) / c)))
    iy1 = min(ny, int(np.round((y1 - o[1]) / c)))
    iz0 = max(0, int(np.floor((z0 - o[2]) / c)))
    iz1 = min(nz, int(np.round((z1 - o[2]) / c)))
    return ix0, ix1, iy0, iy1, iz0, iz1


def _fill(t, x0, x1, y0, y1, z0, z1, value=1):
    ix0, ix1, iy0, iy1, iz0, iz1 = _cells(t, x0, x1, y0, y1, z0, z1)
    t.occupancy[ix0:ix1, iy0:iy1, iz0:iz1] = value


def _snap(t, v):
    """Snap a length to the cell grid (nearest, at least one cell)."""
    return max(1, int(round(v / t.cell_size))) * t.cell_size


def generate(spec: TerrainSpec, cell_size=DEFAULT_CELL, arena=DEFAULT_ARENA,
             origin=DEFAULT_ORIGIN) -> VoxelTerrain:
    """Build the voxel terrain for one spec; bit-deterministic per seed."""
    extents = tuple(int(round(a / cell_size)) for a in arena)
    n_cells = extents[0] * extents[1] * extents[2]
    if n_cells > MAX_CELLS or min(extents) < 1:
        raise TerrainError(
            f"arena {arena} at cell {cell_size} needs {n_cells} cells "
            f"(bound {MAX_CELLS})")
    occ = np.zeros(extents, dtype=np.uint8)
    t = VoxelTerrain(cell_size=cell_size, occupancy=occ,
                     origin=np.asarray(origin, dtype=float),
                     family=spec.family, difficulty=spec.difficulty)
    rng = np.random.default_rng(np.uint64(spec.seed))
    d = spec.difficulty
    x_hi = t.upper[0]
    y_lo, y_hi = t.origin[1], t.upper[1]
    jitter = _snap(t, 0.05 + rng.uniform(0.0, 0.25)) if spec.family != "flat" else 0.0
    x_obs = 1.5 + jitter

    if spec.family == "flat":
        t.goal_zone = _zone_box(3.0, 0.0)
        t.obstacle_magnitude = 0.0

    elif spec.family == "high_step":
        h = _snap(t, HIGH_STEP_RANGE[0] + d * (HIGH_STEP_RANGE[1] - HIGH_STEP_RANGE[0]))
        _fill(t, x_obs, x_hi, y_lo, y_hi, 0.0, h)
        t.goal_zone = _zone_box(x_obs + 2.0, 0.0)
        t.obstacle_magnitude = h
        t.params = {"step_height": h, "step_x": x_obs}

    elif spec.family == "gap":
        gap = _snap(t, GAP_RANGE[0] + d * (GAP_RANGE[1] - GAP_RANGE[0]))
        floor = _snap(t, GAP_FLOOR)
        g0 = x_obs
        g1 = g0 + gap
        _fill(t, t.origin[0], g0, y_lo, y_hi, 0.0, floor)
        _fill(t, g1, x_hi, y_lo, y_hi, 0.0, floor)
        t.goal_zone = _zone_box(g1 + 2.0, 0.0)
        t.obstacle_magnitude = gap
        t.params = {"gap_length": gap, "gap_x": (g0, g1), "floor_height": floor}

    elif spec.family == "stairs":
        rise = _snap(t, STAIR_RISE_RANGE[0] + d * (STAIR_RISE_RANGE[1] - STAIR_RISE_RANGE[0]))
        for k in range(STAIR_COUNT):
            x0 = x_obs + k * STAIR_RUN
            _fill(t, x0, x_hi, y_lo, y_hi, 0.0, (k + 1) * rise)
        top_x = x_obs + STAIR_COUNT * STAIR_RUN
        t.goal_zone = _zone_box(top_x + 1.5, 0.0)
        t.obstacle_magnitude = rise
        t.params = {"stair_rise": rise, "stair_x": x_obs,
                    "stair_run": STAIR_RUN, "stair_count": STAIR_COUNT}

    elif spec.family == "overhang":
        clearance = _snap(t, OVERHANG_RANGE[0] + d * (OVERHANG_RANGE[1] - OVERHANG_RANGE[0]))
        depth = 1.2
        _fill(t, x_obs, x_obs + depth, y_lo, y_hi, clearance, clearance + 0.4)
        t.goal_zone = _zone_box(x_obs + depth + 1.5, 0.0)
        t.obstacle_magnitude = OVERHANG_RANGE[0] - clearance
        t.params = {"clearance": clearance, "overhang_x": x_obs, "overhang_depth": depth}

    elif spec.family == "discrete":
        h_max = DISCRETE_RANGE[0] + d * (DISCRETE_RANGE[1] - DISCRETE_RANGE[0])
        goal = _zone_box(7.0, 0.0)
        keep_out = [t.start_zone, goal]
        placed = 0
        while placed < 12:
            bx = rng.uniform(1.0, 6.0)
            by = rng.uniform(y_lo + 0.3, y_hi - 0.3)
            side = rng.uniform(0.3, 0.6)
            h = _snap(t, rng.uniform(DISCRETE_RANGE[0], h_max) if d > 0 else DISCRETE_RANGE[0])
            clear = all(not (lo[0] - side < bx < hi[0] + side and
                             lo[1] - side < by < hi[1] + side)
                        for lo, hi in keep_out)
            if clear:
                _fill(t, bx - side / 2, bx + side / 2, by - side / 2, by + side / 2, 0.0, h)
                placed += 1
        t.goal_zone = goal
        t.obstacle_magnitude = _snap(t, h_max)
        t.params = {"block_height_max": h_max}

    return t


def occupancy_at(t: VoxelTerrain, p) -> bool:
    """Occupancy of a world point; open boundary except bedrock below z = 0."""
    p = np.asarray(p, dtype=float)
    if p[2] < 0.0:
        return True
    i = t.cell_of(p)
    nx, ny, nz = t.occupancy.shape
    if not (0 <= i[0] < nx and 0 <= i[1] < ny and 0 <= i[2] < nz):
        return False
    return bool(t.occupancy[i[0], i[1], i[2]])


def surface_height(t: VoxelTerrain, xy) -> float:
    """Top of the highest occupied cell in the column at xy (bedrock = 0)."""
    x, y = float(xy[0]), float(xy[1])
    nx, ny, _ = t.occupancy.shape
    ix = int(np.floor((x - t.origin[0]) / t.cell_size))
    iy = int(np.floor((y - t.origin[1]) / t.cell_size))
    if not (0 <= ix < nx and 0 <= iy < ny):
        raise TerrainError(f"xy {(x, y)} outside terrain extents")
    col = t.occupancy[ix, iy]
    occ = np.nonzero(col)[0]
    if occ.size == 0:
        return float(t.origin[2]) if t.origin[2] > 0 else 0.0
    return float(t.origin[2] + (occ[-1] + 1) * t.cell_size)


def column_heights(t: VoxelTerrain) -> np.ndarray:
    """Surface height per column as an (nx, ny) array; used by the contact solver."""
    occ = t.occupancy
    nz = occ.shape[2]
    zs = np.arange(1, nz + 1, dtype=np.float64)
    top = np.max(np.where(occ > 0, zs[None, None, :], 0.0), axis=2)
    return t.origin[2] + top * t.cell_size


@dataclass(frozen=True)
class Curriculum:
    level: int = 0
    max_level: int = 9
    promote_rate: float = 0.8
    demote_rate: float = 0.4
    window: int = 50
    history: tuple = ()

    @property
    def difficulty(self):
        return self.level / max(1, self.max_level)


def curriculum_update(c: Curriculum, episode_success: bool) -> Curriculum:
    """Promote/demote by at most one level once the trailing window fills."""
    hist = (c.history + (bool(episode_success),))[-c.window:]
    if len(hist) < c.window:
        return replace(c, history=hist)
    rate = sum(hist) / len(hist)
    if rate >= c.promote_rate and c.level < c.max_level:
        return replace(c, level=c.level + 1, history=())
    if rate <= c.demote_rate and c.level > 0:
        return replace(c, level=c.level - 1, history=())
    return replace(c, history=hist)


def save_terrain(t: VoxelTerrain, path):
    nx, ny, nz = t.occupancy.shape
    header = MAGIC + struct.pack("<B", FORMAT_VERSION)
    meta = struct.pack("<IIIf3f", nx, ny, nz, t.cell_size, *t.origin)
    bits = np.packbits(t.occupancy.flatten(order="F"), bitorder="little")
    with open(path, "wb") as f:
        f.write(header)
        f.write(meta)
        f.write(bits.tobytes())


def load_terrain(path) -> VoxelTerrain:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:15] != MAGIC or blob[15] != FORMAT_VERSION:
        raise TerrainError("bad terrain file header")
    nx, ny, nz, cell, ox, oy, oz = struct.unpack_from("<IIIf3f", blob, 16)
    n = nx * ny * nz
    bits = np.frombuffer(blob, dtype=np.uint8, offset=16 + struct.calcsize("<IIIf3f"))
    occ = np.unpackbits(bits, count=n, bitorder="little").astype(np.uint8)
    occ = occ.reshape((nx, ny, nz), order="F")
    return VoxelTerrain(cell_size=cell, occupancy=np.ascontiguousarray(occ),
                        origin=np.array([ox, oy, oz]))
