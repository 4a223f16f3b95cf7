"""Ego-centric observations: the 4-layer ROI grid and the ego speed."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .envsim.geometry import wrap_degrees

OCCUPANCY, REL_SPEED, REL_HEADING, SEMANTIC = range(4)
N_LAYERS = 4


@dataclass(frozen=True)
class GridSpec:
    """ROI raster layout. Row 0 is the far front edge, column 0 the far left edge."""

    rows: int = 40
    cols: int = 30
    cell: float = 0.5
    rear_fraction: float = 0.25

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0 or self.cell <= 0:
            raise ValueError("grid dimensions must be positive")
        if not 0.0 <= self.rear_fraction < 1.0:
            raise ValueError("rear_fraction must be in [0, 1)")

    @property
    def length(self) -> float:
        return self.rows * self.cell

    @property
    def width(self) -> float:
        return self.cols * self.cell

    @property
    def front(self) -> float:
        return self.length * (1.0 - self.rear_fraction)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.rows, self.cols, N_LAYERS)

    def cell_offsets(self) -> np.ndarray:
        """Ego-frame (forward, left) coordinates of every cell centre, [rows*cols, 2]."""
        fwd = self.front - (np.arange(self.rows) + 0.5) * self.cell
        left = self.width / 2 - (np.arange(self.cols) + 0.5) * self.cell
        f, l = np.meshgrid(fwd, left, indexing="ij")
        return np.stack([f.ravel(), l.ravel()], axis=1)

    def to_dict(self) -> dict:
        return asdict(self)


class GridEncoder:
    """Rasterises an ``UrbanEnv`` state around the ego vehicle.

    Cells are aligned with the ego heading. Relative speed is the closing speed
    along the ego axis (``v_ego - v_ped . heading``); relative heading is the
    pedestrian heading minus the ego heading in degrees, wrapped to [-180, 180).
    When several pedestrians share a cell the nearest one wins.
    """

    def __init__(self, spec: GridSpec = GridSpec()):
        self.spec = spec
        self._offsets = spec.cell_offsets()

    def semantic(self, raster, position, heading) -> np.ndarray:
        c, s = np.cos(heading), np.sin(heading)
        f, l = self._offsets[:, 0], self._offsets[:, 1]
        world = np.stack([position[0] + f * c - l * s, position[1] + f * s + l * c], axis=1)
        return raster.lookup(world).reshape(self.spec.rows, self.spec.cols).astype(float)

    def encode(self, env) -> np.ndarray:
        st = env.state
        return self.encode_parts(env.raster, st.ego.position, st.ego.heading, st.ego.speed,
                                 st.crowd.pos, st.crowd.velocity, st.crowd.heading)

    def encode_parts(self, raster, ego_pos, ego_heading, ego_speed, ped_pos, ped_vel, ped_heading) -> np.ndarray:
        sp = self.spec
        grid = np.zeros(sp.shape)
        grid[:, :, SEMANTIC] = self.semantic(raster, ego_pos, ego_heading)
        if len(ped_pos) == 0:
            return grid
        c, s = np.cos(ego_heading), np.sin(ego_heading)
        rel = np.asarray(ped_pos) - ego_pos
        fwd = rel[:, 0] * c + rel[:, 1] * s
        left = -rel[:, 0] * s + rel[:, 1] * c
        row = np.floor((sp.front - fwd) / sp.cell).astype(int)
        col = np.floor((sp.width / 2 - left) / sp.cell).astype(int)
        inside = (row >= 0) & (row < sp.rows) & (col >= 0) & (col < sp.cols)
        if not np.any(inside):
            return grid
        idx = np.flatnonzero(inside)
        idx = idx[np.argsort(np.hypot(fwd[idx], left[idx]), kind="stable")]
        _, first = np.unique(row[idx] * sp.cols + col[idx], return_index=True)
        idx = idx[first]  # nearest pedestrian per cell
        v_along = ped_vel[idx, 0] * c + ped_vel[idx, 1] * s
        r, k = row[idx], col[idx]
        grid[r, k, OCCUPANCY] = 1.0
        grid[r, k, REL_SPEED] = ego_speed - v_along
        grid[r, k, REL_HEADING] = wrap_degrees(np.rad2deg(ped_heading[idx] - ego_heading))
        return grid


def encode_grid(env, spec: GridSpec = GridSpec()) -> np.ndarray:
    return GridEncoder(spec).encode(env)


def encode_ego(env_or_state) -> np.ndarray:
    """Ego observation: a length-1 vector holding the current speed."""
    st = getattr(env_or_state, "state", env_or_state)
    return np.array([st.ego.speed])


def sparse_grid(grid: np.ndarray) -> list[list[float]]:
    """Occupied cells as [row, col, rel_speed, rel_heading] for compact traces."""
    r, c = np.nonzero(grid[:, :, OCCUPANCY])
    return [[int(i), int(j), float(grid[i, j, REL_SPEED]), float(grid[i, j, REL_HEADING])] for i, j in zip(r, c)]
