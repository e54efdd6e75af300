"""Top-down RGB-D rendering of cloth meshes through a fixed pinhole camera."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import CameraIntrinsics, RigidTransform
from .mesh import LAYER_THICKNESS, WORKSPACE_HALF, ClothMesh, cloth_color

BACKGROUND_RGB = np.zeros(3)          # black table; cloth colors are far from it
CLOTH_COLOR_MARGIN = 0.05             # min distance of any cloth color channel to bg
DEPTH_QUANTUM = 1e-4                  # depths snap to 0.1 mm so exports round-trip


@dataclass(frozen=True)
class SimCamera:
    """Overhead camera: optical axis straight down at the table center.

    Camera frame: x right (world +x), y toward image rows (world -y),
    z along the view direction (down), so depth = height above the table
    subtracted from the mount height.
    """

    intrinsics: CameraIntrinsics
    height: float = 1.0

    def base_from_camera(self) -> RigidTransform:
        return RigidTransform(np.diag([1.0, -1.0, -1.0]),
                              np.array([0.0, 0.0, self.height]))

    def world_to_pixel(self, x: float, y: float, z_world: float = 0.0) -> tuple[float, float]:
        """World table point -> (u, v) pixel (u = column, v = row)."""
        z_c = self.height - z_world
        u = self.intrinsics.cx + self.intrinsics.fx * x / z_c
        v = self.intrinsics.cy - self.intrinsics.fy * y / z_c
        return u, v

    @property
    def table_depth(self) -> float:
        return self.height


def default_camera(resolution: int = 224, height: float = 1.0) -> SimCamera:
    # Focal length chosen so the 1 m x 1 m workspace fills the image exactly.
    f = resolution / (2 * WORKSPACE_HALF)
    c = resolution / 2.0
    return SimCamera(CameraIntrinsics(f, f, c, c, resolution, resolution), height)


@dataclass
class Observation:
    """RGB-D image: rgb in [0,1] (quantized to the uint8 grid), depth in meters."""

    rgb: np.ndarray          # [H, W, 3]
    depth: np.ndarray        # [H, W]
    cloth_mask: np.ndarray   # [H, W] bool, renderer ground truth
    camera: SimCamera

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    def image4(self) -> np.ndarray:
        return np.concatenate([self.rgb, self.depth[..., None]], axis=-1)

    def copy(self) -> "Observation":
        return Observation(self.rgb.copy(), self.depth.copy(),
                           self.cloth_mask.copy(), self.camera)


def render(mesh: ClothMesh, camera: SimCamera) -> Observation:
    """Rasterize the mesh: each particle splats a disk at its projected pixel;
    the z-buffer keeps the top layer. Depth = mount height - layers * thickness."""
    h = camera.intrinsics.height
    w = camera.intrinsics.width
    rgb = np.broadcast_to(BACKGROUND_RGB, (h, w, 3)).copy()
    depth = np.full((h, w), camera.table_depth)
    mask = np.zeros((h, w), dtype=bool)

    if mesh.active.any():
        color = cloth_color(mesh.kind)
        # Splat radius: ~3/4 cell spacing so neighboring disks overlap.
        scale_px = camera.intrinsics.fx / camera.height
        r_px = max(1, int(math.ceil(0.75 * mesh.spacing * scale_px)))
        offs = np.arange(-r_px, r_px + 1)
        dv, du = np.meshgrid(offs, offs, indexing="ij")
        disk = (du * du + dv * dv) <= r_px * r_px

        rr, cc = np.nonzero(mesh.active)
        order = np.argsort(mesh.layers[rr, cc], kind="stable")  # top layers last
        for idx in order:
            r, c = rr[idx], cc[idx]
            x, y = mesh.positions[r, c]
            z_w = mesh.layers[r, c] * LAYER_THICKNESS
            z_c = round((camera.height - z_w) / DEPTH_QUANTUM) * DEPTH_QUANTUM
            u, v = camera.world_to_pixel(x, y, z_w)
            ui, vi = int(round(u)), int(round(v))
            u0, u1 = max(0, ui - r_px), min(w, ui + r_px + 1)
            v0, v1 = max(0, vi - r_px), min(h, vi + r_px + 1)
            if u0 >= u1 or v0 >= v1:
                continue
            sub = disk[v0 - (vi - r_px):v1 - (vi - r_px),
                       u0 - (ui - r_px):u1 - (ui - r_px)]
            tile = depth[v0:v1, u0:u1]
            hit = sub & (z_c <= tile)
            tile[hit] = z_c
            rgb[v0:v1, u0:u1][hit] = color
            mask[v0:v1, u0:u1][hit] = True

    return Observation(rgb, depth, mask, camera)
