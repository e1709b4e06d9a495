"""Synthetic video scenes with exact ground-truth warp grids.

A scene is a handful of elliptical body parts laid out in the source
frame, each carrying an affine colour ramp over its UV chart, moving
rigidly (translation, rotation about the image centre, isotropic scale)
over a static background. Because part colours are affine in canonical
coordinates and rendering is closed under bilinear interpolation, the
ground-truth grid reconstructs every driving foreground pixel from the
source frame to float32 precision: parts are painted with a small margin
beyond their labelled extent so interpolation near boundaries never
touches background pixels.

Frame 0 is the source and sits at the canonical pose; the motion of
frame k maps canonical coordinates into frame k, so the ground-truth
warp for frame k is simply its inverse.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..warp import WarpGrid, identity_grid
from .types import DEFAULT_NUM_PARTS, Frame, IuvMap, VideoSample

ATLAS_CHART = 32  # pixels per part chart in the texture atlas


@dataclass
class EllipsePart:
    part_id: int
    cx: float
    cy: float
    a: float          # semi-axis along theta, canonical pixels
    b: float
    theta: float      # radians
    base: np.ndarray  # (3,) colour at chart centre
    gu: np.ndarray    # (3,) colour gradient along u
    gv: np.ndarray    # (3,) colour gradient along v


@dataclass
class RigidMotion:
    tx: float = 0.0
    ty: float = 0.0
    rot: float = 0.0
    scale: float = 1.0

    def apply(self, qx, qy, cx, cy):
        """Canonical -> frame coordinates (rotation about (cx, cy))."""
        c, s = math.cos(self.rot), math.sin(self.rot)
        rx = self.scale * (c * (qx - cx) - s * (qy - cy)) + cx + self.tx
        ry = self.scale * (s * (qx - cx) + c * (qy - cy)) + cy + self.ty
        return rx, ry

    def invert(self, px, py, cx, cy):
        """Frame -> canonical coordinates."""
        c, s = math.cos(self.rot), math.sin(self.rot)
        ux = (px - self.tx - cx) / self.scale
        uy = (py - self.ty - cy) / self.scale
        qx = c * ux + s * uy + cx
        qy = -s * ux + c * uy + cy
        return qx, qy


@dataclass
class MotionSpec:
    """Bounds for the per-frame random-walk motion."""

    max_step_px: float = 1.5
    max_rot_step: float = 0.02
    max_scale_step: float = 0.01


@dataclass
class SyntheticScene:
    height: int
    width: int
    parts: list                      # EllipsePart
    background: np.ndarray           # (3,H,W) float32, static
    atlas: np.ndarray                # (3, CHART, CHART*len(parts)) float32
    margin: float = 3.0              # painted halo beyond the labelled part
    n_parts: int = DEFAULT_NUM_PARTS
    uv_noise: float = 0.0            # sigma of UV jitter on emitted maps
    motion: MotionSpec = field(default_factory=MotionSpec)

    @property
    def centre(self):
        return (self.width - 1) / 2.0, (self.height - 1) / 2.0


@dataclass
class SyntheticSequence:
    scene: SyntheticScene
    sample: VideoSample
    motions: list                    # RigidMotion per driving frame
    grids: list                      # ground-truth WarpGrid per driving frame
    masks: list                      # driving foreground per driving frame


def _chart_colours(part: EllipsePart, u, v):
    """Affine colour ramp; u/v may run beyond [0,1] inside the margin."""
    return (part.base[:, None] + np.outer(part.gu, u - 0.5)
            + np.outer(part.gv, v - 0.5))


def _paint_atlas(parts):
    n = len(parts)
    atlas = np.zeros((3, ATLAS_CHART, ATLAS_CHART * n), np.float32)
    lin = np.linspace(0.0, 1.0, ATLAS_CHART)
    uu, vv = np.meshgrid(lin, lin)
    for i, p in enumerate(parts):
        cols = _chart_colours(p, uu.ravel(), vv.ravel())
        atlas[:, :, i * ATLAS_CHART:(i + 1) * ATLAS_CHART] = cols.reshape(
            3, ATLAS_CHART, ATLAS_CHART)
    return atlas


def render_frame(scene: SyntheticScene, motion: RigidMotion):
    """Image and clean IUV map of the scene under one rigid motion."""
    H, W = scene.height, scene.width
    cx, cy = scene.centre
    px, py = np.meshgrid(np.arange(W, dtype=np.float64),
                         np.arange(H, dtype=np.float64))
    qx, qy = motion.invert(px, py, cx, cy)

    img = scene.background.astype(np.float64).copy()
    part_plane = np.zeros((H, W), np.int32)
    u_plane = np.zeros((H, W), np.float32)
    v_plane = np.zeros((H, W), np.float32)
    painted = np.zeros((H, W), bool)
    for p in scene.parts:
        ct, st = math.cos(p.theta), math.sin(p.theta)
        lx = ct * (qx - p.cx) + st * (qy - p.cy)
        ly = -st * (qx - p.cx) + ct * (qy - p.cy)
        nx = lx / p.a
        ny = ly / p.b
        m = scene.margin
        halo = ((lx / (p.a + m)) ** 2 + (ly / (p.b + m)) ** 2) <= 1.0
        inside = (nx * nx + ny * ny) <= 1.0
        halo &= ~painted
        inside &= ~painted
        u = (nx + 1.0) / 2.0
        v = (ny + 1.0) / 2.0
        cols = _chart_colours(p, u[halo], v[halo])
        for c in range(3):
            img[c][halo] = cols[c]
        part_plane[inside] = p.part_id
        u_plane[inside] = np.clip(u[inside], 0.0, 1.0)
        v_plane[inside] = np.clip(v[inside], 0.0, 1.0)
        painted |= halo
    iuv = IuvMap(part=part_plane, u=u_plane, v=v_plane, n_parts=scene.n_parts)
    return img.astype(np.float32), iuv


def ground_truth_grid(scene: SyntheticScene, motion: RigidMotion,
                      foreground: np.ndarray) -> WarpGrid:
    """Grid mapping each driving foreground pixel to its source location."""
    H, W = scene.height, scene.width
    cx, cy = scene.centre
    px, py = np.meshgrid(np.arange(W, dtype=np.float64),
                         np.arange(H, dtype=np.float64))
    qx, qy = motion.invert(px, py, cx, cy)
    grid = identity_grid(H, W, np.float32)
    gx = ((2.0 * qx + 1.0) / W - 1.0).astype(np.float32)
    gy = ((2.0 * qy + 1.0) / H - 1.0).astype(np.float32)
    grid.coords[0][foreground] = gx[foreground]
    grid.coords[1][foreground] = gy[foreground]
    return grid


def _keypoints(scene: SyntheticScene, motion: RigidMotion) -> np.ndarray:
    cx, cy = scene.centre
    pts = []
    for p in scene.parts:
        ct, st = math.cos(p.theta), math.sin(p.theta)
        anchors = [(p.cx, p.cy),
                   (p.cx + p.a * ct, p.cy + p.a * st),
                   (p.cx - p.b * st, p.cy + p.b * ct)]
        for qx, qy in anchors:
            fx, fy = motion.apply(qx, qy, cx, cy)
            vis = 1.0 if (0 <= fx < scene.width and 0 <= fy < scene.height) else 0.0
            pts.append((fx, fy, vis))
    return np.asarray(pts, np.float32)


def _jitter_uv(iuv: IuvMap, sigma: float, rng: np.random.Generator) -> IuvMap:
    if sigma <= 0:
        return iuv
    fg = iuv.foreground()
    u = iuv.u.copy()
    v = iuv.v.copy()
    u[fg] = np.clip(u[fg] + rng.normal(0, sigma, int(fg.sum())).astype(np.float32), 0, 1)
    v[fg] = np.clip(v[fg] + rng.normal(0, sigma, int(fg.sum())).astype(np.float32), 0, 1)
    return IuvMap(part=iuv.part, u=u, v=v, n_parts=iuv.n_parts)


def _random_walk_motions(spec: MotionSpec, n: int,
                         rng: np.random.Generator) -> list:
    motions = []
    tx = ty = rot = 0.0
    scale = 1.0
    for _ in range(n):
        tx += rng.uniform(-spec.max_step_px, spec.max_step_px)
        ty += rng.uniform(-spec.max_step_px, spec.max_step_px)
        rot += rng.uniform(-spec.max_rot_step, spec.max_rot_step)
        scale *= 1.0 + rng.uniform(-spec.max_scale_step, spec.max_scale_step)
        motions.append(RigidMotion(tx, ty, rot, scale))
    return motions


def generate_synthetic_sequence(scene: SyntheticScene, n_frames: int,
                                seed: int = 0,
                                motions: list | None = None
                                ) -> SyntheticSequence:
    """Render a source frame plus ``n_frames - 1`` driving frames.

    Deterministic in ``seed``. Ground-truth grids are closed-form from the
    motion parameters. Raises if any frame keeps less than half of the
    source foreground in view (the subject drifting out of frame).
    """
    if n_frames < 2:
        raise ValueError(f"need n_frames >= 2 (source + driving), "
                         f"got {n_frames}")
    rng = np.random.default_rng(seed)
    if motions is None:
        motions = _random_walk_motions(scene.motion, n_frames - 1, rng)
    elif len(motions) != n_frames - 1:
        raise ValueError(f"{len(motions)} motions for {n_frames - 1} "
                         f"driving frames")

    src_motion = RigidMotion()
    img, iuv = render_frame(scene, src_motion)
    src_fg = int(iuv.foreground().sum())
    if src_fg == 0:
        raise ValueError("scene has no foreground in the source frame")
    source = Frame(image=img, iuv=_jitter_uv(iuv, scene.uv_noise, rng),
                   keypoints=_keypoints(scene, src_motion))

    driving, grids, masks = [], [], []
    for k, motion in enumerate(motions):
        img, iuv = render_frame(scene, motion)
        fg = iuv.foreground()
        if int(fg.sum()) < 0.5 * src_fg:
            raise ValueError(
                f"frame {k + 1}: motion keeps only {int(fg.sum())} of "
                f"{src_fg} foreground pixels in view (< 50%)")
        grids.append(ground_truth_grid(scene, motion, fg))
        masks.append(fg)
        driving.append(Frame(image=img,
                             iuv=_jitter_uv(iuv, scene.uv_noise, rng),
                             keypoints=_keypoints(scene, motion)))
    sample = VideoSample(source=source, driving=driving)
    return SyntheticSequence(scene=scene, sample=sample, motions=list(motions),
                             grids=grids, masks=masks)


def make_scene(seed: int = 0, height: int = 64, width: int = 64,
               n_ellipses: int = 3, uv_noise: float = 0.0,
               motion: MotionSpec | None = None,
               margin: float = 2.0) -> SyntheticScene:
    """Random scene with 2-4 well-separated elliptical parts.

    Parts sit on a jittered ring around the image centre; sizes are
    bounded so painted halos never overlap each other or the frame edge.
    """
    if not 2 <= n_ellipses <= 4:
        raise ValueError("scenes use between 2 and 4 parts")
    rng = np.random.default_rng(seed)
    side = min(height, width)
    ring = 0.26 * side
    jitter = max(1.0, 0.02 * side)
    chord = 2.0 * ring * math.sin(math.pi / n_ellipses)
    axis_cap = min((chord - 2 * margin - 2 * jitter - 2.0) / 2.0,
                   side / 2.0 - ring - jitter - margin - 1.0,
                   0.17 * side)
    if axis_cap < 2.0:
        raise ValueError(f"scene {height}x{width} too small for "
                         f"{n_ellipses} parts with margin {margin}")
    phase0 = rng.uniform(0, 2 * math.pi)
    parts = []
    for i in range(n_ellipses):
        ang = phase0 + 2 * math.pi * i / n_ellipses
        cx = width / 2.0 + ring * math.cos(ang) + rng.uniform(-jitter, jitter)
        cy = height / 2.0 + ring * math.sin(ang) + rng.uniform(-jitter, jitter)
        a = rng.uniform(0.75, 1.0) * axis_cap
        b = rng.uniform(0.55, 0.8) * a
        gu = rng.uniform(0.12, 0.30, 3) * rng.choice([-1.0, 1.0], 3)
        gv = rng.uniform(0.12, 0.30, 3) * rng.choice([-1.0, 1.0], 3)
        parts.append(EllipsePart(
            part_id=i + 1,
            cx=cx, cy=cy, a=a, b=b,
            theta=rng.uniform(0, math.pi),
            base=rng.uniform(-0.3, 0.3, 3),
            gu=gu, gv=gv,
        ))
    ramp_x = np.linspace(-0.4, 0.4, width, dtype=np.float32)
    ramp_y = np.linspace(-0.3, 0.3, height, dtype=np.float32)
    background = np.empty((3, height, width), np.float32)
    phase = rng.uniform(0, 2 * math.pi, 3)
    for c in range(3):
        background[c] = (0.25 * np.sin(ramp_x[None, :] * 6 + phase[c])
                         + 0.5 * ramp_y[:, None])
    return SyntheticScene(height=height, width=width, parts=parts,
                          background=background, atlas=_paint_atlas(parts),
                          margin=margin, uv_noise=uv_noise,
                          motion=motion or MotionSpec())
