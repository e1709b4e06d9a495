"""Body-surface coordinate maps, video samples and their validation."""

from dataclasses import dataclass, field

import numpy as np

DEFAULT_NUM_PARTS = 24


@dataclass
class IuvMap:
    """Per-pixel body-part index with normalized surface coordinates.

    ``part`` is 0 on background; ``u``/``v`` are only meaningful where
    ``part > 0`` and live in [0, 1].
    """

    part: np.ndarray  # (H, W) int32
    u: np.ndarray     # (H, W) float32
    v: np.ndarray     # (H, W) float32
    n_parts: int = DEFAULT_NUM_PARTS

    @property
    def height(self) -> int:
        return self.part.shape[0]

    @property
    def width(self) -> int:
        return self.part.shape[1]

    @property
    def shape(self):
        return self.part.shape

    def foreground(self) -> np.ndarray:
        return self.part > 0

    def to_planes(self) -> np.ndarray:
        """Stacked (3,H,W) float32 planes: part (cast), u, v."""
        return np.stack([self.part.astype(np.float32),
                         self.u.astype(np.float32),
                         self.v.astype(np.float32)])

    @classmethod
    def from_planes(cls, planes: np.ndarray,
                    n_parts: int = DEFAULT_NUM_PARTS) -> "IuvMap":
        if planes.ndim != 3 or planes.shape[0] != 3:
            raise ValueError(f"IUV planes must be (3,H,W), got {planes.shape}")
        return cls(part=np.rint(planes[0]).astype(np.int32),
                   u=planes[1].astype(np.float32),
                   v=planes[2].astype(np.float32),
                   n_parts=n_parts)

    def encoder_planes(self) -> np.ndarray:
        """(3,H,W) float32 input for networks: part/P, u, v."""
        return np.stack([self.part.astype(np.float32) / np.float32(self.n_parts),
                         self.u.astype(np.float32),
                         self.v.astype(np.float32)])


@dataclass
class Frame:
    image: np.ndarray        # (C,H,W) float32 in [-1, 1]
    iuv: IuvMap
    keypoints: np.ndarray | None = None  # (K,3) float32: x, y, visible


@dataclass
class VideoSample:
    """One source frame plus an ordered driving sequence."""

    source: Frame
    driving: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.driving) < 1:
            raise ValueError("a video sample needs at least one driving frame")
        hw = self.source.iuv.shape
        for k, f in enumerate(self.driving):
            if f.iuv.shape != hw or f.image.shape[1:] != hw:
                raise ValueError(f"driving frame {k} has shape "
                                 f"{f.iuv.shape}, source is {hw}")

    def all_frames(self) -> list:
        """Source followed by the driving frames (the training video)."""
        return [self.source] + list(self.driving)


@dataclass
class IuvReport:
    bad_part: list          # (y, x, value) entries with part outside [0, P]
    bad_uv: list            # (y, x, u, v) foreground entries with uv off [0,1]
    background_fraction: float
    no_foreground: bool

    @property
    def violations(self) -> list:
        return self.bad_part + self.bad_uv

    @property
    def ok(self) -> bool:
        return not self.violations and not self.no_foreground

    def summary(self) -> str:
        bits = [f"background={self.background_fraction:.3f}"]
        if self.no_foreground:
            bits.append("no foreground")
        if self.bad_part:
            bits.append(f"{len(self.bad_part)} part indices out of range")
        if self.bad_uv:
            bits.append(f"{len(self.bad_uv)} uv values out of range")
        if self.ok:
            bits.append("ok")
        return "; ".join(bits)


def validate_iuv(iuv: IuvMap, n_parts: int | None = None) -> IuvReport:
    """Report out-of-range part ids, out-of-range UV and background share.

    Estimator outputs are not trusted blindly (false detections, missing
    parts); this is purely a report and never raises.
    """
    P = iuv.n_parts if n_parts is None else n_parts
    part = iuv.part
    fg = part > 0
    bad_part_mask = (part < 0) | (part > P)
    bad_uv_mask = fg & ~bad_part_mask & (
        (iuv.u < 0) | (iuv.u > 1) | (iuv.v < 0) | (iuv.v > 1)
        | ~np.isfinite(iuv.u) | ~np.isfinite(iuv.v))
    ys, xs = np.nonzero(bad_part_mask)
    bad_part = [(int(y), int(x), int(part[y, x])) for y, x in zip(ys, xs)]
    ys, xs = np.nonzero(bad_uv_mask)
    bad_uv = [(int(y), int(x), float(iuv.u[y, x]), float(iuv.v[y, x]))
              for y, x in zip(ys, xs)]
    n_bg = int((~fg).sum())
    return IuvReport(
        bad_part=bad_part,
        bad_uv=bad_uv,
        background_fraction=n_bg / part.size,
        no_foreground=not bool(fg.any()),
    )
