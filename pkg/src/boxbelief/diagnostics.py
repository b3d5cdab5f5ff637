"""Uncertainty diagnostics: distance profiles, KLD scores, 3D IoU, binning.

Two Kullback-Leibler diagnostics compare corner-uncertainty profiles against
reference profiles over the eight corners:

* KLD-UD: how well the normalized per-corner ensemble uncertainty U(k)
  tracks the normalized mean corner-to-point distance D(k); computed as
  sum_k D(k) ln(D(k) / U(k)).
* KLD-R: how well relative uncertainties (referenced to the most confident
  corner) track relative corner distances from that corner; computed as
  sum_k R_d(k) ln(R_d(k) / R_sigma(k)).

Both operate on smoothed pseudo-distributions so that exact zeros (the
reference corner in KLD-R contributes weight 0) stay finite.
"""

import math
from dataclasses import dataclass

import numpy as np
from shapely.geometry import Polygon

from .errors import (
    DegenerateUncertaintyError,
    EmptyCloudError,
    InvalidInputError,
)
from .geometry import BoxParams, CornerSet, corners_from_box, yaw_rotation
from .loss import CornerBelief

#: Report-flagging threshold on KLD-UD.
KLD_FLAG_THRESHOLD = 0.05

#: Default width (meters) of detection-distance bins.
DEFAULT_BIN_WIDTH = 5.0

#: Pseudo-distribution floor, as a fraction of the weight sum.
PSEUDO_SMOOTHING = 1e-9

#: Absolute slack (meters) on box membership so exact surface points stay
#: members despite rotation round-off.
_MEMBERSHIP_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N points (camera or sensor frame, meters) with optional intensity."""

    points: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInputError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = np.array(self.intensity, dtype=float).reshape(-1)
            if inten.shape[0] != pts.shape[0]:
                raise InvalidInputError(
                    f"intensity length {inten.shape[0]} != point count {pts.shape[0]}"
                )
            inten.setflags(write=False)
            object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(points=np.zeros((0, 3)))


@dataclass(frozen=True, eq=False)
class PseudoDistribution:
    """Eight positive corner weights summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (8,):
            raise InvalidInputError(f"expected 8 weights, got shape {w.shape}")
        if np.any(w <= 0) or not math.isclose(float(w.sum()), 1.0, abs_tol=1e-12):
            raise InvalidInputError("weights must be positive and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_weights(cls, raw) -> "PseudoDistribution":
        """Normalize raw non-negative weights, flooring each at
        PSEUDO_SMOOTHING times their sum so zero entries stay finite."""
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (8,) or np.any(raw < 0) or not np.all(np.isfinite(raw)):
            raise InvalidInputError("raw weights must be 8 finite non-negative reals")
        total = float(raw.sum())
        if total <= 0:
            raise InvalidInputError("raw weights must not all be zero")
        floored = np.maximum(raw, PSEUDO_SMOOTHING * total)
        return cls(weights=floored / floored.sum())


def kl_divergence(p: PseudoDistribution, q: PseudoDistribution) -> float:
    """KL(p || q) = sum p ln(p/q) in nats; tiny float negatives clamp to 0."""
    value = float(np.sum(p.weights * np.log(p.weights / q.weights)))
    return 0.0 if -1e-9 < value < 0.0 else value


def corner_point_distances(corners: CornerSet, cloud: PointCloud) -> np.ndarray:
    """Mean Euclidean distance from each corner to every cloud point.

    The caller restricts the cloud to the points inside the box (see
    `points_in_box`); this function averages over whatever it is given.
    """
    if len(cloud) == 0:
        raise EmptyCloudError("no points to measure corner distances against")
    diff = corners.corners[:, None, :] - cloud.points[None, :, :]
    return np.linalg.norm(diff, axis=2).mean(axis=1)


def points_in_box(box: BoxParams, cloud: PointCloud, margin: float = 0.0) -> PointCloud:
    """Subset of the cloud whose box-frame coordinates lie inside the box.

    Box-frame coordinates are obtained by inverting the corner transform's
    rotation and translation; a point is kept when every coordinate is
    within the corresponding half-dimension plus `margin` (plus a 1e-9 m
    numerical slack, so the box's own corners and face points are always
    members at margin 0).
    """
    if not (math.isfinite(margin)):
        raise InvalidInputError(f"margin must be finite, got {margin}")
    local = (cloud.points - box.center) @ yaw_rotation(box.psi)
    bounds = 0.5 * np.array([box.l, box.h, box.w]) + margin + _MEMBERSHIP_SLACK
    mask = np.all(np.abs(local) <= bounds, axis=1)
    intensity = cloud.intensity[mask] if cloud.intensity is not None else None
    return PointCloud(points=cloud.points[mask], intensity=intensity)


def corner_ensemble_variance(belief: CornerBelief) -> np.ndarray:
    """Per-corner ensemble variance: sum of the corner's three component
    variances 2 b^2.  Returns shape (8,)."""
    return belief.variances.sum(axis=1)


def kld_ud(
    corners: CornerSet,
    belief: CornerBelief,
    cloud: PointCloud,
    scale: str = "std",
) -> float:
    """KLD of the corner-uncertainty profile from the corner-distance profile.

    The uncertainty profile normalizes the std-scale ensemble values
    sqrt(sum_j 2 b^2) by default; `scale="variance"` normalizes the
    variance-scale values instead (sensitivity variant).
    """
    if scale not in ("std", "variance"):
        raise InvalidInputError(f"scale must be 'std' or 'variance', got {scale!r}")
    d = corner_point_distances(corners, cloud)
    ens = corner_ensemble_variance(belief)
    u = np.sqrt(ens) if scale == "std" else ens
    return kl_divergence(
        PseudoDistribution.from_weights(d), PseudoDistribution.from_weights(u)
    )


def kld_r(corners: CornerSet, belief: CornerBelief) -> float:
    """KLD of relative corner distances from relative corner uncertainties.

    The reference corner m is the one with minimum ensemble variance (ties
    broken by lowest index); the profiles are sigma_k = sqrt(var_k - var_m)
    and d_k = ||c_k - c_m||, both smoothed and normalized.  The divergence
    direction is sum_k R_d(k) ln(R_d(k) / R_sigma(k)).
    """
    ens = corner_ensemble_variance(belief)
    m = int(np.argmin(ens))
    if np.all(ens == ens[m]):
        raise DegenerateUncertaintyError(
            "all corner ensemble variances are equal; relative uncertainties undefined"
        )
    rel_sigma = np.sqrt(np.maximum(ens - ens[m], 0.0))
    rel_dist = np.linalg.norm(corners.corners - corners.corners[m], axis=1)
    return kl_divergence(
        PseudoDistribution.from_weights(rel_dist),
        PseudoDistribution.from_weights(rel_sigma),
    )


def _footprint(box: BoxParams) -> Polygon:
    """The box's yaw-rotated rectangle in the x-z plane, vertices in cyclic order."""
    s, c = math.sin(box.psi), math.cos(box.psi)
    pts = []
    for sl, sw in ((1, 1), (1, -1), (-1, -1), (-1, 1)):
        lo, wo = sl * box.l / 2, sw * box.w / 2
        pts.append((box.x + lo * s + wo * c, box.z - lo * c + wo * s))
    return Polygon(pts)


def iou3d(a: BoxParams, b: BoxParams) -> float:
    """Volume intersection-over-union of two yaw-only boxes.

    Intersection volume is the x-z footprint intersection area times the
    y-extent overlap; disjoint boxes score 0.
    """
    inter_area = _footprint(a).intersection(_footprint(b)).area
    y_overlap = max(
        0.0,
        min(a.y + a.h / 2, b.y + b.h / 2) - max(a.y - a.h / 2, b.y - b.h / 2),
    )
    intersection = inter_area * y_overlap
    union = a.volume + b.volume - intersection
    return min(max(intersection / union, 0.0), 1.0)


@dataclass(frozen=True, eq=False)
class BoxDiagnostics:
    """Per-box diagnostic report.

    `kld_r` is None when the belief's corner variances are all equal (the
    relative profile is undefined for such a box).
    """

    d: np.ndarray
    sigma_ens: np.ndarray
    kld_ud: float
    kld_r: float | None
    iou: float
    detection_distance: float
    per_component_overall_variance: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        sigma = np.array(self.sigma_ens, dtype=float)
        overall = np.array(self.per_component_overall_variance, dtype=float)
        if d.shape != (8,) or sigma.shape != (8,) or overall.shape != (3,):
            raise InvalidInputError("diagnostic arrays have wrong shapes")
        if self.kld_ud < 0 or (self.kld_r is not None and self.kld_r < 0):
            raise InvalidInputError("KLD values must be non-negative")
        if not 0.0 <= self.iou <= 1.0:
            raise InvalidInputError(f"iou must be in [0, 1], got {self.iou}")
        for name, arr in (("d", d), ("sigma_ens", sigma),
                          ("per_component_overall_variance", overall)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_json_dict(self) -> dict:
        return {
            "d": self.d.tolist(),
            "sigma_ens": self.sigma_ens.tolist(),
            "kld_ud": self.kld_ud,
            "kld_r": self.kld_r,
            "iou": self.iou,
            "detection_distance": self.detection_distance,
            "overall_variance": {
                "x": self.per_component_overall_variance[0],
                "y": self.per_component_overall_variance[1],
                "z": self.per_component_overall_variance[2],
            },
        }


def detection_distance(box: BoxParams) -> float:
    """Ground-plane range from the sensor to the box center: ||(x, z)||."""
    return math.hypot(box.x, box.z)


def diagnose_box(
    box: BoxParams,
    belief: CornerBelief,
    cloud: PointCloud,
    gt_boxes: tuple[BoxParams, ...] = (),
    margin: float = 0.0,
    scale: str = "std",
) -> BoxDiagnostics:
    """Assemble the full diagnostic report for one detection.

    `cloud` is the unrestricted camera-frame cloud; points are filtered to
    the box before distance profiling.  `iou` is the best IoU against
    `gt_boxes` (0 when none are given).

    Raises:
        EmptyCloudError: no cloud point falls inside the box.
    """
    inside = points_in_box(box, cloud, margin)
    corners = corners_from_box(box)
    d = corner_point_distances(corners, inside)
    ens = corner_ensemble_variance(belief)
    try:
        kld_r_value = kld_r(corners, belief)
    except DegenerateUncertaintyError:
        kld_r_value = None
    iou = max((iou3d(box, gt) for gt in gt_boxes), default=0.0)
    return BoxDiagnostics(
        d=d,
        sigma_ens=np.sqrt(ens),
        kld_ud=kld_ud(corners, belief, inside, scale=scale),
        kld_r=kld_r_value,
        iou=iou,
        detection_distance=detection_distance(box),
        per_component_overall_variance=belief.variances.sum(axis=0),
    )


@dataclass(frozen=True, eq=False)
class DistanceBin:
    """Aggregate of per-component overall variances in one distance bin."""

    lower: float
    upper: float
    count: int
    mean_variance: np.ndarray
    std_variance: np.ndarray

    def __post_init__(self):
        for name in ("mean_variance", "std_variance"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (3,):
                raise InvalidInputError(f"{name} must have shape (3,)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def distance_binned_stats(
    reports: list[BoxDiagnostics], bin_width: float = DEFAULT_BIN_WIDTH
) -> list[DistanceBin]:
    """Mean and standard deviation of the per-component overall variances,
    grouped into [0, w), [w, 2w), ... detection-distance bins.

    Empty bins are absent from the result; bins are returned in ascending
    distance order.
    """
    if not (bin_width > 0 and math.isfinite(bin_width)):
        raise InvalidInputError(f"bin width must be positive, got {bin_width}")
    groups: dict[int, list[np.ndarray]] = {}
    for report in reports:
        index = int(report.detection_distance // bin_width)
        groups.setdefault(index, []).append(report.per_component_overall_variance)
    bins = []
    for index in sorted(groups):
        stacked = np.stack(groups[index])
        bins.append(
            DistanceBin(
                lower=index * bin_width,
                upper=(index + 1) * bin_width,
                count=stacked.shape[0],
                mean_variance=stacked.mean(axis=0),
                std_variance=stacked.std(axis=0),
            )
        )
    return bins
