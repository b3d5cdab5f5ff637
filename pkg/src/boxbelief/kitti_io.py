"""KITTI object-file ingestion and the detection interchange format.

Reads KITTI label files (15 whitespace-separated fields per object),
calibration files (key: float-list lines), and velodyne scans
(little-endian float32 x, y, z, intensity quadruples), and converts them
into camera-frame toolkit types.

KITTI locations are bottom-face centers while the corner transform treats
(x, y, z) as the volumetric center, so ingestion shifts y by -h/2 (and
export shifts it back).  KITTI's rotation_y is related to this toolkit's
yaw by psi = pi/2 - rotation_y; the `convention` argument selects whether
that conversion is applied ("kitti_ry") or the angle is copied unchanged
("verbatim").  The conversion is never applied silently.

Detections travel as JSON-lines under the versioned schema "boxbelief.v1":
one object per line with the frame id, the 7 box parameters, the 24 corner
diversities (corner-major, component-minor), and a confidence score.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import PointCloud
from .errors import (
    DegenerateLabelError,
    FormatError,
    InvalidInputError,
    LabelParseError,
    SchemaError,
)
from .geometry import (
    BoxParams,
    kitti_ry_from_psi,
    psi_from_kitti_ry,
    wrap_angle,
)
from .loss import CornerBelief, corners_from_box

SCHEMA_VERSION = "boxbelief.v1"

CONVENTIONS = ("verbatim", "kitti_ry")

_LABEL_FIELDS = 15


@dataclass(frozen=True)
class KittiLabel:
    """One parsed KITTI object label."""

    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox2d: tuple[float, float, float, float]
    h: float
    w: float
    l: float
    x: float
    y: float
    z: float
    rotation_y: float

    @property
    def is_dontcare(self) -> bool:
        return self.type == "DontCare"

    def to_line(self) -> str:
        """Serialize back to the 15-field KITTI line format."""
        numbers = (
            self.truncated,
            float(self.occluded),
            self.alpha,
            *self.bbox2d,
            self.h,
            self.w,
            self.l,
            self.x,
            self.y,
            self.z,
            self.rotation_y,
        )
        return " ".join([self.type] + [f"{v:.6f}" for v in numbers])


def parse_labels(text: str) -> list[KittiLabel]:
    """Parse a KITTI label file; blank lines are skipped, 'DontCare'
    objects are kept (see `KittiLabel.is_dontcare`).

    Raises:
        LabelParseError: wrong field count or non-numeric field, with the
            offending 1-based line number.
    """
    labels = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != _LABEL_FIELDS:
            raise LabelParseError(
                f"line {lineno}: expected {_LABEL_FIELDS} fields, got {len(tokens)}",
                line_number=lineno,
            )
        try:
            values = [float(tok) for tok in tokens[1:]]
        except ValueError as exc:
            raise LabelParseError(
                f"line {lineno}: non-numeric field ({exc})", line_number=lineno
            ) from None
        label = KittiLabel(
            type=tokens[0],
            truncated=values[0],
            occluded=int(values[1]),
            alpha=values[2],
            bbox2d=tuple(values[3:7]),
            h=values[7],
            w=values[8],
            l=values[9],
            x=values[10],
            y=values[11],
            z=values[12],
            rotation_y=values[13],
        )
        if not label.is_dontcare and min(label.h, label.w, label.l) < 0:
            raise LabelParseError(
                f"line {lineno}: negative dimension on a {label.type} object",
                line_number=lineno,
            )
        labels.append(label)
    return labels


def label_to_box(label: KittiLabel, convention: str = "verbatim") -> BoxParams:
    """Convert a label to box parameters.

    The y coordinate moves from KITTI's bottom-face center to the
    volumetric center (y - h/2).  With convention "kitti_ry" the yaw is
    pi/2 - rotation_y; with "verbatim" it is rotation_y unchanged.

    Raises:
        DegenerateLabelError: any dimension is zero or negative (including
            every 'DontCare' label).
    """
    if convention not in CONVENTIONS:
        raise InvalidInputError(f"convention must be one of {CONVENTIONS}")
    if min(label.h, label.w, label.l) <= 0:
        raise DegenerateLabelError(
            f"label of type {label.type!r} has non-positive dimensions "
            f"h={label.h} w={label.w} l={label.l}"
        )
    psi = label.rotation_y if convention == "verbatim" else psi_from_kitti_ry(label.rotation_y)
    return BoxParams(
        x=label.x,
        y=label.y - label.h / 2,
        z=label.z,
        h=label.h,
        w=label.w,
        l=label.l,
        psi=psi,
    )


def box_to_label(
    box: BoxParams, convention: str = "verbatim", category: str = "Car"
) -> KittiLabel:
    """Export box parameters as a KITTI label (inverse of `label_to_box`).

    The 2D bbox is zeroed (no image is involved); alpha is derived from the
    exported rotation_y and the viewing direction.
    """
    if convention not in CONVENTIONS:
        raise InvalidInputError(f"convention must be one of {CONVENTIONS}")
    ry = box.psi if convention == "verbatim" else kitti_ry_from_psi(box.psi)
    return KittiLabel(
        type=category,
        truncated=0.0,
        occluded=0,
        alpha=wrap_angle(ry - math.atan2(box.x, box.z)),
        bbox2d=(0.0, 0.0, 0.0, 0.0),
        h=box.h,
        w=box.w,
        l=box.l,
        x=box.x,
        y=box.y + box.h / 2,
        z=box.z,
        rotation_y=ry,
    )


@dataclass(frozen=True, eq=False)
class CalibMatrices:
    """KITTI calibration: camera projection, rectification, velo-to-cam."""

    P2: np.ndarray
    R0_rect: np.ndarray
    Tr_velo_to_cam: np.ndarray

    def __post_init__(self):
        p2 = np.array(self.P2, dtype=float)
        r0 = np.array(self.R0_rect, dtype=float)
        tr = np.array(self.Tr_velo_to_cam, dtype=float)
        if p2.shape != (3, 4) or r0.shape != (3, 3) or tr.shape != (3, 4):
            raise FormatError(
                f"calib shapes must be (3,4)/(3,3)/(3,4), got "
                f"{p2.shape}/{r0.shape}/{tr.shape}"
            )
        if np.max(np.abs(r0 @ r0.T - np.eye(3))) > 1e-3:
            raise FormatError("R0_rect is not orthonormal within 1e-3")
        for name, arr in (("P2", p2), ("R0_rect", r0), ("Tr_velo_to_cam", tr)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def identity(cls) -> "CalibMatrices":
        eye34 = np.hstack([np.eye(3), np.zeros((3, 1))])
        return cls(P2=eye34, R0_rect=np.eye(3), Tr_velo_to_cam=eye34)


def parse_calib(text: str) -> CalibMatrices:
    """Parse a KITTI calibration file (needs P2, R0_rect, Tr_velo_to_cam).

    Raises:
        FormatError: a required key is missing, has the wrong float count,
            or R0_rect fails the orthonormality check.
    """
    entries: dict[str, np.ndarray] = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        key, _, rest = line.partition(":")
        tokens = rest.split()
        if not tokens:
            continue
        try:
            entries[key.strip()] = np.array([float(tok) for tok in tokens])
        except ValueError as exc:
            raise FormatError(f"calib key {key.strip()!r}: {exc}") from None
    expected = {"P2": 12, "R0_rect": 9, "Tr_velo_to_cam": 12}
    shaped = {}
    for key, count in expected.items():
        if key not in entries:
            raise FormatError(f"calib file is missing key {key!r}")
        if entries[key].size != count:
            raise FormatError(
                f"calib key {key!r} expects {count} floats, got {entries[key].size}"
            )
        shaped[key] = entries[key].reshape(3, count // 3)
    return CalibMatrices(
        P2=shaped["P2"], R0_rect=shaped["R0_rect"], Tr_velo_to_cam=shaped["Tr_velo_to_cam"]
    )


def format_calib(calib: CalibMatrices) -> str:
    """Serialize a calibration in the KITTI key: floats layout."""
    lines = []
    for key in ("P2", "R0_rect", "Tr_velo_to_cam"):
        values = getattr(calib, key).reshape(-1)
        lines.append(key + ": " + " ".join(f"{v:.12e}" for v in values))
    return "\n".join(lines) + "\n"


def read_velodyne(data: bytes) -> PointCloud:
    """Decode a velodyne scan: little-endian float32 (x, y, z, intensity)
    quadruples, velodyne frame.

    Raises:
        FormatError: byte length is not a multiple of 16.
    """
    if len(data) % 16 != 0:
        raise FormatError(
            f"velodyne payload of {len(data)} bytes is not a multiple of 16"
        )
    arr = np.frombuffer(data, dtype="<f4").reshape(-1, 4)
    return PointCloud(
        points=arr[:, :3].astype(np.float64),
        intensity=arr[:, 3].astype(np.float64),
    )


def write_velodyne(cloud: PointCloud) -> bytes:
    """Encode a cloud in the velodyne binary layout (intensity 0 if absent)."""
    out = np.zeros((len(cloud), 4), dtype="<f4")
    out[:, :3] = cloud.points
    if cloud.intensity is not None:
        out[:, 3] = cloud.intensity
    return out.tobytes()


def velo_to_rect_cam(cloud: PointCloud, calib: CalibMatrices) -> PointCloud:
    """Map velodyne-frame points to the rectified camera frame:
    p_cam = R0_rect @ Tr_velo_to_cam @ [p; 1]."""
    homogeneous = np.hstack([cloud.points, np.ones((len(cloud), 1))])
    cam = homogeneous @ calib.Tr_velo_to_cam.T @ calib.R0_rect.T
    return PointCloud(points=cam, intensity=cloud.intensity)


@dataclass(frozen=True, eq=False)
class DetectionRecord:
    """One detection: frame id, box, corner belief, confidence score.

    The belief means are the corners of the box (the interchange format
    stores only the 24 diversities).
    """

    frame: str
    box: BoxParams
    belief: CornerBelief
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"score must be in [0, 1], got {self.score}")
        expected = corners_from_box(self.box).corners
        if not np.allclose(self.belief.mu, expected, atol=1e-9):
            raise InvalidInputError(
                "belief means must equal the corners of the box"
            )

    @classmethod
    def make(cls, frame: str, box: BoxParams, b, score: float) -> "DetectionRecord":
        return cls(frame=frame, box=box, belief=CornerBelief.from_box(box, b), score=score)


_BOX_KEYS = ("x", "y", "z", "h", "w", "l", "psi")


def write_detections(records: list[DetectionRecord]) -> str:
    """Serialize records as boxbelief.v1 JSON-lines (one record per line)."""
    lines = []
    for record in records:
        lines.append(
            json.dumps(
                {
                    "schema": SCHEMA_VERSION,
                    "frame": record.frame,
                    "box": {key: getattr(record.box, key) for key in _BOX_KEYS},
                    "b": record.belief.b.reshape(24).tolist(),
                    "score": record.score,
                },
                sort_keys=True,
            )
        )
    return "".join(line + "\n" for line in lines)


def read_detections(text: str) -> list[DetectionRecord]:
    """Parse boxbelief.v1 JSON-lines into records.

    Raises:
        SchemaError: unparseable line, unknown schema tag, or missing field.
        InvalidInputError: field values violate invariants (e.g. a
            diversity below the floor).
    """
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: invalid JSON ({exc})") from None
        if not isinstance(payload, dict):
            raise SchemaError(f"line {lineno}: record must be a JSON object")
        schema = payload.get("schema")
        if schema != SCHEMA_VERSION:
            raise SchemaError(
                f"line {lineno}: unknown schema {schema!r} (expected {SCHEMA_VERSION!r})"
            )
        missing = {"frame", "box", "b", "score"} - payload.keys()
        if missing:
            raise SchemaError(f"line {lineno}: missing fields {sorted(missing)}")
        box_dict = payload["box"]
        if not isinstance(box_dict, dict) or set(_BOX_KEYS) - box_dict.keys():
            raise SchemaError(f"line {lineno}: box must carry keys {_BOX_KEYS}")
        b = np.asarray(payload["b"], dtype=float)
        if b.shape != (24,):
            raise SchemaError(f"line {lineno}: 'b' must hold 24 values")
        box = BoxParams(**{key: float(box_dict[key]) for key in _BOX_KEYS})
        records.append(
            DetectionRecord.make(
                frame=str(payload["frame"]),
                box=box,
                b=b.reshape(8, 3),
                score=float(payload["score"]),
            )
        )
    return records
