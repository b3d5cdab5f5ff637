"""Box parameterization, the box-to-corner transform, its inverse, and Jacobians.

A box is the 7-tuple [x, y, z, h, w, l, psi]: centroid location in the camera
frame (meters), dimensions (meters), and yaw about the camera y-axis
(radians).  The corner transform rotates the eight signed half-dimension
offsets,

    corner_k = R(psi) @ [s_l*l/2, s_h*h/2, s_w*w/2]^T + [x, y, z]^T

with the yaw matrix

    R(psi) = [[ sin psi, 0, cos psi],
              [ 0,       1, 0      ],
              [-cos psi, 0, sin psi]].

Corner ordering is a fixed bit code: for corner index k in 0..7, bit 2
selects the sign of l/2, bit 1 the sign of h/2, bit 0 the sign of w/2; a
clear bit means "+".  Corner 0 is therefore the (+l/2, +h/2, +w/2) corner
and corner 7 its space-diagonal opposite.

Note R(psi) is not the usual KITTI rotation_y matrix: the two agree under
psi = pi/2 - rotation_y (see `psi_from_kitti_ry`).  Nothing in this module
applies that conversion implicitly.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NotACuboidError

#: Default tolerance (meters) for accepting a corner set as a cuboid.
DEFAULT_CORNER_TOL = 1e-6

#: Sign triples (s_l, s_h, s_w) for corners 0..7 under the bit-code ordering.
CORNER_SIGNS = np.array(
    [
        [
            -1.0 if k & 4 else 1.0,
            -1.0 if k & 2 else 1.0,
            -1.0 if k & 1 else 1.0,
        ]
        for k in range(8)
    ]
)
CORNER_SIGNS.setflags(write=False)

# Index pairs (i, j) with i the positive-sign corner.  Each scheme's four
# pairs partition the eight corners.
L_EDGE_PAIRS = ((0, 4), (1, 5), (2, 6), (3, 7))
H_EDGE_PAIRS = ((0, 2), (1, 3), (4, 6), (5, 7))
W_EDGE_PAIRS = ((0, 1), (2, 3), (4, 5), (6, 7))
DIAGONAL_PAIRS = ((0, 7), (1, 6), (2, 5), (3, 4))

_L_I = np.array([p[0] for p in L_EDGE_PAIRS])
_L_J = np.array([p[1] for p in L_EDGE_PAIRS])
_H_I = np.array([p[0] for p in H_EDGE_PAIRS])
_H_J = np.array([p[1] for p in H_EDGE_PAIRS])
_W_I = np.array([p[0] for p in W_EDGE_PAIRS])
_W_J = np.array([p[1] for p in W_EDGE_PAIRS])


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = angle % math.tau
    if wrapped > math.pi:
        wrapped -= math.tau
    return wrapped


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorized `wrap_angle`."""
    wrapped = np.mod(angles, math.tau)
    return np.where(wrapped > math.pi, wrapped - math.tau, wrapped)


def psi_from_kitti_ry(ry: float) -> float:
    """Yaw in this module's convention for a KITTI rotation_y value.

    The corner transform's rotation matrix equals KITTI's rotation_y matrix
    when psi = pi/2 - ry.  The conversion is an involution, so
    `kitti_ry_from_psi` is the same formula.
    """
    return wrap_angle(math.pi / 2 - ry)


def kitti_ry_from_psi(psi: float) -> float:
    """KITTI rotation_y for a yaw in this module's convention."""
    return wrap_angle(math.pi / 2 - psi)


def yaw_rotation(psi: float) -> np.ndarray:
    """The 3x3 yaw matrix used by the corner transform."""
    s, c = math.sin(psi), math.cos(psi)
    return np.array([[s, 0.0, c], [0.0, 1.0, 0.0], [-c, 0.0, s]])


def yaw_rotation_derivative(psi: float) -> np.ndarray:
    """Elementwise derivative of `yaw_rotation` with respect to psi."""
    s, c = math.sin(psi), math.cos(psi)
    return np.array([[c, 0.0, -s], [0.0, 0.0, 0.0], [s, 0.0, c]])


@dataclass(frozen=True)
class BoxParams:
    """A yaw-only 3D bounding box in the camera frame.

    (x, y, z) is the volumetric center, (h, w, l) the positive dimensions,
    psi the yaw in radians, normalized to (-pi, pi] on construction.
    """

    x: float
    y: float
    z: float
    h: float
    w: float
    l: float
    psi: float

    def __post_init__(self):
        values = [self.x, self.y, self.z, self.h, self.w, self.l, self.psi]
        if not all(math.isfinite(float(v)) for v in values):
            raise InvalidInputError(f"box parameters must be finite, got {values}")
        if self.h <= 0 or self.w <= 0 or self.l <= 0:
            raise InvalidInputError(
                f"box dimensions must be positive, got h={self.h} w={self.w} l={self.l}"
            )
        for name, v in zip("xyzhwl", values):
            object.__setattr__(self, name, float(v))
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def volume(self) -> float:
        return self.h * self.w * self.l

    def to_array(self) -> np.ndarray:
        """Parameters as a 7-vector [x, y, z, h, w, l, psi]."""
        return np.array([self.x, self.y, self.z, self.h, self.w, self.l, self.psi])

    @classmethod
    def from_array(cls, arr) -> "BoxParams":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (7,):
            raise InvalidInputError(f"expected 7 parameters, got shape {arr.shape}")
        return cls(*arr)


@dataclass(frozen=True, eq=False)
class CornerSet:
    """Eight ordered corner coordinates, shape (8, 3), camera frame.

    Ordering follows the corner bit code.  Construction only checks shape
    and finiteness; whether the corners actually form a cuboid is checked,
    with a tolerance, by `box_from_corners`.
    """

    corners: np.ndarray

    def __post_init__(self):
        arr = np.array(self.corners, dtype=float)
        if arr.shape != (8, 3):
            raise InvalidInputError(f"corners must have shape (8, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("corner coordinates must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "corners", arr)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.corners[k]


def corners_from_box(box: BoxParams) -> CornerSet:
    """Transform box parameters to the eight corner coordinates."""
    half = 0.5 * np.array([box.l, box.h, box.w])
    offsets = CORNER_SIGNS * half
    return CornerSet(offsets @ yaw_rotation(box.psi).T + box.center)


def _params_from_corner_array(corners: np.ndarray) -> np.ndarray:
    """Centroid/dimension/yaw estimates for (..., 8, 3) corner arrays.

    Center is the mean of the eight corners, each dimension the mean length
    of its four-edge group, and yaw the direction of the mean l-edge vector.
    Returns (..., 7) arrays ordered [x, y, z, h, w, l, psi].  No cuboid
    validation is performed; see `box_from_corners` for the checked wrapper.
    """
    corners = np.asarray(corners, dtype=float)
    center = corners.mean(axis=-2)
    l_vec = corners[..., _L_I, :] - corners[..., _L_J, :]
    h_vec = corners[..., _H_I, :] - corners[..., _H_J, :]
    w_vec = corners[..., _W_I, :] - corners[..., _W_J, :]
    l = np.linalg.norm(l_vec, axis=-1).mean(axis=-1)
    h = np.linalg.norm(h_vec, axis=-1).mean(axis=-1)
    w = np.linalg.norm(w_vec, axis=-1).mean(axis=-1)
    mean_dir = l_vec.mean(axis=-2)
    psi = np.arctan2(mean_dir[..., 0], -mean_dir[..., 2])
    return np.stack(
        [center[..., 0], center[..., 1], center[..., 2], h, w, l, psi], axis=-1
    )


def box_from_corners(
    corners: CornerSet, tol: float = DEFAULT_CORNER_TOL
) -> BoxParams:
    """Invert the corner transform.

    Accepts corner sets whose reconstruction error is at most `tol` meters;
    pass `tol=math.inf` to fit noisy corner sets without validation.

    Raises:
        NotACuboidError: dimensions collapse to zero, or the best-fit box
            reproduces the input corners worse than `tol` (the worst
            per-component deviation is attached to the exception).
    """
    params = _params_from_corner_array(corners.corners)
    h, w, l = float(params[3]), float(params[4]), float(params[5])
    if min(h, w, l) <= 0.0:
        raise NotACuboidError(
            f"degenerate corner set: dimensions h={h} w={w} l={l} (yaw undefined)"
        )
    box = BoxParams(*params)
    if math.isfinite(tol):
        reconstructed = corners_from_box(box).corners
        worst = float(np.max(np.abs(reconstructed - corners.corners)))
        if worst > tol:
            raise NotACuboidError(
                f"corner set deviates from the best-fit cuboid by {worst:.3e} m "
                f"(tolerance {tol:.3e} m)",
                worst_deviation=worst,
            )
    return box


def corner_jacobian(box: BoxParams) -> np.ndarray:
    """Derivative of the flattened corners with respect to the box parameters.

    Returns the (24, 7) matrix with rows ordered corner-major and
    component-minor (row 3k+c is component c of corner k) and columns
    ordered [x, y, z, h, w, l, psi].  The center block is the identity;
    dimension columns are half-signed rotation columns; the yaw column is
    dR/dpsi applied to each corner offset.
    """
    s, c = math.sin(box.psi), math.cos(box.psi)
    half = 0.5 * np.array([box.l, box.h, box.w])
    offsets = CORNER_SIGNS * half
    d_psi = offsets @ yaw_rotation_derivative(box.psi).T

    jac = np.zeros((24, 7))
    for k in range(8):
        rows = slice(3 * k, 3 * k + 3)
        sl, sh, sw = CORNER_SIGNS[k]
        jac[rows, 0:3] = np.eye(3)
        jac[rows, 3] = np.array([0.0, sh / 2, 0.0])
        jac[rows, 4] = (sw / 2) * np.array([c, 0.0, s])
        jac[rows, 5] = (sl / 2) * np.array([s, 0.0, -c])
        jac[rows, 6] = d_psi[k]
    return jac
