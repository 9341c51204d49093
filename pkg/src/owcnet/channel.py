"""Indoor optical channel: room geometry, Lambertian ray tracing and the
received-signal / background tensors consumed by the allocator.

Coordinates: x runs along the 8 m room length, y along the 4 m width and
z is height. All gains are DC optical gains (unitless).
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

WAVELENGTHS = ("red", "yellow", "green", "blue")


def lambertian_order(semi_angle: float) -> float:
    """Lambertian mode number for a half-power semi-angle given in degrees."""
    if not 0.0 < semi_angle < 90.0:
        raise ValueError(f"semi-angle must lie in (0, 90) degrees, got {semi_angle}")
    return -math.log(2.0) / math.log(math.cos(math.radians(semi_angle)))


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("zero-length direction vector")
    return v / norm


@dataclass(frozen=True)
class RoomConfig:
    length: float = 8.0
    width: float = 4.0
    height: float = 3.0
    wall_ceiling_reflectance: float = 0.8
    floor_reflectance: float = 0.3
    lambertian_order_surfaces: float = 1.0
    first_order_element: float = 0.05
    second_order_element: float = 0.20

    def __post_init__(self):
        for name in ("length", "width", "height", "first_order_element", "second_order_element"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("wall_ceiling_reflectance", "floor_reflectance"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class ApSpec:
    position: tuple[float, float, float]
    boresight: tuple[float, float, float] = (0.0, 0.0, -1.0)
    semi_angle_half_power: float = 60.0
    lds_per_ap: int = 12
    per_ld_power: dict = field(
        default_factory=lambda: {"red": 0.8, "yellow": 0.5, "green": 0.3, "blue": 0.3}
    )

    @property
    def lambertian_mode_n(self) -> float:
        return lambertian_order(self.semi_angle_half_power)

    def power(self, wavelength: str) -> float:
        """Transmit power per wavelength for the whole AP (W)."""
        return self.lds_per_ap * self.per_ld_power[wavelength]


@dataclass(frozen=True)
class BranchSpec:
    azimuth: float
    elevation: float
    fov: float = 25.0
    area: float = 20e-6

    def __post_init__(self):
        if not 0.0 < self.fov <= 90.0:
            raise ValueError("fov must lie in (0, 90] degrees")

    @property
    def normal(self) -> np.ndarray:
        a, e = math.radians(self.azimuth), math.radians(self.elevation)
        return np.array([math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e)])


def _default_branches():
    return tuple(BranchSpec(az, 70.0) for az in (45.0, 135.0, 225.0, 315.0))


@dataclass(frozen=True)
class ReceiverSpec:
    branches: tuple[BranchSpec, ...] = field(default_factory=_default_branches)
    responsivity: dict = field(
        default_factory=lambda: {"red": 0.4, "yellow": 0.435, "green": 0.3, "blue": 0.2}
    )
    bandwidth: float = 1.75e9
    noise_density: float = 4.47e-12
    height: float = 1.0

    def __post_init__(self):
        if len(self.branches) != 4:
            raise ValueError("receiver needs exactly 4 branches")
        if any(r <= 0 for r in self.responsivity.values()):
            raise ValueError("responsivities must be positive")


# AP ceiling spots as (width, length) pairs; turned into (x, y, z) below.
DEFAULT_AP_LAYOUT = (
    (1, 1), (1, 3), (1, 5), (1, 7),
    (3, 1), (3, 3), (3, 5), (3, 7),
)


def default_aps(room: RoomConfig = RoomConfig()) -> tuple[ApSpec, ...]:
    return tuple(ApSpec(position=(float(l), float(w), room.height)) for w, l in DEFAULT_AP_LAYOUT)


def default_grid(room: RoomConfig = RoomConfig(), z: float = 1.0) -> np.ndarray:
    """Centres of the 1 m x 1 m cells; index = ix * n_y + iy."""
    xs = np.arange(0.5, room.length, 1.0)
    ys = np.arange(0.5, room.width, 1.0)
    pts = np.array([(x, y, z) for x in xs for y in ys])
    if len(pts) != 32:
        raise ValueError(f"default grid expects 32 points, got {len(pts)}")
    return pts


@dataclass
class SurfaceElements:
    """Struct-of-arrays view over the discretised room surfaces."""

    centers: np.ndarray  # (E, 3)
    normals: np.ndarray  # (E, 3), unit, pointing into the room
    areas: np.ndarray  # (E,)
    reflectance: np.ndarray  # (E,)
    surface: np.ndarray  # (E,) face index 0..5

    def __len__(self):
        return len(self.areas)


def _cells(extent: float, size: float) -> tuple[np.ndarray, np.ndarray]:
    n = max(1, math.ceil(extent / size - 1e-9))
    edges = np.minimum(np.arange(n + 1) * size, extent)
    return 0.5 * (edges[:-1] + edges[1:]), np.diff(edges)


def discretize_room(room: RoomConfig, element_size: float) -> SurfaceElements:
    if not 0 < element_size <= min(room.length, room.width, room.height):
        raise ValueError("element size must be positive and no larger than the smallest room dimension")
    L, W, H = room.length, room.width, room.height
    rho_w, rho_f = room.wall_ceiling_reflectance, room.floor_reflectance
    xc, xd = _cells(L, element_size)
    yc, yd = _cells(W, element_size)
    zc, zd = _cells(H, element_size)

    faces = [
        # (axis held fixed, its value, inward normal, reflectance, two free axes)
        (2, H, (0, 0, -1), rho_w, (xc, xd), (yc, yd), (0, 1)),  # ceiling
        (2, 0.0, (0, 0, 1), rho_f, (xc, xd), (yc, yd), (0, 1)),  # floor
        (1, 0.0, (0, 1, 0), rho_w, (xc, xd), (zc, zd), (0, 2)),  # wall y=0
        (1, W, (0, -1, 0), rho_w, (xc, xd), (zc, zd), (0, 2)),  # wall y=W
        (0, 0.0, (1, 0, 0), rho_w, (yc, yd), (zc, zd), (1, 2)),  # wall x=0
        (0, L, (-1, 0, 0), rho_w, (yc, yd), (zc, zd), (1, 2)),  # wall x=L
    ]
    centers, normals, areas, refl, surf = [], [], [], [], []
    for k, (fixed, value, normal, rho, (ac, ad), (bc, bd), (ia, ib)) in enumerate(faces):
        ga, gb = np.meshgrid(ac, bc, indexing="ij")
        da, db = np.meshgrid(ad, bd, indexing="ij")
        c = np.zeros((ga.size, 3))
        c[:, ia] = ga.ravel()
        c[:, ib] = gb.ravel()
        c[:, fixed] = value
        centers.append(c)
        normals.append(np.tile(np.asarray(normal, dtype=float), (ga.size, 1)))
        areas.append((da * db).ravel())
        refl.append(np.full(ga.size, rho))
        surf.append(np.full(ga.size, k))
    return SurfaceElements(
        np.concatenate(centers), np.concatenate(normals), np.concatenate(areas),
        np.concatenate(refl), np.concatenate(surf),
    )


def los_gain(tx_pos, tx_normal, tx_mode_n, rx_pos, rx_normal, rx_area, fov) -> float:
    """Lambertian line-of-sight DC gain between a point emitter and a detector.

    ``fov`` is the receiver half field of view in degrees; incidence beyond
    it gives exactly zero.
    """
    tx_pos, rx_pos = np.asarray(tx_pos, float), np.asarray(rx_pos, float)
    d = rx_pos - tx_pos
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        raise ValueError("transmitter and receiver are coincident")
    cos_phi = float(np.dot(tx_normal, d)) / dist
    cos_theta = -float(np.dot(rx_normal, d)) / dist
    if cos_phi <= 0.0 or cos_theta <= 0.0:
        return 0.0
    if math.degrees(math.acos(min(cos_theta, 1.0))) > fov:
        return 0.0
    return (tx_mode_n + 1) / (2 * math.pi * dist**2) * cos_phi**tx_mode_n * rx_area * cos_theta


def gain_matrix(src_pos, src_normal, src_n, dst_pos, dst_normal, dst_area, fov) -> np.ndarray:
    """Vectorised :func:`los_gain` over all (source, destination) pairs.

    Sources and destinations are row arrays of shape (S, 3) and (D, 3);
    ``dst_area`` broadcasts over destinations. Coincident pairs get 0.
    """
    src_pos = np.atleast_2d(src_pos)
    src_normal = np.atleast_2d(src_normal)
    dst_pos = np.atleast_2d(dst_pos)
    dst_normal = np.atleast_2d(dst_normal)
    d = dst_pos[None, :, :] - src_pos[:, None, :]
    dist2 = np.einsum("sdk,sdk->sd", d, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.sqrt(dist2)
        cos_phi = np.einsum("sdk,sk->sd", d, src_normal) / dist
        cos_theta = -np.einsum("sdk,dk->sd", d, dst_normal) / dist
        theta = np.degrees(np.arccos(np.clip(cos_theta, -1.0, 1.0)))
        ok = (dist2 > 0) & (cos_phi > 0) & (cos_theta > 0) & (theta <= fov)
        g = (src_n + 1) / (2 * np.pi * dist2) * np.power(np.where(ok, cos_phi, 0.0), src_n) \
            * np.asarray(dst_area) * cos_theta
    return np.where(ok, g, 0.0)


def _receiver_rows(grid: np.ndarray, receiver: ReceiverSpec):
    """Flatten (location, branch) receivers into rows ordered l * n_branch + f."""
    nb = len(receiver.branches)
    pos = np.repeat(grid, nb, axis=0)
    normals = np.tile(np.array([b.normal for b in receiver.branches]), (len(grid), 1))
    areas = np.tile(np.array([b.area for b in receiver.branches]), len(grid))
    fovs = np.tile(np.array([b.fov for b in receiver.branches]), len(grid))
    return pos, normals, areas, fovs


def _elements_to_receivers(elems: SurfaceElements, n_surf, rx) -> np.ndarray:
    pos, normals, areas, fovs = rx
    out = np.empty((len(elems), len(pos)))
    # per-branch FOVs may differ, so fill column blocks sharing one FOV
    for fov in np.unique(fovs):
        cols = np.flatnonzero(fovs == fov)
        out[:, cols] = gain_matrix(elems.centers, elems.normals, n_surf,
                                   pos[cols], normals[cols], areas[cols], fov)
    return out


def _ap_to_elements(ap: ApSpec, elems: SurfaceElements) -> np.ndarray:
    return gain_matrix(np.asarray(ap.position), unit(ap.boresight), ap.lambertian_mode_n,
                       elems.centers, elems.normals, elems.areas, 90.0)[0]


def _first_order_one_ap(ap, elems, to_rx, ) -> np.ndarray:
    src = _ap_to_elements(ap, elems) * elems.reflectance
    return np.einsum("e,er->r", src, to_rx)


def _second_order_one_ap(ap, elems, e2e, to_rx) -> np.ndarray:
    src = _ap_to_elements(ap, elems) * elems.reflectance
    mid = np.einsum("i,ij->j", src, e2e) * elems.reflectance
    return np.einsum("j,jr->r", mid, to_rx)


def element_to_element(elems: SurfaceElements, n_surf: float) -> np.ndarray:
    """Gain matrix between every pair of elements (diagonal and co-planar pairs are 0)."""
    return gain_matrix(elems.centers, elems.normals, n_surf,
                       elems.centers, elems.normals, elems.areas, 90.0)


@dataclass
class GainMap:
    """Optical DC gain per [location][branch][AP], split by path order."""

    los: np.ndarray
    first_order: np.ndarray
    second_order: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return (self.los + self.first_order) + self.second_order


def _reshape(flat_by_ap: list[np.ndarray], n_loc: int, n_branch: int) -> np.ndarray:
    # rows are l * n_branch + f; output is [l][f][a]
    return np.stack(flat_by_ap, axis=-1).reshape(n_loc, n_branch, len(flat_by_ap))


def los_map(aps, receiver, grid) -> np.ndarray:
    rx = _receiver_rows(grid, receiver)
    pos, normals, areas, fovs = rx
    per_ap = []
    for ap in aps:
        row = np.empty(len(pos))
        for fov in np.unique(fovs):
            cols = np.flatnonzero(fovs == fov)
            row[cols] = gain_matrix(np.asarray(ap.position), unit(ap.boresight), ap.lambertian_mode_n,
                                    pos[cols], normals[cols], areas[cols], fov)[0]
        per_ap.append(row)
    return _reshape(per_ap, len(grid), len(receiver.branches))


def first_order_map(room, aps, receiver, grid, element_size=None, workers=1) -> np.ndarray:
    elems = discretize_room(room, element_size or room.first_order_element)
    to_rx = _elements_to_receivers(elems, room.lambertian_order_surfaces, _receiver_rows(grid, receiver))
    per_ap = Parallel(n_jobs=workers)(delayed(_first_order_one_ap)(ap, elems, to_rx) for ap in aps)
    return _reshape(per_ap, len(grid), len(receiver.branches))


def second_order_map(room, aps, receiver, grid, element_size=None, workers=1) -> np.ndarray:
    elems = discretize_room(room, element_size or room.second_order_element)
    n_surf = room.lambertian_order_surfaces
    to_rx = _elements_to_receivers(elems, n_surf, _receiver_rows(grid, receiver))
    e2e = element_to_element(elems, n_surf)
    per_ap = Parallel(n_jobs=workers)(delayed(_second_order_one_ap)(ap, elems, e2e, to_rx) for ap in aps)
    return _reshape(per_ap, len(grid), len(receiver.branches))


def first_order_gain(ap: ApSpec, loc, branch: BranchSpec, elems: SurfaceElements, n_surf=1.0) -> float:
    """Single-triple first-bounce gain by direct summation over elements."""
    total = 0.0
    for c, nrm, area, rho in zip(elems.centers, elems.normals, elems.areas, elems.reflectance):
        if rho == 0.0:
            continue
        g1 = los_gain(ap.position, unit(ap.boresight), ap.lambertian_mode_n, c, nrm, area, 90.0)
        if g1 == 0.0:
            continue
        total += g1 * rho * los_gain(c, nrm, n_surf, loc, branch.normal, branch.area, branch.fov)
    return total


def second_order_gain(ap: ApSpec, loc, branch: BranchSpec, elems: SurfaceElements, n_surf=1.0) -> float:
    """Single-triple two-bounce gain by the explicit double sum over element pairs.

    Quadratic in the element count; meant for small rooms and cross-checks.
    """
    n = len(elems)
    first = [
        los_gain(ap.position, unit(ap.boresight), ap.lambertian_mode_n,
                 elems.centers[i], elems.normals[i], elems.areas[i], 90.0) * elems.reflectance[i]
        for i in range(n)
    ]
    last = [
        los_gain(elems.centers[j], elems.normals[j], n_surf, loc, branch.normal, branch.area, branch.fov)
        * elems.reflectance[j]
        for j in range(n)
    ]
    total = 0.0
    for i in range(n):
        if first[i] == 0.0:
            continue
        for j in range(n):
            if i == j or last[j] == 0.0:
                continue
            g = los_gain(elems.centers[i], elems.normals[i], n_surf,
                         elems.centers[j], elems.normals[j], elems.areas[j], 90.0)
            total += first[i] * g * last[j]
    return total


def trace_gains(room, aps, receiver, grid, workers=1) -> GainMap:
    return GainMap(
        los=los_map(aps, receiver, grid),
        first_order=first_order_map(room, aps, receiver, grid, workers=workers),
        second_order=second_order_map(room, aps, receiver, grid, workers=workers),
    )


@dataclass
class ChannelTensor:
    """Squared photocurrents indexed [location][branch][AP][wavelength] (A^2)."""

    R: np.ndarray
    N: np.ndarray
    gains: GainMap
    illumination_scale: float = 1.0
    fingerprint: str = ""
    config: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.R.shape


def signal_tensors(gains: GainMap, aps, receiver: ReceiverSpec, illumination_scale: float = 1.0):
    H = gains.total
    coef = np.array([[receiver.responsivity[w] * ap.power(w) for w in WAVELENGTHS] for ap in aps])
    R = (H[:, :, :, None] * coef[None, None, :, :]) ** 2
    N = illumination_scale**2 * R
    return R, N


def channel_config_dict(room, aps, receiver, grid, illumination_scale) -> dict:
    return {
        "room": asdict(room),
        "aps": [asdict(ap) for ap in aps],
        "receiver": {
            "branches": [asdict(b) for b in receiver.branches],
            "responsivity": dict(receiver.responsivity),
            "bandwidth": receiver.bandwidth,
            "noise_density": receiver.noise_density,
            "height": receiver.height,
        },
        "grid": np.asarray(grid).tolist(),
        "illumination_scale": illumination_scale,
    }


def fingerprint(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def build_channel_tensor(room=None, aps=None, receiver=None, grid=None,
                         illumination_scale: float = 1.0, workers: int = 1) -> ChannelTensor:
    room = room or RoomConfig()
    aps = aps or default_aps(room)
    receiver = receiver or ReceiverSpec()
    grid = default_grid(room, receiver.height) if grid is None else np.asarray(grid, float)
    if illumination_scale < 0:
        raise ValueError("illumination_scale must be non-negative")
    gains = trace_gains(room, aps, receiver, grid, workers=workers)
    R, N = signal_tensors(gains, aps, receiver, illumination_scale)
    cfg = channel_config_dict(room, aps, receiver, grid, illumination_scale)
    return ChannelTensor(R, N, gains, illumination_scale, fingerprint(cfg), cfg)


# Channel artifact layout (little-endian):
#   8 bytes  magic  b"OWCCHAN\n"
#   uint32   format version
#   uint32   header length in bytes (n)
#   n bytes  UTF-8 JSON header: dims, array order, fingerprint, config
#   float64  arrays listed in header["arrays"], each row-major
MAGIC = b"OWCCHAN\n"
FORMAT_VERSION = 1


def save_channel(ch: ChannelTensor, path) -> Path:
    path = Path(path)
    n_loc, n_br, n_ap, n_wl = ch.R.shape
    header = {
        "dims": [n_loc, n_br, n_ap, n_wl],
        "axes": ["location", "branch", "ap", "wavelength"],
        "wavelengths": list(WAVELENGTHS),
        "units": "A^2",
        "arrays": {"R": [n_loc, n_br, n_ap, n_wl], "N": [n_loc, n_br, n_ap, n_wl],
                   "H_los": [n_loc, n_br, n_ap], "H_first": [n_loc, n_br, n_ap],
                   "H_second": [n_loc, n_br, n_ap]},
        "illumination_scale": ch.illumination_scale,
        "fingerprint": ch.fingerprint,
        "config": ch.config,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for arr in (ch.R, ch.N, ch.gains.los, ch.gains.first_order, ch.gains.second_order):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def _read_header(fh) -> dict:
    if fh.read(8) != MAGIC:
        raise ValueError(f"{fh.name} is not a channel artifact")
    version, n = struct.unpack("<II", fh.read(8))
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported channel artifact version {version}")
    return json.loads(fh.read(n))


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh)


def load_channel(path) -> ChannelTensor:
    with open(path, "rb") as fh:
        header = _read_header(fh)
        arrays = {}
        for name in ("R", "N", "H_los", "H_first", "H_second"):
            shape = header["arrays"][name]
            count = int(np.prod(shape))
            arrays[name] = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
    gains = GainMap(arrays["H_los"], arrays["H_first"], arrays["H_second"])
    return ChannelTensor(arrays["R"], arrays["N"], gains, header["illumination_scale"],
                         header["fingerprint"], header["config"])
