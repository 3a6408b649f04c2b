"""Little-endian binary containers for cubes (RPC1) and images (RIM1).

RPC1 header: magic ``b"RPC1"``, ``n_elem``, ``n_slow``, ``n_range`` as u32,
then ``range_bin_m``, ``lambda_m``, ``fs_slow`` as f64. The payload is
interleaved f64 ``(re, im)`` pairs, element-major, slow time in the middle,
range fastest.

RIM1 header: magic ``b"RIM1"``, ``n_range``, ``n_azimuth``, ``n_slow``,
``grid_kind`` (0 polar, 1 cartesian) as u32, then ``fs_slow`` as f64, then
the range axis (``n_range`` f64) and azimuth axis (``n_azimuth`` f64). The
payload is interleaved ``(re, im)`` f64 in ``[range, azimuth, slow]`` order.
"""

import struct

import numpy as np

from .beamform import RadarImage
from .exceptions import ContainerError
from .scene import RangeProfileCube

_RPC1 = struct.Struct("<4s3I3d")
_RIM1 = struct.Struct("<4s4Id")
_GRID_CODES = {"polar": 0, "cartesian": 1}


def _payload(data):
    return np.ascontiguousarray(data, dtype="<c16").view("<f8").tobytes()


def _complex(buf, offset, shape):
    count = int(np.prod(shape)) * 2
    expected = offset + 8 * count
    if len(buf) != expected:
        raise ContainerError(f"payload size {len(buf)} bytes, expected {expected}")
    flat = np.frombuffer(buf, dtype="<f8", count=count, offset=offset)
    return (flat[0::2] + 1j * flat[1::2]).reshape(shape)


def cube_to_bytes(cube):
    n, t, r = cube.data.shape
    header = _RPC1.pack(b"RPC1", n, t, r, cube.range_bin_m, cube.lambda_m, cube.fs_slow)
    return header + _payload(cube.data)


def cube_from_bytes(buf):
    if len(buf) < _RPC1.size:
        raise ContainerError("truncated RPC1 header")
    magic, n, t, r, bin_m, lam, fs = _RPC1.unpack_from(buf)
    if magic != b"RPC1":
        raise ContainerError(f"bad magic {magic!r}, expected b'RPC1'")
    data = _complex(buf, _RPC1.size, (n, t, r))
    return RangeProfileCube(data, bin_m, lam, fs)


def write_cube(cube, path):
    with open(path, "wb") as fh:
        fh.write(cube_to_bytes(cube))


def read_cube(path):
    with open(path, "rb") as fh:
        return cube_from_bytes(fh.read())


def image_to_bytes(image):
    r, a, t = image.data.shape
    header = _RIM1.pack(b"RIM1", r, a, t, _GRID_CODES[image.grid_kind], image.fs_slow)
    axes = np.concatenate([image.range_axis, image.azimuth_axis]).astype("<f8").tobytes()
    return header + axes + _payload(image.data)


def image_from_bytes(buf):
    if len(buf) < _RIM1.size:
        raise ContainerError("truncated RIM1 header")
    magic, r, a, t, code, fs = _RIM1.unpack_from(buf)
    if magic != b"RIM1":
        raise ContainerError(f"bad magic {magic!r}, expected b'RIM1'")
    kinds = {v: k for k, v in _GRID_CODES.items()}
    if code not in kinds:
        raise ContainerError(f"unknown grid kind code {code}")
    offset = _RIM1.size
    if len(buf) < offset + 8 * (r + a):
        raise ContainerError("truncated RIM1 axes")
    axes = np.frombuffer(buf, dtype="<f8", count=r + a, offset=offset)
    data = _complex(buf, offset + 8 * (r + a), (r, a, t))
    return RadarImage(data, axes[:r].copy(), axes[r:].copy(), fs, grid_kind=kinds[code])


def write_image(image, path):
    with open(path, "wb") as fh:
        fh.write(image_to_bytes(image))


def read_image(path):
    with open(path, "rb") as fh:
        return image_from_bytes(fh.read())
