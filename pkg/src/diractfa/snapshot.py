"""Binary snapshots of fields, matrix fields and phase-space symbols.

Layout (all little-endian)::

    offset  type     field
    0       4 bytes  magic  b"DTFA"
    4       uint32   version (1)
    8       uint32   kind    0 = spinor field   values (N^d, n)
                             1 = matrix field   values (N^d, n, n)
                             2 = Weyl symbol    values (N^d x N^d, n, n) over (x, xi)
    12      uint32   d       spatial dimension
    16      uint32   N       nodes per axis
    20      float64  L       period per axis
    28      uint32   n       spinor dimension
    32      float64  m       mass (0 when no Dirac set is attached)
    40      ...      payload, interleaved (re, im) float64 pairs, row-major
                     over nodes then value indices

The xi-axes of a kind-2 symbol are the frequency nodes of the x lattice.
"""

import struct

import numpy as np

from .clifford import build_dirac_matrices
from .lattice import Lattice, SpinorField

MAGIC = b"DTFA"
VERSION = 1
HEADER = struct.Struct("<4sIIIIdId")

KIND_FIELD = 0
KIND_MATRIX = 1
KIND_SYMBOL = 2


class SnapshotError(ValueError):
    pass


def _payload_shape(kind, d, N, n):
    if kind == KIND_FIELD:
        return (N,) * d + (n,)
    if kind == KIND_MATRIX:
        return (N,) * d + (n, n)
    if kind == KIND_SYMBOL:
        return (N,) * (2 * d) + (n, n)
    raise SnapshotError(f"unknown snapshot kind {kind}")


def write_array(path, kind, lattice, values, m=0.0):
    if isinstance(lattice.L, tuple):
        raise SnapshotError("snapshots store isotropic lattices only")
    values = np.asarray(values, dtype=np.complex128)
    n = values.shape[-1]
    expected = _payload_shape(kind, lattice.d, lattice.N, n)
    if values.shape != expected:
        raise SnapshotError(f"payload shape {values.shape} does not match {expected}")
    head = HEADER.pack(MAGIC, VERSION, kind, lattice.d, lattice.N, float(lattice.L), n, float(m))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(values).astype("<c16").tobytes())


def read_array(path):
    """Return ``(kind, lattice, values, m)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise SnapshotError("file too short for a snapshot header")
    magic, version, kind, d, N, L, n, m = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    lattice = Lattice(d, N, L)
    shape = _payload_shape(kind, d, N, n)
    count = int(np.prod(shape))
    body = raw[HEADER.size:]
    if len(body) != 16 * count:
        raise SnapshotError(f"payload has {len(body)} bytes, expected {16 * count}")
    values = np.frombuffer(body, dtype="<c16").astype(np.complex128).reshape(shape)
    return kind, lattice, values, m


def save_field(path, field):
    m = field.dirac.m if field.dirac is not None else 0.0
    write_array(path, KIND_FIELD, field.lattice, field.values, m)


def load_field(path, attach_dirac=True):
    """Load a spinor field; a Dirac set is rebuilt when ``n`` matches ``2**ceil(d/2)``."""
    kind, lattice, values, m = read_array(path)
    if kind != KIND_FIELD:
        raise SnapshotError(f"expected a field snapshot, got kind {kind}")
    dirac = None
    if attach_dirac and values.shape[-1] > 1:
        dset = build_dirac_matrices(lattice.d, m)
        if dset.n == values.shape[-1]:
            dirac = dset
    return SpinorField(lattice, values, dirac)


def save_symbol(path, sigma):
    write_array(path, KIND_SYMBOL, sigma.lattice, sigma.values)


def load_symbol(path):
    from .weyl import WeylSymbol
    kind, lattice, values, _ = read_array(path)
    if kind != KIND_SYMBOL:
        raise SnapshotError(f"expected a symbol snapshot, got kind {kind}")
    return WeylSymbol(lattice, values)


def save_matrix_field(path, lattice, values):
    write_array(path, KIND_MATRIX, lattice, values)


def load_matrix_field(path):
    kind, lattice, values, _ = read_array(path)
    if kind != KIND_MATRIX:
        raise SnapshotError(f"expected a matrix-field snapshot, got kind {kind}")
    return lattice, values
