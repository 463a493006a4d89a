"""Minimal PLY ingestion and emission.

Supports ascii 1.0 and binary_little_endian 1.0 files with a vertex
element carrying float or double x, y, z and optional nx, ny, nz. Unknown
scalar properties are skipped. Malformed input raises ParseError carrying
the byte offset of the problem.
"""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud
from .errors import ParseError

_SCALAR_BYTES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4,
    "int64": 8, "uint64": 8, "double": 8, "float64": 8,
}
_FLOAT_DTYPES = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8"}


class _Element:
    def __init__(self, name: str, count: int):
        self.name = name
        self.count = count
        self.properties: list[tuple[str, str]] = []  # (type, name)
        self.has_list = False


def _parse_header(blob: bytes):
    offset = 0
    lines = []
    while True:
        end = blob.find(b"\n", offset)
        if end < 0:
            raise ParseError("header not terminated by end_header", len(blob))
        raw = blob[offset:end]
        lines.append((offset, raw.rstrip(b"\r").decode("ascii", "replace")))
        offset = end + 1
        if lines[-1][1].strip() == "end_header":
            break
    line_iter = iter(lines)

    off, first = next(line_iter)
    if first.strip() != "ply":
        raise ParseError("missing 'ply' magic line", off)
    off, fmt = next(line_iter, (len(blob), ""))
    parts = fmt.split()
    if len(parts) != 3 or parts[0] != "format":
        raise ParseError(f"expected format line, got {fmt!r}", off)
    if parts[1] == "binary_big_endian":
        raise ParseError("big-endian PLY is not supported", off)
    if parts[1] not in ("ascii", "binary_little_endian") or parts[2] != "1.0":
        raise ParseError(f"unsupported format {fmt!r}", off)
    binary = parts[1] == "binary_little_endian"

    elements: list[_Element] = []
    for off, line in line_iter:
        tok = line.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "element":
            if len(tok) != 3:
                raise ParseError(f"bad element line {line!r}", off)
            try:
                count = int(tok[2])
            except ValueError:
                raise ParseError(f"bad element count in {line!r}", off) from None
            elements.append(_Element(tok[1], count))
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before any element", off)
            if tok[1] == "list":
                elements[-1].has_list = True
            elif len(tok) == 3:
                if tok[1] not in _SCALAR_BYTES:
                    raise ParseError(f"unknown property type {tok[1]!r}", off)
                elements[-1].properties.append((tok[1], tok[2]))
            else:
                raise ParseError(f"bad property line {line!r}", off)
        else:
            raise ParseError(f"unexpected header line {line!r}", off)
    return binary, elements, offset


def _vertex_columns(elem: _Element, header_end: int):
    names = [name for _, name in elem.properties]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise ParseError(f"vertex element lacks property {axis!r}", header_end)
        ptype = elem.properties[names.index(axis)][0]
        if ptype not in _FLOAT_DTYPES:
            raise ParseError(f"property {axis!r} must be float or double", header_end)
    has_normals = all(a in names for a in ("nx", "ny", "nz"))
    return names, has_normals


def read_ply(path) -> PointCloud:
    with open(str(path), "rb") as fh:
        blob = fh.read()
    binary, elements, payload_off = _parse_header(blob)

    vertex = None
    for elem in elements:
        if elem.name == "vertex":
            vertex = elem
            break
        # Skip a leading element; only possible when its row size is fixed.
        if elem.has_list:
            raise ParseError(f"cannot skip list element {elem.name!r}", payload_off)
        if binary:
            payload_off += elem.count * sum(_SCALAR_BYTES[t] for t, _ in elem.properties)
        else:
            payload_off = _skip_ascii_rows(blob, payload_off, elem.count)
    if vertex is None:
        raise ParseError("no vertex element", payload_off)
    if vertex.has_list:
        raise ParseError("list properties in vertex element are not supported", payload_off)
    names, has_normals = _vertex_columns(vertex, payload_off)

    if binary:
        row_bytes = sum(_SCALAR_BYTES[t] for t, _ in vertex.properties)
        need = vertex.count * row_bytes
        if len(blob) - payload_off < need:
            raise ParseError(
                f"truncated payload: need {need} bytes for {vertex.count} vertices",
                len(blob),
            )
        dtype = np.dtype(
            [
                (f"c{i}", _FLOAT_DTYPES.get(t, f"V{_SCALAR_BYTES[t]}"))
                for i, (t, _) in enumerate(vertex.properties)
            ]
        )
        table = np.frombuffer(blob, dtype=dtype, count=vertex.count, offset=payload_off)

        def column(name):
            i = names.index(name)
            if vertex.properties[i][0] not in _FLOAT_DTYPES:
                raise ParseError(f"property {name!r} must be float or double", payload_off)
            return table[f"c{i}"].astype(np.float64)

    else:
        rows, _ = _ascii_rows(blob, payload_off, vertex.count, len(vertex.properties))

        def column(name):
            return rows[:, names.index(name)]

    if vertex.count == 0:
        pts = np.zeros((0, 3))
        normals = None
    else:
        pts = np.column_stack([column("x"), column("y"), column("z")])
        normals = None
        if has_normals:
            normals = np.column_stack([column("nx"), column("ny"), column("nz")])
            lengths = np.linalg.norm(normals, axis=1, keepdims=True)
            if np.any(lengths == 0):
                raise ParseError("zero-length normal", payload_off)
            normals = normals / lengths
    return PointCloud(points=pts, normals=normals)


def _skip_ascii_rows(blob: bytes, offset: int, count: int) -> int:
    for _ in range(count):
        end = blob.find(b"\n", offset)
        if end < 0:
            raise ParseError("truncated ascii payload", len(blob))
        offset = end + 1
    return offset


def _ascii_rows(blob: bytes, offset: int, count: int, width: int):
    rows = np.empty((count, width))
    for r in range(count):
        end = blob.find(b"\n", offset)
        line = blob[offset:] if end < 0 else blob[offset:end]
        fields = line.split()
        if len(fields) < width:
            raise ParseError(
                f"vertex row {r} has {len(fields)} fields, expected {width}", offset
            )
        try:
            rows[r] = [float(f) for f in fields[:width]]
        except ValueError:
            raise ParseError(f"non-numeric field in vertex row {r}", offset) from None
        if end < 0:
            if r != count - 1:
                raise ParseError("truncated ascii payload", len(blob))
            offset = len(blob)
        else:
            offset = end + 1
    return rows, offset


def write_ply(cloud: PointCloud, path, mode: str = "binary", dtype: str = "float32"):
    """Emit a PLY that read_ply round-trips. dtype float32 or float64."""
    if mode not in ("ascii", "binary"):
        raise ValueError(f"mode must be ascii or binary, got {mode!r}")
    if dtype not in ("float32", "float64"):
        raise ValueError(f"dtype must be float32 or float64, got {dtype!r}")
    ply_type = "float" if dtype == "float32" else "double"
    with_normals = cloud.normals is not None

    header = ["ply"]
    header.append(
        "format ascii 1.0" if mode == "ascii" else "format binary_little_endian 1.0"
    )
    header.append(f"element vertex {len(cloud)}")
    props = ["x", "y", "z"] + (["nx", "ny", "nz"] if with_normals else [])
    header.extend(f"property {ply_type} {p}" for p in props)
    header.append("end_header")

    data = cloud.points
    if with_normals:
        data = np.hstack([cloud.points, cloud.normals])

    with open(str(path), "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if mode == "ascii":
            cast = data.astype("<f4").astype(np.float64) if dtype == "float32" else data
            for row in cast:
                fh.write((" ".join(f"{v:.17g}" for v in row) + "\n").encode("ascii"))
        else:
            fh.write(np.ascontiguousarray(data, dtype=_FLOAT_DTYPES[ply_type]).tobytes())
