"""Point cloud file I/O.

Formats:
  PLY  ascii and binary_little_endian; vertex properties x,y,z (float32),
       optional nx,ny,nz (float32), optional label (uchar).
  XYZ  whitespace-separated ``x y z [nx ny nz]`` per line.
  OBJ  vertex extraction only (``v`` lines, ``vn`` when counts match).

Label sidecar files carry one integer per line, aligned with point order.
Binary PLY written here round-trips bit-exactly.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import DataError, ParseError
from .model import PointCloud

_PLY_TYPES = {
    "float": ("<f4", 4), "float32": ("<f4", 4),
    "double": ("<f8", 8), "float64": ("<f8", 8),
    "uchar": ("u1", 1), "uint8": ("u1", 1),
    "char": ("i1", 1), "int8": ("i1", 1),
    "short": ("<i2", 2), "int16": ("<i2", 2),
    "ushort": ("<u2", 2), "uint16": ("<u2", 2),
    "int": ("<i4", 4), "int32": ("<i4", 4),
    "uint": ("<u4", 4), "uint32": ("<u4", 4),
}


def _detect_format(path, fmt):
    if fmt is not None:
        return fmt.lower()
    ext = os.path.splitext(path)[1].lower().lstrip(".")
    if ext in ("ply", "xyz", "obj"):
        return ext
    raise DataError(f"cannot infer cloud format from extension: {path!r}")


def load_cloud(path, fmt=None, with_labels=False):
    """Read a point cloud; returns PointCloud, or (PointCloud, labels|None)
    when `with_labels` is true and the container can carry labels (PLY)."""
    fmt = _detect_format(path, fmt)
    if fmt == "ply":
        cloud, labels = _read_ply(path)
    elif fmt == "xyz":
        cloud, labels = _read_xyz(path), None
    elif fmt == "obj":
        cloud, labels = _read_obj(path), None
    else:
        raise DataError(f"unsupported cloud format: {fmt!r}")
    if with_labels:
        return cloud, labels
    return cloud


def save_cloud(cloud, path, fmt=None, labels=None, binary=True):
    """Write a point cloud (normals and labels included when present)."""
    fmt = _detect_format(path, fmt)
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (len(cloud),):
            raise DataError(
                f"labels shape {labels.shape} does not match cloud size {len(cloud)}"
            )
    if fmt == "ply":
        _write_ply(cloud, path, labels, binary)
    elif fmt == "xyz":
        if labels is not None:
            raise DataError("xyz format cannot carry labels; use a sidecar file")
        _write_xyz(cloud, path)
    else:
        raise DataError(f"unsupported format for writing: {fmt!r}")


def load_labels(path):
    """Label sidecar: one integer per line."""
    values = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                values.append(int(text))
            except ValueError:
                raise ParseError(f"expected an integer, got {text!r}",
                                 path=path, line=lineno) from None
    if not values:
        raise ParseError("label file is empty", path=path)
    return np.asarray(values, dtype=np.int64)


def save_labels(labels, path):
    labels = np.asarray(labels).ravel()
    with open(path, "w") as fh:
        fh.write("\n".join(str(int(v)) for v in labels))
        fh.write("\n")


# ---------------------------------------------------------------- PLY


def _read_ply_header(fh, path):
    line = fh.readline()
    if line.strip() != b"ply":
        raise ParseError("missing 'ply' magic", path=path, line=1)
    fmt = None
    elements = []  # list of (name, count, [(prop_name, type_str)])
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise ParseError("header ended before end_header", path=path, line=lineno)
        tok = raw.decode("ascii", "replace").split()
        if not tok or tok[0] == "comment" or tok[0] == "obj_info":
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unsupported ply format {raw.strip()!r}",
                                 path=path, line=lineno)
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before any element", path=path, line=lineno)
            if tok[1] == "list":
                elements[-1][2].append((tok[-1], ("list", tok[2], tok[3])))
            else:
                elements[-1][2].append((tok[-1], tok[1]))
        elif tok[0] == "end_header":
            break
        else:
            raise ParseError(f"unrecognized header line {raw.strip()!r}",
                             path=path, line=lineno)
    if fmt is None:
        raise ParseError("header has no format line", path=path)
    return fmt, elements, lineno


def _read_ply(path):
    with open(path, "rb") as fh:
        fmt, elements, header_lines = _read_ply_header(fh, path)
        vertex = next(((n, c, p) for n, c, p in elements if n == "vertex"), None)
        if vertex is None:
            raise ParseError("no vertex element", path=path)
        _, count, props = vertex
        if count == 0:
            raise DataError(f"{path}: zero points")
        for pname, ptype in props:
            if isinstance(ptype, tuple):
                raise ParseError("list property in vertex element is unsupported",
                                 path=path)
            if ptype not in _PLY_TYPES:
                raise ParseError(f"unsupported property type {ptype!r}", path=path)
        names = [p[0] for p in props]
        if fmt == "binary_little_endian":
            if elements[0][0] != "vertex":
                raise ParseError(
                    "binary ply must have the vertex element first", path=path)
            dtype = np.dtype([(n, _PLY_TYPES[t][0]) for n, t in props])
            buf = fh.read(dtype.itemsize * count)
            if len(buf) < dtype.itemsize * count:
                raise ParseError(
                    f"truncated vertex data ({len(buf)} of {dtype.itemsize * count} bytes)",
                    path=path, offset=len(buf))
            table = np.frombuffer(buf, dtype=dtype, count=count)
        else:
            rows = []
            lineno = header_lines
            for _ in range(count):
                raw = fh.readline()
                lineno += 1
                if not raw:
                    raise ParseError("fewer vertex lines than declared",
                                     path=path, line=lineno)
                parts = raw.split()
                if len(parts) != len(props):
                    raise ParseError(
                        f"expected {len(props)} values, got {len(parts)}",
                        path=path, line=lineno)
                try:
                    rows.append([float(v) for v in parts])
                except ValueError:
                    raise ParseError(f"bad number in {raw.strip()!r}",
                                     path=path, line=lineno) from None
            arr = np.asarray(rows, dtype=np.float64)
            table = {n: arr[:, i] for i, n in enumerate(names)}

        def col(name):
            return np.asarray(table[name], dtype=np.float64)

        for want in ("x", "y", "z"):
            if want not in names:
                raise ParseError(f"vertex element lacks property {want!r}", path=path)
        pts = np.column_stack([col("x"), col("y"), col("z")])
        normals = None
        if all(n in names for n in ("nx", "ny", "nz")):
            normals = np.column_stack([col("nx"), col("ny"), col("nz")])
        labels = None
        if "label" in names:
            labels = np.asarray(table["label"], dtype=np.int64)
        return PointCloud(pts, normals), labels


def _write_ply(cloud, path, labels, binary):
    has_n = cloud.has_normals
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header.append(f"element vertex {len(cloud)}")
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    for axis in "xyz":
        header.append(f"property float {axis}")
    if has_n:
        for axis in "xyz":
            header.append(f"property float n{axis}")
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
    if labels is not None:
        header.append("property uchar label")
        fields.append(("label", "u1"))
    header.append("end_header")

    table = np.empty(len(cloud), dtype=np.dtype(fields))
    pts32 = cloud.points.astype(np.float32)
    table["x"], table["y"], table["z"] = pts32[:, 0], pts32[:, 1], pts32[:, 2]
    if has_n:
        nrm32 = cloud.normals.astype(np.float32)
        table["nx"], table["ny"], table["nz"] = nrm32[:, 0], nrm32[:, 1], nrm32[:, 2]
    if labels is not None:
        if labels.min() < 0 or labels.max() > 255:
            raise DataError("labels out of uchar range")
        table["label"] = labels.astype(np.uint8)

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(table.tobytes())
        else:
            cols = [table[name] for name, _ in fields]
            for i in range(len(cloud)):
                vals = []
                for (name, typ), c in zip(fields, cols):
                    if typ == "u1":
                        vals.append(str(int(c[i])))
                    else:
                        vals.append(np.format_float_positional(
                            np.float32(c[i]), unique=True, trim="0"))
                fh.write((" ".join(vals) + "\n").encode("ascii"))


# ---------------------------------------------------------------- XYZ / OBJ


def _read_xyz(path):
    pts, normals = [], []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) not in (3, 6):
                raise ParseError(f"expected 3 or 6 columns, got {len(parts)}",
                                 path=path, line=lineno)
            try:
                vals = [float(v) for v in parts]
            except ValueError:
                raise ParseError(f"bad number in {text!r}",
                                 path=path, line=lineno) from None
            pts.append(vals[:3])
            if len(vals) == 6:
                normals.append(vals[3:])
    if not pts:
        raise DataError(f"{path}: zero points")
    if normals and len(normals) != len(pts):
        raise ParseError("mixed 3- and 6-column lines", path=path)
    return PointCloud(np.asarray(pts), np.asarray(normals) if normals else None)


def _write_xyz(cloud, path):
    cols = [cloud.points]
    if cloud.has_normals:
        cols.append(cloud.normals)
    data = np.hstack(cols)
    with open(path, "w") as fh:
        for row in data:
            fh.write(" ".join(np.format_float_positional(v, unique=True, trim="0")
                              for v in row) + "\n")


def _read_obj(path):
    pts, normals = [], []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ParseError("vertex line with fewer than 3 coordinates",
                                     path=path, line=lineno)
                try:
                    pts.append([float(v) for v in parts[1:4]])
                except ValueError:
                    raise ParseError(f"bad number in {text!r}",
                                     path=path, line=lineno) from None
            elif parts[0] == "vn":
                try:
                    normals.append([float(v) for v in parts[1:4]])
                except ValueError:
                    raise ParseError(f"bad number in {text!r}",
                                     path=path, line=lineno) from None
    if not pts:
        raise DataError(f"{path}: zero points")
    # vn count matching v count is the only layout where per-vertex normals
    # are unambiguous without parsing faces
    use_normals = normals if len(normals) == len(pts) else None
    return PointCloud(np.asarray(pts), np.asarray(use_normals) if use_normals else None)
