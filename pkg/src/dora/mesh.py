"""Triangle mesh container, loaders, normalization and connectivity."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEGENERATE_AREA = 1e-12


class MeshError(ValueError):
    """Raised for unreadable or invalid mesh data."""


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle mesh with counter-clockwise winding.

    Arrays are copied and made read-only on construction.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(f) == 0:
            raise MeshError("mesh has zero faces")
        if f.min() < 0 or f.max() >= len(v):
            raise MeshError(
                f"face index out of range: indices span [{f.min()}, {f.max()}] "
                f"but mesh has {len(v)} vertices"
            )
        repeated = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if repeated.any():
            raise MeshError(f"face {int(np.flatnonzero(repeated)[0])} repeats a vertex")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.face_normals is not None:
            n = np.array(self.face_normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(f):
                raise MeshError("face_normals length does not match face count")
            n.setflags(write=False)
            object.__setattr__(self, "face_normals", n)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) corner positions."""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(_face_cross(self), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def bounds(self) -> np.ndarray:
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])


@dataclass(frozen=True, eq=False)
class EdgeAdjacency:
    """Undirected edges (low index first) and the faces incident to each.

    ``edges`` is sorted lexicographically; ``faces[i]`` lists the faces
    touching ``edges[i]`` in increasing face order.
    """

    edges: np.ndarray
    faces: tuple[tuple[int, ...], ...]
    lengths: np.ndarray
    _lookup: dict = field(repr=False, default_factory=dict)

    def __len__(self) -> int:
        return len(self.edges)

    def incident(self, a: int, b: int) -> tuple[int, ...]:
        return self.faces[self._lookup[(min(a, b), max(a, b))]]

    def face_counts(self) -> np.ndarray:
        return np.array([len(fs) for fs in self.faces], dtype=np.int64)

    def as_dict(self) -> dict[tuple[int, int], list[int]]:
        return {(int(a), int(b)): list(fs) for (a, b), fs in zip(self.edges, self.faces)}


@dataclass(frozen=True)
class WatertightReport:
    boundary_edges: int
    nonmanifold_edges: int

    @property
    def is_watertight(self) -> bool:
        return self.boundary_edges == 0 and self.nonmanifold_edges == 0


def _face_cross(mesh: TriangleMesh) -> np.ndarray:
    tri = mesh.triangles
    return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])


def face_normals(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals for every face plus a degenerate-face mask.

    Degenerate faces (area below ``DEGENERATE_AREA``) get a zero normal.
    Precomputed normals on the mesh are used when present.
    """
    cross = _face_cross(mesh)
    norm = np.linalg.norm(cross, axis=1)
    degenerate = 0.5 * norm < DEGENERATE_AREA
    if mesh.face_normals is not None:
        normals = np.array(mesh.face_normals)
        normals[degenerate] = 0.0
        return normals, degenerate
    normals = np.zeros_like(cross)
    ok = ~degenerate
    normals[ok] = cross[ok] / norm[ok, None]
    return normals, degenerate


def face_normal(mesh: TriangleMesh, face: int) -> np.ndarray:
    """Unit normal of one face following its winding.

    Raises MeshError for a degenerate face.
    """
    a, b, c = mesh.vertices[mesh.faces[face]]
    cross = np.cross(b - a, c - a)
    norm = np.linalg.norm(cross)
    if 0.5 * norm < DEGENERATE_AREA:
        raise MeshError(f"face {face} is degenerate (area {0.5 * norm:.3g})")
    return cross / norm


def build_edge_adjacency(mesh: TriangleMesh) -> EdgeAdjacency:
    f = mesh.faces
    half = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    owner = np.tile(np.arange(len(f)), 3)
    keys = np.sort(half, axis=1)
    order = np.lexsort((owner, keys[:, 1], keys[:, 0]))
    keys, owner = keys[order], owner[order]
    edges, start = np.unique(keys, axis=0, return_index=True)
    groups = np.split(owner, start[1:])
    faces = tuple(tuple(int(x) for x in g) for g in groups)
    lengths = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
    edges.setflags(write=False)
    lengths.setflags(write=False)
    lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
    return EdgeAdjacency(edges=edges, faces=faces, lengths=lengths, _lookup=lookup)


def check_watertight(mesh: TriangleMesh, adjacency: EdgeAdjacency | None = None) -> WatertightReport:
    adj = adjacency if adjacency is not None else build_edge_adjacency(mesh)
    counts = adj.face_counts()
    return WatertightReport(
        boundary_edges=int((counts == 1).sum()),
        nonmanifold_edges=int((counts > 2).sum()),
    )


def normalize_to_unit_cube(mesh: TriangleMesh) -> TriangleMesh:
    """Center the bounding box at the origin and scale its longest side to 2."""
    lo, hi = mesh.bounds()
    extent = (hi - lo).max()
    if not extent > 0:
        raise MeshError("cannot normalize a mesh with zero extent")
    center = 0.5 * (lo + hi)
    scale = 2.0 / extent
    verts = (mesh.vertices - center) * scale
    # exact corners: guards against 1 + 1e-16 drift on repeated normalization
    np.clip(verts, -1.0, 1.0, out=verts)
    return TriangleMesh(verts, mesh.faces, mesh.face_normals)


# ---------------------------------------------------------------- file io


def load_mesh(path: str | Path, format: str | None = None) -> TriangleMesh:
    """Read an OBJ or PLY triangle mesh; quads and polygons are fan-triangulated."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    try:
        if fmt == "obj":
            verts, faces = _read_obj(path)
        elif fmt == "ply":
            verts, faces = _read_ply(path)
        else:
            raise MeshError(f"unsupported mesh format {fmt!r}")
    except (OSError, UnicodeDecodeError, struct.error) as exc:
        raise MeshError(f"failed to read {path}: {exc}") from exc
    if len(faces) == 0:
        raise MeshError(f"{path} contains zero faces")
    return TriangleMesh(np.asarray(verts, dtype=np.float64).reshape(-1, 3), np.asarray(faces).reshape(-1, 3))


def _fan(poly: list[int]) -> list[tuple[int, int, int]]:
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _read_obj(path: Path):
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError("vertex needs 3 coordinates")
                elif parts[0] == "f":
                    poly = []
                    for tok in parts[1:]:
                        idx = int(tok.split("/")[0])
                        # OBJ is 1-based; negative indices count back from the latest vertex
                        poly.append(idx - 1 if idx > 0 else len(verts) + idx)
                    if len(poly) < 3:
                        raise ValueError("face needs at least 3 vertices")
                    faces.extend(_fan(poly))
            except ValueError as exc:
                raise MeshError(f"{path}:{lineno}: {exc}") from exc
    return verts, faces


_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _read_ply(path: Path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise MeshError(f"{path} is not a PLY file")
        fmt = None
        elements: list[tuple[str, int, list]] = []
        while True:
            raw = fh.readline()
            if not raw:
                raise MeshError(f"{path}: unexpected end of header")
            parts = raw.decode("ascii").split()
            if not parts or parts[0] in ("comment", "obj_info"):
                continue
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if parts[1] == "list":
                    elements[-1][2].append((parts[4], ("list", parts[2], parts[3])))
                else:
                    elements[-1][2].append((parts[2], parts[1]))
            elif parts[0] == "end_header":
                break
        if fmt == "ascii":
            tokens = fh.read().decode("ascii").split()
            data = _parse_ply_ascii(tokens, elements)
        elif fmt == "binary_little_endian":
            data = _parse_ply_binary(fh.read(), elements)
        else:
            raise MeshError(f"{path}: unsupported PLY format {fmt!r}")
    if "vertex" not in data:
        raise MeshError(f"{path}: no vertex element")
    vert = data["vertex"]
    verts = np.column_stack([vert["x"], vert["y"], vert["z"]])
    faces: list[tuple[int, int, int]] = []
    face = data.get("face", {})
    polys = face.get("vertex_indices", face.get("vertex_index", []))
    for poly in polys:
        if len(poly) < 3:
            raise MeshError(f"{path}: face with fewer than 3 vertices")
        faces.extend(_fan([int(i) for i in poly]))
    return verts, faces


def _parse_ply_ascii(tokens, elements):
    pos = 0
    out = {}
    for name, count, props in elements:
        cols = {p[0]: [] for p in props}
        for _ in range(count):
            for pname, ptype in props:
                if isinstance(ptype, tuple):
                    n = int(tokens[pos])
                    cols[pname].append([float(t) for t in tokens[pos + 1:pos + 1 + n]])
                    pos += 1 + n
                else:
                    cols[pname].append(float(tokens[pos]))
                    pos += 1
        out[name] = cols
    return out


def _parse_ply_binary(buf: bytes, elements):
    pos = 0
    out = {}
    for name, count, props in elements:
        cols = {p[0]: [] for p in props}
        if props and not any(isinstance(p[1], tuple) for p in props):
            dtype = np.dtype([(p[0], "<" + _PLY_TYPES[p[1]]) for p in props])
            arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
            pos += dtype.itemsize * count
            out[name] = {p[0]: arr[p[0]].astype(np.float64) for p in props}
            continue
        for _ in range(count):
            for pname, ptype in props:
                if isinstance(ptype, tuple):
                    cfmt, ifmt = _PLY_TYPES[ptype[1]], _PLY_TYPES[ptype[2]]
                    (n,) = struct.unpack_from("<" + cfmt, buf, pos)
                    pos += struct.calcsize(cfmt)
                    vals = struct.unpack_from(f"<{n}{ifmt}", buf, pos)
                    pos += struct.calcsize(ifmt) * n
                    cols[pname].append(list(vals))
                else:
                    f = _PLY_TYPES[ptype]
                    (val,) = struct.unpack_from("<" + f, buf, pos)
                    pos += struct.calcsize(f)
                    cols[pname].append(val)
        out[name] = cols
    return out


def save_obj(mesh: TriangleMesh, path: str | Path) -> None:
    """Write ASCII OBJ with 1-based indices and full float precision."""
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_ply(mesh: TriangleMesh, path: str | Path, binary: bool = False) -> None:
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property double x", "property double y", "property double z",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    head = ("\n".join(header) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(head)
        if binary:
            fh.write(mesh.vertices.astype("<f8").tobytes())
            rec = np.zeros(mesh.n_faces, dtype=[("n", "u1"), ("idx", "<i4", (3,))])
            rec["n"] = 3
            rec["idx"] = mesh.faces
            fh.write(rec.tobytes())
        else:
            body = [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
            body += [f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist()]
            fh.write(("\n".join(body) + "\n").encode("ascii"))
