"""Surface sampling: uniform, farthest point, salient edges and Sharp Edge Sampling."""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .mesh import EdgeAdjacency, MeshError, TriangleMesh, build_edge_adjacency, face_normals

UNIFORM = 0
SALIENT = 1

DEFAULT_TAU = 30.0
DEFAULT_N_DESIRED = 16384
DEFAULT_N_TOTAL = 32768


@dataclass(frozen=True, eq=False)
class SalientEdgeSet:
    """Edges whose dihedral angle exceeds ``tau`` degrees.

    ``faces`` holds the two incident faces of each edge; ``n_vertices`` is the
    vertex count of the mesh the set was built on.
    """

    edges: np.ndarray
    angles: np.ndarray
    faces: np.ndarray
    tau: float
    n_vertices: int

    @property
    def count(self) -> int:
        return len(self.edges)

    def vertex_indices(self) -> np.ndarray:
        """Sorted unique vertices touched by a salient edge."""
        return np.unique(self.edges)


@dataclass(frozen=True, eq=False)
class SurfacePointCloud:
    positions: np.ndarray
    normals: np.ndarray
    labels: np.ndarray
    seed: int = 0

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        lab = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if not len(p) == len(n) == len(lab):
            raise ValueError("positions, normals and labels must have equal length")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls, seed: int = 0) -> "SurfacePointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, np.uint8), seed)

    def subset(self, idx) -> "SurfacePointCloud":
        return SurfacePointCloud(self.positions[idx], self.normals[idx], self.labels[idx], self.seed)

    def select(self, label: int) -> "SurfacePointCloud":
        return self.subset(self.labels == label)

    @property
    def n_salient(self) -> int:
        return int((self.labels == SALIENT).sum())

    @property
    def n_uniform(self) -> int:
        return int((self.labels == UNIFORM).sum())


def concat(*clouds: SurfacePointCloud, seed: int | None = None) -> SurfacePointCloud:
    seed = clouds[0].seed if seed is None else seed
    return SurfacePointCloud(
        np.concatenate([c.positions for c in clouds]),
        np.concatenate([c.normals for c in clouds]),
        np.concatenate([c.labels for c in clouds]),
        seed,
    )


# ------------------------------------------------------------ uniform sampling


def sample_uniform(
    mesh: TriangleMesh, n: int, seed: int = 0, blue_noise: bool = False
) -> SurfacePointCloud:
    """Area-weighted random surface samples.

    With ``blue_noise`` the surface is oversampled 4x and thinned back to
    ``n`` points by greedy sample elimination.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    normals, _ = face_normals(mesh)
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise MeshError("cannot sample a mesh with zero surface area")
    rng = np.random.default_rng(seed)
    m = 4 * n if blue_noise else n
    face = rng.choice(len(areas), size=m, p=areas / total)
    r = rng.random((m, 2))
    # fold the unit square onto the triangle
    flip = r.sum(axis=1) > 1.0
    r[flip] = 1.0 - r[flip]
    tri = mesh.triangles[face]
    pts = tri[:, 0] + r[:, :1] * (tri[:, 1] - tri[:, 0]) + r[:, 1:] * (tri[:, 2] - tri[:, 0])
    cloud = SurfacePointCloud(pts, normals[face], np.full(m, UNIFORM, np.uint8), seed)
    if blue_noise:
        cloud = cloud.subset(sample_elimination(cloud.positions, n))
    return cloud


def sample_elimination(points: np.ndarray, n: int) -> np.ndarray:
    """Thin ``points`` to ``n`` by repeatedly removing the point whose nearest
    surviving neighbour is closest. Returns surviving indices in input order.

    Ties go to the lower index.
    """
    points = np.asarray(points, dtype=np.float64)
    m = len(points)
    if n >= m:
        return np.arange(m)
    tree = cKDTree(points)
    alive = np.ones(m, dtype=bool)
    nearest = np.empty(m, dtype=np.int64)
    dist = np.empty(m)
    k0 = min(8, m)
    d, j = tree.query(points, k=k0)
    d = d.reshape(m, -1)
    j = j.reshape(m, -1)
    # column 0 is the point itself
    nearest[:] = j[:, 1]
    dist[:] = d[:, 1]
    heap = [(dist[i], i, nearest[i]) for i in range(m)]
    heapq.heapify(heap)
    # points whose recorded nearest neighbour is i
    watchers: dict[int, list[int]] = {}
    for i in range(m):
        watchers.setdefault(int(nearest[i]), []).append(i)

    def refresh(i):
        k = k0
        while True:
            dd, jj = tree.query(points[i], k=min(k, m))
            for di, ji in zip(np.atleast_1d(dd), np.atleast_1d(jj)):
                if ji != i and alive[ji]:
                    return di, int(ji)
            if k >= m:
                return np.inf, -1
            k *= 4

    remaining = m
    while remaining > n:
        di, i, ji = heapq.heappop(heap)
        if not alive[i] or nearest[i] != ji or dist[i] != di:
            continue
        alive[i] = False
        remaining -= 1
        for w in watchers.pop(i, []):
            if alive[w] and nearest[w] == i:
                dist[w], nearest[w] = refresh(w)
                watchers.setdefault(int(nearest[w]), []).append(w)
                heapq.heappush(heap, (dist[w], w, nearest[w]))
    return np.flatnonzero(alive)


# --------------------------------------------------------------------- fps


def fps(points: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Greedy farthest point sampling.

    Starts at ``seed mod len(points)``; each step picks the point farthest
    from the selected set, lowest index on ties. Returns ``k`` indices in
    selection order.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("fps expects an (N, D) array")
    n = len(points)
    if n == 0:
        raise ValueError("fps on an empty point set")
    if not 1 <= k <= n:
        raise ValueError(f"fps needs 1 <= k <= {n}, got k={k}")
    out = np.empty(k, dtype=np.int64)
    out[0] = seed % n
    d = np.sum((points - points[out[0]]) ** 2, axis=1)
    # chosen points are masked so duplicates of them can still be picked
    d[out[0]] = -np.inf
    for t in range(1, k):
        # argmax returns the first maximum: lowest-index tie rule
        out[t] = int(np.argmax(d))
        np.minimum(d, np.sum((points - points[out[t]]) ** 2, axis=1), out=d)
        d[out[t]] = -np.inf
    return out


# ------------------------------------------------------------ salient edges


def dihedral_angles(
    mesh: TriangleMesh, adjacency: EdgeAdjacency | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dihedral angle in degrees for every manifold edge with two nondegenerate faces.

    Returns ``(edge_rows, angles, face_pairs)`` where ``edge_rows`` index into
    ``adjacency.edges``.
    """
    adj = adjacency if adjacency is not None else build_edge_adjacency(mesh)
    normals, degenerate = face_normals(mesh)
    counts = adj.face_counts()
    rows = np.flatnonzero(counts == 2)
    pairs = np.array([adj.faces[r] for r in rows], dtype=np.int64).reshape(-1, 2)
    ok = ~(degenerate[pairs[:, 0]] | degenerate[pairs[:, 1]])
    rows, pairs = rows[ok], pairs[ok]
    dots = np.einsum("ij,ij->i", normals[pairs[:, 0]], normals[pairs[:, 1]])
    angles = np.degrees(np.arccos(np.clip(dots, -1.0, 1.0)))
    return rows, angles, pairs


def detect_salient_edges(
    mesh: TriangleMesh, tau: float = DEFAULT_TAU, adjacency: EdgeAdjacency | None = None
) -> SalientEdgeSet:
    if not 0 < tau < 180:
        raise ValueError(f"tau must lie in (0, 180) degrees, got {tau}")
    adj = adjacency if adjacency is not None else build_edge_adjacency(mesh)
    rows, angles, pairs = dihedral_angles(mesh, adj)
    keep = angles > tau
    return SalientEdgeSet(
        edges=adj.edges[rows[keep]].copy(),
        angles=angles[keep],
        faces=pairs[keep],
        tau=float(tau),
        n_vertices=mesh.n_vertices,
    )


def _bisectors(normals: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    n1, n2 = normals[pairs[:, 0]], normals[pairs[:, 1]]
    b = n1 + n2
    norm = np.linalg.norm(b, axis=1)
    # opposite normals (knife edge) have no bisector; keep the first face's
    flat = norm < 1e-12
    b[flat] = n1[flat]
    norm[flat] = 1.0
    return b / norm[:, None]


def sample_salient(
    mesh: TriangleMesh, gamma: SalientEdgeSet, n_desired: int = DEFAULT_N_DESIRED, seed: int = 0
) -> SurfacePointCloud:
    """Salient point set built from the salient vertices and edges.

    * more salient vertices than wanted: farthest point subset of them;
    * fewer: all of them plus evenly spaced interior points on every edge,
      with the remainder going one each to the longest edges;
    * none: an empty cloud.
    """
    if gamma.n_vertices != mesh.n_vertices:
        raise ValueError(
            f"salient edge set was built on a mesh with {gamma.n_vertices} vertices, "
            f"this mesh has {mesh.n_vertices}"
        )
    verts = gamma.vertex_indices()
    n_v = len(verts)
    if n_v == 0 or n_desired <= 0:
        return SurfacePointCloud.empty(seed)

    normals, _ = face_normals(mesh)
    edge_normals = _bisectors(normals, gamma.faces)
    # vertex normal: normalized sum of incident salient-edge bisectors
    acc = np.zeros((mesh.n_vertices, 3))
    np.add.at(acc, gamma.edges[:, 0], edge_normals)
    np.add.at(acc, gamma.edges[:, 1], edge_normals)
    vnorm = acc[verts]
    lens = np.linalg.norm(vnorm, axis=1)
    fallback = lens < 1e-12
    if fallback.any():
        first = {}
        for e, (a, b) in enumerate(gamma.edges):
            first.setdefault(int(a), e)
            first.setdefault(int(b), e)
        vnorm[fallback] = edge_normals[[first[int(v)] for v in verts[fallback]]]
        lens[fallback] = 1.0
    vnorm = vnorm / lens[:, None]
    vpos = mesh.vertices[verts]

    if n_desired <= n_v:
        idx = fps(vpos, n_desired, seed)
        return SurfacePointCloud(vpos[idx], vnorm[idx], np.full(n_desired, SALIENT, np.uint8), seed)

    n_gamma = gamma.count
    extra = n_desired - n_v
    per_edge = np.full(n_gamma, extra // n_gamma, dtype=np.int64)
    a = mesh.vertices[gamma.edges[:, 0]]
    b = mesh.vertices[gamma.edges[:, 1]]
    lengths = np.linalg.norm(b - a, axis=1)
    remainder = extra - per_edge.sum()
    if remainder:
        # longest first; stable order keeps the lower edge key on ties
        order = np.argsort(-lengths, kind="stable")
        per_edge[order[:remainder]] += 1
    pos = [vpos]
    nrm = [vnorm]
    for m in np.unique(per_edge):
        if m == 0:
            continue
        sel = np.flatnonzero(per_edge == m)
        t = np.arange(1, m + 1) / (m + 1)
        p = a[sel, None, :] + t[None, :, None] * (b[sel] - a[sel])[:, None, :]
        pos.append(p.reshape(-1, 3))
        nrm.append(np.repeat(edge_normals[sel], m, axis=0))
    positions = np.concatenate(pos)
    return SurfacePointCloud(
        positions, np.concatenate(nrm), np.full(len(positions), SALIENT, np.uint8), seed
    )


def ses_sample(
    mesh: TriangleMesh,
    n_total: int = DEFAULT_N_TOTAL,
    n_desired: int = DEFAULT_N_DESIRED,
    tau: float = DEFAULT_TAU,
    seed: int = 0,
    blue_noise: bool = False,
    gamma: SalientEdgeSet | None = None,
) -> SurfacePointCloud:
    """Salient points plus uniform fill-up to exactly ``n_total`` points."""
    if n_desired > n_total:
        raise ValueError(f"n_desired ({n_desired}) exceeds n_total ({n_total})")
    if gamma is None:
        gamma = detect_salient_edges(mesh, tau)
    salient = sample_salient(mesh, gamma, n_desired, seed)
    assert len(salient) <= n_total
    n_uniform = n_total - len(salient)
    if n_uniform == 0:
        return salient
    uniform = sample_uniform(mesh, n_uniform, seed, blue_noise)
    return concat(salient, uniform, seed=seed)


# ------------------------------------------------------------ serialization

MAGIC = b"DORA"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHIIq")


def save_points_bin(cloud: SurfacePointCloud, path: str | Path) -> None:
    """Little-endian binary point cloud.

    Layout: magic ``DORA``, u16 version, u16 reserved, u32 point count,
    u32 salient count, i64 seed, then f32 positions (N x 3), f32 normals
    (N x 3) and u8 labels (N).
    """
    n = len(cloud)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, 0, n, cloud.n_salient, cloud.seed))
        fh.write(cloud.positions.astype("<f4").tobytes())
        fh.write(cloud.normals.astype("<f4").tobytes())
        fh.write(cloud.labels.astype("u1").tobytes())


def load_points_bin(path: str | Path) -> SurfacePointCloud:
    buf = Path(path).read_bytes()
    magic, version, _, n, n_salient, seed = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off = _HEADER.size
    pos = np.frombuffer(buf, "<f4", n * 3, off).reshape(n, 3)
    off += 12 * n
    nrm = np.frombuffer(buf, "<f4", n * 3, off).reshape(n, 3)
    off += 12 * n
    lab = np.frombuffer(buf, "u1", n, off)
    cloud = SurfacePointCloud(pos.astype(np.float64), nrm.astype(np.float64), lab, int(seed))
    if cloud.n_salient != n_salient:
        raise ValueError(f"{path}: salient count mismatch")
    return cloud


def save_points_ply(cloud: SurfacePointCloud, path: str | Path, binary: bool = True) -> None:
    """PLY with float xyz, nx ny nz and a ``uchar label`` (0 uniform, 1 salient)."""
    n = len(cloud)
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"comment seed {cloud.seed}",
        f"element vertex {n}",
        "property float x", "property float y", "property float z",
        "property float nx", "property float ny", "property float nz",
        "property uchar label",
        "end_header",
    ]
    rec = np.zeros(n, dtype=[("p", "<f4", (3,)), ("n", "<f4", (3,)), ("label", "u1")])
    rec["p"] = cloud.positions
    rec["n"] = cloud.normals
    rec["label"] = cloud.labels
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(rec.tobytes())
        else:
            lines = [
                " ".join(f"{v:.9g}" for v in (*r["p"], *r["n"])) + f" {int(r['label'])}"
                for r in rec
            ]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


def load_points_ply(path: str | Path) -> SurfacePointCloud:
    from .mesh import _parse_ply_ascii, _parse_ply_binary

    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ValueError(f"{path} is not a PLY file")
        fmt, seed, props, count = None, 0, [], 0
        while True:
            parts = fh.readline().decode("ascii").split()
            if not parts:
                continue
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[:2] == ["comment", "seed"]:
                seed = int(parts[2])
            elif parts[0] == "element":
                count = int(parts[2])
            elif parts[0] == "property":
                props.append((parts[2], parts[1]))
            elif parts[0] == "end_header":
                break
        rest = fh.read()
    elements = [("vertex", count, props)]
    if fmt == "ascii":
        data = _parse_ply_ascii(rest.decode("ascii").split(), elements)["vertex"]
    else:
        data = _parse_ply_binary(rest, elements)["vertex"]
    pos = np.column_stack([data["x"], data["y"], data["z"]])
    nrm = np.column_stack([data["nx"], data["ny"], data["nz"]])
    return SurfacePointCloud(pos, nrm, np.asarray(data["label"]).astype(np.uint8), seed)
