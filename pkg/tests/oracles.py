"""Slow, independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math

import numpy as np


def brute_dihedrals(vertices, faces) -> dict[tuple[int, int], float]:
    """Dihedral angle (degrees) of every edge shared by exactly two faces, by a pairwise loop."""
    shared: dict[tuple[int, int], list[int]] = {}
    for fi, f in enumerate(faces):
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            shared.setdefault((min(a, b), max(a, b)), []).append(fi)

    def normal(f):
        p0, p1, p2 = (np.asarray(vertices[i], dtype=float) for i in f)
        u, v = p1 - p0, p2 - p0
        n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
        length = math.sqrt(sum(c * c for c in n))
        return [c / length for c in n]

    out = {}
    for key, fs in shared.items():
        if len(fs) != 2:
            continue
        n1, n2 = normal(faces[fs[0]]), normal(faces[fs[1]])
        dot = max(-1.0, min(1.0, sum(x * y for x, y in zip(n1, n2))))
        out[key] = math.degrees(math.acos(dot))
    return out


def greedy_fps(points, k: int, start: int) -> list[int]:
    """Max-min greedy selection written as a double loop."""
    pts = [tuple(map(float, p)) for p in points]
    chosen = [start]
    while len(chosen) < k:
        best, best_d = None, -1.0
        for i, p in enumerate(pts):
            if i in chosen:
                continue
            d = min(sum((a - b) ** 2 for a, b in zip(p, pts[j])) for j in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return chosen


def closest_point_triangle(p, a, b, c) -> np.ndarray:
    """Closest point on triangle abc to p (Voronoi-region walk)."""
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return a
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        return a + d1 / (d1 - d3) * ab
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        return a + d2 / (d2 - d6) * ac
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b)
    denom = 1.0 / (va + vb + vc)
    return a + ab * (vb * denom) + ac * (vc * denom)


def distance_to_mesh(p, mesh) -> float:
    tri = mesh.triangles
    return min(float(np.linalg.norm(p - closest_point_triangle(p, *t))) for t in tri)


def distance_to_segment(p, a, b) -> float:
    ab = b - a
    t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def brute_nearest(src, dst) -> np.ndarray:
    src, dst = np.asarray(src, float), np.asarray(dst, float)
    return np.array([np.sqrt(((dst - s) ** 2).sum(axis=1)).min() for s in src])


def all_subsets_maxmin_ok(points, order) -> bool:
    """Every pick is at least as far from the chosen set as every unchosen point."""
    pts = np.asarray(points, float)
    for t in range(1, len(order)):
        chosen = pts[order[:t]]
        dist = lambda i: np.min(((chosen - pts[i]) ** 2).sum(axis=1))  # noqa: E731
        picked = dist(order[t])
        rest = set(range(len(pts))) - set(order[: t + 1])
        if any(dist(i) > picked for i in rest):
            return False
    return True


def reference_canny(img, low, high):
    """Loop-based Canny with replicate borders, same tie rules as the library."""
    img = np.asarray(img, float)
    h, w = img.shape
    ax = np.arange(5) - 2.0
    g1 = np.exp(-(ax**2) / (2 * 1.4**2))
    kern = np.outer(g1, g1)
    kern /= kern.sum()

    def px(a, r, c):
        return a[min(max(r, 0), h - 1), min(max(c, 0), w - 1)]

    blur = np.zeros_like(img)
    for r in range(h):
        for c in range(w):
            blur[r, c] = sum(kern[i, j] * px(img, r + i - 2, c + j - 2) for i in range(5) for j in range(5))
    sob = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    gx, gy = np.zeros_like(img), np.zeros_like(img)
    for r in range(h):
        for c in range(w):
            gx[r, c] = sum(sob[i][j] * px(blur, r + i - 1, c + j - 1) for i in range(3) for j in range(3))
            gy[r, c] = sum(sob[j][i] * px(blur, r + i - 1, c + j - 1) for i in range(3) for j in range(3))
    mag = np.hypot(gx, gy)

    def mag_at(r, c):
        return mag[r, c] if 0 <= r < h and 0 <= c < w else 0.0

    thin = np.zeros_like(img)
    for r in range(h):
        for c in range(w):
            a = math.degrees(math.atan2(gy[r, c], gx[r, c])) % 180.0
            if 22.5 <= a < 67.5:
                dr, dc = 1, 1
            elif 67.5 <= a < 112.5:
                dr, dc = 1, 0
            elif 112.5 <= a < 157.5:
                dr, dc = 1, -1
            else:
                dr, dc = 0, 1
            m = mag[r, c]
            if m >= mag_at(r + dr, c + dc) and m > mag_at(r - dr, c - dc):
                thin[r, c] = m
    out = np.zeros((h, w), dtype=np.uint8)
    stack = [(r, c) for r in range(h) for c in range(w) if thin[r, c] > high]
    while stack:
        r, c = stack.pop()
        if out[r, c]:
            continue
        out[r, c] = 1
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                rr, cc = r + i, c + j
                if 0 <= rr < h and 0 <= cc < w and not out[rr, cc] and thin[rr, cc] > low:
                    stack.append((rr, cc))
    return out


def raycast_coverage(mesh, frame, res):
    """Per-pixel Moller-Trumbore ray casting along -z of ``frame``; returns coverage and nearest face."""
    verts = np.asarray(mesh.vertices, float) @ np.asarray(frame).T
    hit = np.zeros((res, res), bool)
    face = np.full((res, res), -1)
    direction = np.array([0.0, 0.0, -1.0])
    for row in range(res):
        for col in range(res):
            origin = np.array([-1 + (col + 0.5) * 2 / res, 1 - (row + 0.5) * 2 / res, 10.0])
            best = math.inf
            for fi, f in enumerate(mesh.faces):
                a, b, c = verts[f]
                e1, e2 = b - a, c - a
                pv = np.cross(direction, e2)
                det = e1 @ pv
                if abs(det) < 1e-15:
                    continue
                tv = origin - a
                u = (tv @ pv) / det
                qv = np.cross(tv, e1)
                v = (direction @ qv) / det
                if u < -1e-12 or v < -1e-12 or u + v > 1 + 1e-12:
                    continue
                t = (e2 @ qv) / det
                if t < best - 1e-12:
                    best, face[row, col] = t, fi
            hit[row, col] = best < math.inf
    return hit, face


__all__ = [
    "all_subsets_maxmin_ok",
    "brute_dihedrals",
    "brute_nearest",
    "closest_point_triangle",
    "distance_to_mesh",
    "distance_to_segment",
    "greedy_fps",
    "raycast_coverage",
    "reference_canny",
    "itertools",
]
