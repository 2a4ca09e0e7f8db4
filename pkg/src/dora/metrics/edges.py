"""Canny edge detection and binary dilation on small images."""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy import ndimage

CANNY_LOW = 20.0
CANNY_HIGH = 200.0
DILATE_RADIUS = 2

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


def gaussian_kernel(size: int = 5, sigma: float = 1.4) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


_GAUSSIAN = gaussian_kernel()


def luminance(encoded: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an encoded [0, 1] RGB image as 8-bit grayscale."""
    y = encoded[..., 0] * 0.299 + encoded[..., 1] * 0.587 + encoded[..., 2] * 0.114
    return np.clip(np.rint(y * 255.0), 0, 255).astype(np.uint8)


@njit(cache=True)
def _clamped(a, r, c):
    h, w = a.shape
    return a[min(max(r, 0), h - 1), min(max(c, 0), w - 1)]


@njit(cache=True)
def _gradients(img, kernel, sobel):
    """Blur with replicate borders, then Sobel; sums run row-major over the kernel."""
    h, w = img.shape
    blurred = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for i in range(5):
                for j in range(5):
                    acc += kernel[i, j] * _clamped(img, r + i - 2, c + j - 2)
            blurred[r, c] = acc
    gx = np.empty((h, w))
    gy = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            ax = 0.0
            ay = 0.0
            for i in range(3):
                for j in range(3):
                    v = _clamped(blurred, r + i - 1, c + j - 1)
                    ax += sobel[i, j] * v
                    ay += sobel[j, i] * v
            gx[r, c] = ax
            gy[r, c] = ay
    return gx, gy


@njit(cache=True)
def _non_max_suppression(mag, gx, gy):
    h, w = mag.shape
    thin = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            a = math.degrees(math.atan2(gy[r, c], gx[r, c])) % 180.0
            # neighbour offset along the gradient
            if 22.5 <= a < 67.5:
                dr, dc = 1, 1
            elif 67.5 <= a < 112.5:
                dr, dc = 1, 0
            elif 112.5 <= a < 157.5:
                dr, dc = 1, -1
            else:
                dr, dc = 0, 1
            m = mag[r, c]
            ahead = mag[r + dr, c + dc] if 0 <= r + dr < h and 0 <= c + dc < w else 0.0
            behind = mag[r - dr, c - dc] if 0 <= r - dr < h and 0 <= c - dc < w else 0.0
            # strict on one side, inclusive on the other: plateaus of width two
            # (symmetric steps) keep exactly one pixel
            if m >= ahead and m > behind:
                thin[r, c] = m
    return thin


def canny(image: np.ndarray, low: float = CANNY_LOW, high: float = CANNY_HIGH) -> np.ndarray:
    """Binary Canny edge mask of an 8-bit grayscale image.

    Gaussian blur (5x5, sigma 1.4), Sobel gradients, non-maximum suppression
    and hysteresis: pixels above ``high`` seed edges that grow through
    8-connected pixels above ``low``.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("canny expects a single-channel image")
    gx, gy = _gradients(np.ascontiguousarray(img), _GAUSSIAN, _SOBEL_X)
    thin = _non_max_suppression(np.hypot(gx, gy), gx, gy)
    weak = thin > low
    strong = thin > high
    labels, n = ndimage.label(weak, structure=np.ones((3, 3)))
    if n == 0:
        return np.zeros(img.shape, dtype=np.uint8)
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[np.unique(labels[strong])] = True
    seeded[0] = False
    return seeded[labels].astype(np.uint8)


def dilate(mask: np.ndarray, radius: int = DILATE_RADIUS, iterations: int = 1) -> np.ndarray:
    """Dilation by a (2r+1) x (2r+1) square, repeated ``iterations`` times."""
    out = np.asarray(mask).astype(bool)
    if radius <= 0 or iterations <= 0:
        return out.astype(np.uint8)
    size = 2 * radius + 1
    for _ in range(iterations):
        out = ndimage.maximum_filter(out, size=size, mode="constant", cval=0)
    return out.astype(np.uint8)
