import hashlib
import math
from pathlib import Path

import numpy as np


def sanitize(name: str) -> str:
    """Sanitize a string so it is safe for use as a file name stem."""
    if not name:
        return "unnamed"
    safe_chars = []
    for ch in name.strip():
        if ch.isalnum() or ch in "._-+":
            safe_chars.append(ch)
        else:
            safe_chars.append("_")
    s = "_".join(part for part in "".join(safe_chars).split("_") if part)
    trimmed = s[:120] if len(s) > 120 else s
    return trimmed or "unnamed"


def file_hash(path: Path, chunk_size: int = 1 << 20) -> str:
    """Compute the SHA-1 hash of a file (reads in chunks). Used for provenance in reports."""
    sha1 = hashlib.sha1()
    with open(path, "rb") as f:
        while True:
            data = f.read(chunk_size)
            if not data:
                break
            sha1.update(data)
    return sha1.hexdigest()


def fmt(x: float) -> str:
    """Fixed scientific notation with 9 significant digits."""
    return f"{float(x):.8e}"


def wrap_angle(theta):
    """Map angles to (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    out = np.mod(theta + math.pi, 2.0 * math.pi) - math.pi
    return np.where(out == -math.pi, math.pi, out)


def to_polar(points, corner=(0.0, 0.0), axis: float = 0.0):
    """Corner-local polar coordinates (r, theta), theta measured from ``axis``.

    ``points`` is an (n, 2) array; returns two (n,) arrays.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    dx = p[:, 0] - corner[0]
    dy = p[:, 1] - corner[1]
    r = np.hypot(dx, dy)
    theta = wrap_angle(np.arctan2(dy, dx) - axis)
    return r, theta


def from_polar(r, theta, corner=(0.0, 0.0), axis: float = 0.0) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    x = corner[0] + r * np.cos(theta + axis)
    y = corner[1] + r * np.sin(theta + axis)
    return np.column_stack([np.ravel(x), np.ravel(y)])


def point_segment_distance(points, a, b) -> np.ndarray:
    """Distance from each point to the segment [a, b]."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(p[:, 0] - a[0], p[:, 1] - a[1])
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(p[:, 0] - proj[:, 0], p[:, 1] - proj[:, 1])


def segments_intersect(p1, p2, q1, q2, eps: float = 1e-14) -> bool:
    """Proper or touching intersection test for two closed segments."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return (min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
                and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps)

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and \
       ((d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)):
        return True
    if abs(d1) <= eps and on_segment(q1, q2, p1):
        return True
    if abs(d2) <= eps and on_segment(q1, q2, p2):
        return True
    if abs(d3) <= eps and on_segment(p1, p2, q1):
        return True
    if abs(d4) <= eps and on_segment(p1, p2, q2):
        return True
    return False
