"""Векторная геометрия по пакету сред.

Все операции поэлементные (без matmul/einsum), поэтому результат для среды
не зависит от размера пакета.
"""
import numpy as np


def vec3(x, y, z) -> np.ndarray:
    x, y, z = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                                  np.asarray(y, dtype=np.float64),
                                  np.asarray(z, dtype=np.float64))
    return np.stack([x, y, z], axis=-1)


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return vec3(a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
                a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
                a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])


def norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(dot(a, a))


def scale(v: np.ndarray, s) -> np.ndarray:
    return v * np.asarray(s, dtype=np.float64)[..., None]


def rotate_z(v: np.ndarray, yaw) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return vec3(c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1], v[..., 2])


def matmul3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Произведение пакетов матриц 3x3 поэлементными операциями"""
    return (a[..., :, 0, None] * b[..., None, 0, :]
            + a[..., :, 1, None] * b[..., None, 1, :]
            + a[..., :, 2, None] * b[..., None, 2, :])


def matvec3(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    return m[..., :, 0] * v[..., None, 0] + m[..., :, 1] * v[..., None, 1] + m[..., :, 2] * v[..., None, 2]


def rot_x(angle) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack([np.stack([one, zero, zero], -1),
                     np.stack([zero, c, -s], -1),
                     np.stack([zero, s, c], -1)], -2)


def rot_y(angle) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack([np.stack([c, zero, s], -1),
                     np.stack([zero, one, zero], -1),
                     np.stack([-s, zero, c], -1)], -2)


def rot_z(angle) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(c), np.zeros_like(c)
    return np.stack([np.stack([c, -s, zero], -1),
                     np.stack([s, c, zero], -1),
                     np.stack([zero, zero, one], -1)], -2)


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def box_penetration(p: np.ndarray, radius, center: np.ndarray, axes, half_extents):
    """Проникновение сферы (p, radius) в ориентированный параллелепипед.

    axes - три единичных вектора (…, 3); half_extents - три полуразмера.
    Возвращает (depth, normal, surface_point): depth > 0 при контакте, normal
    направлена от бруса к сфере, surface_point - ближайшая точка бруса.
    """
    d = p - center
    local = [dot(d, a) for a in axes]
    clamped = [np.clip(loc, -e, e) for loc, e in zip(local, half_extents)]
    outside = [loc - c for loc, c in zip(local, clamped)]
    dist = np.sqrt(outside[0] ** 2 + outside[1] ** 2 + outside[2] ** 2)

    # центр сферы внутри бруса: выталкивание через ближайшую грань
    face_gap = [e - np.abs(loc) for loc, e in zip(local, half_extents)]
    gaps = np.stack(face_gap, axis=-1)
    face = np.argmin(gaps, axis=-1)
    inside = dist <= 0.0

    safe = np.where(inside, 1.0, dist)
    n_local = [np.where(inside, 0.0, o / safe) for o in outside]
    for i in range(3):
        sign = np.where(local[i] >= 0.0, 1.0, -1.0)
        n_local[i] = np.where(inside & (face == i), sign, n_local[i])
    depth = np.where(inside, radius + np.min(gaps, axis=-1), radius - dist)

    normal = scale(axes[0], n_local[0]) + scale(axes[1], n_local[1]) + scale(axes[2], n_local[2])
    surface = center + scale(axes[0], clamped[0]) + scale(axes[1], clamped[1]) \
        + scale(axes[2], clamped[2])
    return depth, normal, surface


def row_sum(x: np.ndarray) -> np.ndarray:
    """Последовательная сумма по последней оси (порядок не зависит от формы пакета)"""
    x = np.asarray(x)
    out = x[..., 0].copy()
    for i in range(1, x.shape[-1]):
        out = out + x[..., i]
    return out
