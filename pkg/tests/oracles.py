"""Slow, independent reference computations used to check the library."""

import math


def resample(points, step):
    """Arc-length walk in plain Python."""
    pts = [tuple(map(float, p)) for p in points]
    seglens = [math.dist(pts[i], pts[i + 1]) for i in range(len(pts) - 1)]
    total = sum(seglens)
    out = []
    k = 0
    while k * step < total - 1e-9:
        s = k * step
        acc = 0.0
        for i, L in enumerate(seglens):
            if s <= acc + L or i == len(seglens) - 1:
                t = (s - acc) / L
                a, b = pts[i], pts[i + 1]
                out.append((a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t))
                break
            acc += L
        k += 1
    out.append(pts[-1])
    return out


def chamfer_directed(a, b, step):
    ra, rb = resample(a, step), resample(b, step)
    return sum(min(math.dist(p, q) for q in rb) for p in ra) / len(ra)


def cosine(u, v):
    dot = sum(x * y for x, y in zip(u, v))
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(x * x for x in v))
    return 0.0 if nu == 0 or nv == 0 else dot / (nu * nv)


def point_line_distance(p, a, b):
    """Distance from p to the infinite line through a and b."""
    (px, py), (ax, ay), (bx, by) = p, a, b
    return abs((bx - ax) * (ay - py) - (ax - px) * (by - ay)) / math.dist(a, b)
