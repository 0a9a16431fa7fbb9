"""Embedded discrete surfaces: generation, intersection and occlusion.

The surface is a closed, watertight triangulation wrapped around a cable
centerline (regular polygon cross-sections swept along parallel-transported
frames, optional end caps).  Segment-triangle intersection and ray-parity
occlusion queries against the surface classify mesh edges and nodes for the
embedded-boundary flow solver.
"""

import dataclasses
import logging

import numpy as np

from .errors import GeometryError

log = logging.getLogger(__name__)

NODE_REAL = 0
NODE_GHOST = 1

# deterministic, irrational-ish ray direction to dodge vertex/edge grazing
_RAY_DIR = np.array([0.5377397265891, 0.7236789533342, 0.4327250973421])
_RAY_DIR /= np.linalg.norm(_RAY_DIR)


@dataclasses.dataclass
class Intersection:
    """One segment-surface hit."""

    point: np.ndarray
    param: float
    normal: np.ndarray
    triangle: int
    bary: np.ndarray = None
    edge: int = -1


class EmbeddedSurface:
    """Closed triangulated surface driven by rigid cross-sections.

    Attributes
    ----------
    ref_positions : array (N, 3)
        Undeformed node positions.
    triangles : array (T, 3)
        Outward-oriented connectivity.
    sections : list of arrays
        Surface node ids grouped by cross-section; cap centers belong to
        the terminal sections.
    displacements, velocities : array (N, 3)
        Current motion state (mutated in place by the coupling transfer).
    """

    def __init__(self, ref_positions, triangles, sections):
        self.ref_positions = np.asarray(ref_positions, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.sections = [np.asarray(s, dtype=np.int64) for s in sections]
        n = len(self.ref_positions)
        seen = np.concatenate(self.sections)
        if len(np.unique(seen)) != n or len(seen) != n:
            raise GeometryError("every surface node must belong to exactly one section")
        self.section_of_node = np.empty(n, dtype=np.int64)
        for i, s in enumerate(self.sections):
            self.section_of_node[s] = i
        self.displacements = np.zeros((n, 3))
        self.velocities = np.zeros((n, 3))
        self._hash = None
        self._hash_positions = None

    @property
    def n_nodes(self):
        return len(self.ref_positions)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def positions(self):
        return self.ref_positions + self.displacements

    def triangle_geometry(self):
        """Current corner coordinates, unit normals and areas."""
        x = self.positions[self.triangles]
        cr = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        norms = np.linalg.norm(cr, axis=1)
        if np.any(norms <= 0.0):
            raise GeometryError("degenerate surface triangle")
        return x, cr / norms[:, None], 0.5 * norms

    def area_closure(self):
        """Sum of area-weighted normals; zero for a watertight surface."""
        x = self.positions[self.triangles]
        cr = 0.5 * np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        return cr.sum(axis=0)

    def aabb(self, pad=0.0):
        p = self.positions
        return p.min(axis=0) - pad, p.max(axis=0) + pad

    def local_scale(self):
        """Median triangle diameter (hash cell size, perturbation scale)."""
        x = self.positions[self.triangles]
        d = np.maximum(
            np.linalg.norm(x[:, 1] - x[:, 0], axis=1),
            np.maximum(
                np.linalg.norm(x[:, 2] - x[:, 1], axis=1),
                np.linalg.norm(x[:, 0] - x[:, 2], axis=1),
            ),
        )
        return float(np.median(d))

    def triangle_hash(self):
        """Uniform spatial hash of triangle bounding boxes (rebuilt on motion)."""
        pos = self.positions
        if self._hash is not None and self._hash_positions is not None:
            if self._hash_positions.shape == pos.shape and np.array_equal(self._hash_positions, pos):
                return self._hash
        self._hash = TriangleHash(self)
        self._hash_positions = pos.copy()
        return self._hash

    def invalidate_motion_caches(self):
        self._hash = None
        self._hash_positions = None


class TriangleHash:
    """Uniform grid over triangle AABBs, sized to the median triangle diameter."""

    def __init__(self, surface):
        self.cell = max(surface.local_scale(), 1e-300)
        x = surface.positions[surface.triangles]
        self.lo = x.min(axis=(0, 1))
        tlo = np.floor((x.min(axis=1) - self.lo) / self.cell).astype(np.int64)
        thi = np.floor((x.max(axis=1) - self.lo) / self.cell).astype(np.int64)
        self.buckets = {}
        for t in range(len(x)):
            for i in range(tlo[t, 0], thi[t, 0] + 1):
                for j in range(tlo[t, 1], thi[t, 1] + 1):
                    for k in range(tlo[t, 2], thi[t, 2] + 1):
                        self.buckets.setdefault((i, j, k), []).append(t)

    def query_aabb(self, lo, hi):
        """Candidate triangle ids whose boxes may overlap [lo, hi]."""
        a = np.floor((np.asarray(lo) - self.lo) / self.cell).astype(np.int64)
        b = np.floor((np.asarray(hi) - self.lo) / self.cell).astype(np.int64)
        out = set()
        for i in range(a[0], b[0] + 1):
            for j in range(a[1], b[1] + 1):
                for k in range(a[2], b[2] + 1):
                    out.update(self.buckets.get((i, j, k), ()))
        return sorted(out)


# ---------------------------------------------------------------------------
# surface generation


def _parallel_transport_frames(points):
    """Rotation-minimizing normal/binormal frames along a polyline."""
    points = np.asarray(points, dtype=float)
    segs = points[1:] - points[:-1]
    lens = np.linalg.norm(segs, axis=1)
    if np.any(lens <= 0.0):
        raise GeometryError("degenerate tangent: repeated centerline points")
    seg_t = segs / lens[:, None]

    # nodal tangents: averaged segment directions
    tangents = np.empty_like(points)
    tangents[0] = seg_t[0]
    tangents[-1] = seg_t[-1]
    if len(points) > 2:
        mid = seg_t[:-1] + seg_t[1:]
        nm = np.linalg.norm(mid, axis=1)
        if np.any(nm <= 1e-12):
            raise GeometryError("degenerate tangent: centerline reverses direction")
        tangents[1:-1] = mid / nm[:, None]

    # initial normal: least-aligned axis
    t0 = tangents[0]
    axis = np.zeros(3)
    axis[np.argmin(np.abs(t0))] = 1.0
    n = np.cross(t0, axis)
    n /= np.linalg.norm(n)

    normals = np.empty_like(points)
    normals[0] = n
    from .rotation import rotation_between

    for k in range(1, len(points)):
        R = rotation_between(tangents[k - 1], tangents[k])
        n = R @ n
        n -= np.dot(n, tangents[k]) * tangents[k]
        n /= np.linalg.norm(n)
        normals[k] = n
    binormals = np.cross(tangents, normals)
    return tangents, normals, binormals


def generate_cable_surface(centerline, sides, diameter, caps=True):
    """Closed polygon-section tube around a centerline polyline.

    Cross-sections are regular polygons of ``sides`` vertices inscribed in
    a circle of the given diameter, kept coplanar per section and oriented
    by parallel transport so the tube does not spin along the cable.  Caps
    are triangle fans around the terminal centerline points; cap centers
    belong to the terminal sections.

    Parameters
    ----------
    centerline : array (K+1, 3)
    sides : int, >= 3
    diameter : float
    caps : bool

    Returns
    -------
    EmbeddedSurface
        Watertight when capped; 2*sides triangles per segment plus
        ``sides`` per cap.
    """
    centerline = np.asarray(centerline, dtype=float)
    if sides < 3:
        raise GeometryError(f"invalid section: need at least 3 sides, got {sides}")
    if diameter <= 0.0:
        raise GeometryError(f"invalid section: diameter {diameter}")
    if len(centerline) < 2:
        raise GeometryError("centerline needs at least two points")

    tangents, normals, binormals = _parallel_transport_frames(centerline)
    K = len(centerline) - 1
    r = 0.5 * diameter
    ang = 2.0 * np.pi * np.arange(sides) / sides

    pts = []
    sections = []
    for k in range(K + 1):
        ring = (
            centerline[k]
            + r * np.outer(np.cos(ang), normals[k])
            + r * np.outer(np.sin(ang), binormals[k])
        )
        sections.append(np.arange(k * sides, (k + 1) * sides))
        pts.append(ring)
    pts = np.vstack(pts)

    tris = []
    for k in range(K):
        a = k * sides + np.arange(sides)
        b = k * sides + (np.arange(sides) + 1) % sides
        c = a + sides
        d = b + sides
        tris.append(np.column_stack([a, b, d]))
        tris.append(np.column_stack([a, d, c]))
    tris = np.vstack(tris)

    if caps:
        start_center = len(pts)
        end_center = len(pts) + 1
        pts = np.vstack([pts, centerline[0], centerline[-1]])
        sections[0] = np.append(sections[0], start_center)
        sections[-1] = np.append(sections[-1], end_center)
        a = np.arange(sides)
        b = (a + 1) % sides
        start_fan = np.column_stack([np.full(sides, start_center), b, a])
        top = K * sides
        end_fan = np.column_stack([np.full(sides, end_center), top + a, top + b])
        tris = np.vstack([tris, start_fan, end_fan])

    surf = EmbeddedSurface(pts, tris, sections)
    if caps:
        closure = surf.area_closure()
        scale = surf.local_scale() ** 2
        if np.linalg.norm(closure) > 1e-10 * max(scale, 1e-30) * surf.n_triangles:
            raise GeometryError("generated surface is not watertight")
    return surf


# ---------------------------------------------------------------------------
# intersection queries


def _segment_triangle_batch(p0, p1, corners, scale):
    """Plane-crossing segment/triangle intersections for stacked pairs.

    Grazing configurations (endpoint within 1e-12 * scale of a triangle
    plane) are resolved by nudging the signed distance to the positive
    side, a deterministic symbolic perturbation of the surface along its
    normal.

    Returns (mask, t, points, u, v) over the pair axis, with (u, v) the
    barycentric weights of corners 1 and 2.
    """
    eps = 1e-12 * scale
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    nrm = np.cross(e1, e2)
    s0 = np.einsum("ij,ij->i", p0 - corners[:, 0], nrm)
    s1 = np.einsum("ij,ij->i", p1 - corners[:, 0], nrm)
    nn = np.linalg.norm(nrm, axis=1)
    nn = np.where(nn > 0, nn, 1.0)
    tiny0 = np.abs(s0) < eps * nn
    tiny1 = np.abs(s1) < eps * nn
    s0 = np.where(tiny0, eps * nn, s0)
    s1 = np.where(tiny1, eps * nn, s1)
    crossing = (s0 > 0) != (s1 > 0)

    denom = s0 - s1
    denom = np.where(np.abs(denom) > 0, denom, 1.0)
    t = s0 / denom
    pt = p0 + t[:, None] * (p1 - p0)

    # barycentric containment with a small edge tolerance
    d = pt - corners[:, 0]
    d11 = np.einsum("ij,ij->i", e1, e1)
    d12 = np.einsum("ij,ij->i", e1, e2)
    d22 = np.einsum("ij,ij->i", e2, e2)
    dv1 = np.einsum("ij,ij->i", d, e1)
    dv2 = np.einsum("ij,ij->i", d, e2)
    det = d11 * d22 - d12 * d12
    det = np.where(np.abs(det) > 0, det, 1.0)
    u = (d22 * dv1 - d12 * dv2) / det
    v = (d11 * dv2 - d12 * dv1) / det
    btol = 1e-10
    inside = (u >= -btol) & (v >= -btol) & (u + v <= 1.0 + btol)
    return crossing & inside, t, pt, u, v


def intersect_segment(surface, p0, p1, candidates=None, use_hash=True):
    """All surface hits of segment p0 -> p1, sorted by parameter.

    Hits at indistinguishable parameters (shared triangle edges) are
    deduplicated.  ``use_hash=False`` forces the linear scan over all
    triangles (validation path).
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if candidates is None:
        if use_hash:
            h = surface.triangle_hash()
            lo = np.minimum(p0, p1)
            hi = np.maximum(p0, p1)
            candidates = h.query_aabb(lo, hi)
        else:
            candidates = np.arange(surface.n_triangles)
    candidates = np.asarray(candidates, dtype=np.int64)
    if len(candidates) == 0:
        return []

    x, normals, _ = surface.triangle_geometry()
    corners = x[candidates]
    scale = surface.local_scale()
    mask, t, pt, u, v = _segment_triangle_batch(
        np.broadcast_to(p0, corners[:, 0].shape),
        np.broadcast_to(p1, corners[:, 0].shape),
        corners,
        scale,
    )
    hits = []
    for i in np.nonzero(mask)[0]:
        hits.append(
            Intersection(
                point=pt[i].copy(),
                param=float(t[i]),
                normal=normals[candidates[i]].copy(),
                triangle=int(candidates[i]),
                bary=np.array([1.0 - u[i] - v[i], u[i], v[i]]),
            )
        )
    hits.sort(key=lambda h: h.param)
    # drop duplicates from hits exactly on shared triangle edges
    seg_len = np.linalg.norm(p1 - p0)
    tol = 1e-9 if seg_len == 0 else max(1e-12, 1e-9 * scale / max(seg_len, 1e-300))
    dedup = []
    for h in hits:
        if dedup and abs(h.param - dedup[-1].param) <= tol:
            continue
        dedup.append(h)
    return dedup


def intersect_edge(surface, p0, p1, use_hash=True):
    """Alias of :func:`intersect_segment` for mesh-edge queries."""
    return intersect_segment(surface, p0, p1, use_hash=use_hash)


def intersect_edges_batch(surface, p0, p1):
    """Surface hits for many segments at once (interface builds, marking).

    AABB prefilter against the surface box, hash candidates per surviving
    segment, then one vectorized crossing test over all (segment, triangle)
    pairs.  Per-segment results match :func:`intersect_segment` including
    the shared-edge deduplication.

    Returns
    -------
    counts : array (m,)
        Deduplicated hit count per segment.
    hits : dict row -> list of Intersection
        Sorted by parameter; rows with no hits are absent.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    m = len(p0)
    counts = np.zeros(m, dtype=np.int64)
    if surface.n_triangles == 0 or m == 0:
        return counts, {}

    lo, hi = surface.aabb()
    elo = np.minimum(p0, p1)
    ehi = np.maximum(p0, p1)
    near = np.all(ehi >= lo, axis=1) & np.all(elo <= hi, axis=1)
    rows = np.nonzero(near)[0]
    if len(rows) == 0:
        return counts, {}

    h = surface.triangle_hash()
    seg_rows = []
    tri_ids = []
    for r in rows:
        cand = h.query_aabb(elo[r], ehi[r])
        if cand:
            seg_rows.append(np.full(len(cand), r, dtype=np.int64))
            tri_ids.append(np.asarray(cand, dtype=np.int64))
    if not seg_rows:
        return counts, {}
    seg_rows = np.concatenate(seg_rows)
    tri_ids = np.concatenate(tri_ids)

    x, normals, _ = surface.triangle_geometry()
    scale = surface.local_scale()
    mask, t, pt, u, v = _segment_triangle_batch(
        p0[seg_rows], p1[seg_rows], x[tri_ids], scale
    )

    sel = np.nonzero(mask)[0]
    if len(sel) == 0:
        return counts, {}
    order = sel[np.lexsort((t[sel], seg_rows[sel]))]
    seg_len = np.linalg.norm(p1 - p0, axis=1)
    hits = {}
    for i in order:
        r = int(seg_rows[i])
        tol = 1e-9 if seg_len[r] == 0 else max(1e-12, 1e-9 * scale / seg_len[r])
        lst = hits.setdefault(r, [])
        if lst and abs(float(t[i]) - lst[-1].param) <= tol:
            continue
        lst.append(
            Intersection(
                point=pt[i].copy(),
                param=float(t[i]),
                normal=normals[tri_ids[i]].copy(),
                triangle=int(tri_ids[i]),
                bary=np.array([1.0 - u[i] - v[i], u[i], v[i]]),
            )
        )
    for r, lst in hits.items():
        counts[r] = len(lst)
    return counts, hits


def _closest_point_on_triangles(p, corners):
    """Closest point on each triangle to each query point (paired rows).

    Branchless region classification on the barycentric plane: vertex,
    edge and face regions resolved with a where-cascade evaluated from
    lowest to highest priority.
    """
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    ab, ac = b - a, c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    def safe_div(num, den):
        return num / np.where(np.abs(den) > 0, den, 1.0)

    denom = va + vb + vc
    v_f = safe_div(vb, denom)
    w_f = safe_div(vc, denom)
    out = a + v_f[:, None] * ab + w_f[:, None] * ac

    t_bc = np.clip(safe_div(d4 - d3, (d4 - d3) + (d5 - d6)), 0.0, 1.0)
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    out = np.where(on_bc[:, None], b + t_bc[:, None] * (c - b), out)

    t_ac = np.clip(safe_div(d2, d2 - d6), 0.0, 1.0)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    out = np.where(on_ac[:, None], a + t_ac[:, None] * ac, out)

    t_ab = np.clip(safe_div(d1, d1 - d3), 0.0, 1.0)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    out = np.where(on_ab[:, None], a + t_ab[:, None] * ab, out)

    out = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, out)
    out = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, out)
    out = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, out)
    return out


def point_surface_distance(surface, points, cutoff=None):
    """Unsigned distance from each point to the surface.

    With a cutoff, only triangles whose hash cells fall within the cutoff
    box of a point are examined and points with no candidates report inf;
    without one, every triangle is scanned.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x, _, _ = surface.triangle_geometry()
    dist = np.full(len(points), np.inf)
    if cutoff is not None:
        h = surface.triangle_hash()
        for i, p in enumerate(points):
            cand = h.query_aabb(p - cutoff, p + cutoff)
            if not cand:
                continue
            cand = np.asarray(cand, dtype=np.int64)
            cls = _closest_point_on_triangles(
                np.broadcast_to(p, (len(cand), 3)), x[cand]
            )
            dist[i] = np.sqrt(np.min(np.sum((cls - p) ** 2, axis=1)))
    else:
        ntri = surface.n_triangles
        for i, p in enumerate(points):
            cls = _closest_point_on_triangles(np.broadcast_to(p, (ntri, 3)), x)
            dist[i] = np.sqrt(np.min(np.sum((cls - p) ** 2, axis=1)))
    return dist


def classify_occlusion(mesh, surface, debug=False):
    """Per-node real/ghost status by ray-casting parity.

    Nodes outside the surface bounding box are real without any ray walk;
    the rest shoot one deterministic ray to a point outside the global
    bounding box and count surface crossings.  With ``debug=True`` the
    parity answer is cross-checked against the sign of the nearest
    triangle's normal and disagreements are logged.

    Returns
    -------
    array (n,) of uint8, NODE_REAL or NODE_GHOST.
    """
    status = np.zeros(mesh.n_nodes, dtype=np.uint8)
    lo, hi = surface.aabb(pad=1e-9 * max(surface.local_scale(), 1e-300))
    inside_box = np.all((mesh.nodes >= lo) & (mesh.nodes <= hi), axis=1)
    idx = np.nonzero(inside_box)[0]
    if len(idx) == 0:
        return status

    diag = np.linalg.norm(hi - lo)
    far = hi + (2.0 * diag + 1.0) * _RAY_DIR

    x, normals, _ = surface.triangle_geometry()
    scale = surface.local_scale()
    ntri = surface.n_triangles
    corners_all = x

    for i in idx:
        p0 = mesh.nodes[i]
        mask, t, _, _, _ = _segment_triangle_batch(
            np.broadcast_to(p0, (ntri, 3)),
            np.broadcast_to(far, (ntri, 3)),
            corners_all,
            scale,
        )
        ts = np.sort(t[mask])
        # merge duplicate crossings on shared edges
        crossings = 0
        last = -np.inf
        for tv in ts:
            if tv - last > 1e-9:
                crossings += 1
                last = tv
        if crossings % 2 == 1:
            status[i] = NODE_GHOST
        if debug:
            d = corners_all.mean(axis=1) - p0
            nearest = int(np.argmin(np.einsum("ij,ij->i", d, d)))
            inward = np.dot(normals[nearest], d[nearest]) > 0.0
            if inward != (status[i] == NODE_GHOST):
                log.warning("occlusion cross-check disagrees at node %d", i)
    return status
