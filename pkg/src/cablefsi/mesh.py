"""Unstructured tetrahedral meshes with vertex-centered dual geometry.

Meshes are built from axis-aligned boxes split into Kuhn simplices (six
path tetrahedra per cube sharing the main diagonal), refined adaptively by
newest-vertex bisection, and carry the median-dual metadata (cell volumes,
facet area vectors, boundary closure vectors) required by the flow solver.
"""

import itertools
import logging

import numpy as np

from .errors import GeometryError, RefinementError

log = logging.getLogger(__name__)

BOUNDARY_TAGS = ("farfield", "inflow", "outflow", "slip")

# unordered local edges of a tetrahedron
_LOCAL_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

# local faces opposite each vertex, ordered so the normal points outward
# for a positively oriented tetrahedron
_LOCAL_FACES = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))


def _tet_volumes(nodes, tets):
    a = nodes[tets[:, 1]] - nodes[tets[:, 0]]
    b = nodes[tets[:, 2]] - nodes[tets[:, 0]]
    c = nodes[tets[:, 3]] - nodes[tets[:, 0]]
    return np.einsum("ij,ij->i", np.cross(a, b), c) / 6.0


class Mesh:
    """Tetrahedral mesh with newest-vertex-bisection bookkeeping.

    Attributes
    ----------
    nodes : array (n, 3)
    tets : array (m, 4)
        Positively oriented connectivity.
    nvb_verts : array (m, 4)
        The same node ids in bisection order; the refinement edge of
        element e is (nvb_verts[e, 0], nvb_verts[e, tag[e]]).
    nvb_tag : array (m,)
        Bisection tag in {1, 2, 3}.
    boundary_faces : array (b, 3)
        Outward-oriented boundary triangles.
    boundary_tags : array (b,) of int
        Index into BOUNDARY_TAGS per boundary face.
    parent_edges : dict or None
        After refinement: new node id -> (endpoint ids of the bisected
        edge), in creation order, for solution transfer.
    """

    def __init__(self, nodes, nvb_verts, nvb_tag, boundary_faces=None, boundary_tags=None):
        self.nodes = np.asarray(nodes, dtype=float)
        self.nvb_verts = np.asarray(nvb_verts, dtype=np.int64)
        self.nvb_tag = np.asarray(nvb_tag, dtype=np.int64)
        if self.nvb_verts.ndim != 2 or self.nvb_verts.shape[1] != 4:
            raise GeometryError("connectivity must be (m, 4)")
        if np.any(self.nvb_tag < 1) or np.any(self.nvb_tag > 3):
            raise GeometryError("bisection tags must lie in {1, 2, 3}")

        # public connectivity: orientation-fixed copy of the bisection order
        tets = self.nvb_verts.copy()
        vol = _tet_volumes(self.nodes, tets)
        flip = vol < 0.0
        tets[flip] = tets[flip][:, [0, 2, 1, 3]]
        self.tets = tets
        self.volumes = np.abs(vol)
        bad = np.nonzero(self.volumes <= 0.0)[0]
        if bad.size:
            raise GeometryError(f"degenerate tetrahedron (zero volume): element {bad[0]}")

        if boundary_faces is None:
            boundary_faces, inferred = self._extract_boundary()
            boundary_tags = inferred if boundary_tags is None else boundary_tags
        self.boundary_faces = np.asarray(boundary_faces, dtype=np.int64).reshape(-1, 3)
        if boundary_tags is None:
            boundary_tags = np.zeros(len(self.boundary_faces), dtype=np.int64)
        self.boundary_tags = np.asarray(boundary_tags, dtype=np.int64)
        self.parent_edges = None
        self._edges = None
        self._edge_index = None
        self._p1_grads = None

    # -- derived connectivity ------------------------------------------------

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def ref_edges(self):
        """(m, 2) node ids of each element's refinement edge."""
        return np.column_stack(
            [self.nvb_verts[:, 0], self.nvb_verts[np.arange(self.n_tets), self.nvb_tag]]
        )

    @property
    def edges(self):
        """(E, 2) sorted unique node pairs appearing in some tetrahedron."""
        if self._edges is None:
            pairs = self.tets[:, _LOCAL_EDGES].reshape(-1, 2)
            pairs = np.sort(pairs, axis=1)
            self._edges = np.unique(pairs, axis=0)
        return self._edges

    def edge_index(self):
        """dict mapping sorted node pair -> edge row index."""
        if self._edge_index is None:
            self._edge_index = {(int(i), int(j)): k for k, (i, j) in enumerate(self.edges)}
        return self._edge_index

    def _extract_boundary(self):
        faces = self.tets[:, _LOCAL_FACES].reshape(-1, 3)
        key = np.sort(faces, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        boundary = faces[counts[inv] == 1]
        return boundary, np.zeros(len(boundary), dtype=np.int64)

    def p1_gradients(self):
        """Per-element P1 shape-function gradients, (m, 4, 3)."""
        if self._p1_grads is None:
            x = self.nodes[self.tets]
            D = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=1)
            Dinv = np.linalg.inv(D)
            g = np.empty((self.n_tets, 4, 3))
            g[:, 1:, :] = np.transpose(Dinv, (0, 2, 1))
            g[:, 0, :] = -g[:, 1:, :].sum(axis=1)
            self._p1_grads = g
        return self._p1_grads

    def min_dihedral_angle(self):
        """Smallest dihedral angle over all elements, in radians."""
        worst = np.pi
        x = self.nodes[self.tets]
        for (a, b) in _LOCAL_EDGES:
            c, d = [k for k in range(4) if k not in (a, b)]
            n1 = np.cross(x[:, b] - x[:, a], x[:, c] - x[:, a])
            n2 = np.cross(x[:, b] - x[:, a], x[:, d] - x[:, a])
            # both normals share the edge vector as first factor, so the
            # angle between them equals the dihedral angle itself
            cos = np.einsum("ij,ij->i", n1, n2)
            cos /= np.linalg.norm(n1, axis=1) * np.linalg.norm(n2, axis=1)
            ang = np.arccos(np.clip(cos, -1.0, 1.0))
            worst = min(worst, ang.min())
        return worst


def build_box_mesh(bounds, resolution, side_tags=None):
    """Kuhn-simplex mesh of an axis-aligned box.

    Each grid cube is split into six path tetrahedra sharing the diagonal
    from the cube's minimum to its maximum corner, so adjacent cubes share
    matching face triangulations and the bisection tags start compatible.

    Parameters
    ----------
    bounds : ((xmin, ymin, zmin), (xmax, ymax, zmax))
    resolution : (nx, ny, nz)
        Cubes per axis, all >= 1.
    side_tags : dict, optional
        Boundary tag names per side among 'xmin','xmax','ymin','ymax',
        'zmin','zmax'.  Defaults to 'farfield' everywhere.

    Returns
    -------
    Mesh
    """
    lo = np.asarray(bounds[0], dtype=float)
    hi = np.asarray(bounds[1], dtype=float)
    if np.any(hi <= lo):
        raise GeometryError(f"invalid domain: bounds {bounds} have non-positive extent")
    res = tuple(int(r) for r in resolution)
    if min(res) < 1:
        raise GeometryError(f"invalid resolution {resolution}")
    nx, ny, nz = res

    xs = [np.linspace(lo[d], hi[d], res[d] + 1) for d in range(3)]
    X, Y, Z = np.meshgrid(xs[0], xs[1], xs[2], indexing="ij")
    nodes = np.column_stack([X.ravel(order="F"), Y.ravel(order="F"), Z.ravel(order="F")])

    def nid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    base = np.column_stack([I.ravel(), J.ravel(), K.ravel()])

    tets = []
    steps = np.eye(3, dtype=np.int64)
    for perm in itertools.permutations(range(3)):
        v0 = base
        v1 = v0 + steps[perm[0]]
        v2 = v1 + steps[perm[1]]
        v3 = v2 + steps[perm[2]]
        quad = [nid(v[:, 0], v[:, 1], v[:, 2]) for v in (v0, v1, v2, v3)]
        tets.append(np.column_stack(quad))
    nvb_verts = np.vstack(tets)
    nvb_tag = np.full(len(nvb_verts), 3, dtype=np.int64)

    mesh = Mesh(nodes, nvb_verts, nvb_tag)
    _tag_box_sides(mesh, lo, hi, side_tags or {})
    return mesh


def _tag_box_sides(mesh, lo, hi, side_tags):
    names = {"xmin": (0, lo[0]), "xmax": (0, hi[0]), "ymin": (1, lo[1]),
             "ymax": (1, hi[1]), "zmin": (2, lo[2]), "zmax": (2, hi[2])}
    tol = 1e-9 * np.max(hi - lo)
    tags = mesh.boundary_tags
    for side, tag_name in side_tags.items():
        if side not in names:
            raise GeometryError(f"unknown box side '{side}'")
        if tag_name not in BOUNDARY_TAGS:
            raise GeometryError(f"unknown boundary tag '{tag_name}'")
        axis, value = names[side]
        coords = mesh.nodes[mesh.boundary_faces, axis]
        on_side = np.all(np.abs(coords - value) < tol, axis=1)
        tags[on_side] = BOUNDARY_TAGS.index(tag_name)


# ---------------------------------------------------------------------------
# median-dual geometry

# even-permutation patterns (p, q, r, s): facet piece for local edge (p, q)
_EVEN_PATTERNS = ((0, 1, 2, 3), (0, 2, 3, 1), (0, 3, 1, 2),
                  (1, 2, 0, 3), (1, 3, 2, 0), (2, 3, 0, 1))


class DualGeometry:
    """Median-dual metadata of a tetrahedral mesh.

    Attributes
    ----------
    volumes : array (n,)
        Dual cell volumes (each tetrahedron contributes a quarter of its
        volume to each corner).
    facets : array (E, 3)
        Net area vector of the interior dual facet of each mesh edge,
        oriented from the lower to the higher node id of ``mesh.edges``.
    node_closure : array (n, 3)
        Outward boundary closure vector per node (zero at interior nodes).
    boundary_patches : dict tag_index -> (node_ids, vectors)
        Aggregated outward boundary area vectors per node and tag.
    min_edge_length : array (n,)
        Shortest incident edge per node.
    cell_size : array (n,)
        Volume over total incident facet area (boundary pieces included),
        the acoustic length scale of each dual cell.  On graded meshes a
        transition cell keeps a coarse-side facet against a fine-side
        volume, so this is smaller -- and the honest stability scale --
        where the shortest-edge estimate is not.
    """

    def __init__(self, mesh):
        nodes, tets = mesh.nodes, mesh.tets
        n = mesh.n_nodes
        vol = mesh.volumes

        self.volumes = np.zeros(n)
        for c in range(4):
            np.add.at(self.volumes, tets[:, c], 0.25 * vol)

        edges = mesh.edges
        eidx = mesh.edge_index()
        self.facets = np.zeros((len(edges), 3))
        centroid = nodes[tets].mean(axis=1)
        for (p, q, r, s) in _EVEN_PATTERNS:
            a, b = tets[:, p], tets[:, q]
            xa, xb = nodes[a], nodes[b]
            xc, xd = nodes[tets[:, r]], nodes[tets[:, s]]
            m = 0.5 * (xa + xb)
            g1 = (xa + xb + xc) / 3.0
            g2 = (xa + xb + xd) / 3.0
            area = 0.5 * (np.cross(g1 - m, centroid - m) + np.cross(centroid - m, g2 - m))
            sign = np.where(a < b, 1.0, -1.0)
            keys = np.minimum(a, b) * np.int64(n) + np.maximum(a, b)
            rows = _lookup_edge_rows(keys, edges, n)
            np.add.at(self.facets, rows, sign[:, None] * area)

        # boundary closure pieces: one quad per (face, corner)
        facet_area = np.zeros(n)
        area_e = np.linalg.norm(self.facets, axis=1)
        np.add.at(facet_area, edges[:, 0], area_e)
        np.add.at(facet_area, edges[:, 1], area_e)
        bf = mesh.boundary_faces
        self.node_closure = np.zeros((n, 3))
        self.boundary_patches = {}
        if len(bf):
            xf = nodes[bf]
            gf = xf.mean(axis=1)
            for c in range(3):
                xa = xf[:, c]
                m_next = 0.5 * (xa + xf[:, (c + 1) % 3])
                m_prev = 0.5 * (xa + xf[:, (c + 2) % 3])
                quad = 0.5 * (np.cross(m_next - xa, gf - xa) + np.cross(gf - xa, m_prev - xa))
                np.add.at(self.node_closure, bf[:, c], quad)
                np.add.at(facet_area, bf[:, c], np.linalg.norm(quad, axis=1))
                for t in np.unique(mesh.boundary_tags):
                    sel = mesh.boundary_tags == t
                    ids, vecs = bf[sel, c], quad[sel]
                    acc = self.boundary_patches.setdefault(int(t), np.zeros((n, 3)))
                    np.add.at(acc, ids, vecs)

        lengths = np.linalg.norm(nodes[edges[:, 1]] - nodes[edges[:, 0]], axis=1)
        self.min_edge_length = np.full(n, np.inf)
        np.minimum.at(self.min_edge_length, edges[:, 0], lengths)
        np.minimum.at(self.min_edge_length, edges[:, 1], lengths)

        self.cell_size = self.volumes / np.maximum(facet_area, 1e-300)

    def compact_boundary_patches(self):
        """Per tag: (node ids with nonzero area, their outward vectors)."""
        out = {}
        for t, acc in self.boundary_patches.items():
            norms = np.linalg.norm(acc, axis=1)
            ids = np.nonzero(norms > 0.0)[0]
            out[t] = (ids, acc[ids])
        return out


def _lookup_edge_rows(keys, edges, n):
    edge_keys = edges[:, 0] * np.int64(n) + edges[:, 1]
    order = np.argsort(edge_keys)
    pos = np.searchsorted(edge_keys, keys, sorter=order)
    return order[pos]


def compute_dual_geometry(mesh):
    """Median-dual volumes, facet vectors and boundary closures.

    The per-node closure identity (interior facet vectors plus boundary
    pieces sum to zero) holds to floating-point roundoff by construction.
    """
    return DualGeometry(mesh)


def least_squares_gradients(nodes, edges, values, edge_mask=None):
    """Weighted least-squares nodal gradients over the edge graph.

    Inverse-square distance weights; per-node 3x3 normal equations
    assembled over incident edges (both endpoints see the identical
    contribution, so assembly is a single symmetric scatter).  Nodes whose
    normal matrix is rank deficient (fewer than three independent
    neighbor directions, or every incident edge masked out) get a zero
    gradient; their count is logged.

    Parameters
    ----------
    nodes : array (n, 3)
    edges : array (e, 2)
    values : array (n,) or (n, k)
    edge_mask : bool array (e,), optional
        False rows are excluded from every stencil.

    Returns
    -------
    array (n, 3) or (n, k, 3)
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    scalar = values.ndim == 1
    vals = values[:, None] if scalar else values
    n, k = vals.shape

    if edge_mask is not None:
        edges = edges[edge_mask]
    i, j = edges[:, 0], edges[:, 1]
    d = nodes[j] - nodes[i]
    w = 1.0 / np.einsum("ij,ij->i", d, d)
    dv = vals[j] - vals[i]

    outer = w[:, None, None] * d[:, :, None] * d[:, None, :]
    rhs_e = w[:, None, None] * d[:, :, None] * dv[:, None, :]
    A = np.zeros((n, 3, 3))
    b = np.zeros((n, 3, k))
    np.add.at(A, i, outer)
    np.add.at(A, j, outer)
    np.add.at(b, i, rhs_e)
    np.add.at(b, j, rhs_e)

    det = np.linalg.det(A)
    scale = (np.trace(A, axis1=1, axis2=2) / 3.0) ** 3
    good = det > 1e-9 * np.maximum(scale, 1e-300)
    grad = np.zeros((n, 3, k))
    if np.any(good):
        grad[good] = np.linalg.solve(A[good], b[good])
    n_bad = int(np.sum(~good))
    if n_bad:
        log.debug("least-squares gradients: %d rank-deficient nodes zeroed", n_bad)
    grad = np.swapaxes(grad, 1, 2)
    return grad[:, 0, :] if scalar else grad


# ---------------------------------------------------------------------------
# newest-vertex bisection


def _sorted_edge(a, b):
    return (a, b) if a < b else (b, a)


def _bisect(verts, tag, z):
    """Maubach bisection: children orders and tags for one element."""
    d = tag
    child_tag = d - 1 if d > 1 else 3
    v = list(verts)
    # child 1 keeps v0 and replaces vd by the midpoint; child 2 is
    # (v1, ..., vd, z, v_{d+1}, ...): both inherit tag d-1 (cycling to 3)
    c1 = v.copy()
    c1[d] = z
    c2 = v[1:d + 1] + [z] + v[d + 1:]
    return (c1, child_tag), (c2, child_tag)


def refine_edges(mesh, marked, max_rounds=64):
    """Bisect the marked edges and close the mesh to conformity.

    Every element containing a marked edge is bisected through its
    refinement edge, recursively, until no element contains a marked edge;
    midpoints are shared so the result is conforming with no hanging nodes.
    New nodes receive ``parent_edges`` entries in creation order for
    solution transfer.

    Parameters
    ----------
    mesh : Mesh
    marked : iterable of (i, j) node pairs
        Edges to bisect; must exist in the mesh.
    max_rounds : int
        Bound on closure generations before a RefinementError.

    Returns
    -------
    Mesh
        New mesh; the input is untouched.  Returns the input mesh when
        ``marked`` is empty.
    """
    cut = {_sorted_edge(int(a), int(b)) for a, b in marked}
    if not cut:
        return mesh
    edge_set = {(int(i), int(j)) for i, j in mesh.edges}
    missing = cut - edge_set
    if missing:
        raise GeometryError(f"marked edge not in mesh: {sorted(missing)[0]}")

    nodes = [tuple(x) for x in mesh.nodes]
    elems = [(list(v), int(t)) for v, t in zip(mesh.nvb_verts, mesh.nvb_tag)]
    bmap = {}
    for face, tag in zip(mesh.boundary_faces, mesh.boundary_tags):
        bmap[tuple(sorted(int(f) for f in face))] = (tuple(int(f) for f in face), int(tag))
    midpoint = {}
    parents = {}

    def get_midpoint(a, b):
        key = _sorted_edge(a, b)
        if key not in midpoint:
            nodes.append(tuple(0.5 * (np.asarray(nodes[a]) + np.asarray(nodes[b]))))
            nid = len(nodes) - 1
            midpoint[key] = nid
            parents[nid] = key
        return midpoint[key]

    def split_boundary(verts, a, b, z):
        # faces of the element containing edge (a, b) that lie on the boundary
        for face in itertools.combinations(verts, 3):
            if a in face and b in face:
                key = tuple(sorted(face))
                hit = bmap.pop(key, None)
                if hit is None:
                    continue
                oriented, tag = hit
                c = next(f for f in oriented if f not in (a, b))
                # keep the parent's winding around the replaced vertex
                child1 = tuple(z if f == b else f for f in oriented)
                child2 = tuple(z if f == a else f for f in oriented)
                bmap[tuple(sorted(child1))] = (child1, tag)
                bmap[tuple(sorted(child2))] = (child2, tag)

    for round_no in range(max_rounds + 1):
        # closure: every element containing a cut edge must cut its own
        # refinement edge
        while True:
            grew = False
            for verts, tag in elems:
                pairs = {_sorted_edge(verts[p], verts[q]) for p, q in _LOCAL_EDGES}
                if pairs & cut:
                    re = _sorted_edge(verts[0], verts[tag])
                    if re not in cut:
                        cut.add(re)
                        grew = True
            if not grew:
                break

        to_split = [k for k, (verts, tag) in enumerate(elems)
                    if _sorted_edge(verts[0], verts[tag]) in cut]
        if not to_split:
            break
        if round_no == max_rounds:
            raise RefinementError(f"bisection closure exceeded {max_rounds} rounds")

        new_elems = []
        split_set = set(to_split)
        for k, (verts, tag) in enumerate(elems):
            if k not in split_set:
                new_elems.append((verts, tag))
                continue
            a, b = verts[0], verts[tag]
            z = get_midpoint(a, b)
            split_boundary(verts, a, b, z)
            (c1, t1), (c2, t2) = _bisect(verts, tag, z)
            new_elems.append((c1, t1))
            new_elems.append((c2, t2))
        elems = new_elems
    else:
        raise RefinementError(f"bisection closure exceeded {max_rounds} rounds")

    nvb_verts = np.array([v for v, _ in elems], dtype=np.int64)
    nvb_tag = np.array([t for _, t in elems], dtype=np.int64)
    bfaces = np.array([f for f, _ in bmap.values()], dtype=np.int64).reshape(-1, 3)
    btags = np.array([t for _, t in bmap.values()], dtype=np.int64)
    out = Mesh(np.asarray(nodes), nvb_verts, nvb_tag, bfaces, btags)
    out.parent_edges = parents
    log.info("refined %d -> %d elements (%d new nodes)", mesh.n_tets, out.n_tets, len(parents))
    return out


def check_conformity(mesh):
    """True when every interior face is shared by exactly two elements."""
    faces = mesh.tets[:, _LOCAL_FACES].reshape(-1, 3)
    key = np.sort(faces, axis=1)
    _, counts = np.unique(key, axis=0, return_counts=True)
    return bool(np.all(counts <= 2))


# ---------------------------------------------------------------------------
# plain-text mesh format


def save_mesh(mesh, path):
    """Write the plain-text mesh format.

    Layout: node count, one ``x y z`` line per node; element count, one
    ``n0 n1 n2 n3`` line per element (0-based); then an optional boundary
    section with a face count and ``f0 f1 f2 tag`` lines.
    """
    with open(path, "w") as f:
        f.write(f"{mesh.n_nodes}\n")
        for x in mesh.nodes:
            f.write(f"{x[0]:.17g} {x[1]:.17g} {x[2]:.17g}\n")
        f.write(f"{mesh.n_tets}\n")
        for t in mesh.tets:
            f.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")
        f.write(f"{len(mesh.boundary_faces)}\n")
        for face, tag in zip(mesh.boundary_faces, mesh.boundary_tags):
            f.write(f"{face[0]} {face[1]} {face[2]} {BOUNDARY_TAGS[tag]}\n")


def load_mesh(path):
    """Read the plain-text mesh format written by :func:`save_mesh`.

    Elements are re-tagged for bisection with the longest edge as the
    refinement edge (box meshes keep compatible tags through save/load of
    freshly built grids only up to this re-initialization).
    """
    with open(path) as f:
        tokens = f.read().split()
    pos = 0

    def take(k):
        nonlocal pos
        out = tokens[pos:pos + k]
        if len(out) < k:
            raise GeometryError(f"truncated mesh file {path}")
        pos += k
        return out

    n = int(take(1)[0])
    nodes = np.array(take(3 * n), dtype=float).reshape(n, 3)
    m = int(take(1)[0])
    tets = np.array(take(4 * m), dtype=np.int64).reshape(m, 4)
    if np.any(tets < 0) or np.any(tets >= n):
        raise GeometryError(f"element references unknown node in {path}")

    bfaces, btags = [], []
    if pos < len(tokens):
        b = int(take(1)[0])
        for _ in range(b):
            f0, f1, f2, tag = take(4)
            if tag not in BOUNDARY_TAGS:
                raise GeometryError(f"unknown boundary tag '{tag}' in {path}")
            bfaces.append((int(f0), int(f1), int(f2)))
            btags.append(BOUNDARY_TAGS.index(tag))

    nvb_verts, nvb_tag = _longest_edge_tags(nodes, tets)
    bf = np.array(bfaces, dtype=np.int64).reshape(-1, 3) if bfaces else None
    bt = np.array(btags, dtype=np.int64) if btags else None
    return Mesh(nodes, nvb_verts, nvb_tag, bf, bt)


def _longest_edge_tags(nodes, tets):
    """Order vertices so (v0, v3) is each element's longest edge, tag 3."""
    nvb = np.array(tets, dtype=np.int64, copy=True)
    for k, t in enumerate(nvb):
        best, pair = -1.0, (0, 3)
        for (p, q) in _LOCAL_EDGES:
            L = np.linalg.norm(nodes[t[p]] - nodes[t[q]])
            if L > best:
                best, pair = L, (p, q)
        rest = [i for i in range(4) if i not in pair]
        nvb[k] = [t[pair[0]], t[rest[0]], t[rest[1]], t[pair[1]]]
    return nvb, np.full(len(nvb), 3, dtype=np.int64)
