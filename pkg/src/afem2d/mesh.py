"""Conforming triangulations with newest-vertex-bisection refinement.

A mesh stores its triangles with a fixed reference-edge convention: the
reference edge of triangle (v0, v1, v2) is always (v0, v1).  Bisection
inserts the midpoint of the reference edge and re-indexes the two sons so
that their reference edges lie opposite the new vertex.  Every mesh also
remembers the forest of bisections back to its root mesh, which makes the
overlay (coarsest common refinement) of two meshes computable.
"""

from collections import deque

import numpy as np

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

_KIND_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}


class MeshError(Exception):
    pass


class MeshQualityError(MeshError):
    """Shape regularity exceeded the configured cap."""


class MeshFormatError(MeshError):
    """Malformed mesh text file."""


class MeshInputError(MeshError):
    """Invalid arguments to a mesh operation."""


def _canon(a, b):
    return (a, b) if a < b else (b, a)


class Mesh:
    """Immutable conforming triangle mesh.

    Parameters
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise, reference edge (v0, v1)
    edge_kinds_local : (nt, 3) int array, classification of the local edges
        (v0,v1), (v1,v2), (v2,v0) as INTERIOR / DIRICHLET / NEUMANN
    """

    def __init__(self, vertices, triangles, edge_kinds_local,
                 tri_root=None, tri_path=None, root_data=None,
                 edge_order_hint=None, sigma_cap=100.0):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self._kinds_local = np.ascontiguousarray(edge_kinds_local, dtype=np.int8)
        self.sigma_cap = float(sigma_cap)

        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshInputError("vertices must be (nv, 2)")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshInputError("non-finite vertex coordinates")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshInputError("triangles must be (nt, 3)")
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise MeshInputError("triangle vertex index out of range")

        nt = len(self.triangles)
        if tri_root is None:
            tri_root = np.arange(nt, dtype=np.int64)
        if tri_path is None:
            tri_path = ("",) * nt
        self.tri_root = np.asarray(tri_root, dtype=np.int64)
        self.tri_path = tuple(tri_path)
        if root_data is None:
            root_data = (self.vertices.copy(), self.triangles.copy(),
                         self._kinds_local.copy())
        self.root_data = root_data

        p = self.vertices
        t = self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(self.areas <= 0.0):
            bad = int(np.argmin(self.areas))
            raise MeshInputError(
                f"triangle {bad} is degenerate or clockwise (area {self.areas[bad]:g})")

        e01 = np.linalg.norm(d1, axis=1)
        e12 = np.linalg.norm(p[t[:, 2]] - p[t[:, 1]], axis=1)
        e20 = np.linalg.norm(d2, axis=1)
        self.diams = np.maximum(np.maximum(e01, e12), e20)
        self.sigma = float(np.max(self.diams ** 2 / self.areas)) if nt else 0.0
        if self.sigma > self.sigma_cap:
            raise MeshQualityError(
                f"shape regularity {self.sigma:g} exceeds cap {self.sigma_cap:g}")

        self._build_edge_table(edge_order_hint)
        self._vertex_tris = None

    # -- edge table ------------------------------------------------------

    def _build_edge_table(self, order_hint):
        t = self.triangles
        nt = len(t)
        locpairs = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)
        flat = locpairs.reshape(-1, 2)
        canon = np.sort(flat, axis=1)
        uniq, inverse = np.unique(canon, axis=0, return_inverse=True)
        ne = len(uniq)

        if order_hint:
            keys = []
            for i in range(ne):
                pair = (int(uniq[i, 0]), int(uniq[i, 1]))
                old = order_hint.get(pair)
                if old is None:
                    keys.append((1, 0, pair[0], pair[1]))
                else:
                    keys.append((0, old, pair[0], pair[1]))
            perm = sorted(range(ne), key=keys.__getitem__)
            perm = np.asarray(perm, dtype=np.int64)
            rank = np.empty(ne, dtype=np.int64)
            rank[perm] = np.arange(ne)
            uniq = uniq[perm]
            inverse = rank[inverse]

        self.edges = uniq
        self.tri_edges = inverse.reshape(nt, 3)

        edge_tris = [[] for _ in range(ne)]
        kinds = np.full(ne, -1, dtype=np.int8)
        kl = self._kinds_local
        for ti in range(nt):
            for loc in range(3):
                e = self.tri_edges[ti, loc]
                edge_tris[e].append((ti, loc))
                k = kl[ti, loc]
                if kinds[e] == -1:
                    kinds[e] = k
                elif kinds[e] != k:
                    raise MeshInputError(
                        f"inconsistent classification on edge {e}")
        self.edge_tris = edge_tris
        self.edge_kind = kinds

        counts = np.fromiter((len(x) for x in edge_tris), dtype=np.int64, count=ne)
        if np.any((kinds == INTERIOR) & (counts != 2)):
            raise MeshInputError("interior edge without exactly 2 triangles")
        if np.any((kinds != INTERIOR) & (counts != 1)):
            raise MeshInputError("boundary edge without exactly 1 triangle")

        self.edge_lengths = np.linalg.norm(
            self.vertices[uniq[:, 1]] - self.vertices[uniq[:, 0]], axis=1)

        self.boundary_vertex = np.zeros(len(self.vertices), dtype=bool)
        bnd = uniq[kinds != INTERIOR]
        self.boundary_vertex[bnd.ravel()] = True
        self.dirichlet_vertex = np.zeros(len(self.vertices), dtype=bool)
        dedges = uniq[kinds == DIRICHLET]
        self.dirichlet_vertex[dedges.ravel()] = True

    # -- basic queries ---------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    def edges_of_kind(self, kind):
        return np.nonzero(self.edge_kind == kind)[0]

    @property
    def interior_edges(self):
        return self.edges_of_kind(INTERIOR)

    @property
    def dirichlet_edges(self):
        return self.edges_of_kind(DIRICHLET)

    @property
    def neumann_edges(self):
        return self.edges_of_kind(NEUMANN)

    def total_area(self):
        return float(np.sum(self.areas))

    def vertex_patch(self, z):
        """Triangle indices touching vertex z."""
        if self._vertex_tris is None:
            vt = [[] for _ in range(self.n_vertices)]
            for ti, tri in enumerate(self.triangles):
                for v in tri:
                    vt[v].append(ti)
            self._vertex_tris = vt
        return list(self._vertex_tris[z])

    def edge_patch(self, e):
        """Triangle indices adjacent to edge e (1 for boundary, 2 interior)."""
        return [ti for ti, _ in self.edge_tris[e]]

    def edge_star(self, z):
        """Edge indices containing vertex z."""
        return [int(e) for e in range(self.n_edges)
                if z in (self.edges[e, 0], self.edges[e, 1])]

    def edge_star_fast(self, z):
        mask = (self.edges[:, 0] == z) | (self.edges[:, 1] == z)
        return np.nonzero(mask)[0]

    def reference_edge(self, ti):
        """Edge index of the reference edge of triangle ti."""
        return int(self.tri_edges[ti, 0])

    # -- comparisons -----------------------------------------------------

    def topology_key(self):
        """Canonical geometric description, independent of index ordering."""
        tris = frozenset(
            frozenset(map(tuple, self.vertices[tri])) for tri in self.triangles)
        bnd = frozenset(
            (frozenset(map(tuple, self.vertices[self.edges[e]])), int(self.edge_kind[e]))
            for e in range(self.n_edges) if self.edge_kind[e] != INTERIOR)
        return tris, bnd

    def same_triangulation(self, other):
        return self.topology_key() == other.topology_key()

    # -- text format -----------------------------------------------------

    def write(self, path):
        lines = ["afem2d-mesh v1", f"vertices {self.n_vertices}"]
        for x, y in self.vertices:
            lines.append(f"{float(x)!r} {float(y)!r}")
        lines.append(f"triangles {self.n_triangles}")
        for a, b, c in self.triangles:
            lines.append(f"{a} {b} {c}")
        bnd = [e for e in range(self.n_edges) if self.edge_kind[e] != INTERIOR]
        lines.append(f"boundary {len(bnd)}")
        for e in bnd:
            a, b = self.edges[e]
            tag = "D" if self.edge_kind[e] == DIRICHLET else "N"
            lines.append(f"{a} {b} {tag}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path, sigma_cap=100.0):
        with open(path, encoding="utf-8") as fh:
            tokens = fh.read().split("\n")
        lines = [ln.strip() for ln in tokens if ln.strip()]
        if not lines or lines[0] != "afem2d-mesh v1":
            raise MeshFormatError("missing 'afem2d-mesh v1' header")
        pos = 1

        def expect(keyword):
            nonlocal pos
            parts = lines[pos].split()
            if len(parts) != 2 or parts[0] != keyword:
                raise MeshFormatError(f"expected '{keyword} N' at line {pos + 1}")
            pos += 1
            return int(parts[1])

        nv = expect("vertices")
        verts = np.array([[float(v) for v in lines[pos + i].split()]
                          for i in range(nv)])
        pos += nv
        nt = expect("triangles")
        tris = np.array([[int(v) for v in lines[pos + i].split()]
                         for i in range(nt)], dtype=np.int64)
        pos += nt
        nb = expect("boundary")
        boundary = []
        for i in range(nb):
            a, b, tag = lines[pos + i].split()
            if tag not in ("D", "N"):
                raise MeshFormatError(f"bad boundary tag {tag!r}")
            boundary.append((int(a), int(b), DIRICHLET if tag == "D" else NEUMANN))
        return build_mesh(verts, tris, boundary, sigma_cap=sigma_cap,
                          longest_edge_reference=False)


def build_mesh(vertices, triangles, boundary, sigma_cap=100.0,
               longest_edge_reference=True):
    """Construct an initial mesh from vertex/triangle arrays and a boundary list.

    boundary: iterable of (va, vb, kind) covering every boundary edge.
    Triangles with negative signed area are flipped to counterclockwise.
    By default each root triangle's reference edge is rotated to its longest
    edge (ties: lowest local edge index), which gives good shape constants.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64).copy()
    if triangles.size and (triangles.min() < 0
                           or triangles.max() >= len(vertices)):
        raise MeshInputError("triangle vertex index out of range")

    for i, (a, b, c) in enumerate(triangles):
        d1 = vertices[b] - vertices[a]
        d2 = vertices[c] - vertices[a]
        if d1[0] * d2[1] - d1[1] * d2[0] < 0:
            # swapping v0/v1 flips orientation but keeps the reference edge pair
            triangles[i] = (b, a, c)

    if longest_edge_reference:
        for i, (a, b, c) in enumerate(triangles):
            lens = [np.linalg.norm(vertices[b] - vertices[a]),
                    np.linalg.norm(vertices[c] - vertices[b]),
                    np.linalg.norm(vertices[a] - vertices[c])]
            lmax = max(lens)
            k = min(j for j in range(3) if lens[j] >= lmax - 1e-14 * lmax)
            if k == 1:
                triangles[i] = (b, c, a)
            elif k == 2:
                triangles[i] = (c, a, b)

    bmap = {_canon(a, b): kind for a, b, kind in boundary}
    kinds = np.zeros((len(triangles), 3), dtype=np.int8)
    seen = set()
    for i, (a, b, c) in enumerate(triangles):
        for loc, (u, v) in enumerate(((a, b), (b, c), (c, a))):
            key = _canon(int(u), int(v))
            if key in bmap:
                kinds[i, loc] = bmap[key]
                seen.add(key)
    missing = set(bmap) - seen
    if missing:
        raise MeshInputError(f"boundary pairs not present as edges: {sorted(missing)}")
    return Mesh(vertices, triangles, kinds, sigma_cap=sigma_cap)


# -- refinement ----------------------------------------------------------

def refine(mesh, marked):
    """Bisect all marked edges; return the coarsest conforming refinement.

    Closure: any triangle one of whose edges is marked gets its reference
    edge marked too, iterated to a fixpoint; each triangle is then split
    into 2, 3, or 4 sons by iterated newest vertex bisection.
    """
    marked = list(marked)
    for e in marked:
        if not (0 <= e < mesh.n_edges):
            raise MeshInputError(f"marked edge index {e} out of range")
    if not marked:
        return mesh

    marked_pairs = {_canon(int(mesh.edges[e, 0]), int(mesh.edges[e, 1]))
                    for e in marked}

    # closure fixpoint via worklist
    work = deque(marked_pairs)
    pair_to_edge = {_canon(int(a), int(b)): e
                    for e, (a, b) in enumerate(mesh.edges)}
    while work:
        pair = work.popleft()
        for ti, _ in mesh.edge_tris[pair_to_edge[pair]]:
            a, b = int(mesh.triangles[ti, 0]), int(mesh.triangles[ti, 1])
            ref = _canon(a, b)
            if ref not in marked_pairs:
                marked_pairs.add(ref)
                work.append(ref)

    # new vertices: midpoints, in ascending parent-edge order
    verts = [mesh.vertices]
    midpoint = {}
    nv = mesh.n_vertices
    new_coords = []
    for e in range(mesh.n_edges):
        a, b = int(mesh.edges[e, 0]), int(mesh.edges[e, 1])
        pair = _canon(a, b)
        if pair in marked_pairs:
            midpoint[pair] = nv
            new_coords.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
            nv += 1
    verts.append(np.asarray(new_coords).reshape(-1, 2))
    vertices = np.vstack(verts)

    tris, kinds, roots, paths = [], [], [], []

    def emit(a, b, c, k01, k12, k20, root, path):
        pair = _canon(a, b)
        if pair not in marked_pairs:
            tris.append((a, b, c))
            kinds.append((k01, k12, k20))
            roots.append(root)
            paths.append(path)
            return
        m = midpoint[pair]
        # son containing v0 first, reference edges opposite the new vertex
        emit(c, a, m, k20, k01, INTERIOR, root, path + "0")
        emit(b, c, m, k12, INTERIOR, k01, root, path + "1")

    for ti in range(mesh.n_triangles):
        a, b, c = (int(v) for v in mesh.triangles[ti])
        k01, k12, k20 = (int(k) for k in mesh._kinds_local[ti])
        emit(a, b, c, k01, k12, k20, int(mesh.tri_root[ti]), mesh.tri_path[ti])

    hint = {}
    for e in range(mesh.n_edges):
        pair = _canon(int(mesh.edges[e, 0]), int(mesh.edges[e, 1]))
        if pair not in marked_pairs:
            hint[pair] = e

    return Mesh(vertices, np.asarray(tris, dtype=np.int64),
                np.asarray(kinds, dtype=np.int8),
                tri_root=np.asarray(roots), tri_path=tuple(paths),
                root_data=mesh.root_data, edge_order_hint=hint,
                sigma_cap=mesh.sigma_cap)


def refine_uniform(mesh):
    """Bisect every edge; each triangle is split into 4 sons."""
    return refine(mesh, range(mesh.n_edges))


# -- overlay -------------------------------------------------------------

def overlay(a, b):
    """Coarsest common refinement of two meshes from the same root mesh."""
    ra, rb = a.root_data, b.root_data
    if not (np.array_equal(ra[0], rb[0]) and np.array_equal(ra[1], rb[1])
            and np.array_equal(ra[2], rb[2])):
        raise MeshInputError("meshes do not share the same root mesh")

    root_verts, root_tris, root_kinds = ra
    n_roots = len(root_tris)

    leaves_a = [[] for _ in range(n_roots)]
    leaves_b = [[] for _ in range(n_roots)]
    for ti in range(a.n_triangles):
        leaves_a[a.tri_root[ti]].append(a.tri_path[ti])
    for ti in range(b.n_triangles):
        leaves_b[b.tri_root[ti]].append(b.tri_path[ti])

    def union_leaves(la, lb):
        prefixes_b = {q[:k] for q in lb for k in range(len(q))}
        prefixes_a = {q[:k] for q in la for k in range(len(q))}
        keep = {p for p in la if p not in prefixes_b}
        keep |= {p for p in lb if p not in prefixes_a}
        return sorted(keep)

    vid = {}
    coords = []

    def vertex_id(x, y):
        key = (x, y)
        i = vid.get(key)
        if i is None:
            i = len(coords)
            vid[key] = i
            coords.append(key)
        return i

    tris, kinds, roots, paths = [], [], [], []
    for r in range(n_roots):
        pa, pb, pc = (root_verts[v] for v in root_tris[r])
        k = tuple(int(x) for x in root_kinds[r])
        for path in union_leaves(leaves_a[r], leaves_b[r]):
            A, B, C = map(np.asarray, (pa, pb, pc))
            k01, k12, k20 = k
            for ch in path:
                M = 0.5 * (A + B)
                if ch == "0":
                    A, B, C, k01, k12, k20 = C, A, M, k20, k01, INTERIOR
                else:
                    A, B, C, k01, k12, k20 = B, C, M, k12, INTERIOR, k01
            tris.append((vertex_id(*A), vertex_id(*B), vertex_id(*C)))
            kinds.append((k01, k12, k20))
            roots.append(r)
            paths.append(path)

    return Mesh(np.asarray(coords, dtype=float), np.asarray(tris, dtype=np.int64),
                np.asarray(kinds, dtype=np.int8),
                tri_root=np.asarray(roots), tri_path=tuple(paths),
                root_data=a.root_data, sigma_cap=max(a.sigma_cap, b.sigma_cap))


# -- diagnostics ---------------------------------------------------------

def validate_interior_node_assumption(mesh):
    """True iff every triangle has at least one vertex not on the boundary."""
    on_bnd = mesh.boundary_vertex[mesh.triangles]
    return bool(np.all(~np.all(on_bnd, axis=1)))


def closure_ratio(history):
    """Empirical closure constant (#T_l - #T_0) / sum of marked counts.

    history: list of (marked_count, mesh_size) per level; the final level's
    marked count is ignored.  Returns None when nothing was ever marked.
    """
    if len(history) < 2:
        return None
    total_marked = sum(m for m, _ in history[:-1])
    if total_marked == 0:
        return None
    return (history[-1][1] - history[0][1]) / total_marked
