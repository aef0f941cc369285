# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: manifold distances, vantage-point tree, Barnes-Hut tree.

Every class here has a pure-Python twin in ``riesne._fallback`` with the same
constructor signature and methods; ``riesne._backend`` picks one at import.
"""

import numpy as np

from libc.math cimport atan2, fabs, log, sqrt, INFINITY
from libc.stdlib cimport free, malloc
from libcpp.algorithm cimport sort
from libcpp.pair cimport pair
from libcpp.vector cimport vector

NAME = "compiled"

cdef enum:
    EUCLIDEAN = 0
    SPHERE = 1
    SPD = 2

cdef int JACOBI_SWEEPS = 100
cdef int BH_MAX_DEPTH = 64


# ---------------------------------------------------------------------------
# Symmetric eigenvalues (cyclic Jacobi), used by the SPD distance.
# ---------------------------------------------------------------------------

cdef inline void _rotate(double* a, int m, int i, int j, int k, int l,
                         double s, double tau) noexcept nogil:
    cdef double g = a[i * m + j]
    cdef double h = a[k * m + l]
    a[i * m + j] = g - s * (h + g * tau)
    a[k * m + l] = h + s * (g - h * tau)


cdef int _jacobi_eigvals(double* a, int m, double* d, double* b, double* z) noexcept nogil:
    """Eigenvalues of the symmetric m x m matrix ``a`` (upper triangle is destroyed)."""
    cdef int p, q, j, sweep
    cdef double sm, tresh, g, h, t, theta, c, s, tau, apq
    for p in range(m):
        d[p] = a[p * m + p]
        b[p] = d[p]
        z[p] = 0.0
    for sweep in range(JACOBI_SWEEPS):
        sm = 0.0
        for p in range(m - 1):
            for q in range(p + 1, m):
                sm += fabs(a[p * m + q])
        if sm == 0.0:
            return 0
        tresh = 0.2 * sm / (m * m) if sweep < 3 else 0.0
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p * m + q]
                g = 100.0 * fabs(apq)
                if sweep > 3 and fabs(d[p]) + g == fabs(d[p]) and fabs(d[q]) + g == fabs(d[q]):
                    a[p * m + q] = 0.0
                elif fabs(apq) > tresh:
                    h = d[q] - d[p]
                    if fabs(h) + g == fabs(h):
                        t = apq / h
                    else:
                        theta = 0.5 * h / apq
                        t = 1.0 / (fabs(theta) + sqrt(1.0 + theta * theta))
                        if theta < 0.0:
                            t = -t
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    tau = s / (1.0 + c)
                    h = t * apq
                    z[p] -= h
                    z[q] += h
                    d[p] -= h
                    d[q] += h
                    a[p * m + q] = 0.0
                    for j in range(p):
                        _rotate(a, m, j, p, j, q, s, tau)
                    for j in range(p + 1, q):
                        _rotate(a, m, p, j, j, q, s, tau)
                    for j in range(q + 1, m):
                        _rotate(a, m, p, j, q, j, s, tau)
        for p in range(m):
            b[p] += z[p]
            d[p] = b[p]
            z[p] = 0.0
    return 1


def symmetric_eigvals(double[:, ::1] mat):
    """Eigenvalues of a symmetric matrix via the Jacobi kernel (testing hook)."""
    cdef int m = mat.shape[0]
    cdef double[:, ::1] a = np.array(mat, dtype=np.float64, order="C")
    out = np.empty(m)
    cdef double[::1] d = out
    cdef double* b = <double*> malloc(2 * m * sizeof(double))
    if _jacobi_eigvals(&a[0, 0], m, &d[0], b, b + m) != 0:
        free(b)
        raise ArithmeticError("Jacobi iteration did not converge")
    free(b)
    return np.sort(out)


# ---------------------------------------------------------------------------
# Distances between dataset rows.
# ---------------------------------------------------------------------------

cdef class Metric:
    """Distance between rows ``i`` and ``j`` of a prepared dataset.

    ``data`` holds one point per row: the vector for Euclidean/sphere data, the
    row-major matrix for SPD data. For SPD, ``whiten`` holds the inverse
    Cholesky factor of each matrix, also row-major.
    """

    cdef readonly int family, n, dim, m
    cdef double[:, ::1] data
    cdef double[:, ::1] whiten
    cdef double* work

    def __cinit__(self, int family, double[:, ::1] data, whiten=None, int m=0):
        self.family = family
        self.data = data
        self.n = data.shape[0]
        self.dim = data.shape[1]
        self.m = m
        self.work = NULL
        if family == SPD:
            if whiten is None or m * m != self.dim:
                raise ValueError("SPD metric needs m and whitening factors")
            self.whiten = whiten
            self.work = <double*> malloc((2 * m * m + 3 * m) * sizeof(double))

    def __dealloc__(self):
        if self.work != NULL:
            free(self.work)

    cdef double dist(self, int i, int j) noexcept nogil:
        cdef int k, p, q, r, a, b, m
        cdef double s, t, u
        cdef double* T
        cdef double* M
        cdef double* E
        if i == j:
            return 0.0
        if self.family == EUCLIDEAN:
            s = 0.0
            for k in range(self.dim):
                t = self.data[i, k] - self.data[j, k]
                s += t * t
            return sqrt(s)
        if self.family == SPHERE:
            s = 0.0
            u = 0.0
            for k in range(self.dim):
                t = self.data[i, k] - self.data[j, k]
                s += t * t
                t = self.data[i, k] + self.data[j, k]
                u += t * t
            return 2.0 * atan2(sqrt(s), sqrt(u))
        # SPD: eigenvalues of L_a^{-1} X_b L_a^{-T}, with a < b for exact symmetry
        a = i if i < j else j
        b = j if i < j else i
        m = self.m
        T = self.work
        M = self.work + m * m
        for p in range(m):
            for q in range(m):
                s = 0.0
                for r in range(p + 1):
                    s += self.whiten[a, p * m + r] * self.data[b, r * m + q]
                T[p * m + q] = s
        for p in range(m):
            for q in range(p, m):
                s = 0.0
                for r in range(q + 1):
                    s += T[p * m + r] * self.whiten[a, q * m + r]
                M[p * m + q] = s
        E = self.work + 2 * m * m
        _jacobi_eigvals(M, m, E, E + m, E + 2 * m)
        s = 0.0
        for p in range(m):
            if E[p] <= 0.0:
                return INFINITY
            u = log(E[p])
            s += u * u
        return sqrt(s)

    def distance(self, int i, int j):
        return self.dist(i, j)

    def distances_from(self, int i, idx):
        cdef long[::1] js = np.ascontiguousarray(idx, dtype=np.int64)
        out = np.empty(js.shape[0])
        cdef double[::1] o = out
        cdef Py_ssize_t k
        for k in range(js.shape[0]):
            o[k] = self.dist(i, js[k])
        return out

    def pairwise(self):
        out = np.zeros((self.n, self.n))
        cdef double[:, ::1] o = out
        cdef int i, j
        cdef double d
        for i in range(self.n):
            for j in range(i + 1, self.n):
                d = self.dist(i, j)
                o[i, j] = d
                o[j, i] = d
        return out


# ---------------------------------------------------------------------------
# Vantage-point tree.
# ---------------------------------------------------------------------------

cdef inline unsigned long long _splitmix(unsigned long long* state) noexcept nogil:
    state[0] += 0x9E3779B97F4A7C15ULL
    cdef unsigned long long z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef struct BuildTask:
    int lo
    int hi
    int parent
    int side


cdef struct SearchTask:
    int node
    double bound


cdef inline bint _worse(double d1, int i1, double d2, int i2) noexcept nogil:
    """(d1, i1) sorts after (d2, i2)."""
    return d1 > d2 or (d1 == d2 and i1 > i2)


cdef void _heap_sift_down(double* hd, int* hi, int size, int pos) noexcept nogil:
    cdef int child
    cdef double td
    cdef int ti
    while True:
        child = 2 * pos + 1
        if child >= size:
            return
        if child + 1 < size and _worse(hd[child + 1], hi[child + 1], hd[child], hi[child]):
            child += 1
        if not _worse(hd[child], hi[child], hd[pos], hi[pos]):
            return
        td = hd[pos]; hd[pos] = hd[child]; hd[child] = td
        ti = hi[pos]; hi[pos] = hi[child]; hi[child] = ti
        pos = child


cdef void _heap_push(double* hd, int* hi, int size, double d, int i) noexcept nogil:
    cdef int pos = size
    cdef int parent
    hd[pos] = d
    hi[pos] = i
    while pos > 0:
        parent = (pos - 1) // 2
        if not _worse(hd[pos], hi[pos], hd[parent], hi[parent]):
            return
        hd[pos], hd[parent] = hd[parent], hd[pos]
        hi[pos], hi[parent] = hi[parent], hi[pos]
        pos = parent


cdef class VPTree:
    """Exact metric tree over the rows of a :class:`Metric`.

    Node ``k`` stores its vantage row, the median radius and child node ids
    (-1 when absent). Rows in the left subtree lie within ``radius`` of the
    vantage, rows in the right subtree strictly beyond it.
    """

    cdef readonly Metric metric
    cdef readonly object vantage, radius, left, right
    cdef int[::1] _vantage, _left, _right
    cdef double[::1] _radius

    def __cinit__(self, Metric metric, unsigned long long seed):
        self.metric = metric
        n = metric.n
        self.vantage = np.full(n, -1, dtype=np.int32)
        self.left = np.full(n, -1, dtype=np.int32)
        self.right = np.full(n, -1, dtype=np.int32)
        self.radius = np.zeros(n)
        self._vantage = self.vantage
        self._left = self.left
        self._right = self.right
        self._radius = self.radius
        self._build(seed)

    cdef void _build(self, unsigned long long seed):
        cdef int n = self.metric.n
        cdef vector[int] items
        cdef vector[pair[double, int]] pairs
        cdef vector[BuildTask] stack
        cdef BuildTask task
        cdef unsigned long long state = seed
        cdef int count = 0, node, r, v, cnt, k, med, split
        cdef double rad
        if n == 0:
            return
        items.resize(n)
        for k in range(n):
            items[k] = k
        stack.push_back(BuildTask(0, n, -1, 0))
        while stack.size() > 0:
            task = stack.back()
            stack.pop_back()
            node = count
            count += 1
            if task.parent >= 0:
                if task.side == 0:
                    self._left[task.parent] = node
                else:
                    self._right[task.parent] = node
            r = task.lo + <int> (_splitmix(&state) % <unsigned long long> (task.hi - task.lo))
            items[task.lo], items[r] = items[r], items[task.lo]
            v = items[task.lo]
            self._vantage[node] = v
            cnt = task.hi - task.lo - 1
            if cnt == 0:
                continue
            pairs.resize(cnt)
            for k in range(cnt):
                pairs[k] = pair[double, int](self.metric.dist(v, items[task.lo + 1 + k]),
                                             items[task.lo + 1 + k])
            sort(pairs.begin(), pairs.end())
            med = (cnt - 1) // 2
            rad = pairs[med].first
            split = med + 1
            while split < cnt and pairs[split].first <= rad:
                split += 1
            for k in range(cnt):
                items[task.lo + 1 + k] = pairs[k].second
            self._radius[node] = rad
            if split < cnt:
                stack.push_back(BuildTask(task.lo + 1 + split, task.hi, node, 1))
            stack.push_back(BuildTask(task.lo + 1, task.lo + 1 + split, node, 0))

    cdef int _search(self, int qi, int k, double* hd, int* hi) noexcept nogil:
        cdef vector[SearchTask] stack
        cdef SearchTask task
        cdef int size = 0, visited = 0, node, v, lc, rc
        cdef double d, tau = INFINITY, rad, slack, bl, br
        stack.push_back(SearchTask(0, 0.0))
        while stack.size() > 0:
            task = stack.back()
            stack.pop_back()
            if task.bound > tau:
                continue
            node = task.node
            v = self._vantage[node]
            d = self.metric.dist(qi, v)
            visited += 1
            if v != qi:
                if size < k:
                    _heap_push(hd, hi, size, d, v)
                    size += 1
                elif _worse(hd[0], hi[0], d, v):
                    hd[0] = d
                    hi[0] = v
                    _heap_sift_down(hd, hi, size, 0)
                if size == k:
                    tau = hd[0]
            lc = self._left[node]
            rc = self._right[node]
            rad = self._radius[node]
            slack = 1e-12 * (d + rad)
            bl = d - rad - slack
            br = rad - d - slack
            if bl < task.bound:
                bl = task.bound
            if br < task.bound:
                br = task.bound
            if d <= rad:
                if rc >= 0 and br <= tau:
                    stack.push_back(SearchTask(rc, br))
                if lc >= 0 and bl <= tau:
                    stack.push_back(SearchTask(lc, bl))
            else:
                if lc >= 0 and bl <= tau:
                    stack.push_back(SearchTask(lc, bl))
                if rc >= 0 and br <= tau:
                    stack.push_back(SearchTask(rc, br))
        return visited

    def query(self, int qi, int k):
        """Return ``(indices, distances, visited)`` for the k nearest other rows."""
        if not 1 <= k <= self.metric.n - 1:
            raise ValueError(f"k must be in [1, {self.metric.n - 1}], got {k}")
        hd_arr = np.empty(k)
        hi_arr = np.empty(k, dtype=np.int32)
        cdef double[::1] hd = hd_arr
        cdef int[::1] hi = hi_arr
        cdef int visited = self._search(qi, k, &hd[0], &hi[0])
        order = np.lexsort((hi_arr, hd_arr))
        return hi_arr[order].astype(np.int64), hd_arr[order], visited

    def knn_all(self, int k):
        """k nearest neighbours of every row, as ``(indices, distances)`` arrays."""
        cdef int n = self.metric.n
        if not 1 <= k <= n - 1:
            raise ValueError(f"k must be in [1, {n - 1}], got {k}")
        idx = np.empty((n, k), dtype=np.int64)
        dst = np.empty((n, k))
        hd_arr = np.empty(k)
        hi_arr = np.empty(k, dtype=np.int32)
        cdef double[::1] hd = hd_arr
        cdef int[::1] hi = hi_arr
        cdef int i
        for i in range(n):
            self._search(i, k, &hd[0], &hi[0])
            order = np.lexsort((hi_arr, hd_arr))
            idx[i] = hi_arr[order]
            dst[i] = hd_arr[order]
        return idx, dst


# ---------------------------------------------------------------------------
# Barnes-Hut space-partitioning tree (quadtree for d=2, octree for d=3).
# ---------------------------------------------------------------------------

cdef struct Cell:
    int lo
    int hi
    int first_child
    int n_children
    int depth
    double center[3]
    double half
    double com[3]
    double bcom[3]
    double bsum
    double mom[9]
    double bmom[9]


cdef class BHTree:
    """Space-partitioning tree over low-dimensional points for Barnes-Hut sums.

    A cell of diagonal ``r`` at distance ``D`` from a query point (distance to
    the nearest point of the cell's box) is replaced by its summary when
    ``r / D < theta``. The summary is the mass, the centre of mass and the
    second central moment, so a far cell contributes its point-mass term plus
    the second-order correction of the expansion about the centre.
    """

    cdef double[:, ::1] y
    cdef int n, d
    cdef vector[Cell] cells
    cdef vector[int] children
    cdef vector[int] perm

    def __cinit__(self, double[:, ::1] y):
        self.y = y
        self.n = y.shape[0]
        self.d = y.shape[1]
        if self.d not in (2, 3):
            raise ValueError("Barnes-Hut tree supports 2 or 3 dimensions")
        self._build()

    @property
    def n_cells(self):
        return self.cells.size()

    cdef void _build(self):
        cdef int n = self.n, d = self.d, i, k, c, code, nchild, start, p
        cdef double lo_k, hi_k, ext = 0.0
        cdef Cell root, cell, child
        cdef int counts[8]
        cdef int offsets[8]
        cdef vector[int] scratch
        cdef vector[int] codes
        self.perm.resize(n)
        scratch.resize(n)
        codes.resize(n)
        for i in range(n):
            self.perm[i] = i
        root.lo = 0
        root.hi = n
        root.first_child = -1
        root.n_children = 0
        root.depth = 0
        for k in range(3):
            root.center[k] = 0.0
        for k in range(d):
            lo_k = INFINITY
            hi_k = -INFINITY
            for i in range(n):
                if self.y[i, k] < lo_k:
                    lo_k = self.y[i, k]
                if self.y[i, k] > hi_k:
                    hi_k = self.y[i, k]
            root.center[k] = 0.5 * (lo_k + hi_k)
            if hi_k - lo_k > ext:
                ext = hi_k - lo_k
        root.half = 0.5 * ext * (1.0 + 1e-9) + 1e-300
        self.cells.push_back(root)
        c = 0
        while c < <int> self.cells.size():
            cell = self.cells[c]
            if cell.hi - cell.lo <= 1 or cell.depth >= BH_MAX_DEPTH:
                c += 1
                continue
            for k in range(8):
                counts[k] = 0
            for p in range(cell.lo, cell.hi):
                i = self.perm[p]
                code = 0
                for k in range(d):
                    if self.y[i, k] > cell.center[k]:
                        code |= 1 << k
                codes[p] = code
                counts[code] += 1
            start = cell.lo
            for k in range(1 << d):
                offsets[k] = start
                start += counts[k]
            for p in range(cell.lo, cell.hi):
                scratch[offsets[codes[p]]] = self.perm[p]
                offsets[codes[p]] += 1
            for p in range(cell.lo, cell.hi):
                self.perm[p] = scratch[p]
            nchild = 0
            self.cells[c].first_child = self.children.size()
            start = cell.lo
            for k in range(1 << d):
                if counts[k] == 0:
                    continue
                child.lo = start
                child.hi = start + counts[k]
                start += counts[k]
                child.first_child = -1
                child.n_children = 0
                child.depth = cell.depth + 1
                child.half = 0.5 * cell.half
                for i in range(3):
                    child.center[i] = 0.0
                for i in range(d):
                    if k & (1 << i):
                        child.center[i] = cell.center[i] + child.half
                    else:
                        child.center[i] = cell.center[i] - child.half
                self.children.push_back(self.cells.size())
                self.cells.push_back(child)
                nchild += 1
            self.cells[c].n_children = nchild
            c += 1
        self._summarize(None)

    cdef void _summarize(self, beta):
        """Fill masses, centres and second moments (beta-weighted ones when ``beta`` is given)."""
        cdef int c, k, l, p, i, ch
        cdef int d = self.d
        cdef double cnt, w, u
        cdef double s[3]
        cdef double bs[3]
        cdef double dv[3]
        cdef double bsum
        cdef double[::1] b
        cdef bint weighted = beta is not None
        cdef Cell* cell
        cdef Cell* kid
        if weighted:
            b = beta
        for c in range(<int> self.cells.size() - 1, -1, -1):
            cell = &self.cells[c]
            for k in range(3):
                s[k] = 0.0
                bs[k] = 0.0
            for k in range(9):
                cell.mom[k] = 0.0
                if weighted:
                    cell.bmom[k] = 0.0
            bsum = 0.0
            cnt = cell.hi - cell.lo
            if cell.n_children == 0:
                for p in range(cell.lo, cell.hi):
                    i = self.perm[p]
                    for k in range(d):
                        s[k] += self.y[i, k]
                    if weighted:
                        w = b[i]
                        bsum += w
                        for k in range(d):
                            bs[k] += w * self.y[i, k]
                for k in range(d):
                    cell.com[k] = s[k] / cnt
                if weighted:
                    cell.bsum = bsum
                    for k in range(d):
                        cell.bcom[k] = bs[k] / bsum if bsum > 0.0 else cell.com[k]
                for p in range(cell.lo, cell.hi):
                    i = self.perm[p]
                    for k in range(d):
                        dv[k] = self.y[i, k] - cell.com[k]
                    for k in range(d):
                        for l in range(d):
                            cell.mom[3 * k + l] += dv[k] * dv[l]
                    if weighted:
                        w = b[i]
                        for k in range(d):
                            dv[k] = self.y[i, k] - cell.bcom[k]
                        for k in range(d):
                            for l in range(d):
                                cell.bmom[3 * k + l] += w * dv[k] * dv[l]
                continue
            for p in range(cell.n_children):
                kid = &self.cells[self.children[cell.first_child + p]]
                u = kid.hi - kid.lo
                for k in range(d):
                    s[k] += u * kid.com[k]
                if weighted:
                    bsum += kid.bsum
                    for k in range(d):
                        bs[k] += kid.bsum * kid.bcom[k]
            for k in range(d):
                cell.com[k] = s[k] / cnt
            if weighted:
                cell.bsum = bsum
                for k in range(d):
                    cell.bcom[k] = bs[k] / bsum if bsum > 0.0 else cell.com[k]
            # parallel-axis rule: shift each child's moment to the parent centre
            for p in range(cell.n_children):
                kid = &self.cells[self.children[cell.first_child + p]]
                u = kid.hi - kid.lo
                for k in range(d):
                    dv[k] = kid.com[k] - cell.com[k]
                for k in range(d):
                    for l in range(d):
                        cell.mom[3 * k + l] += kid.mom[3 * k + l] + u * dv[k] * dv[l]
                if weighted:
                    for k in range(d):
                        dv[k] = kid.bcom[k] - cell.bcom[k]
                    for k in range(d):
                        for l in range(d):
                            cell.bmom[3 * k + l] += kid.bmom[3 * k + l] + kid.bsum * dv[k] * dv[l]

    cdef double _gap2(self, int c, int i) noexcept nogil:
        """Squared distance from point ``i`` to the box of cell ``c`` (0 inside)."""
        cdef int k
        cdef double g, out = 0.0
        for k in range(self.d):
            g = fabs(self.y[i, k] - self.cells[c].center[k]) - self.cells[c].half
            if g > 0.0:
                out += g * g
        return out

    cdef void _accumulate(self, int i, double theta2, bint weighted, double[::1] beta,
                          double* z, double* f) noexcept nogil:
        cdef vector[int] stack
        cdef int c, p, j, k, l, d = self.d
        cdef double diff[3]
        cdef double md[3]
        cdef double d2, w, mass, diag2, tr, rmr, w2, w3
        cdef double* mom
        stack.push_back(0)
        while stack.size() > 0:
            c = stack.back()
            stack.pop_back()
            if self.cells[c].n_children == 0:
                for p in range(self.cells[c].lo, self.cells[c].hi):
                    j = self.perm[p]
                    if j == i:
                        continue
                    d2 = 0.0
                    for k in range(d):
                        diff[k] = self.y[i, k] - self.y[j, k]
                        d2 += diff[k] * diff[k]
                    w = 1.0 / (1.0 + d2)
                    mass = beta[j] if weighted else 1.0
                    z[0] += mass * w
                    for k in range(d):
                        f[k] += mass * w * w * diff[k]
                continue
            diag2 = d * 4.0 * self.cells[c].half * self.cells[c].half
            if diag2 < theta2 * self._gap2(c, i):
                if weighted:
                    mass = self.cells[c].bsum
                    mom = self.cells[c].bmom
                    for k in range(d):
                        diff[k] = self.y[i, k] - self.cells[c].bcom[k]
                else:
                    mass = self.cells[c].hi - self.cells[c].lo
                    mom = self.cells[c].mom
                    for k in range(d):
                        diff[k] = self.y[i, k] - self.cells[c].com[k]
                d2 = 0.0
                tr = 0.0
                rmr = 0.0
                for k in range(d):
                    d2 += diff[k] * diff[k]
                    tr += mom[4 * k]
                    md[k] = 0.0
                    for l in range(d):
                        md[k] += mom[3 * k + l] * diff[l]
                    rmr += diff[k] * md[k]
                w = 1.0 / (1.0 + d2)
                w2 = w * w
                w3 = w2 * w
                z[0] += mass * w - w2 * tr + 4.0 * w3 * rmr
                for k in range(d):
                    f[k] += (mass * w2 + 12.0 * w2 * w2 * rmr - 2.0 * w3 * tr) * diff[k] \
                        - 4.0 * w3 * md[k]
            else:
                for p in range(self.cells[c].n_children):
                    stack.push_back(self.children[self.cells[c].first_child + p])

    def repulsion(self, double theta, beta=None):
        """Per-point sums over all other points j of ``m_j w_ij`` and ``m_j w_ij^2 (y_i - y_j)``.

        ``w_ij = 1 / (1 + |y_i - y_j|^2)`` and ``m_j`` is 1, or ``beta[j]`` when
        ``beta`` is given. Returns ``(z, f)`` with shapes ``(n,)`` and ``(n, d)``.
        """
        cdef bint weighted = beta is not None
        cdef double[::1] b
        if weighted:
            b = np.ascontiguousarray(beta, dtype=np.float64)
            self._summarize(np.asarray(b))
        else:
            b = np.zeros(1)
        z_arr = np.zeros(self.n)
        f_arr = np.zeros((self.n, self.d))
        cdef double[::1] z = z_arr
        cdef double[:, ::1] f = f_arr
        cdef double theta2 = theta * theta
        cdef int i
        for i in range(self.n):
            self._accumulate(i, theta2, weighted, b, &z[i], &f[i, 0])
        return z_arr, f_arr
