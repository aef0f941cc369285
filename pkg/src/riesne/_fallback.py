"""Pure-Python/numpy twins of the kernels in ``riesne._core``.

Same constructor signatures, methods and tree layouts; the vantage-point tree
draws its vantage points from the same splitmix64 stream, so both backends
build identical trees whenever their distances agree bit-for-bit.
"""

import heapq

import numpy as np

NAME = "python"

EUCLIDEAN, SPHERE, SPD = 0, 1, 2
BH_MAX_DEPTH = 64
_MASK = (1 << 64) - 1


def symmetric_eigvals(mat):
    return np.linalg.eigvalsh(np.asarray(mat, dtype=np.float64))


class Metric:
    def __init__(self, family, data, whiten=None, m=0):
        self.family = int(family)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.n, self.dim = self.data.shape
        self.m = int(m)
        if self.family == SPD:
            if whiten is None or self.m * self.m != self.dim:
                raise ValueError("SPD metric needs m and whitening factors")
            self._mats = self.data.reshape(self.n, self.m, self.m)
            self._whiten = np.ascontiguousarray(whiten, dtype=np.float64).reshape(
                self.n, self.m, self.m
            )

    def distances_from(self, i, idx):
        js = np.asarray(idx, dtype=np.int64)
        if self.family == EUCLIDEAN:
            diff = self.data[js] - self.data[i]
            out = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        elif self.family == SPHERE:
            x = self.data[i]
            minus = self.data[js] - x
            plus = self.data[js] + x
            out = 2.0 * np.arctan2(
                np.sqrt(np.einsum("ij,ij->i", minus, minus)),
                np.sqrt(np.einsum("ij,ij->i", plus, plus)),
            )
        else:
            a = np.minimum(js, i)
            b = np.maximum(js, i)
            w = self._whiten[a]
            mid = w @ self._mats[b] @ np.swapaxes(w, 1, 2)
            mid = 0.5 * (mid + np.swapaxes(mid, 1, 2))
            ev = np.linalg.eigvalsh(mid)
            with np.errstate(invalid="ignore", divide="ignore"):
                out = np.sqrt(np.sum(np.log(ev) ** 2, axis=1))
            out[np.any(ev <= 0.0, axis=1)] = np.inf
        out[js == i] = 0.0
        return out

    def distance(self, i, j):
        return float(self.distances_from(i, [j])[0])

    def pairwise(self):
        out = np.zeros((self.n, self.n))
        for i in range(self.n - 1):
            row = self.distances_from(i, np.arange(i + 1, self.n))
            out[i, i + 1 :] = row
            out[i + 1 :, i] = row
        return out


def _splitmix(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class VPTree:
    def __init__(self, metric, seed):
        self.metric = metric
        n = metric.n
        self.vantage = np.full(n, -1, dtype=np.int32)
        self.left = np.full(n, -1, dtype=np.int32)
        self.right = np.full(n, -1, dtype=np.int32)
        self.radius = np.zeros(n)
        self._build(int(seed) & _MASK)

    def _build(self, state):
        n = self.metric.n
        if n == 0:
            return
        items = list(range(n))
        stack = [(0, n, -1, 0)]
        count = 0
        while stack:
            lo, hi, parent, side = stack.pop()
            node = count
            count += 1
            if parent >= 0:
                (self.left if side == 0 else self.right)[parent] = node
            state, rnd = _splitmix(state)
            r = lo + rnd % (hi - lo)
            items[lo], items[r] = items[r], items[lo]
            v = items[lo]
            self.vantage[node] = v
            cnt = hi - lo - 1
            if cnt == 0:
                continue
            rest = items[lo + 1 : hi]
            dists = self.metric.distances_from(v, rest)
            pairs = sorted(zip(dists.tolist(), rest))
            med = (cnt - 1) // 2
            rad = pairs[med][0]
            split = med + 1
            while split < cnt and pairs[split][0] <= rad:
                split += 1
            items[lo + 1 : hi] = [p[1] for p in pairs]
            self.radius[node] = rad
            if split < cnt:
                stack.append((lo + 1 + split, hi, node, 1))
            stack.append((lo + 1, lo + 1 + split, node, 0))

    def _search(self, qi, k):
        heap = []  # entries (-d, -idx): the root is the worst neighbour so far
        tau = np.inf
        visited = 0
        stack = [(0, 0.0)]
        vantage, left, right, radius = self.vantage, self.left, self.right, self.radius
        while stack:
            node, bound = stack.pop()
            if bound > tau:
                continue
            v = int(vantage[node])
            d = self.metric.distance(qi, v)
            visited += 1
            if v != qi:
                if len(heap) < k:
                    heapq.heappush(heap, (-d, -v))
                elif (d, v) < (-heap[0][0], -heap[0][1]):
                    heapq.heapreplace(heap, (-d, -v))
                if len(heap) == k:
                    tau = -heap[0][0]
            lc, rc, rad = int(left[node]), int(right[node]), float(radius[node])
            slack = 1e-12 * (d + rad)
            bl = max(d - rad - slack, bound)
            br = max(rad - d - slack, bound)
            near, far = ((lc, bl), (rc, br)) if d <= rad else ((rc, br), (lc, bl))
            if far[0] >= 0 and far[1] <= tau:
                stack.append(far)
            if near[0] >= 0 and near[1] <= tau:
                stack.append(near)
        found = sorted((-nd, -ni) for nd, ni in heap)
        idx = np.array([f[1] for f in found], dtype=np.int64)
        dst = np.array([f[0] for f in found], dtype=np.float64)
        return idx, dst, visited

    def query(self, qi, k):
        if not 1 <= k <= self.metric.n - 1:
            raise ValueError(f"k must be in [1, {self.metric.n - 1}], got {k}")
        return self._search(int(qi), int(k))

    def knn_all(self, k):
        n = self.metric.n
        if not 1 <= k <= n - 1:
            raise ValueError(f"k must be in [1, {n - 1}], got {k}")
        idx = np.empty((n, k), dtype=np.int64)
        dst = np.empty((n, k))
        for i in range(n):
            idx[i], dst[i], _ = self._search(i, k)
        return idx, dst


class _Cell:
    __slots__ = ("lo", "hi", "children", "depth", "center", "half",
                 "com", "bcom", "bsum", "mom", "bmom")

    def __init__(self, lo, hi, depth, center, half):
        self.lo, self.hi, self.depth = lo, hi, depth
        self.center, self.half = center, half
        self.children = []
        self.com = self.bcom = self.mom = self.bmom = None
        self.bsum = 0.0


def _moment(points, weights, centre, d):
    m = [[0.0] * d for _ in range(d)]
    for row, w in zip(points, weights):
        dv = [row[k] - centre[k] for k in range(d)]
        for k in range(d):
            for l in range(d):
                m[k][l] += w * dv[k] * dv[l]
    return m


def _shifted(kids, masses, centres, moments, centre, d):
    """Parallel-axis rule: sum of child moments moved to ``centre``."""
    m = [[0.0] * d for _ in range(d)]
    for u, c, mk in zip(masses, centres, moments):
        dv = [c[k] - centre[k] for k in range(d)]
        for k in range(d):
            for l in range(d):
                m[k][l] += mk[k][l] + u * dv[k] * dv[l]
    return m


class BHTree:
    def __init__(self, y):
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.n, self.d = self.y.shape
        if self.d not in (2, 3):
            raise ValueError("Barnes-Hut tree supports 2 or 3 dimensions")
        self._rows = [tuple(r) for r in self.y.tolist()]
        self._build()

    @property
    def n_cells(self):
        return len(self.cells)

    def _build(self):
        n, d, y = self.n, self.d, self.y
        lo_b, hi_b = y.min(axis=0), y.max(axis=0)
        ext = float(np.max(hi_b - lo_b))
        root = _Cell(0, n, 0, list(0.5 * (lo_b + hi_b)), 0.5 * ext * (1.0 + 1e-9) + 1e-300)
        self.perm = list(range(n))
        self.cells = [root]
        c = 0
        while c < len(self.cells):
            cell = self.cells[c]
            c += 1
            if cell.hi - cell.lo <= 1 or cell.depth >= BH_MAX_DEPTH:
                continue
            groups = [[] for _ in range(1 << d)]
            for i in self.perm[cell.lo : cell.hi]:
                row = self._rows[i]
                code = 0
                for k in range(d):
                    if row[k] > cell.center[k]:
                        code |= 1 << k
                groups[code].append(i)
            start = cell.lo
            half = 0.5 * cell.half
            for code, members in enumerate(groups):
                if not members:
                    continue
                self.perm[start : start + len(members)] = members
                center = [
                    cell.center[k] + (half if code & (1 << k) else -half) for k in range(d)
                ]
                child = _Cell(start, start + len(members), cell.depth + 1, center, half)
                start += len(members)
                cell.children.append(len(self.cells))
                self.cells.append(child)
        self._summarize(None)

    def _summarize(self, beta):
        d = self.d
        for cell in reversed(self.cells):
            cnt = cell.hi - cell.lo
            if not cell.children:
                pts = self.perm[cell.lo : cell.hi]
                rows = [self._rows[i] for i in pts]
                cell.com = [sum(r[k] for r in rows) / cnt for k in range(d)]
                cell.mom = _moment(rows, [1.0] * cnt, cell.com, d)
                if beta is not None:
                    bw = [beta[i] for i in pts]
                    bsum = sum(bw)
                    if bsum > 0.0:
                        cell.bcom = [sum(w * r[k] for w, r in zip(bw, rows)) / bsum for k in range(d)]
                    else:
                        cell.bcom = cell.com
                    cell.bsum = bsum
                    cell.bmom = _moment(rows, bw, cell.bcom, d)
                continue
            kids = [self.cells[ch] for ch in cell.children]
            sizes = [ch.hi - ch.lo for ch in kids]
            cell.com = [sum(u * ch.com[k] for u, ch in zip(sizes, kids)) / cnt for k in range(d)]
            cell.mom = _shifted(kids, sizes, [ch.com for ch in kids], [ch.mom for ch in kids], cell.com, d)
            if beta is not None:
                bsum = sum(ch.bsum for ch in kids)
                if bsum > 0.0:
                    cell.bcom = [sum(ch.bsum * ch.bcom[k] for ch in kids) / bsum for k in range(d)]
                else:
                    cell.bcom = cell.com
                cell.bsum = bsum
                cell.bmom = _shifted(kids, [ch.bsum for ch in kids], [ch.bcom for ch in kids],
                                     [ch.bmom for ch in kids], cell.bcom, d)

    def _accumulate(self, i, theta2, beta):
        d = self.d
        yi = self._rows[i]
        z = 0.0
        f = [0.0] * d
        stack = [0]
        while stack:
            cell = self.cells[stack.pop()]
            if not cell.children:
                for j in self.perm[cell.lo : cell.hi]:
                    if j == i:
                        continue
                    yj = self._rows[j]
                    diff = [yi[k] - yj[k] for k in range(d)]
                    w = 1.0 / (1.0 + sum(t * t for t in diff))
                    mass = beta[j] if beta is not None else 1.0
                    z += mass * w
                    for k in range(d):
                        f[k] += mass * w * w * diff[k]
                continue
            gap2 = 0.0
            for k in range(d):
                g = abs(yi[k] - cell.center[k]) - cell.half
                if g > 0.0:
                    gap2 += g * g
            diag2 = d * 4.0 * cell.half * cell.half
            if diag2 < theta2 * gap2:
                if beta is not None:
                    mass, centre, mom = cell.bsum, cell.bcom, cell.bmom
                else:
                    mass, centre, mom = cell.hi - cell.lo, cell.com, cell.mom
                diff = [yi[k] - centre[k] for k in range(d)]
                md = [sum(mom[k][l] * diff[l] for l in range(d)) for k in range(d)]
                tr = sum(mom[k][k] for k in range(d))
                rmr = sum(diff[k] * md[k] for k in range(d))
                w = 1.0 / (1.0 + sum(t * t for t in diff))
                w2 = w * w
                w3 = w2 * w
                z += mass * w - w2 * tr + 4.0 * w3 * rmr
                for k in range(d):
                    f[k] += (mass * w2 + 12.0 * w2 * w2 * rmr - 2.0 * w3 * tr) * diff[k] - 4.0 * w3 * md[k]
            else:
                stack.extend(cell.children)
        return z, f

    def repulsion(self, theta, beta=None):
        if beta is not None:
            beta = np.asarray(beta, dtype=np.float64).tolist()
            self._summarize(beta)
        z = np.zeros(self.n)
        f = np.zeros((self.n, self.d))
        theta2 = float(theta) ** 2
        for i in range(self.n):
            z[i], f[i] = self._accumulate(i, theta2, beta)
        return z, f
