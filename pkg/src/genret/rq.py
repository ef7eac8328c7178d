"""Residual quantization of dense document vectors into docids.

Level 1 clusters the vectors with k-means; each later level clusters the
residuals left by the previous levels. The codebooks both reconstruct the
vectors and seed the model's per-position docid embedding tables, so the
docid space inherits the hierarchy the recursion captures.

Collision policy for unique docids: among documents sharing a code tuple the
one with the smallest reconstruction error keeps it; the others take the
next-nearest centroid at the last level, cascading to earlier levels if
needed.
"""

from dataclasses import dataclass

import numpy as np

from genret.errors import ConfigurationError, DataFormatError


@dataclass
class Codebooks:
    books: np.ndarray            # (L, V, D)
    level_energies: list         # per level: k-means energy per iteration

    @property
    def L(self):
        return self.books.shape[0]

    @property
    def V(self):
        return self.books.shape[1]

    @property
    def D(self):
        return self.books.shape[2]


@dataclass
class DistortionReport:
    mse: list                    # index p-1: mean ||x - reconstruction(p)||^2
    utilization: np.ndarray      # (L, V) assignment counts per level


def _dist2(x, c):
    """Squared distances (N, K) between rows of x and rows of c. Clipped at
    zero: the expansion can go slightly negative when a point coincides with
    a centroid."""
    d2 = (
        (x * x).sum(axis=1, keepdims=True)
        - 2.0 * (x @ c.T)
        + (c * c).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    if n <= k:
        centroids[:n] = points
        scale = max(np.abs(points).max(), 1.0)
        for j in range(n, k):
            centroids[j] = points[j % n] + rng.normal(0.0, 1e-6 * scale, size=points.shape[1])
        return centroids
    centroids[0] = points[rng.integers(n)]
    d2 = _dist2(points, centroids[0:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[j] = points[rng.integers(n)]
            continue
        centroids[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, _dist2(points, centroids[j : j + 1])[:, 0])
    return centroids


def kmeans(points, k, iters, rng):
    """Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded
    from the point farthest from its centroid. Returns (centroids, energies)
    where energies[t] is the clustering energy entering iteration t (a
    non-increasing sequence)."""
    if iters < 1:
        raise ConfigurationError("iters must be >= 1")
    n = points.shape[0]
    centroids = _kmeans_pp_init(points, k, rng)
    energies = []
    for _ in range(iters):
        d2 = _dist2(points, centroids)
        assign = d2.argmin(axis=1)
        mind2 = d2[np.arange(n), assign]
        counts = np.bincount(assign, minlength=k)
        for c in np.flatnonzero(counts == 0):
            far = int(mind2.argmax())
            centroids[c] = points[far]
            assign[far] = c
            mind2[far] = 0.0
            counts = np.bincount(assign, minlength=k)
        energies.append(float(mind2.sum()))
        for c in range(k):
            if counts[c] > 0:
                centroids[c] = points[assign == c].mean(axis=0)
    return centroids, energies


def train_codebooks(embeddings, L, V, iters=20, seed=0) -> Codebooks:
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] < 1:
        raise ConfigurationError("embeddings must be a non-empty N x D matrix")
    if V < 1 or L < 1:
        raise ConfigurationError("L and V must be >= 1")
    rng = np.random.default_rng(seed)
    books = np.empty((L, V, emb.shape[1]))
    level_energies = []
    residual = emb.copy()
    for level in range(L):
        centroids, energies = kmeans(residual, V, iters, rng)
        books[level] = centroids
        level_energies.append(energies)
        codes = _dist2(residual, centroids).argmin(axis=1)
        residual = residual - centroids[codes]
    return Codebooks(books=books, level_energies=level_energies)


def encode(embeddings, codebooks: Codebooks):
    """Greedy nearest-centroid codes, no uniqueness. Returns (N, L) int64."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.shape[1] != codebooks.D:
        raise DataFormatError(f"dim {emb.shape[1]} != codebook dim {codebooks.D}")
    codes = np.empty((emb.shape[0], codebooks.L), dtype=np.int64)
    residual = emb.copy()
    for level in range(codebooks.L):
        c = _dist2(residual, codebooks.books[level]).argmin(axis=1)
        codes[:, level] = c
        residual -= codebooks.books[level][c]
    return codes


def approximate(docid, codebooks: Codebooks, prefix_len: int):
    """Partial reconstruction sum_{i<=prefix_len} E_i[c_i]."""
    if not 1 <= prefix_len <= codebooks.L:
        raise ConfigurationError(f"prefix_len {prefix_len} out of [1, {codebooks.L}]")
    codes = np.asarray(docid, dtype=np.int64)
    if codes.min() < 0 or codes.max() >= codebooks.V:
        raise DataFormatError("code out of range")
    idx = np.arange(prefix_len)
    return codebooks.books[idx, codes[:prefix_len]].sum(axis=0)


def _complete_greedy(residual, codebooks, from_level):
    """Nearest codes for levels >= from_level given the residual entering
    that level. Returns (tuple of codes, final residual)."""
    codes = []
    for m in range(from_level, codebooks.L):
        c = int(_dist2(residual[None, :], codebooks.books[m]).argmin())
        codes.append(c)
        residual = residual - codebooks.books[m][c]
    return tuple(codes), residual


def _recon_error(emb, codebooks, codes):
    recon = codebooks.books[np.arange(codebooks.L), list(codes)].sum(axis=0)
    return float(((emb - recon) ** 2).sum())


def assign_docids(doc_ids, embeddings, codebooks: Codebooks) -> dict:
    """Unique docid per document. Returns {doc_id: tuple of L codes}."""
    emb = np.asarray(embeddings, dtype=np.float64)
    n = len(doc_ids)
    if emb.shape[0] != n:
        raise DataFormatError("doc_ids and embeddings disagree in length")
    if n > codebooks.V ** codebooks.L:
        raise ConfigurationError(
            f"{n} documents cannot receive unique docids from a {codebooks.V}^{codebooks.L} space"
        )
    base = encode(emb, codebooks)
    groups = {}
    for i in range(n):
        groups.setdefault(tuple(int(c) for c in base[i]), []).append(i)

    assigned = {}
    used = set()
    losers = []
    for tup, members in groups.items():
        if len(members) == 1:
            winner = members[0]
        else:
            winner = min(members, key=lambda i: (_recon_error(emb[i], codebooks, tup), doc_ids[i]))
        assigned[doc_ids[winner]] = tup
        used.add(tup)
        losers.extend(i for i in members if i != winner)

    for i in sorted(losers, key=lambda i: doc_ids[i]):
        tup = _cascade_reassign(emb[i], codebooks, tuple(int(c) for c in base[i]), used)
        assigned[doc_ids[i]] = tup
        used.add(tup)
    return {did: assigned[did] for did in doc_ids}


def _cascade_reassign(emb, codebooks, codes, used):
    """Find the best free tuple by forcing an alternative code at the last
    level first (in nearest order), then at progressively earlier levels,
    completing deeper levels greedily."""
    for level in range(codebooks.L - 1, -1, -1):
        residual = emb - sum(
            (codebooks.books[m][codes[m]] for m in range(level)), np.zeros(codebooks.D)
        )
        order = np.argsort(_dist2(residual[None, :], codebooks.books[level])[0], kind="stable")
        for alt in order:
            tail, _ = _complete_greedy(residual - codebooks.books[level][int(alt)], codebooks, level + 1)
            candidate = codes[:level] + (int(alt),) + tail
            if candidate not in used:
                return candidate
    raise ConfigurationError("exhausted docid reassignment search without a free code")


def distortion(embeddings, assignments, codebooks: Codebooks) -> DistortionReport:
    """Exact per-prefix-length MSE and per-level utilization over all
    documents. ``assignments``: (N, L) codes aligned with embeddings."""
    emb = np.asarray(embeddings, dtype=np.float64)
    codes = np.asarray(assignments, dtype=np.int64)
    if codes.shape != (emb.shape[0], codebooks.L):
        raise DataFormatError(f"assignments shape {codes.shape} mismatched")
    if emb.shape[1] != codebooks.D:
        raise DataFormatError("embedding dim mismatched with codebooks")
    mse = []
    recon = np.zeros_like(emb)
    for level in range(codebooks.L):
        recon += codebooks.books[level][codes[:, level]]
        mse.append(float(((emb - recon) ** 2).sum(axis=1).mean()))
    util = np.stack(
        [np.bincount(codes[:, level], minlength=codebooks.V) for level in range(codebooks.L)]
    )
    return DistortionReport(mse=mse, utilization=util)
