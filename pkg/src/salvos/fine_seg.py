"""
Iterative graph-cut refinement of the coarse trimap.

Foreground and background are modelled by K-component full-covariance RGB
Gaussian mixtures seeded with deterministic k-means.  Each round
reassigns pixels to mixture components, refits the models, rebuilds the
pixel graph (mixture data terms + contrast-weighted 8-neighbour links) and
solves an exact min-cut.  Trimap-determined pixels are held by hard links.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix, coo_matrix
from scipy.sparse.csgraph import maximum_flow

from .coarse_fusion import BACKGROUND, FOREGROUND, UNDETERMINED
from .kmeans import lloyd

COV_FLOOR = 1e-5
CAPACITY_SCALE = 1000.0      # float capacities -> integers for the solver
MAX_DATA_TERM = 1e4          # cap on -log density, keeps HARD finite

_NEIGHBOR_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))   # 8-connectivity, half


@dataclass
class GmmModel:
    weights: np.ndarray          # (K,), sums to 1
    means: np.ndarray            # (K, 3)
    covariances: np.ndarray      # (K, 3, 3), SPD after the epsilon floor

    @property
    def n_components(self):
        return len(self.weights)

    def component_scores(self, pixels):
        """Weighted per-component densities pi_k N(z | mu_k, Sigma_k), (K, N)."""
        pixels = np.asarray(pixels, dtype=np.float64)
        out = np.empty((self.n_components, len(pixels)))
        for k in range(self.n_components):
            diff = pixels - self.means[k]
            inv = np.linalg.inv(self.covariances[k])
            det = np.linalg.det(self.covariances[k])
            quad = np.einsum("ij,jk,ik->i", diff, inv, diff)
            norm = 1.0 / np.sqrt(((2 * np.pi) ** 3) * det)
            out[k] = self.weights[k] * norm * np.exp(-0.5 * quad)
        return out

    def density(self, pixels):
        """Mixture density per pixel."""
        return self.component_scores(pixels).sum(axis=0)


def kmeans_init(pixels, k):
    """Deterministic k-means over RGB pixels; returns (labels, centers).

    k is reduced when there are fewer (distinct) pixels than clusters.
    """
    return lloyd(pixels, k)


def gmm_from_clusters(pixels, labels):
    """Fit a GmmModel from hard cluster assignments."""
    pixels = np.asarray(pixels, dtype=np.float64)
    ids = np.unique(labels)
    weights, means, covs = [], [], []
    for cid in ids:
        members = pixels[labels == cid]
        weights.append(len(members) / len(pixels))
        means.append(members.mean(axis=0))
        cov = np.zeros((3, 3)) if len(members) < 2 else np.cov(members.T, bias=True)
        covs.append(cov + COV_FLOOR * np.eye(3))
    return GmmModel(weights=np.array(weights), means=np.array(means),
                    covariances=np.array(covs))


def assign_components(frame, fg_model, bg_model, mask):
    """Most likely mixture component per pixel, within its current side.

    Returns (K indices, fg/bg side) as two arrays shaped like the mask.
    Ties break to the lowest component index (argmax keeps the first max).
    """
    frame = np.asarray(frame, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    flat = frame.reshape(-1, 3)
    comp = np.zeros(mask.size, dtype=np.int32)
    fg_idx = mask.ravel()
    if fg_idx.any():
        comp[fg_idx] = np.argmax(fg_model.component_scores(flat[fg_idx]), axis=0)
    if (~fg_idx).any():
        comp[~fg_idx] = np.argmax(bg_model.component_scores(flat[~fg_idx]), axis=0)
    return comp.reshape(mask.shape), mask


@dataclass
class SegGraph:
    capacity: csr_matrix         # integer, symmetric structure
    source: int
    sink: int
    n_pixels: int
    shape: tuple
    smooth_cost: dict = field(default_factory=dict)   # (p, q) -> float n-link weight
    data_cost: np.ndarray = None                       # (n_pixels, 2): [bg, fg]


def _neighbor_index_pairs(h, w):
    """Index pairs and distances for 8-connectivity (each pair once)."""
    idx = np.arange(h * w).reshape(h, w)
    out = []
    for dy, dx in _NEIGHBOR_OFFSETS:
        a = idx[max(-dy, 0):h - max(dy, 0), max(-dx, 0):w - max(dx, 0)]
        b = idx[max(dy, 0):h + min(dy, 0) if min(dy, 0) else h,
                max(dx, 0):w + min(dx, 0) if min(dx, 0) else w]
        out.append((a.ravel(), b.ravel(), float(np.hypot(dy, dx))))
    return out


def contrast_beta(frame):
    """beta = 1 / (2 * mean squared colour difference) over 8-neighbour pairs."""
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape[:2]
    flat = frame.reshape(-1, 3)
    total, count = 0.0, 0
    for a, b, _ in _neighbor_index_pairs(h, w):
        d2 = ((flat[a] - flat[b]) ** 2).sum(axis=1)
        total += d2.sum()
        count += len(d2)
    mean = total / max(count, 1)
    return 0.0 if mean <= 0 else 1.0 / (2.0 * mean)


def build_graph(frame, trimap, fg_model, bg_model, gamma=50.0):
    """Pixel graph with mixture data terms and contrast n-links.

    t-links carry -log of the side's mixture density; trimap-determined
    pixels get one hard link larger than the sum of all other capacities.
    """
    frame = np.asarray(frame, dtype=np.float64)
    trimap = np.asarray(trimap)
    h, w = frame.shape[:2]
    n = h * w
    source, sink = n, n + 1
    flat = frame.reshape(-1, 3)
    tri = trimap.ravel()

    data = np.empty((n, 2))
    data[:, 0] = np.minimum(-np.log(np.maximum(bg_model.density(flat), 1e-300)),
                            MAX_DATA_TERM)
    data[:, 1] = np.minimum(-np.log(np.maximum(fg_model.density(flat), 1e-300)),
                            MAX_DATA_TERM)

    beta = contrast_beta(frame)
    rows, cols, caps = [], [], []
    smooth = {}
    for a, b, dist in _neighbor_index_pairs(h, w):
        d2 = ((flat[a] - flat[b]) ** 2).sum(axis=1)
        wgt = gamma * np.exp(-beta * d2) / dist
        rows.extend([a, b])
        cols.extend([b, a])
        caps.extend([wgt, wgt])
        for i, j, v in zip(a, b, wgt):
            smooth[(int(i), int(j))] = float(v)

    # t-links: cap(source->p) = cost of labelling p background,
    # cap(p->sink) = cost of labelling p foreground.  -log densities can be
    # negative; shifting both of a pixel's t-links by its minimum keeps every
    # capacity nonnegative without changing which cut is minimal.
    shifted = data - data.min(axis=1, keepdims=True)
    src_cap = np.where(tri == UNDETERMINED, shifted[:, 0], 0.0)
    snk_cap = np.where(tri == UNDETERMINED, shifted[:, 1], 0.0)

    # A hard link only has to exceed the total soft capacity incident to one
    # pixel (8 n-links plus one t-link); keeping it small also keeps the
    # scaled integer capacities inside the solver's 32-bit range.
    hard = 8.0 * gamma + MAX_DATA_TERM + 1.0
    src_cap = np.where(tri == FOREGROUND, hard, src_cap)
    snk_cap = np.where(tri == BACKGROUND, hard, snk_cap)

    pix = np.arange(n)
    rows.extend([np.full(n, source), pix, pix, np.full(n, sink)])
    cols.extend([pix, np.full(n, source), np.full(n, sink), pix])
    caps.extend([src_cap, np.zeros(n), snk_cap, np.zeros(n)])

    rows = np.concatenate([np.asarray(r) for r in rows])
    cols = np.concatenate([np.asarray(c) for c in cols])
    caps = np.concatenate([np.asarray(c, dtype=np.float64) for c in caps])
    cap_int = np.round(caps * CAPACITY_SCALE).astype(np.int64)
    capacity = coo_matrix((cap_int, (rows, cols)), shape=(n + 2, n + 2)).tocsr()
    return SegGraph(capacity=capacity, source=source, sink=sink, n_pixels=n,
                    shape=(h, w), smooth_cost=smooth, data_cost=data)


def max_flow_min_cut(graph):
    """Exact max flow; returns (flow value, source-side boolean labeling).

    Accepts a SegGraph or any integer csr capacity matrix via a
    (capacity, source, sink) tuple.
    """
    if isinstance(graph, SegGraph):
        capacity, source, sink = graph.capacity, graph.source, graph.sink
    else:
        capacity, source, sink = graph
    result = maximum_flow(capacity, source, sink)
    flow = result.flow
    # residual reachability from the source gives the min-cut partition
    residual = flow.copy()
    cap_aligned = _align_structure(capacity, flow)
    residual.data = cap_aligned - flow.data
    mask = residual.copy()
    mask.data = (residual.data > 0).astype(np.int8)
    mask.eliminate_zeros()
    from scipy.sparse.csgraph import breadth_first_order
    order = breadth_first_order(mask, source, directed=True, return_predecessors=False)
    side = np.zeros(capacity.shape[0], dtype=bool)
    side[order] = True
    side[source] = True
    return int(result.flow_value), side


def _align_structure(capacity, flow):
    """Capacity values matched to the flow matrix's sparsity structure.

    The solver's flow matrix also carries reverse-edge entries absent from
    the capacity matrix; those positions get capacity 0.
    """
    flow = flow.sorted_indices()
    cap = capacity.sorted_indices()
    if (len(cap.indices) == len(flow.indices)
            and np.array_equal(cap.indptr, flow.indptr)
            and np.array_equal(cap.indices, flow.indices)):
        return cap.data
    out = np.zeros(len(flow.data), dtype=cap.data.dtype)
    for r in range(cap.shape[0]):
        f0, f1 = flow.indptr[r], flow.indptr[r + 1]
        c0, c1 = cap.indptr[r], cap.indptr[r + 1]
        if f1 == f0 or c1 == c0:
            continue
        cols = cap.indices[c0:c1]
        want = flow.indices[f0:f1]
        pos = np.minimum(np.searchsorted(cols, want), len(cols) - 1)
        hit = cols[pos] == want
        out[f0:f1][hit] = cap.data[c0:c1][pos[hit]]
    return out


def segmentation_energy(graph, fg_mask):
    """Data + smoothness energy of a labeling, in float capacity units."""
    fg = np.asarray(fg_mask, dtype=bool).ravel()
    energy = float(np.where(fg, graph.data_cost[:, 1], graph.data_cost[:, 0]).sum())
    for (i, j), wgt in graph.smooth_cost.items():
        if fg[i] != fg[j]:
            energy += wgt
    return energy


def grabcut_iterate(frame, trimap, k=5, gamma=50.0, max_iters=5):
    """Refine one frame's trimap into a binary mask.

    Returns (mask, info) where info carries per-iteration energies and any
    warnings.  Hard trimap pixels keep their side; undetermined pixels take
    the cut side.
    """
    frame = np.asarray(frame, dtype=np.float64)
    trimap = np.asarray(trimap)
    h, w = trimap.shape
    info = {"energies": [], "warnings": []}

    fg_seed = (trimap == FOREGROUND) | (trimap == UNDETERMINED)
    if not fg_seed.any():
        info["warnings"].append("empty foreground seed; returning all background")
        return np.zeros((h, w), dtype=np.uint8), info
    if not (trimap == BACKGROUND).any():
        raise ValueError("trimap has no determined background pixel")
    if not (trimap == UNDETERMINED).any():
        info["energies"].append(0.0)
        return (trimap == FOREGROUND).astype(np.uint8), info

    mask = fg_seed.copy()
    flat = frame.reshape(-1, 3)
    for iteration in range(max_iters):
        if iteration == 0:
            fg_labels, _ = kmeans_init(flat[mask.ravel()], k)
            bg_labels, _ = kmeans_init(flat[~mask.ravel()], k)
            fg_model = gmm_from_clusters(flat[mask.ravel()], fg_labels)
            bg_model = gmm_from_clusters(flat[~mask.ravel()], bg_labels)
        else:
            comp, side = assign_components(frame, fg_model, bg_model, mask)
            cflat, sflat = comp.ravel(), side.ravel()
            fg_model = gmm_from_clusters(flat[sflat], cflat[sflat])
            bg_model = gmm_from_clusters(flat[~sflat], cflat[~sflat])
        graph = build_graph(frame, trimap, fg_model, bg_model, gamma=gamma)
        _, side = max_flow_min_cut(graph)
        new_mask = side[:h * w].reshape(h, w)
        new_mask[trimap == FOREGROUND] = True
        new_mask[trimap == BACKGROUND] = False
        info["energies"].append(segmentation_energy(graph, new_mask))
        if np.array_equal(new_mask, mask):
            mask = new_mask
            break
        mask = new_mask
    return mask.astype(np.uint8), info


def _center_prior_trimap(h, w):
    band = max(1, min(h, w) // 10)
    trimap = np.full((h, w), UNDETERMINED, dtype=np.uint8)
    trimap[:band, :] = BACKGROUND
    trimap[-band:, :] = BACKGROUND
    trimap[:, :band] = BACKGROUND
    trimap[:, -band:] = BACKGROUND
    return trimap


def segment_clip(volume, trimap, k=5, gamma=50.0, max_iters=5):
    """Per-frame graph-cut refinement over a whole clip.

    Returns (mask sequence, list of per-frame info dicts).
    """
    rgb = volume.rgb if hasattr(volume, "rgb") else np.asarray(volume)
    trimap = np.asarray(trimap)
    if rgb.shape[:3] != trimap.shape:
        raise ValueError("volume and trimap dimensions differ")
    masks = np.zeros(trimap.shape, dtype=np.uint8)
    infos = []
    for t in range(trimap.shape[0]):
        tri = trimap[t]
        if not (tri != UNDETERMINED).any():
            warnings.warn("frame %d trimap is all undetermined; using center prior" % t)
            tri = _center_prior_trimap(*tri.shape)
        masks[t], info = grabcut_iterate(rgb[t], tri, k=k, gamma=gamma,
                                         max_iters=max_iters)
        infos.append(info)
    return masks, infos
