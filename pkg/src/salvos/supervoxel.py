"""
Motion-augmented 3D SLIC supervoxels.

Cluster centres live in an 8-dimensional feature space
(x, y, z, L*, a*, b*, u, v).  Assignment uses a bounded 2S x 2S x 2D
search region per centre and the combined position/colour/motion distance;
connectivity is enforced afterwards by absorbing small 26-connected
components into the neighbour sharing the largest boundary area.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

_STRUCT26 = np.ones((3, 3, 3), dtype=bool)


@dataclass
class SlicParams:
    n: int = 100                  # desired supervoxels per frame
    depth: int = 5                # supervoxel depth D in frames
    m: float = 22.0               # compactness regularity
    w_m: float = 1.0              # motion weight
    w_z: float = 50.0             # temporal-distance weight
    w_L: float = 1.0              # L* channel weight
    frame_rate: float = 30.0
    iterations: int = 5
    min_size_fraction: float = 1.0 / 16.0

    def __post_init__(self):
        if self.depth < 1 or self.m <= 0:
            raise ValueError("depth must be >= 1 and m > 0")
        if min(self.w_m, self.w_z, self.w_L) < 0:
            raise ValueError("weights must be nonnegative")

    def grid_spacing(self, width, height):
        s = int(round(np.sqrt(width * height / self.n)))
        if s < 2:
            raise ValueError("grid spacing %d < 2; lower n" % s)
        return s


@dataclass
class LabelVolume:
    labels: np.ndarray            # (depth, h, w) dense ids 0..K-1
    centers: np.ndarray           # (K, 8) feature vectors
    adjacency: set = field(default_factory=set)
    distance_sums: list = field(default_factory=list)

    @property
    def num_clusters(self):
        return self.centers.shape[0]


def build_feature_volume(volume, flow):
    """Stack (x, y, z, L*, a*, b*, u, v) per voxel of a FrameVolume."""
    depth, h, w = volume.lab.shape[:3]
    zz, yy, xx = np.mgrid[0:depth, 0:h, 0:w].astype(np.float64)
    return np.concatenate(
        [xx[..., None], yy[..., None], zz[..., None], volume.lab,
         np.asarray(flow, dtype=np.float64)], axis=-1)


def slic_distance(pixel, center, params, spacing):
    """Combined position/colour/motion distance between two 8-vectors."""
    return float(_distance(np.asarray(pixel, dtype=np.float64),
                           np.asarray(center, dtype=np.float64),
                           params, spacing))


def _distance(features, center, params, spacing):
    """Vectorized distance of (..., 8) features to one centre 8-vector."""
    d = features - center
    dl2 = d[..., 0] ** 2 + d[..., 1] ** 2 + params.w_z * d[..., 2] ** 2
    dc2 = params.w_L * d[..., 3] ** 2 + d[..., 4] ** 2 + d[..., 5] ** 2
    dm2 = d[..., 6] ** 2 + d[..., 7] ** 2
    return np.sqrt(dl2 / (2.0 * spacing ** 2 + params.depth ** 2)
                   + dc2 / params.m
                   + params.w_m * dm2 / (params.frame_rate * spacing))


def init_centers(dims, features, params):
    """Regular-grid cluster centres; dims is (width, height, depth).

    In-frame spacing is S, temporal spacing equals the supervoxel depth D;
    centres sit at cell centres and sample their features from the volume.
    """
    width, height, depth = dims
    s = params.grid_spacing(width, height)
    nx = max(1, -(-width // s))
    ny = max(1, -(-height // s))
    nz = max(1, -(-depth // params.depth))
    centers = []
    for k in range(nz):
        z = min(k * params.depth + params.depth // 2, depth - 1)
        for j in range(ny):
            y = min(j * s + s // 2, height - 1)
            for i in range(nx):
                x = min(i * s + s // 2, width - 1)
                centers.append(features[z, y, x].copy())
    return np.array(centers)


def _initial_labels(dims, params, num_x, num_y, num_z, spacing):
    width, height, depth = dims
    zz, yy, xx = np.mgrid[0:depth, 0:height, 0:width]
    i = np.minimum(xx // spacing, num_x - 1)
    j = np.minimum(yy // spacing, num_y - 1)
    k = np.minimum(zz // params.depth, num_z - 1)
    return ((k * num_y + j) * num_x + i).astype(np.int64)


def iterate(features, centers, params, spacing, iterations=None):
    """Bounded-region assignment / centre-update loop (pre-connectivity).

    Each centre scans its 2S x 2S x 2D neighbourhood and claims voxels at
    strictly smaller distance; ties keep the lower label id because centres
    are visited in ascending order.  Centres then move to the mean feature
    vector of their members; emptied clusters are dropped.
    """
    if iterations is None:
        iterations = params.iterations
    depth, h, w = features.shape[:3]
    nx = max(1, -(-w // spacing))
    ny = max(1, -(-h // spacing))
    nz = max(1, -(-depth // params.depth))
    labels = _initial_labels((w, h, depth), params, nx, ny, nz, spacing)
    centers = centers.copy()
    distance_sums = []

    for _ in range(iterations):
        # distance of every voxel to its current centre, frame by frame
        best = np.empty((depth, h, w))
        for z in range(depth):
            c = centers[labels[z]]
            dvec = features[z] - c
            dl2 = dvec[..., 0] ** 2 + dvec[..., 1] ** 2 + params.w_z * dvec[..., 2] ** 2
            dc2 = (params.w_L * dvec[..., 3] ** 2 + dvec[..., 4] ** 2
                   + dvec[..., 5] ** 2)
            dm2 = dvec[..., 6] ** 2 + dvec[..., 7] ** 2
            best[z] = np.sqrt(dl2 / (2.0 * spacing ** 2 + params.depth ** 2)
                              + dc2 / params.m
                              + params.w_m * dm2 / (params.frame_rate * spacing))
        before = float(best.sum())

        for cid in range(len(centers)):
            cx, cy, cz = centers[cid, 0], centers[cid, 1], centers[cid, 2]
            x0, x1 = max(0, int(cx - spacing)), min(w, int(cx + spacing) + 1)
            y0, y1 = max(0, int(cy - spacing)), min(h, int(cy + spacing) + 1)
            z0, z1 = max(0, int(cz - params.depth)), min(depth, int(cz + params.depth) + 1)
            region = features[z0:z1, y0:y1, x0:x1]
            d = _distance(region, centers[cid], params, spacing)
            claim = d < best[z0:z1, y0:y1, x0:x1]
            labels[z0:z1, y0:y1, x0:x1][claim] = cid
            best[z0:z1, y0:y1, x0:x1][claim] = d[claim]
        distance_sums.append((before, float(best.sum())))

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(centers))
        sums = np.zeros((len(centers), 8))
        for ch in range(8):
            sums[:, ch] = np.bincount(flat, weights=features[..., ch].ravel(),
                                      minlength=len(centers))
        nonempty = counts > 0
        centers = sums[nonempty] / counts[nonempty][:, None]
        remap = np.cumsum(nonempty) - 1
        labels = remap[labels]

    return LabelVolume(labels=labels, centers=centers,
                       distance_sums=distance_sums)


def _component_neighbors(final, coords, shape):
    """Histogram of already-assigned labels on the 6-neighbour boundary."""
    counts = {}
    zs, ys, xs = coords
    for dz, dy, dx in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                       (0, -1, 0), (0, 0, 1), (0, 0, -1)):
        nz, ny, nx_ = zs + dz, ys + dy, xs + dx
        ok = ((nz >= 0) & (nz < shape[0]) & (ny >= 0) & (ny < shape[1])
              & (nx_ >= 0) & (nx_ < shape[2]))
        vals = final[nz[ok], ny[ok], nx_[ok]]
        for v in vals[vals >= 0]:
            counts[int(v)] = counts.get(int(v), 0) + 1
    return counts


def enforce_connectivity(label_volume, params, spacing, features=None):
    """Split labels into 26-connected components and absorb small ones.

    Components below min_size_fraction * S*S*D voxels merge into the
    adjacent component sharing the largest boundary area (ties to the lower
    id).  Labels are re-densified and centres recomputed.
    """
    labels = label_volume.labels
    shape = labels.shape
    threshold = params.min_size_fraction * spacing * spacing * params.depth

    components = []                # (size, order, coords)
    objects = ndimage.find_objects(labels + 1)
    for lab, sl in enumerate(objects):
        if sl is None:
            continue
        box = labels[sl] == lab
        comp, ncomp = ndimage.label(box, structure=_STRUCT26)
        offset = np.array([s.start for s in sl])
        for c in range(1, ncomp + 1):
            coords = np.nonzero(comp == c)
            coords = tuple(coords[i] + offset[i] for i in range(3))
            components.append((len(coords[0]), len(components), coords))

    final = np.full(shape, -1, dtype=np.int64)
    next_id = 0
    big = [c for c in components if c[0] >= threshold]
    small = sorted((c for c in components if c[0] < threshold), key=lambda c: (c[0], c[1]))
    if not big:
        # keep the largest component so something remains to absorb into
        keep = max(components, key=lambda c: (c[0], -c[1]))
        big = [keep]
        small = [c for c in components if c[1] != keep[1]]
        small.sort(key=lambda c: (c[0], c[1]))
    for _, _, coords in big:
        final[coords] = next_id
        next_id += 1

    pending = list(small)
    while pending:
        progressed = False
        deferred = []
        for size, order, coords in pending:
            counts = _component_neighbors(final, coords, shape)
            if not counts:
                deferred.append((size, order, coords))
                continue
            target = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))[0]
            final[coords] = target
            progressed = True
        if not progressed and deferred:
            # isolated group of small components: promote the largest
            keep = max(deferred, key=lambda c: (c[0], -c[1]))
            final[keep[2]] = next_id
            next_id += 1
            deferred = [c for c in deferred if c[1] != keep[1]]
        pending = deferred

    if features is not None:
        flat = final.ravel()
        counts = np.bincount(flat, minlength=next_id)
        sums = np.zeros((next_id, 8))
        for ch in range(8):
            sums[:, ch] = np.bincount(flat, weights=features[..., ch].ravel(),
                                      minlength=next_id)
        centers = sums / np.maximum(counts, 1)[:, None]
    else:
        centers = np.zeros((next_id, 8))

    return LabelVolume(labels=final, centers=centers,
                       adjacency=label_adjacency(final),
                       distance_sums=label_volume.distance_sums)


def label_adjacency(labels):
    """Set of face-adjacent label pairs (a < b)."""
    pairs = set()
    for axis in range(3):
        a = labels.take(range(labels.shape[axis] - 1), axis=axis).ravel()
        b = labels.take(range(1, labels.shape[axis]), axis=axis).ravel()
        diff = a != b
        for pa, pb in zip(a[diff], b[diff]):
            pairs.add((int(min(pa, pb)), int(max(pa, pb))))
    return pairs


def segment_supervoxels(volume, flow, params):
    """Full supervoxel chain for one clip: init, iterate, enforce connectivity."""
    features = build_feature_volume(volume, flow)
    spacing = params.grid_spacing(volume.width, volume.height)
    centers = init_centers((volume.width, volume.height, volume.depth),
                           features, params)
    pre = iterate(features, centers, params, spacing)
    return enforce_connectivity(pre, params, spacing, features=features)
