"""Independent reference computations used by the tests."""

import math

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from attnloco.terrain.curriculum import TOP


def naive_gae(rewards, values, dones, bootstrap, gamma, lam):
    """Scalar backward recursion, one env at a time."""
    steps, n = rewards.shape
    adv = np.zeros((steps, n))
    for e in range(n):
        last = 0.0
        for t in reversed(range(steps)):
            next_value = bootstrap[e] if t == steps - 1 else values[t + 1, e]
            alive = 1.0 - float(dones[t, e])
            delta = rewards[t, e] + gamma * next_value * alive - values[t, e]
            last = delta + gamma * lam * alive * last
            adv[t, e] = last
    return adv


def naive_conv2d(x, k, padding=0, stride=1):
    n, c, h, w = x.shape
    o, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for b in range(n):
        for f in range(o):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[b, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[b, f, i, j] = np.sum(patch * k[f])
    return out


def naive_attention(q, k, v, heads):
    """Loop-over-heads scaled dot-product attention for projected (nq, d) / (nk, d) inputs."""
    d = q.shape[1]
    hd = d // heads
    outs, weights = [], []
    for h in range(heads):
        sl = slice(h * hd, (h + 1) * hd)
        s = q[:, sl] @ k[:, sl].T / math.sqrt(hd)
        s = np.exp(s - s.max(axis=-1, keepdims=True))
        a = s / s.sum(axis=-1, keepdims=True)
        outs.append(a @ v[:, sl])
        weights.append(a)
    return np.concatenate(outs, axis=-1), np.stack(weights)


def simulate_curriculum(n_agents, steps, rng):
    """Always-solving agents under the level rule, written as a plain loop over time."""
    level = rng.integers(0, TOP + 1, n_agents)
    total = 0.0
    burn = steps // 10
    for t in range(steps):
        top = level == TOP
        level = level + 1
        level[top] = rng.integers(0, TOP + 1, int(top.sum()))
        if t >= burn:
            total += level.mean()
    return total / (steps - burn)


def feature_labels(field, exclude=None):
    """Label 4-connected sets of supported cells that share one height (0 = not a feature)."""
    n, m = field.heights.shape
    keep = field.support.copy()
    if exclude is not None:
        keep &= ~exclude
    idx = np.arange(n * m).reshape(n, m)
    rows, cols = [], []
    for a, b in (((slice(1, None), slice(None)), (slice(None, -1), slice(None))),
                 ((slice(None), slice(1, None)), (slice(None), slice(None, -1)))):
        same = keep[a] & keep[b] & (field.heights[a] == field.heights[b])
        rows.append(idx[a][same])
        cols.append(idx[b][same])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n * m, n * m))
    _, comp = connected_components(graph, directed=False)
    labels = np.where(keep.reshape(-1), comp + 1, 0)
    _, labels = np.unique(labels, return_inverse=True)  # compact, 0 stays 0 when present
    labels = labels.reshape(n, m)
    if not (~keep).any():
        labels = labels + 1
    return labels


def start_area(field, platform):
    """Cells of the flat-topped features that touch the start platform (the platform included)."""
    labels = feature_labels(field)
    touching = np.unique(labels[platform])
    return np.isin(labels, touching[touching > 0])


def largest_square(mask):
    """Side (cells) of the largest all-true axis-aligned square, by bisection on erosions."""
    lo, hi = 0, min(mask.shape)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if ndimage.minimum_filter(mask.astype(np.uint8), size=mid, mode="constant", cval=0).any():
            lo = mid
        else:
            hi = mid - 1
    return lo


def inscribed_diameter(mask, upsample=4):
    """Lower bound (cells) on the diameter of the largest disk inside the union of cells."""
    fine = np.kron(mask, np.ones((upsample, upsample), bool))
    dt = ndimage.distance_transform_edt(np.pad(fine, 1))
    return max(0.0, 2.0 * (dt.max() - math.sqrt(0.5)) / upsample)


def feature_widths(field, exclude=None):
    """Width (m) of every flat-topped supported feature.

    The width is a rigorous lower bound on the diameter of the largest disk
    inside the feature: the larger of the largest axis-aligned square and an
    upsampled distance-transform disk.
    """
    labels = feature_labels(field, exclude)
    widths = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        comp = labels[sl] == k
        side = largest_square(comp)
        if side < min(comp.shape):
            side = max(side, inscribed_diameter(comp))
        widths.append(side * field.resolution)
    return np.array(widths)


def features_narrower_than(field, width, exclude=None):
    """Lower-bound widths (m) of the features that cannot be shown to be at least ``width`` wide.

    Features touching the ``exclude`` mask (the start platform) are skipped.

    One pass of min/max filters over the feature labels finds every feature
    holding an axis-aligned square of the required side; the rest get the
    distance-transform disk bound.
    """
    labels = feature_labels(field)
    if exclude is not None:
        # the start area: every feature touching the excluded platform
        touching = np.unique(labels[exclude])
        labels = np.where(np.isin(labels, touching[touching > 0]), 0, labels)
    side = int(math.ceil(width / field.resolution - 1e-9))
    lo = ndimage.minimum_filter(labels, size=side, mode="constant", cval=0)
    hi = ndimage.maximum_filter(labels, size=side, mode="constant", cval=0)
    ok = np.zeros(labels.max() + 1, bool)
    ok[lo[(lo == hi) & (lo > 0)]] = True
    narrow = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or ok[k]:
            continue
        w = inscribed_diameter(labels[sl] == k) * field.resolution
        if w < width:
            narrow.append(w)
    return narrow
