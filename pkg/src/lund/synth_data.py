"""Seeded generators for the synthetic benchmark families.

Every family draws a cluster index per point from the multinomial mixture
weights, then samples the point from that cluster's distribution.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .point_store import PointCloud

FAMILIES = ("bottleneck", "nonlinear_circles", "nadler_gaussians", "gaussian_pair", "custom_mixture")

# frozen generator parameters; see the README for the construction rationale
BOTTLENECK = dict(
    blob_std=0.2,
    barbell_length=2.5,
    bridge_frac=0.1,
    bridge_jitter=0.05,
    barbell_gap=1.8,
    third_center=(4.5, 0.9),
)
NONLINEAR = dict(
    disk_radius=0.5,
    ring_radii=(1.3, 2.2),
    radial_std=0.05,
    bump_frac=0.7,
    bump_concentration=8.0,
    bump_angles=(0.0, 0.0),
)
NADLER = dict(
    large_center=(0.0, 0.0),
    large_std=0.5,
    small_centers=((1.8, 0.3), (1.8, -0.3)),
    small_std=0.15,
)


@dataclass(frozen=True)
class DatasetSpec:
    family: str
    n: int = 2000
    seed: int = 0
    weights: tuple | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown dataset family {self.family!r}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidParameterError(f"n must be a positive integer, got {self.n}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if (w < 0).any() or abs(w.sum() - 1) > 1e-9 or w.size < 1:
                raise InvalidParameterError("mixture weights must be nonnegative and sum to 1")
            if self.n < int((w > 0).sum()):
                raise InvalidParameterError("n must be at least the number of clusters")

    def with_seed(self, seed: int) -> "DatasetSpec":
        return DatasetSpec(self.family, self.n, seed, self.weights, dict(self.params))

    def to_json(self) -> dict:
        d = asdict(self)
        d["weights"] = None if self.weights is None else list(self.weights)
        d["params"] = _jsonable(self.params)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "DatasetSpec":
        w = d.get("weights")
        return cls(d["family"], int(d.get("n", 2000)), int(d.get("seed", 0)),
                   None if w is None else tuple(w), dict(d.get("params") or {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _assign(rng, n, weights):
    w = np.asarray(weights, dtype=np.float64)
    return rng.choice(w.size, size=n, p=w / w.sum())


def _bottleneck(rng, counts, p):
    std, length, gap = p["blob_std"], p["barbell_length"], p["barbell_gap"]
    out = []
    for c, y in enumerate((0.0, gap)):
        m = counts[c]
        a = np.array([0.0, y])
        b = np.array([length, y])
        n_bridge = int(round(p["bridge_frac"] * m))
        n_blob = m - n_bridge
        side = rng.integers(2, size=n_blob)
        centers = np.where(side[:, None] == 0, a, b)
        blobs = centers + std * rng.standard_normal((n_blob, 2))
        s = rng.uniform(size=n_bridge)
        bridge = a + s[:, None] * (b - a) + p["bridge_jitter"] * rng.standard_normal((n_bridge, 2))
        pts = np.vstack([blobs, bridge])
        out.append(pts[rng.permutation(m)])
    out.append(np.asarray(p["third_center"]) + std * rng.standard_normal((counts[2], 2)))
    return out


def _ring(rng, m, radius, p, phase):
    n_bump = rng.binomial(m, p["bump_frac"])
    theta_u = rng.uniform(0, 2 * np.pi, size=m - n_bump)
    which = rng.integers(2, size=n_bump)
    theta_b = rng.vonmises(phase + np.pi * which, p["bump_concentration"])
    theta = np.concatenate([theta_u, theta_b])
    r = radius + p["radial_std"] * rng.standard_normal(m)
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return pts[rng.permutation(m)]


def _circles(rng, counts, p):
    m = counts[0]
    r = p["disk_radius"] * np.sqrt(rng.uniform(size=m))
    th = rng.uniform(0, 2 * np.pi, size=m)
    out = [np.column_stack([r * np.cos(th), r * np.sin(th)])]
    for c, (radius, phase) in enumerate(zip(p["ring_radii"], p["bump_angles"])):
        out.append(_ring(rng, counts[c + 1], radius, p, phase))
    return out


def _gaussians(rng, counts, means, stds):
    return [np.asarray(mu) + s * rng.standard_normal((m, len(mu))) for m, mu, s in zip(counts, means, stds)]


def _family_setup(spec: DatasetSpec):
    p = dict(spec.params)
    fam = spec.family
    if fam == "bottleneck":
        p = {**BOTTLENECK, **p}
        return (1 / 3, 1 / 3, 1 / 3), p
    if fam == "nonlinear_circles":
        p = {**NONLINEAR, **p}
        return (1 / 3, 1 / 3, 1 / 3), p
    if fam == "nadler_gaussians":
        p = {**NADLER, **p}
        return (0.5, 0.25, 0.25), p
    if fam == "gaussian_pair":
        sep = float(p.get("separation", 2.0))
        p = {"means": [[sep, 0.0], [0.0, sep]], "stds": [np.sqrt(0.1)] * 2, **p}
        return (0.5, 0.5), p
    if "means" not in p:
        raise InvalidParameterError("custom_mixture needs 'means'")
    k = len(p["means"])
    stds = p.get("stds", [1.0] * k)
    if len(stds) != k:
        raise InvalidParameterError("custom_mixture needs one std per mean")
    p = {**p, "stds": stds}
    return tuple([1.0 / k] * k), p


def generate(spec: DatasetSpec) -> PointCloud:
    """Sample a labeled point cloud; deterministic for a given spec."""
    default_w, p = _family_setup(spec)
    w = spec.weights if spec.weights is not None else default_w
    if len(w) != len(default_w):
        raise InvalidParameterError(
            f"{spec.family} has {len(default_w)} clusters but {len(w)} weights were given"
        )
    rng = np.random.default_rng(spec.seed)
    z = _assign(rng, spec.n, w)
    counts = np.bincount(z, minlength=len(w))

    fam = spec.family
    if fam == "bottleneck":
        parts = _bottleneck(rng, counts, p)
    elif fam == "nonlinear_circles":
        parts = _circles(rng, counts, p)
    elif fam == "nadler_gaussians":
        means = [p["large_center"], *p["small_centers"]]
        parts = _gaussians(rng, counts, means, [p["large_std"], p["small_std"], p["small_std"]])
    else:
        parts = _gaussians(rng, counts, p["means"], p["stds"])

    points = np.empty((spec.n, parts[0].shape[1]))
    for k, part in enumerate(parts):
        points[z == k] = part
    # compact labels so absent (zero-weight) clusters leave no gaps
    present = np.flatnonzero(counts > 0)
    remap = np.zeros(len(w), dtype=np.int64)
    remap[present] = np.arange(1, present.size + 1)
    return PointCloud(points, remap[z])


def default_specs(n: int = 2000, seed: int = 0) -> dict[str, DatasetSpec]:
    return {
        "bottleneck": DatasetSpec("bottleneck", n, seed),
        "nonlinear_circles": DatasetSpec("nonlinear_circles", n, seed),
        "nadler_gaussians": DatasetSpec("nadler_gaussians", n, seed),
        "gaussian_pair": DatasetSpec("gaussian_pair", n, seed, params={"separation": 2.0}),
    }


def cloud_digest(cloud: PointCloud) -> str:
    """SHA-256 of coordinates and labels, for reproducibility snapshots."""
    h = hashlib.sha256(np.ascontiguousarray(cloud.points).tobytes())
    if cloud.ground_truth is not None:
        h.update(cloud.ground_truth.astype(np.int64).tobytes())
    return h.hexdigest()


def spec_json(spec: DatasetSpec) -> str:
    return json.dumps(spec.to_json(), indent=2, sort_keys=True)
