"""Shared builders for scenario-level tests."""

import numpy as np

from sportstrack.geometry import BBox
from sportstrack.synth import Blur, Exit, ObjectSpec, Occlusion, ScenarioSpec, generate
from sportstrack.tracks import Detection


def unit(*v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def random_spec(seed: int, allow_merge: bool = True) -> ScenarioSpec:
    rng = np.random.default_rng(seed)
    n_frames = int(rng.integers(15, 50))
    n_obj = int(rng.integers(1, 6))
    objects = []
    for _ in range(n_obj):
        k = int(rng.integers(2, 5))
        frames = sorted({1, n_frames, *rng.integers(2, n_frames, size=k - 2).tolist()})
        pts = [(f, float(rng.uniform(-20, 1300)), float(rng.uniform(-20, 740))) for f in frames]
        objects.append(ObjectSpec(pts, (float(rng.uniform(20, 80)), float(rng.uniform(60, 200)))))
    occlusions, exits, blurs = [], [], []
    occluded = set()
    if n_obj >= 2 and rng.random() < 0.5:
        a, b = (int(v) for v in rng.choice(np.arange(1, n_obj + 1), size=2, replace=False))
        s = int(rng.integers(1, n_frames))
        occlusions.append(Occlusion((a, b), s, min(n_frames, s + int(rng.integers(0, 8))),
                                    merged=bool(allow_merge and rng.random() < 0.5)))
        occluded = {a, b}
    free = [i for i in range(1, n_obj + 1) if i not in occluded]
    if free and n_frames > 10 and rng.random() < 0.5:
        s = int(rng.integers(2, n_frames - 5))
        exits.append(Exit(free[0], s, s + int(rng.integers(1, 5)),
                          str(rng.choice(["left", "right", "top", "bottom"])),
                          bool(rng.random() < 0.5)))
    if rng.random() < 0.5:
        s = int(rng.integers(1, n_frames))
        blurs.append(Blur(int(rng.integers(1, n_obj + 1)), s, min(n_frames, s + 5),
                          float(rng.uniform(0.1, 0.9))))
    return ScenarioSpec(seed=seed, n_frames=n_frames, objects=objects, occlusions=occlusions,
                        exits=exits, blurs=blurs, noise=float(rng.uniform(0, 4)),
                        base_conf=float(rng.uniform(0.3, 1.0)), emb_dim=16)


def random_frames(seed: int, allow_merge: bool = True, clutter: bool = True):
    """Synthetic frames plus random false positives; returns (spec, frames)."""
    spec = random_spec(seed, allow_merge)
    _, bundle = generate(spec)
    rng = np.random.default_rng(seed + 1)
    frames = []
    for f, dets in enumerate(bundle.frames, start=1):
        dets = list(dets)
        if clutter:
            for _ in range(int(rng.poisson(0.7))):
                box = BBox(rng.uniform(0, 1200), rng.uniform(0, 650), rng.uniform(10, 80), rng.uniform(20, 150))
                dets.append(Detection(f, box, float(rng.uniform(0, 1)), unit(*rng.normal(size=spec.emb_dim))))
            order = rng.permutation(len(dets))
            dets = [dets[i] for i in order]
        frames.append(dets)
    return spec, frames
