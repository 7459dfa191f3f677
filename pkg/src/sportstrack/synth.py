"""Deterministic synthetic scenes for exercising the tracker.

Objects follow piecewise-linear center waypoints with a fixed box size and
carry a fixed random appearance embedding. Scenario directives corrupt the
clean detections the way broadcast sports footage does: merged boxes when
players overlap, low confidence under motion blur, hidden players, and
players leaving and re-entering through an image border.

Randomness comes from xoshiro256** seeded through splitmix64, implemented
here so fixtures are reproducible bit-for-bit on any platform.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .geometry import BBox
from .matcher import TrackRow
from .mot_io import SequenceBundle
from .tracks import Detection

_MASK = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** with splitmix64 seeding, plus uniform and normal draws."""

    def __init__(self, seed: int):
        sm = seed & _MASK
        self.s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            self.s.append(out)

    @classmethod
    def from_state(cls, state) -> "Xoshiro256":
        rng = cls.__new__(cls)
        rng.s = [int(v) & _MASK for v in state]
        return rng

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        """Standard normal via Box-Muller (one output per two uniforms)."""
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)])

    def unit_vector(self, dim: int) -> np.ndarray:
        v = self.normals(dim)
        return v / np.linalg.norm(v)


@dataclass
class ObjectSpec:
    # (frame, cx, cy); the object exists from the first to the last waypoint frame
    waypoints: list[tuple[int, float, float]]
    size: tuple[float, float] = (40.0, 100.0)


@dataclass
class Occlusion:
    objects: tuple[int, ...]
    start: int
    end: int
    merged: bool = True


@dataclass
class Exit:
    obj: int
    exit_frame: int
    reentry_frame: int
    side: str = "left"
    new_embedding: bool = False


@dataclass
class Blur:
    obj: int
    start: int
    end: int
    multiplier: float


@dataclass
class ScenarioSpec:
    """A scripted scene. Object ids in directives are 1-based."""

    seed: int
    n_frames: int
    objects: list[ObjectSpec]
    width: float = 1280.0
    height: float = 720.0
    fps: float = 25.0
    base_conf: float = 0.9
    blurs: list[Blur] = field(default_factory=list)
    noise: float = 0.0
    emb_dim: int = 64
    emb_noise_deg: float = 5.0
    occlusions: list[Occlusion] = field(default_factory=list)
    exits: list[Exit] = field(default_factory=list)
    name: str = "synthetic"

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioSpec":
        d = dict(d)
        d["objects"] = [ObjectSpec([tuple(w) for w in o["waypoints"]], tuple(o["size"]))
                        for o in d["objects"]]
        d["blurs"] = [Blur(**b) for b in d.get("blurs", [])]
        d["occlusions"] = [Occlusion(**{**o, "objects": tuple(o["objects"])})
                           for o in d.get("occlusions", [])]
        d["exits"] = [Exit(**e) for e in d.get("exits", [])]
        return cls(**d)


def _check(spec: ScenarioSpec) -> None:
    if spec.n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    ids = range(1, spec.n_objects + 1)
    for o in spec.objects:
        if not o.waypoints:
            raise ValueError("every object needs at least one waypoint")
        frames = [w[0] for w in o.waypoints]
        if frames != sorted(frames) or len(set(frames)) != len(frames):
            raise ValueError("waypoint frames must be strictly increasing")

    def span_ok(a, b, what):
        if not 1 <= a <= b <= spec.n_frames:
            raise ValueError(f"{what} span [{a}, {b}] outside [1, {spec.n_frames}]")

    for oc in spec.occlusions:
        span_ok(oc.start, oc.end, "occlusion")
        if not oc.objects or any(i not in ids for i in oc.objects):
            raise ValueError(f"occlusion names unknown objects {oc.objects}")
    for b in spec.blurs:
        span_ok(b.start, b.end, "blur")
        if b.obj not in ids:
            raise ValueError(f"blur names unknown object {b.obj}")
    for ex in spec.exits:
        if ex.obj not in ids:
            raise ValueError(f"exit names unknown object {ex.obj}")
        if ex.side not in ("left", "right", "top", "bottom"):
            raise ValueError(f"unknown re-entry side {ex.side!r}")
        span_ok(ex.exit_frame, ex.reentry_frame, "exit")
        if ex.reentry_frame == ex.exit_frame:
            raise ValueError("re-entry must come after the exit")
        for oc in spec.occlusions:
            if ex.obj in oc.objects and oc.start < ex.reentry_frame and ex.exit_frame <= oc.end:
                raise ValueError(
                    f"object {ex.obj} is both exited and occluded around frames "
                    f"{max(oc.start, ex.exit_frame)}-{min(oc.end, ex.reentry_frame - 1)}")


def _position(o: ObjectSpec, frame: int) -> tuple[float, float] | None:
    wps = o.waypoints
    if frame < wps[0][0] or frame > wps[-1][0]:
        return None
    for (f0, x0, y0), (f1, x1, y1) in zip(wps, wps[1:]):
        if f0 <= frame <= f1:
            t = (frame - f0) / (f1 - f0)
            return (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
    return (wps[-1][1], wps[-1][2])


def _perturb(rng: Xoshiro256, emb: np.ndarray, deg: float) -> np.ndarray:
    u = rng.normals(len(emb))
    if deg <= 0:
        return emb.copy()
    u = u - (u @ emb) * emb
    u /= np.linalg.norm(u)
    th = math.radians(deg)
    out = math.cos(th) * emb + math.sin(th) * u
    return out / np.linalg.norm(out)


def generate(spec: ScenarioSpec) -> tuple[list[TrackRow], SequenceBundle]:
    """Render ground truth and detections for a scenario."""
    _check(spec)
    rng = Xoshiro256(spec.seed)
    embs = {i: rng.unit_vector(spec.emb_dim) for i in range(1, spec.n_objects + 1)}
    exits = {ex.obj: ex for ex in spec.exits}
    reentry_embs = {ex.obj: rng.unit_vector(spec.emb_dim)
                    for ex in spec.exits if ex.new_embedding}

    # re-entry offsets put the box flush against the declared border
    offsets = {}
    for obj, ex in exits.items():
        o = spec.objects[obj - 1]
        pos = _position(o, ex.reentry_frame)
        if pos is None:
            raise ValueError(f"object {obj} does not exist at its re-entry frame")
        w, h = o.size
        target = {"left": (w / 2, pos[1]), "right": (spec.width - w / 2, pos[1]),
                  "top": (pos[0], h / 2), "bottom": (pos[0], spec.height - h / 2)}[ex.side]
        offsets[obj] = (target[0] - pos[0], target[1] - pos[1])

    gt: list[TrackRow] = []
    frames: list[list[Detection]] = []
    for f in range(1, spec.n_frames + 1):
        boxes: dict[int, BBox] = {}
        for i, o in enumerate(spec.objects, start=1):
            pos = _position(o, f)
            if pos is None:
                continue
            ex = exits.get(i)
            if ex is not None:
                if ex.exit_frame <= f < ex.reentry_frame:
                    continue
                if f >= ex.reentry_frame:
                    pos = (pos[0] + offsets[i][0], pos[1] + offsets[i][1])
            boxes[i] = BBox.from_center(pos[0], pos[1], *o.size)
            gt.append(TrackRow(f, i, boxes[i], 1.0))

        hidden: set[int] = set()
        merged: dict[int, tuple[int, ...]] = {}
        for oc in spec.occlusions:
            if oc.start <= f <= oc.end:
                present = tuple(i for i in oc.objects if i in boxes)
                if oc.merged and present:
                    merged[present[0]] = present
                    hidden.update(present[1:])
                else:
                    hidden.update(present)

        dets = []
        for i, box in boxes.items():
            if i in hidden:
                continue
            if i in merged:
                for k in merged[i][1:]:
                    box = box.union(boxes[k])
            jitter = rng.normals(4) * spec.noise
            if spec.noise > 0:
                box = BBox(box.x + jitter[0], box.y + jitter[1],
                           max(1.0, box.w + jitter[2]), max(1.0, box.h + jitter[3]))
            conf = spec.base_conf
            for b in spec.blurs:
                if b.obj == i and b.start <= f <= b.end:
                    conf *= b.multiplier
            base_emb = embs[i]
            if i in reentry_embs and f >= exits[i].reentry_frame:
                base_emb = reentry_embs[i]
            emb = _perturb(rng, base_emb, spec.emb_noise_deg)
            dets.append(Detection(f, box, min(1.0, max(0.0, conf)), emb))
        frames.append(dets)

    bundle = SequenceBundle(name=spec.name, width=spec.width, height=spec.height, fps=spec.fps,
                            emb_dim=spec.emb_dim, frames=frames)
    return gt, bundle


def _crossing() -> ScenarioSpec:
    return ScenarioSpec(
        seed=3, n_frames=60, name="crossing",
        objects=[
            ObjectSpec([(1, 300.0, 360.0), (60, 900.0, 380.0)]),
            ObjectSpec([(1, 900.0, 370.0), (60, 300.0, 350.0)]),
        ],
    )


def _boxout_merge() -> ScenarioSpec:
    # the players close in, stand almost on top of each other for 8 frames
    # (one detection covers both), then break apart
    return ScenarioSpec(
        seed=11, n_frames=50, name="boxout_merge",
        objects=[
            ObjectSpec([(1, 340.0, 360.0), (20, 400.0, 360.0), (27, 407.0, 360.0),
                        (50, 300.0, 360.0)]),
            ObjectSpec([(1, 460.0, 360.0), (20, 401.0, 360.0), (27, 408.0, 360.0),
                        (50, 520.0, 360.0)]),
        ],
        occlusions=[Occlusion((1, 2), 20, 27, merged=True)],
    )


def _blur_dip() -> ScenarioSpec:
    # object 1 jukes left/right for six frames while its confidence collapses
    jukes = [(19, 272.0), (20, 290.0), (21, 280.0), (22, 298.0), (23, 288.0), (24, 306.0),
             (25, 296.0), (26, 304.0)]
    return ScenarioSpec(
        seed=5, n_frames=45, name="blur_dip", base_conf=0.84,
        objects=[
            ObjectSpec([(1, 200.0, 360.0)] + [(f, x, 360.0) for f, x in jukes]
                       + [(45, 380.0, 360.0)]),
            ObjectSpec([(1, 900.0, 300.0), (45, 860.0, 320.0)]),
        ],
        blurs=[Blur(1, 20, 25, 0.25)],
    )


def _edge_reentry() -> ScenarioSpec:
    return ScenarioSpec(
        seed=7, n_frames=80, name="edge_reentry",
        objects=[ObjectSpec([(1, 400.0, 300.0), (29, 36.0, 300.0), (45, 20.0, 320.0),
                             (80, 370.0, 320.0)])],
        exits=[Exit(1, 30, 45, "left")],
    )


PRESETS = {
    "crossing": _crossing,
    "boxout_merge": _boxout_merge,
    "blur_dip": _blur_dip,
    "edge_reentry": _edge_reentry,
}


def preset(name: str) -> ScenarioSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
