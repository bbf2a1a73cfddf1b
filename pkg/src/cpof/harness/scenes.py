"""Synthetic scenes: textured backgrounds with ship-like targets of two
classes pasted at known positions."""

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import CongestionError, ParameterError, SizeError
from ..sensing import make_rng
from ..xforms import is_power_of_two

__all__ = [
    "FlatBackground",
    "TexturedBackground",
    "Placement",
    "RandomPlacement",
    "SceneSpec",
    "ship_silhouette",
    "default_targets",
    "textured_background",
    "generate_scene",
    "MAX_PLACEMENT_ATTEMPTS",
]

MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class FlatBackground:
    level: float = 0.0


@dataclass(frozen=True)
class TexturedBackground:
    """Low-pass filtered white noise around ``level``.

    ``correlation_length`` is the standard deviation (pixels) of the
    Gaussian smoothing kernel; ``amplitude`` the standard deviation of the
    resulting texture.
    """

    level: float = 50.0
    amplitude: float = 10.0
    correlation_length: float = 3.0


@dataclass(frozen=True)
class Placement:
    """Target ``label`` with its top-left corner at ``(row, col)``; ``row`` or
    ``col`` set to None means a random position."""

    label: str
    row: Optional[int] = None
    col: Optional[int] = None

    @property
    def is_fixed(self) -> bool:
        return self.row is not None and self.col is not None


@dataclass(frozen=True)
class RandomPlacement:
    """Between ``count_min`` and ``count_max`` objects, labels drawn uniformly
    from ``classes``, at random non-overlapping positions."""

    count_min: int = 1
    count_max: int = 5
    classes: tuple = ("target", "decoy")

    def __post_init__(self):
        if not 1 <= self.count_min <= self.count_max:
            raise ParameterError("need 1 <= count_min <= count_max")
        if not self.classes:
            raise ParameterError("random placement needs at least one class")


@dataclass(frozen=True)
class SceneSpec:
    side: int = 128
    background: Union[FlatBackground, TexturedBackground] = field(default_factory=TexturedBackground)
    placements: Union[Sequence[Placement], RandomPlacement] = (Placement("target"), Placement("decoy"))
    bit_depth: int = 8
    seed: int = 0

    def __post_init__(self):
        if not is_power_of_two(self.side):
            raise SizeError(f"scene side must be a power of two, got {self.side}")
        if not 1 <= self.bit_depth <= 16:
            raise ParameterError("bit_depth must be in 1..16")
        if not isinstance(self.placements, RandomPlacement):
            object.__setattr__(self, "placements", tuple(self.placements))

    @property
    def max_value(self) -> int:
        return 2 ** self.bit_depth - 1

    def with_seed(self, seed: int) -> "SceneSpec":
        return replace(self, seed=int(seed))


def ship_silhouette(kind: str, length: int = 20, beam: int = 7,
                    hull: float = 100.0, deck: float = 150.0) -> np.ndarray:
    """Top view of a small ship, ``beam`` rows by ``length`` columns.

    ``kind="target"``: square stern, pointed bow, bridge near the stern.
    ``kind="decoy"``: both ends tapered, bridge amidships and a second
    smaller deckhouse. The two classes have similar size and brightness.
    """
    if length < 6 or beam < 3:
        raise ParameterError("ship must be at least 6 x 3 pixels")
    img = np.zeros((beam, length))
    rows = np.arange(beam) - (beam - 1) / 2.0
    half = (beam - 1) / 2.0 + 0.5
    for c in range(length):
        u = c / (length - 1)
        if kind == "target":
            width = half if u < 0.65 else half * max(0.0, (1.0 - u) / 0.35)
        elif kind == "decoy":
            width = half * min(1.0, u / 0.2, (1.0 - u) / 0.2)
        else:
            raise ParameterError(f"unknown ship kind {kind!r}")
        img[np.abs(rows) < max(width, 0.5), c] = hull
    mid = beam // 2
    if kind == "target":
        c0 = max(1, length // 8)
        img[max(0, mid - 1):mid + 2, c0:c0 + max(2, length // 4)] = deck
    else:
        c0 = length // 2 - length // 8
        img[max(0, mid - 1):mid + 2, c0:c0 + max(2, length // 5)] = deck
        c1 = int(0.75 * length)
        img[mid:mid + 1, c1:c1 + 2] = deck
    return img


def default_targets(length: int = 20, beam: int = 7) -> dict:
    return {kind: ship_silhouette(kind, length, beam) for kind in ("target", "decoy")}


def textured_background(side: int, bg: TexturedBackground, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal((side, side))
    nu = np.fft.fftfreq(side)
    nu2 = nu[:, None] ** 2 + nu[None, :] ** 2
    kernel = np.exp(-2.0 * np.pi ** 2 * bg.correlation_length ** 2 * nu2)
    tex = np.fft.ifft2(np.fft.fft2(noise) * kernel).real
    tex -= tex.mean()
    std = tex.std()
    if std > 0:
        tex /= std
    return bg.level + bg.amplitude * tex


def _overlaps(box, boxes) -> bool:
    r, c, h, w = box
    for r2, c2, h2, w2 in boxes:
        if r < r2 + h2 and r2 < r + h and c < c2 + w2 and c2 < c + w:
            return True
    return False


def generate_scene(spec: SceneSpec, targets: dict):
    """Render a scene and its ground truth.

    ``targets`` maps labels to target images (e.g. :func:`default_targets`
    or the references of a dictionary). Targets are added to the background
    and the sum is rounded and clipped to the bit depth. Returns
    ``(scene, truth)`` with ``truth`` a list of ``(label, row, col)``
    top-left positions.
    """
    rng = make_rng(spec.seed)
    side = spec.side
    if isinstance(spec.background, TexturedBackground):
        scene = textured_background(side, spec.background, rng)
    else:
        scene = np.full((side, side), float(spec.background.level))
    scene = np.round(scene)

    if isinstance(spec.placements, RandomPlacement):
        rp = spec.placements
        count = int(rng.integers(rp.count_min, rp.count_max + 1))
        wanted = [Placement(str(rp.classes[int(rng.integers(len(rp.classes)))])) for _ in range(count)]
    else:
        wanted = list(spec.placements)
    for p in wanted:
        if p.label not in targets:
            raise ParameterError(f"no target image for label {p.label!r}")

    boxes = []
    truth = []
    for p in wanted:
        h, w = np.shape(targets[p.label])
        if h > side or w > side:
            raise SizeError(f"target {p.label!r} does not fit into the scene")
        if p.is_fixed:
            box = (int(p.row), int(p.col), h, w)
            if not (0 <= box[0] <= side - h and 0 <= box[1] <= side - w):
                raise ParameterError(f"placement {p} is outside the scene")
            if _overlaps(box, boxes):
                raise ParameterError(f"placement {p} overlaps another target")
            boxes.append(box)
            truth.append((p.label, box[0], box[1]))
    attempts = 0
    for p in wanted:
        if p.is_fixed:
            continue
        h, w = np.shape(targets[p.label])
        while True:
            attempts += 1
            if attempts > MAX_PLACEMENT_ATTEMPTS:
                raise CongestionError(f"could not place {len(wanted)} targets without overlap")
            box = (int(rng.integers(0, side - h + 1)), int(rng.integers(0, side - w + 1)), h, w)
            if not _overlaps(box, boxes):
                break
        boxes.append(box)
        truth.append((p.label, box[0], box[1]))

    for (label, row, col), (_, _, h, w) in zip(truth, boxes):
        scene[row:row + h, col:col + w] += targets[label]
    return np.clip(scene, 0, spec.max_value), truth
