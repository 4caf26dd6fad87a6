"""Synthetic part/whole scenes standing in for detector output.

Each scene holds a few non-overlapping whole-object boxes, each with a few
part boxes nested inside it. A box carries noisy class scores (one-hot on
its true class plus clipped Gaussian noise) and unit-square coordinates,
which together form its grounding vector ``(scores..., x0, y0, x1, y1)``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .boxes import area, inclusion_ratio
from .grounders import PartWholeTable
from .rng import stream

MIN_PART_IR = 0.9


class SpecError(ValueError):
    """The dataset spec cannot be realized."""


@dataclass(frozen=True)
class BoxRecord:
    id: int
    scene_id: int
    box: tuple[float, float, float, float]
    scores: tuple[float, ...]
    true_class: int
    parent: int | None = None

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate box {self.box}")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")


@dataclass
class Scene:
    scene_id: int
    boxes: list[BoxRecord]

    @property
    def part_of_pairs(self) -> list[tuple[int, int]]:
        return [(b.id, b.parent) for b in self.boxes if b.parent is not None]


@dataclass
class DatasetSpec:
    n_whole_classes: int = 8
    n_part_classes: int = 8
    table: PartWholeTable | None = None
    n_scenes: int = 200
    wholes_per_scene: tuple[int, int] = (1, 2)
    parts_per_whole: tuple[int, int] = (1, 3)
    score_noise: float = 0.15
    geometry_jitter: float = 0.02
    train_fraction: float = 0.8
    seed: int = 0
    whole_size: tuple[float, float] = (0.25, 0.45)
    part_size: tuple[float, float] = (0.2, 0.5)  # fraction of the parent's side

    def __post_init__(self):
        if self.table is None:
            self.table = PartWholeTable.from_parts(self.n_whole_classes, self.n_part_classes)
        self.wholes_per_scene = tuple(self.wholes_per_scene)
        self.parts_per_whole = tuple(self.parts_per_whole)

    def validate(self) -> None:
        if self.n_scenes < 1:
            raise SpecError("need at least one scene")
        if self.n_whole_classes < 1:
            raise SpecError("need at least one whole class")
        if self.table.n_classes != self.n_whole_classes + self.n_part_classes:
            raise SpecError("part-whole table does not match the class counts")
        lo, hi = self.wholes_per_scene
        if not 1 <= lo <= hi:
            raise SpecError("wholes_per_scene must satisfy 1 <= lo <= hi")
        plo, phi = self.parts_per_whole
        if not 0 <= plo <= phi:
            raise SpecError("parts_per_whole must satisfy 0 <= lo <= hi")
        if phi > 0 and self.n_part_classes == 0:
            raise SpecError("parts requested but no part classes declared")
        if plo > 0 and not all(self.table.w[:, j].any() for j in self.table.wholes):
            raise SpecError("some whole class has no part class to draw from")
        if not 0.0 < self.train_fraction < 1.0:
            raise SpecError("train_fraction must lie in (0, 1)")
        if self.score_noise < 0 or self.geometry_jitter < 0:
            raise SpecError("noise levels must be non-negative")
        # hi wholes of the smallest size must be placeable without overlap
        if hi * self.whole_size[0] ** 2 > 0.5:
            raise SpecError(f"{hi} whole boxes do not fit in one scene")
        if phi > 12:
            raise SpecError(f"{phi} parts do not fit inside one whole")

    def class_names(self) -> list[str]:
        return ([f"Whole{i}" for i in range(self.n_whole_classes)]
                + [f"Part{i}" for i in range(self.n_part_classes)])

    def to_doc(self) -> dict:
        doc = asdict(self)
        doc["table"] = self.table.to_doc()
        doc["wholes_per_scene"] = list(self.wholes_per_scene)
        doc["parts_per_whole"] = list(self.parts_per_whole)
        doc["whole_size"] = list(self.whole_size)
        doc["part_size"] = list(self.part_size)
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "DatasetSpec":
        doc = dict(doc)
        doc["table"] = PartWholeTable.from_doc(doc["table"])
        for key in ("wholes_per_scene", "parts_per_whole", "whole_size", "part_size"):
            doc[key] = tuple(doc[key])
        return cls(**doc)


# -- generation --------------------------------------------------------------

def _noisy_scores(rng, cls: int, n_classes: int, noise: float) -> tuple[float, ...]:
    s = np.zeros(n_classes)
    s[cls] = 1.0
    if noise > 0:
        s = np.clip(s + rng.normal(0.0, noise, n_classes), 0.0, 1.0)
    return tuple(float(v) for v in s)


def _overlaps(a, b) -> bool:
    return min(a[2], b[2]) > max(a[0], b[0]) and min(a[3], b[3]) > max(a[1], b[1])


def _place_whole(rng, placed, size_range, tries=500):
    for _ in range(tries):
        w, h = rng.uniform(*size_range, size=2)
        x0, y0 = rng.uniform(0.0, 1.0 - w), rng.uniform(0.0, 1.0 - h)
        box = (float(x0), float(y0), float(x0 + w), float(y0 + h))
        if not any(_overlaps(box, p) for p in placed):
            return box
    raise SpecError("could not place non-overlapping whole boxes; too many per scene")


def _place_part(rng, parent, frac_range, jitter, tries=50):
    px0, py0, px1, py1 = parent
    pw, ph = px1 - px0, py1 - py0
    fw, fh = rng.uniform(*frac_range, size=2)
    w, h = fw * pw, fh * ph
    x0 = px0 + rng.uniform(0.0, pw - w)
    y0 = py0 + rng.uniform(0.0, ph - h)
    base = (float(x0), float(y0), float(x0 + w), float(y0 + h))
    if jitter <= 0:
        return base
    for _ in range(tries):
        d = rng.normal(0.0, jitter, 4) * np.array([pw, ph, pw, ph])
        cand = np.clip(np.array(base) + d, 0.0, 1.0)
        box = tuple(float(v) for v in cand)
        if box[0] < box[2] and box[1] < box[3] and inclusion_ratio(box, parent) >= MIN_PART_IR:
            return box
    return base


def _generate_scene(spec: DatasetSpec, scene_id: int):
    """Boxes of one scene as (box, class, local parent index or None)."""
    rng = stream(spec.seed, "scene", scene_id)
    table = spec.table
    wholes = [j for j in table.wholes if table.w[:, j].any()] if spec.parts_per_whole[0] > 0 \
        else list(table.wholes)
    n_wholes = int(rng.integers(spec.wholes_per_scene[0], spec.wholes_per_scene[1] + 1))
    items = []
    placed = []
    for _ in range(n_wholes):
        box = _place_whole(rng, placed, spec.whole_size)
        placed.append(box)
        cls = int(wholes[rng.integers(len(wholes))])
        items.append((box, cls, None))
        whole_local = len(items) - 1
        part_classes = np.flatnonzero(table.w[:, cls])
        if part_classes.size == 0:
            continue
        n_parts = int(rng.integers(spec.parts_per_whole[0], spec.parts_per_whole[1] + 1))
        for _ in range(n_parts):
            pcls = int(part_classes[rng.integers(part_classes.size)])
            pbox = _place_part(rng, box, spec.part_size, spec.geometry_jitter)
            items.append((pbox, pcls, whole_local))
    n_classes = table.n_classes
    scored = [(box, cls, parent, _noisy_scores(rng, cls, n_classes, spec.score_noise))
              for box, cls, parent in items]
    return scored


def _split(spec: DatasetSpec, scenes: list[Scene]) -> tuple[list[Scene], list[Scene]]:
    """Scene-level split that keeps each class's share of boxes close in both halves."""
    n = len(scenes)
    n_classes = spec.table.n_classes
    counts = np.zeros((n, n_classes))
    for i, s in enumerate(scenes):
        for b in s.boxes:
            counts[i, b.true_class] += 1
    n_train = int(round(spec.train_fraction * n))
    n_train = min(max(n_train, 1), n - 1) if n > 1 else n
    rng = stream(spec.seed, "split")
    in_train = np.zeros(n, dtype=bool)
    in_train[rng.permutation(n)[:n_train]] = True
    if 0 < n_train < n:
        total_share = counts.sum(0) / counts.sum()

        def deviation(mask):
            tr = counts[mask].sum(0)
            te = counts[~mask].sum(0)
            return max(np.max(np.abs(tr / tr.sum() - total_share)),
                       np.max(np.abs(te / te.sum() - total_share)))

        best = deviation(in_train)
        for _ in range(4000):
            if best <= 0.005:
                break
            i = rng.choice(np.flatnonzero(in_train))
            j = rng.choice(np.flatnonzero(~in_train))
            in_train[i], in_train[j] = False, True
            dev = deviation(in_train)
            if dev < best:
                best = dev
            else:
                in_train[i], in_train[j] = True, False
    train = [s for s, t in zip(scenes, in_train) if t]
    test = [s for s, t in zip(scenes, in_train) if not t]
    return train, test


def generate(spec: DatasetSpec) -> tuple[list[Scene], list[Scene]]:
    """Generate all scenes and split them into (train, test)."""
    spec.validate()
    scenes = []
    next_id = 0
    for sid in range(spec.n_scenes):
        raw = _generate_scene(spec, sid)
        ids = list(range(next_id, next_id + len(raw)))
        next_id += len(raw)
        boxes = [BoxRecord(ids[i], sid, box, scores, cls, None if parent is None else ids[parent])
                 for i, (box, cls, parent, scores) in enumerate(raw)]
        scenes.append(Scene(sid, boxes))
    return _split(spec, scenes)


# -- vectors ----------------------------------------------------------------

def grounding_vector(b: BoxRecord) -> np.ndarray:
    return np.array([*b.scores, *b.box], dtype=np.float64)


def pair_vector(b: BoxRecord, b2: BoxRecord) -> np.ndarray:
    return np.concatenate([grounding_vector(b), grounding_vector(b2)])


def all_boxes(scenes: list[Scene]) -> list[BoxRecord]:
    return [b for s in scenes for b in s.boxes]


def class_shares(scenes: list[Scene], n_classes: int) -> np.ndarray:
    counts = np.zeros(n_classes)
    for b in all_boxes(scenes):
        counts[b.true_class] += 1
    return counts / max(1.0, counts.sum())


# -- files --------------------------------------------------------------------

def _box_line(b: BoxRecord) -> str:
    return json.dumps({"scene": b.scene_id, "id": b.id, "class": b.true_class, "parent": b.parent,
                       "scores": list(b.scores), "box": list(b.box)})


def write_dataset(directory: str | Path, spec: DatasetSpec, train: list[Scene],
                  test: list[Scene]) -> dict[str, Path]:
    """Write ``header.json``, ``train.jsonl`` and ``test.jsonl`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"header": d / "header.json", "train": d / "train.jsonl", "test": d / "test.jsonl"}
    header = {
        "format": "rwtn-scenes",
        "version": 1,
        "spec": spec.to_doc(),
        "class_names": spec.class_names(),
        "table": spec.table.to_doc(),
        "counts": {
            "train_scenes": len(train), "test_scenes": len(test),
            "train_boxes": len(all_boxes(train)), "test_boxes": len(all_boxes(test)),
        },
    }
    paths["header"].write_text(json.dumps(header, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    for name, scenes in (("train", train), ("test", test)):
        with open(paths[name], "w", encoding="utf-8", newline="\n") as fh:
            for s in scenes:
                for b in s.boxes:
                    fh.write(_box_line(b) + "\n")
    return paths


def _read_scenes(path: Path) -> list[Scene]:
    scenes: dict[int, Scene] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                b = BoxRecord(int(rec["id"]), int(rec["scene"]), tuple(float(v) for v in rec["box"]),
                              tuple(float(v) for v in rec["scores"]), int(rec["class"]),
                              None if rec["parent"] is None else int(rec["parent"]))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad box record ({exc})") from None
            scenes.setdefault(b.scene_id, Scene(b.scene_id, [])).boxes.append(b)
    return list(scenes.values())


@dataclass
class Dataset:
    spec: DatasetSpec
    class_names: list[str]
    table: PartWholeTable
    train: list[Scene] = field(default_factory=list)
    test: list[Scene] = field(default_factory=list)


def read_dataset(directory: str | Path) -> Dataset:
    d = Path(directory)
    header_path = d / "header.json"
    if not header_path.exists():
        raise FileNotFoundError(f"no dataset header at {header_path}")
    header = json.loads(header_path.read_text(encoding="utf-8"))
    spec = DatasetSpec.from_doc(header["spec"])
    return Dataset(spec, list(header["class_names"]), PartWholeTable.from_doc(header["table"]),
                   _read_scenes(d / "train.jsonl"), _read_scenes(d / "test.jsonl"))
