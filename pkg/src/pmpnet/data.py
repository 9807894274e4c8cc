"""Synthetic multi-class lesion images, augmentation and splits.

Classes differ by lesion geometry (count, radius, placement region), not
by color, so a classifier has to pick up scale and position rather than a
global intensity shortcut: one class scatters many small bright spots,
one grows a single large central blob, one rings mid-sized spots around
the periphery, and one stays clean. Flip augmentation tops up minority
classes; stratified k-fold splits are deterministic in the seed.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError
from .serialize import load_array, save_array
from .tensor import Tensor
from .util import derive_seed, parallel_map

TINT = np.array([1.0, 0.9, 0.7], dtype=np.float64)
BACKGROUND = 0.18
FLIP_CYCLE = ("hflip", "vflip")


@dataclass(frozen=True)
class LesionClass:
    name: str
    count: tuple  # inclusive lesions-per-image range
    radius: tuple  # pixel radius range
    region: str  # center | periphery | global
    amplitude: float = 0.55


@dataclass(frozen=True)
class SyntheticSpec:
    side: int
    classes: tuple
    noise: float = 0.05
    seed: int = 0

    def validate(self):
        if self.side < 8:
            raise ConfigError(f"image side {self.side} too small")
        if len(self.classes) < 2:
            raise ConfigError("need at least two classes")
        if len(set(self.classes)) != len(self.classes):
            raise ConfigError("class descriptors must be pairwise distinct")
        if self.noise < 0:
            raise ConfigError(f"noise level must be nonnegative, got {self.noise}")
        for cls in self.classes:
            lo, hi = cls.radius
            if lo <= 0 or hi < lo or hi >= self.side / 2:
                raise ConfigError(f"class {cls.name!r}: bad radius range {cls.radius}")
            if cls.region not in ("center", "periphery", "global"):
                raise ConfigError(f"class {cls.name!r}: unknown region {cls.region!r}")
            if cls.count[0] < 0 or cls.count[1] < cls.count[0]:
                raise ConfigError(f"class {cls.name!r}: bad count range {cls.count}")


@dataclass
class Sample:
    id: int
    image: Tensor  # (S, S, 3) float32 in [0, 1]
    label: int
    provenance: str
    lesions: list = field(default_factory=list)  # (cy, cx, r) ground truth


@dataclass
class SplitPlan:
    folds: int
    fold_of: dict  # sample id -> fold

    def test_ids(self, fold):
        return [i for i, f in self.fold_of.items() if f == fold]

    def train_ids(self, fold):
        return [i for i, f in self.fold_of.items() if f != fold]


def default_spec(side, classes=4, noise=0.05, seed=0):
    """Up to four classes spanning the lesion-scale spectrum."""
    big = max(10.0, side / 6.0)
    table = (
        LesionClass("scatter-small", (7, 12), (2.0, 3.5), "global"),
        LesionClass("central-large", (1, 1), (big, big * 1.5), "center"),
        LesionClass("peripheral-mid", (3, 5), (4.5, 7.0), "periphery"),
        LesionClass("clear", (0, 0), (1.0, 1.0), "global"),
    )
    if not 2 <= classes <= len(table):
        raise ConfigError(f"default synthetic spec supports 2..{len(table)} classes, got {classes}")
    return SyntheticSpec(side=side, classes=table[:classes], noise=noise, seed=seed)


def single_lesion_spec(side, noise=0.04, seed=0):
    """Two classes: clean background vs one bright blob anywhere."""
    return SyntheticSpec(
        side=side,
        classes=(
            LesionClass("clear", (0, 0), (1.0, 1.0), "global"),
            LesionClass("one-blob", (1, 1), (side / 16.0, side / 9.0), "global", amplitude=0.7),
        ),
        noise=noise,
        seed=seed,
    )


def _place(rng, region, r, side):
    margin = min(r + 1.0, side / 2.0 - 1.0)
    if region == "center":
        span = side / 8.0
        cy = side / 2.0 + rng.uniform(-span, span)
        cx = side / 2.0 + rng.uniform(-span, span)
    elif region == "periphery":
        angle = rng.uniform(0.0, 2.0 * np.pi)
        rad = rng.uniform(0.30, 0.42) * side
        cy = side / 2.0 + rad * np.sin(angle)
        cx = side / 2.0 + rad * np.cos(angle)
    else:
        cy = rng.uniform(margin, side - 1 - margin)
        cx = rng.uniform(margin, side - 1 - margin)
    cy = float(np.clip(cy, margin, side - 1 - margin))
    cx = float(np.clip(cx, margin, side - 1 - margin))
    return cy, cx


def _render(spec, label, seed):
    rng = np.random.default_rng(seed)
    side = spec.side
    cls = spec.classes[label]
    img = BACKGROUND + rng.normal(0.0, spec.noise, size=(side, side, 3))
    yy, xx = np.mgrid[0:side, 0:side]
    lesions = []
    n_lesions = int(rng.integers(cls.count[0], cls.count[1] + 1))
    for _ in range(n_lesions):
        r = float(rng.uniform(*cls.radius))
        cy, cx = _place(rng, cls.region, r, side)
        sigma = r / 2.0
        bump = cls.amplitude * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))
        img += bump[:, :, None] * TINT
        lesions.append((cy, cx, r))
    return np.clip(img, 0.0, 1.0).astype(np.float32), lesions


def generate_synthetic(spec, n_per_class):
    """Deterministic dataset; ids run sequentially in (class, index) order."""
    spec.validate()
    if len(n_per_class) != len(spec.classes):
        raise ConfigError(
            f"{len(n_per_class)} class counts for {len(spec.classes)} class descriptors"
        )
    if any(n < 0 for n in n_per_class):
        raise ConfigError("per-class counts must be nonnegative")
    if sum(1 for n in n_per_class if n > 0) < 2:
        raise ConfigError("need at least two non-empty classes")
    jobs = []
    sample_id = 0
    for label, count in enumerate(n_per_class):
        for i in range(count):
            jobs.append((sample_id, label, derive_seed(spec.seed, label, i)))
            sample_id += 1

    def make(job):
        sid, label, seed = job
        img, lesions = _render(spec, label, seed)
        return Sample(id=sid, image=Tensor(img), label=label,
                      provenance="generated", lesions=lesions)

    return parallel_map(make, jobs)


def augment(sample, mode, seed=0, new_id=None):
    """Label-preserving flip; lesion geometry follows the pixels."""
    side = sample.image.data.shape[0]
    if mode == "none":
        img = sample.image.data
        lesions = list(sample.lesions)
    elif mode == "hflip":
        img = np.ascontiguousarray(sample.image.data[:, ::-1, :])
        lesions = [(cy, side - 1 - cx, r) for cy, cx, r in sample.lesions]
    elif mode == "vflip":
        img = np.ascontiguousarray(sample.image.data[::-1, :, :])
        lesions = [(side - 1 - cy, cx, r) for cy, cx, r in sample.lesions]
    else:
        raise ParameterError(f"unknown augmentation mode {mode!r}")
    return Sample(
        id=sample.id if new_id is None else new_id,
        image=Tensor(img),
        label=sample.label,
        provenance=f"augmented:{mode}:{sample.id}",
        lesions=lesions,
    )


def balance_resample(dataset, target_per_class, seed=0):
    """Exactly target_per_class samples per class.

    Minority classes keep all originals and are topped up with flipped
    copies (modes cycled); majority classes are subsampled with a seeded
    draw. Never invents labels, never empties a class.
    """
    labels = sorted({s.label for s in dataset})
    by_label = {lab: [s for s in dataset if s.label == lab] for lab in labels}
    for lab, group in by_label.items():
        if not group:
            raise ConfigError(f"class {lab} is empty")
    next_id = max(s.id for s in dataset) + 1
    out = []
    for lab in labels:
        group = by_label[lab]
        if len(group) > target_per_class:
            rng = np.random.default_rng(derive_seed(seed, lab))
            keep = sorted(rng.choice(len(group), size=target_per_class, replace=False))
            out.extend(group[i] for i in keep)
            continue
        out.extend(group)
        deficit = target_per_class - len(group)
        for t in range(deficit):
            parent = group[t % len(group)]
            mode = FLIP_CYCLE[(t // len(group)) % len(FLIP_CYCLE)]
            out.append(augment(parent, mode, seed=derive_seed(seed, lab, t), new_id=next_id))
            next_id += 1
    return out


def kfold_split(dataset, k, seed=0):
    """Stratified folds: per-class counts across folds differ by <= 1."""
    if k < 2:
        raise ConfigError(f"fold count must be >= 2, got {k}")
    labels = sorted({s.label for s in dataset})
    fold_of = {}
    for lab in labels:
        ids = [s.id for s in dataset if s.label == lab]
        if len(ids) < k:
            raise ConfigError(f"class {lab} has {len(ids)} samples, fewer than {k} folds")
        rng = np.random.default_rng(derive_seed(seed, 31, lab))
        order = rng.permutation(len(ids))
        for pos, idx in enumerate(order):
            fold_of[ids[idx]] = pos % k
    return SplitPlan(folds=k, fold_of=fold_of)


def save_dataset(dirpath, samples, plan=None):
    """PMT1 image files plus a manifest.tsv (id, label, provenance, fold).

    Lesion geometry is generation metadata and is not persisted.
    """
    os.makedirs(dirpath, exist_ok=True)
    with open(os.path.join(dirpath, "manifest.tsv"), "w", encoding="utf-8") as fh:
        fh.write("id\tlabel\tprovenance\tfold\n")
        for s in samples:
            fold = plan.fold_of.get(s.id, -1) if plan else -1
            save_array(os.path.join(dirpath, f"img_{s.id:05d}.pmt"), s.image.data)
            fh.write(f"{s.id}\t{s.label}\t{s.provenance}\t{fold}\n")


def load_dataset(dirpath):
    manifest = os.path.join(dirpath, "manifest.tsv")
    samples, fold_of = [], {}
    with open(manifest, encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "id\tlabel\tprovenance\tfold":
            raise ConfigError(f"{manifest}: unexpected manifest header")
        for line in fh:
            sid, label, provenance, fold = line.rstrip("\n").split("\t")
            sid, label, fold = int(sid), int(label), int(fold)
            img = load_array(os.path.join(dirpath, f"img_{sid:05d}.pmt"))
            samples.append(Sample(id=sid, image=Tensor(img), label=label,
                                  provenance=provenance))
            if fold >= 0:
                fold_of[sid] = fold
    plan = None
    if fold_of:
        plan = SplitPlan(folds=max(fold_of.values()) + 1, fold_of=fold_of)
    return samples, plan
