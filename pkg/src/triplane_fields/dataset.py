"""Procedural labeled datasets of fitted tri-plane fields.

Shapes are drawn from three primitive classes, augmented, and fitted as
UDF/SDF/OF fields with per-field random initialization. The manifest on
disk records every field's class, split and file, with splits assigned
per shape id so the same shape lands in the same split for every kind.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import field as fieldmod
from .fitting import FitConfig, default_config, fit_field
from .geometry import (augment_anisotropic, make_primitive,
                       normalize_unit_sphere, sample_surface, voxelize)
from .seeds import derive_rng

CLASS_NAMES = ("sphere", "box", "torus")
PARTS_PER_CLASS = 2                 # each primitive splits into two parts


@dataclass(frozen=True)
class PartTaxonomy:
    """Global part-id layout: class c owns the contiguous id block
    [c * parts, (c + 1) * parts)."""

    n_classes: int = len(CLASS_NAMES)
    parts_per_class: int = PARTS_PER_CLASS

    @property
    def n_parts(self) -> int:
        return self.n_classes * self.parts_per_class

    def parts_of(self, class_id: int):
        base = class_id * self.parts_per_class
        return list(range(base, base + self.parts_per_class))

    def to_global(self, class_id: int, local_labels):
        return np.asarray(local_labels) + class_id * self.parts_per_class


@dataclass(frozen=True)
class DatasetSpec:
    per_class: int = 50
    kinds: tuple = ("SDF",)
    seed: int = 0
    channels: int = 16
    plane_res: int = 32
    fit_steps: int = 150
    fit_batch: int = 4096
    fit_pool: int = 12_000
    voxel_res: int = 32
    n_queries: int = 2048
    augment: bool = True
    split_fracs: tuple = (0.8, 0.1, 0.1)
    classes: tuple = CLASS_NAMES


def split_of(dataset_seed: int, shape_id: str, fracs=(0.8, 0.1, 0.1)) -> str:
    """Deterministic hash split: stable under incremental additions."""
    h = hashlib.sha256(f"{dataset_seed}/{shape_id}".encode()).digest()
    u = int.from_bytes(h[:8], "little") / 2.0 ** 64
    if u < fracs[0]:
        return "train"
    if u < fracs[0] + fracs[1]:
        return "val"
    return "test"


def random_primitive(class_name: str, seed: int):
    """A normalized, labeled primitive with randomized proportions."""
    rng = derive_rng(seed, "shape_params", class_name)
    if class_name == "sphere":
        mesh = make_primitive("sphere", {"radius": rng.uniform(0.6, 0.95)},
                              tessellation=3)
    elif class_name == "box":
        mesh = make_primitive("box", {"half_extents": rng.uniform(0.3, 0.9, 3)})
    elif class_name == "torus":
        minor = rng.uniform(0.12, 0.3)
        mesh = make_primitive("torus",
                              {"major": rng.uniform(0.45, 0.7), "minor": minor},
                              tessellation=4)
    else:
        raise ValueError(f"unknown class {class_name!r}")
    mesh, _ = normalize_unit_sphere(mesh)
    return mesh


@dataclass
class ManifestEntry:
    shape_id: str
    class_name: str
    class_id: int
    kind: str
    path: str
    split: str
    aug_seed: int
    status: str = "ok"
    report_path: str = ""

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class Manifest:
    root: str
    seed: int
    entries: list = dc_field(default_factory=list)

    def save(self, path=None):
        path = Path(path or Path(self.root) / "manifest.json")
        payload = {"root": self.root, "seed": self.seed,
                   "entries": [e.to_dict() for e in self.entries]}
        path.write_text(json.dumps(payload, indent=1))
        return path

    @classmethod
    def load(cls, path) -> "Manifest":
        d = json.loads(Path(path).read_text())
        m = cls(d["root"], d["seed"],
                [ManifestEntry(**e) for e in d["entries"]])
        m.check()
        return m

    def check(self):
        seen = set()
        split_by_shape = {}
        for e in self.entries:
            key = (e.shape_id, e.kind, e.aug_seed)
            if key in seen:
                raise ValueError(f"duplicate manifest entry {key}")
            seen.add(key)
            prev = split_by_shape.setdefault(e.shape_id, e.split)
            if prev != e.split:
                raise ValueError(
                    f"shape {e.shape_id} appears in splits {prev} and {e.split}")

    def select(self, split=None, kind=None, status="ok"):
        out = []
        for e in self.entries:
            if split is not None and e.split != split:
                continue
            if kind is not None and e.kind != kind:
                continue
            if status is not None and e.status != status:
                continue
            out.append(e)
        return out


def _fit_config(spec: DatasetSpec, kind: str) -> FitConfig:
    pool = spec.fit_pool - spec.fit_pool % 24     # stratified pool quantum
    return default_config(kind, steps=spec.fit_steps, batch_size=spec.fit_batch,
                          pool_size=pool, channels=spec.channels,
                          plane_res=spec.plane_res)


def build_dataset(spec: DatasetSpec, out_dir) -> Manifest:
    """Generate shapes, fit the requested field kinds, write TPNF files,
    per-shape part-labeled query points, and the manifest.

    A failed fit marks its entry `failed` and the build continues.
    """
    out = Path(out_dir)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    (out / "queries").mkdir(exist_ok=True)
    manifest = Manifest(str(out), spec.seed)
    taxonomy = PartTaxonomy(len(spec.classes))
    for class_id, class_name in enumerate(spec.classes):
        for i in range(spec.per_class):
            shape_id = f"{class_name}_{i:04d}"
            shape_seed = int.from_bytes(
                hashlib.sha256(f"{spec.seed}/{shape_id}".encode()).digest()[:4],
                "little")
            mesh = random_primitive(class_name, shape_seed)
            if spec.augment:
                mesh = augment_anisotropic(mesh, shape_seed)
            split = split_of(spec.seed, shape_id, spec.split_fracs)

            cloud = sample_surface(mesh, spec.n_queries, seed=shape_seed)
            np.savez(out / "queries" / f"{shape_id}.npz",
                     points=cloud.points.astype(np.float32),
                     parts=taxonomy.to_global(class_id, cloud.labels))

            for kind in spec.kinds:
                entry = ManifestEntry(
                    shape_id, class_name, class_id, kind,
                    str(Path("fields") / f"{shape_id}.{kind.lower()}.tpnf"),
                    split, shape_seed)
                try:
                    if kind == "UDF":
                        source = sample_surface(mesh, 100_000, seed=shape_seed + 1)
                    elif kind == "SDF":
                        source = mesh
                    elif kind == "OF":
                        source = voxelize(mesh, spec.voxel_res)
                    else:
                        raise ValueError(f"cannot build {kind} from meshes")
                    fld, report = fit_field(source, kind, _fit_config(spec, kind),
                                            seed=shape_seed)
                    fieldmod.serialize(fld, out / entry.path)
                    rp = Path("fields") / f"{shape_id}.{kind.lower()}.report.json"
                    (out / rp).write_text(json.dumps(
                        {"kind": kind, "steps": report.steps,
                         "final_loss": report.final_loss,
                         "seconds": report.seconds}))
                    entry.report_path = str(rp)
                except Exception as exc:   # keep building the rest
                    entry.status = f"failed: {exc}"
                manifest.entries.append(entry)
    manifest.check()
    manifest.save()
    return manifest


# ---------------------------------------------------------------------------
# Loading for the transformer

def load_planes(manifest: Manifest, entry: ManifestEntry) -> np.ndarray:
    fld = fieldmod.deserialize(Path(manifest.root) / entry.path)
    return fld.triplane.data


def classification_set(manifest: Manifest, split: str, kinds=None):
    """[(planes, class id)] for a split, optionally limited to kinds."""
    out = []
    for e in manifest.select(split=split):
        if kinds is not None and e.kind not in kinds:
            continue
        out.append((load_planes(manifest, e), e.class_id))
    return out


def segmentation_set(manifest: Manifest, split: str, kind: str = "SDF"):
    """[(planes, class id, query points, global part labels)]."""
    out = []
    for e in manifest.select(split=split, kind=kind):
        q = np.load(Path(manifest.root) / "queries" / f"{e.shape_id}.npz")
        out.append((load_planes(manifest, e), e.class_id,
                    q["points"].astype(np.float64), q["parts"]))
    return out
