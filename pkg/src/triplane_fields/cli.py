"""Command-line pipeline around the library.

Verbs: build-dataset, fit, recon, eval-recon, train-cls, eval-cls,
train-seg, eval-seg, perm-search, viz, param-count. Every report is JSON
carrying the effective configuration and seed; exit code 0 on success,
1 on runtime failure (with a JSON error report when --report is given),
2 on usage errors.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, dataset as ds, field as fieldmod
from . import fitting, recon, transformer as tf
from .engine import load_checkpoint, save_checkpoint
from .geometry import chamfer, fscore, io as gio, sample_surface

_CONFIG_KEYS = {
    "dataset": {"per_class", "kinds", "seed", "channels", "plane_res",
                "fit_steps", "fit_batch", "fit_pool", "voxel_res",
                "n_queries", "augment"},
    "fit": {"steps", "batch_size", "pool_size", "lr", "plane_lr_scale",
            "channels", "plane_res", "d_max"},
    "model": {"d_model", "n_layers", "n_heads", "d_ff", "crop", "dec_layers",
              "dec_heads", "seed"},
    "train": {"epochs", "batch_size", "max_lr", "seed", "queries_per_step"},
}


def load_config(path) -> dict:
    """INI-style config; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    out = {}
    for section in parser.sections():
        if section not in _CONFIG_KEYS:
            raise ValueError(f"unknown config section [{section}]")
        out[section] = {}
        for key, value in parser[section].items():
            if key not in _CONFIG_KEYS[section]:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            out[section][key] = _coerce(value)
    return out


def _coerce(value: str):
    low = value.strip()
    if low.lower() in ("true", "false"):
        return low.lower() == "true"
    for cast in (int, float):
        try:
            return cast(low)
        except ValueError:
            pass
    if "," in low:
        return tuple(s.strip() for s in low.split(",") if s.strip())
    return low


def _report(path, payload):
    if path:
        Path(path).write_text(json.dumps(payload, indent=1, default=str))


def _echo(args, extra=None):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["version"] = __version__
    if extra:
        cfg.update(extra)
    return cfg


# ---------------------------------------------------------------------------
# Verbs

def cmd_build_dataset(args):
    overrides = {}
    if args.config:
        overrides = load_config(args.config).get("dataset", {})
    if "kinds" in overrides and isinstance(overrides["kinds"], str):
        overrides["kinds"] = (overrides["kinds"],)
    spec = ds.DatasetSpec(**overrides)
    manifest = ds.build_dataset(spec, args.out)
    failed = [e.shape_id for e in manifest.entries if e.status != "ok"]
    _report(args.report, {"config": _echo(args, {"spec": vars(spec)}),
                          "entries": len(manifest.entries), "failed": failed})
    print(f"built {len(manifest.entries)} fields into {args.out}; "
          f"{len(failed)} failed")
    return 1 if failed else 0


def _fit_overrides(args):
    if not args.config:
        return {}
    return load_config(args.config).get("fit", {})


def cmd_fit(args):
    shape = gio.load_shape(args.shape)
    cfg = fitting.default_config(args.kind, **_fit_overrides(args))
    if args.kind == "UDF" and hasattr(shape, "faces"):
        shape = sample_surface(shape, 100_000, seed=args.seed)
    fld, rep = fitting.fit_field(shape, args.kind, cfg, seed=args.seed)
    fieldmod.serialize(fld, args.out)
    _report(args.report, {"config": _echo(args, {"fit": vars(cfg)}),
                          "final_loss": rep.final_loss, "seconds": rep.seconds})
    print(f"fitted {args.kind} in {rep.seconds:.1f}s, "
          f"final loss {rep.final_loss:.4f} -> {args.out}")
    return 0


def cmd_recon(args):
    fld = fieldmod.deserialize(args.field)
    out = Path(args.out)
    if fld.kind == "SDF":
        mesh = recon.mesh_from_sdf(fld, resolution=args.resolution)
        gio.save_shape(mesh, out)
        print(f"mesh: {len(mesh.vertices)} vertices -> {out}")
    elif fld.kind == "UDF":
        pc = recon.pc_from_udf(fld, n_points=args.points, seed=args.seed)
        gio.save_shape(pc, out)
        print(f"point cloud: {len(pc.points)} points -> {out}")
    elif fld.kind == "OF":
        grid = recon.voxel_from_of(fld, resolution=args.resolution)
        gio.save_shape(grid, out)
        print(f"voxels: {int(grid.occupancy.sum())} occupied -> {out}")
    else:
        print("use `viz`-style rendering for RF fields", file=sys.stderr)
        return 2
    return 0


def cmd_eval_recon(args):
    manifest = ds.Manifest.load(args.manifest)
    rows = []
    for e in manifest.select(split=args.split, kind=args.kind):
        fld = fieldmod.deserialize(Path(manifest.root) / e.path)
        mesh = ds.random_primitive(e.class_name, _entry_seed(manifest, e))
        from .geometry import augment_anisotropic
        mesh = augment_anisotropic(mesh, e.aug_seed)
        gt = sample_surface(mesh, 16_384, seed=0)
        if e.kind == "SDF":
            rec = recon.mesh_from_sdf(fld, resolution=args.resolution)
            pred = sample_surface(rec, 16_384, seed=1)
        elif e.kind == "UDF":
            pred = recon.pc_from_udf(fld, n_points=16_384, seed=1)
        else:
            print(f"eval-recon supports UDF/SDF, not {e.kind}", file=sys.stderr)
            return 2
        rows.append({"shape": e.shape_id, "cd": chamfer(gt, pred),
                     "fscore": fscore(gt, pred)})
    agg = {"cd": float(np.mean([r["cd"] for r in rows])),
           "fscore": float(np.mean([r["fscore"] for r in rows]))}
    _report(args.report, {"config": _echo(args), "rows": rows, "aggregate": agg})
    for r in rows:
        print(f"{r['shape']:>16}  CD {r['cd']:8.3f}  F {r['fscore']:6.2f}")
    print(f"{'mean':>16}  CD {agg['cd']:8.3f}  F {agg['fscore']:6.2f}")
    return 0


def _entry_seed(manifest, entry):
    import hashlib
    return int.from_bytes(hashlib.sha256(
        f"{manifest.seed}/{entry.shape_id}".encode()).digest()[:4], "little")


def _model_cfg(args, n_parts=0):
    over = load_config(args.config).get("model", {}) if args.config else {}
    seed = over.pop("seed", 0)
    return tf.EncoderConfig(n_parts=n_parts, **over), seed


def _train_cfg(args, seg=False):
    over = load_config(args.config).get("train", {}) if args.config else {}
    q = over.pop("queries_per_step", 512)
    cfg = tf.seg_train_config(**over) if seg else tf.TrainConfig(**over)
    return cfg, q


def cmd_train_cls(args):
    manifest = ds.Manifest.load(args.manifest)
    kinds = tuple(args.kinds.split(",")) if args.kinds else None
    train = ds.classification_set(manifest, "train", kinds)
    val = ds.classification_set(manifest, "val", kinds)
    cfg, seed = _model_cfg(args)
    model = tf.NFPModel(cfg, seed=seed)
    tcfg, _ = _train_cfg(args)
    rep = tf.train_classifier(model, train, val, tcfg)
    save_checkpoint(model.params, args.out,
                    extra={"cfg": vars(cfg), "verb": "train-cls"})
    _report(args.report, {"config": _echo(args), "val_accuracy": rep.best_score,
                          "best_epoch": rep.best_epoch,
                          "epoch_losses": rep.epoch_losses})
    print(f"best val accuracy {rep.best_score:.3f} "
          f"(epoch {rep.best_epoch}) -> {args.out}")
    return 0


def _load_model(path):
    params, extra = load_checkpoint(path)
    cfg = tf.EncoderConfig(**extra["cfg"])
    model = tf.NFPModel(cfg, seed=0)
    model.load_state({k: v.data for k, v in params.items()})
    return model


def cmd_eval_cls(args):
    manifest = ds.Manifest.load(args.manifest)
    kinds = tuple(args.kinds.split(",")) if args.kinds else None
    test = ds.classification_set(manifest, args.split, kinds)
    model = _load_model(args.model)
    acc = tf.accuracy(model, test)
    _report(args.report, {"config": _echo(args), "accuracy": acc,
                          "n": len(test)})
    print(f"accuracy {acc:.3f} on {len(test)} fields")
    return 0


def cmd_train_seg(args):
    manifest = ds.Manifest.load(args.manifest)
    taxonomy = ds.PartTaxonomy()
    train = ds.segmentation_set(manifest, "train", args.kind)
    val = ds.segmentation_set(manifest, "val", args.kind)
    cfg, seed = _model_cfg(args, n_parts=taxonomy.n_parts)
    model = tf.NFPModel(cfg, seed=seed)
    tcfg, q = _train_cfg(args, seg=True)
    rep = tf.train_segmenter(model, taxonomy, train, val, tcfg,
                             queries_per_step=q)
    save_checkpoint(model.params, args.out,
                    extra={"cfg": vars(cfg), "verb": "train-seg"})
    _report(args.report, {"config": _echo(args), "val_miou": rep.best_score,
                          "best_epoch": rep.best_epoch})
    print(f"best val instance mIoU {rep.best_score:.3f} -> {args.out}")
    return 0


def cmd_eval_seg(args):
    manifest = ds.Manifest.load(args.manifest)
    taxonomy = ds.PartTaxonomy()
    test = ds.segmentation_set(manifest, args.split, args.kind)
    model = _load_model(args.model)
    inst = tf.instance_miou(model, taxonomy, test)
    cls = tf.class_miou(model, taxonomy, test)
    _report(args.report, {"config": _echo(args), "instance_miou": inst,
                          "class_miou": cls, "n": len(test)})
    print(f"instance mIoU {inst:.3f}, class mIoU {cls['mean']:.3f} "
          f"on {len(test)} shapes")
    return 0


def cmd_perm_search(args):
    fa = fieldmod.deserialize(args.ta)
    fb = fieldmod.deserialize(args.mb)
    pts = np.load(args.points)
    best, table = analysis.permutation_search(
        fa.triplane, fb, pts["points"], pts["targets"])
    payload = {"config": _echo(args), "best": [int(x) for x in best],
               "best_loss": table[0][1],
               "identity_loss": next(l for p, l in table
                                     if p == tuple(range(len(best)))),
               "table_head": table[:20]}
    _report(args.report, payload)
    print(f"best permutation {list(best)} loss {table[0][1]:.5f} "
          f"(identity {payload['identity_loss']:.5f})")
    return 0


def cmd_viz(args):
    fld = fieldmod.deserialize(args.field)
    img = analysis.channel_image(fld.triplane, args.plane)
    gio.save_pgm(img, args.out)
    print(f"{img.shape[0]}x{img.shape[1]} channel-sum image -> {args.out}")
    return 0


def cmd_param_count(args):
    if args.field:
        fld = fieldmod.deserialize(args.field)
    else:
        fld = fieldmod.init_random("SDF", requires_grad=False)
    tp, mlp = fieldmod.param_count(fld)
    payload = {"config": _echo(args), "triplane": tp, "mlp": mlp,
               "total": tp + mlp}
    _report(args.report, payload)
    print(f"tri-plane {tp}  mlp {mlp}  total {tp + mlp} "
          f"(~{(tp + mlp) / 1000:.0f}K)")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tpnf",
                                description="tri-plane neural field pipeline")
    sub = p.add_subparsers(dest="verb", required=True)

    def verb(name, fn, **flags):
        sp = sub.add_parser(name)
        for flag, kw in flags.items():
            sp.add_argument(f"--{flag}", **kw)
        sp.set_defaults(func=fn)
        return sp

    verb("build-dataset", cmd_build_dataset,
         out={"required": True}, config={}, report={})
    verb("fit", cmd_fit, shape={"required": True},
         kind={"required": True, "choices": ("UDF", "SDF", "OF")},
         out={"required": True}, seed={"type": int, "default": 0},
         config={}, report={})
    verb("recon", cmd_recon, field={"required": True}, out={"required": True},
         resolution={"type": int, "default": 128},
         points={"type": int, "default": 16_384},
         seed={"type": int, "default": 0})
    verb("eval-recon", cmd_eval_recon, manifest={"required": True},
         kind={"default": "SDF"}, split={"default": "test"},
         resolution={"type": int, "default": 128}, report={})
    verb("train-cls", cmd_train_cls, manifest={"required": True},
         out={"required": True}, kinds={}, config={}, report={})
    verb("eval-cls", cmd_eval_cls, manifest={"required": True},
         model={"required": True}, kinds={}, split={"default": "test"},
         report={})
    verb("train-seg", cmd_train_seg, manifest={"required": True},
         out={"required": True}, kind={"default": "SDF"}, config={},
         report={})
    verb("eval-seg", cmd_eval_seg, manifest={"required": True},
         model={"required": True}, kind={"default": "SDF"},
         split={"default": "test"}, report={})
    verb("perm-search", cmd_perm_search, ta={"required": True},
         mb={"required": True}, points={"required": True}, report={})
    verb("viz", cmd_viz, field={"required": True},
         plane={"default": "xy", "choices": analysis.PLANE_NAMES},
         out={"required": True})
    verb("param-count", cmd_param_count, field={}, report={})
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, fieldmod.FormatError,
            gio.ParseError) as exc:
        report = getattr(args, "report", None)
        _report(report, {"error": str(exc), "config": _echo(args)})
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
