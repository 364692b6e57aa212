"""Headline capability checks, one printed pass/fail line per criterion.

Run with `pytest tests/test_acceptance.py -s` to see every line. The
expensive fixtures (the 450-field dataset, the paired channel-8 fits,
trained classifier/segmenter checkpoints) are cached under `.cache/`;
dataset builds and training loops are fully deterministic, so cached
artifacts are identical to freshly built ones. The single-shape fitting
round trips are never cached — their wall-clock budget is part of the
check.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from triplane_fields import analysis, field as fieldmod, fitting, recon
from triplane_fields.dataset import (DatasetSpec, Manifest, PartTaxonomy,
                                     build_dataset, classification_set,
                                     segmentation_set)
from triplane_fields.engine import (Tensor, clip, concat, cumsum, div, exp,
                                    gather, grad_check, layer_norm, log,
                                    load_checkpoint, matmul, mean, no_grad,
                                    power, reshape, save_checkpoint, sigmoid,
                                    sin, smooth_l1, softmax, softplus,
                                    tensor, tmax, transpose,
                                    triplane_interp, tsum)
from triplane_fields.geometry import (PointCloud, chamfer, fscore, gt_udf,
                                      make_primitive, orbit_cameras, psnr,
                                      render_analytic, sample_surface,
                                      voxelize)
from triplane_fields.geometry.scene import AnalyticScene, ScenePrimitive
from triplane_fields.transformer import (EncoderConfig, NFPModel, TrainConfig,
                                         _shape_iou, accuracy, batch_tokens,
                                         classify, encode, instance_miou,
                                         predict_parts, seg_train_config,
                                         train_classifier, train_segmenter)

CACHE = Path(__file__).resolve().parent.parent / ".cache"
RNG = np.random.default_rng(2024)


def check(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# 1. gradient suite

def _t(shape, rng, positive=False, scale=1.0):
    data = rng.normal(size=shape) * scale
    if positive:
        data = np.abs(data) + 0.5
    return tensor(data, requires_grad=True)


def _primitive_cases(rng):
    a = _t((3, 4), rng)
    b = _t((3, 4), rng)
    v = _t((4,), rng)
    pos = _t((3, 4), rng, positive=True)
    den = _t((3, 4), rng, positive=True)
    m1 = _t((2, 3), rng)
    m2 = _t((3, 4), rng)
    g = _t((5,), rng, positive=True)
    o = _t((5,), rng)
    ln_in = _t((4, 5), rng)
    planes = _t((3, 2, 6, 6), rng)
    coords = tensor(rng.uniform(-0.9, 0.9, (7, 3)), requires_grad=True)
    idx = np.array([2, 0, 1, 2])
    return [
        ("add", lambda: tsum((a + b) * (a + 2.0)), [a, b]),
        ("sub", lambda: tsum((a - b) * b), [a, b]),
        ("mul", lambda: tsum(a * b), [a, b]),
        ("div", lambda: tsum(div(a, den)), [a, den]),
        ("broadcast", lambda: tsum(a * v), [a, v]),
        ("matmul", lambda: tsum(matmul(m1, m2)), [m1, m2]),
        ("sin", lambda: tsum(sin(a) * b), [a, b]),
        ("exp", lambda: tsum(exp(a)), [a]),
        ("log", lambda: tsum(log(pos)), [pos]),
        ("sigmoid", lambda: tsum(sigmoid(a) * b), [a, b]),
        ("softplus", lambda: tsum(softplus(a)), [a]),
        ("power", lambda: tsum(power(a, 3.0)), [a]),
        ("clip", lambda: tsum(clip(a, -0.5, 0.5) * b), [a, b]),
        ("concat", lambda: tsum(concat([a, b], axis=1) * 1.5), [a, b]),
        ("slice", lambda: tsum(a[:, 1:3] * b[:, 0:2]), [a, b]),
        ("gather", lambda: tsum(gather(a, idx, axis=0)), [a]),
        ("reshape", lambda: tsum(reshape(a, (4, 3)) * 0.7), [a]),
        ("transpose", lambda: tsum(transpose(a, (1, 0)) * 2.0), [a]),
        ("sum_axis", lambda: tsum(tsum(a, axis=1) * v[:3]), [a, v]),
        ("mean", lambda: mean(a * a), [a]),
        ("max", lambda: tsum(tmax(a, axis=1)), [a]),
        ("softmax", lambda: tsum(softmax(a, axis=1) * b), [a, b]),
        ("layer_norm", lambda: tsum(layer_norm(ln_in, g, o)), [ln_in, g, o]),
        ("smooth_l1", lambda: tsum(smooth_l1(a, b.data)), [a]),
        ("cumsum", lambda: tsum(cumsum(a, axis=1) * b), [a, b]),
        ("triplane_interp",
         lambda: tsum(triplane_interp(planes, coords)), [planes, coords]),
    ]


def test_gradient_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = ("", 0.0)
    for name, fn, params in _primitive_cases(rng):
        rep = grad_check(fn, params, h=1e-6, tol=1e-5,
                         max_coords_per_param=6)
        if rep.max_rel_err > worst[1]:
            worst = (name, rep.max_rel_err)
        assert rep.passed, f"primitive {name}: rel err {rep.max_rel_err:.2e}"

    fld = fieldmod.init_random("SDF", channels=8, height=8, width=8,
                               dtype=np.float64, seed=1)
    pts = rng.uniform(-0.8, 0.8, (6, 3))
    tgt = rng.uniform(0.1, 0.9, 6)
    rep_field = grad_check(
        lambda: fitting.loss_bce(fld.forward(pts), tgt),
        fld.parameters(), h=1e-6, tol=1e-4, max_coords_per_param=6)
    assert rep_field.passed, f"field loss rel err {rep_field.max_rel_err:.2e}"

    from triplane_fields.transformer import cross_entropy
    cfg = EncoderConfig(d_model=8, n_layers=1, n_heads=2, d_ff=12,
                        n_classes=3, crop=4)
    model = NFPModel(cfg, seed=3)
    for p in model.params.values():
        p.data = p.data.astype(np.float64)
    toks = rng.normal(size=(2, 6, 16))
    rep_cls = grad_check(
        lambda: cross_entropy(classify(model, toks), np.array([0, 2])),
        model.parameters(), h=1e-6, tol=1e-3, max_coords_per_param=5)
    assert rep_cls.passed, f"classifier rel err {rep_cls.max_rel_err:.2e}"

    dt = time.perf_counter() - t0
    check("gradient suite", dt < 60.0,
          f"27 primitives (worst {worst[0]} {worst[1]:.1e}), field loss "
          f"{rep_field.max_rel_err:.1e}, classifier {rep_cls.max_rel_err:.1e}, "
          f"{dt:.1f}s (<60s)")


# ---------------------------------------------------------------------------
# 2. channel-permutation invariance

def test_permutation_invariance():
    t0 = time.perf_counter()
    cfg = EncoderConfig(d_model=24, n_layers=1, n_heads=2, d_ff=32)

    def mk(c, rng):
        p = rng.normal(0, 0.1, (3, 4, 32, 32)).astype(np.float32)
        p[:, 0] += (c - 1) * 0.6
        return p

    rng = np.random.default_rng(7)
    train = [(mk(c, rng), c) for c in range(3) for _ in range(6)]
    val = [(mk(c, rng), c) for c in range(3) for _ in range(3)]
    trained = NFPModel(cfg, seed=0)
    train_classifier(trained, train, val,
                     TrainConfig(epochs=20, batch_size=6, max_lr=1e-3))
    untrained = NFPModel(cfg, seed=5)

    worst_logit = worst_enc = 0.0
    toks = batch_tokens([mk(c, rng) for c in range(3)])
    for model in (trained, untrained):
        base = classify(model, toks).data
        mem = encode(model, toks).data
        for trial in range(20):
            perm = np.random.default_rng(trial).permutation(toks.shape[1])
            lp = classify(model, toks[:, perm]).data
            worst_logit = max(worst_logit, np.abs(lp - base).max())
            assert np.array_equal(np.argmax(lp, 1), np.argmax(base, 1))
            mp = encode(model, toks[:, perm]).data
            worst_enc = max(worst_enc, np.abs(mp - mem[:, perm]).max())
    dt = time.perf_counter() - t0
    check("permutation invariance",
          worst_logit < 1e-5 and worst_enc < 1e-5 and dt < 60.0,
          f"logit drift {worst_logit:.1e}, encoder drift {worst_enc:.1e} "
          f"(<1e-5) over 20 perms x trained+untrained, {dt:.1f}s (<60s)")


# ---------------------------------------------------------------------------
# 3-6. single-shape fitting round trips (never cached; time is checked)

def test_sdf_round_trip():
    t0 = time.perf_counter()
    mesh = make_primitive("sphere", {"radius": 0.8}, tessellation=3)
    fld, _ = fitting.fit_field(mesh, "SDF", seed=0)
    rec = recon.mesh_from_sdf(fld, resolution=128)
    dt = time.perf_counter() - t0
    cd = chamfer(sample_surface(mesh, 100_000, seed=1),
                 sample_surface(rec, 100_000, seed=2))
    fs = fscore(sample_surface(mesh, 100_000, seed=1),
                sample_surface(rec, 100_000, seed=2))
    ok = (cd < 5.0 and fs > 90.0 and rec.is_watertight()
          and rec.euler_characteristic() == 2 and dt < 600.0)
    check("SDF round trip", ok,
          f"CD {cd:.3f} (<5), F {fs:.1f}% (>90), "
          f"watertight={rec.is_watertight()}, "
          f"euler={rec.euler_characteristic()} (=2), {dt:.0f}s (<600s)")


def test_udf_round_trip():
    t0 = time.perf_counter()
    mesh = make_primitive("sphere", {"radius": 0.8}, tessellation=4)
    cloud = sample_surface(mesh, 100_000, seed=0)
    fld, _ = fitting.fit_field(cloud, "UDF", seed=0)
    pc = recon.pc_from_udf(fld, n_points=16_384, seed=0)
    dt = time.perf_counter() - t0
    err = np.abs(np.linalg.norm(pc.points, axis=1) - 0.8).mean()
    check("UDF round trip", err < 0.01 and dt < 600.0,
          f"16384 points, mean |r-0.8| {err:.4f} (<0.01), {dt:.0f}s (<600s)")


def test_of_round_trip():
    t0 = time.perf_counter()
    mesh = make_primitive("box", {"half_extents": (0.6, 0.45, 0.3)})
    grid = voxelize(mesh, 32)
    fld, _ = fitting.fit_field(grid, "OF", seed=0)
    rec = recon.voxel_from_of(fld, resolution=32)
    dt = time.perf_counter() - t0
    iou = grid.iou(rec)
    check("OF round trip", iou > 0.95 and dt < 300.0,
          f"32^3 box IoU {iou:.4f} (>0.95), {dt:.0f}s (<300s)")


def test_rf_round_trip():
    t0 = time.perf_counter()
    scene = AnalyticScene([
        ScenePrimitive("sphere", (0.0, 0.0, 0.0), (0.55,), (0.85, 0.25, 0.2))])
    cams = orbit_cameras(37)
    views = [render_analytic(scene, cam) for cam in cams]
    held_out = views.pop(18)
    fld, _ = fitting.fit_rf(views, seed=0)
    img = recon.render_rf(fld, held_out.camera)
    dt = time.perf_counter() - t0
    p = psnr(img.pixels, held_out.pixels)

    # rendering weights partition unity with the background term
    origins, dirs = held_out.camera.rays(np.arange(0, 64 * 64, 97))
    t0s, t1s, _ = recon.ray_sphere_span(origins, dirs)
    frac = (np.arange(96) + 0.5) / 96
    pts = origins[:, None] + (t0s[:, None]
                              + (t1s - t0s)[:, None] * frac)[..., None] * dirs[:, None]
    with no_grad():
        sigma = fld.forward(pts.reshape(-1, 3).astype(np.float32)).data[:, 3]
    sd = sigma.reshape(-1, 96) * ((t1s - t0s) / 96)[:, None]
    cum = np.cumsum(sd, axis=1)
    w = np.exp(-(cum - sd)) - np.exp(-cum)
    gap = np.abs(w.sum(axis=1) + np.exp(-cum[:, -1]) - 1.0).max()
    check("RF round trip", p > 22.0 and gap < 1e-6 and dt < 900.0,
          f"36 views, held-out PSNR {p:.2f} dB (>22), weight partition gap "
          f"{gap:.1e} (<1e-6), {dt:.0f}s (<900s)")


# ---------------------------------------------------------------------------
# dataset-backed criteria (cached fixtures)

DATASET_DIR = CACHE / "acceptance_ds"
CLS_CFG = EncoderConfig()                      # d_model 128, 4 layers
CLS_TRAIN = TrainConfig(epochs=60, batch_size=32, max_lr=1e-3)


@pytest.fixture(scope="session")
def dataset():
    if not (DATASET_DIR / "manifest.json").exists():
        build_dataset(DatasetSpec(per_class=50, kinds=("UDF", "SDF", "OF")),
                      DATASET_DIR)
    m = Manifest.load(DATASET_DIR / "manifest.json")
    assert all(e.status == "ok" for e in m.entries)
    return m


def _cached_model(name, cfg, train_fn):
    path = CACHE / f"{name}.ckpt"
    model = NFPModel(cfg, seed=0)
    if path.exists():
        params, _ = load_checkpoint(path)
        model.load_state({k: v.data for k, v in params.items()})
    else:
        train_fn(model)
        save_checkpoint(model.params, path, extra={"fixture": name})
    return model


def _cls_model(name, manifest, kinds):
    train = classification_set(manifest, "train", kinds)
    val = classification_set(manifest, "val", kinds)
    return _cached_model(
        name, CLS_CFG,
        lambda m: train_classifier(m, train, val, CLS_TRAIN))


def test_toy_classification(dataset):
    model = _cls_model("cls_sdf", dataset, ("SDF",))
    test = classification_set(dataset, "test", ("SDF",))
    acc = accuracy(model, test)
    check("toy classification", acc >= 0.90,
          f"3 classes x 50 SDF fields, test accuracy {acc:.3f} (>=0.90, "
          f"n={len(test)})")


def test_universal_classifier_trend(dataset):
    kinds = ("UDF", "SDF", "OF")
    joint = _cls_model("cls_joint", dataset, kinds)
    singles = {k: _cls_model(f"cls_{k.lower()}", dataset, (k,))
               for k in kinds}
    tests = {k: classification_set(dataset, "test", (k,)) for k in kinds}
    table = {"joint": {k: accuracy(joint, tests[k]) for k in kinds}}
    for name, model in singles.items():
        table[name] = {k: accuracy(model, tests[k]) for k in kinds}

    dominated = all(table["joint"][k] >= table[s][k]
                    for k in kinds for s in singles)
    collapse = table["SDF"]["SDF"] - table["SDF"]["OF"]
    rows = "; ".join(f"{name}: " + " ".join(f"{k}={table[name][k]:.2f}"
                                            for k in kinds)
                     for name in table)
    check("universal classifier trend", dominated and collapse >= 0.20,
          f"{rows}; joint>=singles everywhere={dominated}, "
          f"SDF-model SDF->OF drop {collapse:.2f} (>=0.20)")


def test_part_segmentation(dataset):
    taxonomy = PartTaxonomy()
    cfg = EncoderConfig(n_parts=taxonomy.n_parts)
    train = segmentation_set(dataset, "train", "SDF")
    val = segmentation_set(dataset, "val", "SDF")
    model = _cached_model(
        "seg_sdf", cfg,
        lambda m: train_segmenter(m, taxonomy, train, val,
                                  seg_train_config(epochs=40, batch_size=16,
                                                   max_lr=1e-3)))
    test = segmentation_set(dataset, "test", "SDF")
    miou = instance_miou(model, taxonomy, test)
    in_class = True
    for planes, cls, pts, _ in test:
        pred = predict_parts(model, taxonomy, planes, cls, pts)
        in_class &= set(np.unique(pred)) <= set(taxonomy.parts_of(cls))
    check("part segmentation", miou >= 0.80 and in_class,
          f"instance mIoU {miou:.3f} (>=0.80) on {len(test)} shapes, "
          f"2048 queries each; class-restricted predictions in-class="
          f"{in_class}")


# ---------------------------------------------------------------------------
# 9-10. permutation search at C=8 and the spatial-shuffle control

def _c8_fields():
    mesh = make_primitive("torus", {"major": 0.6, "minor": 0.25},
                          tessellation=5)
    paths = [CACHE / f"c8_fit_{s}.tpnf" for s in (1, 2)]
    fields = []
    for seed, path in zip((1, 2), paths):
        if not path.exists():
            cfg = fitting.default_config("SDF", channels=8)
            fld, _ = fitting.fit_field(mesh, "SDF", cfg, seed=seed)
            fieldmod.serialize(fld, path)
        fields.append(fieldmod.deserialize(path))
    return mesh, fields


def test_permutation_search_c8():
    mesh, (fa, fb) = _c8_fields()
    points, targets = analysis.search_eval_points(mesh, "SDF", seed=0)
    cache = CACHE / "c8_search.json"
    if cache.exists():
        payload = json.loads(cache.read_text())
        best = np.array(payload["best"])
        best_loss, identity_loss = payload["best_loss"], payload["identity"]
    else:
        best, table = analysis.permutation_search(fa.triplane, fb,
                                                  points, targets)
        best_loss = table[0][1]
        identity_loss = dict(table)[tuple(range(8))]
        cache.write_text(json.dumps({"best": [int(x) for x in best],
                                     "best_loss": best_loss,
                                     "identity": identity_loss}))
    with no_grad():
        matched = float(analysis.excess_bce(fb.forward(points).data[:, 0],
                                            targets))

    gt = sample_surface(mesh, 100_000, seed=3)
    cd_matched = chamfer(gt, sample_surface(
        recon.mesh_from_sdf(fb, resolution=128), 100_000, seed=4))
    aligned = analysis.with_triplane(fb, fa.triplane.permuted(best))
    cd_aligned = chamfer(gt, sample_surface(
        recon.mesh_from_sdf(aligned, resolution=128), 100_000, seed=5))

    ok = (best_loss <= 2.0 * matched
          and best_loss <= 0.25 * identity_loss
          and cd_aligned <= 2.0 * cd_matched)
    check("permutation search C=8", ok,
          f"best {tuple(int(x) for x in best)} loss {best_loss:.4f} vs "
          f"matched {matched:.4f} (<=2x) and unpermuted {identity_loss:.4f} "
          f"(<=0.25x); recon CD {cd_aligned:.3f} vs matched {cd_matched:.3f} "
          f"(<=2x)")


def test_spatial_shuffle_control():
    mesh, (_, fb) = _c8_fields()
    gt = sample_surface(mesh, 100_000, seed=3)
    cd_plain = chamfer(gt, sample_surface(
        recon.mesh_from_sdf(fb, resolution=128), 100_000, seed=4))
    shuffled = analysis.with_triplane(
        fb, analysis.spatial_shuffle(fb.triplane, seed=0))
    rec = recon.mesh_from_sdf(shuffled, resolution=128)
    if len(rec.faces) == 0:
        check("spatial shuffle control", True,
              f"unshuffled CD {cd_plain:.3f}; shuffled planes produce no "
              f"surface at all")
        return
    cd_shuf = chamfer(gt, sample_surface(rec, 100_000, seed=5))
    check("spatial shuffle control", cd_shuf >= 10.0 * cd_plain,
          f"shuffled CD {cd_shuf:.3f} vs unshuffled {cd_plain:.3f} (>=10x)")


# ---------------------------------------------------------------------------
# 12. oracle equivalence against brute force

def test_oracle_equivalence():
    n_exact = 0
    for trial in range(100):
        rng = np.random.default_rng(3000 + trial)
        a = rng.uniform(-1, 1, (int(rng.integers(4, 30)), 3))
        b = rng.uniform(-1, 1, (int(rng.integers(4, 30)), 3))
        d = np.sqrt(((a[:, None] - b[None]) ** 2).sum(-1))

        udf = gt_udf(PointCloud(b), a)
        assert np.array_equal(udf, d.min(axis=1))

        cd = 1000.0 * 0.5 * (d.min(1).mean() + d.min(0).mean())
        assert chamfer(PointCloud(a), PointCloud(b)) == cd

        prec, rec_ = (d.min(1) <= 0.01).mean(), (d.min(0) <= 0.01).mean()
        fs = (0.0 if prec + rec_ == 0
              else 100.0 * 2 * prec * rec_ / (prec + rec_))
        assert fscore(PointCloud(a), PointCloud(b)) == fs

        parts = [0, 1, 2]
        gt_l = rng.integers(0, 3, 40)
        pr_l = rng.integers(0, 3, 40)
        ious = []
        for part in parts:
            inter = int(np.sum((gt_l == part) & (pr_l == part)))
            union = int(np.sum((gt_l == part) | (pr_l == part)))
            ious.append(1.0 if union == 0 else inter / union)
        assert _shape_iou(pr_l, gt_l, parts) == np.mean(ious)
        n_exact += 1
    check("oracle equivalence", n_exact == 100,
          f"gt_udf/chamfer/fscore/mIoU == brute force exactly on "
          f"{n_exact}/100 random instances")


# ---------------------------------------------------------------------------
# 13. parameter accounting

def test_parameter_accounting():
    fld = fieldmod.init_random("SDF", requires_grad=False)
    tp, mlp = fieldmod.param_count(fld)
    # 3 x 16 x 32 x 32 planes; 64x(16+63)+64, 2x(64x64+64), 1x64+1 MLP
    expect_mlp = 64 * 79 + 64 + 2 * (64 * 64 + 64) + 64 + 1
    total = tp + mlp
    ok = tp == 49_152 and mlp == expect_mlp and abs(total - 64_000) < 2_000
    check("parameter accounting", ok,
          f"tri-plane {tp} (=49152), MLP {mlp} (={expect_mlp}), "
          f"total {total} (~64K)")
