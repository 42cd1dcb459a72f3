"""Acceptance criteria, one test each, at their stated tolerances.

Every test prints a single ``[PASS]`` or ``[FAIL]`` line. Run directly with
``python tests/test_acceptance.py`` or through pytest.
"""
import hashlib
import itertools
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import blob_volume, build_manifest
from brainmim.augment import (
    ALL,
    AugmentationConfig,
    AugmentationPlan,
    IntensityStep,
    apply_intensity,
    apply_spatial,
    elastic_deform,
    gaussian_blur,
    gibbs_ringing,
    motion_ghosting,
    rotate3d,
    sample_plan,
    scale3d,
)
from brainmim.cli import main
from brainmim.masking import MaskSpec, generate_mask
from brainmim.nifti import read_nifti, write_nifti
from brainmim.pipeline import SamplerConfig, epoch_iter, make_pretrain_sample, sample_digest
from brainmim.preprocess import preprocess_steps, resample_isotropic
from brainmim.volume import Volume, orientation_axes

pytestmark = pytest.mark.acceptance


def verdict(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
    assert ok, detail


def _warm_up():
    # load compiled kernels before anything is timed
    p = np.zeros((4, 4, 4), np.float32)
    rotate3d(p, (1, 0, 0))
    elastic_deform(p, 1.0, 1.0, 0)


# ---------------------------------------------------------------------------


def test_1_mask_statistics(capsys):
    t0 = time.perf_counter()
    spec = MaskSpec(subpatch_size=4, mask_probability=0.6)
    fractions = np.array([generate_mask((128, 128, 128), spec, np.random.default_rng(seed)).masked_fraction
                          for seed in range(1000)])
    elapsed = time.perf_counter() - t0
    mean_dev = abs(fractions.mean() - 0.6)
    worst = np.abs(fractions - 0.6).max()
    ok = mean_dev <= 0.002 and worst <= 0.011 and elapsed < 10
    verdict(capsys, 1, "mask statistics", ok,
            f"mean {fractions.mean():.5f} (|dev| {mean_dev:.5f} <= 0.002), worst single |dev| {worst:.5f} "
            f"<= 0.011, {elapsed:.2f}s < 10s")


def test_2_covariance_contract(capsys):
    _warm_up()
    r = np.random.default_rng(2024)
    vol = Volume(r.normal(size=(80, 76, 72)))
    cfg = SamplerConfig(patch_size=(64, 64, 64), augmentation=AugmentationConfig().without_intensity())
    t0 = time.perf_counter()
    bad, spatial = [], 0
    for seed in range(200):
        s = make_pretrain_sample(vol, cfg, np.random.default_rng(seed))
        vox = s.voxel_mask()
        spatial += s.provenance["plan"]["rotation"] is not None or s.provenance["plan"]["scale"] is not None
        if not np.array_equal(s.input[~vox].view(np.uint32), s.target[~vox].view(np.uint32)):
            bad.append(seed)
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 30
    verdict(capsys, 2, "covariance contract", ok,
            f"{200 - len(bad)}/200 seeds bit-exact on unmasked voxels ({spatial} with a spatial transform), "
            f"{elapsed:.2f}s < 30s")


def _identity_plans(seed):
    yield "rotation", AugmentationPlan(rotation=(0.0, 0.0, 0.0))
    yield "scale", AugmentationPlan(scale=1.0)
    axis = seed % 3
    steps = {
        "elastic": {"alpha": 0.0, "sigma": 25.0, "field_seed": seed},
        "blur": {"sigma": 0.0},
        "additive_noise": {"sigma": 0.0, "draw_seed": seed},
        "multiplicative_noise": {"sigma": 0.0, "draw_seed": seed},
        "gamma": {"gamma": 1.0, "invert": False},
        "ghosting": {"alpha": 1.0, "repetitions": 2 + seed % 10, "axis": axis},
        "bias_field": {"coefficients": [0.0] * 20},
        "ringing": {"cut_fraction": 1.0, "axis": axis},
        "low_resolution": {"zoom": [1.0, 1.0, 1.0]},
    }
    for name, params in steps.items():
        yield name, AugmentationPlan(intensity=(IntensityStep(name, params),))


def test_3_identity_suite(capsys):
    _warm_up()
    t0 = time.perf_counter()
    worst = {}
    for seed in range(50):
        patch = np.random.default_rng(seed).normal(size=(16, 16, 16)).astype(np.float32)
        for name, plan in _identity_plans(seed):
            out = apply_intensity(apply_spatial(patch, plan), plan)
            worst[name] = max(worst.get(name, 0.0), float(np.abs(out - patch).max()))
    elapsed = time.perf_counter() - t0
    top = max(worst.values())
    ok = len(worst) == 11 and top <= 1e-5 and elapsed < 30
    verdict(capsys, 3, "identity suite", ok,
            f"{len(worst)} kernels x 50 seeds, worst max-abs {top:.2e} ({max(worst, key=worst.get)}) <= 1e-5, "
            f"{elapsed:.2f}s < 30s")


def test_4_oracle_equivalence(capsys):
    _warm_up()
    t0 = time.perf_counter()
    errs = {}

    def record(name, got, want, tol):
        err = float(np.abs(np.asarray(got, dtype=np.float64) - want).max())
        prev = errs.get(name, (0.0, tol))[0]
        errs[name] = (max(prev, err), tol)

    for seed in range(3):
        r = np.random.default_rng(seed)
        p = r.random((8, 8, 8)).astype(np.float32)
        spacing = tuple(r.uniform(0.6, 2.0, 3))
        small = r.random((5, 6, 4)).astype(np.float32)
        record("trilinear resample", resample_isotropic(Volume(small, spacing=spacing)).data,
               oracles.resample_oracle(small, spacing), 1e-5)
        angles = tuple(r.uniform(-30, 30, 3))
        record("rotation", rotate3d(p, angles), oracles.rotate_oracle(p, angles), 1e-5)
        factor = r.uniform(0.9, 1.1)
        record("scaling", scale3d(p, factor), oracles.scale_oracle(p, factor), 1e-5)
        sigma = r.uniform(0.0, 1.0) + 0.05
        record("blur", gaussian_blur(p, sigma), oracles.smooth_dense(p, sigma), 1e-5)
        e = p[:6, :6, :6]
        for alpha, sig in ((r.uniform(200, 600), r.uniform(20, 30)), (r.uniform(1, 4), r.uniform(1, 2))):
            record("elastic", elastic_deform(e, alpha, sig, seed), oracles.elastic_oracle(e, alpha, sig, seed), 1e-5)
        a, reps, axis = r.uniform(0.85, 0.95), int(r.integers(2, 12)), int(r.integers(3))
        record("ghosting (DFT)", motion_ghosting(p, a, reps, axis), oracles.ghosting_oracle(p, a, reps, axis), 1e-4)
        cut = r.uniform(0.5, 1.0)
        record("ringing (DFT)", gibbs_ringing(p, cut, axis), oracles.ringing_oracle(p, cut, axis), 1e-4)
    elapsed = time.perf_counter() - t0
    ok = all(err <= tol for err, tol in errs.values()) and elapsed < 60
    detail = ", ".join(f"{k} {v[0]:.1e}<={v[1]:.0e}" for k, v in errs.items())
    verdict(capsys, 4, "oracle equivalence", ok, f"{detail}; {elapsed:.2f}s < 60s")


def test_5_fire_rates(capsys):
    n = 100_000
    cfg = AugmentationConfig()
    rng = np.random.default_rng(5)
    counts = dict.fromkeys(ALL, 0)
    rot_axes = rot_fired = lr_axes = lr_fired = inverted = gamma_fired = 0
    for _ in range(n):
        plan = sample_plan(cfg, rng)
        for name in plan.fired():
            counts[name] += 1
        if plan.rotation is not None:
            rot_fired += 1
            rot_axes += sum(a != 0.0 for a in plan.rotation)
        for step in plan.intensity:
            if step.name == "low_resolution":
                lr_fired += 1
                lr_axes += sum(z != 1.0 for z in step.params["zoom"])
            elif step.name == "gamma":
                gamma_fired += 1
                inverted += step.params["invert"]
    checks = {name: (counts[name], n, getattr(cfg, name).p_sample) for name in ALL}
    checks["rotation.p_axis"] = (rot_axes, 3 * rot_fired, cfg.rotation.p_axis)
    checks["low_resolution.p_axis"] = (lr_axes, 3 * lr_fired, cfg.low_resolution.p_axis)
    checks["gamma.p_invert"] = (inverted, gamma_fired, cfg.gamma.p_invert)
    worst, worst_name = 0.0, ""
    for name, (k, m, p) in checks.items():
        z = abs(k / m - p) / np.sqrt(p * (1 - p) / m)
        if z > worst:
            worst, worst_name = z, name
    ok = worst <= 4.0
    verdict(capsys, 5, "fire-rate statistics", ok,
            f"{len(checks)} probabilities over {n} plans, worst |z| {worst:.2f} ({worst_name}) <= 4")


def _synthetic(code, spacing, shape, seed, margin):
    aff = np.eye(4)
    aff[:3, :3] = 0
    for col, (world, sign) in enumerate(orientation_axes(code)):
        aff[world, col] = sign * spacing[col]
    aff[:3, 3] = (12.0, -7.0, 3.0)
    vol = blob_volume(shape=shape, spacing=spacing, seed=seed, margin=margin)
    return vol.replace(affine=aff, spacing=spacing)


def test_6_preprocessing_constants(capsys):
    cases = [("RAS", (1.0, 1.0, 1.0), (18, 20, 16), 0, 3), ("LPS", (1.2, 0.9, 2.0), (20, 22, 12), 1, 2),
             ("ASL", (0.8, 1.5, 1.1), (24, 14, 18), 2, 4), ("IRP", (2.0, 1.0, 0.7), (10, 20, 26), 3, 0)]
    failures = []
    for code, spacing, shape, seed, margin in cases:
        steps = dict(preprocess_steps(_synthetic(code, spacing, shape, seed, margin)))
        out = steps["crop"]
        if out.spacing != (1.0, 1.0, 1.0) or out.orientation != "RAS":
            failures.append(f"{code}: geometry {out.spacing} {out.orientation}")
        p99 = oracles.percentile_sorted(steps["resample"].data, 0.99)
        if steps["clip"].data.max() > p99 + 1e-6:
            failures.append(f"{code}: clip max above p99")
        mean, std, _, _ = oracles.stats_two_pass(steps["normalize"].data)
        if abs(mean) > 1e-3 or abs(std - 1) > 1e-3:
            failures.append(f"{code}: zscore mean {mean} std {std}")
        if margin == 0:
            # foreground fills the field of view, so the final output itself is z-scored
            mean, std, _, _ = oracles.stats_two_pass(out.data)
            if out.shape != steps["normalize"].shape or abs(mean) > 1e-3 or abs(std - 1) > 1e-3:
                failures.append(f"{code}: full-FOV output mean {mean} std {std}")
        lo, hi = oracles.foreground_box_scan(steps["clip"].data)
        if out.meta["crop_box"] != {"lower": list(lo), "upper": list(hi)}:
            failures.append(f"{code}: crop box {out.meta['crop_box']} != scan {lo} {hi}")
    verdict(capsys, 6, "preprocessing constants", not failures,
            "; ".join(failures) or f"{len(cases)} synthetic volumes: spacing (1,1,1), RAS, clip <= p99 + 1e-6, "
                                    "zscore within 1e-3, crop box equals exhaustive scan")


def _tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _tree_hash(root: Path) -> str:
    h = hashlib.sha256()
    for name, data in _tree_bytes(root).items():
        h.update(name.encode() + b"\0" + data)
    return h.hexdigest()


def test_7_reproducibility(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    raw = tmp_path / "raw"
    for i in range(4):
        vol = _synthetic(["LPS", "RAS"][i % 2], (1.2, 1.0, 1.4), (30, 28, 24), i, 3)
        (raw / f"site{i % 2}").mkdir(parents=True, exist_ok=True)
        write_nifti(vol, raw / f"site{i % 2}" / f"sub{i}.nii.gz")
    codes, trees = [], []
    for run in ("a", "b"):
        prep = tmp_path / f"prep_{run}"
        codes.append(main(["prep", "--in", str(raw), "--out", str(prep), "--seed", "11"]))
        out = tmp_path / f"samples_{run}"
        codes.append(main(["sample", "--manifest", str(prep / "manifest.jsonl"), "--out", str(out), "--n", "6",
                           "--mode", "pretrain", "--seed", "11", "--patch-size", "20", "--workers", "1"]))
        trees.append((_tree_bytes(prep), _tree_bytes(out)))
    out8 = tmp_path / "samples_w8"
    codes.append(main(["sample", "--manifest", str(tmp_path / "prep_a" / "manifest.jsonl"), "--out", str(out8),
                       "--n", "6", "--mode", "pretrain", "--seed", "11", "--patch-size", "20", "--workers", "8"]))
    manifest = build_manifest(tmp_path / "m", n=6)
    cfg = SamplerConfig(patch_size=(12, 12, 12))
    one = [sample_digest(s) for s in epoch_iter(manifest, 0, 3, cfg, workers=1)]
    eight = [sample_digest(s) for s in epoch_iter(manifest, 0, 3, cfg, workers=8)]
    same_prep = trees[0][0] == trees[1][0]
    same_samples = trees[0][1] == trees[1][1]
    same_workers = _tree_hash(tmp_path / "samples_a") == _tree_hash(out8) and one == eight
    ok = codes == [0] * 5 and same_prep and same_samples and same_workers
    verdict(capsys, 7, "reproducibility", ok,
            f"exit codes {codes}, prep byte-identical {same_prep}, samples byte-identical {same_samples}, "
            f"1 vs 8 workers hashes equal {same_workers}")


def test_8_nifti_roundtrip(capsys, tmp_path):
    aff = np.eye(4)
    c, s = np.cos(0.2), np.sin(0.2)
    aff[:3, :3] = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]) @ np.diag([1.1, 0.9, 2.5])
    aff[:3, 3] = [-90.0, 126.0, -72.0]
    r = np.random.default_rng(8)
    samples = {
        2: r.integers(0, 256, (7, 6, 5)).astype(np.uint8),
        4: r.integers(-32768, 32768, (7, 6, 5)).astype(np.int16),
        8: r.integers(-2**24, 2**24 + 1, (7, 6, 5)).astype(np.int32),
        16: r.normal(size=(7, 6, 5)).astype(np.float32),
        64: r.normal(size=(7, 6, 5)),
    }
    failures = []
    for code, data in samples.items():
        src = tmp_path / f"t{code}.nii"
        src.write_bytes(oracles.raw_nifti(data, code, aff))
        first = read_nifti(src)
        back = read_nifti(write_nifti(first, tmp_path / f"t{code}_out.nii.gz"))
        if not np.array_equal(back.data.view(np.uint32), first.data.view(np.uint32)):
            failures.append(f"dtype {code}: data differs after write/read")
        if not np.array_equal(first.data, data.astype(np.float32)):
            failures.append(f"dtype {code}: decoded values differ from source")
        err = np.abs(back.affine - aff).max()
        if err > 1e-5:
            failures.append(f"dtype {code}: affine error {err:.1e}")
    verdict(capsys, 8, "NIfTI round trip", not failures,
            "; ".join(failures) or "uint8/int16/int32/float32/float64 bit-identical after float32 rewrite, "
                                    "affine within 1e-5")


def test_9_epoch_semantics(capsys, tmp_path):
    n = 7
    manifest = build_manifest(tmp_path, n=n, shape=(16, 14, 12))
    cfg = SamplerConfig(patch_size=(8, 8, 8))
    failures = []
    for epoch, workers in itertools.product(range(3), (1, 3)):
        ids = [s.provenance["volume_id"] for s in epoch_iter(manifest, epoch, 0, cfg, workers=workers)]
        if len(ids) != n or sorted(ids) != sorted(e.id for e in manifest):
            failures.append(f"epoch {epoch} workers {workers}: {ids}")
    verdict(capsys, 9, "epoch semantics", not failures,
            "; ".join(failures) or f"{n}-entry manifest: exactly {n} samples, one per entry, 3 epochs x 1/3 workers")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
