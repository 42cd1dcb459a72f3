"""Command-line tools: ``prep``, ``sample``, ``stats`` and ``bench``.

Exit codes: 0 success, 1 partial failure, 2 invalid invocation.
"""
from __future__ import annotations

import argparse
import collections
import hashlib
import json
import logging
import resource
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from brainmim._accel import BACKEND
from brainmim.config import CliConfig, load_config
from brainmim.nifti import read_nifti, write_nifti
from brainmim.pipeline import (
    FinetuneSample,
    Manifest,
    ManifestEntry,
    ManifestError,
    PipelineError,
    epoch_iter,
    file_checksum,
    sample_digest,
    write_sample_blob,
    write_sample_dir,
)
from brainmim.pipeline.manifest import creation_timestamp
from brainmim.pipeline.sampling import default_workers
from brainmim.preprocess import BoundingBox, preprocess_label, preprocess_steps
from brainmim.volume import volume_stats

log = logging.getLogger("brainmim")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
NIFTI_SUFFIXES = (".nii", ".nii.gz")
MANIFEST_NAME = "manifest.jsonl"


class UsageError(Exception):
    pass


def _is_nifti(path: Path) -> bool:
    return path.is_file() and path.name.endswith(NIFTI_SUFFIXES)


def _strip_suffix(name: str) -> str:
    for s in (".nii.gz", ".nii"):
        if name.endswith(s):
            return name[: -len(s)]
    return name


def _load_cfg(args) -> CliConfig:
    try:
        cfg = load_config(getattr(args, "config", None))
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"bad config: {exc}") from None
    patch = getattr(args, "patch_size", None)
    return cfg.override(seed=getattr(args, "seed", None), workers=getattr(args, "workers", None),
                        mode=getattr(args, "mode", None), patch_size=patch)


def _workers(cfg: CliConfig) -> int:
    return cfg.workers if cfg.workers is not None else default_workers()


# ---------------------------------------------------------------------------
# prep


def _prep_one(src: Path, in_dir: Path, out_dir: Path, labels_dir: Path | None, cfg: CliConfig):
    rel = src.relative_to(in_dir)
    vid = _strip_suffix(str(rel)).replace("/", "__")
    source = rel.parts[0] if len(rel.parts) > 1 else "default"
    steps = preprocess_steps(read_nifti(src), cfg.preprocess)
    out = steps[-1][1]
    out_name = f"{vid}.nii.gz"
    write_nifti(out.replace(id=vid), out_dir / out_name, gzip_output=True)
    label_name = None
    if labels_dir is not None:
        lab_src = labels_dir / rel
        if lab_src.exists():
            box = BoundingBox(**out.meta["crop_box"])
            lab = preprocess_label(read_nifti(lab_src), box, cfg.preprocess)
            label_name = f"{vid}.label.nii.gz"
            write_nifti(lab.replace(id=vid), out_dir / label_name, gzip_output=True)
    return ManifestEntry(id=vid, path=out_name, shape=out.shape, spacing=out.spacing,
                         checksum=file_checksum(out_dir / out_name), source=source, label=label_name)


def cmd_prep(args) -> int:
    cfg = _load_cfg(args)
    in_dir, out_dir = Path(args.input), Path(args.output)
    if not in_dir.is_dir():
        raise UsageError(f"input directory {in_dir} does not exist")
    files = sorted(p for p in in_dir.rglob("*") if _is_nifti(p))
    if not files:
        raise UsageError(f"no NIfTI files in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    labels_dir = Path(args.labels) if args.labels else None

    def run(src):
        try:
            return src, _prep_one(src, in_dir, out_dir, labels_dir, cfg), None
        except Exception as exc:  # reported per file, never aborts the batch
            return src, None, exc

    workers = _workers(cfg)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, files))
    else:
        results = [run(f) for f in files]

    entries, failed = [], 0
    for src, entry, exc in results:
        if exc is not None:
            failed += 1
            msg = str(exc)
            print(f"error: {msg if str(src) in msg else f'{src}: {msg}'}", file=sys.stderr)
        else:
            entries.append(entry)
    entries.sort(key=lambda e: e.id)
    manifest = Manifest(entries=entries, created=creation_timestamp(),
                        preprocess_config_hash=cfg.preprocess.digest(), config=cfg.to_dict(), root=out_dir)
    manifest.write(out_dir / MANIFEST_NAME)
    log.info("prepared %d of %d volumes into %s", len(entries), len(files), out_dir)
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# sample


def _read_manifest(path) -> Manifest:
    try:
        return Manifest.read(path)
    except ManifestError as exc:
        raise UsageError(str(exc)) from None


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    manifest = _read_manifest(args.manifest)
    mode = cfg.sampler.mode
    n = args.n
    if n < 0:
        raise UsageError("--n must be >= 0")
    if n > 0 and len(manifest) == 0:
        raise UsageError("manifest has no entries")
    if mode == "finetune" and n > len(manifest):
        raise UsageError(f"finetune mode draws distinct volumes: --n {n} exceeds {len(manifest)} entries")
    if args.format == "blob" and mode == "finetune":
        raise UsageError("blob format holds input/target/mask triplets; use --format dir for finetune")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = _workers(cfg)
    effective = cfg.to_dict()
    written, epoch = 0, 0
    try:
        while written < n:
            for sample in epoch_iter(manifest, epoch, cfg.seed, cfg.sampler, workers=workers):
                sample.provenance["config"] = effective
                name = f"sample_{written:05d}"
                if args.format == "blob":
                    write_sample_blob(sample, out_dir / f"{name}.ams1")
                    (out_dir / f"{name}.json").write_text(json.dumps(sample.provenance, indent=2, sort_keys=True) + "\n")
                else:
                    write_sample_dir(sample, out_dir / name)
                written += 1
                if written >= n:
                    break
            epoch += 1
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    log.info("wrote %d samples to %s", written, out_dir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# stats


def manifest_stats(manifest: Manifest, intensity: bool = True) -> dict:
    sources = collections.Counter(e.source for e in manifest)
    shapes = collections.Counter("x".join(map(str, e.shape)) for e in manifest)
    spacings = collections.Counter("x".join(f"{s:g}" for s in e.spacing) for e in manifest)
    report = {
        "volumes": len(manifest),
        "sources": dict(sorted(sources.items())),
        "shapes": dict(sorted(shapes.items())),
        "spacings": dict(sorted(spacings.items())),
        "intensity": None,
    }
    if intensity and len(manifest):
        total, acc_mean, acc_sq, lo, hi = 0, 0.0, 0.0, float("inf"), float("-inf")
        for entry in sorted(manifest, key=lambda e: e.id):
            vol = manifest.load(entry)
            mean, std, vmin, vmax = volume_stats(vol)
            n = vol.data.size
            total += n
            acc_mean += mean * n
            acc_sq += (std ** 2 + mean ** 2) * n
            lo, hi = min(lo, vmin), max(hi, vmax)
        mean = acc_mean / total
        report["intensity"] = {"voxels": total, "mean": mean, "std": max(acc_sq / total - mean ** 2, 0.0) ** 0.5,
                               "min": lo, "max": hi}
    return report


def _format_stats(report: dict) -> str:
    lines = [f"volumes: {report['volumes']}", "source counts:"]
    lines += [f"  {k}: {v}" for k, v in report["sources"].items()]
    lines.append("shapes:")
    lines += [f"  {k}: {v}" for k, v in report["shapes"].items()]
    lines.append("spacings:")
    lines += [f"  {k}: {v}" for k, v in report["spacings"].items()]
    if report["intensity"]:
        i = report["intensity"]
        lines.append(f"intensity: mean {i['mean']:.4f} std {i['std']:.4f} min {i['min']:.4f} max {i['max']:.4f}")
    return "\n".join(lines)


def cmd_stats(args) -> int:
    manifest = _read_manifest(args.manifest)
    try:
        report = manifest_stats(manifest, intensity=not args.no_intensity)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    if args.format == "structured":
        print(json.dumps(report, indent=2))
    else:
        print(_format_stats(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def _digest_run(manifest, cfg: CliConfig, workers: int, duration: float | None = None, limit: int | None = None):
    """Iterate epochs until ``duration`` seconds pass or ``limit`` samples are done."""
    h = hashlib.sha256()
    count, epoch = 0, 0
    start = time.perf_counter()
    if len(manifest) == 0:
        return 0, 0.0, h.hexdigest()
    while True:
        for sample in epoch_iter(manifest, epoch, cfg.seed, cfg.sampler, workers=workers):
            h.update(sample_digest(sample).encode())
            count += 1
            if limit is not None and count >= limit:
                return count, time.perf_counter() - start, h.hexdigest()
            if duration is not None and time.perf_counter() - start >= duration:
                return count, time.perf_counter() - start, h.hexdigest()
        epoch += 1


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    manifest = _read_manifest(args.manifest)
    workers = _workers(cfg)
    try:
        count, seconds, digest = _digest_run(manifest, cfg, workers, duration=args.duration)
        report = {
            "backend": BACKEND,
            "workers": workers,
            "samples": count,
            "seconds": seconds,
            "samples_per_second": count / seconds if seconds > 0 else 0.0,
            "peak_rss_mb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0,
            "content_hash": digest,
            "config": cfg.to_dict(),
        }
        if args.compare_workers is not None:
            _, _, other = _digest_run(manifest, cfg, args.compare_workers, limit=count)
            report["compare"] = {"workers": args.compare_workers, "content_hash": other,
                                 "identical": other == digest}
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    print(json.dumps(report, indent=2))
    if args.compare_workers is not None and not report["compare"]["identical"]:
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------


def _patch_size(text):
    parts = [int(p) for p in text.lower().replace("x", ",").split(",") if p]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3 or any(p < 1 for p in parts):
        raise argparse.ArgumentTypeError(f"invalid patch size {text!r}")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brainmim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="preprocess a directory of NIfTI volumes and write a manifest")
    p.add_argument("--in", dest="input", required=True, metavar="DIR")
    p.add_argument("--out", dest="output", required=True, metavar="DIR")
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--labels", metavar="DIR", help="label maps mirroring the input tree")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("sample", help="dump pretraining or finetuning samples")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--mode", choices=("pretrain", "finetune", "none"))
    p.add_argument("--seed", type=int)
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--workers", type=int)
    p.add_argument("--patch-size", type=_patch_size)
    p.add_argument("--format", choices=("dir", "blob"), default="dir")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("stats", help="summarize a manifest")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.add_argument("--no-intensity", action="store_true", help="skip reading volumes")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bench", help="measure sample throughput and check content hashes")
    p.add_argument("--manifest", required=True, metavar="FILE")
    p.add_argument("--duration", type=float, default=10.0, metavar="SECONDS")
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--compare-workers", type=int, metavar="N",
                   help="rerun the same samples with N workers and compare content hashes")
    p.add_argument("--mode", choices=("pretrain", "finetune", "none"))
    p.add_argument("--patch-size", type=_patch_size)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
