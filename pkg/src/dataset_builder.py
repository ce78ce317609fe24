from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import BuildConfig
from .core_types import fnv1a64
from .errors import ConfigurationError, DatasetBuildError, FsidError, RawFormatError
from .pipeline import list_source_images, render_clean, synthesize_pair
from .raw_io import atomic_write_bytes, encode_bayer, file_checksum, read_header, write_image

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
PARTIAL_NAME = "manifest.partial.jsonl"
MANIFEST_FORMAT_VERSION = 1
BATCH_PER_WORKER = 4


def _hex(value: int) -> str:
    return f"{value:016x}"


@dataclass(frozen=True)
class PairRecord:
    """Provenance and file index of one clean/noisy pair."""

    pair_id: int
    scene_seed: str
    isp: dict[str, Any]
    profile: str
    profile_index: int
    gain_scale: float
    clean_path: str
    clean_checksum: str
    noisy_path: str
    noisy_checksum: str
    source: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> PairRecord:
        return cls(**{k: payload[k] for k in cls.__dataclass_fields__ if k in payload})


@dataclass(frozen=True)
class SkippedPair:
    pair_id: int
    reason: str


@dataclass(frozen=True)
class DatasetManifest:
    """
    Header plus per-pair records of a built dataset.

    The header embeds the full build config (profiles included), so the
    manifest alone is enough to regenerate any clean frame.
    """

    config_hash: str
    config: dict[str, Any]
    records: tuple[PairRecord, ...]
    skipped: tuple[SkippedPair, ...] = ()
    format_version: int = MANIFEST_FORMAT_VERSION
    root: Path | None = field(default=None, compare=False)
    # Where relative paths in the config (a folder source) resolve; outside the hash.
    config_dir: str | None = None

    @property
    def clamp_policy(self) -> str:
        return "clamp-0-1" if self.config.get("clamp", True) else "none"

    @property
    def totals(self) -> dict[str, int]:
        return {
            "requested": int(self.config["count"]),
            "written": len(self.records),
            "skipped": len(self.skipped),
        }

    def header(self) -> dict[str, Any]:
        return {
            "kind": "header",
            "format_version": self.format_version,
            "config_hash": self.config_hash,
            "config": self.config,
            "config_dir": self.config_dir,
            "clamp_policy": self.clamp_policy,
            "totals": self.totals,
            "skipped": [asdict(s) for s in self.skipped],
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header(), sort_keys=True)]
        for record in self.records:
            lines.append(json.dumps({"kind": "pair", **record.to_dict()}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path: Path) -> None:
        atomic_write_bytes(path, self.to_jsonl().encode("utf-8"))


def load_manifest(path: Path) -> DatasetManifest:
    """Parse a manifest.jsonl; `root` is set to its directory."""
    path = Path(path)
    lines = [line for line in path.read_text().splitlines() if line.strip()]
    if not lines:
        raise RawFormatError(f"{path} is empty.")
    try:
        entries = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise RawFormatError(f"{path} is not valid JSON Lines: {exc}") from exc
    header = entries[0]
    if header.get("kind") != "header":
        raise RawFormatError(f"{path} does not start with a header record.")
    if header.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise RawFormatError(f"Unsupported manifest version {header.get('format_version')}.")
    return DatasetManifest(
        config_hash=header["config_hash"],
        config=header["config"],
        records=tuple(PairRecord.from_dict(e) for e in entries[1:]),
        skipped=tuple(SkippedPair(**s) for s in header.get("skipped", [])),
        format_version=header["format_version"],
        root=path.parent,
        config_dir=header.get("config_dir"),
    )


def shard_dir(pair_id: int, shard_size: int) -> str:
    return f"shard_{pair_id // shard_size:05d}"


def _produce_pair(pair_id: int, cfg: BuildConfig, out_dir: Path, sources: Sequence[Path] | None) -> dict[str, Any]:
    """Synthesize and write one pair; returns a partial-manifest entry."""
    try:
        result = synthesize_pair(pair_id, cfg, sources)
    except (FsidError, ValueError, ArithmeticError, IndexError, KeyError) as exc:
        logger.warning("Pair %d skipped: %s", pair_id, exc)
        return {"pair_id": pair_id, "skipped": f"{type(exc).__name__}: {exc}"}

    shard = shard_dir(pair_id, cfg.shard_size)
    clean_rel = f"{shard}/{pair_id:06d}_clean.raw"
    noisy_rel = f"{shard}/{pair_id:06d}_noisy.raw"
    clean_sum = write_image(out_dir / clean_rel, result.clean, cfg.black, cfg.white)
    noisy_sum = write_image(out_dir / noisy_rel, result.noisy, cfg.black, cfg.white)
    record = PairRecord(
        pair_id=pair_id,
        scene_seed=_hex(result.scene_seed),
        isp=result.isp.to_dict(),
        profile=result.profile.label,
        profile_index=cfg.profiles.index(result.profile),
        gain_scale=result.gain_scale,
        clean_path=clean_rel,
        clean_checksum=_hex(clean_sum),
        noisy_path=noisy_rel,
        noisy_checksum=_hex(noisy_sum),
        source=result.source,
    )
    return {"pair_id": pair_id, "record": record.to_dict()}


def _produce_pair_task(args: tuple[int, BuildConfig, Path, Sequence[Path] | None]) -> dict[str, Any]:
    return _produce_pair(*args)


def _record_intact(out_dir: Path, record: PairRecord) -> bool:
    for rel, checksum in ((record.clean_path, record.clean_checksum), (record.noisy_path, record.noisy_checksum)):
        path = out_dir / rel
        if not path.exists() or _hex(file_checksum(path)) != checksum:
            return False
    return True


def _resume_state(partial: Path, config_hash: str, out_dir: Path) -> dict[int, dict[str, Any]]:
    """Entries of an interrupted build with the same config whose files are still intact."""
    if not partial.exists():
        return {}
    lines = [line for line in partial.read_text().splitlines() if line.strip()]
    try:
        entries = [json.loads(line) for line in lines]
    except json.JSONDecodeError:
        # A crash can leave a truncated last line.
        entries = []
        for line in lines:
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError:
                break
    if not entries or entries[0].get("config_hash") != config_hash:
        logger.warning("Ignoring %s: written by a different build config", partial)
        return {}
    done = {}
    for entry in entries[1:]:
        if "record" in entry and not _record_intact(out_dir, PairRecord.from_dict(entry["record"])):
            continue
        done[int(entry["pair_id"])] = entry
    logger.info("Resuming build: %d pairs already done", len(done))
    return done


def _batches(items: list[int], size: int) -> list[list[int]]:
    return [items[i : i + size] for i in range(0, len(items), size)]


def build(cfg: BuildConfig, out_dir: Path, workers: int = 1) -> DatasetManifest:
    """
    Generate `cfg.count` clean/noisy pairs into sharded directories.

    Progress is appended to ``manifest.partial.jsonl`` so an interrupted
    build resumes where it stopped; the final ``manifest.jsonl`` is written
    last, atomically, and the partial file is then removed. Pairs whose
    synthesis fails at any stage are skipped, logged and counted in the
    manifest; I/O errors abort the build.

    Parameters
    ----------
    cfg : BuildConfig
        Validated build configuration.
    out_dir : Path
        Dataset root.
    workers : int
        Size of the process pool; 1 runs in the calling process.

    Returns
    -------
    DatasetManifest
        The manifest that was written.

    Raises
    ------
    DatasetBuildError
        On I/O failure; carries the path of the partial manifest.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    partial = out_dir / PARTIAL_NAME
    config_hash = cfg.config_hash()
    t0 = time.perf_counter()

    done = _resume_state(partial, config_hash, out_dir)
    pending = [p for p in range(cfg.count) if p not in done]
    sources = list_source_images(cfg.source_path) if cfg.source == "folder" else None

    try:
        with open(partial, "w") as log:
            log.write(json.dumps({"config_hash": config_hash}) + "\n")
            for entry in sorted(done.values(), key=lambda e: e["pair_id"]):
                log.write(json.dumps(entry, sort_keys=True) + "\n")
            log.flush()

            def record(entry: dict[str, Any]) -> None:
                done[entry["pair_id"]] = entry
                log.write(json.dumps(entry, sort_keys=True) + "\n")
                log.flush()

            if workers <= 1:
                for pair_id in pending:
                    record(_produce_pair(pair_id, cfg, out_dir, sources))
            else:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    for batch in _batches(pending, workers * BATCH_PER_WORKER):
                        tasks = [(p, cfg, out_dir, sources) for p in batch]
                        for entry in pool.map(_produce_pair_task, tasks):
                            record(entry)

        records = tuple(
            PairRecord.from_dict(done[p]["record"]) for p in sorted(done) if "record" in done[p]
        )
        skipped = tuple(SkippedPair(p, done[p]["skipped"]) for p in sorted(done) if "skipped" in done[p])
        manifest = DatasetManifest(
            config_hash, cfg.to_dict(), records, skipped, root=out_dir, config_dir=cfg.base_dir
        )
        manifest.write(out_dir / MANIFEST_NAME)
        partial.unlink()
    except OSError as exc:
        raise DatasetBuildError(f"Build aborted by I/O error: {exc}", recovery_path=partial) from exc

    elapsed = time.perf_counter() - t0
    logger.info(
        "Built %d pairs (%d skipped) in %.1fs (%.2f pairs/s)",
        len(records),
        len(skipped),
        elapsed,
        len(pending) / elapsed if elapsed > 0 else float("inf"),
    )
    return manifest


@dataclass(frozen=True)
class VerifyFailure:
    pair_id: int | None
    reason: str


@dataclass
class VerifyReport:
    manifest_path: Path
    pairs_checked: int
    spot_checked: tuple[int, ...]
    failures: list[VerifyFailure]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def failed_pairs(self) -> set[int]:
        return {f.pair_id for f in self.failures if f.pair_id is not None}


def _spot_check_ids(pair_ids: list[int], fraction: float) -> list[int]:
    if not pair_ids:
        return []
    n = max(1, math.ceil(fraction * len(pair_ids)))
    picks = np.unique(np.linspace(0, len(pair_ids) - 1, n).round().astype(int))
    return [pair_ids[i] for i in picks]


def verify(manifest_path: Path, spot_check_fraction: float = 0.01) -> VerifyReport:
    """
    Re-check a built dataset against its manifest.

    Checks every file's checksum, clean/noisy geometry and pattern agreement,
    that clean and noisy differ unless the pair's profile is zero-noise, and
    regenerates a spot-check share of clean frames from their recorded seeds
    to confirm they match bit for bit.

    Returns
    -------
    VerifyReport
        Itemized failures; `passed` is True when there are none.
    """
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    root = manifest.root
    failures: list[VerifyFailure] = []
    try:
        cfg = BuildConfig.from_dict(manifest.config, base_dir=manifest.config_dir or root)
    except (FsidError, ValueError, KeyError) as exc:
        failures.append(VerifyFailure(None, f"manifest config unreadable: {exc}"))
        return VerifyReport(manifest_path, 0, (), failures)
    if cfg.config_hash() != manifest.config_hash:
        failures.append(VerifyFailure(None, "config hash does not match embedded config"))

    seen: set[int] = set()
    intact_clean: list[int] = []
    for rec in manifest.records:
        if rec.pair_id in seen:
            failures.append(VerifyFailure(rec.pair_id, "duplicate pair id"))
            continue
        seen.add(rec.pair_id)

        present = True
        clean_ok = False
        for kind, rel, checksum in (
            ("clean", rec.clean_path, rec.clean_checksum),
            ("noisy", rec.noisy_path, rec.noisy_checksum),
        ):
            path = root / rel
            if not path.exists():
                failures.append(VerifyFailure(rec.pair_id, f"{kind} file missing: {rel}"))
                present = False
                continue
            if _hex(file_checksum(path)) != checksum:
                failures.append(VerifyFailure(rec.pair_id, f"{kind} checksum mismatch: {rel}"))
            elif kind == "clean":
                clean_ok = True
        if not present:
            continue

        clean_path, noisy_path = root / rec.clean_path, root / rec.noisy_path
        try:
            clean_head, noisy_head = read_header(clean_path), read_header(noisy_path)
        except RawFormatError as exc:
            failures.append(VerifyFailure(rec.pair_id, f"unreadable header: {exc}"))
            continue
        if (clean_head.width, clean_head.height) != (noisy_head.width, noisy_head.height):
            failures.append(VerifyFailure(rec.pair_id, "clean and noisy geometry differ"))
        if clean_head.pattern_code != noisy_head.pattern_code:
            failures.append(VerifyFailure(rec.pair_id, "clean and noisy CFA patterns differ"))

        if not 0 <= rec.profile_index < len(cfg.profiles):
            failures.append(VerifyFailure(rec.pair_id, f"unknown profile index {rec.profile_index}"))
        elif (
            not cfg.profiles[rec.profile_index].is_zero_noise
            and clean_path.read_bytes() == noisy_path.read_bytes()
        ):
            failures.append(VerifyFailure(rec.pair_id, "pair identical under nonzero profile"))
        if clean_ok:
            intact_clean.append(rec.pair_id)

    spot = _spot_check_ids(intact_clean, spot_check_fraction)
    by_id = {rec.pair_id: rec for rec in manifest.records}
    sources = list_source_images(cfg.source_path) if cfg.source == "folder" else None
    for pair_id in spot:
        frame = render_clean(pair_id, cfg, sources)
        regenerated = _hex(fnv1a64(encode_bayer(frame.clean, cfg.black, cfg.white)))
        if regenerated != by_id[pair_id].clean_checksum:
            failures.append(VerifyFailure(pair_id, "clean frame does not match regeneration from its seed"))

    report = VerifyReport(manifest_path, len(manifest.records), tuple(spot), failures)
    logger.info(
        "Verified %d pairs (%d regenerated): %s",
        report.pairs_checked,
        len(spot),
        "pass" if report.passed else f"{len(failures)} failures",
    )
    return report


def summarize_build(manifest: DatasetManifest) -> str:
    totals = manifest.totals
    lines = [
        "=" * 60,
        "Dataset Build",
        "=" * 60,
        "",
        f"  Root:                  {manifest.root}",
        f"  Config Hash:           {manifest.config_hash}",
        f"  Pairs Requested:       {totals['requested']:,}",
        f"  Pairs Written:         {totals['written']:,}",
        f"  Pairs Skipped:         {totals['skipped']:,}",
        f"  Clamp Policy:          {manifest.clamp_policy}",
        "",
        "=" * 60,
    ]
    return "\n".join(lines)


def summarize_verify(report: VerifyReport) -> str:
    lines = [
        "=" * 60,
        "Dataset Verification",
        "=" * 60,
        "",
        f"  Manifest:              {report.manifest_path}",
        f"  Pairs Checked:         {report.pairs_checked:,}",
        f"  Pairs Regenerated:     {len(report.spot_checked)}",
        f"  Result:                {'PASS' if report.passed else 'FAIL'}",
    ]
    if report.failures:
        lines += ["", "Failures:"]
        for failure in report.failures:
            who = f"pair {failure.pair_id}" if failure.pair_id is not None else "manifest"
            lines.append(f"  [{who}] {failure.reason}")
    lines += ["", "=" * 60]
    return "\n".join(lines)


def require_manifest(path: Path) -> Path:
    """Accept a dataset directory or a manifest path."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise ConfigurationError(f"No manifest at {path}.")
    return path
