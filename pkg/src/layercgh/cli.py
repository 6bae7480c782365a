"""Command-line front end.

Every subcommand reads an optional YAML config (``--config``) with three
sections, ``optical``, ``scene`` and ``run``, and accepts ``--set
section.key=value`` overrides plus a few shortcut flags. The resolved config
is written next to the outputs as ``run.json``.

Exit codes: 0 success, 2 bad flags, 3 invalid configuration, 4 missing
input, 5 malformed file, 6 scene or processing error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import storage
from .encoding import dpac_encode, off_axis_ramp, write_phase_png
from .fields import ConfigError, DomainError, OpticalConfig, compute_z_max, table_depth_range
from .generation import Method
from .layering import SceneError
from .pipeline import (
    CHANNEL_NAMES,
    evaluate_all,
    make_suite,
    run_method,
    scene_seed,
    summarize,
)
from .propagation import Padding, PropagationOptions
from .quality import focal_stack, format_metric
from .scenes import ParamsError, SceneParams

log = logging.getLogger("layercgh")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_FORMAT = 5
EXIT_PROCESSING = 6

SUMMARY_FIELDS = ["method", "channel", "metric", "min", "avg", "max"]


class MissingInputError(FileNotFoundError):
    pass


@dataclass
class RunConfig:
    optical: OpticalConfig = field(default_factory=OpticalConfig)
    scene: SceneParams = field(default_factory=SceneParams)
    propagation: PropagationOptions = field(default_factory=PropagationOptions)
    method: str = "ap"
    n_samples: int = 4
    seed: int = 0
    workers: int = 1
    fip_layers: int | None = None

    def to_dict(self) -> dict:
        return {
            "optical": self.optical.to_dict(),
            "scene": self.scene.to_dict(),
            "propagation": {
                "padding": self.propagation.padding.value,
                "band_limited": self.propagation.band_limited,
                "ringing_correction": self.propagation.ringing_correction,
                "fft_shift": self.propagation.fft_shift,
            },
            "run": {
                "method": self.method,
                "n_samples": self.n_samples,
                "seed": self.seed,
                "workers": self.workers,
                "fip_layers": self.fip_layers,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        unknown = set(d) - {"optical", "scene", "propagation", "run"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        optical = dict(d.get("optical") or {})
        resolution = optical.pop("resolution", None)
        if resolution is not None:
            optical = {"width": resolution, "height": resolution, **optical}
            optical.setdefault("depth_range", table_depth_range(int(resolution)))
        prop = d.get("propagation") or {}
        bad = set(prop) - {"padding", "band_limited", "ringing_correction", "fft_shift"}
        if bad:
            raise ConfigError(f"unknown propagation keys: {sorted(bad)}")
        run = dict(d.get("run") or {})
        bad = set(run) - {"method", "n_samples", "seed", "workers", "fip_layers"}
        if bad:
            raise ConfigError(f"unknown run keys: {sorted(bad)}")
        try:
            cfg = cls(
                optical=OpticalConfig.from_dict(optical),
                scene=SceneParams.from_dict(d.get("scene") or {}),
                propagation=PropagationOptions(**prop),
                **run,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        try:
            Method(self.method)
        except ValueError:
            raise ConfigError(f"unknown method {self.method!r}") from None
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.fip_layers is not None and self.fip_layers < 1:
            raise ConfigError("fip_layers must be >= 1")


def _set_nested(d: dict, dotted: str) -> None:
    if "=" not in dotted:
        raise ConfigError(f"override {dotted!r} is not key=value")
    key, _, value = dotted.partition("=")
    parts = key.split(".")
    if len(parts) != 2:
        raise ConfigError(f"override key {key!r} must be section.key")
    d.setdefault(parts[0], {})
    d[parts[0]][parts[1]] = yaml.safe_load(value)


def load_run_config(args) -> RunConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise MissingInputError(f"config file {path} not found")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    shortcuts = {
        "resolution": ("optical", "resolution"),
        "layers": ("optical", "n_layers"),
        "depth_range": ("optical", "depth_range"),
        "padding": ("propagation", "padding"),
        "method": ("run", "method"),
        "n": ("run", "n_samples"),
        "seed": ("run", "seed"),
        "workers": ("run", "workers"),
        "fip_layers": ("run", "fip_layers"),
    }
    for attr, (section, key) in shortcuts.items():
        value = getattr(args, attr, None)
        if value is not None:
            raw.setdefault(section, {})
            if attr == "resolution":
                raw[section].pop("width", None)
                raw[section].pop("height", None)
            raw[section][key] = value
    for item in getattr(args, "set", None) or []:
        _set_nested(raw, item)
    if "workers" not in (raw.get("run") or {}):
        raw.setdefault("run", {})["workers"] = os.cpu_count() or 1
    return RunConfig.from_dict(raw)


def _write_json(path: Path, obj) -> None:
    with storage.atomic_write(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_csv(path: Path, rows: list[dict], fields: list[str]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    with storage.atomic_write(path, "w") as fh:
        fh.write(buf.getvalue())


def _require_dir(path) -> Path:
    path = Path(path)
    if not (path / storage.MANIFEST_NAME).exists():
        raise MissingInputError(f"{path} has no {storage.MANIFEST_NAME}")
    return path


def _load_frames(frames_dir: Path, config: OpticalConfig | None = None):
    records = storage.read_manifest(frames_dir)
    frames = []
    for rec in records:
        optical = OpticalConfig.from_dict(rec["optical"]) if config is None else config
        frames.append(storage.load_frame(frames_dir, rec["files"], optical))
    return records, frames


# subcommands -------------------------------------------------------------


def cmd_zmax(args, cfg: RunConfig) -> int:
    optical = cfg.optical
    for c, wl in enumerate(optical.wavelengths):
        z = compute_z_max(optical, c)
        print(f"channel {c} ({wl * 1e9:.0f} nm): z_max = {z * 1e3:.2f} mm")
    print(f"depth_range = {optical.depth_range * 1e3:.4f} mm")
    return EXIT_OK


def _scenegen(cfg: RunConfig, out: Path) -> tuple[list[dict], list]:
    suite = make_suite(cfg.optical, cfg.scene, cfg.n_samples, cfg.seed, cfg.workers)
    records = []
    for sid, seed, frame in suite:
        files = storage.save_frame(out, sid, frame)
        records.append(
            {
                "sample_id": sid,
                "seed": seed,
                "config_hash": cfg.optical.config_hash(),
                "generator": None,
                "optical": cfg.optical.to_dict(),
                "scene": cfg.scene.replace(seed=seed).to_dict(),
                "files": files,
                "metrics": None,
            }
        )
    return records, [f for _, _, f in suite]


def cmd_scenegen(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    if (out / storage.MANIFEST_NAME).exists():
        (out / storage.MANIFEST_NAME).unlink()
    records, _ = _scenegen(cfg, out)
    storage.write_manifest(out, records)
    _write_json(out / "run.json", cfg.to_dict())
    log.info("wrote %d frames to %s", len(records), out)
    return EXIT_OK


def cmd_generate(args, cfg: RunConfig) -> int:
    frames_dir = _require_dir(args.frames)
    out = Path(args.out)
    method = Method(cfg.method)
    frame_records, frames = _load_frames(frames_dir)
    if args.layers is not None or args.depth_range is not None:
        frames = [f.with_config(_override_optical(f.config, args)) for f in frames]
    samples = run_method(frames, method, cfg.propagation, cfg.workers,
                         [r["sample_id"] for r in frame_records])
    if (out / storage.MANIFEST_NAME).exists():
        (out / storage.MANIFEST_NAME).unlink()
    records = []
    for rec, frame, sample in zip(frame_records, frames, samples):
        name = f"{rec['sample_id']}_{method.value}.kcgh"
        storage.save_hologram(out / name, sample.holograms)
        records.append(
            {
                "sample_id": rec["sample_id"],
                "seed": rec["seed"],
                "config_hash": frame.config.config_hash(),
                "generator": method.value,
                "optical": frame.config.to_dict(),
                "n_layers": sample.n_layers,
                "files": {"hologram": name, "frames_dir": os.path.relpath(frames_dir.resolve(), out.resolve()),
                          **{f"frame_{k}": v for k, v in rec["files"].items()}},
                "metrics": None,
            }
        )
    storage.write_manifest(out, records)
    _write_json(out / "run.json", cfg.to_dict())
    log.info("generated %d %s holograms in %s", len(records), method.value, out)
    return EXIT_OK


def _override_optical(config: OpticalConfig, args) -> OpticalConfig:
    changes = {}
    if getattr(args, "layers", None) is not None:
        changes["n_layers"] = args.layers
    if getattr(args, "depth_range", None) is not None:
        changes["depth_range"] = args.depth_range
    return config.replace(**changes)


def _load_holograms(holo_dir: Path, frames_dir: Path | None):
    from .generation import HologramSample

    records = storage.read_manifest(holo_dir)
    samples, frames = [], []
    for rec in records:
        optical = OpticalConfig.from_dict(rec["optical"])
        fdir = frames_dir or holo_dir / rec["files"]["frames_dir"]
        frame_files = {k[len("frame_"):]: v for k, v in rec["files"].items() if k.startswith("frame_")}
        for path in [holo_dir / rec["files"]["hologram"]] + [fdir / v for v in frame_files.values()]:
            if not path.exists():
                raise MissingInputError(f"{path} not found")
        frames.append(storage.load_frame(fdir, frame_files, optical))
        holograms = storage.load_hologram(holo_dir / rec["files"]["hologram"])
        samples.append(HologramSample(holograms, Method(rec["generator"]), optical,
                                      rec["n_layers"], rec["seed"], rec["sample_id"]))
    return records, samples, frames


def _summary_outputs(out: Path, rows, stem: str = "metrics", extra: dict | None = None) -> None:
    dict_rows = [{**(extra or {}), **r.as_dict()} for r in rows]
    fields = list((extra or {}).keys()) + SUMMARY_FIELDS
    _write_csv(out / f"{stem}.csv", dict_rows, fields)
    _write_json(out / f"{stem}.json", dict_rows)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    holo_dir = _require_dir(args.holograms)
    frames_dir = Path(args.frames) if args.frames else None
    records, samples, frames = _load_holograms(holo_dir, frames_dir)
    metrics = evaluate_all(samples, frames, cfg.fip_layers, cfg.propagation, cfg.workers)
    out = Path(args.out) if args.out else holo_dir
    per_sample = []
    for rec in metrics:
        for c, (p, s) in enumerate(zip(rec.psnr_fip, rec.ssim_fip)):
            per_sample.append({"sample_id": rec.sample_id, "method": rec.method,
                               "channel": CHANNEL_NAMES[c] if len(rec.psnr_fip) == 3 else str(c),
                               "psnr": format_metric(p), "ssim": s})
    _write_csv(out / "samples.csv", per_sample, ["sample_id", "method", "channel", "psnr", "ssim"])
    rows = summarize(metrics)
    _summary_outputs(out, rows)
    _write_json(out / "records.json", [m.to_dict() for m in metrics])
    print(_format_table(rows))
    return EXIT_OK


def _format_table(rows) -> str:
    lines = [f"{'method':<8}{'channel':<8}{'metric':<7}{'min':>9}{'avg':>9}{'max':>9}"]
    for r in rows:
        lines.append(f"{r.method:<8}{r.channel:<8}{r.metric:<7}{r.min:>9.4f}{r.avg:>9.4f}{r.max:>9.4f}")
    return "\n".join(lines)


def _optical_for_hologram(path: Path, cfg: RunConfig, optical_from) -> OpticalConfig:
    """Optical config of a stored hologram: explicit file, its manifest, or the run config."""
    if optical_from:
        return OpticalConfig.from_dict(json.loads(Path(optical_from).read_text())["optical"])
    if (path.parent / storage.MANIFEST_NAME).exists():
        for rec in storage.read_manifest(path.parent):
            if rec.get("files", {}).get("hologram") == path.name:
                return OpticalConfig.from_dict(rec["optical"])
    return cfg.optical


def cmd_reconstruct(args, cfg: RunConfig) -> int:
    path = Path(args.hologram)
    if not path.exists():
        raise MissingInputError(f"{path} not found")
    holograms = storage.load_hologram(path)
    optical = _optical_for_hologram(path, cfg, args.optical_from)
    if args.z:
        z_list = list(args.z)
    else:
        n = args.stack or 8
        z_list = list(np.linspace(0, optical.depth_range, n))
    out = Path(args.out)
    names = []
    for j, z in enumerate(z_list):
        planes = [focal_stack(h, [z], optical, c, cfg.propagation)[0] for c, h in enumerate(holograms)]
        img = np.stack(planes, axis=-1) if len(planes) == 3 else planes[0]
        name = f"recon_{j:03d}_{z * 1e3:.4f}mm.pfm"
        storage.write_pfm(out / name, img)
        names.append({"index": j, "z": z, "file": name})
    _write_json(out / "stack.json", names)
    return EXIT_OK


def cmd_encode(args, cfg: RunConfig) -> int:
    path = Path(args.hologram)
    if not path.exists():
        raise MissingInputError(f"{path} not found")
    holograms = storage.load_hologram(path)
    optical = _optical_for_hologram(path, cfg, None)
    out = Path(args.out)
    meta = []
    for c, h in enumerate(holograms):
        carrier = off_axis_ramp(optical, c, args.angle, args.axis) if args.angle else None
        poh = dpac_encode(h, carrier, args.angle, args.axis)
        stem = f"{path.stem}_c{c}"
        with storage.atomic_write(out / f"{stem}.png") as fh:
            write_phase_png(fh, poh)
        storage.write_container(out / f"{stem}_phase.kcgh", storage.normalize_phase(poh.phase),
                                storage.Kind.PHASE)
        meta.append({"channel": c, "normalization": poh.normalization,
                     "carrier_angle_deg": args.angle, "carrier_axis": args.axis,
                     "png": f"{stem}.png", "phase": f"{stem}_phase.kcgh",
                     "png_mapping": "level = round((phase + pi) / (2 pi) * 65535)"})
    _write_json(out / f"{path.stem}_dpac.json", meta)
    return EXIT_OK


def _parse_values(axis: str, text: str):
    items = [t for t in text.split(",") if t]
    if axis == "n_layers":
        return [int(t) for t in items]
    if axis == "depth_range":
        return [float(t) for t in items]
    if axis == "padding":
        return [Padding(t).value for t in items]
    raise ConfigError(f"unknown sweep axis {axis!r}")


def sweep_fip_layers(axis: str, values, cfg: RunConfig) -> int | None:
    """FIP grid for a sweep.

    Along ``n_layers`` every hologram is scored on the finest grid of the
    sweep so all points share one evaluation reference.
    """
    if cfg.fip_layers is not None:
        return cfg.fip_layers
    if axis == "n_layers":
        return max(values)
    return None


def cmd_sweep(args, cfg: RunConfig) -> int:
    axis = args.axis
    values = _parse_values(axis, args.values)
    out = Path(args.out)
    methods = [Method(m) for m in (args.methods.split(",") if args.methods else [cfg.method])]
    base = make_suite(cfg.optical, cfg.scene, cfg.n_samples, cfg.seed, cfg.workers)
    ids = [sid for sid, _, _ in base]
    fip_layers = sweep_fip_layers(axis, values, cfg)
    all_rows = []
    for value in values:
        optical, options = cfg.optical, cfg.propagation
        if axis == "n_layers":
            optical = optical.replace(n_layers=value)
        elif axis == "depth_range":
            optical = optical.replace(depth_range=value)
        else:
            options = PropagationOptions(value, options.band_limited, options.ringing_correction,
                                         options.fft_shift)
        frames = [f.with_config(optical) for _, _, f in base]
        for method in methods:
            samples = run_method(frames, method, options, cfg.workers, ids)
            metrics = evaluate_all(samples, frames, fip_layers, options, cfg.workers)
            for row in summarize(metrics):
                all_rows.append({"axis": axis, "value": value, **row.as_dict()})
            log.info("%s=%s %s done", axis, value, method.value)
    fields = ["axis", "value"] + SUMMARY_FIELDS
    _write_csv(out / "sweep.csv", all_rows, fields)
    _write_json(out / "sweep.json", all_rows)
    _write_json(out / "run.json", {**cfg.to_dict(), "sweep": {"axis": axis, "values": values,
                                                             "fip_layers": fip_layers,
                                                             "seeds": [scene_seed(cfg.seed, i) for i in range(len(ids))]}})
    for r in all_rows:
        if r["channel"] == "mean":
            print(f"{axis}={r['value']} {r['method']} {r['metric']}: "
                  f"min {r['min']} avg {r['avg']} max {r['max']}")
    return EXIT_OK


# parser ------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config with optical/scene/propagation/run sections")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--resolution", type=int, help="square hologram size in pixels")
    p.add_argument("--layers", type=int, help="number of depth layers")
    p.add_argument("--depth-range", dest="depth_range", type=float, help="depth range in meters")
    p.add_argument("--padding", choices=[m.value for m in Padding])
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="parallel samples (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layercgh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("zmax", help="print the angular spectrum distance bound per channel")
    _common(p)

    p = sub.add_parser("scenegen", help="synthesize RGB-D frames")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("-n", type=int, help="number of frames")

    p = sub.add_parser("generate", help="frames -> holograms")
    _common(p)
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=[m.value for m in Method])

    p = sub.add_parser("evaluate", help="score holograms with FIP PSNR/SSIM")
    _common(p)
    p.add_argument("--holograms", required=True)
    p.add_argument("--frames", help="frame directory (default: the one recorded at generation)")
    p.add_argument("--out", help="output directory (default: the hologram directory)")
    p.add_argument("--fip-layers", dest="fip_layers", type=int)

    p = sub.add_parser("reconstruct", help="focal-stack reconstructions as PFM")
    _common(p)
    p.add_argument("--hologram", required=True, help="KCGH complex container")
    p.add_argument("--out", required=True)
    p.add_argument("--optical-from", help="run.json whose optical section describes the hologram")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--z", type=float, nargs="+", help="distances in meters")
    g.add_argument("--stack", type=int, help="number of evenly spaced planes over the depth range")

    p = sub.add_parser("encode", help="double-phase encode a hologram")
    _common(p)
    p.add_argument("--hologram", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--angle", type=float, default=0.0, help="off-axis carrier angle in degrees")
    p.add_argument("--axis", choices=["x", "y"], default="x")

    p = sub.add_parser("sweep", help="parameter sweep with aggregated min/avg/max table")
    _common(p)
    p.add_argument("--axis", required=True, choices=["depth_range", "n_layers", "padding"])
    p.add_argument("--values", required=True, help="comma separated axis values")
    p.add_argument("--out", required=True)
    p.add_argument("-n", type=int, help="number of scenes")
    p.add_argument("--method")
    p.add_argument("--methods", help="comma separated methods (overrides --method)")
    p.add_argument("--fip-layers", dest="fip_layers", type=int)
    return parser


COMMANDS = {
    "zmax": cmd_zmax,
    "scenegen": cmd_scenegen,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "reconstruct": cmd_reconstruct,
    "encode": cmd_encode,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_run_config(args)
        return COMMANDS[args.command](args, cfg)
    except MissingInputError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except storage.FormatError as exc:
        print(f"error: malformed file: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ConfigError, ParamsError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SceneError, DomainError, storage.ValidationError) as exc:
        print(f"error: processing failed: {exc}", file=sys.stderr)
        return EXIT_PROCESSING


if __name__ == "__main__":
    sys.exit(main())
