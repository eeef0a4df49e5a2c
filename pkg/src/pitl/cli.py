"""Command-line front end: attack runs, optimizer benchmarks, metric
re-evaluation and synthetic scene generation.

Exit codes: 0 success, 1 configuration/usage error, 2 victim failure (for
`bench`: 2 means the precision target was not reached within budget).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, netpbm, scenegen
from .attack import (
    AttackAborted,
    AttackConfig,
    CheckpointMismatch,
    fingerprint,
    load_checkpoint,
    resume_attack,
    run_attack,
    save_checkpoint,
)
from .benchmarks import SUITES, TARGETS
from .metrics import objective, presence_rate
from .optimizer import StrategyParams, minimize
from .scene import (
    DegenerateSceneError,
    DepthMap,
    RegionMask,
    SceneModel,
    compose_projection,
    pattern_to_light,
)
from .victim import VictimDescriptor, build_victim, estimate_depth

log = logging.getLogger("pitl.cli")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VICTIM = 2


class ConfigError(ValueError):
    """Bad run configuration (wrong keys, missing files, invalid values)."""


# --------------------------------------------------------------------------
# config file handling


def _require_keys(section: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing key(s) in {where}: {sorted(missing)}")


class RunConfig:
    """A fully loaded and validated run configuration.

    All referenced files are read at load time, so a bad path fails before
    any output is produced. `config_hash` covers the raw config bytes plus
    the content of every referenced file.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        if not self.path.is_file():
            raise ConfigError(f"config file not found: {self.path}")
        raw_bytes = self.path.read_bytes()
        try:
            raw = json.loads(raw_bytes)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _require_keys(raw, {"scene", "victim", "attack", "output"}, {"scene", "victim", "attack"}, "config")
        self.raw = raw
        self._base = self.path.parent
        self._referenced: dict[str, bytes] = {}

        self.scene = self._load_scene(raw["scene"])
        self.victim_descriptor = self._load_victim(raw["victim"])
        self.attack_config = self._load_attack(raw["attack"])
        self.output = self._load_output(raw.get("output", {}))

        digest = hashlib.sha256(raw_bytes)
        for key in sorted(self._referenced):
            digest.update(key.encode("utf-8"))
            digest.update(self._referenced[key])
        self.config_hash = digest.hexdigest()
        self.file_hashes = {
            key: hashlib.sha256(data).hexdigest() for key, data in sorted(self._referenced.items())
        }

    # -- helpers ------------------------------------------------------------

    def _file(self, key: str, rel: str) -> Path:
        p = self._base / rel
        if not p.is_file():
            raise ConfigError(f"{key}: referenced file not found: {p}")
        self._referenced[f"{key}:{rel}"] = p.read_bytes()
        return p

    def _load_scene(self, section) -> SceneModel:
        allowed = {
            "reflectance", "depth_orig", "depth_back", "region", "cell_grid",
            "ambient", "noise_stddev", "presence_region",
        }
        required = {"reflectance", "depth_orig", "depth_back", "region", "cell_grid"}
        _require_keys(section, allowed, required, "scene section")
        try:
            reflectance = netpbm.read_ppm(self._file("scene.reflectance", section["reflectance"]))
            depth_orig = DepthMap(netpbm.read_pfm(self._file("scene.depth_orig", section["depth_orig"])))
            depth_back = DepthMap(netpbm.read_pfm(self._file("scene.depth_back", section["depth_back"])))
            member = netpbm.read_pgm(self._file("scene.region", section["region"])) > 0
        except ConfigError:
            raise
        except (netpbm.NetpbmError, ValueError) as exc:
            raise ConfigError(f"scene file: {exc}") from exc
        grid = section["cell_grid"]
        if not (isinstance(grid, list) and len(grid) == 2 and all(isinstance(v, int) and v >= 1 for v in grid)):
            raise ConfigError("scene.cell_grid must be [rows, cols] with positive integers")
        ambient = section.get("ambient", 0.4)
        if isinstance(ambient, str):
            ambient = netpbm.read_ppm(self._file("scene.ambient", ambient))
        elif isinstance(ambient, list):
            if len(ambient) != 3:
                raise ConfigError("scene.ambient list must have 3 entries")
            ambient = np.broadcast_to(np.asarray(ambient, dtype=np.float64), reflectance.shape).copy()
        elif not isinstance(ambient, (int, float)):
            raise ConfigError("scene.ambient must be a number, [r,g,b], or a PPM path")
        noise = section.get("noise_stddev", 0.01)
        if not isinstance(noise, (int, float)) or noise < 0:
            raise ConfigError("scene.noise_stddev must be a non-negative number")

        self.presence_region = None
        if section.get("presence_region") is not None:
            pm = netpbm.read_pgm(self._file("scene.presence_region", section["presence_region"])) > 0
            try:
                self.presence_region = RegionMask(pm, 1, 1)
            except ValueError as exc:
                raise ConfigError(f"scene.presence_region: {exc}") from exc

        try:
            scene = SceneModel(
                reflectance=reflectance,
                ambient=float(ambient) if isinstance(ambient, (int, float)) else ambient,
                depth_orig=depth_orig,
                depth_back=depth_back,
                region=RegionMask(member, grid[0], grid[1]),
                noise_stddev=float(noise),
            )
            scene.validate()
        except (DegenerateSceneError, ValueError) as exc:
            raise ConfigError(f"scene: {exc}") from exc
        return scene

    def _load_victim(self, section) -> VictimDescriptor:
        if not isinstance(section, dict) or "kind" not in section:
            raise ConfigError("victim section must be an object with a 'kind'")
        kind = section["kind"]
        try:
            if kind == "constant":
                _require_keys(section, {"kind", "value"}, {"kind", "value"}, "victim section")
                return VictimDescriptor("constant", {"value": section["value"]})
            if kind == "brightness_biased":
                _require_keys(section, {"kind", "gain", "mask"}, {"kind"}, "victim section")
                params = {"gain": section.get("gain", 1.0)}
                if section.get("mask") is not None:
                    params["mask"] = netpbm.read_pgm(self._file("victim.mask", section["mask"])) > 0
                return VictimDescriptor("brightness_biased", params)
            if kind == "patch_linear":
                _require_keys(section, {"kind", "params", "seed"}, {"kind"}, "victim section")
                if "params" in section:
                    blob = json.loads(self._file("victim.params", section["params"]).read_text())
                    entry = blob.get("patch_linear", blob)
                    return VictimDescriptor(
                        "patch_linear",
                        {"weights": entry["weights"], "bias": entry["bias"]},
                    )
                return VictimDescriptor("patch_linear", {"seed": section.get("seed", 0)})
            if kind == "external":
                _require_keys(section, {"kind", "command", "timeout_s"}, {"kind", "command"}, "victim section")
                return VictimDescriptor(
                    "external",
                    command=section["command"],
                    timeout=section.get("timeout_s", 60.0),
                )
        except (ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"victim section: {exc}") from exc
        raise ConfigError(f"unknown victim kind {kind!r}")

    def _load_attack(self, section) -> AttackConfig:
        allowed = {"g_max", "seed", "sigma0", "mean0", "lambda", "target", "revalidate"}
        _require_keys(section, allowed, {"g_max", "seed"}, "attack section")
        target = section.get("target", "background")
        if isinstance(target, str) and target != "background":
            try:
                target = DepthMap(netpbm.read_pfm(self._file("attack.target", target)))
            except (netpbm.NetpbmError, ValueError) as exc:
                raise ConfigError(f"attack.target: {exc}") from exc
        cfg = AttackConfig(
            g_max=section["g_max"],
            seed=section["seed"],
            victim=self.victim_descriptor,
            sigma0=section.get("sigma0", 1.0),
            lambda_override=section.get("lambda"),
            mean0=section.get("mean0", "max_rgb"),
            target=target,
            presence_region=self.presence_region,
            revalidate=section.get("revalidate", 0),
        )
        try:
            cfg.validate()
        except ValueError as exc:
            raise ConfigError(f"attack section: {exc}") from exc
        return cfg

    def _load_output(self, section) -> dict:
        _require_keys(section, {"save_previews"}, set(), "output section")
        return {"save_previews": bool(section.get("save_previews", True))}


# --------------------------------------------------------------------------
# attack artifacts


def _write_trace(path: Path, trace) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["generation", "eval_count", "f_best_gen", "f_best_so_far", "e_best_gen", "wall_ms"])
        for r in trace:
            writer.writerow(
                [r.generation, r.eval_count, repr(r.f_best_gen), repr(r.f_best_so_far),
                 repr(r.e_best_gen), f"{r.wall_ms:.3f}"]
            )


def _write_manifest(path: Path, run_config: RunConfig, scene: SceneModel, extra: dict) -> None:
    manifest = {
        "tool_version": __version__,
        "config_path": str(run_config.path),
        "config": run_config.raw,
        "config_hash": run_config.config_hash,
        "referenced_files": run_config.file_hashes,
        "fingerprint": fingerprint(run_config.attack_config, scene),
        "seed": run_config.attack_config.seed,
    }
    manifest.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_attack_artifacts(out: Path, run_config: RunConfig, scene: SceneModel, result) -> None:
    _write_trace(out / "trace.csv", result.trace)
    cells = result.best_pattern.cells
    for i, channel in enumerate("rgb"):
        netpbm.write_pfm(out / f"delta_star_{channel}.pfm", cells[:, :, i])
    netpbm.write_pfm(out / "depth_adversarial.pfm", result.best_depth.values)

    victim = build_victim(run_config.victim_descriptor, scene)
    try:
        benign = scene.benign_image()
        depth_benign = estimate_depth(victim, benign)
    finally:
        if hasattr(victim, "close"):
            victim.close()
    netpbm.write_pfm(out / "depth_benign.pfm", depth_benign.values)

    if run_config.output["save_previews"]:
        light = pattern_to_light(result.best_pattern)
        adversarial = compose_projection(scene, result.best_pattern, rng=None, noise=False)
        netpbm.write_png(out / "delta_light.png", light)
        netpbm.write_png(out / "capture_benign.png", benign.pixels)
        netpbm.write_png(out / "capture_adversarial.png", adversarial.pixels)

    summary = {
        "best_objective": result.best_objective,
        "best_presence_rate": result.best_presence_rate,
        "best_generation": result.best_generation,
        "eval_count": result.trace[-1].eval_count if result.trace else 0,
        "dimension": result.dimension,
        "population": result.population,
        "generations": len(result.trace),
        "revalidation": result.revalidation,
        "aborted": False,
    }
    _write_manifest(out / "manifest.json", run_config, scene, summary)


def cmd_attack(args) -> int:
    try:
        run_config = RunConfig(Path(args.config))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    scene = run_config.scene
    out = Path(args.out)
    checkpoint = None
    if args.resume:
        try:
            checkpoint = load_checkpoint(args.resume)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read checkpoint: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    out.mkdir(parents=True, exist_ok=True)
    try:
        if checkpoint is not None:
            result = resume_attack(checkpoint, run_config.attack_config, scene)
        else:
            result = run_attack(run_config.attack_config, scene)
    except CheckpointMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AttackAborted as exc:
        save_checkpoint(out / "checkpoint.json", exc.checkpoint)
        _write_trace(out / "trace.csv", exc.trace)
        _write_manifest(
            out / "manifest.json", run_config, scene,
            {"aborted": True, "error": str(exc),
             "completed_generation": exc.checkpoint["completed_generation"],
             "eval_count": exc.checkpoint["eval_count"]},
        )
        print(f"error: {exc}\ncheckpoint written to {out / 'checkpoint.json'}", file=sys.stderr)
        return EXIT_VICTIM

    _write_attack_artifacts(out, run_config, scene, result)
    log.info(
        "attack finished: f*=%.6g e*=%.4f (generation %d, %d evaluations)",
        result.best_objective, result.best_presence_rate,
        result.best_generation, result.trace[-1].eval_count,
    )
    print(json.dumps({
        "f": result.best_objective,
        "e": result.best_presence_rate,
        "generations": len(result.trace),
        "out": str(out),
    }))
    return EXIT_OK


# --------------------------------------------------------------------------
# bench / eval / make-scene


def cmd_bench(args) -> int:
    if args.suite not in SUITES:
        print(f"error: unknown suite {args.suite!r}, expected one of {sorted(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    if args.n < 2:
        print("error: bench requires n >= 2", file=sys.stderr)
        return EXIT_CONFIG
    fn = SUITES[args.suite]
    target = TARGETS[args.suite]
    lam = StrategyParams.defaults(args.n).lam
    writer = csv.writer(sys.stdout)
    writer.writerow(["generation", "evaluations", "f_best_gen", "f_best_so_far"])

    def emit(gen, f_gen, f_best):
        writer.writerow([gen, gen * lam, repr(f_gen), repr(f_best)])

    _, best_f, history = minimize(
        fn, np.full(args.n, 3.0), 1.0, args.seed, args.budget, target=target, callback=emit
    )
    reached = best_f < target
    print(
        f"{args.suite} n={args.n}: best f = {best_f:.3e} after {len(history)} generations "
        f"(target {target:.0e} {'reached' if reached else 'NOT reached'})",
        file=sys.stderr,
    )
    return EXIT_OK if reached else EXIT_VICTIM


def cmd_eval(args) -> int:
    try:
        d_est = DepthMap(netpbm.read_pfm(args.est))
        d_orig = DepthMap(netpbm.read_pfm(args.orig))
        d_back = DepthMap(netpbm.read_pfm(args.back))
        d_tgt = DepthMap(netpbm.read_pfm(args.tgt)) if args.tgt else d_back
        member = netpbm.read_pgm(args.region) > 0
        region = RegionMask(member, 1, 1)
        presence_region = region
        if args.presence_region:
            presence_region = RegionMask(netpbm.read_pgm(args.presence_region) > 0, 1, 1)
        f_value = objective(d_est, d_tgt, region)
        e_value = presence_rate(d_est, d_orig, d_back, presence_region)
    except (OSError, netpbm.NetpbmError, DegenerateSceneError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"f": f_value, "e": e_value, "region_pixels": region.pixel_count}))
    return EXIT_OK


def cmd_make_scene(args) -> int:
    try:
        generated = scenegen.generate_scene(args.preset, args.size, args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    netpbm.write_ppm(out / "reflectance.ppm", generated.reflectance)
    netpbm.write_pfm(out / "depth_orig.pfm", generated.depth_orig)
    netpbm.write_pfm(out / "depth_back.pfm", generated.depth_back)
    netpbm.write_pgm(out / "region.pgm", generated.region_mask.astype(np.uint8) * 255)
    with open(out / "victim_params.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "patch_linear": {
                    "weights": generated.patch_weights.reshape(-1).tolist(),
                    "bias": generated.patch_bias,
                },
                "brightness_biased": {"gain": 1.0},
            },
            f, indent=2,
        )
        f.write("\n")
    config = {
        "scene": {
            "reflectance": "reflectance.ppm",
            "depth_orig": "depth_orig.pfm",
            "depth_back": "depth_back.pfm",
            "region": "region.pgm",
            "cell_grid": list(generated.cell_grid),
            "ambient": generated.ambient,
            "noise_stddev": generated.noise_stddev,
        },
        "victim": {"kind": "brightness_biased", "gain": 1.0},
        "attack": {"g_max": 200, "seed": args.seed, "sigma0": 1.0, "mean0": "max_rgb"},
        "output": {"save_previews": True},
    }
    with open(out / "config.json", "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)
        f.write("\n")
    print(f"scene '{args.preset}' ({args.size}x{args.size}) written to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pitl",
        description="Projected-light attacks on depth estimators with physics-in-the-loop optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="run an attack from a JSON config")
    p.add_argument("--config", required=True, help="path to run config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", default=None, help="checkpoint JSON from an aborted run")
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("bench", help="run the optimizer on a benchmark function")
    p.add_argument("--suite", required=True, help="sphere | ellipsoid | rosenbrock")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, required=True, help="generation budget")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("eval", help="recompute f and e from saved maps")
    p.add_argument("--est", required=True, help="estimated depth (PFM)")
    p.add_argument("--orig", required=True, help="original depth with object (PFM)")
    p.add_argument("--back", required=True, help="background depth (PFM)")
    p.add_argument("--tgt", default=None, help="target depth (PFM), defaults to background")
    p.add_argument("--region", required=True, help="region mask (PGM, nonzero = member)")
    p.add_argument("--presence-region", default=None, help="separate mask for e (PGM)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("make-scene", help="generate a synthetic scene bundle")
    p.add_argument("--preset", required=True, help="locker | stove | sofa")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_make_scene)
    return parser


def _setup_logging() -> None:
    level_name = os.environ.get("PITL_LOG", "").strip().lower()
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(level_name, logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
