"""
Command-line entry point: niftrace <verb> ...

Every verb writes a manifest (<output root>.manifest.json) recording the
resolved configuration, inputs, outputs, seed, code version and wall time.
Failures exit with status 2 and one line "error: <category>: <message>".
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from niftrace.bvh.compact import NODE32_DTYPE
from niftrace.exceptions import ConfigurationError, NiftraceError
from niftrace.images import HdrImage, read_image, write_image, write_pfm, write_png_preview
from niftrace.metrics.aov import compare_aov
from niftrace.metrics.psnr import psnr
from niftrace.nif.network import NifConfig
from niftrace.nif.weights_io import write_nifw
from niftrace.render.integrator import RenderConfig, Renderer
from niftrace.scene.blob import read_sblob, write_sblob
from niftrace.scene.builtin import BUILTIN_SCENES, builtin_scene, empty_scene
from niftrace.scene.obj import scene_from_obj
from niftrace.studies import SweepGrid, run_sweep, synthetic_hdri
from niftrace.training.trainer import TrainConfig, Trainer
from niftrace.utils import manifest_path, save_table, write_manifest

logger = logging.getLogger(__name__)


def load_json(path):
    if not path:
        return {}
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"{path}: invalid JSON: {err}") from err
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    return data


def overrides(args, names):
    """
    Flag values that were given on the command line, keyed by config field.
    """
    return {name: getattr(args, name) for name in names if getattr(args, name, None) is not None}


def load_scene(spec, max_leaf_size=1):
    """
    Scene from a builtin name, "empty", a .sblob file or an .obj file.
    """
    if spec in BUILTIN_SCENES:
        return builtin_scene(spec, max_leaf_size=max_leaf_size)
    if spec == "empty":
        return empty_scene()
    ext = os.path.splitext(spec)[1].lower()
    if ext == ".sblob":
        return read_sblob(spec)
    if ext == ".obj":
        return scene_from_obj(spec, max_leaf_size=max_leaf_size)
    raise ConfigurationError(f"cannot load scene {spec!r}: expected one of {BUILTIN_SCENES}, "
                             f"'empty', a .sblob or an .obj path")


def load_hdri(spec, width=256, height=128):
    """
    Panorama from "synthetic:<name>" or a .pfm/.hdr path.
    """
    if spec.startswith("synthetic:"):
        return synthetic_hdri(spec.split(":", 1)[1], width=width, height=height)
    return read_image(spec)


def output_root(path):
    return os.path.splitext(path)[0]


# verbs #

def cmd_scene_pack(args):
    start = time.time()
    scene = load_scene(args.input, max_leaf_size=args.max_leaf_size)
    size = write_sblob(args.out, scene)
    n = len(scene.nodes)
    print(f"scene {scene.name}: {scene.triangle_count} triangles, {scene.sphere_count} spheres")
    print(f"nodes: {n}, BVH bytes: {scene.bvh_bytes} (float32 layout: {n * NODE32_DTYPE.itemsize})")
    print(f"wrote {args.out} ({size} bytes)")
    write_manifest(manifest_path(args.out), "scene-pack", {"max_leaf_size": args.max_leaf_size},
                   {"input": args.input}, {"sblob": args.out}, None, time.time() - start)
    return 0


def cmd_train(args):
    start = time.time()
    nif_dict = load_json(args.nif_config)
    nif_dict.update(overrides(args, ["hidden", "layers", "fourier_dim", "colour_matrix"]))
    train_dict = load_json(args.train_config)
    train_dict.update(overrides(args, ["steps", "batch_size", "eval_interval", "learning_rate", "seed",
                                       "master_precision"]))
    nif_config = NifConfig.from_dict(nif_dict)
    train_config = TrainConfig.from_dict(train_dict)
    image = load_hdri(args.hdri)

    trainer = Trainer(image, nif_config, train_config)
    weights, trace = trainer.run()
    root = output_root(args.out)
    outputs = {"weights": args.out, "trace": root + ".trace.csv", "eval": root + ".eval.pfm"}
    write_nifw(args.out, weights)
    save_table(trace, outputs["trace"])
    write_pfm(outputs["eval"], trainer.reconstruct())
    final = trainer.evaluate()
    print(f"{nif_config.label()}: {nif_config.parameter_count()} parameters, "
          f"{nif_config.weight_bytes()} weight bytes")
    print(f"initial {trainer.initial_report}")
    print(f"final {final}")
    if trainer.rejected_steps:
        print(f"rejected steps: {trainer.rejected_steps}")
    write_manifest(manifest_path(args.out), "train",
                   {"nif": nif_config.to_dict(), "train": train_config.to_dict()}, {"hdri": args.hdri},
                   outputs, train_config.seed, time.time() - start)
    return 0


def cmd_render(args):
    start = time.time()
    config_dict = load_json(args.config)
    config_dict.update(overrides(args, ["width", "height", "spp", "seed", "workers", "max_depth",
                                        "roulette_start_depth", "env_batch_chunk"]))
    config_dict["environment"] = args.env
    config = RenderConfig.from_dict(config_dict)
    scene = load_scene(args.scene)

    renderer = Renderer(scene, config)
    image = renderer.render()
    root = output_root(args.out)
    outputs = {"image": args.out, "preview": root + ".png"}
    write_image(args.out, image)
    write_png_preview(outputs["preview"], image, exposure=args.exposure)
    stats = renderer.stats
    print(f"rendered {config.width}x{config.height} at {config.spp} spp: {stats.paths} paths, "
          f"{stats.escaped_paths} escaped, {stats.env_queries} environment queries")
    write_manifest(manifest_path(args.out), "render", config.to_dict(), {"scene": args.scene, "env": args.env},
                   outputs, config.seed, time.time() - start)
    return 0


def cmd_eval(args):
    start = time.time()
    report = psnr(read_image(args.reference), read_image(args.test))
    print(report)
    outputs = {}
    if args.csv:
        save_table({k: ["inf" if np.isinf(v) else v] for k, v in report.as_dict().items()}, args.csv)
        outputs["csv"] = args.csv
        write_manifest(manifest_path(args.csv), "eval", {}, {"reference": args.reference, "test": args.test},
                       outputs, None, time.time() - start)
    return 0


def cmd_compare_aov(args):
    start = time.time()
    scene = load_scene(args.scene)
    kernels = tuple(args.kernels.split(","))
    if len(kernels) != 2:
        raise ConfigurationError("--kernels takes two names, e.g. f32,f64")
    report = compare_aov(scene, args.width, args.height or args.width, kernels=kernels)
    print(f"normal worst-component MSE: {report.normal_mse:.6e}")
    print(f"hit-point worst-component MSE: {report.hit_mse:.6e}")
    print(f"pixels: {report.pixels}, compared: {report.compared}, primitive mismatches: "
          f"{report.primitive_mismatches}, hit mismatches: {report.hit_mismatches}")
    if args.csv:
        save_table({k: [v] for k, v in report.as_dict().items()}, args.csv)
        write_manifest(manifest_path(args.csv), "compare-aov", {"width": args.width, "height": args.height,
                                                                "kernels": list(kernels)},
                       {"scene": args.scene}, {"csv": args.csv}, None, time.time() - start)
    return 0


def cmd_sweep(args):
    start = time.time()
    grid_dict = load_json(args.grid)
    for name in ("hidden", "layers"):
        if getattr(args, name):
            grid_dict[name] = [int(x) for x in getattr(args, name).split(",")]
    if args.colour_matrix:
        grid_dict["colour_matrix"] = args.colour_matrix.split(",")
    if args.fourier_dim:
        grid_dict["fourier_dim"] = args.fourier_dim
    grid = SweepGrid.from_dict(grid_dict)
    train_dict = load_json(args.train_config)
    train_dict.update(overrides(args, ["steps", "batch_size", "eval_interval", "seed"]))
    train_config = TrainConfig.from_dict(train_dict)
    hdris = {spec: load_hdri(spec, args.hdri_width, args.hdri_height) for spec in args.hdri.split(",")}

    table = run_sweep(hdris, grid, train_config)
    save_table(table, args.out)
    print(table.to_string(index=False))
    write_manifest(manifest_path(args.out), "sweep", {"grid": grid.to_dict(), "train": train_config.to_dict()},
                   {"hdri": list(hdris)}, {"csv": args.out}, train_config.seed, time.time() - start)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="niftrace",
                                     description="Path tracer with a neural HDR environment light.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene-pack", help="build, compact and serialise a scene")
    p.add_argument("input", help=f"builtin scene ({', '.join(BUILTIN_SCENES)}) or OBJ path")
    p.add_argument("out", help="output .sblob path")
    p.add_argument("--max-leaf-size", type=int, default=1)
    p.set_defaults(func=cmd_scene_pack)

    p = sub.add_parser("train", help="fit a neural image field to an HDR panorama")
    p.add_argument("hdri", help=".pfm/.hdr path or synthetic:<sunlit|midday|skyline|sky|overcast>")
    p.add_argument("out", help="output .nifw path")
    p.add_argument("--nif-config", help="JSON file with NifConfig fields")
    p.add_argument("--train-config", help="JSON file with TrainConfig fields")
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--fourier-dim", type=int)
    p.add_argument("--colour-matrix", choices=["identity", "yuv_to_rgb", "ycocg_to_rgb"])
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--eval-interval", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--master-precision", choices=["f32", "f16_stochastic"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render a scene")
    p.add_argument("scene", help=".sblob path, builtin name, 'empty' or OBJ path")
    p.add_argument("env", help="constant:<v>[,<g>,<b>], image:<path> or nif:<path>")
    p.add_argument("out", help="output .pfm (or .hdr) path; a .png preview is written alongside")
    p.add_argument("--config", help="JSON file with RenderConfig fields")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--spp", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--roulette-start-depth", type=int)
    p.add_argument("--env-batch-chunk", type=int)
    p.add_argument("--exposure", type=float, default=0.0, help="preview exposure in stops")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="PSNR of a test image against a reference")
    p.add_argument("reference")
    p.add_argument("test")
    p.add_argument("--csv", help="write the report as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare-aov", help="primary-ray AOV precision against the float64 oracle")
    p.add_argument("scene")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int)
    p.add_argument("--kernels", default="f32,f64")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_compare_aov)

    p = sub.add_parser("sweep", help="train a grid of architectures and tabulate PSNRs")
    p.add_argument("--hdri", required=True, help="comma-separated panoramas (paths or synthetic:<name>)")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--grid", help="JSON file with SweepGrid fields")
    p.add_argument("--hidden", help="comma-separated hidden sizes")
    p.add_argument("--layers", help="comma-separated layer counts")
    p.add_argument("--colour-matrix", help="comma-separated colour matrices")
    p.add_argument("--fourier-dim", type=int)
    p.add_argument("--train-config")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--eval-interval", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--hdri-width", type=int, default=256)
    p.add_argument("--hdri-height", type=int, default=128)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except NiftraceError as err:
        print(f"error: {err.category}: {err}", file=sys.stderr)
    except (ValueError, TypeError) as err:
        # malformed field values in a config file
        print(f"error: config: {err}", file=sys.stderr)
    except OSError as err:
        print(f"error: io: {err}", file=sys.stderr)
    return 2
