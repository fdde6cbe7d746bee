"""`profilebench` command line: a thin argparse layer over `profilebench.pipeline`."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import defaults, pipeline
from .asset_io import save_model_asset
from .consistency import ConsistencyConfig
from .raster import Camera
from .sampling import SampleSpec
from .toy import make_toy_model


def _camera(args) -> Camera:
    return Camera(distance=args.distance, fov_deg=args.fov,
                  width=args.resolution, height=args.resolution)


def _add_camera(p):
    p.add_argument("--resolution", type=int, default=defaults.RENDER_RESOLUTION)
    p.add_argument("--distance", type=float, default=defaults.CAMERA_DISTANCE)
    p.add_argument("--fov", type=float, default=defaults.CAMERA_FOV_DEG, help="vertical FoV, degrees")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="profilebench", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-asset", help="write a procedural toy model asset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vertices", type=int, default=642)
    p.add_argument("--shape-dim", type=int, default=10)

    p = sub.add_parser("sample", help="draw parameter records and write a manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=defaults.DATASET_SIZE)
    p.add_argument("--seed", type=int, default=defaults.TRAINING_SEED)
    p.add_argument("--asset", help="take shape/pose sizes from this asset and record its hash")
    p.add_argument("--sigma", type=float, default=defaults.SAMPLE_SIGMA)
    p.add_argument("--clip", type=float, default=defaults.SAMPLE_CLIP)
    p.add_argument("--yaw-min", type=float, default=defaults.YAW_RANGE_DEG[0])
    p.add_argument("--yaw-max", type=float, default=defaults.YAW_RANGE_DEG[1])
    p.add_argument("--shape-dim", type=int, default=defaults.SHAPE_DIM)
    _add_camera(p)

    p = sub.add_parser("decode", help="decode one parameter file to OBJ + landmarks")
    p.add_argument("--asset", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", help="render geometry cues for every manifest row")
    p.add_argument("--manifest", required=True)
    p.add_argument("--asset", required=True)
    p.add_argument("--vis-resolution", type=int, default=defaults.VISIBILITY_RESOLUTION)
    p.add_argument("--workers", type=int, default=1)
    _add_camera(p)

    p = sub.add_parser("export-conditioning", help="write depth/normal/prompt bundles")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--prompt", default=pipeline.POSITIVE_PROMPT)
    p.add_argument("--negative-prompt", default=pipeline.NEGATIVE_PROMPT)
    p.add_argument("--steps", type=int, default=defaults.DIFFUSION_STEPS)
    p.add_argument("--guidance", type=float, default=defaults.GUIDANCE_SCALE)
    p.add_argument("--scales", type=float, nargs=2, default=defaults.CONDITIONING_SCALES)
    p.add_argument("--resolution", type=int, default=defaults.INPUT_RESOLUTION)

    p = sub.add_parser("evaluate", help="metrics of a prediction set against the manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--asset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--protocol", choices=("aligned", "raw"), default="aligned")
    p.add_argument("--resolution", type=int, help="silhouette resolution (default: manifest camera)")
    p.add_argument("--vis-resolution", type=int, default=defaults.VISIBILITY_RESOLUTION)
    p.add_argument("--compare", help="second prediction directory for a paired comparison")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--n-boot", type=int, default=defaults.BOOTSTRAP_SAMPLES)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("consistency", help="edge vs silhouette agreement with shifted control")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, help="working resolution (default: RGB size)")
    p.add_argument("--band", type=float, default=defaults.BAND_WIDTH_PX)
    p.add_argument("--threshold", type=float, default=defaults.SOBEL_THRESHOLD)
    p.add_argument("--radius", type=float, default=defaults.COVERAGE_RADIUS_PX)
    p.add_argument("--shift", type=int, nargs=2, default=defaults.CONTROL_SHIFT, metavar=("DX", "DY"))
    p.add_argument("--split", choices=("train", "val", "test"))

    p = sub.add_parser("fit", help="landmark round-trip fit for every manifest row")
    p.add_argument("--manifest", required=True)
    p.add_argument("--asset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--regularization", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0, help="landmark noise sigma (model units)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=200)

    p = sub.add_parser("stats", help="paired bootstrap CIs + Wilcoxon on two metric CSVs")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--column", required=True)
    p.add_argument("--out")
    p.add_argument("--n-boot", type=int, default=defaults.BOOTSTRAP_SAMPLES)
    p.add_argument("--level", type=float, default=defaults.CONFIDENCE_LEVEL)
    p.add_argument("--seed", type=int, default=0)
    return ap


def run(args) -> pipeline.RunResult:
    c = args.command
    if c == "toy-asset":
        path = save_model_asset(make_toy_model(args.seed, args.vertices, args.shape_dim), args.out)
        return pipeline.RunResult({"asset": path}, n_ok=1)
    if c == "sample":
        spec = SampleSpec(args.sigma, args.clip, args.yaw_min, args.yaw_max, args.shape_dim,
                          base_seed=args.seed)
        return pipeline.cmd_sample(args.out, args.count, spec, args.asset, _camera(args))
    if c == "decode":
        return pipeline.cmd_decode(args.asset, args.params, args.out)
    if c == "render":
        return pipeline.cmd_render(args.manifest, args.asset, _camera(args), args.vis_resolution,
                                   args.workers)
    if c == "export-conditioning":
        prompt = pipeline.PromptConfig(args.prompt, args.negative_prompt, args.steps, args.guidance,
                                       tuple(args.scales), resolution=args.resolution)
        return pipeline.cmd_export_conditioning(args.manifest, args.out, prompt)
    if c == "evaluate":
        return pipeline.cmd_evaluate(args.manifest, args.asset, args.predictions, args.out,
                                     args.protocol, args.resolution, args.vis_resolution,
                                     args.compare, args.split, args.workers, args.n_boot, args.seed)
    if c == "consistency":
        cfg = ConsistencyConfig(args.band, args.threshold, args.radius, tuple(args.shift),
                                args.resolution)
        return pipeline.cmd_consistency(args.manifest, args.out, cfg, args.split)
    if c == "fit":
        return pipeline.cmd_fit(args.manifest, args.asset, args.out, args.regularization,
                                args.noise, args.seed, args.max_iter)
    if c == "stats":
        return pipeline.cmd_stats(args.a, args.b, args.column, args.out, args.n_boot, args.level,
                                  args.seed)
    raise AssertionError(c)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        res = run(args)
    except (pipeline.PipelineError, ValueError, OSError) as e:
        print(f"profilebench {args.command}: error: {e}", file=sys.stderr)
        return 2
    print(json.dumps({"command": args.command, "ok": res.n_ok, "failed": res.n_failed,
                      "skipped": res.n_skipped,
                      "outputs": {k: str(v) for k, v in res.outputs.items()}}, sort_keys=True))
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
