"""Command line interface.

Subcommands: fixtures, encode, study, render, decode.  Exit codes: 0 on
success, 2 on schema/parse errors, 3 when a study finished with per-instance
failures.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import MpPolarError, ParseError, SchemaError
from .datasets import gen_fixtures, ingest, render, run_study, write_fixtures
from .selection import HeadOutputs, decode_candidates
from .targets import build_target_maps


def _cmd_fixtures(args) -> int:
    ann = gen_fixtures(args.suite, args.count, args.seed)
    write_fixtures(ann, args.out)
    print(f"wrote {len(ann.records)} fixtures to {args.out}")
    return 0


def _cmd_encode(args) -> int:
    ann = ingest(args.ann)
    import os

    os.makedirs(args.out, exist_ok=True)
    for im in ann.images:
        instances = [
            (r.polygon, r.category_id) for r in ann.records if r.image_id == im.id
        ]
        maps = build_target_maps(instances, im.width, im.height, args.n, stride=args.stride)
        path = f"{args.out}/targets_{im.id:06d}.npz"
        np.savez_compressed(
            path,
            inside=maps.inside,
            class_id=maps.class_id,
            rays=maps.rays,
            structure_centerness=maps.structure_centerness,
            aux_disp=maps.aux_disp,
            n=np.array(maps.n),
        )
        print(f"{path}: {maps.inside_count} inside pixels")
    return 0


def _cmd_study(args) -> int:
    ann = ingest(args.ann)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    report = run_study(ann, args.n, modes=modes, raster=args.raster)
    report.write_csv(args.out)
    total = sum(r.wall_time for r in report.rows)
    print(f"wrote {len(report.rows)} rows to {args.out} ({total:.1f}s reconstruction time)",
          file=sys.stderr)
    return 3 if report.failed else 0


def _cmd_render(args) -> int:
    ann = ingest(args.ann)
    render(ann, args.id, args.out, mode=args.mode, n=args.n)
    print(f"wrote {args.out}")
    return 0


def _cmd_decode(args) -> int:
    data = np.load(args.head)
    for key in ("class_scores", "centerness", "rays", "aux_disp"):
        if key not in data:
            raise SchemaError(f"{args.head}: missing array {key!r}")
    outputs = HeadOutputs(
        data["class_scores"], data["centerness"], data["rays"], data["aux_disp"]
    )
    cands = decode_candidates(
        outputs, k_max=args.kmax, threshold=args.thr, iou_thr=args.nms_iou
    )
    doc = {
        "candidates": [
            {
                "class_id": c.class_id,
                "score": round(c.score, 6),
                "center": [round(c.center.x, 3), round(c.center.y, 3)],
                "polygon": [[round(float(x), 3), round(float(y), 3)] for x, y in c.mask.vertices],
            }
            for c in cands
        ]
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(cands)} candidates to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mp-polar", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fixtures", help="generate synthetic polygon suites")
    f.add_argument("--suite", choices=["convex", "concave", "mixed"], required=True)
    f.add_argument("--count", type=int, required=True)
    f.add_argument("--seed", type=int, required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(func=_cmd_fixtures)

    e = sub.add_parser("encode", help="generate ground-truth target grids")
    e.add_argument("--ann", required=True)
    e.add_argument("--n", type=int, default=36)
    e.add_argument("--stride", type=int, default=1)
    e.add_argument("--out", required=True, help="output directory for NPZ dumps")
    e.set_defaults(func=_cmd_encode)

    s = sub.add_parser("study", help="oracle reconstruction study")
    s.add_argument("--ann", required=True)
    s.add_argument("--n", type=int, default=36)
    s.add_argument("--modes", default="single,multi")
    s.add_argument("--raster", type=int, default=512)
    s.add_argument("--out", required=True, help="output CSV path")
    s.set_defaults(func=_cmd_study)

    r = sub.add_parser("render", help="render one instance as layered SVG")
    r.add_argument("--ann", required=True)
    r.add_argument("--id", type=int, required=True)
    r.add_argument("--mode", choices=["single", "multi"], default="multi")
    r.add_argument("--n", type=int, default=36)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_render)

    d = sub.add_parser("decode", help="decode head-output grids into masks")
    d.add_argument("--head", required=True, help="NPZ with class_scores/centerness/rays/aux_disp")
    d.add_argument("--kmax", type=int, default=1000)
    d.add_argument("--thr", type=float, default=0.05)
    d.add_argument("--nms-iou", type=float, default=0.5)
    d.add_argument("--out", required=True)
    d.set_defaults(func=_cmd_decode)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, SchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except MpPolarError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
