"""Annotation ingestion, synthetic fixture suites, reconstruction studies,
and SVG rendering.

Annotation files use the COCO polygon subset (images + annotations with
`segmentation` lists).  Image coordinates (y down) are flipped into the math
convention (y up) at ingestion and flipped back when writing fixtures.
"""
from __future__ import annotations

import csv
import json
import math
import os
import statistics
import time
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NotFound, ParseError, SchemaError
from .geometry import (
    Point2,
    PolygonMask,
    cast_rays,
    mass_center,
    polygon_iou,
    rasterize,
)
from .targets import aux_targets, polar_centerness, structure_centerness
from .assembly import (
    MultiPolarMask,
    assemble_mp_traced,
    assemble_single,
    derive_aux_centers,
    _snap_inside,
)


@dataclass
class ImageInfo:
    id: int
    width: int
    height: int
    file_name: str


@dataclass
class InstanceRecord:
    instance_id: int
    image_id: int
    category_id: int
    polygon: PolygonMask
    part: int = 0


@dataclass
class AnnotationSet:
    images: list[ImageInfo]
    records: list[InstanceRecord]

    def image(self, image_id: int) -> ImageInfo:
        for im in self.images:
            if im.id == image_id:
                return im
        raise NotFound(f"image id {image_id} not found")

    def instance(self, instance_id: int) -> list[InstanceRecord]:
        recs = [r for r in self.records if r.instance_id == instance_id]
        if not recs:
            raise NotFound(f"instance id {instance_id} not found")
        return recs


def ingest(path: str, format: str = "coco-json") -> AnnotationSet:
    """Load a COCO-subset annotation file and flip it into the math convention.

    Multi-polygon instances become several records sharing one instance id.
    """
    if format not in ("coco-json", "fixture-json"):
        raise ValueError(f"unknown format {format!r}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e

    if not isinstance(doc, dict) or "images" not in doc or "annotations" not in doc:
        raise SchemaError(f"{path}: expected top-level 'images' and 'annotations'")

    images: list[ImageInfo] = []
    heights: dict[int, int] = {}
    for im in doc["images"]:
        try:
            info = ImageInfo(
                id=int(im["id"]),
                width=int(im["width"]),
                height=int(im["height"]),
                file_name=str(im.get("file_name", "")),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"{path}: bad image entry {im!r}") from e
        images.append(info)
        heights[info.id] = info.height

    records: list[InstanceRecord] = []
    for ann in doc["annotations"]:
        try:
            ann_id = int(ann["id"])
            image_id = int(ann["image_id"])
            category_id = int(ann["category_id"])
            segs = ann["segmentation"]
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"{path}: bad annotation entry {ann!r}") from e
        if image_id not in heights:
            raise SchemaError(f"{path}: annotation {ann_id} references unknown image {image_id}")
        if not isinstance(segs, list) or not segs:
            raise SchemaError(f"{path}: annotation {ann_id} has no polygon segmentation")
        h = heights[image_id]
        for part, flat in enumerate(segs):
            if not isinstance(flat, list) or len(flat) < 6 or len(flat) % 2 != 0:
                raise SchemaError(
                    f"{path}: annotation {ann_id} polygon {part} must have an even "
                    f"number (>= 6) of coordinates, got {len(flat)}"
                )
            xy = np.asarray(flat, dtype=np.float64).reshape(-1, 2)
            xy[:, 1] = h - xy[:, 1]  # image y (down) -> math y (up)
            records.append(
                InstanceRecord(
                    instance_id=ann_id,
                    image_id=image_id,
                    category_id=category_id,
                    polygon=PolygonMask(xy),
                    part=part,
                )
            )
    return AnnotationSet(images=images, records=records)


# ---------------------------------------------------------------------------
# synthetic fixtures


def _regular_polygon(rng, k: int, radius: float) -> np.ndarray:
    ang = 2 * np.pi * np.arange(k) / k + rng.uniform(0, 2 * np.pi)
    return np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    """Andrew monotone chain."""
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(points):
        out = []
        for p in points:
            while len(out) >= 2 and np.cross(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _random_hull(rng) -> np.ndarray:
    a = rng.uniform(70, 180)
    b = rng.uniform(70, 180)
    pts = rng.normal(size=(24, 2)) * [a / 2, b / 2]
    return _convex_hull(pts)


def _l_shape(rng) -> np.ndarray:
    w = rng.uniform(180, 320)
    h = rng.uniform(180, 320)
    cw = rng.uniform(0.45, 0.6) * w
    ch = rng.uniform(0.45, 0.6) * h
    return np.array(
        [[0, 0], [w, 0], [w, h - ch], [w - cw, h - ch], [w - cw, h], [0, h]],
        dtype=np.float64,
    ) - [w / 2, h / 2]


def _plus_shape(rng) -> np.ndarray:
    arm = rng.uniform(28, 45)
    reach = rng.uniform(95, 150)
    a, r = arm, reach
    return np.array(
        [
            [a, a], [a, r], [-a, r], [-a, a], [-r, a], [-r, -a],
            [-a, -a], [-a, -r], [a, -r], [a, -a], [r, -a], [r, a],
        ],
        dtype=np.float64,
    )


def _star(rng) -> np.ndarray:
    points = int(rng.integers(5, 10))
    outer = rng.uniform(110, 180)
    inner = outer * rng.uniform(0.42, 0.58)
    ang = np.pi * np.arange(2 * points) / points
    radii = np.where(np.arange(2 * points) % 2 == 0, outer, inner)
    return np.stack([radii * np.cos(ang), radii * np.sin(ang)], axis=1)


def _crescent(rng) -> np.ndarray:
    R = rng.uniform(100, 170)
    r = R * rng.uniform(0.72, 0.85)
    d = R * rng.uniform(0.4, 0.55)
    # intersection angles of the two circles (inner center at (d, 0))
    ca = (d * d + R * R - r * r) / (2 * d * R)
    a = math.acos(max(-1.0, min(1.0, ca)))
    cb = (d * d + r * r - R * R) / (2 * d * r)
    b = math.acos(max(-1.0, min(1.0, cb)))
    outer_t = np.linspace(a, 2 * np.pi - a, 48)
    outer_arc = np.stack([R * np.cos(outer_t), R * np.sin(outer_t)], axis=1)
    inner_t = np.linspace(np.pi - b, np.pi + b, 32)[::-1]
    inner_arc = np.stack([d + r * np.cos(inner_t), r * np.sin(inner_t)], axis=1)
    return np.concatenate([outer_arc, inner_arc], axis=0)


def _rotate(pts: np.ndarray, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return pts @ np.array([[c, s], [-s, c]])


_CONVEX_MAKERS = [
    lambda rng: _regular_polygon(rng, int(rng.integers(5, 13)), rng.uniform(80, 180)),
    _random_hull,
]
_CONCAVE_MAKERS = [_l_shape, _plus_shape, _star, _crescent]


def gen_fixtures(
    suite: str, count: int, seed: int, image_size: int = 512
) -> AnnotationSet:
    """Deterministic synthetic polygon suites in COCO-subset form.

    Category ids: 1 = convex, 2 = concave.
    """
    if suite not in ("convex", "concave", "mixed"):
        raise ValueError(f"suite must be convex, concave, or mixed, got {suite!r}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    images: list[ImageInfo] = []
    records: list[InstanceRecord] = []
    for i in range(count):
        if suite == "convex":
            maker, cat = _CONVEX_MAKERS[i % len(_CONVEX_MAKERS)], 1
        elif suite == "concave":
            maker, cat = _CONCAVE_MAKERS[i % len(_CONCAVE_MAKERS)], 2
        else:
            makers = _CONVEX_MAKERS + _CONCAVE_MAKERS
            maker = makers[i % len(makers)]
            cat = 1 if maker in _CONVEX_MAKERS else 2
        pts = maker(rng)
        pts = _rotate(pts, rng.uniform(0, 2 * np.pi))
        # center in the image with jitter, then pull back inside the frame
        pts = pts + image_size / 2 + rng.uniform(-30, 30, size=2)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        shift = np.clip(8 - lo, 0, None) - np.clip(hi - (image_size - 8), 0, None)
        pts = pts + shift
        pts = np.round(pts, 3)
        image_id = i + 1
        images.append(ImageInfo(image_id, image_size, image_size, f"fixture_{image_id:04d}.png"))
        records.append(
            InstanceRecord(
                instance_id=image_id,
                image_id=image_id,
                category_id=cat,
                polygon=PolygonMask(pts),
                part=0,
            )
        )
    return AnnotationSet(images=images, records=records)


def write_fixtures(ann: AnnotationSet, path: str) -> None:
    """Serialize an annotation set as COCO-subset JSON (image y convention)."""
    doc = {
        "images": [
            {"id": im.id, "width": im.width, "height": im.height, "file_name": im.file_name}
            for im in ann.images
        ],
        "annotations": [],
        "categories": [
            {"id": 1, "name": "convex"},
            {"id": 2, "name": "concave"},
        ],
    }
    grouped: dict[int, list[InstanceRecord]] = {}
    for r in ann.records:
        grouped.setdefault(r.instance_id, []).append(r)
    for iid in sorted(grouped):
        recs = sorted(grouped[iid], key=lambda r: r.part)
        h = next(im.height for im in ann.images if im.id == recs[0].image_id)
        segs = []
        for r in recs:
            xy = r.polygon.vertices.copy()
            xy[:, 1] = h - xy[:, 1]
            segs.append([round(float(v), 3) for v in xy.ravel()])
        doc["annotations"].append(
            {
                "id": iid,
                "image_id": recs[0].image_id,
                "category_id": recs[0].category_id,
                "segmentation": segs,
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# reconstruction study


@dataclass
class StudyRow:
    instance_id: str
    n: int
    mode: str
    iou: float | None
    polar_centerness: float | None
    structure_centerness: float | None
    vertex_count: int | None
    convex: bool | None
    wall_time: float
    error: str | None = None


@dataclass
class AggregateRow:
    name: str
    mode: str
    value: float


@dataclass
class StudyReport:
    rows: list[StudyRow]
    aggregates: list[AggregateRow] = field(default_factory=list)

    def compute_aggregates(self) -> None:
        self.aggregates = []
        modes = sorted({r.mode for r in self.rows})
        for mode in modes:
            vals = [r.iou for r in self.rows if r.mode == mode and r.iou is not None]
            if vals:
                self.aggregates.append(AggregateRow("mean_iou", mode, statistics.fmean(vals)))
                self.aggregates.append(AggregateRow("median_iou", mode, statistics.median(vals)))
            cvals = [
                r.iou
                for r in self.rows
                if r.mode == mode and r.iou is not None and r.convex is False
            ]
            if cvals:
                self.aggregates.append(
                    AggregateRow("concave_mean_iou", mode, statistics.fmean(cvals))
                )

    @property
    def failed(self) -> bool:
        return any(r.error for r in self.rows)

    def write_csv(self, path: str) -> None:
        """Fixed column order; floats at 6 decimals.  Wall times stay out of
        the file so identical runs produce identical bytes."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                [
                    "instance_id", "n", "mode", "iou", "polar_centerness",
                    "structure_centerness", "vertex_count", "convex", "error",
                ]
            )
            for r in sorted(self.rows, key=lambda r: (r.instance_id, r.mode)):
                w.writerow(
                    [
                        r.instance_id,
                        r.n,
                        r.mode,
                        _fmt(r.iou),
                        _fmt(r.polar_centerness),
                        _fmt(r.structure_centerness),
                        "" if r.vertex_count is None else r.vertex_count,
                        "" if r.convex is None else int(r.convex),
                        r.error or "",
                    ]
                )
            for a in self.aggregates:
                w.writerow([f"aggregate:{a.name}", "", a.mode, _fmt(a.value), "", "", "", "", ""])


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def _study_worker(args) -> list[StudyRow]:
    rec, n, modes, raster = args
    rid = str(rec.instance_id) if rec.part == 0 else f"{rec.instance_id}#{rec.part}"
    rows = []
    poly = rec.polygon
    try:
        x0, y0, x1, y1 = poly.bbox
        s = raster / max(x1 - x0, y1 - y0)
        pad = 2.0 / s
        shifted = PolygonMask((poly.vertices - [x0 - pad, y0 - pad]) * s)
        w = int(math.ceil((x1 - x0 + 2 * pad) * s))
        h = int(math.ceil((y1 - y0 + 2 * pad) * s))
        rm = rasterize(shifted, w, h)
        c_r = _snap_inside(rm, mass_center(rm))
        main = Point2(c_r.x / s + (x0 - pad), c_r.y / s + (y0 - pad))
        pc = polar_centerness(cast_rays(poly, main, n))
        sc = structure_centerness(rm, c_r, n, grid=256)
        convex = poly.is_convex
    except Exception as e:  # pragma: no cover - defensive per-instance guard
        return [
            StudyRow(rid, n, mode, None, None, None, None, None, 0.0, error=str(e))
            for mode in modes
        ]

    for mode in modes:
        t0 = time.perf_counter()
        try:
            main_fan = cast_rays(poly, main, n)
            if mode == "single":
                recon = assemble_single(main_fan)
            else:
                disp = aux_targets(rm, c_r) / s
                aux_centers = derive_aux_centers(main, disp)
                aux_fans = [cast_rays(poly, c, n) for c in aux_centers]
                recon, _ = assemble_mp_traced(MultiPolarMask(main_fan, aux_fans))
            iou = polygon_iou(poly, recon, resolution=raster)
            rows.append(
                StudyRow(
                    rid, n, mode, iou, pc, sc, len(recon), convex,
                    time.perf_counter() - t0,
                )
            )
        except Exception as e:
            rows.append(
                StudyRow(rid, n, mode, None, pc, sc, None, convex,
                         time.perf_counter() - t0, error=str(e))
            )
    return rows


def run_study(
    ann: AnnotationSet,
    n: int,
    modes: list[str] = ("single", "multi"),
    raster: int = 512,
) -> StudyReport:
    """Oracle reconstruction metrics per instance; failures become error rows.

    MP_POLAR_THREADS > 1 runs instances on a thread pool; row order in the
    CSV is id-sorted either way.
    """
    modes = list(modes)
    for mode in modes:
        if mode not in ("single", "multi"):
            raise ValueError(f"unknown mode {mode!r}")
    jobs = [(rec, n, modes, raster) for rec in ann.records]
    workers = int(os.environ.get("MP_POLAR_THREADS", "1") or "1")
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_study_worker, jobs))
    else:
        results = [_study_worker(j) for j in jobs]
    rows = [row for group in results for row in group]
    report = StudyReport(rows=rows)
    report.compute_aggregates()
    return report


# ---------------------------------------------------------------------------
# SVG rendering


def _svg_polygon(parent, pts: np.ndarray, **attrs) -> None:
    el = ET.SubElement(parent, "polygon")
    el.set("points", " ".join(f"{x:.3f},{y:.3f}" for x, y in pts))
    for k, v in attrs.items():
        el.set(k.replace("_", "-"), v)


def _svg_circle(parent, x: float, y: float, r: float, **attrs) -> None:
    el = ET.SubElement(parent, "circle")
    el.set("cx", f"{x:.3f}")
    el.set("cy", f"{y:.3f}")
    el.set("r", f"{r:.3f}")
    for k, v in attrs.items():
        el.set(k.replace("_", "-"), v)


def render(
    ann: AnnotationSet,
    instance_id: int,
    out_path: str,
    mode: str = "multi",
    n: int = 36,
    raster: int = 512,
) -> None:
    """Render one instance as layered SVG: ground truth, centers, ray
    endpoints, refined sequences, final mask."""
    recs = ann.instance(instance_id)
    rec = recs[0]
    im = ann.image(rec.image_id)
    poly = rec.polygon

    x0, y0, x1, y1 = poly.bbox
    s = raster / max(x1 - x0, y1 - y0)
    pad = 2.0 / s
    shifted = PolygonMask((poly.vertices - [x0 - pad, y0 - pad]) * s)
    w = int(math.ceil((x1 - x0 + 2 * pad) * s))
    h = int(math.ceil((y1 - y0 + 2 * pad) * s))
    rm = rasterize(shifted, w, h)
    c_r = _snap_inside(rm, mass_center(rm))
    main = Point2(c_r.x / s + (x0 - pad), c_r.y / s + (y0 - pad))
    main_fan = cast_rays(poly, main, n)

    centers = [main]
    if mode == "multi":
        disp = aux_targets(rm, c_r) / s
        aux_centers = derive_aux_centers(main, disp)
        centers += aux_centers
        aux_fans = [cast_rays(poly, c, n) for c in aux_centers]
        final, trace = assemble_mp_traced(MultiPolarMask(main_fan, aux_fans))
        endpoint_groups = trace.fan_points
        refined_groups = trace.refined
    else:
        final = assemble_single(main_fan)
        endpoint_groups = [main_fan.points()]
        refined_groups = []

    svg = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "version": "1.1",
            "width": str(im.width),
            "height": str(im.height),
            "viewBox": f"0 0 {im.width} {im.height}",
        },
    )
    # flip back into image convention for display
    root = ET.SubElement(svg, "g", {"transform": f"translate(0,{im.height}) scale(1,-1)"})

    gt = ET.SubElement(root, "g", {"id": "ground-truth"})
    _svg_polygon(gt, poly.vertices, fill="#d0e0ff", stroke="#204080", stroke_width="1")

    rays_g = ET.SubElement(root, "g", {"id": "ray-endpoints"})
    for grp in endpoint_groups:
        for x, y in grp:
            _svg_circle(rays_g, x, y, 1.2, fill="#999999", **{"class": "endpoint"})

    ref_g = ET.SubElement(root, "g", {"id": "refined-sequences"})
    palette = ["#cc3333", "#33aa33", "#3355cc", "#bb8800"]
    for m, grp in enumerate(refined_groups):
        if grp.shape[0] < 2:
            continue
        el = ET.SubElement(ref_g, "polyline")
        el.set("points", " ".join(f"{x:.3f},{y:.3f}" for x, y in grp))
        el.set("fill", "none")
        el.set("stroke", palette[m % 4])
        el.set("stroke-width", "1.5")

    final_g = ET.SubElement(root, "g", {"id": "final-mask"})
    _svg_polygon(
        final_g, final.vertices, fill="none", stroke="#000000",
        stroke_width="2", fill_rule="evenodd",
    )

    centers_g = ET.SubElement(root, "g", {"id": "centers"})
    for k, c in enumerate(centers):
        _svg_circle(
            centers_g, c.x, c.y, 3.0,
            fill="#ff6600" if k == 0 else "#0066ff", **{"class": "center"},
        )

    tree = ET.ElementTree(svg)
    ET.indent(tree)
    tree.write(out_path, encoding="unicode", xml_declaration=True)
