"""Multi-point polar instance mask codec.

Encodes object contours as one main ray fan plus four auxiliary fans (one
per quadrant), generates the matching ground-truth targets and losses, and
stitches predicted fans back into contours.
"""

from .errors import (
    DegenerateGeometry,
    DimensionMismatch,
    EmptyMask,
    EmptyQuadrant,
    InvalidDisplacement,
    InvalidRayCount,
    InvalidRayLength,
    MpPolarError,
    NotFound,
    OutsideObject,
    ParseError,
    SchemaError,
)
from .geometry import (
    MIN_RAY_LENGTH,
    Point2,
    PolygonMask,
    RasterMask,
    RayFan,
    cast_rays,
    cast_rays_many,
    mask_iou,
    mass_center,
    polygon_iou,
    quadrant_clip,
    raster_ray_lengths,
    rasterize,
    ray_angles,
)
from .targets import (
    QuadrantContour,
    TargetMaps,
    aux_targets,
    build_target_maps,
    polar_centerness,
    quadrant_contour,
    structure_centerness,
)
from .assembly import (
    AngularPoint,
    AssemblyTrace,
    MultiPolarMask,
    assemble_mp,
    assemble_mp_traced,
    assemble_single,
    derive_aux_centers,
    reconstruct_oracle,
    subseq,
)
from .losses import (
    LossBreakdown,
    aux_center_loss,
    focal_loss,
    polar_iou_grad,
    polar_iou_loss,
    reduce_over_points,
    smooth_l1,
    structure_centerness_loss,
)
from .selection import (
    Candidate,
    HeadOutputs,
    decode_candidates,
    fuse_scores,
    mask_nms,
    top_k,
)
from .datasets import (
    AnnotationSet,
    ImageInfo,
    InstanceRecord,
    StudyReport,
    StudyRow,
    gen_fixtures,
    ingest,
    render,
    run_study,
    write_fixtures,
)

__version__ = "0.1.0"
