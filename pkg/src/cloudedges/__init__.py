"""cloudedges: multi-scale edge detection and annotation for 3D point clouds.

The pipeline: describe every point across a pyramid of neighborhood scales
(algebraic sphere fits turned into relief / curvature features), feed the
per-point scale-feature matrix to a small dense network, and classify points
as sharp edge, smooth edge, or non-edge. A batch CLI covers dataset
generation through evaluation; an HTTP service supports interactive
annotate-train-classify loops.
"""

__version__ = "0.1.0"
