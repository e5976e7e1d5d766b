from .dataset import (Label, LabeledCloud, dataset_stats, split_validation,
                      to_two_class)
from .labeling import (SHARP_BAND_FACTOR, SMOOTH_BAND_FACTOR,
                       label_by_edge_distance, segment_distances,
                       segment_distances_brute)
from .manifest import (MANIFEST_ROLES, default_manifest, generate_dataset,
                       load_manifest, realize_entry, save_manifest)
from .noise import add_gaussian_noise, with_noise
from .primitives import (PRIMITIVE_KINDS, gen_primitive, primitive_area,
                         primitive_segments)

__all__ = [
    "Label",
    "LabeledCloud",
    "MANIFEST_ROLES",
    "PRIMITIVE_KINDS",
    "SHARP_BAND_FACTOR",
    "SMOOTH_BAND_FACTOR",
    "add_gaussian_noise",
    "dataset_stats",
    "default_manifest",
    "gen_primitive",
    "generate_dataset",
    "label_by_edge_distance",
    "load_manifest",
    "primitive_area",
    "primitive_segments",
    "realize_entry",
    "save_manifest",
    "segment_distances",
    "segment_distances_brute",
    "split_validation",
    "to_two_class",
    "with_noise",
]
