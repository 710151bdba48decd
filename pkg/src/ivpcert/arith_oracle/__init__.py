"""Sound decision and bounding procedures for polynomial arithmetic over boxes."""

from .bnb import (CertifiedMax, Excl, Image, Inside, Leaf, Refuted, Split, SubdivisionWitness,
                  Unknown, approx_max, certified_max, check_subdivision, node_from_json,
                  node_to_json, prove_lower, prove_upper)
from .interval import interval_eval
from .region import (ImageFailure, ImageWitness, LipschitzBound, Outside, RegionWitness,
                     check_image, check_region, formula_on_box, image_box, lipschitz_bound,
                     prove_image_in_region, region_membership, region_nonempty)
from .sturm import SturmRefutation, SturmWitness, check_sturm, sturm_chain, sturm_nonneg

__all__ = [
    "CertifiedMax", "Excl", "Image", "ImageFailure", "ImageWitness", "Inside", "Leaf",
    "LipschitzBound", "Outside", "Refuted", "RegionWitness", "Split", "SturmRefutation",
    "SturmWitness", "SubdivisionWitness", "Unknown", "approx_max", "certified_max",
    "check_image", "check_region", "check_subdivision", "check_sturm", "formula_on_box",
    "image_box", "interval_eval", "lipschitz_bound", "node_from_json", "node_to_json",
    "prove_image_in_region", "prove_lower", "prove_upper", "region_membership",
    "region_nonempty", "sturm_chain", "sturm_nonneg",
]
