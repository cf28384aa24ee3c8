"""Sketch-based g-SUM estimation on turnstile streams."""

from .classifier import ClassifierParams, ClassifierVerdict, classify, theta_distance, transform_L_eta
from .errors import GsumError
from .estimator import EstimateReport, EstimatorConfig, estimate_gsum
from .gfunc import Envelope, GFunction, certify_envelope, compute_envelope, make_builtin, parse_gspec
from .heavy import Cover, HHConfig, hh_one_pass, hh_two_pass
from .sketch import AmsSketch, CountSketch, load_sketch, merge
from .stream import FrequencyVector, Stream, exact_gsum, gen_random_stream, materialize

__version__ = "0.1.0"

__all__ = [
    "AmsSketch", "ClassifierParams", "ClassifierVerdict", "CountSketch", "Cover", "EstimateReport",
    "EstimatorConfig", "Envelope", "FrequencyVector", "GFunction", "GsumError", "HHConfig", "Stream",
    "certify_envelope", "classify", "compute_envelope", "estimate_gsum", "exact_gsum",
    "gen_random_stream", "hh_one_pass", "hh_two_pass", "load_sketch", "make_builtin", "materialize",
    "merge", "parse_gspec", "theta_distance", "transform_L_eta",
]
