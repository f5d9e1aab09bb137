from gazefuse.gaze.io import ParsedScanpaths, format_scanpaths, parse_scanpaths, parse_text, write_scanpaths
from gazefuse.gaze.preprocess import (
    cluster_fixations,
    filter_noise,
    fixations_from_samples,
    jitter_augment,
    normalize,
    synth_heatmap,
)
from gazefuse.gaze.synth import Cohort, CohortConfig, Stimulus, generate_cohort, load_cohort, write_cohort
from gazefuse.gaze.types import CATEGORIES, Fixation, RawGazeSample, SaliencyMap, ScanPath, StimulusCategory

__all__ = [
    "ParsedScanpaths", "format_scanpaths", "parse_scanpaths", "parse_text", "write_scanpaths",
    "cluster_fixations", "filter_noise", "fixations_from_samples", "jitter_augment", "normalize",
    "synth_heatmap", "Cohort", "CohortConfig", "Stimulus", "generate_cohort", "load_cohort",
    "write_cohort", "CATEGORIES", "Fixation", "RawGazeSample", "SaliencyMap", "ScanPath",
    "StimulusCategory",
]
