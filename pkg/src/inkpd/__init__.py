"""Handwriting-based Parkinson's disease screening with sex/age cohorts.

Pipeline: digitizer recordings -> kinematic, entropy, energy and EMD features
-> Mann-Whitney screening -> SVM-ranked forward selection -> repeated
stratified hold-out evaluation per cohort group.
"""

__version__ = "0.1.0"

from inkpd.ink_data import (  # noqa: E402
    Dataset, DatasetManifest, Recording, SubjectMeta, load_dataset, parse_recording, read_manifest,
    segment_strokes,
)
from inkpd.features import FeatureMatrix, assemble_matrix, build_feature_vector, registry  # noqa: E402
from inkpd.stats import filter_features, mann_whitney_u  # noqa: E402
from inkpd.svm import GridSpec, grid_search, train_smo  # noqa: E402
from inkpd.selection import ProtocolConfig, evaluate_protocol, forward_accumulate, rank_features  # noqa: E402
from inkpd.cohorts import CohortScheme, evaluate_scheme, partition  # noqa: E402
from inkpd.synth import SynthConfig, preset, synth_generate  # noqa: E402

__all__ = [
    "Dataset", "DatasetManifest", "Recording", "SubjectMeta", "load_dataset", "parse_recording",
    "read_manifest", "segment_strokes", "FeatureMatrix", "assemble_matrix", "build_feature_vector",
    "registry", "filter_features", "mann_whitney_u", "GridSpec", "grid_search", "train_smo",
    "ProtocolConfig", "evaluate_protocol", "forward_accumulate", "rank_features", "CohortScheme",
    "evaluate_scheme", "partition", "SynthConfig", "preset", "synth_generate",
]
