"""Abnormal trajectory detection in multichannel vital-sign time series.

Streams are cut into fixed-length epochs, compared pairwise with dynamic time
warping, ranked by mean distance, clustered with average linkage and embedded
in the plane with classical MDS.
"""

from .cluster import (
    ClusterAssignment,
    Dendrogram,
    MergeStep,
    agglomerate,
    cluster_epochs,
    cut_at_distance,
    cut_by_max_gap,
    cut_to_k,
    outlier_scores,
)
from .dtw import AlignmentPath, DtwConfig, dtw_distance, dtw_value, pairwise_matrix
from .errors import (
    ConfigError,
    CorruptionError,
    DataError,
    DegenerateChannelError,
    DimensionError,
    VitalTrajError,
)
from .mds import Embedding, EmbeddingPoint, classical_mds
from .pipeline import AnalysisResult, analyze_records
from .preprocess import PreprocessConfig, build_epochs, median_filter, normalize_per_patient
from .signal_model import DistanceMatrix, Epoch, PatientRecord, SampleRecord
from .synth import PerturbationType, SynthConfig, generate_corpus

__version__ = "0.1.0"
