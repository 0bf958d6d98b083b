"""Hybrid image features from conv-net activations.

Intermediate layer outputs of a pretrained convolutional network are
treated as densely extracted local descriptors, aggregated per layer with
Bag-of-Words or first-order Fisher-vector encoders, concatenated into one
hybrid feature, and classified with one-vs-all linear SVMs evaluated by
mean average precision.
"""

from .codebook import Codebook, bow_encode, kmeans_train, nearest_codeword
from .container import (
    TensorRecord,
    WeightContainer,
    read_container,
    read_container_file,
    write_container,
    write_container_file,
)
from .dataset import (
    Manifest,
    PreprocessSpec,
    bilinear_resize,
    load_and_preprocess,
    load_manifest,
    parse_manifest,
)
from .descriptors import DescriptorSample, DescriptorSet, harvest, reservoir_extend
from .evaluation import average_precision, mean_ap
from .features import (
    FeatureSegment,
    HybridFeature,
    LayerSubset,
    append_fc,
    concat_layers,
    encode_layer,
)
from .gmm import GmmModel, fv_encode, gmm_posterior, gmm_train
from .layers import (
    ConvKernelBank,
    LrnSpec,
    conv_forward,
    dense_forward,
    lrn_forward,
    maxpool_forward,
    softmax,
)
from .network import (
    ArchitectureDescriptor,
    NetworkModel,
    forward,
    load_arch,
    parse_arch,
    receptive_field,
    reference_descriptor,
    validate_and_bind,
)
from .pipeline import PipelineConfig, StageResult, run_pipeline, run_stage, sweep
from .svm import LinearModel, TrainConfig, decision_scores, train_ova
from .tensor import Tensor3

__version__ = "0.1.0"
