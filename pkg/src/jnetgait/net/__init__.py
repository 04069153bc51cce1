from .gradcheck import grad_check
from .losses import binary_cross_entropy, masked_cross_entropy, multitask_loss
from .model import (
    Encoder,
    GaitNet,
    JNetDecoder,
    ModelConfig,
    PreActBlock,
    build_model,
    classification_head,
    encoder_forward,
    jnet_forward,
)
from .optim import AdamHyper, AdamState, adam_step
from .train import (
    ClassificationData,
    SegmentationData,
    predict_segments,
    predict_windows,
    prepare_classification,
    prepare_segmentation,
    train,
)
from .weights import WeightImportError, export_weights, import_weights, load_model

__all__ = [
    "AdamHyper", "AdamState", "ClassificationData", "Encoder", "GaitNet", "JNetDecoder", "ModelConfig",
    "PreActBlock", "SegmentationData", "WeightImportError", "adam_step", "binary_cross_entropy", "build_model",
    "classification_head", "encoder_forward", "export_weights", "grad_check", "import_weights",
    "jnet_forward", "load_model", "masked_cross_entropy", "multitask_loss", "predict_segments",
    "predict_windows", "prepare_classification", "prepare_segmentation", "train",
]
