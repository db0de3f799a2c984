# Model Package
from model.extractor import (
    FeatureExtractor, ForwardTrace, LabeledImage,
    forward, loss_and_input_grad, feature_loss_grad,
    CROSS_ENTROPY, NEGATED_CROSS_ENTROPY,
)
from model.training import train_classifier, accuracy, TrainingHistory
from model.checkpoint import write_tensors, read_tensors, save_checkpoint, load_checkpoint
