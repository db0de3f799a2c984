# Detection Package
from detection.embedding import (
    TrajectoryEmbedding, embed_trajectory, embed_traces, embed_images, save_embeddings, load_embeddings,
)
from detection.detectors import Detector, MLP, LSTM, ARCHS, detector_score, save_detector, load_detector
from detection.training import (
    DetectorDataset, DetectorTrainingLog, NATURAL, build_detector_dataset,
    sampling_weights, weighted_sampler, stratified_split, train_detector,
)
from detection.evaluation import DetectorEvaluation, evaluate_detector, macro_auc, split_by_attack
