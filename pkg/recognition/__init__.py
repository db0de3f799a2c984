# Recognition Package
from recognition.metrics import L2, COSINE, METRICS, cosine_similarity, pairwise_distance, distance
from recognition.representatives import (
    ClassRepresentatives, CENTROID, MEDOID, REPRESENTATIVE_KINDS,
    compute_centroids, compute_medoids, compute_representatives, medoid_index,
)
from recognition.identification import knn_identify, identification_accuracy, assigned_centroid_distances
from recognition.verification import (
    RocCurve, VerificationPair, VerificationOutcome, IMPERSONATION, EVADING,
    roc_curve, pairwise_auc, eer_threshold, run_verification_scenario,
    sample_verification_pairs, export_roc_csv,
)
