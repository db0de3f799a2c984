# Attacks Package
from attacks.types import (
    AttackConfig, AdversarialResult, ATTACK_KINDS, BOX_BOUNDED_KINDS, CLASSIFIER_KINDS,
    FGSM, BIM, MIFGSM, CWL2, CWLINF, LBFGS, DEEP_FEATURE,
    select_target, perturbation_profile, perturbation_norms,
)
from attacks.gradient import fgsm, bim, mifgsm
from attacks.carlini import cw_l2, cw_linf, linf_penalty, logit_margin, to_tanh_space, from_tanh_space
from attacks.lbfgs_attack import lbfgs_attack
from attacks.deep_feature import deep_feature_attack
from attacks.batch import (
    AttackJob, RESULT_COLUMNS, run_attack, run_attack_batch,
    write_manifest, read_manifest, append_results_csv,
)
