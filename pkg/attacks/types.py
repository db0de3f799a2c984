"""
Attack Configuration and Results

Shared types for every crafting procedure:
- AttackConfig: kind, targeting and all per-kind knobs
- AdversarialResult: crafted image, success flag and perturbation statistics
- helpers for target selection and perturbation profiles

Author: TrajGuard Development Team
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from utils.errors import PreconditionError

FGSM = "FGSM"
BIM = "BIM"
MIFGSM = "MIFGSM"
CWL2 = "CWL2"
CWLINF = "CWLinf"
LBFGS = "LBFGS"
DEEP_FEATURE = "DeepFeature"

ATTACK_KINDS = (FGSM, BIM, MIFGSM, CWL2, CWLINF, LBFGS, DEEP_FEATURE)
BOX_BOUNDED_KINDS = (FGSM, BIM, MIFGSM, DEEP_FEATURE)
CLASSIFIER_KINDS = (FGSM, BIM, MIFGSM, CWL2, CWLINF, LBFGS)

PIXEL_SCALE = 255.0


@dataclass(frozen=True)
class AttackConfig:
    """
    Knobs for one attack run.

    epsilon is a fraction of the pixel range; delta is on the 0-255 scale
    and divided by 255 when the deep-feature box is built. step=None means
    epsilon / iterations.
    """
    kind: str
    targeted: bool = False
    epsilon: float = 0.1
    iterations: int = 10
    step: float = None
    early_stop: bool = True
    momentum: float = 1.0
    cw_binary_steps: int = 5
    cw_initial_const: float = 1e-2
    cw_const_range: tuple = (1e-5, 1e10)
    cw_max_iterations: int = 1000
    cw_learning_rate: float = 0.01
    confidence: float = 0.0
    abort_early: bool = True
    tau0: float = 1.0
    tau_decay: float = 0.9
    cw_linf_inner_steps: int = 100
    lbfgs_search_steps: int = 20
    lbfgs_initial_const: float = 1e-2
    lbfgs_max_iterations: int = 100
    delta: float = 10.0
    df_max_iterations: int = 700
    solver_tol: float = 1e-6
    knn_k: int = 1

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise PreconditionError(f"unknown attack kind '{self.kind}'")
        if self.epsilon < 0 or self.delta < 0:
            raise PreconditionError("epsilon and delta must be non-negative")
        if self.step is not None and self.step <= 0:
            raise PreconditionError("step size must be positive")
        if self.iterations < 1:
            raise PreconditionError("iterations must be at least 1")
        if not 0.0 <= self.momentum <= 1.0:
            raise PreconditionError("momentum decay must lie in [0, 1]")

    @property
    def step_size(self):
        return self.step if self.step is not None else self.epsilon / self.iterations

    @property
    def pixel_delta(self):
        return self.delta / PIXEL_SCALE

    @property
    def budget(self):
        """The epsilon or delta value reported for this run."""
        return self.delta if self.kind == DEEP_FEATURE else self.epsilon

    @property
    def tag(self):
        """Stable short name, e.g. 'BIM-T-eps0.1-n30' or 'DeepFeature-U-d5'."""
        mode = "T" if self.targeted else "U"
        if self.kind in (FGSM,):
            return f"{self.kind}-{mode}-eps{self.epsilon:g}"
        if self.kind in (BIM, MIFGSM):
            return f"{self.kind}-{mode}-eps{self.epsilon:g}-n{self.iterations}"
        if self.kind == DEEP_FEATURE:
            return f"{self.kind}-{mode}-d{self.delta:g}"
        return f"{self.kind}-{mode}"

    def to_dict(self):
        return asdict(self)


@dataclass
class AdversarialResult:
    """Outcome of one attack run on one image."""
    adversarial: np.ndarray
    success: bool
    predicted_class: int
    iterations_used: int
    perturbation_linf: float
    perturbation_l2: float
    kind: str = ""
    targeted: bool = False
    source_label: int = -1
    target_class: int = None
    image_id: str = ""
    linf_bound: float = None
    budget: float = None
    extra: dict = field(default_factory=dict)


def perturbation_norms(original, adversarial):
    diff = np.asarray(adversarial, dtype=np.float64) - np.asarray(original, dtype=np.float64)
    return float(np.max(np.abs(diff), initial=0.0)), float(np.sqrt(np.sum(diff * diff)))


def make_result(original, adversarial, success, predicted, iterations, cfg, image, target=None, linf_bound=None,
                **extra):
    """Assemble an AdversarialResult with measured perturbation norms."""
    adversarial = np.clip(adversarial, 0.0, 1.0).astype(np.float32)
    linf, l2 = perturbation_norms(original, adversarial)
    return AdversarialResult(
        adversarial=adversarial,
        success=bool(success),
        predicted_class=int(predicted),
        iterations_used=int(iterations),
        perturbation_linf=linf,
        perturbation_l2=l2,
        kind=cfg.kind,
        targeted=cfg.targeted,
        source_label=int(image.label),
        target_class=None if target is None else int(target),
        image_id=image.image_id,
        linf_bound=linf_bound,
        budget=cfg.budget,
        extra=extra,
    )


def check_target(cfg, image, target, num_classes):
    """
    Validate the target class of a targeted run.

    Returns:
        int or None: The target class (None for untargeted runs)
    """
    if not cfg.targeted:
        return None
    if target is None:
        raise PreconditionError(f"{cfg.kind}: targeted run needs a target class")
    target = int(target)
    if not 0 <= target < num_classes:
        raise PreconditionError(f"{cfg.kind}: target class {target} outside [0, {num_classes})")
    if target == int(image.label):
        raise PreconditionError(f"{cfg.kind}: target class equals the true class {target}")
    return target


def classifier_success(predicted, label, target):
    return predicted == target if target is not None else predicted != label


def select_target(label, num_classes, rng):
    """Uniformly random class different from label."""
    choice = int(rng.integers(num_classes - 1))
    return choice if choice < label else choice + 1


def perturbation_profile(original, adversarial, threshold=5.0 / PIXEL_SCALE):
    """
    Maximum pixel perturbation and the share of pixels moved by at most threshold.

    Returns:
        dict: {'max_pixel_perturbation', 'fraction_within'}
    """
    diff = np.abs(np.asarray(adversarial, dtype=np.float64) - np.asarray(original, dtype=np.float64))
    return {
        "max_pixel_perturbation": float(np.max(diff, initial=0.0)),
        "fraction_within": float(np.mean(diff <= threshold + 1e-12)) if diff.size else 1.0,
    }
