"""
Acceptance Suite

Evaluates the desk-scale acceptance criteria of TrajGuard:
- exact property checks (gradients, ROC/AUC, attack boxes, EER)
- effectiveness and ordering checks read back from per-seed pipeline runs
- end-to-end determinism of the report tables

Each seed runs the full pipeline under <out>/seed_<n>/.

Author: TrajGuard Development Team
"""

import csv
import filecmp
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from attacks import AttackConfig, BIM, CWL2, DEEP_FEATURE, FGSM, MIFGSM, run_attack
from harness.artifacts import EVAL_DETECTOR, IDENTIFY, REPORT, VERIFY, guidance_representatives
from harness.pipeline import ExperimentPlan, run_experiment
from harness.splits import ADVERSARIAL_SOURCE
from model import CROSS_ENTROPY, FeatureExtractor
from numcore import finite_diff_grad, max_relative_error
from recognition import eer_threshold, pairwise_auc, roc_curve
from services import ReportService
from utils.seeding import rng_for

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-5
AUC_TOLERANCE = 1e-12
BOX_TOLERANCE = 1e-6
BOX_CHECK_DF_ITERATIONS = 30


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str = ""


@dataclass
class AcceptanceReport:
    criteria: list = field(default_factory=list)

    @property
    def passed(self):
        return bool(self.criteria) and all(c.passed for c in self.criteria)

    def add(self, number, name, passed, detail=""):
        result = CriterionResult(number, name, bool(passed), detail)
        self.criteria.append(result)
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"[{'PASS' if result.passed else 'FAIL'}] {number}. {name}: {detail}")
        return result


def _majority(count):
    return math.ceil(2 * count / 3)


def _read_csv(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ----------------------------------------------------------------------
# Property checks
# ----------------------------------------------------------------------

def check_gradients(settings, rng):
    """Worst relative error of both input gradients against central differences."""
    acc = settings.acceptance
    model = FeatureExtractor.create(settings.data.num_classes, settings.classifier.channels,
                                    acc.gradient_image_size, seed=int(rng.integers(2 ** 31)), dtype=np.float64)
    size = acc.gradient_image_size
    worst = 0.0
    for _ in range(acc.gradient_inputs):
        x = rng.uniform(0.05, 0.95, (size, size, 1))
        cls = int(rng.integers(model.num_classes))
        target = rng.normal(0.0, 1.0, model.descriptor_dim)
        _, analytic = model.loss_and_input_grad(x, cls, CROSS_ENTROPY)
        numeric = finite_diff_grad(lambda z: model.loss_and_input_grad(z, cls, CROSS_ENTROPY)[0], x)
        worst = max(worst, max_relative_error(analytic, numeric))
        _, analytic = model.feature_loss_grad(x, target)
        numeric = finite_diff_grad(lambda z: model.feature_loss_grad(z, target)[0], x)
        worst = max(worst, max_relative_error(analytic, numeric))
    return worst


def check_roc_oracle(count, rng):
    """Largest |ROC AUC - pair-counting AUC| over random tied score sets."""
    worst = 0.0
    for _ in range(count):
        n_pos, n_neg = rng.integers(1, 201, size=2)
        pos = np.round(rng.normal(0.5, 1.0, n_pos), 1)
        neg = np.round(rng.normal(0.0, 1.0, n_neg), 1)
        worst = max(worst, abs(roc_curve(pos, neg).auc - pairwise_auc(pos, neg)))
    return worst


def check_attack_boxes(settings, model, dataset, splits, rng):
    """
    Run box-bounded attacks on random sources and count bound violations.

    Returns:
        tuple: (runs, violations)
    """
    guidance = guidance_representatives(model, dataset, splits)
    sources = splits[ADVERSARIAL_SOURCE]
    kinds = (FGSM, BIM, MIFGSM, DEEP_FEATURE)
    eps_grid = settings.attacks.eps_grid
    violations = 0
    runs = settings.acceptance.box_runs
    for run in range(runs):
        kind = kinds[run % len(kinds)]
        image = dataset.image(int(sources[rng.integers(len(sources))]))
        if kind == DEEP_FEATURE:
            cfg = AttackConfig(DEEP_FEATURE, False, delta=float(rng.choice(settings.attacks.df_deltas)),
                               df_max_iterations=BOX_CHECK_DF_ITERATIONS)
            bound = cfg.pixel_delta
        else:
            cfg = AttackConfig(kind, False, epsilon=float(rng.choice(eps_grid)),
                               iterations=1 if kind == FGSM else int(rng.choice(settings.attacks.iteration_grid)))
            bound = cfg.epsilon
        result = run_attack(model, image, cfg, representatives=guidance)
        adv = result.adversarial.astype(np.float64)
        diff = np.abs(adv - image.pixels.astype(np.float64)).max()
        if diff > bound + BOX_TOLERANCE or adv.min() < 0.0 or adv.max() > 1.0:
            violations += 1
    return runs, violations


def check_eer_contract(rng):
    """
    EER on overlapping Gaussian scores and on separated scores.

    Returns:
        tuple: (max |FAR - FRR| minus the step allowance, separated-set EER)
    """
    pos = rng.normal(1.0, 1.0, 400)
    neg = rng.normal(0.0, 1.0, 300)
    threshold, _ = eer_threshold(roc_curve(pos, neg))
    far = np.mean(neg >= threshold)
    frr = np.mean(pos < threshold)
    step = 1.0 / len(pos) + 1.0 / len(neg)
    _, separated_eer = eer_threshold(roc_curve([0.6, 0.7, 0.8, 0.9], [0.1, 0.2, 0.3, 0.4]))
    return abs(far - frr) - step, separated_eer


# ----------------------------------------------------------------------
# Run-backed checks
# ----------------------------------------------------------------------

def _success_rate(records, sources_ok, **match):
    chosen = [r for r in records if r.image_id in sources_ok and all(getattr(r, k) == v for k, v in match.items())]
    return (float(np.mean([r.success for r in chosen])), len(chosen)) if chosen else (float("nan"), 0)


def _effectiveness(settings, records, correct):
    """Attack-effectiveness thresholds on one seed."""
    problems = []
    rate, n = _success_rate(records, correct, kind=BIM, targeted=False, budget=0.1, steps=30)
    if n == 0 or not rate >= 0.9:
        problems.append(f"BIM eps=0.1 N=30 untargeted success {rate:.3f} over {n}")
    for kind in (BIM, MIFGSM):
        for steps in settings.attacks.iteration_grid:
            rates = [_success_rate(records, correct, kind=kind, targeted=False, budget=float(e), steps=steps)[0]
                     for e in sorted(settings.attacks.eps_grid)]
            if any(b < a for a, b in zip(rates, rates[1:])):
                problems.append(f"{kind} N={steps} success not monotone in eps: {np.round(rates, 3).tolist()}")
    rate, n = _success_rate(records, correct, kind=CWL2, targeted=False)
    if n == 0 or not rate >= 0.9:
        problems.append(f"CWL2 untargeted success {rate:.3f} over {n}")
    return problems


def _deep_feature_success(settings, records):
    problems = []
    for delta in settings.attacks.df_deltas:
        for targeted, floor in ((True, 0.85), (False, 0.90)):
            rate, n = _success_rate(records, {r.image_id for r in records}, kind=DEEP_FEATURE,
                                    targeted=targeted, budget=float(delta))
            if n == 0 or not rate >= floor:
                problems.append(f"delta={delta:g} {'targeted' if targeted else 'untargeted'} success {rate:.3f}")
    return problems


def _centroid_ordering(seed_dir, classifier_kinds):
    rows = _read_csv(os.path.join(seed_dir, IDENTIFY, "centroid_distance_summary.csv"))
    medians = {(r["kind"], r["targeted"]): float(r["median_distance"]) for r in rows}
    problems = []
    for targeted in ("0", "1"):
        df = medians.get((DEEP_FEATURE, targeted))
        for kind in classifier_kinds:
            other = medians.get((kind, targeted))
            if df is None or other is None or not df < other:
                problems.append(f"targeted={targeted}: DeepFeature {df} vs {kind} {other}")
    return problems


def _best_configs(seed_dir):
    """(arch, kind, metric) with the highest macro AUC per targeted flag, and that AUC."""
    best = {}
    for row in _read_csv(os.path.join(seed_dir, EVAL_DETECTOR, "detector_macro.csv")):
        key = row["targeted"]
        value = float(row["macro_auc"])
        if key not in best or value > best[key][1]:
            best[key] = ((row["arch"], row["representative_kind"], row["metric"]), value)
    return best


def _detector_orderings(seed_dir, config):
    aucs = {}
    for row in _read_csv(os.path.join(seed_dir, EVAL_DETECTOR, "detector_auc.csv")):
        if (row["arch"], row["representative_kind"], row["metric"]) == config:
            aucs[(row["attack"], row["targeted"])] = float(row["auc"])
    ok = True
    for attack in {a for a, _ in aucs}:
        if (attack, "1") in aucs and (attack, "0") in aucs:
            ok &= aucs[(attack, "1")] >= aucs[(attack, "0")]
    for targeted in ("0", "1"):
        cw = aucs.get((CWL2, targeted))
        others = [aucs[(k, targeted)] for k in (BIM, MIFGSM) if (k, targeted) in aucs]
        if cw is not None and others:
            ok &= cw <= min(others)
    return ok


def _cross_attack(seed_dir, best):
    rows = _read_csv(os.path.join(seed_dir, EVAL_DETECTOR, "cross_attack.csv"))
    problems = []
    if "1" in best:
        config = best["1"][0]
        for row in rows:
            if row["targeted"] == "1" and (row["arch"], row["representative_kind"], row["metric"]) == config:
                if not float(row["auc"]) >= 0.75:
                    problems.append(f"{row['attack']} targeted AUC {float(row['auc']):.3f}")
    untargeted = [float(r["auc"]) for r in rows if r["targeted"] == "0"]
    if not untargeted or not max(untargeted) > 0.5:
        problems.append(f"best untargeted deep-feature AUC {max(untargeted, default=float('nan')):.3f}")
    return problems


def _verification_orderings(seed_dir):
    rows = _read_csv(os.path.join(seed_dir, VERIFY, "verification_scenarios.csv"))
    impersonation = [r for r in rows if r["scenario"] == "impersonation"]
    df_rows = [r for r in impersonation if r["kind"] == DEEP_FEATURE]
    cw = [float(r["pct_adversarial"]) for r in impersonation if r["kind"] == CWL2]
    cw_value = max(cw) if cw else 0.0
    impersonation_ok = bool(df_rows) and all(
        float(r["pct_adversarial"]) >= 70.0 and float(r["pct_adversarial"]) > cw_value for r in df_rows)
    evading = sorted(((float(r["eps_or_delta"]), float(r["pct_adversarial"])) for r in rows
                      if r["scenario"] == "evading" and r["kind"] == DEEP_FEATURE))
    evading_ok = len(evading) > 1 and all(b[1] > a[1] for a, b in zip(evading, evading[1:]))
    return impersonation_ok, evading_ok


def _report_tables_identical(first, second):
    report_a = os.path.join(first, REPORT)
    report_b = os.path.join(second, REPORT)
    names = sorted(n for n in os.listdir(report_a) if n.endswith(".csv"))
    if not names:
        return False, "no report tables"
    _, mismatch, errors = filecmp.cmpfiles(report_a, report_b, names, shallow=False)
    return not mismatch and not errors, f"{len(names)} tables, differing: {mismatch + errors}"


def run_acceptance(settings, out_dir, force=False):
    """
    Run the pipeline for every acceptance seed and evaluate all criteria.

    Args:
        settings: ExperimentSettings (settings.acceptance.seeds picks the seeds)
        out_dir: Root directory; each seed writes to out_dir/seed_<n>
        force: Recompute stages even if cached

    Returns:
        AcceptanceReport
    """
    report = AcceptanceReport()
    seeds = list(settings.acceptance.seeds)
    rng = rng_for(settings.seed, "acceptance")

    worst = check_gradients(settings, rng)
    report.add(1, "gradient correctness", worst <= GRADIENT_TOLERANCE, f"max relative error {worst:.2e}")
    worst = check_roc_oracle(settings.acceptance.roc_sets, rng)
    report.add(2, "ROC/AUC oracle equivalence", worst <= AUC_TOLERANCE, f"max AUC difference {worst:.2e}")

    seed_dirs = {}
    for seed in seeds:
        seed_dir = os.path.join(out_dir, f"seed_{seed}")
        run_experiment(ExperimentPlan(replace(settings, seed=seed), seed_dir), force=force)
        seed_dirs[seed] = seed_dir

    first = seeds[0]
    ctx = ExperimentPlan(replace(settings, seed=first), seed_dirs[first]).context()
    model = ctx.load_model()
    dataset, splits = ctx.load_data()
    runs, violations = check_attack_boxes(settings, model, dataset, splits, rng)
    report.add(3, "attack-box contracts", violations == 0, f"{violations} violations in {runs} runs")

    effectiveness, df_success, centroid, orderings, cross, impersonation, evading = [], [], [], 0, [], 0, 0
    macro = defaultdict(list)
    for seed in seeds:
        seed_ctx = ExperimentPlan(replace(settings, seed=seed), seed_dirs[seed]).context()
        seed_model = seed_ctx.load_model()
        seed_data, seed_splits = seed_ctx.load_data()
        records, _ = seed_ctx.load_adversarials()
        sources = seed_splits[ADVERSARIAL_SOURCE]
        predictions = np.atleast_1d(seed_model.predict(seed_data.images[sources]))
        correct = {seed_data.ids[i] for i, p in zip(sources, predictions) if p == seed_data.labels[i]}
        effectiveness += [f"seed {seed}: {p}" for p in _effectiveness(settings, records, correct)]
        df_success += [f"seed {seed}: {p}" for p in _deep_feature_success(settings, records)]
        centroid += [f"seed {seed}: {p}" for p in _centroid_ordering(seed_dirs[seed], settings.attacks.classifier_kinds)]
        best = _best_configs(seed_dirs[seed])
        for flag, (_, value) in best.items():
            macro[flag].append(value)
        orderings += int("1" in best and _detector_orderings(seed_dirs[seed], best["1"][0]))
        cross += [f"seed {seed}: {p}" for p in _cross_attack(seed_dirs[seed], best)]
        imp_ok, eva_ok = _verification_orderings(seed_dirs[seed])
        impersonation += int(imp_ok)
        evading += int(eva_ok)

    report.add(4, "attack effectiveness", not effectiveness, "; ".join(effectiveness) or "all thresholds met")
    report.add(5, "deep-feature attack success", not df_success, "; ".join(df_success) or "all thresholds met")
    report.add(6, "centroid-distance ordering", not centroid, "; ".join(centroid) or "holds on every seed")
    targeted_macro = float(np.mean(macro["1"])) if macro["1"] else float("nan")
    untargeted_macro = float(np.mean(macro["0"])) if macro["0"] else float("nan")
    report.add(7, "detector performance",
               targeted_macro >= 0.85 and untargeted_macro >= 0.65 and orderings >= _majority(len(seeds)),
               f"macro AUC targeted {targeted_macro:.3f}, untargeted {untargeted_macro:.3f}; "
               f"orderings hold on {orderings}/{len(seeds)} seeds")
    report.add(8, "cross-attack generalization", not cross, "; ".join(cross) or "all thresholds met")
    needed = _majority(len(seeds))
    report.add(9, "verification scenarios", impersonation >= needed and evading >= needed,
               f"impersonation ordering on {impersonation}/{len(seeds)} seeds, evading on {evading}/{len(seeds)}")

    gap, separated = check_eer_contract(rng)
    report.add(10, "EER contract", gap <= 0.0 and separated == 0.0,
               f"|FAR-FRR| excess {gap:.3g}, separated EER {separated}")

    repeat_dir = os.path.join(out_dir, f"seed_{first}_repeat")
    run_experiment(ExperimentPlan(replace(settings, seed=first), repeat_dir), force=True)
    identical, detail = _report_tables_identical(seed_dirs[first], repeat_dir)
    report.add(11, "end-to-end determinism", identical, detail)

    ReportService(out_dir).write_table(
        "acceptance.csv", ["number", "criterion", "passed", "detail"],
        [[c.number, c.name, c.passed, c.detail] for c in report.criteria], sort=False)
    logger.info(f"Acceptance: {sum(c.passed for c in report.criteria)}/{len(report.criteria)} criteria passed")
    return report
