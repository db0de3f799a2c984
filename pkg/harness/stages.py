"""
Pipeline Stages

One function per stage of an experiment run. Each reads its inputs through
the RunContext loaders, writes into its own stage directory and returns
(output file names, JSON summary) for the stage cache.

Author: TrajGuard Development Team
"""

import logging
import os
import shutil
from collections import defaultdict

import numpy as np

from attacks import (
    AttackConfig, AttackJob, BIM, CWL2, CWLINF, DEEP_FEATURE, FGSM, LBFGS, MIFGSM,
    append_results_csv, perturbation_profile, run_attack_batch, select_target, write_manifest,
)
from detection import (
    DetectorDataset, NATURAL as NATURAL_KIND, embed_images, evaluate_detector, load_detector,
    load_embeddings, save_detector, save_embeddings, split_by_attack, stratified_split, train_detector,
)
from harness.artifacts import (
    AdversarialRecord, BUILD_REPS, EVAL_DETECTOR, GEN_ATTACKS, GEN_DATA, IDENTIFY, REPORT,
    TRAIN_CLASSIFIER, TRAIN_DETECTOR, VERIFY, guidance_representatives, representatives_name,
    save_representatives, write_json,
)
from harness.dataset import generate_synthetic_dataset, save_dataset
from harness.splits import ADVERSARIAL_SOURCE, NATURAL, SPLIT_NAMES, TEST, TRAIN, VAL, split_dataset
from model import FeatureExtractor, accuracy, save_checkpoint, train_classifier, write_tensors
from recognition import (
    EVADING, IMPERSONATION, L2, VerificationPair, assigned_centroid_distances, cosine_similarity,
    compute_representatives, eer_threshold, export_roc_csv, identification_accuracy, knn_identify,
    roc_curve, run_verification_scenario, sample_verification_pairs,
)
from services import ReportService
from utils.errors import ConfigError, DataError
from utils.seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

TARGETED = "targeted"
UNTARGETED = "untargeted"
MODES = ((UNTARGETED, False), (TARGETED, True))

DETECTOR_AUC_COLUMNS = ["arch", "representative_kind", "metric", "attack", "targeted", "auc"]
DETECTOR_MACRO_COLUMNS = ["arch", "representative_kind", "metric", "targeted", "macro_auc"]
ATTACK_SUCCESS_COLUMNS = ["attack", "kind", "targeted", "eps_or_delta", "steps", "runs", "success_rate",
                          "mean_iterations", "mean_linf", "mean_l2"]
SCENARIO_COLUMNS = ["scenario", "attack", "kind", "eps_or_delta", "pairs", "pct_original", "pct_adversarial"]


def _mode(targeted):
    return TARGETED if targeted else UNTARGETED


def _descriptors(model, images, batch_size=256):
    images = np.asarray(images)
    if len(images) == 0:
        return np.zeros((0, model.descriptor_dim))
    return np.concatenate([model.trace(images[i:i + batch_size]).descriptor
                           for i in range(0, len(images), batch_size)])


# ----------------------------------------------------------------------
# gen-data / train-classifier
# ----------------------------------------------------------------------

def gen_data(ctx):
    """Generate the synthetic identities and their per-class splits."""
    settings = ctx.settings
    dataset = generate_synthetic_dataset(settings.data, settings.seed)
    splits = split_dataset(dataset, settings.seed, settings.data)
    outputs = save_dataset(ctx.stage_dir(GEN_DATA), dataset, splits.split_of(dataset.ids))
    summary = {"images": len(dataset), "classes": dataset.num_classes}
    summary.update({name: int(len(splits[name])) for name in SPLIT_NAMES})
    return outputs, summary


def train_classifier_stage(ctx):
    """Train the extractor and classifier head on the classifier-train split."""
    settings = ctx.settings
    dataset, splits = ctx.load_data()
    cfg = settings.classifier
    model = FeatureExtractor.create(dataset.num_classes, cfg.channels, dataset.images.shape[1],
                                    seed=derive_seed(settings.seed, TRAIN_CLASSIFIER, "init"))
    train, val, test = splits[TRAIN], splits[VAL], splits[TEST]
    trained, history = train_classifier(
        model, dataset.images[train], dataset.labels[train], cfg,
        seed=derive_seed(settings.seed, TRAIN_CLASSIFIER, "shuffle"),
        val_images=dataset.images[val], val_labels=dataset.labels[val],
    )
    save_checkpoint(trained, ctx.path(TRAIN_CLASSIFIER, "classifier.tgm"))
    ReportService(ctx.stage_dir(TRAIN_CLASSIFIER)).write_table(
        "history.csv", ["epoch", "loss", "train_accuracy", "val_accuracy", "lr"], history.epochs, sort=False)

    summary = {
        "train_accuracy": history.final_train_accuracy,
        "val_accuracy": accuracy(trained, dataset.images[val], dataset.labels[val]),
        "test_accuracy": accuracy(trained, dataset.images[test], dataset.labels[test]),
        "lr_reductions": history.lr_halvings,
    }
    logger.info(f"Classifier test accuracy {summary['test_accuracy']:.3f}")
    return ["classifier.tgm", "history.csv"], summary


# ----------------------------------------------------------------------
# gen-attacks
# ----------------------------------------------------------------------

def attack_configs(attack_settings):
    """
    Every attack configuration of a run, untargeted first.

    Raises:
        ConfigError: on an unknown attack kind
    """
    a = attack_settings
    configs = []
    for _, targeted in MODES:
        for kind in tuple(a.classifier_kinds) + tuple(a.extra_kinds):
            if kind in (BIM, MIFGSM):
                configs.extend(AttackConfig(kind, targeted, epsilon=eps, iterations=n, momentum=a.momentum_decay)
                               for eps in a.eps_grid for n in a.iteration_grid)
            elif kind == FGSM:
                configs.extend(AttackConfig(FGSM, targeted, epsilon=eps, iterations=1) for eps in a.eps_grid)
            elif kind == CWL2:
                configs.append(AttackConfig(
                    CWL2, targeted, cw_binary_steps=a.cw_binary_steps, cw_initial_const=a.cw_initial_const,
                    cw_max_iterations=a.cw_max_iterations, cw_learning_rate=a.cw_learning_rate,
                    confidence=a.cw_confidence, abort_early=a.cw_abort_early))
            elif kind == CWLINF:
                configs.append(AttackConfig(
                    CWLINF, targeted, tau0=a.cw_linf_tau0, tau_decay=a.cw_linf_tau_decay,
                    cw_initial_const=a.cw_initial_const, cw_max_iterations=a.cw_linf_max_iterations,
                    cw_learning_rate=a.cw_learning_rate, confidence=a.cw_confidence))
            elif kind == LBFGS:
                if targeted:
                    configs.append(AttackConfig(
                        LBFGS, True, lbfgs_search_steps=a.lbfgs_search_steps,
                        lbfgs_initial_const=a.lbfgs_initial_const, lbfgs_max_iterations=a.lbfgs_max_iterations))
            else:
                raise ConfigError(f"attacks: unknown attack kind '{kind}'")
        configs.extend(AttackConfig(DEEP_FEATURE, targeted, delta=delta, df_max_iterations=a.df_max_iterations,
                                    knn_k=a.knn_k)
                       for delta in a.df_deltas)
    return configs


def plan_attack_jobs(dataset, splits, configs, seed):
    """
    Jobs for every adversarial-source image and configuration.

    Every source gets one seeded target class shared by all targeted
    attacks, and one guide image of that class from the classifier-train
    split for the targeted deep-feature runs.

    Returns:
        tuple: (jobs sorted by key, dict image id -> LabeledImage)
    """
    train_by_class = defaultdict(list)
    for i in splits[TRAIN]:
        train_by_class[int(dataset.labels[i])].append(int(i))

    images = {}
    jobs = []
    for i in splits[ADVERSARIAL_SOURCE]:
        source = dataset.image(i)
        images[source.image_id] = source
        target = select_target(source.label, dataset.num_classes, rng_for(seed, GEN_ATTACKS, "target", source.image_id))
        candidates = train_by_class[target]
        if not candidates:
            raise DataError(f"no classifier-train image of class {target} to guide {source.image_id}")
        guide = dataset.image(candidates[int(rng_for(seed, GEN_ATTACKS, "guide", source.image_id).integers(len(candidates)))])
        images[guide.image_id] = guide
        for cfg in configs:
            if not cfg.targeted:
                jobs.append(AttackJob(source.image_id, cfg, output_path="adversarials.tgm"))
            else:
                jobs.append(AttackJob(source.image_id, cfg, target=target,
                                      guide_id=guide.image_id if cfg.kind == DEEP_FEATURE else None,
                                      output_path="adversarials.tgm"))
    jobs.sort(key=lambda job: job.key)
    return jobs, images


def gen_attacks(ctx):
    """Craft every configured attack on the adversarial-source split."""
    settings = ctx.settings
    dataset, splits = ctx.load_data()
    model = ctx.load_model()
    guidance = guidance_representatives(model, dataset, splits)
    jobs, images = plan_attack_jobs(dataset, splits, attack_configs(settings.attacks), settings.seed)

    stage_dir = ctx.stage_dir(GEN_ATTACKS)
    os.makedirs(stage_dir, exist_ok=True)
    write_manifest(ctx.path(GEN_ATTACKS, "manifest.jsonl"), jobs)
    results = run_attack_batch(model, jobs, images, guidance, workers=settings.workers)

    results_path = ctx.path(GEN_ATTACKS, "results.csv")
    if os.path.exists(results_path):
        os.remove(results_path)
    append_results_csv(results_path, results)

    write_tensors(ctx.path(GEN_ATTACKS, "adversarials.tgm"), {job.key: r.adversarial for job, r in zip(jobs, results)})

    records = []
    for job, result in zip(jobs, results):
        cfg = job.config
        records.append(AdversarialRecord(
            key=job.key, image_id=job.image_id, tag=cfg.tag, kind=cfg.kind, targeted=cfg.targeted,
            budget=float(cfg.budget), steps=cfg.iterations if cfg.kind in (BIM, MIFGSM) else 0,
            iterations_used=result.iterations_used, success=result.success,
            predicted_class=result.predicted_class, source_label=result.source_label,
            target_class=result.target_class,
        ).to_dict())
    write_json(ctx.path(GEN_ATTACKS, "index.json"), records)

    rates = defaultdict(list)
    for result in results:
        rates[(result.kind, result.targeted)].append(result.success)
    for (kind, targeted), flags in sorted(rates.items()):
        logger.info(f"{kind} {_mode(targeted)}: success {np.mean(flags):.3f} over {len(flags)} runs")

    summary = {f"{kind}-{_mode(t)}": float(np.mean(flags)) for (kind, t), flags in rates.items()}
    return ["manifest.jsonl", "results.csv", "adversarials.tgm", "index.json"], summary


# ----------------------------------------------------------------------
# build-reps / train-detector / eval-detector
# ----------------------------------------------------------------------

def build_reps(ctx):
    """Class representatives of every configured kind and metric."""
    settings = ctx.settings
    dataset, splits = ctx.load_data()
    model = ctx.load_model()
    train = splits[TRAIN]
    traces = model.trace(dataset.images[train])
    outputs = []
    for kind in settings.representatives.kinds:
        for metric in settings.representatives.metrics:
            reps = compute_representatives(traces, dataset.labels[train], dataset.num_classes, kind, metric)
            name = representatives_name(kind, metric)
            save_representatives(ctx.path(BUILD_REPS, name), reps)
            outputs.append(name)
    logger.info(f"Built {len(outputs)} representative sets from {len(train)} images")
    return outputs, {"sets": outputs}


def _embedding_name(kind, metric):
    return f"embeddings_{kind}_{metric}.tgm"


def _split_name(reps_tag, mode):
    return f"split_{reps_tag}_{mode}.json"


def _detector_name(arch, reps_tag, mode):
    return f"detector_{arch}_{reps_tag}_{mode}.tgm"


def _natural_key(image_id):
    return f"{image_id}|{NATURAL_KIND}"


def _dataset_from_keys(keys, embeddings, records_by_key):
    labels, kinds = [], []
    for key in keys:
        record = records_by_key.get(key)
        labels.append(0 if record is None else 1)
        kinds.append(NATURAL_KIND if record is None else record.kind)
    return DetectorDataset(np.stack([embeddings[k] for k in keys]), labels, kinds, keys)


def train_detectors(ctx):
    """One detector per (architecture, representative set, targeted setting)."""
    settings = ctx.settings
    dataset, splits = ctx.load_data()
    model = ctx.load_model()
    records, pixels = ctx.load_adversarials()
    successful = [r for r in records if r.success]
    records_by_key = {r.key: r for r in successful}
    natural_idx = splits[NATURAL]
    natural_keys = [_natural_key(dataset.ids[i]) for i in natural_idx]
    adv_keys = [r.key for r in successful]
    adv_images = np.stack([pixels[k] for k in adv_keys]) if adv_keys else np.zeros((0,) + dataset.images.shape[1:])

    outputs = []
    summary = {}
    for kind in settings.representatives.kinds:
        for metric in settings.representatives.metrics:
            reps = ctx.load_representatives(kind, metric)
            nat_emb = embed_images(model, dataset.images[natural_idx], reps)
            adv_emb = embed_images(model, adv_images, reps)
            keys = natural_keys + adv_keys
            emb_name = _embedding_name(kind, metric)
            save_embeddings(ctx.path(TRAIN_DETECTOR, emb_name), keys, np.concatenate([nat_emb, adv_emb]))
            outputs.append(emb_name)
            embeddings = dict(zip(keys, np.concatenate([nat_emb, adv_emb])))

            for mode, targeted in MODES:
                chosen = [r.key for r in successful
                          if r.targeted == targeted and r.kind in settings.attacks.classifier_kinds]
                data = _dataset_from_keys(natural_keys + chosen, embeddings, records_by_key)
                train, test = stratified_split(data, settings.detector.test_fraction,
                                               rng_for(settings.seed, TRAIN_DETECTOR, "split", reps.tag, mode))
                split_name = _split_name(reps.tag, mode)
                write_json(ctx.path(TRAIN_DETECTOR, split_name), {"train": train.ids, "test": test.ids})
                outputs.append(split_name)
                for arch in settings.detector.archs:
                    detector, log = train_detector(
                        train, arch, settings.detector,
                        seed=derive_seed(settings.seed, TRAIN_DETECTOR, arch, reps.tag, mode))
                    name = _detector_name(arch, reps.tag, mode)
                    save_detector(detector, ctx.path(TRAIN_DETECTOR, name))
                    outputs.append(name)
                    summary[name] = {"train_rows": len(train), "final_loss": log.epochs[-1]["loss"] if log.epochs else None}
    return outputs, summary


def _detector_configs(settings):
    for kind in settings.representatives.kinds:
        for metric in settings.representatives.metrics:
            for mode, targeted in MODES:
                for arch in settings.detector.archs:
                    yield kind, metric, mode, targeted, arch


def eval_detectors(ctx):
    """Per-attack and cross-attack AUCs of every detector; best ROC export."""
    settings = ctx.settings
    records, _ = ctx.load_adversarials()
    records_by_key = {r.key: r for r in records if r.success}
    stage_dir = ctx.stage_dir(EVAL_DETECTOR)
    service = ReportService(stage_dir)

    auc_rows, macro_rows, cross_rows = [], [], []
    best = {}
    for kind, metric, mode, targeted, arch in _detector_configs(settings):
        reps_tag = f"{kind}-{metric}"
        keys, matrix = load_embeddings(ctx.require(TRAIN_DETECTOR, _embedding_name(kind, metric)))
        embeddings = dict(zip(keys, matrix))
        split = ctx.read_json(TRAIN_DETECTOR, _split_name(reps_tag, mode))
        detector = load_detector(ctx.require(TRAIN_DETECTOR, _detector_name(arch, reps_tag, mode)))

        test = _dataset_from_keys(split["test"], embeddings, records_by_key)
        evaluation = evaluate_detector(detector, split_by_attack(test))
        for attack, auc in evaluation.aucs.items():
            auc_rows.append([arch, kind, metric, attack, int(targeted), auc])
        macro_rows.append([arch, kind, metric, int(targeted), evaluation.macro_auc])

        natural_test = [k for k in split["test"] if k not in records_by_key]
        cross_groups = {}
        for delta in settings.attacks.df_deltas:
            df_keys = sorted(r.key for r in records_by_key.values()
                             if r.kind == DEEP_FEATURE and r.targeted == targeted and r.budget == float(delta))
            if df_keys:
                cross_groups[f"{DEEP_FEATURE}-d{delta:g}"] = _dataset_from_keys(
                    natural_test + df_keys, embeddings, records_by_key)
        cross = evaluate_detector(detector, cross_groups) if cross_groups else None
        if cross is not None:
            for attack, auc in cross.aucs.items():
                cross_rows.append([arch, kind, metric, attack, int(targeted), auc])

        config_name = f"{arch}-{reps_tag}"
        if mode not in best or evaluation.macro_auc > best[mode]["macro_auc"]:
            curves = dict(evaluation.curves)
            if cross is not None:
                curves.update(cross.curves)
            best[mode] = {"config": config_name, "macro_auc": evaluation.macro_auc, "curves": curves}

    service.write_table("detector_auc.csv", DETECTOR_AUC_COLUMNS, auc_rows)
    service.write_table("detector_macro.csv", DETECTOR_MACRO_COLUMNS, macro_rows)
    service.write_table("cross_attack.csv", DETECTOR_AUC_COLUMNS, cross_rows)
    outputs = ["detector_auc.csv", "detector_macro.csv", "cross_attack.csv"]
    for mode, entry in sorted(best.items()):
        for attack, curve in sorted(entry["curves"].items()):
            name = f"roc_{mode}_{attack}.csv"
            export_roc_csv(os.path.join(stage_dir, name), curve)
            outputs.append(name)
        svg, pdf = service.plot_roc(f"roc_{mode}", entry["curves"], title=f"Best {mode} detector: {entry['config']}")
        outputs.extend([os.path.basename(svg), os.path.basename(pdf)])
        logger.info(f"Best {mode} detector {entry['config']}: macro AUC {entry['macro_auc']:.3f}")

    summary = {mode: {"config": e["config"], "macro_auc": e["macro_auc"]} for mode, e in best.items()}
    return outputs, summary


# ----------------------------------------------------------------------
# identify / verify
# ----------------------------------------------------------------------

def identify(ctx):
    """kNN identification accuracy, kNN fooling rates and centroid distances."""
    settings = ctx.settings
    dataset, splits = ctx.load_data()
    model = ctx.load_model()
    records, pixels = ctx.load_adversarials()
    guidance = guidance_representatives(model, dataset, splits)
    templates = guidance.descriptor_templates()
    k = settings.attacks.knn_k
    service = ReportService(ctx.stage_dir(IDENTIFY))

    test = splits[TEST]
    clean_accuracy = identification_accuracy(_descriptors(model, dataset.images[test]), dataset.labels[test],
                                             templates, k=k, metric=L2)
    logger.info(f"kNN identification accuracy on clean test images: {clean_accuracy:.3f}")

    keys = [r.key for r in records]
    descriptors = _descriptors(model, np.stack([pixels[key] for key in keys])) if keys else np.zeros((0, 0))
    assigned = np.array([knn_identify(d, templates, k=k, metric=L2) for d in descriptors], dtype=np.int64)
    distances = assigned_centroid_distances(descriptors, assigned, templates)

    fooled = defaultdict(list)
    by_family = defaultdict(list)
    distance_rows = []
    for record, cls, dist in zip(records, assigned, distances):
        hit = cls == record.target_class if record.targeted else cls != record.source_label
        fooled[(record.tag, record.kind, record.targeted)].append(hit)
        if record.success:
            by_family[(record.kind, record.targeted)].append(dist)
            distance_rows.append([record.kind, int(record.targeted), record.tag, record.image_id, float(dist)])

    id_rows = [["clean-test", "", 0, len(test), clean_accuracy]]
    id_rows += [[tag, kind, int(t), len(flags), float(np.mean(flags))] for (tag, kind, t), flags in fooled.items()]
    service.write_table("identification.csv", ["attack", "kind", "targeted", "runs", "rate"], id_rows)
    service.write_table("centroid_distances.csv", ["kind", "targeted", "attack", "image_id", "distance"], distance_rows)
    summary_rows = [[kind, int(t), len(d), float(np.median(d))] for (kind, t), d in by_family.items()]
    service.write_table("centroid_distance_summary.csv", ["kind", "targeted", "count", "median_distance"], summary_rows)

    profile_rows = []
    sources = {dataset.ids[i]: dataset.images[i] for i in splits[ADVERSARIAL_SOURCE]}
    df_groups = defaultdict(list)
    for record in records:
        if record.kind == DEEP_FEATURE:
            df_groups[(record.tag, record.targeted, record.budget)].append(
                perturbation_profile(sources[record.image_id], pixels[record.key]))
    for (tag, targeted, delta), profiles in df_groups.items():
        profile_rows.append([tag, int(targeted), delta, len(profiles),
                             float(np.mean([p["max_pixel_perturbation"] for p in profiles])),
                             float(np.mean([p["fraction_within"] for p in profiles]))])
    service.write_table("perturbation_profile.csv",
                        ["attack", "targeted", "delta", "runs", "mean_max_perturbation", "mean_fraction_within"],
                        profile_rows)

    outputs = ["identification.csv", "centroid_distances.csv", "centroid_distance_summary.csv",
               "perturbation_profile.csv"]
    for mode, targeted in MODES:
        samples = {kind: np.asarray(d) for (kind, t), d in by_family.items() if t == targeted}
        svg, pdf = service.plot_histograms(f"centroid_distances_{mode}", samples,
                                           title=f"Distance to assigned centroid ({mode})", x_label="L2 distance")
        outputs.extend([os.path.basename(svg), os.path.basename(pdf)])

    medians = {f"{kind}-{_mode(t)}": float(np.median(d)) for (kind, t), d in by_family.items()}
    return outputs, {"clean_accuracy": clean_accuracy, "median_distances": medians}


def verify(ctx):
    """EER threshold on natural pairs and the impersonation/evading scenarios."""
    settings = ctx.settings
    dataset, splits = ctx.load_data()
    model = ctx.load_model()
    records, pixels = ctx.load_adversarials()
    service = ReportService(ctx.stage_dir(VERIFY))

    pool = np.sort(np.concatenate([splits[TEST], splits[NATURAL]]))
    pool_ids = [dataset.ids[i] for i in pool]
    probes = splits[ADVERSARIAL_SOURCE]
    all_idx = np.concatenate([pool, probes])
    descriptors = dict(zip([dataset.ids[i] for i in all_idx], _descriptors(model, dataset.images[all_idx])))
    label_of = {dataset.ids[i]: int(dataset.labels[i]) for i in all_idx}

    positives, negatives = sample_verification_pairs(
        pool_ids, dataset.labels[pool], settings.verification.positive_pairs,
        settings.verification.negative_pairs, rng_for(settings.seed, VERIFY, "pairs"))
    if not positives or not negatives:
        raise DataError("verification needs both genuine and impostor pairs")
    pos_scores = [cosine_similarity(descriptors[a], descriptors[b]) for a, b in positives]
    neg_scores = [cosine_similarity(descriptors[a], descriptors[b]) for a, b in negatives]
    curve = roc_curve(pos_scores, neg_scores)
    threshold, eer = eer_threshold(curve)
    export_roc_csv(os.path.join(ctx.stage_dir(VERIFY), "verification_roc.csv"), curve)
    logger.info(f"Verification AUC {curve.auc:.4f}, EER {eer:.4f} at cosine threshold {threshold:.4f}")

    pool_by_class = defaultdict(list)
    for image_id in pool_ids:
        pool_by_class[label_of[image_id]].append(image_id)

    successful = [r for r in records if r.success]
    adv_descriptors = dict(zip([r.key for r in successful],
                               _descriptors(model, np.stack([pixels[r.key] for r in successful]))
                               if successful else []))
    rows = []
    by_tag = defaultdict(list)
    for record in successful:
        by_tag[record.tag].append(record)
    for tag in sorted(by_tag):
        group = by_tag[tag]
        scenario = IMPERSONATION if group[0].targeted else EVADING
        pairs, lookup = [], {}
        for record in group:
            partner_class = record.target_class if record.targeted else record.source_label
            candidates = pool_by_class[partner_class]
            partner = candidates[int(rng_for(settings.seed, VERIFY, "partner", record.key).integers(len(candidates)))]
            pairs.append(VerificationPair(record.image_id, record.source_label, partner, partner_class, record.key))
            lookup[record.key] = (adv_descriptors[record.key], record.predicted_class)
        outcome = run_verification_scenario(scenario, pairs, descriptors, lookup, threshold, label=tag)
        rows.append([scenario, tag, group[0].kind, group[0].budget, outcome.pairs,
                     outcome.pct_original, outcome.pct_adversarial])

    service.write_table("verification_scenarios.csv", SCENARIO_COLUMNS, rows)
    service.write_table("verification_threshold.csv", ["auc", "eer", "threshold", "positive_pairs", "negative_pairs"],
                        [[curve.auc, eer, threshold, len(positives), len(negatives)]])
    svg, pdf = service.plot_roc("verification_roc", {"natural pairs": curve}, title="Verification ROC")
    outputs = ["verification_roc.csv", "verification_scenarios.csv", "verification_threshold.csv",
               os.path.basename(svg), os.path.basename(pdf)]
    return outputs, {"auc": curve.auc, "eer": eer, "threshold": threshold}


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------

COLLECTED = {
    EVAL_DETECTOR: ("detector_auc.csv", "detector_macro.csv", "cross_attack.csv"),
    IDENTIFY: ("identification.csv", "centroid_distance_summary.csv", "perturbation_profile.csv"),
    VERIFY: ("verification_scenarios.csv", "verification_threshold.csv", "verification_roc.csv"),
}


def attack_success_rows(records):
    groups = defaultdict(list)
    for record in records:
        groups[(record.tag, record.kind, record.targeted, record.budget, record.steps)].append(record)
    return [[tag, kind, int(t), budget, steps, len(g), float(np.mean([r.success for r in g])),
             float(np.mean([r.iterations_used for r in g])), None, None]
            for (tag, kind, t, budget, steps), g in groups.items()]


def report(ctx):
    """Gather the run's tables and figures into one report directory."""
    records, pixels = ctx.load_adversarials()
    dataset, splits = ctx.load_data()
    sources = {dataset.ids[i]: dataset.images[i].astype(np.float64) for i in splits[ADVERSARIAL_SOURCE]}
    report_dir = ctx.stage_dir(REPORT)
    service = ReportService(report_dir)

    rows = attack_success_rows(records)
    norms = defaultdict(lambda: ([], []))
    for record in records:
        diff = pixels[record.key].astype(np.float64) - sources[record.image_id]
        norms[record.tag][0].append(float(np.abs(diff).max()))
        norms[record.tag][1].append(float(np.sqrt((diff ** 2).sum())))
    for row in rows:
        linf, l2 = norms[row[0]]
        row[8], row[9] = float(np.mean(linf)), float(np.mean(l2))
    service.write_table("attack_success.csv", ATTACK_SUCCESS_COLUMNS, rows)

    outputs = ["attack_success.csv"]
    for stage, names in COLLECTED.items():
        for name in names:
            shutil.copyfile(ctx.require(stage, name), os.path.join(report_dir, name))
            outputs.append(name)
    for stage in (EVAL_DETECTOR, IDENTIFY, VERIFY):
        for name in sorted(os.listdir(ctx.stage_dir(stage))):
            if name.endswith((".svg", ".pdf")) or (name.startswith("roc_") and name.endswith(".csv")):
                shutil.copyfile(os.path.join(ctx.stage_dir(stage), name), os.path.join(report_dir, name))
                outputs.append(name)
    logger.info(f"Report with {len(outputs)} files written to {report_dir}")
    return outputs, {"files": len(outputs)}
