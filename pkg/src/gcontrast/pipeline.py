"""Pipeline stages behind the CLI commands.

Each stage reads and writes versioned artifacts under one run
directory. Completed stages are skipped on re-run unless forced; a
stage whose upstream artifact is missing names the command that
produces it. Artifact files never contain timestamps, so identical
configurations yield byte-identical runs.
"""

import copy
import json
import os
import sys

import numpy as np

from .artifacts import (
    MissingArtifactError,
    append_jsonl,
    config_fingerprint,
    dataset_fingerprint,
    load_checkpoint,
    read_csv,
    read_jsonl,
    read_latents_csv,
    require,
    save_checkpoint,
    write_csv,
    write_jsonl,
    write_latents_csv,
)
from .cluster import PseudoLabelAssignment, assign, kmeans_fit, pseudo_label_table
from .config import RunConfig
from .contrastive import (
    ContrastiveConfig,
    EncoderSpec,
    ProjectionHeadSpec,
    build_encoder,
    build_head,
    train_contrastive,
)
from .dae import AutoencoderSpec, build_autoencoder, extract_latents, train_dae
from .data import load_cifar10, make_synthetic, stratified_indices, subset, train_val_split
from .evaluate import (
    FULL_SCALE_REFERENCE,
    TapPoint,
    fine_tune_10pct,
    linear_probe,
    supervised_reference,
    tap,
)
from .layers import load_parameters
from .scheduler import build_guided_plan, build_random_plan, validate_plan
from .seeds import derive_seed


def log(message):
    print(message, file=sys.stderr)


def _method_tag(mode):
    return "guided" if mode == "guided" else "random-baseline"


class Workspace:
    """One run directory plus the resolved config and lazy dataset."""

    def __init__(self, config: RunConfig, run_dir):
        self.config = config
        self.run_dir = str(run_dir)
        os.makedirs(self.run_dir, exist_ok=True)
        self.config_hash = config_fingerprint(config.to_dict())
        self._dataset = None
        self._dataset_hash = None

    def path(self, name):
        return os.path.join(self.run_dir, name)

    @property
    def dataset(self):
        if self._dataset is None:
            self._dataset = resolve_dataset(self.config)
            self._dataset_hash = dataset_fingerprint(self._dataset)
            self._write_meta()
        return self._dataset

    @property
    def dataset_hash(self):
        self.dataset
        return self._dataset_hash

    def _write_meta(self):
        meta = {"config_hash": self.config_hash, "dataset_hash": self._dataset_hash,
                "source": self._dataset.source, "n": len(self._dataset),
                "num_classes": self._dataset.num_classes}
        path = self.path("dataset_meta.json")
        payload = json.dumps(meta, sort_keys=True, indent=1) + "\n"
        if not os.path.exists(path) or open(path).read() != payload:
            with open(path, "w") as fh:
                fh.write(payload)

    def eval_split(self):
        return train_val_split(self.dataset, self.config.eval.val_fraction,
                               derive_seed(self.config.seed, "eval-split"))


def resolve_dataset(config: RunConfig):
    d = config.dataset
    if d.source == "cifar10":
        dataset = load_cifar10(d.path)
    else:
        dataset = make_synthetic(classes=d.classes, per_class=d.per_class,
                                 image_size=d.image_size, channels=d.channels,
                                 seed=derive_seed(config.seed, "dataset"),
                                 noise_sigma=d.noise_sigma)
    if d.subset_size and d.subset_size < len(dataset):
        chosen = _exact_stratified_subset(dataset.labels, d.subset_size,
                                          derive_seed(config.seed, "subset"))
        dataset = subset(dataset, chosen)
    return dataset


def _exact_stratified_subset(labels, size, seed):
    """Exactly `size` indices, spread as evenly as possible over classes."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    base, rem = divmod(size, len(classes))
    rng = np.random.default_rng(seed)
    chosen = []
    for i, cls in enumerate(classes):
        members = np.flatnonzero(labels == cls)
        want = base + (1 if i < rem else 0)
        if want > len(members):
            raise ValueError(f"class {cls} has only {len(members)} members, need {want}")
        perm = rng.permutation(len(members))
        chosen.append(members[perm[:want]])
    return np.sort(np.concatenate(chosen))


def _fresh(ws, paths, force):
    """True when every artifact exists and carries the current config hash."""
    if force:
        return False
    for path in paths:
        if not os.path.exists(path):
            return False
        stored = _stored_hash(path)
        if stored is not None and stored != ws.config_hash:
            return False
    return True


def _stored_hash(path):
    if path.endswith(".bin"):
        return None
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("# config_hash="):
        return first.split("=", 1)[1]
    try:
        if path.endswith(".jsonl"):
            return json.loads(first).get("config_hash")
        if path.endswith(".json"):
            with open(path) as fh:
                return json.load(fh).get("config_hash")
    except (json.JSONDecodeError, UnicodeDecodeError):
        pass
    return None


# ---- stages ----

def stage_train_dae(ws: Workspace, force=False):
    outputs = [ws.path("dae_checkpoint.json"), ws.path("dae_history.csv"), ws.path("latents.csv")]
    if _fresh(ws, outputs, force):
        log("train-dae: up to date, skipping (use --force to redo)")
        return
    cfg = ws.config
    spec = AutoencoderSpec(encoder_layers=cfg.dae.encoder_blocks,
                           image_size=cfg.dataset.image_size, channels=cfg.dataset.channels)
    init_seed = derive_seed(cfg.seed, "dae-init")
    model = build_autoencoder(spec, init_seed)
    model, history = train_dae(model, ws.dataset, sigma=cfg.dae.sigma,
                               max_epochs=cfg.dae.epochs, patience=cfg.dae.patience,
                               val_fraction=cfg.dae.val_fraction,
                               batch_size=cfg.dae.batch_size,
                               seed=derive_seed(cfg.seed, "dae-train"),
                               adam_lr=cfg.dae.adam_lr)
    manifest = {"kind": "autoencoder", "encoder_blocks": [list(b) for b in cfg.dae.encoder_blocks],
                "image_size": cfg.dataset.image_size, "channels": cfg.dataset.channels,
                "latent_shape": list(spec.latent_shape()), "seed": init_seed,
                "best_epoch": history.best_epoch, "stopped_epoch": history.stopped_epoch,
                "config_hash": ws.config_hash, "dataset_hash": ws.dataset_hash}
    save_checkpoint(ws.path("dae_checkpoint"), manifest,
                    [p.data for p in model.params()])
    write_csv(ws.path("dae_history.csv"), ["epoch", "train_loss", "val_loss"],
              [(e + 1, t, v) for e, (t, v) in enumerate(zip(history.train_loss, history.val_loss))],
              ws.config_hash)
    latents = extract_latents(model, ws.dataset)
    write_latents_csv(ws.path("latents.csv"), latents, ws.config_hash)
    log(f"train-dae: best epoch {history.best_epoch}, stopped {history.stopped_epoch}, "
        f"val loss {min(history.val_loss):.6f}")


def _load_dae(ws):
    manifest, arrays = load_checkpoint(ws.path("dae_checkpoint"))
    spec = AutoencoderSpec(encoder_layers=tuple(tuple(b) for b in manifest["encoder_blocks"]),
                           image_size=manifest["image_size"], channels=manifest["channels"])
    model = build_autoencoder(spec, 0)
    load_parameters(model, arrays)
    return model


def stage_cluster(ws: Workspace, force=False):
    outputs = [ws.path("pseudo_labels.csv"), ws.path("cluster_model.json")]
    if _fresh(ws, outputs, force):
        log("cluster: up to date, skipping (use --force to redo)")
        return
    require(ws.path("latents.csv"), producer="train-dae")
    _, latents = read_latents_csv(ws.path("latents.csv"))
    cfg = ws.config
    model = kmeans_fit(latents, k=cfg.cluster.k, seed=derive_seed(cfg.seed, "cluster"),
                       max_iter=cfg.cluster.max_iter, tol=cfg.cluster.tol)
    assignment = assign(model, latents)
    write_csv(ws.path("pseudo_labels.csv"), ["image_index", "cluster_label"],
              pseudo_label_table(assignment), ws.config_hash)
    save_checkpoint(ws.path("cluster_model"),
                    {"kind": "kmeans", "k": model.k, "inertia": model.inertia,
                     "iterations_run": model.iterations_run,
                     "seed": derive_seed(cfg.seed, "cluster"),
                     "config_hash": ws.config_hash, "dataset_hash": ws.dataset_hash},
                    [model.centroids])
    occupied = int((assignment.counts > 0).sum())
    log(f"cluster: k={model.k}, {occupied} nonempty clusters, inertia {model.inertia:.3f}")


def _load_assignment(ws) -> PseudoLabelAssignment:
    require(ws.path("pseudo_labels.csv"), producer="cluster")
    _, _, rows = read_csv(ws.path("pseudo_labels.csv"), producer="cluster")
    labels = np.array([int(r[1]) for r in rows], dtype=np.int64)
    k = ws.config.cluster.k
    return PseudoLabelAssignment(labels=labels, counts=np.bincount(labels, minlength=k))


def _plan_for_epoch(ws, mode, assignment, epoch):
    cfg = ws.config
    plan_seed = derive_seed(cfg.seed, "plan", epoch if cfg.scheduler.reshuffle_per_epoch else 1)
    if mode == "guided":
        return build_guided_plan(assignment, p=cfg.scheduler.p, epoch_seed=plan_seed)
    return build_random_plan(len(ws.dataset), cfg.scheduler.p, epoch_seed=plan_seed)


def stage_plan(ws: Workspace, mode, force=False):
    out = ws.path(f"plan_{mode}.jsonl")
    if _fresh(ws, [out], force):
        log(f"plan[{mode}]: up to date, skipping (use --force to redo)")
        return
    assignment = _load_assignment(ws) if mode == "guided" else None
    if mode == "guided":
        nonempty = int((assignment.counts > 0).sum())
        if nonempty < ws.config.scheduler.p:
            log(f"plan[{mode}]: warning: only {nonempty} nonempty clusters for batch "
                f"size {ws.config.scheduler.p}; guided batching degenerates toward random")
    records = [{"config_hash": ws.config_hash}]
    check_against = assignment if assignment is not None else PseudoLabelAssignment(
        labels=np.zeros(len(ws.dataset), dtype=np.int64), counts=np.array([len(ws.dataset)]))
    epochs = ws.config.contrastive.epochs if ws.config.scheduler.reshuffle_per_epoch else 1
    for epoch in range(1, epochs + 1):
        plan = _plan_for_epoch(ws, mode, assignment, epoch)
        validate_plan(plan, check_against)
        for bi, batch in enumerate(plan.batches):
            records.append({"epoch": epoch, "batch_index": bi,
                            "indices": [int(i) for i in batch]})
    write_jsonl(out, records)
    log(f"plan[{mode}]: wrote {len(records) - 1} batches over {epochs} epoch plans")


def stage_train_contrastive(ws: Workspace, mode, force=False):
    outputs = [ws.path(f"contrastive_{mode}_encoder.json"),
               ws.path(f"contrastive_{mode}_head.json"),
               ws.path(f"contrastive_{mode}_loss.csv")]
    if _fresh(ws, outputs, force):
        log(f"train-contrastive[{mode}]: up to date, skipping (use --force to redo)")
        return
    cfg = ws.config
    assignment = _load_assignment(ws) if mode == "guided" else None
    config = ContrastiveConfig(temperature=cfg.contrastive.temperature,
                               batch_size=cfg.scheduler.p,
                               epochs=cfg.contrastive.epochs,
                               base_lr=cfg.contrastive.base_lr,
                               guided=(mode == "guided"),
                               reshuffle_per_epoch=cfg.scheduler.reshuffle_per_epoch,
                               seed=derive_seed(cfg.seed, "contrastive"))
    encoder_spec = EncoderSpec(blocks=cfg.contrastive.encoder_blocks,
                               channels=cfg.dataset.channels)
    head_spec = ProjectionHeadSpec(widths=cfg.contrastive.head_widths)
    encoder, head, history = train_contrastive(ws.dataset, config, encoder_spec, head_spec,
                                               assignment=assignment)
    base_manifest = {"mode": mode, "blocks": [list(b) for b in cfg.contrastive.encoder_blocks],
                     "channels": cfg.dataset.channels,
                     "head_widths": list(cfg.contrastive.head_widths),
                     "seed": config.seed,
                     "config_hash": ws.config_hash, "dataset_hash": ws.dataset_hash}
    save_checkpoint(ws.path(f"contrastive_{mode}_encoder"),
                    dict(base_manifest, kind="encoder"), [p.data for p in encoder.params()])
    save_checkpoint(ws.path(f"contrastive_{mode}_head"),
                    dict(base_manifest, kind="projection-head"), [p.data for p in head.params()])
    write_csv(ws.path(f"contrastive_{mode}_loss.csv"), ["epoch", "batch", "loss"],
              history.records, ws.config_hash)
    log(f"train-contrastive[{mode}]: epoch means "
        f"{history.epoch_means[0]:.4f} -> {history.epoch_means[-1]:.4f}")


def _load_contrastive(ws, mode):
    enc_manifest, enc_arrays = load_checkpoint(ws.path(f"contrastive_{mode}_encoder"))
    head_manifest, head_arrays = load_checkpoint(ws.path(f"contrastive_{mode}_head"))
    spec = EncoderSpec(blocks=tuple(tuple(b) for b in enc_manifest["blocks"]),
                       channels=enc_manifest["channels"])
    encoder = build_encoder(spec, 0)
    load_parameters(encoder, enc_arrays)
    head = build_head(ProjectionHeadSpec(widths=tuple(head_manifest["head_widths"])),
                      spec.feature_dim, 0)
    load_parameters(head, head_arrays)
    return encoder, head, spec


def _existing_reports(ws):
    path = ws.path("results.jsonl")
    if not os.path.exists(path):
        return []
    return read_jsonl(path)


def _append_reports(ws, reports, force):
    path = ws.path("results.jsonl")
    existing = _existing_reports(ws)
    keys = {(r["method"], r["eval_name"], r["config_hash"]) for r in existing}
    fresh = []
    for report in reports:
        record = {"method": report.method, "eval_name": report.eval_name,
                  "accuracy": report.accuracy, "seed": report.seed,
                  "config_hash": ws.config_hash, "dataset_hash": ws.dataset_hash}
        key = (record["method"], record["eval_name"], record["config_hash"])
        if key in keys:
            if not force:
                log(f"eval {key[0]}/{key[1]}: already recorded, skipping (use --force to redo)")
                continue
            existing = [r for r in existing
                        if (r["method"], r["eval_name"], r["config_hash"]) != key]
            write_jsonl(path, existing)
        fresh.append(record)
    if fresh:
        append_jsonl(path, fresh)
    return fresh


def stage_probe(ws: Workspace, mode, force=False, supervised=False):
    require(ws.path(f"contrastive_{mode}_encoder.json"),
            producer=f"train-contrastive --mode {mode}")
    cfg = ws.config
    method = _method_tag(mode)
    existing = {(r["method"], r["eval_name"]) for r in _existing_reports(ws)
                if r["config_hash"] == ws.config_hash}
    to_run = [p for p in cfg.eval.tap_points if force or (method, p) not in existing]
    run_supervised = supervised and (
        force or ("supervised-reference", "supervised") not in existing)
    if not to_run and not run_supervised:
        log(f"probe[{mode}]: up to date, skipping (use --force to redo)")
        return []
    encoder, head, spec = _load_contrastive(ws, mode)
    train_ds, val_ds = ws.eval_split()
    reports = []
    for point_name in to_run:
        extractor = tap(encoder, head, TapPoint(point_name))
        reports.append(linear_probe(extractor, train_ds, val_ds,
                                    epochs=cfg.eval.probe_epochs, patience=cfg.eval.patience,
                                    seed=derive_seed(cfg.seed, "probe", mode, point_name),
                                    method=method, eval_name=point_name))
        log(f"probe[{mode}] {point_name}: {reports[-1].accuracy:.2f}%")
    if run_supervised:
        fresh_encoder = build_encoder(spec, derive_seed(cfg.seed, "supervised-encoder"))
        report = supervised_reference(fresh_encoder, spec.feature_dim, train_ds, val_ds,
                                      epochs=cfg.eval.probe_epochs, patience=cfg.eval.patience,
                                      seed=derive_seed(cfg.seed, "supervised"))
        reports.append(report)
        log(f"supervised reference: {report.accuracy:.2f}%")
    return _append_reports(ws, reports, force)


def stage_finetune(ws: Workspace, mode, force=False):
    require(ws.path(f"contrastive_{mode}_encoder.json"),
            producer=f"train-contrastive --mode {mode}")
    method = _method_tag(mode)
    existing = {(r["method"], r["eval_name"]) for r in _existing_reports(ws)
                if r["config_hash"] == ws.config_hash}
    if not force and (method, "finetune") in existing:
        log(f"finetune[{mode}]: up to date, skipping (use --force to redo)")
        return []
    encoder, _, spec = _load_contrastive(ws, mode)
    train_ds, val_ds = ws.eval_split()
    cfg = ws.config
    report = fine_tune_10pct(encoder, spec.feature_dim, train_ds, val_ds,
                             fraction=cfg.eval.finetune_fraction,
                             epochs=cfg.eval.probe_epochs, patience=cfg.eval.patience,
                             seed=derive_seed(cfg.seed, "finetune", mode), method=method)
    log(f"finetune[{mode}]: {report.accuracy:.2f}%")
    return _append_reports(ws, [report], force)


def stage_pipeline(ws: Workspace, mode, force=False):
    if mode == "guided":
        stage_train_dae(ws, force)
        stage_cluster(ws, force)
    stage_plan(ws, mode, force)
    stage_train_contrastive(ws, mode, force)
    stage_probe(ws, mode, force, supervised=ws.config.eval.supervised_reference)
    stage_finetune(ws, mode, force)


def run_mode_comparison(config: RunConfig, run_root, seeds, force=False):
    """Full guided and random pipelines for each seed.

    Returns {method: {eval_name: [accuracy per seed]}}; each seed gets
    its own run directory under run_root so artifacts stay auditable.
    """
    table = {}
    for seed in seeds:
        cfg = copy.deepcopy(config)
        cfg.seed = seed
        ws = Workspace(cfg, os.path.join(run_root, f"seed{seed}"))
        for mode in ("guided", "random"):
            stage_pipeline(ws, mode, force=force)
        for record in _existing_reports(ws):
            table.setdefault(record["method"], {}).setdefault(
                record["eval_name"], []).append(record["accuracy"])
    return table


EVAL_COLUMNS = ("P1", "P2", "P3", "finetune", "supervised")


def stage_report(ws: Workspace, reference_key="cifar10"):
    """Comparison table plus loss-curve CSV; refuses mixed datasets."""
    records = read_jsonl(ws.path("results.jsonl"), producer="probe / finetune")
    hashes = {r["dataset_hash"] for r in records}
    if len(hashes) > 1:
        raise ValueError(f"results.jsonl mixes dataset hashes {sorted(hashes)}; "
                         "refusing to compare")
    table = {}
    for r in records:
        table.setdefault(r["method"], {}).setdefault(r["eval_name"], []).append(r["accuracy"])
    rows = []
    for method in ("guided", "random-baseline", "supervised-reference"):
        if method not in table:
            continue
        cells = [method]
        for col in EVAL_COLUMNS:
            values = table[method].get(col)
            cells.append(f"{np.mean(values):.2f}" if values else "-")
        rows.append(cells)
    header = ["method"] + list(EVAL_COLUMNS)
    write_csv(ws.path("report_table.csv"), header, rows, ws.config_hash)

    lines = ["\t".join(header)] + ["\t".join(r) for r in rows]
    deltas = {}
    if "guided" in table and "random-baseline" in table:
        for col in ("P1", "P2", "P3", "finetune"):
            g, b = table["guided"].get(col), table["random-baseline"].get(col)
            if g and b:
                deltas[col] = float(np.mean(g) - np.mean(b))
        if deltas:
            lines.append("")
            lines.append("guided minus random-baseline (this run): "
                         + "  ".join(f"{c}: {v:+.2f}" for c, v in deltas.items()))
            ref = FULL_SCALE_REFERENCE.get(reference_key, {})
            if "guided" in ref:
                ref_delta = {c: ref["guided"][c] - ref["random-baseline"][c]
                             for c in ("P1", "P2", "P3", "finetune")}
                lines.append("guided minus baseline (full-scale reference, "
                             f"{reference_key}): "
                             + "  ".join(f"{c}: {v:+.2f}" for c, v in ref_delta.items()))
    text = "\n".join(lines)
    print(text)

    loss_rows = []
    if os.path.exists(ws.path("dae_history.csv")):
        _, _, rows_ = read_csv(ws.path("dae_history.csv"))
        loss_rows += [("dae-train", r[0], "", r[1]) for r in rows_]
        loss_rows += [("dae-val", r[0], "", r[2]) for r in rows_]
    for mode in ("guided", "random"):
        path = ws.path(f"contrastive_{mode}_loss.csv")
        if os.path.exists(path):
            _, _, rows_ = read_csv(path)
            loss_rows += [(f"contrastive-{mode}", r[0], r[1], r[2]) for r in rows_]
    write_csv(ws.path("report_losses.csv"), ["stage", "epoch", "batch", "loss"],
              loss_rows, ws.config_hash)
    return text, deltas
