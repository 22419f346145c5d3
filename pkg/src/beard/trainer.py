"""Two-stage training: encoder re-training on unlabeled audio, then
supervised fine-tuning with a decoder, with deterministic batching,
checkpoint/resume, early stopping, and ablation switches.

All randomness (batch order, mask draws, mask noise) is derived functionally
from (seed, epoch, step, position), never from a long-lived stateful stream,
so a run resumed from a checkpoint continues bit-exactly under single-thread
execution.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from ._util import DataError, NumericError, config_hash, derive_seed, seed_rng
from .data import ManifestEntry, Tokenizer
from .evaluation import WERResult, aggregate_folds, wer
from .features import FeatureConfig, FeatureMatrix, compute_logmel, read_wav, stack_frames
from .losses import (
    LOSS_CSV_HEADER,
    LossBreakdown,
    LossWeights,
    combine,
    combine_terms,
    distill_loss,
    prediction_loss,
)
from .masking import apply_mask, sample_mask
from .model import (
    Adam,
    DecoderConfig,
    EncoderConfig,
    LayerTap,
    Params,
    decoder_forward,
    encoder_forward,
    greedy_decode,
    init_projection_params,
    load_checkpoint,
    projection_forward,
    save_checkpoint,
    snapshot_teacher,
)
from .quantizer import QuantizerState, quantize


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class RetrainConfig:
    tap: int | None = None  # default: n_layers // 2
    lam: float = 0.5
    beta: float = 0.1
    mask_span: int = 4
    mask_prob: float = 0.10
    lr_encoder: float = 1e-5
    lr_projection: float = 5e-4
    batch_size: int = 32
    epochs: int = 1
    max_steps: int | None = None
    seed: int = 0
    use_l_d_ell: bool = True
    use_l_d_n: bool = True
    checkpoint_every: int | None = None

    def __post_init__(self):
        if self.lr_encoder <= 0 or self.lr_projection <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        LossWeights(self.lam, self.beta)

    def resolve_tap(self, n_layers: int) -> int:
        tap = self.tap if self.tap is not None else max(1, n_layers // 2)
        LayerTap(tap).validate(n_layers)
        return tap

    def to_dict(self) -> dict:
        return {
            "tap": self.tap,
            "lam": self.lam,
            "beta": self.beta,
            "mask_span": self.mask_span,
            "mask_prob": self.mask_prob,
            "lr_encoder": self.lr_encoder,
            "lr_projection": self.lr_projection,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "max_steps": self.max_steps,
            "seed": self.seed,
            "use_l_d_ell": self.use_l_d_ell,
            "use_l_d_n": self.use_l_d_n,
        }


@dataclass(frozen=True)
class FinetuneConfig:
    lr: float = 1e-5
    batch_size: int = 16
    max_epochs: int = 10
    patience: int = 3
    evals_per_epoch: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.evals_per_epoch <= 0:
            raise ValueError("evals_per_epoch must be positive")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "evals_per_epoch": self.evals_per_epoch,
            "seed": self.seed,
        }


@dataclass
class RunRecord:
    stage: str
    config: dict
    config_hash: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def add_row(self, *values) -> None:
        self.rows.append(list(values))

    def loss_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "config": self.config,
            "config_hash": self.config_hash,
            "metrics": self.metrics,
            "evals": self.evals,
            "checkpoints": self.checkpoints,
        }

    def save(self, out_dir: str | Path) -> None:
        import json

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / f"{self.stage}-losses.csv", "w", encoding="utf-8") as fh:
            fh.write(self.loss_csv())
        with open(out_dir / f"{self.stage}-run.json", "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# features and batching


class FeatureStore:
    """Per-utterance cache of log-mel features and quantizer labels.

    Contents are keyed by entry id and computed independently per utterance,
    so parallel preloading cannot change any value.
    """

    def __init__(self, feature_cfg: FeatureConfig | None = None, threads: int = 1):
        self.feature_cfg = feature_cfg or FeatureConfig()
        self.threads = max(1, threads)
        self._features: dict[str, np.ndarray] = {}
        self._labels: dict[tuple[str, int, int], np.ndarray] = {}

    def features(self, entry: ManifestEntry) -> np.ndarray:
        if entry.id not in self._features:
            fm = compute_logmel(read_wav(entry.audio_path), self.feature_cfg)
            self._features[entry.id] = fm.frames.astype(np.float32)
        return self._features[entry.id]

    def labels(self, entry: ManifestEntry, q: QuantizerState, factor: int) -> np.ndarray:
        key = (entry.id, id(q), factor)
        if key not in self._labels:
            frames = self.features(entry)
            fm = FeatureMatrix(frames, frame_rate=0.0, mel_bins=frames.shape[1])
            stacked = stack_frames(fm, factor)
            self._labels[key] = quantize(q, stacked).labels
        return self._labels[key]

    def preload(self, entries: list[ManifestEntry]) -> None:
        todo = [e for e in entries if e.id not in self._features]
        if not todo:
            return
        if self.threads == 1:
            for e in todo:
                self.features(e)
            return
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            for entry, frames in zip(todo, pool.map(lambda e: compute_logmel(read_wav(e.audio_path), self.feature_cfg).frames.astype(np.float32), todo)):
                self._features[entry.id] = frames


def batch_schedule(entries: list[ManifestEntry], seed: int, epoch: int, batch_size: int) -> list[list[int]]:
    """Deterministic batches: sort by (duration, id) so lengths group together,
    chunk, then shuffle chunk order as a pure function of (seed, epoch)."""
    order = sorted(range(len(entries)), key=lambda i: (entries[i].duration_s, entries[i].id))
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    perm = seed_rng("schedule", seed, epoch).permutation(len(chunks))
    return [chunks[i] for i in perm]


def _pad_feature_batch(feats: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([f.shape[0] for f in feats], dtype=np.int64)
    t_max = int(lengths.max())
    out = np.zeros((len(feats), t_max, feats[0].shape[1]), dtype=np.float32)
    for i, f in enumerate(feats):
        out[i, : f.shape[0]] = f
    return out, lengths


# ---------------------------------------------------------------------------
# re-training


@dataclass
class RetrainResult:
    student: Params
    projection: Params
    record: RunRecord
    checkpoint_path: str | None


def _retrain_checkpoint(
    path: Path,
    enc_cfg: EncoderConfig,
    cfg: RetrainConfig,
    student: Params,
    projection: Params,
    opt: Adam,
    step: int,
) -> None:
    tensors: dict[str, np.ndarray] = {}
    for name, arr in student.arrays().items():
        tensors[f"enc.{name}"] = arr
    for name, arr in projection.arrays().items():
        tensors[f"proj.{name}"] = arr
    tensors.update(opt.state_arrays())
    config = {"encoder": enc_cfg.to_dict(), "retrain": cfg.to_dict()}
    # Randomness is re-derived per (seed, epoch, step); the base seed is the
    # entire RNG state.
    rng_state = {"generator": "PCG64", "derivation": "per-step", "base_seed": cfg.seed}
    save_checkpoint(path, config, tensors, rng_state, step)


def _load_retrain_checkpoint(path: str | Path, enc_cfg: EncoderConfig, cfg: RetrainConfig,
                             student: Params, projection: Params, opt: Adam) -> int:
    ckpt = load_checkpoint(path)
    expect = {"encoder": enc_cfg.to_dict(), "retrain": cfg.to_dict()}
    if ckpt.config != expect:
        raise DataError("checkpoint config does not match the requested run config")
    student.load_arrays({k[4:]: v for k, v in ckpt.tensors.items() if k.startswith("enc.")})
    projection.load_arrays({k[5:]: v for k, v in ckpt.tensors.items() if k.startswith("proj.")})
    opt.load_state_arrays(ckpt.tensors, t=ckpt.step)
    return ckpt.step


def retrain(
    student: Params,
    enc_cfg: EncoderConfig,
    quantizer: QuantizerState,
    entries: list[ManifestEntry],
    cfg: RetrainConfig,
    out_dir: str | Path | None = None,
    projection: Params | None = None,
    store: FeatureStore | None = None,
    resume_from: str | Path | None = None,
) -> RetrainResult:
    """Re-train the student encoder on unlabeled entries.

    Per batch: features -> stacked-frame quantizer labels -> span mask ->
    masked student forward / clean teacher forward -> masked prediction loss
    plus unmasked distillation losses (per ablation flags) -> one Adam step
    with separate encoder and projection-head learning rates. The teacher
    snapshot and the quantizer are never touched.
    """
    if not entries:
        raise DataError("retrain needs a non-empty manifest")
    tap = cfg.resolve_tap(enc_cfg.n_layers)
    expected_d_in = enc_cfg.n_mels * enc_cfg.downsample_factor
    if quantizer.d_in != expected_d_in:
        raise ValueError(
            f"quantizer d_in {quantizer.d_in} must equal n_mels*downsample_factor {expected_d_in}"
        )
    store = store or FeatureStore()
    projection = projection or init_projection_params(
        enc_cfg.d_model, quantizer.codebook_size, seed=cfg.seed, dtype=enc_cfg.dtype
    )
    weights = LossWeights(cfg.lam, cfg.beta)

    teacher = snapshot_teacher(student)
    teacher_hash = teacher.content_hash()
    quantizer_hash = quantizer.content_hash()

    opt = Adam([("enc", student, cfg.lr_encoder), ("proj", projection, cfg.lr_projection)])
    start_step = 0
    if resume_from is not None:
        start_step = _load_retrain_checkpoint(resume_from, enc_cfg, cfg, student, projection, opt)

    run_cfg = {"encoder": enc_cfg.to_dict(), "retrain": cfg.to_dict()}
    record = RunRecord(
        stage="retrain",
        config=run_cfg,
        config_hash=config_hash(run_cfg),
        columns=LOSS_CSV_HEADER.split(","),
    )

    batches_per_epoch = math.ceil(len(entries) / cfg.batch_size)
    total_steps = batches_per_epoch * cfg.epochs
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)

    schedule_cache: dict[int, list[list[int]]] = {}
    df = enc_cfg.downsample_factor
    for step in range(start_step, total_steps):
        epoch, pos = divmod(step, batches_per_epoch)
        if epoch not in schedule_cache:
            schedule_cache[epoch] = batch_schedule(entries, cfg.seed, epoch, cfg.batch_size)
        idxs = schedule_cache[epoch][pos]
        batch_entries = [entries[i] for i in idxs]
        feats = [store.features(e) for e in batch_entries]
        clean, lengths = _pad_feature_batch(feats)
        masked = clean.copy()
        t_out_max = -(-clean.shape[1] // df)
        out_lengths = -(-lengths // df)
        labels = np.full((len(feats), t_out_max), -1, dtype=np.int64)
        out_mask = np.zeros((len(feats), t_out_max), dtype=bool)
        valid = np.arange(t_out_max)[None, :] < out_lengths[:, None]
        for i, entry in enumerate(batch_entries):
            fm = FeatureMatrix(feats[i], frame_rate=0.0, mel_bins=feats[i].shape[1])
            plan = sample_mask(
                feats[i].shape[0],
                cfg.mask_span,
                cfg.mask_prob,
                seed=derive_seed("mask", cfg.seed, step, i),
                downsample_factor=df,
            )
            masked_fm = apply_mask(fm, plan, noise_seed=derive_seed("mask-noise", cfg.seed, step, i))
            masked[i, : feats[i].shape[0]] = masked_fm.frames
            item_labels = store.labels(entry, quantizer, df)
            labels[i, : item_labels.shape[0]] = item_labels
            out_mask[i, : plan.output_mask.shape[0]] = plan.output_mask

        opt.zero_grad()
        outs = encoder_forward(student, enc_cfg, masked, tap, lengths)
        with ad.no_grad():
            teacher_outs = encoder_forward(teacher, enc_cfg, clean, tap, lengths)
        logits = projection_forward(projection, outs.tap)

        n_flat = len(feats) * t_out_max
        flat_logits = ad.reshape(logits, (n_flat, quantizer.codebook_size))
        flat_tap = ad.reshape(outs.tap, (n_flat, enc_cfg.d_model))
        flat_final = ad.reshape(outs.final, (n_flat, enc_cfg.d_model))
        t_tap = teacher_outs.tap.data.reshape(n_flat, enc_cfg.d_model)
        t_final = teacher_outs.final.data.reshape(n_flat, enc_cfg.d_model)
        flat_labels = labels.reshape(n_flat)
        flat_mask = out_mask.reshape(n_flat)
        flat_valid = valid.reshape(n_flat)

        l_q_t = prediction_loss(flat_logits, flat_labels, flat_mask, flat_valid)
        l_d_ell_t = distill_loss(flat_tap, t_tap, flat_mask, flat_valid) if cfg.use_l_d_ell else None
        l_d_n_t = distill_loss(flat_final, t_final, flat_mask, flat_valid) if cfg.use_l_d_n else None
        total_t = combine_terms(l_q_t, l_d_ell_t, l_d_n_t, weights)

        breakdown = combine(
            l_q_t.item(),
            0.0 if l_d_ell_t is None else l_d_ell_t.item(),
            0.0 if l_d_n_t is None else l_d_n_t.item(),
            weights,
            masked_count=int((flat_mask & flat_valid).sum()),
            unmasked_count=int((~flat_mask & flat_valid).sum()),
        )
        if not math.isfinite(breakdown.total):
            raise NumericError(f"non-finite loss at step {step}")
        ad.backward(total_t)
        opt.step()
        record.add_row(step + 1, breakdown.l_q, breakdown.l_d_ell, breakdown.l_d_n, breakdown.total)

        if out_dir is not None and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            path = Path(out_dir) / f"checkpoint-{step + 1:06d}.brd"
            _retrain_checkpoint(path, enc_cfg, cfg, student, projection, opt, step + 1)
            record.checkpoints.append(str(path))

    if teacher.content_hash() != teacher_hash:
        raise NumericError("teacher parameters changed during re-training")
    if quantizer.content_hash() != quantizer_hash:
        raise NumericError("quantizer changed during re-training")

    l_q_series = [row[1] for row in record.rows]
    if l_q_series:
        k = max(1, len(l_q_series) // 10)
        record.metrics["mean_l_q_first_tenth"] = float(np.mean(l_q_series[:k]))
        record.metrics["mean_l_q_last_tenth"] = float(np.mean(l_q_series[-k:]))
    record.metrics["steps"] = start_step + len(record.rows)
    record.metrics["teacher_hash"] = teacher_hash
    record.metrics["quantizer_hash"] = quantizer_hash

    checkpoint_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out_dir / "checkpoint-final.brd"
        _retrain_checkpoint(checkpoint_path, enc_cfg, cfg, student, projection, opt, total_steps)
        record.checkpoints.append(str(checkpoint_path))
        record.save(out_dir)
    return RetrainResult(
        student=student,
        projection=projection,
        record=record,
        checkpoint_path=None if checkpoint_path is None else str(checkpoint_path),
    )


# ---------------------------------------------------------------------------
# fine-tuning


@dataclass
class FinetuneResult:
    student: Params
    decoder: Params
    record: RunRecord
    best_val_wer: float


def transcribe(
    student: Params,
    enc_cfg: EncoderConfig,
    decoder: Params,
    dec_cfg: DecoderConfig,
    tokenizer: Tokenizer,
    entries: list[ManifestEntry],
    store: FeatureStore,
) -> dict[str, str]:
    """Greedy-decode a transcript for every entry."""
    out: dict[str, str] = {}
    for entry in entries:
        with ad.no_grad():
            outs = encoder_forward(student, enc_cfg, store.features(entry), enc_cfg.n_layers)
        ids = greedy_decode(decoder, dec_cfg, outs.final.data[0], max_len=dec_cfg.max_tokens - 1)
        out[entry.id] = tokenizer.decode(ids)
    return out


def validation_wer(
    student: Params,
    enc_cfg: EncoderConfig,
    decoder: Params,
    dec_cfg: DecoderConfig,
    tokenizer: Tokenizer,
    entries: list[ManifestEntry],
    store: FeatureStore,
) -> float:
    hyps = transcribe(student, enc_cfg, decoder, dec_cfg, tokenizer, entries, store)
    results = [wer(e.transcript.split(), hyps[e.id].split()) for e in entries]
    return aggregate_folds(results).wer


def finetune(
    student: Params,
    enc_cfg: EncoderConfig,
    decoder: Params,
    dec_cfg: DecoderConfig,
    tokenizer: Tokenizer,
    train_entries: list[ManifestEntry],
    val_entries: list[ManifestEntry],
    cfg: FinetuneConfig,
    out_dir: str | Path | None = None,
    store: FeatureStore | None = None,
) -> FinetuneResult:
    """Supervised teacher-forced training of encoder + decoder.

    Validation WER is computed several times per epoch; training stops when
    it has failed to improve for `patience` consecutive evaluations, and the
    best-WER parameters are restored at the end.
    """
    if not train_entries:
        raise DataError("finetune needs a non-empty labeled training set")
    if not val_entries:
        raise DataError("finetune needs a non-empty validation set")
    for e in train_entries + val_entries:
        if not e.labeled:
            raise DataError(f"entry {e.id} has no transcript")
        tokenizer.encode(e.transcript)  # raises if the tokenizer does not cover it
    store = store or FeatureStore()

    run_cfg = {"encoder": enc_cfg.to_dict(), "decoder": dec_cfg.to_dict(), "finetune": cfg.to_dict()}
    record = RunRecord(
        stage="finetune",
        config=run_cfg,
        config_hash=config_hash(run_cfg),
        columns=["step", "cross_entropy"],
    )

    opt = Adam([("enc", student, cfg.lr), ("dec", decoder, cfg.lr)])
    batches_per_epoch = math.ceil(len(train_entries) / cfg.batch_size)
    eval_every = max(1, round(batches_per_epoch / cfg.evals_per_epoch))

    best_wer = math.inf
    best_state: tuple[dict, dict] | None = None
    fails = 0
    stop = False
    step = 0

    def run_eval() -> None:
        nonlocal best_wer, best_state, fails, stop
        val = validation_wer(student, enc_cfg, decoder, dec_cfg, tokenizer, val_entries, store)
        record.evals.append({"step": step, "val_wer": val})
        if val < best_wer:
            best_wer = val
            best_state = (
                {k: v.copy() for k, v in student.arrays().items()},
                {k: v.copy() for k, v in decoder.arrays().items()},
            )
            fails = 0
        else:
            fails += 1
            if fails >= cfg.patience:
                stop = True

    for epoch in range(cfg.max_epochs):
        schedule = batch_schedule(train_entries, cfg.seed, epoch, cfg.batch_size)
        for idxs in schedule:
            batch = [train_entries[i] for i in idxs]
            feats = [store.features(e) for e in batch]
            clean, lengths = _pad_feature_batch(feats)
            token_ids = [tokenizer.encode(e.transcript) for e in batch]
            l_max = max(len(t) for t in token_ids)
            tokens = np.full((len(batch), l_max), dec_cfg.pad_id, dtype=np.int64)
            for i, ids in enumerate(token_ids):
                tokens[i, : len(ids)] = ids

            opt.zero_grad()
            outs = encoder_forward(student, enc_cfg, clean, enc_cfg.n_layers, lengths)
            logits = decoder_forward(
                decoder, dec_cfg, outs.final, tokens[:, :-1], enc_lengths=outs.out_lengths
            )
            targets = tokens[:, 1:]
            n_flat = targets.size
            flat_logits = ad.reshape(logits, (n_flat, dec_cfg.vocab_size))
            loss = prediction_loss(
                flat_logits, targets.reshape(n_flat), targets.reshape(n_flat) != dec_cfg.pad_id
            )
            if not math.isfinite(loss.item()):
                raise NumericError(f"non-finite fine-tuning loss at step {step}")
            ad.backward(loss)
            opt.step()
            step += 1
            record.add_row(step, loss.item())
            if step % eval_every == 0:
                run_eval()
                if stop:
                    break
        if stop:
            break
    if not record.evals or record.evals[-1]["step"] != step:
        run_eval()

    if best_state is not None:
        student.load_arrays(best_state[0])
        decoder.load_arrays(best_state[1])
    record.metrics["best_val_wer"] = best_wer
    record.metrics["steps"] = step
    record.metrics["num_evals"] = len(record.evals)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        tensors: dict[str, np.ndarray] = {}
        for name, arr in student.arrays().items():
            tensors[f"enc.{name}"] = arr
        for name, arr in decoder.arrays().items():
            tensors[f"dec.{name}"] = arr
        ckpt_path = out_dir / "checkpoint-best.brd"
        save_checkpoint(
            ckpt_path,
            run_cfg,
            tensors,
            {"generator": "PCG64", "derivation": "per-step", "base_seed": cfg.seed},
            step,
        )
        record.checkpoints.append(str(ckpt_path))
        record.save(out_dir)
    return FinetuneResult(student=student, decoder=decoder, record=record, best_val_wer=best_wer)


# ---------------------------------------------------------------------------
# ablation grid

ABLATION_VARIANTS: tuple[tuple[bool, bool], ...] = (
    (False, False),
    (True, False),
    (False, True),
    (True, True),
)


@dataclass
class AblationRow:
    use_l_d_ell: bool
    use_l_d_n: bool
    test_wer: float
    run_dir: str | None


def run_ablation_grid(
    variants: list[tuple[bool, bool]],
    *,
    enc_cfg: EncoderConfig,
    dec_cfg: DecoderConfig,
    quantizer: QuantizerState,
    unlabeled: list[ManifestEntry],
    train_entries: list[ManifestEntry],
    val_entries: list[ManifestEntry],
    test_entries: list[ManifestEntry],
    tokenizer: Tokenizer,
    retrain_cfg: RetrainConfig,
    finetune_cfg: FinetuneConfig,
    init_student,
    init_decoder,
    out_dir: str | Path | None = None,
    store: FeatureStore | None = None,
) -> list[AblationRow]:
    """Run retrain + finetune once per distillation-flag pair, shared seeds.

    `init_student` / `init_decoder` are zero-argument callables returning
    fresh parameter sets, so every variant starts from identical weights.
    """
    for v in variants:
        if tuple(v) not in ABLATION_VARIANTS:
            raise ValueError(f"unknown ablation variant {v}")
    store = store or FeatureStore()
    rows: list[AblationRow] = []
    for use_ell, use_n in variants:
        variant_cfg = replace(retrain_cfg, use_l_d_ell=use_ell, use_l_d_n=use_n)
        tag = f"ablate-{'Y' if use_ell else 'N'}{'Y' if use_n else 'N'}"
        variant_dir = None if out_dir is None else Path(out_dir) / tag
        student = init_student()
        decoder = init_decoder()
        retrain(student, enc_cfg, quantizer, unlabeled, variant_cfg, out_dir=variant_dir, store=store)
        finetune(
            student,
            enc_cfg,
            decoder,
            dec_cfg,
            tokenizer,
            train_entries,
            val_entries,
            finetune_cfg,
            out_dir=variant_dir,
            store=store,
        )
        hyps = transcribe(student, enc_cfg, decoder, dec_cfg, tokenizer, test_entries, store)
        results = [wer(e.transcript.split(), hyps[e.id].split()) for e in test_entries]
        test = aggregate_folds(results).wer
        rows.append(
            AblationRow(
                use_l_d_ell=use_ell,
                use_l_d_n=use_n,
                test_wer=test,
                run_dir=None if variant_dir is None else str(variant_dir),
            )
        )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "ablation.csv", "w", encoding="utf-8") as fh:
            fh.write("use_l_d_ell,use_l_d_n,test_wer,seed\n")
            for r in rows:
                fh.write(f"{r.use_l_d_ell},{r.use_l_d_n},{r.test_wer!r},{retrain_cfg.seed}\n")
    return rows
