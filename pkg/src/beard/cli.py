"""Command-line entry point for the full pipeline.

Subcommands: gen-corpus, quantize-stats, retrain, finetune, evaluate,
ablate, report. Configuration comes from one TOML or JSON file; every field
can be overridden with --set section.key=value, and the most common knobs
have dedicated flags. Each run writes a self-describing directory
run-<timestamp>-<confighash8> containing the config snapshot, logs, and
artifacts, so recorded seeds regenerate identical outputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Set BEARD_LOG={error|info|debug} to control verbosity.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluation as eval_mod
from . import trainer as trainer_mod
from ._util import BeardError, DataError, NumericError, config_hash
from .features import FeatureConfig
from .model import (
    DecoderConfig,
    EncoderConfig,
    init_decoder_params,
    init_encoder_params,
    load_checkpoint,
)
from .quantizer import build_quantizer, codebook_utilization, quantize, save_quantizer
from .trainer import FeatureStore, FinetuneConfig, RetrainConfig

log = logging.getLogger("beard")


class UsageError(BeardError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # raise instead of sys.exit(2)
        raise UsageError(message)


DEFAULT_CONFIG: dict = {
    "model": {
        "n_mels": 80,
        "n_layers": 8,
        "d_model": 64,
        "n_heads": 4,
        "ff_mult": 4,
        "downsample_factor": 2,
        "max_frames": 3000,
        "dtype": "float32",
        "init_seed": 0,
    },
    "decoder": {
        "n_layers": 2,
        "n_heads": 4,
        "ff_mult": 4,
        "max_tokens": 64,
        "init_seed": 0,
    },
    "quantizer": {
        "codebook_size": 2048,
        "code_dim": 16,
        "seed": 0,
    },
    "retrain": {
        "tap": None,
        "lam": 0.5,
        "beta": 0.1,
        "mask_span": 4,
        "mask_prob": 0.10,
        "lr_encoder": 1e-5,
        "lr_projection": 5e-4,
        "batch_size": 32,
        "epochs": 1,
        "max_steps": None,
        "seed": 0,
        "use_l_d_ell": True,
        "use_l_d_n": True,
        "checkpoint_every": None,
    },
    "finetune": {
        "lr": 1e-5,
        "batch_size": 16,
        "max_epochs": 10,
        "patience": 3,
        "evals_per_epoch": 4.0,
        "seed": 0,
    },
    "data": {
        "corpus_dir": "runs/corpus",
        "folds": 4,
        "fold_index": 0,
        "fold_seed": 0,
    },
    "synthetic": {
        "vocab_size": 6,
        "utterance_count": 120,
        "labeled_count": 48,
        "snr_low": 0.0,
        "snr_high": 40.0,
        "seed": 0,
    },
}


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib  # Python >= 3.11
    except ImportError:
        import tomli as tomllib
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{p}: invalid TOML ({exc})") from exc


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _parse_set(expr: str) -> tuple[str, str, object]:
    if "=" not in expr or "." not in expr.split("=", 1)[0]:
        raise UsageError(f"--set expects section.key=value, got {expr!r}")
    target, raw = expr.split("=", 1)
    section, key = target.split(".", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return section, key, value


def build_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        cfg = _deep_merge(cfg, _load_config_file(args.config))
    for expr in getattr(args, "set", None) or []:
        section, key, value = _parse_set(expr)
        cfg.setdefault(section, {})[key] = value
    flag_map = {
        "seed": ("retrain", "seed"),
        "tap": ("retrain", "tap"),
        "lambda_": ("retrain", "lam"),
        "beta": ("retrain", "beta"),
        "mask_span": ("retrain", "mask_span"),
        "mask_prob": ("retrain", "mask_prob"),
        "codebook_size": ("quantizer", "codebook_size"),
    }
    for attr, (section, key) in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg[section][key] = value
    if getattr(args, "seed", None) is not None:
        # One --seed drives every stage unless the config pins them apart.
        cfg["finetune"]["seed"] = args.seed
        cfg["synthetic"]["seed"] = args.seed
        cfg["quantizer"]["seed"] = args.seed
    return cfg


def _encoder_config(cfg: dict) -> EncoderConfig:
    m = cfg["model"]
    return EncoderConfig(
        n_mels=m["n_mels"],
        n_layers=m["n_layers"],
        d_model=m["d_model"],
        n_heads=m["n_heads"],
        ff_mult=m["ff_mult"],
        downsample_factor=m["downsample_factor"],
        max_frames=m["max_frames"],
        dtype=m["dtype"],
    )


def _decoder_config(cfg: dict, vocab_size: int) -> DecoderConfig:
    d = cfg["decoder"]
    return DecoderConfig(
        vocab_size=vocab_size,
        n_layers=d["n_layers"],
        d_model=cfg["model"]["d_model"],
        n_heads=d["n_heads"],
        ff_mult=d["ff_mult"],
        max_tokens=d["max_tokens"],
        dtype=cfg["model"]["dtype"],
    )


def _retrain_config(cfg: dict) -> RetrainConfig:
    r = cfg["retrain"]
    return RetrainConfig(
        tap=r["tap"],
        lam=r["lam"],
        beta=r["beta"],
        mask_span=r["mask_span"],
        mask_prob=r["mask_prob"],
        lr_encoder=r["lr_encoder"],
        lr_projection=r["lr_projection"],
        batch_size=r["batch_size"],
        epochs=r["epochs"],
        max_steps=r["max_steps"],
        seed=r["seed"],
        use_l_d_ell=r["use_l_d_ell"],
        use_l_d_n=r["use_l_d_n"],
        checkpoint_every=r["checkpoint_every"],
    )


def _finetune_config(cfg: dict) -> FinetuneConfig:
    f = cfg["finetune"]
    return FinetuneConfig(
        lr=f["lr"],
        batch_size=f["batch_size"],
        max_epochs=f["max_epochs"],
        patience=f["patience"],
        evals_per_epoch=f["evals_per_epoch"],
        seed=f["seed"],
    )


def make_run_dir(base: str | Path, cfg: dict) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run_dir = Path(base) / f"run-{stamp}-{config_hash(cfg)}"
    suffix = 0
    while run_dir.exists():
        suffix += 1
        run_dir = Path(base) / f"run-{stamp}-{config_hash(cfg)}-{suffix}"
    run_dir.mkdir(parents=True)
    with open(run_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
    return run_dir


def _corpus_entries(cfg: dict, which: str) -> list[data_mod.ManifestEntry]:
    corpus_dir = Path(cfg["data"]["corpus_dir"])
    manifest = corpus_dir / f"{which}.jsonl"
    return data_mod.load_manifest(manifest)


def _threads(args) -> int:
    return max(1, getattr(args, "threads", None) or 1)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_corpus(args) -> int:
    cfg = build_config(args)
    s = cfg["synthetic"]
    vocab = tuple(f"tok{i}" for i in range(int(s["vocab_size"])))
    spec = data_mod.SyntheticSpec(
        vocab=vocab,
        utterance_count=int(s["utterance_count"]),
        noise_snr_range_db=(float(s["snr_low"]), float(s["snr_high"])),
        seed=int(s["seed"]),
        labeled_count=int(s["labeled_count"]),
    )
    out_dir = Path(args.out or cfg["data"]["corpus_dir"])
    corpus = data_mod.generate_synthetic_corpus(spec, out_dir)
    log.info("wrote corpus under %s", out_dir)
    print(f"unlabeled manifest: {corpus.unlabeled_manifest}")
    print(f"labeled manifest:   {corpus.labeled_manifest}")
    return 0


def cmd_quantize_stats(args) -> int:
    cfg = build_config(args)
    enc_cfg = _encoder_config(cfg)
    q = build_quantizer(
        d_in=enc_cfg.n_mels * enc_cfg.downsample_factor,
        d_code=cfg["quantizer"]["code_dim"],
        codebook_size=cfg["quantizer"]["codebook_size"],
        seed=cfg["quantizer"]["seed"],
    )
    entries = data_mod.load_manifest(args.manifest) if args.manifest else _corpus_entries(cfg, "unlabeled")
    store = FeatureStore(threads=_threads(args))
    store.preload(entries)
    all_labels = [store.labels(e, q, enc_cfg.downsample_factor) for e in entries]
    labels = np.concatenate(all_labels) if all_labels else np.array([], dtype=np.int64)
    stats = codebook_utilization(labels, q.codebook_size)
    run_dir = make_run_dir(args.out or "runs", cfg)
    save_quantizer(q, run_dir / "quantizer.brq")
    payload = {
        "entropy_bits": stats.entropy_bits,
        "fraction_used": stats.fraction_used,
        "num_labels": stats.num_labels,
        "codebook_size": q.codebook_size,
    }
    with open(run_dir / "quantize-stats.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    print(f"labels: {stats.num_labels}")
    print(f"utilization entropy: {stats.entropy_bits:.3f} bits")
    print(f"fraction of codes used: {stats.fraction_used:.4f}")
    print(f"run dir: {run_dir}")
    return 0


def _init_student(cfg: dict):
    enc_cfg = _encoder_config(cfg)
    return enc_cfg, init_encoder_params(enc_cfg, seed=cfg["model"]["init_seed"])


def cmd_retrain(args) -> int:
    cfg = build_config(args)
    enc_cfg, student = _init_student(cfg)
    if args.init_checkpoint:
        ckpt = load_checkpoint(args.init_checkpoint)
        student.load_arrays({k[4:]: v for k, v in ckpt.tensors.items() if k.startswith("enc.")})
    q = build_quantizer(
        d_in=enc_cfg.n_mels * enc_cfg.downsample_factor,
        d_code=cfg["quantizer"]["code_dim"],
        codebook_size=cfg["quantizer"]["codebook_size"],
        seed=cfg["quantizer"]["seed"],
    )
    entries = data_mod.load_manifest(args.manifest) if args.manifest else _corpus_entries(cfg, "unlabeled")
    run_dir = make_run_dir(args.out or "runs", cfg)
    store = FeatureStore(threads=_threads(args))
    store.preload(entries)
    save_quantizer(q, run_dir / "quantizer.brq")
    result = trainer_mod.retrain(
        student, enc_cfg, q, entries, _retrain_config(cfg), out_dir=run_dir, store=store
    )
    first = result.record.metrics.get("mean_l_q_first_tenth")
    last = result.record.metrics.get("mean_l_q_last_tenth")
    print(f"steps: {result.record.metrics['steps']}")
    if first is not None:
        print(f"mean prediction loss, first tenth: {first:.4f}")
        print(f"mean prediction loss, last tenth:  {last:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"run dir: {run_dir}")
    return 0


def _fold_split(cfg: dict, entries):
    d = cfg["data"]
    plan = data_mod.make_folds(entries, k=d["folds"], seed=d["fold_seed"])
    return data_mod.split_fold(entries, plan, d["fold_index"], seed=d["fold_seed"])


def _write_eval_outputs(run_dir: Path, refs: dict, hyps: dict, snr_by_id: dict | None) -> None:
    eval_mod.save_text_jsonl(refs, run_dir / "refs.jsonl")
    eval_mod.save_text_jsonl(hyps, run_dir / "hyps.jsonl")
    score = eval_mod.score_corpus(refs, hyps, snr_by_id)
    with open(run_dir / "eval.json", "w", encoding="utf-8") as fh:
        json.dump(score.to_dict(), fh, indent=2, sort_keys=True)
    if score.snr_report is not None:
        _write_snr_csv(run_dir / "snr_bins.csv", score.snr_report.to_rows())
    print(f"test WER: {score.overall.wer:.4f} "
          f"(S={score.overall.substitutions} D={score.overall.deletions} "
          f"I={score.overall.insertions} N={score.overall.reference_words})")


def _write_snr_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("low_db,high_db,utterances,reference_words,wer\n")
        for r in rows:
            wer = "" if r["wer"] is None else repr(r["wer"])
            fh.write(f"{r['low_db']},{r['high_db']},{r['utterances']},{r['reference_words']},{wer}\n")


def cmd_finetune(args) -> int:
    cfg = build_config(args)
    enc_cfg, student = _init_student(cfg)
    if args.retrain_checkpoint:
        ckpt = load_checkpoint(args.retrain_checkpoint)
        student.load_arrays({k[4:]: v for k, v in ckpt.tensors.items() if k.startswith("enc.")})
    labeled = data_mod.load_manifest(args.manifest) if args.manifest else _corpus_entries(cfg, "labeled")
    train_e, val_e, test_e = _fold_split(cfg, labeled)
    tokenizer = data_mod.Tokenizer.from_entries(labeled)
    dec_cfg = _decoder_config(cfg, tokenizer.size)
    decoder = init_decoder_params(dec_cfg, seed=cfg["decoder"]["init_seed"])
    run_dir = make_run_dir(args.out or "runs", cfg)
    store = FeatureStore(threads=_threads(args))
    store.preload(labeled)
    result = trainer_mod.finetune(
        student, enc_cfg, decoder, dec_cfg, tokenizer, train_e, val_e,
        _finetune_config(cfg), out_dir=run_dir, store=store,
    )
    print(f"best validation WER: {result.best_val_wer:.4f}")
    hyps = trainer_mod.transcribe(student, enc_cfg, decoder, dec_cfg, tokenizer, test_e, store)
    refs = {e.id: e.transcript for e in test_e}
    snr = {e.id: e.snr_db for e in test_e if e.snr_db is not None}
    _write_eval_outputs(run_dir, refs, hyps, snr or None)
    print(f"run dir: {run_dir}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    refs = eval_mod.load_text_jsonl(args.refs)
    hyps = eval_mod.load_text_jsonl(args.hyps)
    snr_by_id = None
    if args.manifest:
        entries = data_mod.load_manifest(args.manifest)
        snr_by_id = {e.id: e.snr_db for e in entries if e.snr_db is not None}
    run_dir = make_run_dir(args.out or "runs", cfg)
    _write_eval_outputs(run_dir, refs, hyps, snr_by_id)
    print(f"run dir: {run_dir}")
    return 0


_VARIANT_CODES = {"NN": (False, False), "YN": (True, False), "NY": (False, True), "YY": (True, True)}


def _parse_variants(spec: str) -> list[tuple[bool, bool]]:
    if spec.strip().lower() == "all":
        return list(trainer_mod.ABLATION_VARIANTS)
    out = []
    for code in spec.split(","):
        code = code.strip().upper()
        if code not in _VARIANT_CODES:
            raise UsageError(f"unknown ablation variant {code!r}; use NN, YN, NY, YY or 'all'")
        out.append(_VARIANT_CODES[code])
    return out


def cmd_ablate(args) -> int:
    cfg = build_config(args)
    variants = _parse_variants(args.variants)
    enc_cfg = _encoder_config(cfg)
    unlabeled = _corpus_entries(cfg, "unlabeled")
    labeled = _corpus_entries(cfg, "labeled")
    train_e, val_e, test_e = _fold_split(cfg, labeled)
    tokenizer = data_mod.Tokenizer.from_entries(labeled)
    dec_cfg = _decoder_config(cfg, tokenizer.size)
    q = build_quantizer(
        d_in=enc_cfg.n_mels * enc_cfg.downsample_factor,
        d_code=cfg["quantizer"]["code_dim"],
        codebook_size=cfg["quantizer"]["codebook_size"],
        seed=cfg["quantizer"]["seed"],
    )
    run_dir = make_run_dir(args.out or "runs", cfg)
    store = FeatureStore(threads=_threads(args))
    store.preload(unlabeled + labeled)
    rows = trainer_mod.run_ablation_grid(
        variants,
        enc_cfg=enc_cfg,
        dec_cfg=dec_cfg,
        quantizer=q,
        unlabeled=unlabeled,
        train_entries=train_e,
        val_entries=val_e,
        test_entries=test_e,
        tokenizer=tokenizer,
        retrain_cfg=_retrain_config(cfg),
        finetune_cfg=_finetune_config(cfg),
        init_student=lambda: init_encoder_params(enc_cfg, seed=cfg["model"]["init_seed"]),
        init_decoder=lambda: init_decoder_params(dec_cfg, seed=cfg["decoder"]["init_seed"]),
        out_dir=run_dir,
        store=store,
    )
    for r in rows:
        print(f"use_l_d_ell={r.use_l_d_ell} use_l_d_n={r.use_l_d_n} test WER={r.test_wer:.4f}")
    print(f"run dir: {run_dir}")
    return 0


def cmd_report(args) -> int:
    run_dirs = [Path(d) for d in args.run_dirs]
    missing: list[str] = []
    for d in run_dirs:
        if not (d / "eval.json").exists():
            missing.append(str(d / "eval.json"))
    if missing:
        raise DataError("missing eval outputs: " + ", ".join(missing))
    out_dir = Path(args.out or "runs/report")
    out_dir.mkdir(parents=True, exist_ok=True)
    comparison: list[dict] = []
    snr_rows: list[dict] = []
    curve_rows: list[tuple] = []
    for d in run_dirs:
        with open(d / "eval.json", "r", encoding="utf-8") as fh:
            evaluation = json.load(fh)
        method, tap, lam = "finetune", "", ""
        retrain_meta = d / "retrain-run.json"
        config_snapshot = d / "config.json"
        if config_snapshot.exists():
            with open(config_snapshot, "r", encoding="utf-8") as fh:
                snap = json.load(fh)
            if "retrain" in snap:
                tap = snap["retrain"].get("tap")
                lam = snap["retrain"].get("lam")
        if retrain_meta.exists():
            method = "retrain+finetune"
        comparison.append(
            {"run": d.name, "method": method, "tap": tap, "lam": lam,
             "wer": evaluation["overall"]["wer"]}
        )
        for row in evaluation.get("snr_bins", []):
            snr_rows.append({"run": d.name, **row})
        for stage in ("retrain", "finetune"):
            csv_path = d / f"{stage}-losses.csv"
            if csv_path.exists():
                lines = csv_path.read_text(encoding="utf-8").strip().splitlines()
                header = lines[0].split(",")
                for line in lines[1:]:
                    values = line.split(",")
                    step = values[0]
                    for name, value in zip(header[1:], values[1:]):
                        curve_rows.append((d.name, stage, step, name, value))
    with open(out_dir / "comparison.csv", "w", encoding="utf-8") as fh:
        fh.write("run,method,tap,lambda,wer\n")
        for c in comparison:
            fh.write(f"{c['run']},{c['method']},{c['tap']},{c['lam']},{c['wer']!r}\n")
    with open(out_dir / "comparison.md", "w", encoding="utf-8") as fh:
        fh.write("| run | method | tap | lambda | WER |\n|---|---|---|---|---|\n")
        for c in comparison:
            fh.write(f"| {c['run']} | {c['method']} | {c['tap']} | {c['lam']} | {c['wer']:.4f} |\n")
    with open(out_dir / "snr_bins.csv", "w", encoding="utf-8") as fh:
        fh.write("run,low_db,high_db,utterances,reference_words,wer\n")
        for r in snr_rows:
            wer = "" if r["wer"] is None else repr(r["wer"])
            fh.write(f"{r['run']},{r['low_db']},{r['high_db']},{r['utterances']},{r['reference_words']},{wer}\n")
    with open(out_dir / "loss_curves.csv", "w", encoding="utf-8") as fh:
        fh.write("run,stage,step,metric,value\n")
        for row in curve_rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    print(f"report written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: _Parser) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override any config field (repeatable)")
    p.add_argument("--seed", type=int, help="base seed for all stages")
    p.add_argument("--tap", type=int, help="encoder layer for the prediction head")
    p.add_argument("--lambda", dest="lambda_", type=float, help="distillation weight")
    p.add_argument("--beta", type=float, help="down-weight for the final-layer distillation")
    p.add_argument("--mask-span", dest="mask_span", type=int, help="mask span in input frames")
    p.add_argument("--mask-prob", dest="mask_prob", type=float, help="per-frame span-start probability")
    p.add_argument("--codebook-size", dest="codebook_size", type=int, help="quantizer codebook size")
    p.add_argument("--threads", type=int, help="data-loading threads (results are independent)")
    p.add_argument("--out", help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="beard", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate the synthetic tone corpus")
    _add_common(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("quantize-stats", help="codebook utilization diagnostics")
    _add_common(p)
    p.add_argument("--manifest", help="manifest to quantize (default: corpus unlabeled split)")
    p.set_defaults(func=cmd_quantize_stats)

    p = sub.add_parser("retrain", help="re-train the encoder on unlabeled audio")
    _add_common(p)
    p.add_argument("--manifest", help="unlabeled manifest (default: corpus unlabeled split)")
    p.add_argument("--init-checkpoint", help="checkpoint with initial encoder weights")
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("finetune", help="supervised fine-tuning plus test-set decoding")
    _add_common(p)
    p.add_argument("--manifest", help="labeled manifest (default: corpus labeled split)")
    p.add_argument("--retrain-checkpoint", help="encoder checkpoint from the retrain stage")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="score hypothesis transcripts against references")
    _add_common(p)
    p.add_argument("--refs", required=True, help="JSONL of reference transcripts (id, text)")
    p.add_argument("--hyps", required=True, help="JSONL of hypothesis transcripts (id, text)")
    p.add_argument("--manifest", help="manifest providing per-utterance SNR metadata")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the distillation-flag ablation grid")
    _add_common(p)
    p.add_argument("--variants", default="all", help="all or comma list of NN,YN,NY,YY")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="aggregate run directories into tables")
    _add_common(p)
    p.add_argument("run_dirs", nargs="+", help="run directories with eval outputs")
    p.set_defaults(func=cmd_report)
    return parser


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("BEARD_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError,) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
