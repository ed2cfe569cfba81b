"""Command-line entry point.

    tabtransformer <command> [--config FILE] [--checkpoint PATH] [--section.key VALUE ...]

Commands: prepare, train, pretrain, finetune, eval, probe, robustness, export.
Exit codes: 0 ok, 2 config error, 3 data error, 4 training error, 5 evaluation error.

Files written into ``output_dir``:

    schema.json          fitted schema (see data.Schema.to_dict)
    split.csv            index,partition  (train rows in shuffled order)
    encoded.npz          encoded dataset cache
    model.tabt           checkpoint from ``train``     (+ history.csv, manifest-train.json)
    pretrain.tabt        checkpoint from ``pretrain``  (+ pretrain_history.csv, manifest-pretrain.json)
    finetune.tabt        checkpoint from ``finetune``  (+ finetune_history.csv, manifest-finetune.json)
    eval.csv, probe.csv, robustness.csv      spec,value,auc,normalized_auc[,...]
    embeddings.csv, embeddings.classes.csv   embedding export
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .checkpoint import load_checkpoint, make_checkpoint, model_from_checkpoint, save_checkpoint
from .data import EncodedDataset, Schema, SplitAssignment, encode, fit_schema, load_csv, semisup_split, split
from .errors import ConfigError, DataError, EvaluationError, TabTError, TrainingError
from .evaluate import PerturbSpec, auc, export_embeddings, linear_probe, perturb_eval, write_report
from .model import TabTransformer
from .pretrain import finetune_init
from .train import train_entropy_reg, train_pretrain, train_pseudo_label, train_supervised

log = logging.getLogger("tabtransformer")

COMMANDS = ("prepare", "train", "pretrain", "finetune", "eval", "probe", "robustness", "export")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, name: str, cfg: C.RunConfig, inputs: dict[str, Path], outputs: list[str]) -> None:
    manifest = {
        "command": name,
        "config": cfg.to_dict(),
        "seed": cfg.train.seed,
        "inputs": {k: _sha256_file(p) for k, p in sorted(inputs.items()) if Path(p).exists()},
        "outputs": sorted(outputs),
    }
    (out / f"manifest-{name}.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


class Prepared:
    """Artifacts written by ``prepare``, loaded back for the other commands."""

    def __init__(self, cfg: C.RunConfig):
        out = Path(cfg.output_dir)
        self.dir = out
        paths = [out / "schema.json", out / "split.csv", out / "encoded.npz"]
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise DataError(f"prepared artifacts missing (run `prepare` first): {', '.join(missing)}")
        self.schema = Schema.load(paths[0])
        self.split = SplitAssignment.load(paths[1])
        self.data = EncodedDataset.load(paths[2])
        self.fingerprint = self.schema.fingerprint()
        self.inputs = {"schema": paths[0], "split": paths[1], "encoded": paths[2]}
        p = cfg.data.p
        if p is not None:
            self.labeled_idx, self.unlabeled_idx = semisup_split(self.split, p)
        else:
            self.labeled_idx, self.unlabeled_idx = self.split.train, self.split.train[:0]

    def part(self, name: str) -> EncodedDataset:
        idx = {"train": self.split.train, "val": self.split.val, "test": self.split.test,
               "labeled": self.labeled_idx, "unlabeled": self.unlabeled_idx}[name]
        return self.data.subset(idx)


def cmd_prepare(cfg: C.RunConfig) -> None:
    out = Path(cfg.output_dir)
    d = cfg.data
    if not d.csv:
        raise ConfigError("data.csv is required")
    try:
        table = load_csv(d.csv, d.has_header, d.delimiter)
    except OSError as exc:
        raise DataError(f"cannot read {d.csv}: {exc}") from exc
    if d.target not in table.header:
        raise DataError(f"target column {d.target!r} not in {d.csv}")
    labels = None
    if d.stratify:
        labels = np.asarray(table.column(d.target))
    assignment = split(len(table), d.split_seed, labels=labels, stratify=d.stratify)
    if d.p is not None:
        semisup_split(assignment, d.p)
    schema = fit_schema(table, assignment.train, d.target, d.overrides, d.categorical_threshold, d.rescaling,
                        d.positive_label)
    data = encode(table, schema)
    out.mkdir(parents=True, exist_ok=True)
    schema.save(out / "schema.json")
    assignment.save(out / "split.csv")
    data.save(out / "encoded.npz")
    _write_manifest(out, "prepare", cfg, {"csv": Path(d.csv)}, ["schema.json", "split.csv", "encoded.npz"])
    log.info("prepared %d rows: %d categorical, %d continuous columns", len(table), len(schema.categorical),
             len(schema.continuous))


def _new_model(cfg: C.RunConfig, prep: Prepared) -> TabTransformer:
    return TabTransformer(prep.schema.cardinalities, len(prep.schema.continuous), cfg.model, seed=cfg.train.seed)


def _fit(cfg: C.RunConfig, prep: Prepared, model: TabTransformer):
    labeled, unlabeled, val = prep.part("labeled"), prep.part("unlabeled"), prep.part("val")
    tcfg = cfg.train.core()
    if cfg.train.method == "entropy-reg":
        return train_entropy_reg(model, labeled, unlabeled, val, tcfg)
    if cfg.train.method == "pseudo-label":
        return train_pseudo_label(model, labeled, unlabeled, val, tcfg)
    return train_supervised(model, labeled, val, tcfg)


def cmd_train(cfg: C.RunConfig) -> None:
    prep = Prepared(cfg)
    model = _new_model(cfg, prep)
    _, hist = _fit(cfg, prep, model)
    save_checkpoint(prep.dir / "model.tabt", make_checkpoint(model, "supervised", prep.fingerprint, cfg.to_dict()))
    hist.to_csv(prep.dir / "history.csv")
    _write_manifest(prep.dir, "train", cfg, prep.inputs, ["model.tabt", "history.csv"])
    log.info("best val AUC %.4f at epoch %d (%s)", hist.best_metric, hist.best_epoch, hist.stop_reason)


def cmd_pretrain(cfg: C.RunConfig) -> None:
    prep = Prepared(cfg)
    model = _new_model(cfg, prep)
    rows = prep.unlabeled_idx if cfg.data.p is not None else prep.split.train
    heads, hist = train_pretrain(model, prep.data.x_cat[rows], cfg.pretrain, cfg.train.core())
    phase = f"pretrain-{cfg.pretrain.objective}"
    ckpt = make_checkpoint(model, phase, prep.fingerprint, cfg.to_dict(), extra_params=heads.state_dict())
    save_checkpoint(prep.dir / "pretrain.tabt", ckpt)
    hist.to_csv(prep.dir / "pretrain_history.csv")
    _write_manifest(prep.dir, "pretrain", cfg, prep.inputs, ["pretrain.tabt", "pretrain_history.csv"])
    log.info("best pretrain val loss %.4f at epoch %d", hist.best_metric, hist.best_epoch)


def cmd_finetune(cfg: C.RunConfig, checkpoint: str | None) -> None:
    prep = Prepared(cfg)
    path = Path(checkpoint) if checkpoint else prep.dir / "pretrain.tabt"
    if not path.exists():
        raise TrainingError(f"pre-trained checkpoint {path} not found")
    ckpt = load_checkpoint(path)
    if not ckpt.phase.startswith("pretrain"):
        raise TrainingError(f"{path} is a {ckpt.phase} checkpoint, not a pre-trained one")
    model = finetune_init(ckpt, prep.fingerprint)
    _, hist = _fit(cfg, prep, model)
    save_checkpoint(prep.dir / "finetune.tabt", make_checkpoint(model, "finetune", prep.fingerprint, cfg.to_dict()))
    hist.to_csv(prep.dir / "finetune_history.csv")
    _write_manifest(prep.dir, "finetune", cfg, {**prep.inputs, "pretrain": path},
                    ["finetune.tabt", "finetune_history.csv"])


def _load_model(prep: Prepared, checkpoint: str | None) -> TabTransformer:
    path = Path(checkpoint) if checkpoint else prep.dir / "model.tabt"
    if not path.exists():
        raise EvaluationError(f"checkpoint {path} not found")
    try:
        return model_from_checkpoint(load_checkpoint(path, expected_fingerprint=prep.fingerprint))
    except (TrainingError, DataError) as exc:
        raise EvaluationError(str(exc)) from exc


def _clean_auc(model: TabTransformer, ds: EncodedDataset) -> float:
    return auc(model.predict_logits(ds.x_cat, ds.x_cont), ds.y)


def cmd_eval(cfg: C.RunConfig, checkpoint: str | None) -> None:
    prep = Prepared(cfg)
    model = _load_model(prep, checkpoint)
    rows = [{"spec": "eval", "value": name, "auc": repr(a), "normalized_auc": repr(1.0)}
            for name, a in ((n, _clean_auc(model, prep.part(n))) for n in ("val", "test"))]
    write_report(prep.dir / "eval.csv", rows)


def cmd_probe(cfg: C.RunConfig, checkpoint: str | None) -> None:
    prep = Prepared(cfg)
    model = _load_model(prep, checkpoint)
    train, test = prep.part("labeled"), prep.part("test")
    ref = _clean_auc(model, test)
    rows = []
    for pooling in cfg.eval.poolings:
        for layer in range(model.n_layers + 1):
            r = linear_probe(model, layer, pooling, train, test, reference_auc=ref,
                             include_continuous=cfg.eval.probe_include_continuous)
            rows.append({"spec": f"probe-{pooling}", "value": layer, "auc": repr(r.auc),
                         "normalized_auc": repr(r.normalized_auc)})
    write_report(prep.dir / "probe.csv", rows)


def cmd_robustness(cfg: C.RunConfig, checkpoint: str | None) -> None:
    prep = Prepared(cfg)
    model = _load_model(prep, checkpoint)
    test = prep.part("test")
    clean = _clean_auc(model, test)
    rows = []
    for kind in cfg.eval.kinds:
        for rate in cfg.eval.rates:
            res = [perturb_eval(model, test, PerturbSpec(kind, float(rate), seed, cfg.eval.imputation), clean)
                   for seed in range(cfg.eval.n_seeds)]
            aucs = np.array([r.auc for r in res])
            rows.append({"spec": kind, "value": rate, "auc": repr(float(aucs.mean())),
                         "normalized_auc": repr(float(aucs.mean() / clean)),
                         "auc_min": repr(float(aucs.min())), "auc_max": repr(float(aucs.max())),
                         "n_seeds": len(res)})
    write_report(prep.dir / "robustness.csv", rows)


def cmd_export(cfg: C.RunConfig, checkpoint: str | None) -> None:
    prep = Prepared(cfg)
    model = _load_model(prep, checkpoint)
    layer = model.n_layers if cfg.eval.export_layer < 0 else cfg.eval.export_layer
    if layer > model.n_layers:
        raise EvaluationError(f"export layer {layer} > model depth {model.n_layers}")
    export_embeddings(model, prep.part(cfg.eval.export_split), layer, prep.dir / "embeddings.csv", prep.schema)


def _split_overrides(rest: list[str]) -> list[tuple[str, str]]:
    pairs = []
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(rest):
                raise ConfigError(f"missing value for {tok}")
            val = rest[i + 1]
            i += 2
        pairs.append((key, val))
    return pairs


def _exit_code(exc: TabTError, command: str) -> int:
    if isinstance(exc, (ConfigError, DataError)):
        return exc.exit_code
    if command in ("train", "pretrain", "finetune"):
        return TrainingError.exit_code
    if command == "prepare":
        return DataError.exit_code
    return EvaluationError.exit_code


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tabtransformer", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--checkpoint", help="checkpoint to read (finetune/eval/probe/robustness/export)")
    parser.add_argument("--objective", choices=("mlm", "rtd"), help="shorthand for --pretrain.objective")
    parser.add_argument("-v", "--verbose", action="store_true")
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        cfg = C.load_config(args.config) if args.config else C.RunConfig()
        overrides = _split_overrides(rest)
        if args.objective:
            overrides.insert(0, ("pretrain.objective", args.objective))
        C.apply_overrides(cfg, overrides)
        if args.command == "prepare":
            cmd_prepare(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "pretrain":
            cmd_pretrain(cfg)
        elif args.command == "finetune":
            cmd_finetune(cfg, args.checkpoint)
        else:
            {"eval": cmd_eval, "probe": cmd_probe, "robustness": cmd_robustness,
             "export": cmd_export}[args.command](cfg, args.checkpoint)
    except TabTError as exc:
        log.error("error: %s", exc)
        return _exit_code(exc, args.command)
    except (ValueError, IndexError, RuntimeError, FloatingPointError) as exc:
        log.error("error: %s", exc)
        if args.command in ("train", "pretrain", "finetune"):
            return TrainingError.exit_code
        if args.command == "prepare":
            return DataError.exit_code
        return EvaluationError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
