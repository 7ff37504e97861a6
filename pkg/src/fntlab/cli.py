"""``fntlab`` command line: make-data, train, adapt, decode, eval, average, pipeline.

Every command reads an optional INI file (``--config``), applies dotted-key
overrides (``--set section.key=value``, repeatable), and writes the resolved
configuration as ``config.ini`` into its output directory. Failures exit with
status 2 and print one line ``fntlab-error: <Kind>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from pathlib import Path

from . import data
from .adaptation import AdaptConfig, LMTrainConfig, adapt_text_only, perplexity, train_external_lm
from .decoding import FusionConfig, beam_search, default_beam, greedy_decode
from .metrics import WerReport, average_checkpoints, edit_distance, write_report
from .models import FACTORIZED, ModelBundle, ModelConfig, init_model, lm_view
from .pipeline import ExperimentConfig, make_data, run_seed
from .training import NonFiniteLossError, TrainConfig, train

log = logging.getLogger("fntlab")

_E = ExperimentConfig()

DEFAULTS: dict[str, object] = {
    "run.seed": 0,
    "data.V": _E.V,
    "data.feat_dim": _E.feat_dim,
    "data.successors": _E.successors,
    "data.twin_gap": _E.twin_gap,
    "data.twin_bias": _E.twin_bias,
    "data.smoothing": _E.smoothing,
    "data.noise": _E.noise,
    "data.shift": _E.shift,
    "data.n_train": _E.n_train,
    "data.n_dev": _E.n_dev,
    "data.n_test": _E.n_test,
    "data.n_target_text": _E.n_target_text,
    "data.vocab": "",
    "model.arch": "IFNT",
    "model.D": _E.D,
    "model.enc_width": _E.enc_width,
    "model.enc_layers": _E.enc_layers,
    "model.dec_width": _E.dec_width,
    "model.embed_dim": _E.embed_dim,
    "model.lambda_f": _E.lambda_f,
    "train.manifest": "",
    "train.text": "",
    "train.steps": _E.steps,
    "train.batch_size": _E.batch_size,
    "train.lr": _E.lr,
    "train.warmup_steps": _E.warmup_steps,
    "train.checkpoint_every": _E.checkpoint_every,
    "train.keep_last": _E.average_last,
    "adapt.checkpoint": "",
    "adapt.text": "",
    "adapt.steps": _E.adapt_steps,
    "adapt.batch_size": 16,
    "adapt.lr": _E.adapt_lr,
    "adapt.trainable": "vocab_lm.*",
    "decode.checkpoint": "",
    "decode.manifest": "",
    "decode.beam": 0,
    "decode.lambda_T": 0.0,
    "decode.lm": "",
    "decode.nbest": 0,
    "eval.ref": "",
    "eval.hyp": "",
    "eval.lm": "",
    "eval.text": "",
    "average.checkpoints": "",
    "pipeline.seeds": "0",
}


class CliError(Exception):
    """User-facing failure; ``kind`` becomes the machine-parsable error class."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


# --------------------------------------------------------------------------- configuration


def _coerce(key: str, raw: str):
    default = DEFAULTS.get(key)
    if default is None:
        raise CliError("ConfigError", f"unknown config key {key!r}")
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise CliError("ConfigError", f"bad value for {key}: {raw!r}") from None
    return raw.strip()


def resolve_config(config_path: str | None, overrides: list[str], seed: int | None) -> dict:
    cfg = dict(DEFAULTS)
    if config_path:
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keep key case (model.D vs model.d)
        if not parser.read(config_path, encoding="utf-8"):
            raise CliError("ConfigError", f"cannot read config file {config_path}")
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg[f"{section}.{key}"] = _coerce(f"{section}.{key}", raw)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise CliError("ConfigError", f"--set expects key=value, got {item!r}")
        cfg[key.strip()] = _coerce(key.strip(), raw)
    if seed is not None:
        cfg["run.seed"] = seed
    for key in ("model.lambda_f", "decode.lambda_T"):
        if cfg[key] < 0:
            raise CliError("ConfigError", f"{key} must be >= 0")
    return cfg


def write_config(cfg: dict, out: Path) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for key in sorted(cfg):
        section, _, name = key.partition(".")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, str(cfg[key]))
    with open(out / "config.ini", "w", encoding="utf-8") as fh:
        parser.write(fh)


def _path(cfg: dict, key: str, must_exist: bool = True) -> Path:
    value = cfg[key]
    if not value:
        raise CliError("ConfigError", f"{key} is required for this command")
    p = Path(value)
    if must_exist and not p.exists():
        raise CliError("FileNotFound", f"{key}: {p} does not exist")
    return p


def _vocab(cfg: dict, near: Path) -> data.Vocabulary:
    p = Path(cfg["data.vocab"]) if cfg["data.vocab"] else near.parent / "vocab.txt"
    if not p.exists():
        raise CliError("FileNotFound", f"vocabulary file {p} not found (set data.vocab)")
    return data.Vocabulary.load(p)


def _load_model(path: Path) -> ModelBundle:
    try:
        return ModelBundle.load(path)
    except (ValueError, KeyError) as exc:
        raise CliError("CheckpointError", f"{path}: {exc}") from None


def _model_config(cfg: dict, V: int) -> ModelConfig:
    return ModelConfig(arch=cfg["model.arch"], V=V, D=cfg["model.D"], feat_dim=cfg["data.feat_dim"],
                       enc_width=cfg["model.enc_width"], enc_layers=cfg["model.enc_layers"],
                       dec_width=cfg["model.dec_width"], embed_dim=cfg["model.embed_dim"],
                       lambda_f=cfg["model.lambda_f"])


# --------------------------------------------------------------------------- commands


def _experiment_config(cfg: dict):
    return ExperimentConfig(
        V=cfg["data.V"], feat_dim=cfg["data.feat_dim"], successors=cfg["data.successors"],
        twin_gap=cfg["data.twin_gap"], twin_bias=cfg["data.twin_bias"], noise=cfg["data.noise"],
        smoothing=cfg["data.smoothing"],
        shift=cfg["data.shift"], n_train=cfg["data.n_train"], n_dev=cfg["data.n_dev"], n_test=cfg["data.n_test"],
        n_target_text=cfg["data.n_target_text"], D=cfg["model.D"], enc_width=cfg["model.enc_width"],
        enc_layers=cfg["model.enc_layers"], dec_width=cfg["model.dec_width"], embed_dim=cfg["model.embed_dim"],
        lambda_f=cfg["model.lambda_f"], steps=cfg["train.steps"], batch_size=cfg["train.batch_size"],
        lr=cfg["train.lr"], warmup_steps=cfg["train.warmup_steps"], checkpoint_every=cfg["train.checkpoint_every"],
        average_last=cfg["train.keep_last"], adapt_steps=cfg["adapt.steps"], adapt_lr=cfg["adapt.lr"],
    )


def cmd_make_data(cfg: dict, out: Path) -> None:
    d = make_data(_experiment_config(cfg), cfg["run.seed"])
    vocab = data.word_vocabulary(cfg["data.V"])
    vocab.save(out / "vocab.txt")
    data.save_domain_spec(out / "source.spec", d.source)
    data.save_domain_spec(out / "target.spec", d.target)
    for name, utts in [("source_train", d.source_train), ("source_dev", d.source_dev),
                       ("target_dev", d.target_dev), ("target_test", d.target_test)]:
        data.write_manifest(out / f"{name}.tsv", utts, vocab, out / f"{name}.feats")
        data.write_corpus(out / f"{name}.txt", [u.transcript for u in utts], vocab)
    # target training data is text only: no features are ever written for it
    data.write_corpus(out / "target_text.txt", d.target_text, vocab)


def _write_log(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_train(cfg: dict, out: Path) -> None:
    seed = cfg["run.seed"]
    if cfg["model.arch"] == "LM":
        text_path = _path(cfg, "train.text")
        vocab = _vocab(cfg, text_path)
        corpus = data.read_corpus(text_path, vocab)
        lm, losses = train_external_lm(corpus, vocab.V, LMTrainConfig(
            steps=cfg["train.steps"], batch_size=cfg["train.batch_size"], lr=cfg["train.lr"], seed=seed,
            dec_width=cfg["model.dec_width"], embed_dim=cfg["model.embed_dim"]))
        _write_log(out / "train_log.csv", ["step", "lm_ce"], [(i + 1, repr(x)) for i, x in enumerate(losses)])
        lm.save(out / "last.ckpt")
        return

    manifest = _path(cfg, "train.manifest")
    vocab = _vocab(cfg, manifest)
    utts = data.read_manifest(manifest, vocab)
    m = init_model(_model_config(cfg, vocab.V), seed)
    ckdir = out / "checkpoints"
    ckdir.mkdir(exist_ok=True)
    keep = cfg["train.keep_last"]

    def save(step, bundle):
        bundle.save(ckdir / f"step_{step:06d}.ckpt")
        saved = sorted(ckdir.glob("step_*.ckpt"))
        for old in saved[:-keep]:
            old.unlink()

    tcfg = TrainConfig(steps=cfg["train.steps"], batch_size=cfg["train.batch_size"], lr=cfg["train.lr"],
                       warmup_steps=cfg["train.warmup_steps"], seed=seed,
                       checkpoint_every=cfg["train.checkpoint_every"], keep_last=keep)
    history: list = []
    try:
        train(m, utts, tcfg, on_checkpoint=save, on_step=history.append)
    except NonFiniteLossError as exc:
        raise CliError("NonFiniteLoss", f"{exc}; last good checkpoint kept in {ckdir}") from None
    finally:
        _write_log(out / "train_log.csv", ["step", "J_t", "lm_ce", "J_f"],
                   [(h.step, repr(h.J_t), repr(h.lm_ce), repr(h.J_f)) for h in history])
    m.save(out / "last.ckpt")


def cmd_adapt(cfg: dict, out: Path) -> None:
    m = _load_model(_path(cfg, "adapt.checkpoint"))
    if m.arch not in FACTORIZED:
        raise CliError("ArchitectureMismatch",
                       f"adapt needs an FNT/IFNT checkpoint, got {m.arch}; for NT train an LM and decode with fusion")
    text_path = _path(cfg, "adapt.text")
    corpus = data.read_corpus(text_path, _vocab(cfg, text_path))
    acfg = AdaptConfig(steps=cfg["adapt.steps"], batch_size=cfg["adapt.batch_size"], lr=cfg["adapt.lr"],
                       trainable=tuple(p.strip() for p in cfg["adapt.trainable"].split(",") if p.strip()),
                       seed=cfg["run.seed"])
    adapted, losses = adapt_text_only(m, corpus, acfg)
    _write_log(out / "adapt_log.csv", ["step", "lm_ce"], [(i + 1, repr(x)) for i, x in enumerate(losses)])
    (out / "frozen.txt").write_text("".join(n + "\n" for n in adapted.info["frozen"]), encoding="utf-8")
    adapted.save(out / "adapted.ckpt")


def cmd_decode(cfg: dict, out: Path) -> None:
    m = _load_model(_path(cfg, "decode.checkpoint"))
    manifest = _path(cfg, "decode.manifest")
    vocab = _vocab(cfg, manifest)
    utts = data.read_manifest(manifest, vocab)
    beam = cfg["decode.beam"] or default_beam(m.arch)
    fusion = None
    if cfg["decode.lm"]:
        lm = _load_model(_path(cfg, "decode.lm"))
        try:
            fusion = FusionConfig(cfg["decode.lambda_T"], lm if lm.arch == "LM" else lm_view(lm))
        except ValueError as exc:
            raise CliError("FusionError", str(exc)) from None
    lines, nbest_lines = [], []
    for u in utts:
        if beam == 1 and fusion is None and not cfg["decode.nbest"]:
            best = greedy_decode(m, u.feats)
        else:
            try:
                hyps = beam_search(m, u.feats, beam, fusion)
            except ValueError as exc:
                raise CliError("DecodeError", str(exc)) from None
            best = list(hyps[0].tokens)
            for rank, h in enumerate(hyps[: cfg["decode.nbest"]], 1):
                nbest_lines.append(f"{u.id}\t{rank}\t{data.detokenize(h.tokens, vocab)}\t"
                                   f"{float(h.e2e_logscore)!r}\t{float(h.lm_logscore)!r}\n")
        lines.append(f"{u.id}\t{data.detokenize(best, vocab)}\n")
    (out / "hyp.txt").write_text("".join(lines), encoding="utf-8")
    if cfg["decode.nbest"]:
        (out / "nbest.txt").write_text("".join(nbest_lines), encoding="utf-8")


def _read_id_text(path: Path) -> dict[str, list[str]]:
    """``id<TAB>...<TAB>text`` rows (hypothesis files and manifests alike) -> id -> words."""
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            cols = line.split("\t")
            out[cols[0]] = cols[-1].split() if len(cols) > 1 else []
    return out


def cmd_eval(cfg: dict, out: Path) -> None:
    reports: dict[str, WerReport] = {}
    extra: dict = {}
    if cfg["eval.ref"] or cfg["eval.hyp"]:
        ref = _read_id_text(_path(cfg, "eval.ref"))
        hyp = _read_id_text(_path(cfg, "eval.hyp"))
        missing = sorted(set(ref) - set(hyp))
        if missing:
            raise CliError("EvalError", f"{len(missing)} reference ids have no hypothesis, e.g. {missing[0]}")
        total = None
        for uid in sorted(ref):
            r = edit_distance(ref[uid], hyp[uid])
            total = r if total is None else total + r
        reports["wer"] = total
    if cfg["eval.lm"]:
        lm = _load_model(_path(cfg, "eval.lm"))
        text_path = _path(cfg, "eval.text")
        corpus = data.read_corpus(text_path, _vocab(cfg, text_path))
        extra["ppl"] = repr(perplexity(lm if lm.arch == "LM" else lm_view(lm), corpus))
    if not reports and not extra:
        raise CliError("ConfigError", "eval needs eval.ref/eval.hyp and/or eval.lm/eval.text")
    write_report(out / "report.txt", reports, extra)


def cmd_average(cfg: dict, out: Path) -> None:
    paths = [Path(p.strip()) for p in cfg["average.checkpoints"].split(",") if p.strip()]
    if not paths:
        raise CliError("ConfigError", "average.checkpoints is required (comma-separated paths or one directory)")
    if len(paths) == 1 and paths[0].is_dir():
        paths = sorted(paths[0].glob("*.ckpt"))
    for p in paths:
        if not p.exists():
            raise CliError("FileNotFound", f"checkpoint {p} does not exist")
    try:
        avg = average_checkpoints(paths)
    except ValueError as exc:
        raise CliError("CheckpointMismatch", str(exc)) from None
    avg.save(out / "averaged.ckpt")


def cmd_pipeline(cfg: dict, out: Path) -> None:
    exp = _experiment_config(cfg)
    seeds = [int(x) for x in cfg["pipeline.seeds"].split(",") if x.strip()]
    with open(out / "results.jsonl", "w", encoding="utf-8") as fh:
        for s in seeds:
            res = run_seed(exp, s)
            res.pop("_models")
            res.pop("seconds")
            fh.write(json.dumps(res, sort_keys=True) + "\n")
            log.info("seed %d done", s)


COMMANDS = {
    "make-data": cmd_make_data,
    "train": cmd_train,
    "adapt": cmd_adapt,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "average": cmd_average,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fntlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file; [section] key = value maps to section.key")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a dotted config key (repeatable)")
        p.add_argument("--seed", type=int, help="shorthand for --set run.seed=N")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args.config, args.overrides, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_config(cfg, out)
        COMMANDS[args.command](cfg, out)
    except CliError as exc:
        print(f"fntlab-error: {exc.kind}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError) as exc:
        msg = " ".join(str(exc).split())
        print(f"fntlab-error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
