"""``qser`` command-line interface.

Exit codes: 0 success, 2 data/usage error, 3 numerics error, 4 checkpoint
compatibility or corruption.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .audio import read_wav
from .config import resolve
from .dataset import load_manifest, load_split, preprocess
from .errors import CompatibilityError, ConfigError, DataError, InputError, NumericsError, QserError
from .features import read_qimage, waveform_to_qimage
from .layers import softmax
from .training import count_parameters, evaluate_model, train_arrays

EXIT_OK, EXIT_DATA, EXIT_NUMERICS, EXIT_COMPAT = 0, 2, 3, 4

log = logging.getLogger("qser")


def _companion(out: Path, suffix: str) -> Path:
    stem = out.name[: -len(".qser")] if out.name.endswith(".qser") else out.name
    return out.with_name(stem + suffix)


def cmd_preprocess(args) -> int:
    cfg = resolve(args.config, {"train": {"seed": args.seed}})
    print(cfg.echo(), flush=True)
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        raise DataError(f"corpus path {corpus} does not exist")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m = preprocess(corpus, args.labeler, out, cfg.feature, seed=cfg.train.seed, png=args.png)
    for path, reason in m.skipped:
        print(f"skipped {path}: {reason}", file=sys.stderr)
    n_train, n_test = len(m.split_records("train")), len(m.split_records("test"))
    print(f"wrote {len(m.records)} feature records ({n_train} train / {n_test} test), {len(m.labels)} labels")
    print(f"db range [{m.stats.db_min:.3f}, {m.stats.db_max:.3f}] dB, feature hash {m.feature_hash}")
    print(f"manifest: {out / 'manifest.txt'}")
    return EXIT_OK


def cmd_train(args) -> int:
    flags = {
        "train": {
            "epochs": args.epochs,
            "seed": args.seed,
            "batch_size": args.batch_size,
            "learning_rate": args.lr,
            "dropout_p": args.dropout,
            "validation_steps": args.validation_steps,
        },
        "model": {"conv_channels": args.conv_channels},
    }
    cfg = resolve(args.config, flags)
    m = load_manifest(args.manifest)
    if m.stats is None:
        raise DataError("manifest has not been preprocessed")
    for key in ("n_classes", "height", "width"):
        if key in cfg.model:
            raise ConfigError(f"model.{key} is fixed by the manifest and cannot be overridden")
    spec = cfg.model_spec(len(m.labels), m.feature_config.height, m.feature_config.width)
    print(cfg.echo(spec), flush=True)

    report = count_parameters(spec)
    for name, count in report.layers:
        print(f"params {name}: {count}")
    print(f"params total: {report.total} (quaternion conv {report.conv_total} vs real RGB conv {report.real_conv_total})")

    x_train, y_train = load_split(m, "train")
    x_test, y_test = load_split(m, "test")
    out = Path(args.out)
    metrics_path = _companion(out, ".metrics.csv")
    lines = []

    def on_epoch(metrics):
        lines.append(metrics.line())
        print(metrics.line(), flush=True)

    result = train_arrays(x_train, y_train, x_test, y_test, spec, cfg.train, on_epoch=on_epoch)
    metrics_path.write_text("".join(line + "\n" for line in lines))
    size = ckpt_io.save(out, ckpt_io.ModelCheckpoint(result.final, m.labels, m.feature_config, m.stats))
    best_path = _companion(out, ".best.qser")
    ckpt_io.save(best_path, ckpt_io.ModelCheckpoint(result.best, m.labels, m.feature_config, m.stats))
    print(f"checkpoint: {out} ({size} bytes, {size / 1e6:.3f} MB)")
    print(f"best checkpoint: {best_path} (epoch {result.best_epoch})")
    print(f"metrics: {metrics_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ck = ckpt_io.load(args.checkpoint)
    m = load_manifest(args.manifest)
    if m.feature_hash != ck.feature_hash:
        raise CompatibilityError(
            f"checkpoint feature hash {ck.feature_hash} does not match manifest {m.feature_hash}"
        )
    if list(m.labels) != list(ck.labels):
        raise CompatibilityError("checkpoint label table does not match the manifest")
    x, y = load_split(m, args.split)
    rep = evaluate_model(ck.model, x, y)
    if args.json:
        print(json.dumps(rep.to_dict(ck.labels), sort_keys=True))
        return EXIT_OK
    print(f"split: {args.split} ({len(y)} samples)")
    print(f"accuracy: {rep.accuracy:.6f}")
    print(f"unweighted accuracy: {rep.unweighted_accuracy:.6f}")
    for name, acc in zip(ck.labels, rep.per_class):
        print(f"  {name}: {acc:.6f}")
    print("confusion (rows true, cols predicted):")
    print("  " + " ".join(ck.labels))
    for name, row in zip(ck.labels, rep.confusion):
        print(f"  {name}: " + " ".join(str(v) for v in row))
    return EXIT_OK


def cmd_predict(args) -> int:
    ck = ckpt_io.load(args.checkpoint)
    ok = 0
    for path in args.wavfiles:
        try:
            q = waveform_to_qimage(read_wav(path), ck.feature_config, ck.stats)
        except (InputError, ConfigError) as exc:
            print(f"{path}\terror\t{exc}")
            continue
        probs = softmax(ck.model.forward(q.data[None])[0])[0]
        label = ck.labels[int(np.argmax(probs))]
        print(f"{path}\t{label}\t" + ",".join(f"{p:.6f}" for p in probs))
        ok += 1
    return EXIT_OK if ok else EXIT_DATA


def cmd_inspect(args) -> int:
    path = Path(args.path)
    try:
        head = path.read_bytes()[:4]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if head == ckpt_io.MAGIC or path.suffix == ".qser":
        ck = ckpt_io.load(path)
        print(f"checkpoint {path}")
        print(f"spec: {ck.spec.to_dict()}")
        print(f"labels: {', '.join(ck.labels)}")
        print(f"feature hash: {ck.feature_hash}")
        rep = count_parameters(ck.spec)
        for name, count in rep.layers:
            print(f"params {name}: {count}")
        print(f"params total: {rep.total}")
    elif head == b"QIMG":
        q = read_qimage(path)
        im = q.imag
        print(f"qimg {path}: {q.height}x{q.width}x{q.channels}, imag range [{im.min():.6f}, {im.max():.6f}]")
    else:
        m = load_manifest(path)
        print(f"manifest {path}: {len(m.records)} records, labels {', '.join(m.labels)}")
        for idx, name in enumerate(m.labels):
            recs = [r for r in m.records if r.label == idx]
            n_test = sum(r.split == "test" for r in recs)
            print(f"  {name}: {len(recs) - n_test} train / {n_test} test")
        if m.stats is not None:
            print(f"db range [{m.stats.db_min:.3f}, {m.stats.db_max:.3f}], feature hash {m.feature_hash}")
        print(f"skipped: {len(m.skipped)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qser", description="Quaternion CNN speech emotion recognition")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("preprocess", help="turn a wav corpus into QIMG features and a manifest")
    pp.add_argument("--corpus", required=True)
    pp.add_argument("--labeler", choices=["folder", "ravdess"], default="folder")
    pp.add_argument("--out", required=True, help="output directory")
    pp.add_argument("--config")
    pp.add_argument("--seed", type=int, help="split seed")
    pp.add_argument("--png", action="store_true", help="also write PNG previews")
    pp.set_defaults(func=cmd_preprocess)

    pt = sub.add_parser("train", help="train the QCNN on a preprocessed manifest")
    pt.add_argument("--manifest", required=True)
    pt.add_argument("--out", required=True, help="final checkpoint path (.qser)")
    pt.add_argument("--config")
    pt.add_argument("--epochs", type=int)
    pt.add_argument("--seed", type=int)
    pt.add_argument("--batch-size", type=int)
    pt.add_argument("--lr", type=float)
    pt.add_argument("--dropout", type=float)
    pt.add_argument("--validation-steps", type=int)
    pt.add_argument("--conv-channels", help="comma-separated, e.g. 32,64")
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    pe.add_argument("--checkpoint", required=True)
    pe.add_argument("--manifest", required=True)
    pe.add_argument("--split", choices=["test", "train"], default="test")
    pe.add_argument("--json", action="store_true")
    pe.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="classify wav files")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("wavfiles", nargs="+")
    pr.set_defaults(func=cmd_predict)

    pi = sub.add_parser("inspect", help="summarise a checkpoint, QIMG record or manifest")
    pi.add_argument("path")
    pi.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CompatibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except QserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
