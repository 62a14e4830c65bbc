"""Full RAVDESS run: preprocess, train at the default config, evaluate on the test split.

    python scripts/run_ravdess.py /data/RAVDESS --work runs/ravdess [--seed 0] [--epochs 50]

The corpus directory is the unpacked speech set (Actor_01 ... Actor_24);
labels come from the emotion field of each file name. Expect hours on a
single CPU core at the default 50 epochs.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from qser.checkpoint import load
from qser.cli import main as qser
from qser.dataset import load_manifest, load_split
from qser.training import evaluate_model


def run(argv):
    code = qser([str(a) for a in argv])
    if code != 0:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("corpus")
    ap.add_argument("--work", default="runs/ravdess")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=50)
    args = ap.parse_args()

    work = Path(args.work)
    start = time.perf_counter()
    run(["preprocess", "--corpus", args.corpus, "--labeler", "ravdess", "--out", work / "features", "--seed", args.seed])
    manifest = work / "features" / "manifest.txt"
    ckpt = work / "qcnn.qser"
    run(["train", "--manifest", manifest, "--out", ckpt, "--seed", args.seed, "--epochs", args.epochs])

    m = load_manifest(manifest)
    x, y = load_split(m, "test")
    results = {}
    for name, path in [("final", ckpt), ("best", ckpt.with_name("qcnn.best.qser"))]:
        rep = evaluate_model(load(path).model, x, y)
        results[name] = rep.to_dict(m.labels)
        print(f"{name} checkpoint: test accuracy {rep.accuracy:.4f}, unweighted {rep.unweighted_accuracy:.4f}")
    results["seconds"] = time.perf_counter() - start
    (work / "results.json").write_text(json.dumps(results, indent=2))
    print(f"results: {work / 'results.json'} ({results['seconds']:.0f}s)")


if __name__ == "__main__":
    main()
