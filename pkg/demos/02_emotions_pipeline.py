"""Train DLST on a 10% per-class split of Emotions and look inside each stage.

Run from the repository root:  python demos/02_emotions_pipeline.py
"""

from pathlib import Path

import numpy as np

from dlst.config import PipelineConfig
from dlst.dataset import SplitSpec, load_arff, split
from dlst.metrics import evaluate
from dlst.pipeline import run_predict, run_train

root = Path(__file__).resolve().parents[1]
ds = load_arff(root / "data/emotions/emotions.arff", root / "data/emotions/emotions.xml")
print(ds)

train, test = split(ds, SplitSpec(seed=0, train_fraction_per_class=0.1))
print("train", train.n, "test", test.n)
print("positives per class in train:", train.labels.sum(axis=0))

cfg = PipelineConfig(seed=0)
result = run_train(cfg, train)
arc = result.archive

# stage 1: label vectors -> 3-D codes (K = 6, so r = ceil(6 / 2))
codes = arc.train_codes.codes
print("codes", codes.shape, "encoder iterations", result.encoder_iterations)
print("KL trace: first %.4f, last %.4f" % (result.trace[0], result.trace[-1]))

# instances with identical label vectors should land close together
same = (train.labels[:, None, :] == train.labels[None, :, :]).all(-1)
d = np.sqrt(((codes[:, None, :] - codes[None, :, :]) ** 2).sum(-1))
off = ~np.eye(train.n, dtype=bool)
print("mean code distance, same labels: %.3f  different labels: %.3f"
      % (d[same & off].mean(), d[~same].mean()))

# stage 2 + 3: regress codes for the test set, then decode with ML-KNN
labels, scores = run_predict(arc, test)
report = evaluate(scores, test.labels, arc.top_r, pred=labels)
print("top_r", arc.top_r)
for name, value in report.row().items():
    print("  %-9s %.4f" % (name, value))

print("\nper-class precision / recall")
for n, p, r in zip(ds.label_names, report.per_class_precision, report.per_class_recall):
    print("  %-16s %.3f  %.3f" % (n, p, r))

print("\nstage timings (s):", {k: round(v, 3) for k, v in result.timings.items()})
