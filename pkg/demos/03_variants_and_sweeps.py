"""Compare the two ablations and sweep label sparsity on Emotions.

Writes CSV/JSON under demos/out/. Takes well under a minute.

Run from the repository root:  python demos/03_variants_and_sweeps.py
"""

from pathlib import Path

from dlst.config import PipelineConfig
from dlst.dataset import load_arff
from dlst.pipeline import run_evaluate, run_missing_sweep, run_train_ratio_sweep

root = Path(__file__).resolve().parents[1]
out = root / "demos" / "out"
ds = load_arff(root / "data/emotions/emotions.arff", root / "data/emotions/emotions.xml")
cfg = PipelineConfig(seed=0)


def show(agg, keys=("ap", "micro_f1", "macro_f1")):
    for name, stats in agg.items():
        print("  %-11s" % name, "  ".join("%s %.4f +- %.4f" % (k, stats[k]["mean"], stats[k]["std"]) for k in keys))


# dlst: full pipeline; dlst1: features -> labels directly; dlst2: ML-KNN on features
print("10 random 10%/90% splits")
show(run_evaluate(cfg, ds, 10, out_dir=out / "variants", dataset_name="emotions").aggregate)

print("\nhiding training labels")
show(run_missing_sweep(cfg, ds, methods=("dlst", "dlst1"), out_dir=out / "missing").aggregate, ("ap",))

print("\nshrinking the training set (3 draws per fraction to keep this quick)")
show(run_train_ratio_sweep(cfg, ds, [0.02, 0.05, 0.1], n_repeats=3, out_dir=out / "ratio").aggregate, ("ap",))
