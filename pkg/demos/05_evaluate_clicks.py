"""Click-simulation evaluation: NoC/NoF, NoC-Scale bins, both protocols.

Uses the checkpoint from demo 04 (run that first). The same flow is
available from the command line:

    clickseg eval --checkpoint demos/_out/train/final.ckpt \
        --dataset synth:n=32,seed=555 --targets 0.80,0.85,0.90 \
        --max-clicks 20 --protocol zero --report demos/_out/eval.csv

Run: python3 demos/05_evaluate_clicks.py
"""

import sys
from pathlib import Path

import numpy as np

from clickseg.checkpoint import load_checkpoint
from clickseg.data import gen_synthetic
from clickseg.simulate import aggregate, degrade_mask, evaluate_sample, noc_scale_bins, write_report_csv

ckpt = Path("demos/_out/train/final.ckpt")
if not ckpt.exists():
    sys.exit("run demos/04_train_small_model.py first (no checkpoint found)")

model = load_checkpoint(ckpt)
held = gen_synthetic(seed=555, n=32, side=112)
taus = [0.80, 0.85, 0.90]

print("== scratch protocol (no initial mask) ==")
records = []
for i, s in enumerate(held):
    predict = (lambda smp: lambda st: model.predict_probs(smp.image, st))(s)
    records.append(evaluate_sample(predict, s.mask.astype(bool), taus, max_clicks=20,
                                   sample_id=f"{i:03d}", scale_ratio=s.scale_ratio))
for tau in taus:
    mean, nof = aggregate(records, tau)
    print(f"  NoC@{int(tau * 100)}: {mean:5.2f}   NoF: {nof}")

print("\nNoC-Scale (mean NoC@80 by target-area ratio):")
for b in noc_scale_bins(records, 0.80):
    if b["count"]:
        print(f"  [{b['lo']:.1f}, {b['hi']:.1f}): n={b['count']:2d}  mean NoC {b['mean_noc']:.2f}")

out = Path("demos/_out/eval_report.csv")
write_report_csv(records, out, taus)
print("per-sample report:", out)

print("\n== mask-correction protocol (imperfect initial mask, IOU 0.75-0.85) ==")
rng = np.random.default_rng(0)
sp_records = []
for i, s in enumerate(held[:12]):
    init = degrade_mask(s.mask.astype(bool), rng)
    predict = (lambda smp: lambda st: model.predict_probs(smp.image, st))(s)
    sp_records.append(evaluate_sample(predict, s.mask.astype(bool), taus, max_clicks=20,
                                      init_mask=init, sample_id=f"sp{i:03d}",
                                      scale_ratio=s.scale_ratio))
for tau in taus:
    mean, nof = aggregate(sp_records, tau)
    print(f"  NoC@{int(tau * 100)}: {mean:5.2f}   NoF: {nof}")
