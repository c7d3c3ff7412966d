"""Train a small model for a few minutes and watch the loss fall.

The full 20-epoch schedule used by the acceptance suite takes ~10
minutes; this demo runs a quarter of it so you can iterate. The
checkpoint it writes feeds demos 05 and 06.

Run: python3 demos/04_train_small_model.py
"""

import csv
from pathlib import Path

from clickseg.config import TrainConfig
from clickseg.train import train

out = Path("demos/_out/train")
cfg = TrainConfig(epochs=6, samples_per_epoch=192, batch_size=8,
                  lr=1e-3, lr_drop_epochs=(4,), seed=0)
print(f"training {cfg.epochs} epochs x {cfg.samples_per_epoch} samples (a few minutes on CPU)...")
result = train(cfg, out, log_every=8)

print("\nepoch losses:", [round(x, 4) for x in result.epoch_losses])
rows = list(csv.DictReader(open(result.loss_csv)))
print(f"loss log has {len(rows)} steps; final step: "
      f"seg {rows[-1]['l_seg']}, contrast {rows[-1]['l_c']}")
print("final checkpoint:", result.final_checkpoint)

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [int(r["step"]) for r in rows]
    plt.figure(figsize=(7, 4))
    plt.plot(steps, [float(r["l_seg"]) for r in rows], label="segmentation (focal)")
    plt.plot(steps, [float(r["l_c"]) for r in rows], label="token contrast (triplet)")
    plt.xlabel("step"); plt.ylabel("loss"); plt.legend(); plt.tight_layout()
    plt.savefig(out / "loss_curve.png", dpi=120)
    print("loss curve:", out / "loss_curve.png")
except ImportError:
    pass
