"""Generate the synthetic dataset and visualize a few scenes + masks.

Run: python3 demos/03_synthetic_scenes.py
"""

from pathlib import Path

import numpy as np
from PIL import Image

from clickseg.data import augment, gen_synthetic, save_dataset

out = Path("demos/_out/scenes")
out.mkdir(parents=True, exist_ok=True)

samples = gen_synthetic(seed=7, n=64, side=112)
ratios = np.array([s.scale_ratio for s in samples])
print(f"{len(samples)} scenes; target sizes {ratios.min():.1%} .. {ratios.max():.1%} of the image")
print("size spectrum:", np.round(np.percentile(ratios, [0, 25, 50, 75, 100]), 3))

rng = np.random.default_rng(0)
for i, s in enumerate(samples[:6]):
    img = (s.image.transpose(1, 2, 0) * 255).astype(np.uint8)
    Image.fromarray(img).save(out / f"scene_{i}.png")
    Image.fromarray(s.mask * 255).save(out / f"scene_{i}_mask.png")
    aug = augment(s, rng)
    Image.fromarray((aug.image.transpose(1, 2, 0) * 255).astype(np.uint8)).save(out / f"scene_{i}_aug.png")

save_dataset(samples, out / "dataset.npz")
print(f"previews and dataset.npz written under {out}")
