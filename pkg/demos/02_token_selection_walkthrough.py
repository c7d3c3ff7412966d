"""Step through the click-guided token selection pipeline on one scene.

Shows the reference kernel, similarity scores, the score-valued
selection matrix, and which scale the fusion step picked, then dumps
the PNG overlays + CSV the debugging interface provides.

Run: python3 demos/02_token_selection_walkthrough.py
"""

import numpy as np

from clickseg.clicks import Click, ClickState
from clickseg.config import ModelConfig
from clickseg.data import make_sample
from clickseg.debugviz import dump_selection_debug
from clickseg.model import Segmenter

rng = np.random.default_rng(4)
sample = make_sample(rng, 112, scale_ratio=0.2, kind="blob")
ys, xs = np.nonzero(sample.mask)
cx, cy = int(xs.mean()), int(ys.mean())
print(f"target: {sample.kind}, {sample.scale_ratio:.1%} of the image; clicking ({cx}, {cy})")

model = Segmenter(ModelConfig(), seed=0)
state = ClickState([Click(cx, cy, True)])
result = model.forward(sample.image, state, mode="infer")

for rec in result.records:
    print(f"\nfusion block {rec.block_index}: chose the {rec.chosen} scale")
    for sel in rec.selections.values():
        s = sel.scores.data
        print(f"  {sel.scale:5s} (patch {sel.patch:2d}): {s.size} tokens scored in "
              f"[{s.min():.3f}, {s.max():.3f}], kept top {len(sel.indices)}")
        print(f"         indices {sel.indices[:8].tolist()}{'...' if len(sel.indices) > 8 else ''}")
        print(f"         selection matrix {sel.matrix.data.shape}, "
              f"one score-valued entry per row (differentiable gather)")

paths = dump_selection_debug("demos/_out/selection", sample.image, result)
print("\nwrote", *[str(p) for p in paths], sep="\n  ")
