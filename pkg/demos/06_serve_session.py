"""Drive the HTTP service end to end with a scripted client.

Spins the FastAPI app up in-process, uploads a rendered scene, clicks a
few times, exercises undo, and verifies that replaying the click log in
a fresh session reproduces the final mask byte for byte.

The real deployment is `clickseg serve --checkpoint ... --port 8080`
plus the browser client under frontend/.

Run: python3 demos/06_serve_session.py
"""

import base64
import io
import sys
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient
from PIL import Image

from clickseg.data import make_sample
from clickseg.service import create_app

ckpt = Path("demos/_out/train/final.ckpt")
if not ckpt.exists():
    sys.exit("run demos/04_train_small_model.py first (no checkpoint found)")

client = TestClient(create_app(checkpoint_path=ckpt))
print("healthz:", client.get("/healthz").json())

rng = np.random.default_rng(3)
sample = make_sample(rng, 112, scale_ratio=0.3)


def to_b64(arr):
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


image_png = to_b64((sample.image.transpose(1, 2, 0) * 255).astype(np.uint8))
gt_png = to_b64(sample.mask * 255)

resp = client.post("/sessions", json={"image": image_png, "gt": gt_png}).json()
sid = resp["session_id"]
print(f"session {sid[:8]}... created for a {resp['width']}x{resp['height']} image")

ys, xs = np.nonzero(sample.mask)
clicks = [(int(xs.mean()), int(ys.mean()), True),
          (int(xs[0]), int(ys[0]), True),
          (5, 5, False)]
final_mask = None
for x, y, positive in clicks:
    body = client.post(f"/sessions/{sid}/clicks",
                       json={"x": x, "y": y, "positive": positive}).json()
    final_mask = body["mask"]
    print(f"click ({x:3d}, {y:3d}, {'pos' if positive else 'neg'}): "
          f"IOU {body['iou']:.3f} after {body['click_count']} clicks")

undone = client.post(f"/sessions/{sid}/undo").json()
print("undo ->", undone["click_count"], "clicks left")
client.post(f"/sessions/{sid}/clicks", json={"x": 5, "y": 5, "positive": False})

log = client.get(f"/sessions/{sid}").json()["clicks"]
sid2 = client.post("/sessions", json={"image": image_png, "gt": gt_png}).json()["session_id"]
replayed = None
for c in log:
    replayed = client.post(f"/sessions/{sid2}/clicks", json=c).json()["mask"]
print("replaying the click log reproduces the final mask:", replayed == final_mask)

mask = np.asarray(Image.open(io.BytesIO(base64.b64decode(final_mask))))
out = Path("demos/_out/service_mask.png")
out.parent.mkdir(parents=True, exist_ok=True)
Image.fromarray(mask).save(out)
print("final mask written to", out)
