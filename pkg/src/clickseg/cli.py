"""Command line entry points: gen-data, train, eval, serve."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .config import TrainConfig
from .data import gen_synthetic, load_dataset, save_dataset
from .simulate import aggregate, degrade_mask, evaluate_sample, noc_scale_bins, write_report_csv


def parse_flat_config(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment.

    Values are parsed as bool/int/float when they look like one;
    comma-separated values become tuples.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = _parse_value(value.strip())
    return out


def _parse_value(text: str):
    if "," in text:
        return tuple(_parse_value(v.strip()) for v in text.split(",") if v.strip())
    text = text.strip().strip("\"'")
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def load_train_config(path) -> TrainConfig:
    raw = parse_flat_config(Path(path).read_text())
    known = set(TrainConfig.field_names())
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("lr_drop_epochs",):
        if key in raw and not isinstance(raw[key], tuple):
            raw[key] = () if raw[key] == "" else (raw[key],)
    return TrainConfig(**raw)


def _load_eval_samples(spec: str, side: int):
    """Either a saved dataset (.npz / directory) or 'synth:n=64,seed=7'."""
    path = Path(spec)
    if path.exists():
        if path.is_dir():
            files = sorted(path.glob("*.npz"))
            if not files:
                raise FileNotFoundError(f"no .npz datasets under {path}")
            samples = []
            for f in files:
                samples.extend(load_dataset(f))
            return samples
        return load_dataset(path)
    if spec.startswith("synth:"):
        kv = dict(part.split("=", 1) for part in spec[len("synth:"):].split(",") if part)
        n = int(kv.get("n", 64))
        seed = int(kv.get("seed", 0))
        return gen_synthetic(seed, n, int(kv.get("side", side)))
    raise FileNotFoundError(f"dataset {spec!r} not found (use a path or synth:n=..,seed=..)")


def cmd_gen_data(args) -> int:
    samples = gen_synthetic(args.seed, args.n, args.size)
    save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .train import train

    cfg = load_train_config(args.config)
    result = train(cfg, args.out, log_every=args.log_every)
    print(f"finished: final checkpoint {result.final_checkpoint}")
    print(f"loss log: {result.loss_csv}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    taus = [float(t) for t in args.targets.split(",")]
    samples = _load_eval_samples(args.dataset, model.cfg.side)
    if any(s.side != model.cfg.side for s in samples):
        raise ValueError("dataset resolution does not match the model")
    rng = np.random.default_rng(args.seed)
    records = []
    for i, sample in enumerate(samples):
        init = None
        if args.protocol == "sp":
            init = degrade_mask(sample.mask.astype(bool), rng)
        predict = (lambda s: lambda st: model.predict_probs(s.image, st))(sample)
        records.append(evaluate_sample(predict, sample.mask.astype(bool), taus,
                                       max_clicks=args.max_clicks, init_mask=init,
                                       sample_id=f"{i:04d}", scale_ratio=sample.scale_ratio))
    write_report_csv(records, args.report, taus, max_clicks=args.max_clicks)
    for tau in taus:
        mean, nof = aggregate(records, tau)
        print(f"NoC@{int(round(tau * 100))}: {mean:.3f}  NoF: {nof}")
    hardest = max(taus)
    print("NoC-Scale bins @%.2f:" % hardest)
    for b in noc_scale_bins(records, hardest):
        mean = "-" if b["mean_noc"] is None else f"{b['mean_noc']:.2f}"
        print(f"  [{b['lo']:.1f}, {b['hi']:.1f}): n={b['count']:3d} mean NoC {mean}")
    print(f"report written to {args.report}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.checkpoint, port=args.port, host=args.host, max_sessions=args.max_sessions)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clickseg",
                                     description="Interactive segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=112)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train from a flat key=value config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="click-simulation evaluation (NoC/NoF)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True,
                   help="dataset .npz, a directory of them, or synth:n=..,seed=..")
    p.add_argument("--targets", default="0.80,0.85,0.90")
    p.add_argument("--max-clicks", type=int, default=20)
    p.add_argument("--protocol", choices=("zero", "sp"), default="zero")
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--max-sessions", type=int, default=64)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
