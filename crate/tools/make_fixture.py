#!/usr/bin/env python3
"""Produce the committed model + dataset fixture consumed by spw-faultlab.

Trains the 7-layer LeNet variant (conv 8@4x4 same, pool, conv 16@2x2 valid,
pool, fc 576-120-84-10) on a pool of MNIST digits, quantizes it to Q4.11,
and writes:

  model.spww               weights binary (SPWW v1, CRC32 trailer)
  images.idx3-ubyte        fixture images (IDX, u8 28x28)
  labels.idx1-ubyte        fixture labels (IDX, u8)
  manifest.json            counts, class balance, float reference accuracy,
                           golden predictions of the quantized model

The digit pool is the 10,000-sample MNIST subset shipped inside the npm
package `mnist` (src/digits/<d>.json, pixel values normalized to [0,1] with
three decimals, so round(v * 255) recovers the u8 value exactly).

Usage: make_fixture.py --npm-mnist <dir with src/digits> --out <dir>
"""

import argparse
import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

FRAC_BITS = 11
INT_BITS = 4
PER_CLASS = 100

KIND_CONV, KIND_DENSE, KIND_MAXPOOL, KIND_RELU = 1, 2, 3, 4


def load_pool(root: Path):
    xs, ys = [], []
    for d in range(10):
        data = json.loads((root / "src" / "digits" / f"{d}.json").read_text())["data"]
        v = np.round(np.asarray(data, dtype=np.float64).reshape(-1, 784) * 255.0)
        xs.append(v.astype(np.uint8))
        ys.append(np.full(len(v), d, dtype=np.uint8))
    return np.concatenate(xs), np.concatenate(ys)


class LeNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 8, 4)
        self.conv2 = nn.Conv2d(8, 16, 2)
        self.fc1 = nn.Linear(576, 120)
        self.fc2 = nn.Linear(120, 84)
        self.fc3 = nn.Linear(84, 10)

    def forward(self, x):
        # (left, right, top, bottom) = (1, 2, 1, 2)
        x = F.pad(x, (1, 2, 1, 2))
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        x = x.flatten(1)
        x = F.relu(self.fc1(x))
        x = F.relu(self.fc2(x))
        return self.fc3(x)


def augment(x, gen):
    n = x.shape[0]
    angle = (torch.rand(n, generator=gen) - 0.5) * 2 * (10 * np.pi / 180)
    shift = (torch.rand(n, 2, generator=gen) - 0.5) * 2 * (2.0 / 14.0)
    scale = 1.0 + (torch.rand(n, generator=gen) - 0.5) * 0.2
    cos, sin = torch.cos(angle) * scale, torch.sin(angle) * scale
    theta = torch.stack(
        [torch.stack([cos, -sin, shift[:, 0]], 1), torch.stack([sin, cos, shift[:, 1]], 1)], 1
    )
    grid = F.affine_grid(theta, x.shape, align_corners=False)
    return F.grid_sample(x, grid, align_corners=False)


def train(x, y, epochs, seed):
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    model = LeNet()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, epochs)
    xt = torch.from_numpy(x.reshape(-1, 1, 28, 28).astype(np.float32) / 255.0)
    yt = torch.from_numpy(y.astype(np.int64))
    for epoch in range(epochs):
        model.train()
        perm = torch.randperm(len(xt), generator=gen)
        total = 0.0
        for i in range(0, len(xt), 64):
            idx = perm[i : i + 64]
            xb = augment(xt[idx], gen)
            loss = F.cross_entropy(model(xb), yt[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        sched.step()
        print(f"epoch {epoch + 1}/{epochs} loss {total / len(xt):.4f}", flush=True)
    return model


def quantize(w):
    raw = np.round(np.asarray(w, dtype=np.float64) * (1 << FRAC_BITS))
    return np.clip(raw, -32768, 32767).astype(np.int64)


def round_shift(acc):
    # Q8.22 -> Q4.11, ties to even, saturating
    q = acc >> FRAC_BITS
    rem = acc & ((1 << FRAC_BITS) - 1)
    half = 1 << (FRAC_BITS - 1)
    q = q + ((rem > half) | ((rem == half) & (q & 1 == 1)))
    return np.clip(q, -32768, 32767)


def fixed_forward(params, images):
    """Integer simulation of the engine, batch over images."""
    (w1, b1), (w2, b2), (w3, b3), (w4, b4), (w5, b5) = params
    x = np.round(images.reshape(-1, 1, 28, 28).astype(np.float64) * 2048.0 / 255.0).astype(np.int64)
    n = x.shape[0]

    def conv(x, w, b, pads):
        top, left, bottom, right = pads
        x = np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))
        oc, ic, kh, kw = w.shape
        oh, ow = x.shape[2] - kh + 1, x.shape[3] - kw + 1
        acc = np.zeros((x.shape[0], oc, oh, ow), dtype=np.int64) + (b << FRAC_BITS)[None, :, None, None]
        for c in range(ic):
            for i in range(kh):
                for j in range(kw):
                    patch = x[:, c, i : i + oh, j : j + ow]
                    acc += w[None, :, c, i, j, None, None] * patch[:, None]
        assert np.abs(acc).max() < 2**31
        return round_shift(acc)

    def pool(x):
        h, w = x.shape[2] // 2 * 2, x.shape[3] // 2 * 2
        x = x[:, :, :h, :w]
        return x.reshape(x.shape[0], x.shape[1], h // 2, 2, w // 2, 2).max(axis=(3, 5))

    def dense(x, w, b):
        acc = x @ w.T + (b << FRAC_BITS)[None, :]
        assert np.abs(acc).max() < 2**31
        return round_shift(acc)

    relu = lambda t: np.maximum(t, 0)
    x = pool(relu(conv(x, w1, b1, (1, 1, 2, 2))))
    x = pool(relu(conv(x, w2, b2, (0, 0, 0, 0))))
    x = x.reshape(n, -1)
    x = relu(dense(x, w3, b3))
    x = relu(dense(x, w4, b4))
    return dense(x, w5, b5)


def write_spww(path, params):
    out = bytearray()
    out += b"SPWW"
    out += struct.pack("<HBBH", 1, INT_BITS, FRAC_BITS, 11)
    (w1, b1), (w2, b2), (w3, b3), (w4, b4), (w5, b5) = params

    def conv(w, b, pads):
        out.append(KIND_CONV)
        out.extend(struct.pack("<8H", *w.shape, *pads))
        out.extend(w.astype("<i2").tobytes())
        out.extend(b.astype("<i2").tobytes())

    def dense(w, b):
        out.append(KIND_DENSE)
        out.extend(struct.pack("<2H", w.shape[0], w.shape[1]))
        out.extend(w.astype("<i2").tobytes())
        out.extend(b.astype("<i2").tobytes())

    conv(w1, b1, (1, 1, 2, 2))
    out.append(KIND_RELU)
    out.append(KIND_MAXPOOL)
    conv(w2, b2, (0, 0, 0, 0))
    out.append(KIND_RELU)
    out.append(KIND_MAXPOOL)
    dense(w3, b3)
    out.append(KIND_RELU)
    dense(w4, b4)
    out.append(KIND_RELU)
    dense(w5, b5)
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(out))


def write_idx(path, arr):
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    header = struct.pack(">BBBB", 0, 0, 0x08, arr.ndim) + b"".join(struct.pack(">I", d) for d in arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--npm-mnist", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    x, y = load_pool(args.npm_mnist)
    rng = np.random.default_rng(args.seed)
    fixture_idx = np.concatenate(
        [rng.choice(np.flatnonzero(y == d), PER_CLASS, replace=False) for d in range(10)]
    )
    fixture_idx = rng.permutation(fixture_idx)
    train_mask = np.ones(len(y), dtype=bool)
    train_mask[fixture_idx] = False
    fx, fy = x[fixture_idx], y[fixture_idx]

    model = train(x[train_mask], y[train_mask], args.epochs, args.seed)
    model.eval()
    with torch.no_grad():
        logits = model(torch.from_numpy(fx.reshape(-1, 1, 28, 28).astype(np.float32) / 255.0))
    float_pred = logits.argmax(1).numpy()
    float_acc = float((float_pred == fy).mean())

    layers = [model.conv1, model.conv2, model.fc1, model.fc2, model.fc3]
    params = [
        (quantize(l.weight.detach().numpy()), quantize(l.bias.detach().numpy())) for l in layers
    ]
    for l, (w, _) in zip(layers, params):
        err = np.abs(w / 2048.0 - l.weight.detach().numpy()).max()
        assert err <= 2.0**-12 + 1e-9, err
    golden = fixed_forward(params, fx).argmax(1)
    quant_acc = float((golden == fy).mean())

    write_spww(args.out / "model.spww", params)
    write_idx(args.out / "images.idx3-ubyte", fx.reshape(-1, 28, 28))
    write_idx(args.out / "labels.idx1-ubyte", fy)
    manifest = {
        "count": int(len(fy)),
        "image_file": "images.idx3-ubyte",
        "label_file": "labels.idx1-ubyte",
        "model_file": "model.spww",
        "class_counts": np.bincount(fy, minlength=10).tolist(),
        "float_accuracy": float_acc,
        "quantized_accuracy": quant_acc,
        "golden_predictions": golden.astype(int).tolist(),
        "source": "npm package mnist@1.1.0 (10,000 MNIST digits); 9,000 used for training",
        "seed": args.seed,
    }
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"float accuracy {float_acc:.4f}  quantized accuracy {quant_acc:.4f}")


if __name__ == "__main__":
    main()
