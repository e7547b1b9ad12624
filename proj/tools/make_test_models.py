#!/usr/bin/env python3
# Copyright 2026 The DeepFeat Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Exports residual classifiers to ONNX together with torch reference outputs.

Subcommands:
  tiny      small bottleneck network (committed as a test fixture)
  resnet50  torchvision ResNet-50, random weights unless --pretrained
  images    writes the small natural test images used by the test suite

Reference tensors are written as raw little-endian float32 files next to a
manifest.json describing names and shapes. Captured layers are the outputs of
the batch normalization that follows each non-shortcut convolution.
"""

import argparse
import json
import os
import sys

try:
    import numpy as np
    import torch
    import torch.nn as nn
except ImportError:  # pragma: no cover
    print("torch/numpy not available", file=sys.stderr)
    sys.exit(77)


class Bottleneck(nn.Module):
    def __init__(self, in_ch, width, out_ch, stride):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, width, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = nn.Conv2d(width, width, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(width)
        self.conv3 = nn.Conv2d(width, out_ch, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU()
        self.downsample = None
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch))

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        y = self.relu(self.bn1(self.conv1(x)))
        y = self.relu(self.bn2(self.conv2(y)))
        y = self.bn3(self.conv3(y))
        return self.relu(y + identity)


class TinyResNet(nn.Module):
    """Same topology family as ResNet-50 with far fewer channels and blocks."""

    def __init__(self, num_classes=10):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 8, 7, stride=2, padding=3, bias=False)
        self.bn1 = nn.BatchNorm2d(8)
        self.relu = nn.ReLU()
        self.maxpool = nn.MaxPool2d(3, stride=2, padding=1)
        self.layer1 = nn.Sequential(Bottleneck(8, 4, 16, 1))
        self.layer2 = nn.Sequential(Bottleneck(16, 8, 32, 2), Bottleneck(32, 8, 32, 1))
        self.layer3 = nn.Sequential(Bottleneck(32, 12, 48, 2))
        self.avgpool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(48, num_classes)

    def forward(self, x):
        x = self.maxpool(self.relu(self.bn1(self.conv1(x))))
        x = self.layer3(self.layer2(self.layer1(x)))
        return self.fc(torch.flatten(self.avgpool(x), 1))


def randomize_bn(model, gen):
    for m in model.modules():
        if isinstance(m, nn.BatchNorm2d):
            n = m.num_features
            m.running_mean.copy_(torch.randn(n, generator=gen) * 0.2)
            m.running_var.copy_(torch.rand(n, generator=gen) * 0.8 + 0.4)
            m.weight.data.copy_(torch.rand(n, generator=gen) * 0.8 + 0.6)
            m.bias.data.copy_(torch.randn(n, generator=gen) * 0.1)


def main_bn_modules(model):
    """BatchNorm modules that follow a non-shortcut convolution, in forward order."""
    order = []
    for name, m in model.named_modules():
        if isinstance(m, nn.BatchNorm2d) and "downsample" not in name:
            order.append((name, m))
    return order


def capture(model, x):
    outs = []
    hooks = [m.register_forward_hook(lambda _m, _i, o: outs.append(o.detach().clone()))
             for _, m in main_bn_modules(model)]
    final = {}
    last = model.layer4 if hasattr(model, "layer4") else model.layer3
    hooks.append(last.register_forward_hook(
        lambda _m, _i, o: final.setdefault("act", o.detach().clone())))
    with torch.no_grad():
        logits = model(x)
    for h in hooks:
        h.remove()
    return outs, final["act"], logits


def write_tensor(out_dir, name, t, manifest):
    arr = np.ascontiguousarray(t.numpy().astype("<f4"))
    fname = name + ".f32"
    arr.tofile(os.path.join(out_dir, fname))
    manifest["tensors"].append({"name": name, "shape": list(arr.shape), "file": fname})


def export(model, path, sample, keep_bn):
    kwargs = dict(opset_version=13, input_names=["input"], output_names=["logits"],
                  dynamic_axes={"input": {2: "h", 3: "w"}}, dynamo=False)
    if keep_bn:
        kwargs["training"] = torch.onnx.TrainingMode.PRESERVE
        kwargs["do_constant_folding"] = False
    torch.onnx.export(model, sample, path, **kwargs)


def write_reference(model, out_dir, prefix, sizes, seed, layers=None):
    gen = torch.Generator().manual_seed(seed)
    manifest = {"tensors": []}
    for h, w in sizes:
        x = torch.rand(1, 3, h, w, generator=gen) * 2.0 - 1.0
        outs, act, logits = capture(model, x)
        tag = f"{prefix}_{h}x{w}"
        write_tensor(out_dir, tag + "_input", x[0], manifest)
        for i, o in enumerate(outs, start=1):
            if layers is None or i in layers:
                write_tensor(out_dir, f"{tag}_layer{i}", o[0], manifest)
        write_tensor(out_dir, tag + "_final", act[0], manifest)
        write_tensor(out_dir, tag + "_logits", logits[0], manifest)
    manifest["layer_count"] = len(main_bn_modules(model))
    with open(os.path.join(out_dir, prefix + "_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1)


def cmd_tiny(args):
    torch.manual_seed(args.seed)
    model = TinyResNet().eval()
    randomize_bn(model, torch.Generator().manual_seed(args.seed + 1))
    os.makedirs(args.out, exist_ok=True)
    sample = torch.zeros(1, 3, 64, 48)
    export(model, os.path.join(args.out, "tiny_resnet.onnx"), sample, keep_bn=False)
    export(model, os.path.join(args.out, "tiny_resnet_bn.onnx"), sample, keep_bn=True)
    write_reference(model, args.out, "tiny", [(64, 48), (37, 29)], args.seed + 2)


def cmd_resnet50(args):
    import torchvision
    weights = "IMAGENET1K_V1" if args.pretrained else None
    torch.manual_seed(args.seed)
    model = torchvision.models.resnet50(weights=weights).eval()
    if not args.pretrained:
        randomize_bn(model, torch.Generator().manual_seed(args.seed + 1))
    os.makedirs(args.out, exist_ok=True)
    export(model, os.path.join(args.out, "resnet50.onnx"), torch.zeros(1, 3, 224, 224), False)
    if args.reference:
        write_reference(model, args.out, "resnet50", [(448, 448)], args.seed + 2,
                        layers={1, 10, 49})


def cmd_images(args):
    from skimage import data, transform, io
    os.makedirs(args.out, exist_ok=True)
    picks = {"chelsea": data.chelsea(), "coffee": data.coffee(),
             "astronaut": data.astronaut(), "rocket": data.rocket(),
             "camera": data.camera()}
    for name, img in picks.items():
        h, w = img.shape[:2]
        scale = args.long_side / max(h, w)
        small = transform.resize(img, (round(h * scale), round(w * scale)),
                                 anti_aliasing=True, preserve_range=True)
        small = np.clip(np.rint(small), 0, 255).astype(np.uint8)
        ext = "jpg" if name == "coffee" else "png"
        io.imsave(os.path.join(args.out, f"{name}.{ext}"), small, check_contrast=False)


def main():
    p = argparse.ArgumentParser(description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="cmd", required=True)
    t = sub.add_parser("tiny")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=7)
    r = sub.add_parser("resnet50")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=11)
    r.add_argument("--pretrained", action="store_true")
    r.add_argument("--reference", action="store_true")
    i = sub.add_parser("images")
    i.add_argument("--out", required=True)
    i.add_argument("--long-side", type=int, default=96)
    args = p.parse_args()
    try:
        {"tiny": cmd_tiny, "resnet50": cmd_resnet50, "images": cmd_images}[args.cmd](args)
    except ImportError as e:
        print(f"missing dependency: {e}", file=sys.stderr)
        sys.exit(77)


if __name__ == "__main__":
    main()
