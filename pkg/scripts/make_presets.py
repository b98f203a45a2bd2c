#!/usr/bin/env python3
"""Regenerate src/cdma/data/*.trace from the layer tables below.

Offload sizes are batch * C * H * W * 4 bytes of each layer's output.
Compute times are fictional: conv-like layers run at 20 GB/s of output,
pooling at 80 GB/s, FC layers take a fixed 1.5 ms plus the conv rate.
Backward time is twice forward.  Density defaults to 0.5.
"""
from pathlib import Path

from cdma.transfer import LayerTraceRecord
from cdma.workload import format_trace

# (name, C, H, W)
NETWORKS = {
    "alexnet": (256, [
        ("conv0", 96, 55, 55), ("pool0", 96, 27, 27), ("conv1", 256, 27, 27),
        ("pool1", 256, 13, 13), ("conv2", 384, 13, 13), ("conv3", 384, 13, 13),
        ("conv4", 256, 13, 13), ("pool2", 256, 6, 6), ("fc0", 4096, 1, 1),
        ("fc1", 4096, 1, 1),
    ]),
    "overfeat": (256, [
        ("conv0", 96, 56, 56), ("pool0", 96, 28, 28), ("conv1", 256, 24, 24),
        ("pool1", 256, 12, 12), ("conv2", 512, 12, 12), ("conv3", 1024, 12, 12),
        ("conv4", 1024, 12, 12), ("pool2", 1024, 6, 6), ("fc0", 3072, 1, 1),
        ("fc1", 4096, 1, 1),
    ]),
    "nin": (128, [
        ("conv0", 96, 54, 54), ("cccp0", 96, 54, 54), ("cccp1", 96, 54, 54),
        ("pool0", 96, 27, 27), ("conv1", 256, 27, 27), ("cccp2", 256, 27, 27),
        ("cccp3", 256, 27, 27), ("pool1", 256, 13, 13), ("conv2", 384, 13, 13),
        ("cccp4", 384, 13, 13), ("cccp5", 384, 13, 13), ("pool2", 384, 6, 6),
        ("conv3", 1024, 6, 6), ("cccp6", 1024, 6, 6), ("cccp7", 1000, 6, 6),
    ]),
    "vgg": (128, [
        ("conv0", 64, 224, 224), ("conv1", 64, 224, 224), ("pool0", 64, 112, 112),
        ("conv2", 128, 112, 112), ("conv3", 128, 112, 112), ("pool1", 128, 56, 56),
        ("conv4", 256, 56, 56), ("conv5", 256, 56, 56), ("conv6", 256, 56, 56),
        ("pool2", 256, 28, 28), ("conv7", 512, 28, 28), ("conv8", 512, 28, 28),
        ("conv9", 512, 28, 28), ("pool3", 512, 14, 14), ("conv10", 512, 14, 14),
        ("conv11", 512, 14, 14), ("conv12", 512, 14, 14), ("pool4", 512, 7, 7),
        ("fc0", 4096, 1, 1), ("fc1", 4096, 1, 1),
    ]),
    "squeezenet": (512, [
        ("conv0", 96, 111, 111), ("pool0", 96, 55, 55), ("fire0", 128, 55, 55),
        ("fire1", 128, 55, 55), ("fire2", 256, 55, 55), ("pool1", 256, 27, 27),
        ("fire3", 256, 27, 27), ("fire4", 384, 27, 27), ("fire5", 384, 27, 27),
        ("fire6", 512, 27, 27), ("pool2", 512, 13, 13), ("fire7", 512, 13, 13),
        ("conv1", 1000, 13, 13),
    ]),
    "googlenet": (256, [
        ("conv0", 64, 112, 112), ("pool0", 64, 56, 56), ("conv1", 192, 56, 56),
        ("pool1", 192, 28, 28), ("inc3a", 256, 28, 28), ("inc3b", 480, 28, 28),
        ("pool2", 480, 14, 14), ("inc4a", 512, 14, 14), ("inc4b", 512, 14, 14),
        ("inc4c", 512, 14, 14), ("inc4d", 528, 14, 14), ("inc4e", 832, 14, 14),
        ("pool3", 832, 7, 7), ("inc5a", 832, 7, 7), ("inc5b", 1024, 7, 7),
    ]),
}


def fwd_seconds(name, nbytes):
    if name.startswith("pool"):
        return nbytes / 80e9
    if name.startswith("fc"):
        return 1.5e-3 + nbytes / 20e9
    return nbytes / 20e9


def main():
    out_dir = Path(__file__).resolve().parents[1] / "src" / "cdma" / "data"
    for net, (batch, layers) in NETWORKS.items():
        records = []
        for name, c, h, w in layers:
            nbytes = batch * c * h * w * 4
            fwd = fwd_seconds(name, nbytes)
            records.append(LayerTraceRecord(name, nbytes, 0.5, fwd, 2 * fwd))
        comment = (f"{net}: batch {batch}; offload_bytes = batch*C*H*W*4\n"
                   "fwd_ms/bwd_ms are SYNTHETIC placeholders, not measurements\n"
                   "density 0.5 is a placeholder; override with --density")
        (out_dir / f"{net}.trace").write_text(format_trace(records, comment), encoding="utf-8")


if __name__ == "__main__":
    main()
