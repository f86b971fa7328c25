"""Architecture ablations: train a variant, then code held-out clips with it.

Variants:
    full         recurrent memory, clues attend on memory
    no_memorize  the embedded first frame is the memory (no recurrence)
    no_recall    projected memory and heatmap are concatenated, no attention
    monc         memory attends on clues
"""

from __future__ import annotations

from typing import Sequence as Seq

import numpy as np

from ..container import unpack_container
from .codec import decode_gop, encode_gop
from .metrics import bitrate_kbps, mean_psnr
from .model import ABLATIONS
from .synth import Sequence
from .train import TrainConfig, train_toy


def run_ablation(variant: str, cfg: TrainConfig, data: Seq[Sequence],
                 held_out: Seq[Sequence] | None = None) -> dict:
    if variant not in ABLATIONS:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(ABLATIONS)}")
    memorize, attention = ABLATIONS[variant]
    result = train_toy(cfg.replace(memorize=memorize, attention=attention), data)
    w = result.weights
    clips = list(held_out) if held_out else list(data)
    bits, psnrs, mem_bits = [], [], []
    for seq in clips:
        stream = encode_gop(seq.frames, seq.track, w).pack()
        dec = decode_gop(unpack_container(stream), w)
        bits.append(8 * len(stream))
        mem_bits.append(unpack_container(stream).memory_bits)
        psnrs.append(mean_psnr(seq.frames, dec.frames))
    frames = cfg.gop_size
    return {
        "variant": variant,
        "clips": len(clips),
        "frames_per_gop": frames,
        "bits_per_gop": float(np.mean(bits)),
        "memory_bits_per_gop": float(np.mean(mem_bits)),
        "kbps": float(np.mean([bitrate_kbps(b, frames) for b in bits])),
        "psnr": float(np.mean(psnrs)),
        "final_loss": result.trace[-1] if result.trace else None,
    }
