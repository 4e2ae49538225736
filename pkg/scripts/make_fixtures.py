#!/usr/bin/env python3
"""Generate a small demo corpus: click WAVs with a ground-truth manifest.

Writes N one-second clips of damped clicks over low-level pink noise and a
``manifest.csv`` with one row per click. Clips alternate between two click
frequencies labeled ``table`` (11 kHz) and ``floor`` (16 kHz), so the demo
manifest supports the full detect / featurize / train / eval walkthrough.

Usage: python scripts/make_fixtures.py OUTDIR [--fixtures N] [--seed S]
"""

import argparse
from pathlib import Path

from ttbounce import write_wav
from ttbounce.synth import click_fixture

CLASSES = (("table", 11000.0), ("floor", 16000.0))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("outdir")
    parser.add_argument("--fixtures", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = ["path,onset_ms,surface,spin"]
    for i in range(args.fixtures):
        label, freq = CLASSES[i % 2]
        fx = click_fixture(args.seed * 1000 + i, freq_hz=freq)
        name = f"click_{i:04d}.wav"
        write_wav(outdir / name, fx.clip)
        for onset in fx.onsets_s:
            rows.append(f"{name},{onset * 1000.0:.6f},{label},")
    (outdir / "manifest.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {args.fixtures} clips and manifest.csv to {outdir}")


if __name__ == "__main__":
    main()
