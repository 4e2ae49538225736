#!/usr/bin/env python3
"""Convert a downloaded bounce-sound dataset tree into a manifest CSV.

The public recordings ship as per-clip WAV files; this adapter walks a
directory tree and infers labels from path components:

  <root>/**/<surface>/**/*.wav          surface in racket_01..racket_10,
                                        table, floor, other (also accepts
                                        "racket01", "racket 1" style names)
  .../<surface>/<spin>/*.wav            spin in back, flat, top (racket
                                        surfaces only)

Each clip is assumed to be trimmed so the bounce starts at the annotated
onset; without a sidecar annotation the onset defaults to 0 ms. A sidecar
``onsets.csv`` (columns ``path,onset_ms``) anywhere under the root
overrides the default for the files it lists.

Usage: python scripts/prepare_tt_dataset.py ROOT --out manifest.csv
"""

import argparse
import csv
import re
import sys
from pathlib import Path

SURFACES = {f"racket_{i:02d}" for i in range(1, 11)} | {"table", "floor", "other"}
SPINS = {"back", "flat", "top"}
_RACKET_RE = re.compile(r"racket[\s_-]?(\d{1,2})$", re.IGNORECASE)


def normalize_surface(token: str) -> str | None:
    token = token.strip().lower()
    if token in SURFACES:
        return token
    m = _RACKET_RE.match(token)
    if m and 1 <= int(m.group(1)) <= 10:
        return f"racket_{int(m.group(1)):02d}"
    return None


def classify_path(path: Path, root: Path) -> tuple[str, str] | None:
    surface = None
    spin = ""
    for part in path.relative_to(root).parts[:-1]:
        norm = normalize_surface(part)
        if norm:
            surface = norm
        elif part.strip().lower() in SPINS:
            spin = part.strip().lower()
    if surface is None:
        return None
    if spin and not surface.startswith("racket_"):
        spin = ""
    return surface, spin


def load_onset_overrides(root: Path) -> dict[Path, float]:
    overrides: dict[Path, float] = {}
    for sidecar in root.rglob("onsets.csv"):
        with open(sidecar, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                overrides[(sidecar.parent / row["path"]).resolve()] = float(row["onset_ms"])
    return overrides


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("root")
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    root = Path(args.root)
    if not root.is_dir():
        print(f"error: {root} is not a directory", file=sys.stderr)
        return 2
    overrides = load_onset_overrides(root)
    rows = []
    skipped = 0
    for wav in sorted(root.rglob("*.wav")):
        labels = classify_path(wav, root)
        if labels is None:
            skipped += 1
            continue
        surface, spin = labels
        onset_ms = overrides.get(wav.resolve(), 0.0)
        rows.append(f"{wav.resolve()},{onset_ms},{surface},{spin}")
    if not rows:
        print(
            "error: no labeled WAV files found; expected surface-named "
            "directories (racket_01..racket_10, table, floor, other)",
            file=sys.stderr,
        )
        return 2
    out = Path(args.out)
    out.write_text("path,onset_ms,surface,spin\n" + "\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {len(rows)} rows to {out} ({skipped} unlabeled files skipped)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
