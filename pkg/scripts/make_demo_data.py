#!/usr/bin/env python3
"""Generate a synthetic demo corpus for the promptlf pipeline.

Writes a manifest of generated PNG memes plus a base (59-question) and an
expansion (30-question) labeling-function file, sized to exercise every
pipeline stage against the deterministic mock backend. The images and
questions carry no real content; they exist so `promptlf extract` has bytes
to hash and questions to route.

Usage:
    python3 scripts/make_demo_data.py [--out demo_data] [--n-memes 60] [--seed 0]

Requires Pillow (installed with the `dev` extra).
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from PIL import Image, ImageDraw

LANGUAGES = ("en", "hi", "zh")
LABELS = ("Homophobic", "Transphobic", "NonAntiLGBT")
KIND_CYCLE = ("binary", "ordinal", "categorical3", "target3")

TOPICS = (
    "the caption text", "the background art", "the foreground figure",
    "an overlay emoji", "the panel layout", "the color palette",
    "the typography", "a watermark", "the border decoration",
    "a speech bubble", "a hashtag", "the template frame",
    "the reaction face", "the split-screen contrast", "the bottom strip",
    "the headline bar", "the sticker cluster", "the zoom crop",
    "the side-by-side grid", "the quote block", "the label arrow",
    "the corner badge",
)


def question_for(index: int, kind: str) -> str:
    topic = TOPICS[index % len(TOPICS)]
    stems = {
        "binary": f"q{index:02d}: does {topic} refer to a specific community?",
        "ordinal": f"q{index:02d}: how many separate elements make up {topic},"
                   " from zero to five?",
        "categorical3": f"q{index:02d}: which bucket best matches {topic}:"
                        " A, B, or C?",
        "target3": f"q{index:02d}: judging by {topic}, is the joke aimed at"
                   " sexual orientation, gender identity, or neither?",
    }
    return stems[kind]


def write_registry(path: Path, n: int, start: int) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for i in range(start, start + n):
            kind = KIND_CYCLE[i % len(KIND_CYCLE)]
            fh.write(json.dumps({"lf_id": f"lf{i:03d}",
                                 "question": question_for(i, kind),
                                 "kind": kind}) + "\n")


def draw_meme(path: Path, rng: random.Random) -> None:
    image = Image.new("RGB", (64, 64),
                      tuple(rng.randrange(256) for _ in range(3)))
    canvas = ImageDraw.Draw(image)
    for _ in range(3):
        x0, y0 = rng.randrange(48), rng.randrange(48)
        box = (x0, y0, x0 + rng.randrange(4, 16), y0 + rng.randrange(4, 16))
        color = tuple(rng.randrange(256) for _ in range(3))
        (canvas.rectangle if rng.random() < 0.5 else canvas.ellipse)(
            box, fill=color)
    image.save(path)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("demo_data"))
    parser.add_argument("--n-memes", type=int, default=60)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    images_dir = args.out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    with (args.out / "train.jsonl").open("w", encoding="utf-8") as fh:
        for i in range(args.n_memes):
            meme_id = f"demo{i:03d}"
            draw_meme(images_dir / f"{meme_id}.png", rng)
            fh.write(json.dumps({
                "meme_id": meme_id,
                "image_path": f"images/{meme_id}.png",
                "language": LANGUAGES[i % 3],
                "label": LABELS[i % 3],
            }) + "\n")

    write_registry(args.out / "lfs_base.jsonl", 59, start=0)
    write_registry(args.out / "lfs_added.jsonl", 30, start=59)
    print(f"wrote {args.n_memes} memes, 59 base + 30 added LFs under {args.out}/")


if __name__ == "__main__":
    main()
