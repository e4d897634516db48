"""Regenerates the synthetic removal scenes in this directory.

Each scene is a smooth gradient with one solid object pasted on. The target
is the gradient alone. The coarse mask clips a corner of the object; the
candidate masks are the exact object plus an unrelated distractor. Row
`identity` has no object, so source and target are equal.
"""
import json
import os
import random

from PIL import Image

HERE = os.path.dirname(os.path.abspath(__file__))
OBJECTS = [
    ("red ball", "ball", (220, 30, 30)), ("blue cup", "cup", (30, 60, 210)),
    ("yellow kite", "kite", (240, 220, 20)), ("green bottle", "bottle", (30, 170, 60)),
    ("black phone", "phone", (15, 15, 15)), ("white sign", "sign", (250, 250, 250)),
    ("orange cone", "cone", (250, 130, 20)), ("purple bag", "bag", (120, 40, 150)),
    ("brown dog", "dog", (110, 70, 30)), ("pink balloon", "balloon", (240, 120, 170)),
]


def gradient(w, h, base):
    img = Image.new("RGB", (w, h))
    img.putdata([(base[0] + x // 4, base[1] + y // 5, base[2] + (x + y) // 8) for y in range(h) for x in range(w)])
    return img


def rect_mask(w, h, x0, y0, rw, rh):
    m = Image.new("L", (w, h), 0)
    m.paste(255, (x0, y0, x0 + rw, y0 + rh))
    return m


def main():
    rng = random.Random(2024)
    rows = []
    for i, (description, category, color) in enumerate(OBJECTS):
        w, h = rng.randrange(56, 80), rng.randrange(56, 80)
        base = tuple(rng.randrange(40, 120) for _ in range(3))
        rw, rh = rng.randrange(5, 12), rng.randrange(5, 12)
        x0, y0 = rng.randrange(6, w - rw - 6), rng.randrange(6, h - rh - 6)
        target = gradient(w, h, base)
        source = target.copy()
        source.paste(color, (x0, y0, x0 + rw, y0 + rh))
        sid = f"scene{i:02d}"
        source.save(os.path.join(HERE, f"{sid}_source.png"))
        target.save(os.path.join(HERE, f"{sid}_target.png"))
        rect_mask(w, h, max(x0 - 2, 0), max(y0 - 2, 0), 5, 5).save(os.path.join(HERE, f"{sid}_coarse.png"))
        rect_mask(w, h, x0, y0, rw, rh).save(os.path.join(HERE, f"{sid}_object.png"))
        rect_mask(w, h, 0, 0, 4, 4).save(os.path.join(HERE, f"{sid}_other.png"))
        rows.append({
            "id": sid,
            "source": f"{sid}_source.png",
            "target": f"{sid}_target.png",
            "prompt": f"remove the {description}",
            "category": category,
            "coarse_mask": f"{sid}_coarse.png",
            "candidate_masks": [
                {"label": category, "mask": f"{sid}_other.png"},
                {"label": category, "mask": f"{sid}_object.png"},
            ],
        })
    plain = gradient(48, 48, (90, 90, 90))
    plain.save(os.path.join(HERE, "identity.png"))
    Image.new("L", (48, 48), 0).save(os.path.join(HERE, "identity_empty.png"))
    rows.append({
        "id": "identity",
        "source": "identity.png",
        "target": "identity.png",
        "prompt": "remove nothing",
        "coarse_mask": "identity_empty.png",
        "candidate_masks": [],
    })
    with open(os.path.join(HERE, "manifest.json"), "w") as f:
        json.dump({"rows": rows}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
