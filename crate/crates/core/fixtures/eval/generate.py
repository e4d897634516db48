"""Regenerates the evaluation datasets and scripted fixtures in this directory.

Each case lists the leaves it expects plus what the scripted model answers in
hierarchical mode (main call, then one sub call per group) and in flat mode.
Cases marked wrong are where the script deliberately picks badly.
"""
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))

GROUPS = {
    "Lipstick Coloring": ["Pure Red", "Burnt Tomato", "Pure Orange", "Rose Pink", "Coral",
                          "Berry", "Nude Beige", "Plum", "Deep Wine"],
    "Photo Filters": ["Grayscale", "Sepia", "Warm", "Cool", "Vintage"],
    "Face Shaping": ["Enlarge Eyes", "Widen Eye Distance", "Slim Face", "Narrow Nose"],
}
PARENT = {leaf: g for g, leaves in GROUPS.items() for leaf in leaves}

# (instruction, expected leaf, hierarchical answer override, flat answer override)
# An override is a list of leaves the script resolves instead of the expected one.
SINGLE = [
    ("make my skin look fairer", "Whiten Skin", None, None),
    ("can you brighten up my complexion a lot", "Whiten Skin", None, None),
    ("i look too pale, give me a tan", "Darken Skin", None, None),
    ("darker skin tone please, like after a beach holiday", "Darken Skin", None, None),
    ("i want an orange lipstick", "Pure Orange", None, None),
    ("put a classic red on my lips", "Pure Red", None, None),
    ("lipstick that brightens my complexion", "Burnt Tomato", ["Whiten Skin"], ["Pure Red"]),
    ("give me soft pink lips", "Rose Pink", None, None),
    ("a coral lip color would be nice", "Coral", None, None),
    ("berry colored lips for autumn", "Berry", None, ["Plum"]),
    ("just a natural nude lip", "Nude Beige", None, None),
    ("dark purple lipstick please", "Plum", None, None),
    ("burgundy lips like red wine", "Deep Wine", None, None),
    ("tomato red lipstick", "Burnt Tomato", None, None),
    ("make it black and white", "Grayscale", None, None),
    ("turn the photo into an old brown-toned picture", "Sepia", None, None),
    ("warmer tones please", "Warm", None, None),
    ("give it a cool bluish feel", "Cool", None, None),
    ("retro film look", "Vintage", None, None),
    ("monochrome please", "Grayscale", None, None),
    ("make it feel like a summer sunset", "Warm", ["Vintage"], ["Vintage"]),
    ("I want bigger eyes", "Enlarge Eyes", None, None),
    ("my eyes are too close together", "Widen Eye Distance", None, None),
    ("slim my face", "Slim Face", None, None),
    ("my nose looks too wide", "Narrow Nose", None, None),
    ("v-shaped jawline please", "Slim Face", None, ["Narrow Nose"]),
    ("make my eyes look larger and brighter", "Enlarge Eyes", ["Enlarge Eyes", "Open Eyes"], None),
    ("remove the brown dog on the left", "Object Removal", None, None),
    ("get rid of the trash can behind me", "Object Removal", None, None),
    ("erase the person in the background", "Object Removal", None, None),
    ("keep only the cat and drop the background", "Object Retention", None, None),
    ("cut me out of this picture", "Object Retention", ["Object Removal"], ["Object Removal"]),
    ("can u open my eyes", "Open Eyes", None, None),
    ("i blinked in this photo, fix it", "Open Eyes", None, None),
    ("my eyes are half closed", "Open Eyes", None, None),
    ("this photo is blurry, sharpen it", "Image Enhancement", None, None),
    ("improve the quality of this old photo", "Image Enhancement", None, None),
    ("the picture is too noisy and low resolution", "Image Enhancement", ["Vintage"], None),
    ("whiten my face a bit", "Whiten Skin", None, None),
    ("bronze skin look", "Darken Skin", None, None),
    ("a pink lipstick for a date", "Rose Pink", None, None),
    ("plum colored lips", "Plum", None, None),
    ("give it an icy winter tone", "Cool", None, ["Grayscale"]),
    ("vintage style please", "Vintage", None, None),
    ("sepia effect", "Sepia", None, None),
    ("thinner cheeks", "Slim Face", None, None),
    ("remove the car from the street", "Object Removal", None, None),
    ("only keep the flower", "Object Retention", None, None),
    ("my eyes are shut, open them", "Open Eyes", None, None),
    ("enhance the details", "Image Enhancement", None, None),
]

PHRASES = {
    "Whiten Skin": "make my skin whiter",
    "Darken Skin": "give me a tanned skin tone",
    "Pure Red": "a bold red lipstick",
    "Burnt Tomato": "a brick red lip",
    "Pure Orange": "orange lips",
    "Rose Pink": "rosy pink lips",
    "Coral": "coral lipstick",
    "Berry": "berry lips",
    "Nude Beige": "a nude lip",
    "Plum": "plum lipstick",
    "Deep Wine": "wine colored lips",
    "Grayscale": "turn it black and white",
    "Sepia": "add a sepia tone",
    "Warm": "make the colors warmer",
    "Cool": "make the colors cooler",
    "Vintage": "give it a retro look",
    "Enlarge Eyes": "make my eyes bigger",
    "Widen Eye Distance": "set my eyes further apart",
    "Slim Face": "slim down my face",
    "Narrow Nose": "make my nose narrower",
    "Object Removal": "remove the lamp post",
    "Object Retention": "keep only the dog",
    "Open Eyes": "open my eyes",
    "Image Enhancement": "sharpen the blurry photo",
}
CONNECTORS = ["{a} and {b}", "{a}, then {b}", "please {a} and also {b}", "{a} plus {b}", "could you {a} and {b}"]

# Pairs of leaves; every index below also says which ones the script gets wrong.
DUAL_PAIRS = [
    ("Whiten Skin", "Pure Red"), ("Darken Skin", "Warm"), ("Pure Orange", "Enlarge Eyes"),
    ("Rose Pink", "Slim Face"), ("Coral", "Open Eyes"), ("Berry", "Vintage"),
    ("Nude Beige", "Whiten Skin"), ("Plum", "Cool"), ("Deep Wine", "Sepia"),
    ("Burnt Tomato", "Narrow Nose"), ("Grayscale", "Object Removal"), ("Sepia", "Image Enhancement"),
    ("Warm", "Enlarge Eyes"), ("Cool", "Slim Face"), ("Vintage", "Open Eyes"),
    ("Enlarge Eyes", "Slim Face"), ("Widen Eye Distance", "Narrow Nose"), ("Slim Face", "Whiten Skin"),
    ("Narrow Nose", "Pure Red"), ("Object Removal", "Warm"), ("Object Retention", "Grayscale"),
    ("Open Eyes", "Image Enhancement"), ("Image Enhancement", "Whiten Skin"), ("Whiten Skin", "Enlarge Eyes"),
    ("Darken Skin", "Slim Face"), ("Pure Red", "Vintage"), ("Rose Pink", "Warm"),
    ("Coral", "Whiten Skin"), ("Berry", "Darken Skin"), ("Plum", "Enlarge Eyes"),
    ("Deep Wine", "Open Eyes"), ("Grayscale", "Enlarge Eyes"), ("Sepia", "Slim Face"),
    ("Cool", "Object Removal"), ("Vintage", "Image Enhancement"), ("Widen Eye Distance", "Whiten Skin"),
    ("Object Removal", "Image Enhancement"), ("Object Retention", "Sepia"), ("Open Eyes", "Whiten Skin"),
    ("Pure Orange", "Warm"), ("Burnt Tomato", "Open Eyes"), ("Nude Beige", "Cool"),
    ("Warm", "Sepia"), ("Grayscale", "Narrow Nose"), ("Enlarge Eyes", "Widen Eye Distance"),
    ("Darken Skin", "Object Removal"), ("Pure Red", "Open Eyes"), ("Rose Pink", "Enlarge Eyes"),
    ("Image Enhancement", "Slim Face"), ("Coral", "Vintage"),
]
# index -> (hierarchical override, flat override); None keeps the expected pair.
DUAL_WRONG = {
    3: (["Rose Pink"], None),
    9: (["Burnt Tomato", "Slim Face"], ["Pure Red", "Narrow Nose"]),
    16: (["Enlarge Eyes", "Narrow Nose"], ["Enlarge Eyes", "Narrow Nose"]),
    25: (None, ["Pure Red"]),
    28: (["Berry"], ["Plum", "Darken Skin"]),
    37: (None, ["Object Removal", "Sepia"]),
    40: (["Burnt Tomato"], ["Burnt Tomato"]),
    42: (["Warm", "Vintage"], ["Warm"]),
    47: (None, ["Rose Pink"]),
}

ANALYSES = [
    "The user wants {what}. I chose the matching function.",
    "This request is about {what}, so I picked the function that does that.",
    "Understood: {what}. The selected function handles it directly.",
]


def mains_for(leaves):
    out = []
    for leaf in leaves:
        m = PARENT.get(leaf, leaf)
        if m not in out:
            out.append(m)
    return out


def fn_line(names):
    return "Functions: [" + ", ".join(names) + "]"


def entries_for(instruction, hier, flat, i):
    analysis = ANALYSES[i % len(ANALYSES)].format(what=instruction)
    out = [{
        "user": {"contains": instruction},
        "system": {"contains": "Main functions:"},
        "response": fn_line(mains_for(hier)) + "\nAnalysis: " + analysis,
    }]
    for g in mains_for(hier):
        if g in GROUPS:
            subs = [l for l in hier if PARENT.get(l) == g]
            out.append({
                "user": {"contains": instruction},
                "system": {"contains": "Sub-functions of " + g + ":"},
                "response": fn_line(subs),
            })
    out.append({
        "user": {"contains": instruction},
        "system": {"contains": "All functions:"},
        "response": fn_line(flat) + "\nAnalysis: " + analysis,
    })
    return out


def check_unique(instructions):
    for a in instructions:
        for b in instructions:
            if a != b and a in b:
                raise SystemExit(f"instruction {a!r} is a substring of {b!r}")


def write_jsonl(name, rows):
    with open(os.path.join(HERE, name), "w") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def write_json(name, obj):
    with open(os.path.join(HERE, name), "w") as f:
        json.dump(obj, f, indent=1, ensure_ascii=False)
        f.write("\n")


def main():
    single_cases, single_entries = [], []
    for i, (instr, leaf, hier, flat) in enumerate(SINGLE):
        cid = f"en-single-{i + 1:03d}"
        single_cases.append({"id": cid, "language": "en", "arity": "single",
                             "instruction": instr, "expected": [leaf]})
        single_entries += entries_for(instr, hier or [leaf], flat or [leaf], i)
    check_unique([c["instruction"] for c in single_cases])

    dual_cases, dual_entries = [], []
    for i, (a, b) in enumerate(DUAL_PAIRS):
        instr = CONNECTORS[i % len(CONNECTORS)].format(a=PHRASES[a], b=PHRASES[b])
        cid = f"en-dual-{i + 1:03d}"
        dual_cases.append({"id": cid, "language": "en", "arity": "dual",
                           "instruction": instr, "expected": [a, b]})
        hier, flat = DUAL_WRONG.get(i, (None, None))
        dual_entries += entries_for(instr, hier or [a, b], flat or [a, b], i)
    check_unique([c["instruction"] for c in dual_cases])
    check_unique([c["instruction"] for c in single_cases + dual_cases])

    write_jsonl("en_single.jsonl", single_cases)
    write_jsonl("en_dual.jsonl", dual_cases)
    write_json("en_single_fixture.json", {"strict": False, "entries": single_entries})
    write_json("en_dual_fixture.json", {"strict": False, "entries": dual_entries})

    # Ablation: five cases whose main reply comes back decorated (markdown
    # bold labels or a chatty preamble) unless the prompt shows enough
    # worked examples. Case k is clean once example number NEED[k] is present.
    decorated = [0, 4, 14, 21, 32]
    need = [1, 1, 2, 3, 3]
    ablation = []
    for i, (instr, leaf, hier, flat) in enumerate(SINGLE):
        if i in decorated:
            k = need[decorated.index(i)]
            names = mains_for([leaf])
            clean = fn_line(names) + "\nAnalysis: The user wants " + instr + "."
            messy = ("**Functions:** [" + ", ".join(names) + "]\n**Analysis:** The user wants " + instr + "."
                     if k % 2 else
                     "Sure! Here is what I would do.\n" + clean)
            ablation.append({"user": {"contains": instr},
                             "system": {"regex": f"(?s)Main functions:.*Example {k}:"},
                             "response": clean})
            ablation.append({"user": {"contains": instr},
                             "system": {"contains": "Main functions:"},
                             "response": messy})
        ablation += entries_for(instr, hier or [leaf], flat or [leaf], i)
    write_json("ablation_fixture.json", {"strict": False, "entries": ablation})


if __name__ == "__main__":
    main()
