#!/usr/bin/env python3
"""Regenerates the label-tree fixtures under crates/core/fixtures/.

The ImageNet-style tree keeps the familiar top levels (entity, living and
non-living things, then broad groups such as animals and transport vehicles)
and fills the lower levels with deterministic, deliberately uneven splits so
leaves sit at several depths. It has exactly 1000 classes and depth 7.
"""

import json
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "fixtures")

TOP = {
    "living thing": [
        ("animal", 398, ["mammal", "bird", "reptile", "amphibian", "fish", "invertebrate"]),
        ("plant", 10, []),
        ("fungus", 7, []),
        ("person", 3, []),
    ],
    "non-living thing": [
        ("transport vehicle", 61, ["land vehicle", "watercraft", "aircraft"]),
        ("device", 130, ["machine", "electronic device", "mechanism", "tool"]),
        ("container", 100, ["vessel", "bag", "box", "receptacle"]),
        ("structure", 58, ["building", "bridge", "barrier"]),
        ("clothing", 50, ["garment", "headdress", "footwear"]),
        ("food", 41, ["dish", "produce", "baked goods"]),
        ("musical instrument", 60, ["string instrument", "wind instrument", "percussion instrument"]),
        ("furniture", 30, ["seat", "table", "bed"]),
        ("equipment", 27, ["sports equipment", "photographic equipment"]),
        ("geological formation", 10, []),
        ("covering", 15, ["sheet", "screen"]),
    ],
}

MAX_DEPTH = 7


class Node:
    def __init__(self, label):
        self.label = label
        self.children = []


def split_counts(n, k, depth):
    """Uneven but deterministic split of n into k positive parts."""
    weights = [(i * 7 + depth * 3) % 5 + 1 + (2 if i == 0 else 0) for i in range(k)]
    total = sum(weights)
    parts = [max(1, n * w // total) for w in weights]
    diff = n - sum(parts)
    i = 0
    while diff != 0:
        j = i % k
        if diff > 0:
            parts[j] += 1
            diff -= 1
        elif parts[j] > 1:
            parts[j] -= 1
            diff += 1
        i += 1
    return parts


class Namer:
    def __init__(self, top):
        self.top = top
        self.leaf = 0

    def leaf_name(self):
        self.leaf += 1
        return f"{self.top} class {self.leaf:03d}"


def grow(node, n, depth, namer, subgroup_names=None):
    """Attach n leaves below node, which sits at edge depth `depth`."""
    remaining_levels = MAX_DEPTH - depth
    if remaining_levels == 1 or n <= 3:
        for _ in range(n):
            node.children.append(Node(namer.leaf_name()))
        return
    if subgroup_names:
        k = len(subgroup_names)
        names = subgroup_names
    else:
        k = min(n, 2 + (n + depth) % 3)
        names = [f"{node.label} {chr(ord('a') + i)}" for i in range(k)]
    parts = split_counts(n, k, depth)
    for name, count in zip(names, parts):
        if count == 1:
            node.children.append(Node(namer.leaf_name()))
            continue
        child = Node(name)
        node.children.append(child)
        grow(child, count, depth + 1, namer)


def imagenet_like():
    root = Node("entity")
    for kingdom, groups in TOP.items():
        k = Node(kingdom)
        root.children.append(k)
        for name, count, subgroups in groups:
            g = Node(name)
            k.children.append(g)
            grow(g, count, 2, Namer(name), subgroups or None)
    return root


CIFAR = {
    "living things": {
        "aquatic mammals": ["beaver", "dolphin", "otter", "seal", "whale"],
        "fish": ["aquarium fish", "flatfish", "ray", "shark", "trout"],
        "flowers": ["orchid", "poppy", "rose", "sunflower", "tulip"],
        "fruit and vegetables": ["apple", "mushroom", "orange", "pear", "sweet pepper"],
        "insects": ["bee", "beetle", "butterfly", "caterpillar", "cockroach"],
        "large carnivores": ["bear", "leopard", "lion", "tiger", "wolf"],
        "large omnivores and herbivores": ["camel", "cattle", "chimpanzee", "elephant", "kangaroo"],
        "medium-sized mammals": ["fox", "porcupine", "possum", "raccoon", "skunk"],
        "non-insect invertebrates": ["crab", "lobster", "snail", "spider", "worm"],
        "people": ["baby", "boy", "girl", "man", "woman"],
        "reptiles": ["crocodile", "dinosaur", "lizard", "snake", "turtle"],
        "small mammals": ["hamster", "mouse", "rabbit", "shrew", "squirrel"],
        "trees": ["maple tree", "oak tree", "palm tree", "pine tree", "willow tree"],
    },
    "non-living things": {
        "food containers": ["bottle", "bowl", "can", "cup", "plate"],
        "household electrical devices": ["clock", "keyboard", "lamp", "telephone", "television"],
        "household furniture": ["bed", "chair", "couch", "table", "wardrobe"],
        "large man-made outdoor things": ["bridge", "castle", "house", "road", "skyscraper"],
        "large natural outdoor scenes": ["cloud", "forest", "mountain", "plain", "sea"],
        "vehicles 1": ["bicycle", "bus", "motorcycle", "pickup truck", "train"],
        "vehicles 2": ["lawn mower", "rocket", "streetcar", "tank", "tractor"],
    },
}


def cifar_like():
    root = Node("entity")
    for kingdom, supers in CIFAR.items():
        k = Node(kingdom)
        root.children.append(k)
        for sup, classes in supers.items():
            s = Node(sup)
            k.children.append(s)
            s.children = [Node(c) for c in classes]
    return root


def synthetic27():
    root = Node("root")
    for a in "abc":
        g = Node(f"group {a}")
        root.children.append(g)
        for b in range(3):
            s = Node(f"group {a}{b}")
            g.children.append(s)
            s.children = [Node(f"class {a}{b}{c}") for c in range(3)]
    return root


def small8():
    root = Node("entity")
    for name, leaves in [
        ("animal", ["cat", "dog", "snail", "horse"]),
        ("tool", ["hammer", "saw", "drill", "wrench"]),
    ]:
        g = Node(name)
        g.children = [Node(l) for l in leaves]
        root.children.append(g)
    return root


def to_adjacency(root):
    out = []

    def visit(n):
        entry = {"id": len(out), "label": n.label, "children": []}
        out.append(entry)
        for c in n.children:
            entry["children"].append(visit(c))
        return entry["id"]

    visit(root)
    return out


def to_indented(root):
    lines = []

    def visit(n, d):
        lines.append("\t" * d + n.label)
        for c in n.children:
            visit(c, d + 1)

    visit(root, 0)
    return "\n".join(lines) + "\n"


def stats(root):
    leaves, depth = 0, 0

    def visit(n, d):
        nonlocal leaves, depth
        if not n.children:
            leaves += 1
            depth = max(depth, d)
        for c in n.children:
            visit(c, d + 1)

    visit(root, 0)
    return leaves, depth


def write_json(name, root):
    path = os.path.join(OUT, name)
    entries = to_adjacency(root)
    with open(path, "w") as f:
        f.write("[\n" + ",\n".join("  " + json.dumps(e, separators=(",", ":")) for e in entries) + "\n]\n")
    print(name, stats(root))


def main():
    os.makedirs(OUT, exist_ok=True)
    inet = imagenet_like()
    assert stats(inet) == (1000, 7), stats(inet)
    write_json("imagenet_like.json", inet)
    write_json("synthetic27.json", synthetic27())
    write_json("small8.json", small8())
    cifar = cifar_like()
    with open(os.path.join(OUT, "cifar100_like.txt"), "w") as f:
        f.write(to_indented(cifar))
    print("cifar100_like.txt", stats(cifar))


if __name__ == "__main__":
    main()
