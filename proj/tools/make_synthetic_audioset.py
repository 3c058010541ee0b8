#!/usr/bin/env python3
"""Generate a synthetic AudioSet-shaped ontology fixture.

The official AudioSet ontology is not redistributed with this repository.
This script builds a structural stand-in with the same JSON schema and the
same headline shape: 632 nodes, the 7 top-level families, 527 evaluation
classes, and a maximum eval-class graph distance of 22 when the family
roots are chained through shared crossover nodes (no virtual root).

The "Human sounds > Human voice > Speech > Male speech" chain is kept with
its real machine ids so description goldens read like the real thing.

Usage: make_synthetic_audioset.py [--out-dir DIR] [--seed N]
"""

import argparse
import csv
import json
import random
from collections import deque
from pathlib import Path

FAMILIES = [
    # (root name, root mid, short tag, tree nodes excl. root, max depth)
    ("Human sounds", "/m/0dgw9r", "Human sound", 80, 5),
    ("Animal", "/m/0jbk", "Animal sound", 75, 5),
    ("Music", "/m/04rlf", "Music sound", 150, 5),
    ("Source-ambiguous sounds", "/m/0zzzs", "Ambiguous sound", 35, 4),
    ("Sounds of things", "/t/dd00041", "Thing sound", 155, 5),
    ("Natural sounds", "/m/059j3w", "Natural sound", 49, 4),
    ("Channel, environment and background", "/t/dd00123", "Background sound", 75, 5),
]

HUMAN_CHAIN = [
    # (mid, name, description, abstract)
    ("/m/09l8g", "Human voice", "", True),
    ("/m/09x0r", "Speech",
     "Sounds produced by humans communicating with language.", False),
    ("/m/05zppz", "Male speech",
     "Speech uttered by an adult male human.", False),
]

TOTAL_NODES = 632
EVAL_CLASSES = 527


def next_mid(counter):
    digits = "0123456789abcdefghijklmnopqrstuvwxyz"
    n, s = counter, ""
    for _ in range(4):
        s = digits[n % 36] + s
        n //= 36
    return "/m/zz" + s


def build(seed):
    rng = random.Random(seed)
    nodes = []  # dicts: mid, name, description, children(list of mid), restrictions, depth, family

    def add(mid, name, desc, restrictions, depth, family):
        nodes.append({
            "mid": mid, "name": name, "description": desc,
            "children": [], "restrictions": restrictions,
            "depth": depth, "family": family,
        })
        return len(nodes) - 1

    # Family roots first, in the canonical order.
    roots = []
    for f, (name, mid, _tag, _n, _d) in enumerate(FAMILIES):
        roots.append(add(mid, name, f"{name} (synthetic top-level family).",
                         ["abstract"], 0, f))

    mid_counter = 0
    per_family = [[] for _ in FAMILIES]  # node indices incl. root
    for f, r in enumerate(roots):
        per_family[f].append(r)

    # The real Human sounds chain, depth 1..3 under family 0.
    parent = roots[0]
    for mid, name, desc, is_abstract in HUMAN_CHAIN:
        idx = add(mid, name, desc, ["abstract"] if is_abstract else [], nodes[parent]["depth"] + 1, 0)
        nodes[parent]["children"].append(mid)
        per_family[0].append(idx)
        parent = idx

    # Per-family trees: a forced spine to max depth, then random attachment.
    for f, (fname, _mid, tag, n_tree, max_depth) in enumerate(FAMILIES):
        remaining = n_tree - (len(per_family[f]) - 1)
        # Spine guarantees one chain at the family's max depth.
        parent = roots[f]
        for d in range(1, max_depth + 1):
            mid = next_mid(mid_counter); mid_counter += 1
            idx = add(mid, f"{tag} {mid_counter:03d}", "", [], d, f)
            nodes[parent]["children"].append(mid)
            per_family[f].append(idx)
            parent = idx
            remaining -= 1
        while remaining > 0:
            candidates = [i for i in per_family[f] if nodes[i]["depth"] < max_depth]
            p = rng.choice(candidates)
            mid = next_mid(mid_counter); mid_counter += 1
            # A few comma names to keep CSV quoting honest downstream.
            name = f"{tag} {mid_counter:03d}"
            if mid_counter % 23 == 0:
                name += ", variant"
            idx = add(mid, name, "", [], nodes[p]["depth"] + 1, f)
            nodes[p]["children"].append(mid)
            per_family[f].append(idx)
            remaining -= 1

    # A couple of same-depth extra parents per family (multi-parent coverage
    # that cannot shorten any path: the extra parent sits at depth-1).
    for f in range(len(FAMILIES)):
        non_spine = [i for i in per_family[f] if nodes[i]["depth"] >= 2]
        rng.shuffle(non_spine)
        added = 0
        for i in non_spine:
            if added == 2:
                break
            d = nodes[i]["depth"]
            alt = [j for j in per_family[f]
                   if nodes[j]["depth"] == d - 1 and nodes[i]["mid"] not in nodes[j]["children"]]
            if alt:
                nodes[rng.choice(alt)]["children"].append(nodes[i]["mid"])
                added += 1

    # Crossover nodes chaining adjacent family roots (root_i <-> root_{i+1} at
    # distance 2). Keeps the undirected graph connected without a virtual root.
    for f in range(len(FAMILIES) - 1):
        mid = next_mid(mid_counter); mid_counter += 1
        add(mid, f"Crossover ambience {f + 1}", "", ["abstract"], 1, -1)
        nodes[roots[f]]["children"].append(mid)
        nodes[roots[f + 1]]["children"].append(mid)

    assert len(nodes) == TOTAL_NODES, len(nodes)

    # Restrictions: roots, crossovers and the Human voice node are already
    # non-eval. Mark more tree nodes until exactly EVAL_CLASSES remain.
    always_eval = {"/m/09x0r", "/m/05zppz"}
    spine_tips = set()
    for f in range(len(FAMILIES)):
        deepest = max(per_family[f], key=lambda i: nodes[i]["depth"])
        spine_tips.add(nodes[deepest]["mid"])  # keep max-depth leaves in eval
    n_excluded = sum(1 for n in nodes if n["restrictions"])
    need = TOTAL_NODES - EVAL_CLASSES - n_excluded
    assert need >= 0
    pool = [i for i in range(len(nodes))
            if not nodes[i]["restrictions"]
            and nodes[i]["mid"] not in always_eval | spine_tips]
    rng.shuffle(pool)
    for k in range(need):
        nodes[pool[k]]["restrictions"] = ["abstract"] if k % 4 else ["blacklist"]

    # Synthetic descriptions for most eval classes; leave ~15% empty.
    for n in nodes:
        if not n["description"] and not n["restrictions"]:
            if rng.random() < 0.85:
                n["description"] = f"Synthetic stand-in for a {n['name'].lower()} category."

    return nodes


def distances(nodes, virtual_root):
    mid_to_idx = {n["mid"]: i for i, n in enumerate(nodes)}
    n = len(nodes)
    adj = [[] for _ in range(n + 1)]
    for i, node in enumerate(nodes):
        for c in node["children"]:
            j = mid_to_idx[c]
            adj[i].append(j)
            adj[j].append(i)
    has_parent = [False] * n
    for node in nodes:
        for c in node["children"]:
            has_parent[mid_to_idx[c]] = True
    if virtual_root:
        for i in range(n):
            if not has_parent[i]:
                adj[i].append(n)
                adj[n].append(i)
    dist = []
    for s in range(n):
        d = [-1] * (n + 1)
        d[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if d[v] < 0:
                    d[v] = d[u] + 1
                    q.append(v)
        dist.append(d[:n])
    return dist


def diameter(dist, idxs):
    return max(dist[i][j] for i in idxs for j in idxs if dist[i][j] >= 0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="data/synthetic_audioset")
    ap.add_argument("--seed", type=int, default=20230901)
    args = ap.parse_args()

    nodes = build(args.seed)
    eval_idx = [i for i, n in enumerate(nodes) if not n["restrictions"]]
    assert len(eval_idx) == EVAL_CLASSES

    all_idx = list(range(len(nodes)))
    d_off = distances(nodes, virtual_root=False)
    d_on = distances(nodes, virtual_root=True)
    stats = {
        "diameter_all_novroot": diameter(d_off, all_idx),
        "diameter_eval_novroot": diameter(d_off, eval_idx),
        "diameter_all_vroot": diameter(d_on, all_idx),
        "diameter_eval_vroot": diameter(d_on, eval_idx),
    }
    print(stats)
    assert stats["diameter_eval_novroot"] == 22, stats
    assert stats["diameter_all_novroot"] == 22, stats

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for n in nodes:
        records.append({
            "id": n["mid"],
            "name": n["name"],
            "description": n["description"],
            "citation_uri": "",
            "positive_examples": [],
            "child_ids": n["children"],
            "restrictions": n["restrictions"],
        })
    with open(out / "ontology.json", "w") as f:
        json.dump(records, f, indent=1)
        f.write("\n")

    rng = random.Random(args.seed + 1)
    order = eval_idx[:]
    rng.shuffle(order)  # eval order deliberately differs from file order
    with open(out / "class_labels.csv", "w", newline="") as f:
        w = csv.writer(f, quoting=csv.QUOTE_NONNUMERIC)
        w.writerow(["index", "mid", "display_name"])
        for k, i in enumerate(order):
            w.writerow([k, nodes[i]["mid"], nodes[i]["name"]])
    print(f"wrote {out}/ontology.json ({len(records)} records) and "
          f"{out}/class_labels.csv ({len(order)} classes)")


if __name__ == "__main__":
    main()
