"""Independent renderer for the golden files.

Reads a fixture repository directly (manifest, fragment files, instance
JSON) and writes the expected finalized render. Shares no code with the
Rust implementation.

    python3 fixtures/golden/render_oracle.py
"""

import json
import re
from pathlib import Path

HERE = Path(__file__).resolve().parent
REPO = HERE.parent / "repos" / "clean"
MARKER = re.compile(r"\{\{(param|ref) ([A-Za-z0-9_-]+)\}\}")


def load(doc_id, instance_id):
    gdir = REPO / "generic" / doc_id
    manifest = json.loads((gdir / "manifest.json").read_text())
    inst = json.loads((REPO / "instances" / f"{instance_id}.json").read_text())
    texts = {
        v["id"]: (gdir / "fragments" / f"{v['id']}.txt").read_text()
        for v in manifest["versions"]
    }
    return manifest, inst, texts


def render(manifest, inst, texts, excluded=()):
    units = {u["id"]: u for u in manifest["units"]}
    included = set(inst["included"])
    for gone in excluded:
        stack = [gone]
        while stack:
            u = stack.pop()
            included.discard(u)
            stack.extend(units[u]["children"])
    selections = {u: v for u, v in inst["selections"].items() if u in included}
    versioned = {v["unitId"] for v in manifest["versions"]}

    labels = {}

    def number(uid, prefix):
        kids = [c for c in units[uid]["children"] if c in included]
        for i, c in enumerate(kids, 1):
            labels[c] = f"{prefix}-{i}" if prefix else str(i)
            number(c, labels[c])

    number(manifest["rootId"], "")

    def fill(match):
        kind, name = match.groups()
        if kind == "ref":
            return labels[name]
        return inst["bindings"][name]["value"]

    out = [f"# {manifest['title']}\n\n"]

    def walk(uid):
        for c in units[uid]["children"]:
            if c not in included:
                continue
            out.append(f"{labels[c]} {units[c]['heading']}\n\n")
            if c in selections:
                out.append(MARKER.sub(fill, texts[selections[c]]) + "\n\n")
                continue
            assert c not in versioned, f"{c} has versions but no selection"
            walk(c)

    walk(manifest["rootId"])
    return "".join(out).rstrip("\n") + "\n"


def main():
    manifest, inst, texts = load("iee-mf1", "i1")
    (HERE / "iee-i1.txt").write_text(render(manifest, inst, texts))
    (HERE / "iee-i1-without-part1.txt").write_text(render(manifest, inst, texts, excluded=["p1"]))


if __name__ == "__main__":
    main()
