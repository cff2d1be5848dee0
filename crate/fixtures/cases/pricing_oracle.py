"""Brute-force oracle for pricing.rules.

Parses the rule file on its own, matches every case against every rule and
writes pricing.expected.json.

    python3 fixtures/cases/pricing_oracle.py
"""

import itertools
import json
import re
from pathlib import Path

HERE = Path(__file__).resolve().parent


def parse(text):
    factors, rules = [], []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("factor "):
            name, domain = line[len("factor "):].split("=")
            factors.append((name.strip(), [v.strip() for v in domain.split("|")]))
            continue
        m = re.fullmatch(r"rule ([^:]+):(.*)->(.*)", line)
        rid, cond, outcome = (g.strip() for g in m.groups())
        lits = {}
        if cond != "*":
            for lit in cond.split("&"):
                f, allowed = (p.strip() for p in lit.split(" in ", 1))
                lits[f] = None if allowed == "*" else {a.strip() for a in allowed.strip("{}").split(",")}
        rules.append((rid, lits, outcome))
    return factors, rules


def matches(lits, case):
    return all(allowed is None or case[f] in allowed for f, allowed in lits.items())


def main():
    factors, rules = parse((HERE / "pricing.rules").read_text())
    names = [f for f, _ in factors]
    uncovered, conflicts = [], []
    for values in itertools.product(*(d for _, d in factors)):
        case = dict(zip(names, values))
        hits = [(rid, out) for rid, lits, out in rules if matches(lits, case)]
        if not hits:
            uncovered.append(list(values))
        elif len({out for _, out in hits}) > 1:
            conflicts.append({"case": list(values), "rules": sorted(rid for rid, _ in hits)})
    universe = 1
    for _, d in factors:
        universe *= len(d)
    expected = {"universe": universe, "uncovered": uncovered, "conflicts": conflicts}
    (HERE / "pricing.expected.json").write_text(json.dumps(expected, indent=2) + "\n")


if __name__ == "__main__":
    main()
