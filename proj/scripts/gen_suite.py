#!/usr/bin/env python3
"""Generate the synthetic misconfiguration suite (data/suite_synthetic.jsonl).

Deterministic: rerunning produces byte-identical output.
"""
import argparse
import json
import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
TOTAL = 200
MAIN_SEVERITIES = (1.2, 1.6)
EXTREME = 2.5
BENIGN = 0.5


def quantize(spec, value):
    value = min(max(value, spec["min"]), spec["max"])
    k = (value - spec["min"]) / spec["step"]
    k = math.floor(k + 0.5) if k >= 0 else math.ceil(k - 0.5)
    q = spec["min"] + k * spec["step"]
    if q > spec["max"]:
        q -= spec["step"]
    return float("%.12g" % q)


def severity(spec, optimal, value):
    return abs(value - optimal) / (0.25 * (spec["max"] - spec["min"]))


def place(spec, optimal, sev, direction):
    """Value at `sev` on the given side of optimal, or None if out of range."""
    raw = optimal + direction * sev * 0.25 * (spec["max"] - spec["min"])
    if raw < spec["min"] - 1e-12 or raw > spec["max"] + 1e-12:
        return None
    value = quantize(spec, raw)
    actual = severity(spec, optimal, value)
    if abs(actual - sev) > 0.1 or (sev >= 1.0) != (actual >= 1.0):
        return None
    return value


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(ROOT / "data" / "suite_synthetic.jsonl"))
    args = ap.parse_args()

    registry = {p["name"]: p for p in json.loads((ROOT / "data" / "registry.json").read_text())}
    table = json.loads((ROOT / "data" / "fault_table.json").read_text())
    plans = {p.stem: json.loads(p.read_text()) for p in sorted((ROOT / "data" / "plans").glob("*.json"))}
    plan_ids = sorted(plans)

    cases = []

    def add(kind, faults, plan_id):
        overrides = {name: value for name, value, _ in faults}
        label = " + ".join(f"{name}@{sev:g}" for name, _, sev in faults)
        cases.append({"case_id": f"{kind}-{len(cases):03d}", "plan_id": plan_id,
                      "label": f"{kind}: {label}", "overrides": overrides})

    # Benign: within a quarter range but short of any anomaly.
    for i, entry in enumerate(table):
        spec = registry[entry["param"]]
        for direction in (1, -1):
            v = place(spec, entry["optimal"], BENIGN, direction)
            if v is not None:
                add("benign", [(entry["param"], v, BENIGN)], plan_ids[i % len(plan_ids)])
                break

    # Single faults at the main severities, both directions where reachable.
    singles = []
    for entry in table:
        spec = registry[entry["param"]]
        for sev in MAIN_SEVERITIES:
            for direction in (1, -1):
                v = place(spec, entry["optimal"], sev, direction)
                if v is not None:
                    singles.append((entry, v, sev))
    for entry, v, sev in singles:
        for plan_id in plan_ids:
            add("single", [(entry["param"], v, sev)], plan_id)

    # Extreme single faults, one per class where the range allows it.
    extreme_classes = set()
    for entry in table:
        if entry["anomaly"] in extreme_classes:
            continue
        spec = registry[entry["param"]]
        for direction in (1, -1):
            v = place(spec, entry["optimal"], EXTREME, direction)
            if v is not None:
                extreme_classes.add(entry["anomaly"])
                for plan_id in plan_ids:
                    add("extreme", [(entry["param"], v, EXTREME)], plan_id)
                break

    # Two-fault combinations across different classes fill the rest.
    rng = random.Random(20240611)
    seen = set()
    while len(cases) < TOTAL:
        a, b = rng.sample(singles, 2)
        if a[0]["anomaly"] == b[0]["anomaly"]:
            continue
        key = tuple(sorted([(a[0]["param"], a[1]), (b[0]["param"], b[1])]))
        plan_id = rng.choice(plan_ids)
        if (key, plan_id) in seen:
            continue
        seen.add((key, plan_id))
        add("combo", [(a[0]["param"], a[1], a[2]), (b[0]["param"], b[1], b[2])], plan_id)

    header = {"suite": "synthetic-200", "plans": plans}
    with open(args.out, "w") as f:
        f.write(json.dumps(header, separators=(",", ":")) + "\n")
        for c in cases:
            f.write(json.dumps(c, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
