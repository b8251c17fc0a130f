"""Random valid plans for round-trip and rewrite property tests."""
from __future__ import annotations

import random

from mmstream.plan import (
    AGG_FNS,
    TASKS,
    And,
    Comparison,
    PixelFractionGE,
    Plan,
    PlanMetadata,
    PrefixMatch,
)

_ATTR_LITERALS = {
    "car_present": [True, False],
    "color": ["red", "blue", "none", "white"],
    "brand": ["fiat", "ford"],
    "plate": ["", "MTT1A23"],
    "action": ["spike", "jump", "stand"],
    "team": ["A", "B"],
    "player_id": [0, 3, 7],
}
_PRODUCES = {
    "object_detection": ["car_present", "brand"],
    "color_recognition": ["color"],
    "text_extraction": ["plate"],
    "action_recognition": ["action", "team", "player_id"],
}


def _predicate(rng: random.Random, attrs: list[str]):
    def leaf():
        a = rng.choice(attrs)
        if a == "plate" and rng.random() < 0.5:
            return PrefixMatch(a, rng.choice(["MTT", "AB", ""]))
        if a == "player_id":
            return Comparison(a, rng.choice(["<", "<=", ">", ">=", "=", "!="]), rng.choice(_ATTR_LITERALS[a]))
        return Comparison(a, rng.choice(["=", "!="]), rng.choice(_ATTR_LITERALS[a]))

    if rng.random() < 0.3:
        return And(tuple(leaf() for _ in range(rng.randint(2, 3))))
    return leaf()


def random_plan(rng: random.Random) -> Plan:
    ops: list[tuple[str, dict]] = [("Source", {})]
    if rng.random() < 0.4:
        ops.append(("Skip", {"amount": rng.randint(0, 8), "condition": rng.choice(["no_car", "no_action_change"])}))
    if rng.random() < 0.4:
        if rng.random() < 0.5:
            side = rng.choice(["bottom", "top", "left", "right"])
            ops.append(("Crop", {"region": {"side": side, "fraction": rng.choice([0.25, 0.5, 1.0])}}))
        else:
            r0 = rng.randrange(0, 100, 4)
            c0 = rng.randrange(0, 100, 4)
            ops.append(("Crop", {"region": {"rows": [r0, r0 + 40], "cols": [c0, c0 + 80]}}))
    if rng.random() < 0.4:
        ops.append(("Downscale", {"factor": rng.choice([1, 2, 4])}))
    if rng.random() < 0.2:
        ops.append(("Greyscale", {}))
    if rng.random() < 0.1:
        ops.append(("Filter", {"predicate": PixelFractionGE("red", round(rng.random() * 0.2, 4))}))
    tasks = rng.sample(list(TASKS), rng.randint(1, 3))
    attrs: list[str] = []
    for t in tasks:
        slot = rng.choice(["auto", "auto", "mllm_base", "mllm_base+quantize8"])
        ops.append(("Extract", {"task": t, "model_slot": slot}))
        attrs += _PRODUCES[t]
    for _ in range(rng.randint(0, 2)):
        ops.append(("Filter", {"predicate": _predicate(rng, attrs)}))
    if rng.random() < 0.5:
        ops.append(("Window", {"kind": "tumbling", "size_ms": rng.choice([1000, 4000, 10_000])}))
        fn = rng.choice(list(AGG_FNS))
        agg = {"fn": fn, "group_by": rng.sample(attrs, 1), "track_by": []}
        if fn == "top_k":
            agg["k"] = rng.randint(1, 4)
        ops.append(("Aggregate", agg))
        ops.append(("Sink", {"mode": "collect"}))
    else:
        ops.append(("Sink", {"mode": "notify", "key": rng.sample(attrs, 1), "track_by": []}))
    rewrites = tuple(f"note {i}" for i in range(rng.randint(0, 3)))
    md = PlanMetadata(f"Q{rng.randint(1, 13)}", rng.choice(["", "random plan", "café \"quoted\""]),
                      rng.choice([0.8, 0.9, 1.0]), rewrites)
    return Plan.from_chain(ops, md)
