"""Print how the percentage filter narrows the action set for a few Q snapshots.

Run: python3 demos/selection_walkthrough.py
"""
import numpy as np

from lexi_morl.morl import Action, ObjectiveChain, tlo_select

snapshots = {
    "positive safety values": [[10.0, 9.6, 9.0, 9.7], [0.2, 0.9, -1.0, 0.5]],
    "negative safety values": [[-0.10, -0.11, -0.50, -0.104], [0.2, 0.9, -1.0, 0.5]],
}

for mode in ("literal", "slack"):
    chain = ObjectiveChain.from_thresholds({"safety": 0.95, "speed": 1.0}, mode)
    print(f"== threshold mode: {mode}")
    for title, q in snapshots.items():
        action, trace = tlo_select(np.array(q), chain)
        sets = "  ".join(f"A{i}={{{','.join(Action(a).name.lower() for a in s)}}}" for i, s in enumerate(trace.sets))
        print(f"  {title:<24s} {sets}  -> {action.name.lower()}")

# exploring the first objective ignores the second one
chain = ObjectiveChain.from_thresholds({"safety": 0.95, "speed": 1.0})
rng = np.random.default_rng(0)
picks = [tlo_select(np.array(snapshots["positive safety values"]), chain, [True, False], rng)[0] for _ in range(2000)]
print("explore safety:", {a.name.lower(): picks.count(a) for a in Action})
picks = [tlo_select(np.array(snapshots["positive safety values"]), chain, [False, True], rng)[0] for _ in range(2000)]
print("explore speed: ", {a.name.lower(): picks.count(a) for a in Action})
