"""Evaluate the scripted drivers and a distance-keeping rule on all three maps.

The rule brakes whenever a crossing pedestrian is inside the near-collision
range plus a margin; it shows the simulator is solvable by longitudinal control.
Run: python3 demos/scripted_drivers.py [episodes]
"""
import sys

from lexi_morl.agents import ScriptedPolicy
from lexi_morl.envsim.sim import EnvConfig
from lexi_morl.evalkit import compare_text, run_eval
from lexi_morl.morl import Action
from lexi_morl.rewards import dynamic_range


class KeepDistance:
    kind = "rule"

    def __init__(self, margin=2.0, cruise=7.9):
        self.margin, self.cruise = margin, cruise

    def for_episode(self, seed):
        return self

    def act(self, env):
        v = env.state.ego.speed
        gap = env.nearest_front_crossing_pedestrian()
        if gap is not None and gap < dynamic_range(v) + self.margin:
            return Action.BRAKE, None
        return (Action.ACCELERATE if v < self.cruise - 0.05 else Action.MAINTAIN), None


n = int(sys.argv[1]) if len(sys.argv) > 1 else 20
for name in ("train", "heldout1", "heldout2"):
    rule = run_eval(KeepDistance(), EnvConfig(), name, n, 1, label="keep-distance")
    gas = run_eval(ScriptedPolicy("accelerate"), EnvConfig(), name, n, 1, label="accelerate")
    print(f"[{name}]")
    print(compare_text(rule, gas))
