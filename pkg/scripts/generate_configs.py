"""Regenerate the shipped power-grid and random scenario files."""

from pathlib import Path

import numpy as np

from secpriv.config import ScenarioConfig, format_config
from secpriv.powergrid import reference_scenario
from secpriv.privacy import random_more_private, random_mechanism
from secpriv.system import AttackSignal, random_system

DATA = Path(__file__).resolve().parents[1] / "src" / "secpriv" / "data"


def powergrid():
    sc = reference_scenario(seed=0)
    sets = {f"case{k}": m for k, m in sc.mechanisms.items()}
    cfg = ScenarioConfig(sc.system, sets, sc.horizon, sc.p_false_alarm, 0, sc.attack, "powergrid")
    header = (
        "Ten-generator swing network, three subsystems, reactance seed 0.\n"
        "Generated by scripts/generate_configs.py from secpriv.powergrid.reference_scenario.\n"
        "case0 shares everything; case1 and case2 are successively more private."
    )
    (DATA / "powergrid.cfg").write_text(format_config(cfg, header))


def random():
    rng = np.random.default_rng(7)
    system = random_system(rng, state_dims=(3, 2, 2), output_dims=(3, 2, 2))
    base = {j: random_mechanism(rng, system[j].p, system[j].p, 0.2) for j in (1, 2)}
    private = {j: random_more_private(rng, base[j], system[j].p - 1, 0.5) for j in (1, 2)}
    attack = AttackSignal(0, np.full((2, 1), 2.0))
    cfg = ScenarioConfig(system, {"base": base, "private": private}, 2, 0.05, 0, attack, "random")
    header = "Random three-subsystem instance (generator seed 7); 'private' is more private than 'base'."
    (DATA / "random.cfg").write_text(format_config(cfg, header))


if __name__ == "__main__":
    powergrid()
    random()
