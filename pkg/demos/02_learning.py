"""Watch the measurement estimate move towards the true pipeline cost."""

from __future__ import annotations

from harvest_bdi import config_from_dict, corpus_program
from harvest_bdi.energy import HarvestTrace
from harvest_bdi.simulation import Simulation


def main() -> None:
    # dark device with a full buffer: every wake takes the store-for-later branch,
    # so each measurement really costs 18 + 30 = 48 uJ against an initial guess of 30
    config = config_from_dict({
        "horizon_ms": 600_000,
        "buffer": {"capacity_uJ": 1000.0, "initial_uJ": 1000.0},
        "runtime": {"alpha": 0.5},
        "actions": {
            "read_trh_sensor": {"energy_uJ": 18.0, "duration_ms": 15},
            "start_ble_adv": {"energy_uJ": 101.0, "by_arg": {"8": 101.0, "4": 30.0}},
            "store_for_later_tx": {"energy_uJ": 30.0, "duration_ms": 1},
        },
        "wake": {"timer_ms": 60_000},
    })
    sim = Simulation(corpus_program(), config, HarvestTrace.constant(0.0))
    sim.run()
    for r in sim.log.records:
        if r["kind"] == "internal_action" and r["name"] == "update_estimate":
            print(f"t={r['time_ms']:>7} ms  measured {r['measured']:.1f}  "
                  f"estimate {r['old']:.4f} -> {r['new']:.4f} uJ")


if __name__ == "__main__":
    main()
