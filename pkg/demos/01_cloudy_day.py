"""Run the bundled sensor program and its fallback variant over a cloudy trace."""

from __future__ import annotations

from pathlib import Path

from harvest_bdi import corpus_program, load_config, parse_program
from harvest_bdi.energy import HarvestTrace
from harvest_bdi.simulation import Simulation

HERE = Path(__file__).resolve().parent


def main() -> None:
    config = load_config(HERE / "sensor.toml")
    trace = HarvestTrace.from_csv(HERE / "cloudy.csv")
    programs = {
        "bundled": corpus_program(),
        "with fallback": parse_program((HERE / "sensor_with_fallback.asl").read_text()),
    }
    for name, program in programs.items():
        s = Simulation(program, config, trace).run()
        print(f"{name:>14}: {s['measurements']} measurements, "
              f"broadcasts by dBm {s['broadcasts_by_power']}, {s['brown_outs']} brown-outs, "
              f"final level {s['final_level_uJ']:.1f} uJ")


if __name__ == "__main__":
    main()
