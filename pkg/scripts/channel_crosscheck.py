"""Compare the physical-channel consensus loss rate seen by the simulator with the analytic mobile success rate."""
import argparse
from dataclasses import replace

from escm.analytics import MobilityParams, mobile_success_rate
from escm.config import FeatureFlags, ScenarioConfig
from escm.sim_core import Simulator, _Message


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--k", type=int, default=5)
    args = p.parse_args()
    print(f"{'km/h':>6} {'simulated':>10} {'analytic':>10}")
    for kmh in (0.0, 1.0, 5.0, 20.0, 40.0):
        cfg = ScenarioConfig(speed_kmh=kmh, features=FeatureFlags(dt=False))
        sim = Simulator(cfg)
        deliver, _ = sim._consensus_channel(_Message(0, 0, 1, 0.0), args.k)
        hits = sum(deliver(0, 1) for _ in range(args.draws))
        ch = replace(cfg.channel, node_count=args.k)
        exact = mobile_success_rate(ch, MobilityParams(cfg.speed, cfg.mobility.elapsed_time))
        print(f"{kmh:6.1f} {hits / args.draws:10.4f} {exact:10.4f}")


if __name__ == "__main__":
    main()
