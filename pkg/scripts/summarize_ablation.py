"""Print mean arrival rate and delay per configuration from an ablation CSV."""
import argparse
from collections import defaultdict
from statistics import mean

from escm.cli import read_csv


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("csv", nargs="?", default="results/ablation.csv")
    args = p.parse_args()
    values = defaultdict(list)
    for row in read_csv(args.csv):
        values[row.metric].append(row.value)
    labels = sorted({m.split(":")[0] for m in values}, key=lambda l: -mean(values[f"{l}:arrival_rate"]))
    print(f"{'configuration':<12} {'arrival':>8} {'delay ms':>9} {'runs':>5}")
    for label in labels:
        rates = values[f"{label}:arrival_rate"]
        print(f"{label:<12} {mean(rates):8.3f} {1e3 * mean(values[f'{label}:mean_delay']):9.1f} {len(rates):5d}")


if __name__ == "__main__":
    main()
