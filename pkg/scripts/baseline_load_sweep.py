"""Average and frequency baselines across offered load on symmetric nodes."""

import argparse

from edgesac.edgesim import AveragePolicy, FrequencyPolicy, Scenario, WorkloadConfig, evaluate


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rates", default="0.1,0.3,0.6,0.9,1.2,1.5")
    parser.add_argument("--episodes", type=int, default=10)
    args = parser.parse_args()
    print("rate  policy     response_ms  accuracy_pct  energy_j  utilization_pct")
    for rate in (float(r) for r in args.rates.split(",")):
        sc = Scenario(workload=WorkloadConfig(rate_per_athlete=rate))
        for policy in (AveragePolicy(), FrequencyPolicy()):
            m = evaluate(policy, sc, range(2000, 2000 + args.episodes)).mean
            print(f"{rate:4.1f}  {policy.name:9s}  {m.mean_response_ms:11.1f}  {m.accuracy_pct:12.2f}  "
                  f"{m.energy_j:8.1f}  {m.utilization_pct:15.2f}")


if __name__ == "__main__":
    main()
