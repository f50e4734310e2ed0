"""SAC on the one-dimensional tracking task against a uniform-random policy."""

import argparse

import numpy as np

from edgesac.sac import SacConfig, train, write_curve
from edgesac.toyenv import TrackingEnv


def random_returns(seeds, rng):
    env = TrackingEnv()
    out = []
    for s in seeds:
        env.reset(seed=s)
        done, total = False, 0.0
        while not done:
            _, r, done, _ = env.step(rng.uniform(-1, 1, 1))
            total += r
        out.append(total)
    return np.array(out)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", default="0,1,2")
    parser.add_argument("--episodes", type=int, default=200)
    parser.add_argument("--curve", help="write the learning curve of the first seed to this CSV")
    args = parser.parse_args()
    for k, seed in enumerate(int(s) for s in args.seeds.split(",")):
        _, curve = train(TrackingEnv(), args.episodes, SacConfig(), seed=seed)
        rand = random_returns([seed + e for e in range(args.episodes)], np.random.default_rng(seed))
        last = np.mean([c.ret for c in curve[-20:]])
        print(f"seed {seed}: last-20 return {last:.2f}; random {rand.mean():.2f} +- {rand.std():.2f}; "
              f"margin {(last - rand.mean()) / rand.std():.1f} std")
        if args.curve and k == 0:
            write_curve(args.curve, curve)


if __name__ == "__main__":
    main()
