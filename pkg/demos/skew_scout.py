"""SkewScout walks the communication knob instead of guessing it.

At every epoch boundary the controller ships the current model to a peer
data center, asks it to replay its last minibatches, and compares the two
accuracy-loss readings. Skew shows up as a gap; the tuner then hill-climbs
the significance threshold, trading that gap against the bytes the last
epoch actually cost. The trace below is the whole walk: which threshold was
live, what the probe saw, and where the tuner moved next.

Run: python3 demos/skew_scout.py
"""

from geolearn.harness import config_from_dict, run_experiment
from geolearn.skewscout import GAIA_T0_GRID


def cfg(scout):
    d = {
        "name": "scout-walk", "seed": 7,
        "model": {"kind": "softmax", "features": 10, "classes": 10},
        "data": {"per_class": 100, "spread": 1.2, "test_per_class": 40},
        "partition": {"nodes": 5, "alpha": 0.2},
        "algorithm": {"kind": "gaia", "t0": GAIA_T0_GRID[0], "ds": 1,
                      "batch_size": 20, "epochs": 12, "lr": {"eta0": 0.05}},
        "convergence": {"mode": "none"},
    }
    if scout:
        d["scout"] = {"enabled": True, "tuner": "hill", "start_idx": 0, "mtp": 0}
    return config_from_dict(d)


def main():
    fixed = run_experiment(cfg(scout=False))
    scout = run_experiment(cfg(scout=True))

    print("tuner walk (threshold grid %s):" % (GAIA_T0_GRID,))
    print("  boundary  theta   al_pts      c_bytes    score  action  next")
    for r in scout.scout.trace:
        print("  %8d  %5.2f  %7.3f  %9d  %7.3f  %-7s %5.2f"
              % (r["boundary"], r["theta"], r["al_points"], r["c_bytes"],
                 r["score"], r["action"], r["theta_next"]))

    s, f = scout.summary, fixed.summary
    print("\nfinal threshold: %.2f (started at %.2f)"
          % (s["final_theta"], GAIA_T0_GRID[0]))
    print("probe traffic: %d travels, %d bytes (%.1f%% of update traffic)"
          % (s["travels"], s["travel_bytes"],
             100.0 * s["travel_bytes"] / s["update_bytes"]))
    print("\n%-22s %14s %12s %10s" % ("", "update bytes", "objective", "accuracy"))
    print("%-22s %14d %12.4f %9.1f%%" % ("fixed t0=%.2f" % GAIA_T0_GRID[0],
          f["update_bytes"], f["final_objective"], 100.0 * f["final_accuracy"]))
    print("%-22s %14d %12.4f %9.1f%%" % ("scout-tuned",
          s["update_bytes"], s["final_objective"], 100.0 * s["final_accuracy"]))


if __name__ == "__main__":
    main()
