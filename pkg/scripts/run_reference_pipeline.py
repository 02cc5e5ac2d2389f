#!/usr/bin/env python3
"""Run the reference desk-scale experiment over a seed set and print a
side-by-side table: plain (ERM) vs debiased disease classifier, for the
white-box and the zeroth-order (GeZO) edit.

Usage:
    python3 scripts/run_reference_pipeline.py [--seeds 1,2,3,4,5] [--modes whitebox,gezo]
"""

import argparse

from ude.pipeline import PipelineConfig, run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="1,2,3,4,5")
    ap.add_argument("--modes", default="whitebox,gezo")
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]
    modes = args.modes.split(",")

    header = (f"{'mode':<9} {'seed':>4} {'sa_clean':>8} {'sa_edit':>8} "
              f"{'|eps|':>6} | {'erm_acc':>7} {'erm_EOp':>7} {'erm_DI':>7} "
              f"| {'ude_acc':>7} {'ude_EOp':>7} {'ude_DI':>7}")
    print(header)
    print("-" * len(header))
    for mode in modes:
        for seed in seeds:
            res = run_experiment(PipelineConfig(seed=seed, mode=mode))
            erm, ude = res.erm_report, res.ude_report
            print(f"{mode:<9} {seed:>4} {res.sa_acc_clean:>8.3f} "
                  f"{res.sa_acc_edited:>8.3f} {res.edit.eps_norm_trace[-1]:>6.2f} "
                  f"| {erm.accuracy:>7.3f} {erm.eo_pos:>7.3f} "
                  f"{erm.one_minus_di_abs:>7.3f} | {ude.accuracy:>7.3f} "
                  f"{ude.eo_pos:>7.3f} {ude.one_minus_di_abs:>7.3f}")


if __name__ == "__main__":
    main()
