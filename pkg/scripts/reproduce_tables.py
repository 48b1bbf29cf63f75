"""Recompute the published regression, ANOVA and coefficient tables from their own entries."""

import math

from pipecond.mlr import anova_table, coefficient_inference, regression_statistics

DF = 605
ROWS = [  # name, coefficient, SE, published t, published p
    ("Intercept", -6.659801, 0.2450519, -27.177104, 6.608e-107),
    ("AGE", 0.09120619, 0.00394452, 23.122276, 3.0426e-85),
    ("PIPEDIA", 0.04544334, 0.00223303, 20.3505357, 1.5671e-70),
    ("LENGTH", 0.00624929, 0.00013299, 46.9890512, 4.697e-204),
    ("DEPTH", 0.00823641, 0.00074769, 11.0158625, 7.5934e-26),
    ("SEGMENTSL", 11.5807336, 7.34700494, 1.57625232, 0.11549039),
    ("SOILTYPE", 0.07735169, 0.01452375, 5.32587547, 1.4186e-07),
]


def main():
    a = anova_table(948.2944773, 170.6908168, 612, 6)
    s = regression_statistics(a, 612, 6)
    print("Regression statistics")
    for k in ("multiple_r", "r_square", "adjusted_r_square", "standard_error"):
        print(f"  {k:18s} {getattr(s, k):.9f}")
    print(f"  F = {a.f_stat:.7f}, log10 Significance F = {a.log10_significance_f:.4f}")

    inf = coefficient_inference([r[1] for r in ROWS], [r[2] for r in ROWS], DF)
    print(f"\nCoefficients (t* = {inf.t_critical:.8f})")
    print(f"  {'':10s} {'t':>13s} {'dt':>10s} {'log10 p':>10s} {'published':>10s} "
          f"{'lower':>12s} {'upper':>12s}")
    for i, (name, _, _, t_pub, p_pub) in enumerate(ROWS):
        print(f"  {name:10s} {inf.t_stats[i]:13.7f} {inf.t_stats[i] - t_pub:10.2e} "
              f"{inf.log10_p_values[i]:10.4f} {math.log10(p_pub):10.4f} "
              f"{inf.ci_low[i]:12.8f} {inf.ci_high[i]:12.8f}")


if __name__ == "__main__":
    main()
