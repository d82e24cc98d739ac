"""Reference values computed once by ``oracles.py`` and pinned here."""

# closed-form Yule-Walker, AR(2) a=(0.5, -0.3), unit innovation
AR2_AUTOCOV = (1.28968254, 0.49603175, -0.13888889, -0.21825397, -0.06746032)
# I(x3; x1 | x2) on the 3x3 Toeplitz covariance of the same source
AR2_CMI_3_1_GIVEN_2 = 0.06803077478801428
# unit variances, correlation 0.8
MI_RHO_08 = 0.7369655941662064
# 0.5 log2(a^2 + s2 / D) at a=0.9, s2=0.19, D=0.1
R_STATIONARY_09_01 = 0.7191464257895734
# exhaustive grid, n=2, a=0.9, s2=0.19, D=0.1, step 1e-3 (bits/sample)
BRUTE_N2_09_01 = 1.181718951388394
# finite-horizon gap to the stationary value from the stationarity conditions
KKT_GAPS = {
    (0.5, 0.05): (0.04888056972846422, 0.012218976763169964, 0.00305467095833456,
                  0.0007636631566001473, 0.0001909155026205145),
    (0.5, 0.1): (0.04589532454700462, 0.011469203827673358, 0.0028670087587197024,
                 0.0007167338798368394, 0.00017918232484936958),
    (0.9, 0.05): (0.2624145194091654, 0.06543231199499933, 0.016346694310379384,
                  0.004085950525600346, 0.0010214422554704061),
    (0.9, 0.1): (0.2286194949639585, 0.056555341005531834, 0.014096897607065006,
                 0.003521520723429594, 0.000880209849485114),
}
KKT_HORIZONS = (4, 16, 64, 256, 1024)
# coder design at a=0.9, s2=0.19, D=0.1
THETA_09_01 = 0.15847953216374272
STEP_09_01 = 1.379041111049599
