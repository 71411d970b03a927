"""Variance autocorrelation and the leverage effect on synthetic returns.

Simulates a joint (return, variance) path with a negative return-variance
correlation, then runs the estimators an analyst would apply to real daily
closes:

  * the squared-return autocorrelation, whose decay rate is gamma and
    whose amplitude measures the stationary variance of v, and
  * the leverage function <dx(t) dx(t+tau)^2> / <dx^2>^2, which is
    negative right after a downward return and decays like
    rho * exp(-gamma tau).

Run:  python3 demos/correlation_and_leverage.py
"""

import numpy as np

from meanrev import (
    MeanRevertingParams,
    ReturnSeries,
    SimConfig,
    calibrate,
    daily_var_corr,
    fit_exp,
    leverage_series,
    simulate_joint_path,
)

PARAMS = MeanRevertingParams(gamma=0.1, theta=1e-4, kappa_h=3e-3, rho=-0.3)
DAYS = 400_000


def main() -> None:
    path = simulate_joint_path(PARAMS, SimConfig(steps=DAYS, x0="steady", seed=11))
    returns = ReturnSeries(path.returns - path.returns.mean())

    corr = daily_var_corr(returns, tau_max=80)
    cfit = fit_exp(corr)
    print("squared-return autocorrelation, a * exp(-gamma tau):")
    print(f"  gamma_hat = {cfit.gamma:.4f}   (true {PARAMS.gamma})")
    print(f"  r^2       = {cfit.r2:.4f}")

    report = calibrate(returns, tau_max=80)
    print()
    print("leverage function, A * exp(-gamma_lev tau) for tau > 0:")
    print(f"  gamma_lev = {report.gamma_lev:.4f}   (true {PARAMS.gamma})")
    print(f"  rho_hat   = {report.rho_h:.4f}   (true {PARAMS.rho})")

    lev = leverage_series(returns, tau_max=80)
    head = lev.values[lev.lags <= 5]
    tail = lev.values[lev.lags > 60]
    print()
    print("decay of the response (negative right after the return, gone later):")
    print(f"  mean L(tau <= 5)  = {head.mean():8.3f}")
    print(f"  mean L(tau > 60)  = {tail.mean():8.3f}")


if __name__ == "__main__":
    main()
