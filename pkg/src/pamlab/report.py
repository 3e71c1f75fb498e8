"""Figure rendering for experiment outputs.

Each experiment writes its delimited data and, alongside it, one or more
PNG figures produced here.  Rendering is headless (Agg) and deterministic
given the same inputs.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": "pamlab"}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)


def field_figure(path, sites, values, title="field snapshot"):
    fig, ax = plt.subplots(figsize=(7, 3.4))
    values = np.asarray(values)
    if values.ndim == 1:
        ax.plot(sites, values, lw=0.8)
        ax.set_xlabel("x")
        ax.set_ylabel("u(t, x)")
    else:
        im = ax.imshow(values.T, origin="lower",
                       extent=[sites[0], sites[-1], sites[0], sites[-1]])
        fig.colorbar(im, ax=ax, label="u(t, x)")
    ax.set_title(title)
    _finish(fig, path)


def covariance_figure(path, lags, estimates, errors, targets):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.errorbar(lags, estimates, yerr=3 * np.asarray(errors), fmt="o",
                capsize=3, label="empirical (3 s.e.)")
    ax.plot(lags, targets, "k--", lw=1, label="target")
    ax.set_xlabel("lag")
    ax.set_ylabel("covariance")
    ax.legend(frameon=False)
    ax.set_title("noise covariance check")
    _finish(fig, path)


def profile_figure(path, s_values, estimates, errors, argmax_s=None):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.errorbar(s_values, estimates, yerr=3 * np.asarray(errors), fmt="o-", capsize=3)
    if argmax_s is not None:
        ax.axvline(argmax_s, color="crimson", lw=1, ls=":", label=f"argmax s = {argmax_s:g}")
        ax.legend(frameon=False)
    ax.set_xscale("log")
    ax.set_xlabel("sub-horizon s")
    ax.set_ylabel("E exp(pair interaction)")
    ax.set_title("interaction bound profile")
    _finish(fig, path)


def variational_figure(path, sites, values, energy):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    values = np.asarray(values)
    if values.ndim == 1:
        ax.plot(sites, values, lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel("g(x)")
    else:
        im = ax.imshow(values.T, origin="lower",
                       extent=[sites[0], sites[-1], sites[0], sites[-1]])
        fig.colorbar(im, ax=ax, label="g")
    ax.set_title(f"optimal profile, energy = {energy:.6g}")
    _finish(fig, path)


def peaks_figure(path, series_list, exponent, lambda_line=None):
    fig, ax = plt.subplots(figsize=(5.8, 3.8))
    for series in series_list:
        x = np.power(np.log(np.asarray(series.radii)), exponent)
        ax.plot(x, series.statistics, "-", color="steelblue", alpha=0.35, lw=0.8)
    if lambda_line is not None:
        xs = np.power(np.log(np.asarray(series_list[0].radii)), exponent)
        ax.plot(xs, lambda_line * xs, "k--", lw=1.4, label="predicted slope")
        ax.legend(frameon=False)
    ax.set_xlabel(f"(log R)^{exponent:g}")
    ax.set_ylabel("peak statistic")
    ax.set_title("normalized peak growth")
    _finish(fig, path)


def moment_growth_figure(path, orders, log_moments, fit):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.loglog(orders, log_moments, "o", label="measured")
    grid = np.linspace(min(orders), max(orders), 100)
    ax.loglog(grid, np.exp(fit.log_c_hat) * grid ** fit.p_hat, "-",
              label=f"fit p = {fit.p_hat:.2f}")
    ax.loglog(grid, np.exp(fit.log_c_hat) * grid ** fit.p_theory, ":",
              label=f"theory p = {fit.p_theory:g}")
    ax.set_xlabel("order m")
    ax.set_ylabel("log moment")
    ax.legend(frameon=False)
    ax.set_title("moment growth")
    _finish(fig, path)


def holder_figure(path, estimate):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    seps = np.asarray(estimate.separations)
    means = np.asarray(estimate.mean_abs_increments)
    ax.loglog(seps, means, "o", label="mean |increment|")
    ref = means[np.argmin(seps)] * (seps / seps.min()) ** estimate.eta_hat
    ax.loglog(seps, ref, "--", label=f"slope {estimate.eta_hat:.2f}")
    ax.set_xlabel("separation")
    ax.set_ylabel("mean |K(y1) - K(y2)|")
    ax.legend(frameon=False)
    ax.set_title("increment regularity")
    _finish(fig, path)


def girsanov_figure(path, names, lhs, rhs, errors):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    idx = np.arange(len(names))
    ax.errorbar(idx - 0.08, lhs, yerr=3 * np.asarray(errors), fmt="o", capsize=3,
                label="pinned side")
    ax.plot(idx + 0.08, rhs, "s", label="weighted free side")
    ax.set_xticks(idx, names, rotation=20)
    ax.set_ylabel("functional value")
    ax.legend(frameon=False)
    ax.set_title("change-of-measure check")
    _finish(fig, path)
