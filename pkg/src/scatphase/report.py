"""CSV tables and matplotlib figures for the command line front end."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["SWEEP_COLUMNS", "VALIDATE_COLUMNS", "write_csv", "fmt", "plot_sweep", "plot_convergence",
           "plot_asymptotics", "convergence_table"]

SWEEP_COLUMNS = ("lambda", "sigma_prime_re", "sigma_prime_im", "sigma", "weyl2", "weyl3", "weyl2_deriv",
                 "N", "mu", "unitarity_residual")
VALIDATE_COLUMNS = ("lambda", "mu", "N", "ndof", "sigma_prime_re", "sigma_prime_im", "sigma_prime_exact",
                    "rel_error", "unitarity_residual")

# fixed ids and no timestamps, so figures are reproducible too
plt.rcParams["svg.hashsalt"] = "scatphase"
_META = {"Date": None, "Creator": None}


def fmt(v) -> str:
    """Locale-free text for one CSV cell."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.12e}"


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def plot_sweep(path_prime, path_sigma, lam, sigma_prime, sigma, weyl2, weyl3, weyl2_deriv, bw=None, title=""):
    """``sigma'`` against the Weyl derivative, and ``sigma`` against both Weyl curves."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(lam, sigma_prime, ".-", lw=1, ms=3, label=r"$\sigma'(\lambda)$")
    ax.plot(lam, weyl2_deriv, "--", lw=1, label="Weyl derivative")
    if bw is not None:
        ax.plot(lam, bw, ":", lw=1, label="Breit-Wigner")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$\sigma'$")
    ax.set_title(title)
    ax.legend(frameon=False)
    _save(fig, path_prime)

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(lam, sigma, "-", lw=1.5, label=r"$\sigma(\lambda)$")
    ax.plot(lam, weyl2, "--", lw=1, label="two-term Weyl")
    ax.plot(lam, weyl3, ":", lw=1, label="with corner term (conjectural)")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$\sigma$")
    ax.set_title(title)
    ax.legend(frameon=False)
    _save(fig, path_sigma)


def plot_convergence(path, rows):
    """Relative error against ``mu``, one line per (lambda, N)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    keys = sorted({(r["lambda"], r["N"]) for r in rows})
    for lam, N in keys:
        sel = sorted((r for r in rows if r["lambda"] == lam and r["N"] == N), key=lambda r: r["mu"])
        mu = [r["mu"] for r in sel]
        err = [r["rel_error"] for r in sel]
        ax.semilogy(mu, err, "o-", ms=4, lw=1, label=fr"$\lambda={lam:g}$, $N={N}$")
    ax.set_xlabel(r"$\mu$")
    ax.set_ylabel(r"relative error of $\sigma'$")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_asymptotics(path, lam, curves: dict):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name, y in curves.items():
        ax.plot(lam, y, lw=1, label=name)
    ax.set_xlabel(r"$\lambda$")
    ax.legend(frameon=False)
    _save(fig, path)


def convergence_table(rows) -> str:
    """Plain text table: one block per (lambda, N), rows ``mu`` and relative error."""
    out = []
    for lam, N in sorted({(r["lambda"], r["N"]) for r in rows}):
        out.append(f"lambda = {lam:g}, N = {N}")
        out.append(f"{'mu':>6}  {'ndof':>9}  {'rel. error':>11}  {'|Im/Re|':>9}")
        sel = sorted((r for r in rows if r["lambda"] == lam and r["N"] == N), key=lambda r: r["mu"])
        for r in sel:
            out.append(f"{r['mu']:>6g}  {r['ndof']:>9d}  {r['rel_error']:>11.4e}  {r['unitarity_residual']:>9.2e}")
        errs = [r["rel_error"] for r in sel]
        mono = all(b < a for a, b in zip(errs, errs[1:]))
        out.append(f"monotone in mu: {'yes' if mono else 'no'}")
        out.append("")
    return "\n".join(out)
