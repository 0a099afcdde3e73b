"""Figure rendering for simulation and convergence reports.

Figures are written straight to files (Agg backend, no display).  The
simulation figure mirrors the usual presentation for these runs: solid
state trajectories, dashed energy curves, dotted horizontals for a
desired state when one is given.
"""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def simulation_figure(columns: dict, state_names, path, desired=None,
                      title: str | None = None) -> str:
    """Render state and energy evolution to ``path``.

    ``columns`` maps column names to arrays and must contain "t", the
    state columns listed in ``state_names`` and "H"; "Htilde" is drawn
    when present and distinct from "H".
    """
    plt = _pyplot()
    t = np.asarray(columns["t"])
    fig, ax = plt.subplots(figsize=(8.0, 4.8))
    for name in state_names:
        ax.plot(t, columns[name], lw=1.2, label=name)
    if desired is not None:
        for value in np.asarray(desired, dtype=float):
            ax.axhline(value, ls=":", lw=0.8, color="gray")
    ax.plot(t, columns["H"], "--", color="tab:cyan", lw=1.6, label="H")
    if "Htilde" in columns and not np.array_equal(columns["Htilde"], columns["H"]):
        ax.plot(t, columns["Htilde"], "--", color="tab:purple", lw=1.6,
                label="Htilde")
    ax.set_xlabel("t")
    ax.grid(alpha=0.3)
    ax.legend(loc="best", ncol=2, fontsize=9)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def convergence_figure(h_values, errors, order: float, path,
                       title: str | None = None) -> str:
    """Log-log end-state errors with the fitted slope."""
    plt = _pyplot()
    h_values = np.asarray(h_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.loglog(h_values, errors, "o-", label="end-state error")
    anchor = errors[0] * (h_values / h_values[0]) ** order
    ax.loglog(h_values, anchor, "--", color="gray",
              label=f"slope {order:.2f}")
    ax.set_xlabel("step size h")
    ax.set_ylabel("error")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
