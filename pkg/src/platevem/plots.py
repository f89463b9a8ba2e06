"""Figure writers for the CLI report paths (headless Agg backend)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dynamics import bordered_jacobian, jacobian_blocks


def plot_convergence(rows, path, title="spatial convergence"):
    """Log-log errors against h with a first-order guide line."""
    h = np.array([r.h for r in rows])
    e2 = np.array([r.err_h2 for r in rows])
    erel = np.array([r.err_rel for r in rows])
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(h, e2, "o-", label="broken H2 error")
    ax.loglog(h, erel, "s--", label="relative energy error")
    ax.loglog(h, e2[0] * (h / h[0]), ":", color="gray", label="slope 1")
    ax.set_xlabel("h")
    ax.set_ylabel("error at final time")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_temporal(rows, path, title="time refinement"):
    """Log-log time-refinement errors with slope guides."""
    dt = np.array([r.dt for r in rows])
    err = np.array([r.error for r in rows])
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(dt, err, "o-", label="M-norm error vs reference")
    ax.loglog(dt, err[0] * (dt / dt[0]), ":", color="gray", label="slope 1")
    ax.loglog(dt, err[0] * (dt / dt[0]) ** 2, "--", color="lightgray",
              label="slope 2")
    ax.set_xlabel("dt")
    ax.set_ylabel("error at final time")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_energy(traj, path, title="energy trace"):
    """Energy and axial integral against time on twin axes."""
    t = np.asarray(traj.time)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(t, traj.energy, color="tab:blue", label="energy")
    ax.set_xlabel("time")
    ax.set_ylabel("energy", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(t, traj.xi, color="tab:orange", alpha=0.7, label="axial integral")
    ax2.set_ylabel("axial integral", color="tab:orange")
    ax.grid(True, alpha=0.3)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_jacobian_sparsity(system, params, state, dt, path):
    """Side-by-side patterns: augmented matrix vs eliminated system."""
    J = bordered_jacobian(system, params, dt, state.eta_n, state.xi).tocoo()
    J1, J2, J3, _ = jacobian_blocks(system, params, dt, state.eta_n,
                                    state.xi)
    J1 = J1.tocsr()
    J1.eliminate_zeros()
    n = J1.shape[0]
    full = np.zeros((n, n), dtype=bool)
    rows = np.flatnonzero(J2)
    cols = np.flatnonzero(J3)
    if rows.size and cols.size:
        full[np.ix_(rows, cols)] = True
    full |= J1.astype(bool).toarray()

    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.5))
    axes[0].spy(J, markersize=0.5)
    axes[0].set_title(f"augmented, nnz={J.nnz}")
    axes[1].imshow(full, cmap="Greys", interpolation="nearest")
    axes[1].set_title(f"eliminated, nnz={int(full.sum())}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_condition_growth(study, path, title="condition growth"):
    """Condition estimates against 1/h with the fitted slope."""
    hs = np.array([h for h, _, _ in study])
    conds = np.array([r.cond_estimate for _, _, r in study])
    slope, intercept = np.polyfit(np.log(1.0 / hs), np.log(conds), 1)
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.loglog(1.0 / hs, conds, "o-", label="condition estimate")
    ax.loglog(1.0 / hs, np.exp(intercept) * (1.0 / hs) ** slope, ":",
              color="gray", label=f"slope {slope:.2f}")
    ax.set_xlabel("1/h")
    ax.set_ylabel("condition estimate")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_mesh(mesh, path, title=None):
    """Outline every cell of a polygonal mesh."""
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    for i in range(mesh.n_cells):
        poly = mesh.cell_polygon(i)
        closed = np.vstack([poly, poly[:1]])
        ax.plot(closed[:, 0], closed[:, 1], color="tab:blue", linewidth=0.7)
    ax.set_aspect("equal")
    ax.set_title(title or f"{mesh.n_cells} cells, h={mesh.h:.3g}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
