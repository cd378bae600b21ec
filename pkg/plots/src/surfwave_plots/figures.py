"""Publication-style figures from a verified artifact directory.

Figures are written next to the artifacts (new files only; nothing recorded
in the manifest is touched), and re-running overwrites them
deterministically.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .artifacts import ArtifactError, RunArtifacts


def _require_columns(table, names, where):
    missing = [n for n in names if n not in table]
    if missing:
        raise ArtifactError(f"{where} lacks columns {missing}")


def plot_energy_decay(run_dir, dpi=150):
    """Energy vs. the certified envelope, linear and log scale.

    Draws E(t) with the S(t/T0 - 1) overlay and vertical markers at the
    sequence times m*T0. For a certified run the envelope must dominate the
    trajectory past T0 (checked before drawing). A run with E identically 0
    gets only the linear figure (log scale suppressed with a notice).
    Returns the list of written figure paths.
    """
    run = RunArtifacts(run_dir)
    traj = run.trajectory()
    env = run.envelope()
    cert = run.certification()
    _require_columns(traj, ("t", "E"), "trajectory.csv")
    _require_columns(env, ("t", "S", "E"), "envelope.csv")

    t, E, S = env["t"], env["E"], env["S"]
    T0 = float(cert["T0"])
    certified = cert.get("envelope_ok") == "1"
    if certified:
        past = t > T0
        if not np.all(E[past] <= S[past] * (1.0 + 1e-9)):
            raise ArtifactError(
                "certified run but the envelope does not dominate the trajectory"
            )

    markers = np.arange(0.0, t[-1] + 1e-12, T0)
    written = []

    def decorate(ax, logscale):
        for m in markers:
            ax.axvline(m, color="0.85", lw=0.6, zorder=0)
        ax.plot(t, E, label="E(t)", color="C0")
        label = "S(t/T0 - 1)" + ("" if certified else " (not certified)")
        ax.plot(t, S, label=label, color="C1", ls="--")
        ax.set_xlabel("t")
        ax.set_ylabel("energy")
        if logscale:
            ax.set_yscale("log")
        ax.legend(loc="upper right")

    fig, ax = plt.subplots(figsize=(7, 4.5))
    decorate(ax, logscale=False)
    ax.set_title(f"energy decay (T0 = {T0:.3g})")
    out = run.run_dir / "energy_decay.png"
    fig.savefig(out, dpi=dpi)
    plt.close(fig)
    written.append(out)

    if np.all(E == 0.0):
        print(f"{run.run_dir}: E is identically 0, log-scale figure suppressed")
        return written

    fig, ax = plt.subplots(figsize=(7, 4.5))
    positive = E > 0
    for m in markers:
        ax.axvline(m, color="0.85", lw=0.6, zorder=0)
    ax.semilogy(t[positive], E[positive], label="E(t)", color="C0")
    ax.semilogy(t[S > 0], S[S > 0], label="S(t/T0 - 1)", color="C1", ls="--")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.set_title("energy decay (log scale)")
    ax.legend(loc="upper right")
    out = run.run_dir / "energy_decay_log.png"
    fig.savefig(out, dpi=dpi)
    plt.close(fig)
    written.append(out)
    return written


def plot_surface_fields(run_dir, dpi=150):
    """Surface maps of H, |k1 - k2|, the visibility flag and a(x).

    Needs mesh.off next to the CSVs; the in_M1 vertex fraction is echoed in
    that panel's title. Returns the list of written figure paths.
    """
    run = RunArtifacts(run_dir)
    fields = run.fields()
    _require_columns(fields, ("k1", "k2", "H", "in_M1", "eta", "a"), "fields.csv")
    verts, tris = run.mesh()

    panels = [
        ("H", fields["H"], "coolwarm"),
        ("|k1 - k2|", np.abs(fields["k1"] - fields["k2"]), "viridis"),
        ("in_M1", fields["in_M1"], "cividis"),
        ("a(x)", fields["a"], "magma"),
    ]
    frac = float(fields["in_M1"].mean())

    fig = plt.figure(figsize=(11, 9))
    for i, (name, values, cmap_name) in enumerate(panels, start=1):
        ax = fig.add_subplot(2, 2, i, projection="3d")
        surf = ax.plot_trisurf(
            verts[:, 0], verts[:, 1], verts[:, 2], triangles=tris,
            linewidth=0.0, antialiased=False,
        )
        face_vals = values[tris].mean(axis=1)
        lo, hi = float(face_vals.min()), float(face_vals.max())
        norm = plt.Normalize(lo, hi if hi > lo else lo + 1.0)
        cmap = plt.get_cmap(cmap_name)
        surf.set_fc(cmap(norm(face_vals)))
        title = name
        if name == "in_M1":
            title = f"in_M1 (fraction = {frac:.3f})"
        ax.set_title(title)
        ax.set_box_aspect((1, 1, 1))
        ax.set_axis_off()
        fig.colorbar(plt.cm.ScalarMappable(norm=norm, cmap=cmap), ax=ax, shrink=0.6)
    out = run.run_dir / "surface_fields.png"
    fig.savefig(out, dpi=dpi)
    plt.close(fig)
    return [out]
