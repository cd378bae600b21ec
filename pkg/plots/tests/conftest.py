import hashlib
import shutil
import subprocess

import pytest

SURFWAVE = shutil.which("surfwave")


@pytest.fixture(scope="session")
def cap_run(tmp_path_factory):
    """A real sphere-cap artifact directory, produced through the simulator's
    CLI (the only coupling to the primary component)."""
    if SURFWAVE is None:
        pytest.skip("surfwave CLI not installed")
    out = tmp_path_factory.mktemp("artifacts") / "sphere-cap"
    subprocess.run(
        [SURFWAVE, "simulate", "--preset", "sphere-cap", "--out", str(out)],
        check=True, capture_output=True, text=True,
    )
    return out


def sha256(path):
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(run_dir, names):
    lines = [f"stage.fake = ok"]
    for name in sorted(names):
        lines.append(f"file.{name} = {sha256(run_dir / name)}")
    (run_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def make_zero_energy_run(run_dir):
    """Handcrafted artifact directory with E identically zero."""
    run_dir.mkdir(parents=True)
    rows_t = [0.0, 0.5, 1.0, 1.5, 2.0]
    traj = ["t,E,kinetic,potential,dissipated_increment,dissipation_residual"]
    env = ["t,S,E,kinetic,potential,dissipated_increment"]
    for t in rows_t:
        traj.append(f"{t},0,0,0,0,0")
        env.append(f"{t},0,0,0,0,0")
    (run_dir / "trajectory.csv").write_text("\n".join(traj) + "\n")
    (run_dir / "envelope.csv").write_text("\n".join(env) + "\n")
    (run_dir / "certification.txt").write_text(
        "sequence_ok = 1\nenvelope_ok = 1\nfitted_L = 1\nT0 = 1\n"
    )
    fields = ["vertex_id,k1,k2,H,in_M1,eta,a"]
    for v in range(4):
        fields.append(f"{v},-1,-1,-1,1,1,1")
    (run_dir / "fields.csv").write_text("\n".join(fields) + "\n")  # no mesh.off
    write_manifest(
        run_dir, ["trajectory.csv", "envelope.csv", "certification.txt", "fields.csv"]
    )
    return run_dir


def make_bad_domination_run(run_dir):
    """Claims envelope_ok but the S column undercuts the energy."""
    run_dir.mkdir(parents=True)
    traj = ["t,E,kinetic,potential,dissipated_increment,dissipation_residual"]
    env = ["t,S,E,kinetic,potential,dissipated_increment"]
    for t, e, s in [(0.0, 1.0, 1.0), (1.0, 0.8, 0.9), (2.0, 0.7, 0.5), (3.0, 0.6, 0.3)]:
        traj.append(f"{t},{e},0,0,0,0")
        env.append(f"{t},{s},{e},0,0,0")
    (run_dir / "trajectory.csv").write_text("\n".join(traj) + "\n")
    (run_dir / "envelope.csv").write_text("\n".join(env) + "\n")
    (run_dir / "certification.txt").write_text(
        "sequence_ok = 1\nenvelope_ok = 1\nfitted_L = 1\nT0 = 1\n"
    )
    write_manifest(run_dir, ["trajectory.csv", "envelope.csv", "certification.txt"])
    return run_dir
