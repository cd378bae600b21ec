"""Experiment orchestration: configuration, the run pipeline, artifact
persistence, presets, and artifact re-verification.

A run writes a self-describing artifact directory (resolved config, mesh,
validation/admissibility reports, field/trajectory/envelope CSVs,
certification report, SHA-256 manifest). Identical config and seed produce
byte-identical numeric artifacts; floats are formatted with 17 significant
digits so determinism is checkable by hash.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import decay, dynamics, geometry, operators
from .fileio import fmt, read_csv, read_keyvalues, sha256_file, write_csv, write_keyvalues
from .mesh import generate_icosphere, generate_torus, load_mesh, save_off, validate_closed_manifold


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class StageError(RuntimeError):
    """A pipeline stage failed; the stage name is recorded in the manifest."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    """Full description of one experiment; see KEY_MAP for the file keys."""

    mesh_source: str
    x0: tuple
    seed: int
    patch_mode: str = "none"  # none | all-m0 | seeds
    patch_seeds: tuple = ()
    eps_umb: float = 0.5
    tol_H: float = None
    waive_admissibility: bool = False
    a0: float = 1.0
    a_max: float = 1.0
    eps_tube: float = 0.35
    feedback_kind: str = "linear"
    feedback_param: float = 1.0
    initial_kind: str = "eigenmode"  # eigenmode | random
    initial_mode: int = 1
    initial_energy: float = 1.0
    dt: float = None  # None: 0.5 * min edge length
    t_max: float = 12.0
    sample_stride: int = 1
    T0: float = None  # None: 4 / sqrt(lambda1)
    output: str = "runs/out"
    snapshots: bool = False
    multiplier: bool = False

    def validate(self):
        scalars = dict(
            a0=self.a0, a_max=self.a_max, eps_tube=self.eps_tube,
            t_max=self.t_max, feedback_param=self.feedback_param,
            initial_energy=self.initial_energy, eps_umb=self.eps_umb,
        )
        for name, val in scalars.items():
            if not np.isfinite(val):
                raise ConfigError(f"{name} must be finite")
        if self.a0 <= 0 or self.eps_tube <= 0 or self.t_max <= 0:
            raise ConfigError("a0, eps_tube and t_max must be positive")
        if self.a_max < self.a0:
            raise ConfigError("a_max must be at least a0")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.T0 is not None and self.T0 <= 0:
            raise ConfigError("T0 must be positive")
        if self.sample_stride < 1:
            raise ConfigError("sample_stride must be >= 1")
        if self.patch_mode not in ("none", "all-m0", "seeds"):
            raise ConfigError(f"unknown patch mode {self.patch_mode!r}")
        if self.patch_mode == "seeds" and not self.patch_seeds:
            raise ConfigError("patch.mode = seeds needs patch.seeds")
        if self.initial_kind not in ("eigenmode", "random"):
            raise ConfigError(f"unknown initial data kind {self.initial_kind!r}")
        if len(self.x0) != 3 or not all(np.isfinite(c) for c in self.x0):
            raise ConfigError("observer x0 must be a finite 3-vector")
        if self.multiplier and not self.snapshots:
            raise ConfigError("diag.multiplier requires diag.snapshots")
        return self


# dotted file key -> (field, parser, serializer)
def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _ints(text):
    return tuple(int(x) for x in text.split(",")) if text else ()


def _opt_float(text):
    return None if text in ("", "auto") else float(text)


KEY_MAP = {
    "mesh.source": ("mesh_source", str, str),
    "observer.x0": ("x0", _floats, lambda v: ",".join(fmt(c) for c in v)),
    "run.seed": ("seed", int, str),
    "patch.mode": ("patch_mode", str, str),
    "patch.seeds": ("patch_seeds", _ints, lambda v: ",".join(str(i) for i in v)),
    "patch.eps_umb": ("eps_umb", float, fmt),
    "patch.tol_h": ("tol_H", _opt_float, lambda v: "auto" if v is None else fmt(v)),
    "patch.waive_admissibility": ("waive_admissibility", lambda s: bool(int(s)), lambda v: str(int(v))),
    "damping.a0": ("a0", float, fmt),
    "damping.a_max": ("a_max", float, fmt),
    "damping.eps_tube": ("eps_tube", float, fmt),
    "feedback.kind": ("feedback_kind", str, str),
    "feedback.param": ("feedback_param", float, fmt),
    "initial.kind": ("initial_kind", str, str),
    "initial.mode": ("initial_mode", int, str),
    "initial.energy": ("initial_energy", float, fmt),
    "time.dt": ("dt", _opt_float, lambda v: "auto" if v is None else fmt(v)),
    "time.t_max": ("t_max", float, fmt),
    "time.sample_stride": ("sample_stride", int, str),
    "decay.T0": ("T0", _opt_float, lambda v: "auto" if v is None else fmt(v)),
    "run.output": ("output", str, str),
    "diag.snapshots": ("snapshots", lambda s: bool(int(s)), lambda v: str(int(v))),
    "diag.multiplier": ("multiplier", lambda s: bool(int(s)), lambda v: str(int(v))),
}

_REQUIRED_KEYS = ("mesh.source", "observer.x0", "run.seed")


def config_from_keyvalues(kv: dict) -> ExperimentConfig:
    """Build a config from `key = value` pairs; unknown keys are errors and
    the seed is mandatory."""
    unknown = set(kv) - set(KEY_MAP)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = [k for k in _REQUIRED_KEYS if k not in kv]
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")
    values = {}
    for key, text in kv.items():
        field_name, parser, _ = KEY_MAP[key]
        try:
            values[field_name] = parser(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc
    return ExperimentConfig(**values).validate()


def load_config(path, overrides=None) -> ExperimentConfig:
    kv = read_keyvalues(path)
    if overrides:
        kv.update(overrides)
    return config_from_keyvalues(kv)


def config_to_text(config: ExperimentConfig, resolved: dict = None) -> str:
    """Serialize in fixed key order; `resolved` replaces auto values
    (e.g. the dt and T0 actually used)."""
    lines = []
    for key, (field_name, _, serialize) in KEY_MAP.items():
        value = getattr(config, field_name)
        if resolved and field_name in resolved:
            value = resolved[field_name]
        lines.append(f"{key} = {serialize(value)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# presets

PRESETS = {
    # damping active on the whole sphere
    "sphere-full": dict(
        mesh_source="icosphere:1:3", x0=(0.0, 0.0, 0.0), seed=1234,
        patch_mode="none", a0=1.0, a_max=1.0, eps_tube=0.35,
        feedback_kind="linear", feedback_param=1.0,
        initial_kind="eigenmode", initial_mode=1, initial_energy=1.0,
        t_max=12.0, output="runs/sphere-full",
    ),
    # observer outside the sphere; the invisible cap is the undamped patch
    "sphere-cap": dict(
        mesh_source="icosphere:1:3", x0=(0.0, 0.0, -2.0), seed=1234,
        patch_mode="all-m0", eps_umb=0.5, a0=1.0, a_max=1.0, eps_tube=0.35,
        feedback_kind="linear", feedback_param=1.0,
        initial_kind="eigenmode", initial_mode=1, initial_energy=1.0,
        t_max=12.0, output="runs/sphere-cap",
    ),
    # observer at the center of a torus: the inner band (where |k1 - k2|
    # peaks at 2) is the undamped patch, damping covers its complement;
    # the band only satisfies the relaxed eps-umbilical test
    "torus-outer": dict(
        mesh_source="torus:2:1:96:48", x0=(0.0, 0.0, 0.0), seed=1234,
        patch_mode="all-m0", eps_umb=2.5, tol_H=0.05,
        a0=1.0, a_max=1.0, eps_tube=0.5,
        feedback_kind="linear", feedback_param=1.0,
        initial_kind="eigenmode", initial_mode=1, initial_energy=1.0,
        t_max=40.0, output="runs/torus-outer",
    ),
}


def preset_config(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (have {sorted(PRESETS)})")
    params = dict(PRESETS[name])
    params.update(overrides)
    return ExperimentConfig(**params).validate()


# ---------------------------------------------------------------------------
# component construction


def build_mesh(source: str):
    """Mesh from a generator spec ('icosphere:R:S' / 'torus:R:r:nu:nv') or a
    file path."""
    if source.startswith("icosphere:"):
        parts = source.split(":")
        if len(parts) != 3:
            raise ConfigError("icosphere spec is icosphere:<radius>:<subdivisions>")
        return generate_icosphere((0.0, 0.0, 0.0), float(parts[1]), int(parts[2]))
    if source.startswith("torus:"):
        parts = source.split(":")
        if len(parts) != 5:
            raise ConfigError("torus spec is torus:<R>:<r>:<nu>:<nv>")
        return generate_torus((0.0, 0.0, 0.0), float(parts[1]), float(parts[2]),
                              int(parts[3]), int(parts[4]))
    return load_mesh(source)


@dataclass
class ExperimentComponents:
    """Everything run_experiment assembles before time integration."""

    config: ExperimentConfig
    mesh: object
    normals: np.ndarray
    areas: np.ndarray
    curv: geometry.CurvatureField
    decomp: geometry.RegionDecomposition
    damp: geometry.DampingProfile
    ops: operators.DiscreteOperators
    feedback: dynamics.FeedbackLaw
    u0: np.ndarray
    v0: np.ndarray
    dt: float
    T0: float
    admissibility: list


def _build_geometry(config: ExperimentConfig, mesh):
    """Normals, curvature, visibility partition, patches and damping."""
    normals, areas = geometry.vertex_normals_and_areas(mesh)
    curv = geometry.shape_operator(mesh, normals)
    decomp = geometry.classify_visibility(mesh, normals, config.x0)

    if config.patch_mode == "none":
        decomp.patches = []
    elif config.patch_mode == "all-m0":
        decomp.patches = geometry.m0_patches(mesh, decomp)
    else:
        decomp.patches = geometry.m0_patches(mesh, decomp, seeds=config.patch_seeds)

    admissibility = [
        geometry.check_admissible_patch(curv, patch, config.eps_umb, tol_H=config.tol_H)
        for patch in decomp.patches
    ]
    damp = geometry.build_damping(
        mesh, decomp, curv, config.a0, config.eps_tube,
        a_max=config.a_max, eps_umb=config.eps_umb, tol_H=config.tol_H,
        waive_admissibility=config.waive_admissibility,
    )
    return normals, areas, curv, decomp, admissibility, damp


def _build_dynamics(config: ExperimentConfig, mesh):
    """Operators, feedback law, initial data and the resolved dt / T0."""
    ops = operators.build_operators(mesh)
    lam1, mode1 = operators.first_nonzero_eigenvalue(ops.K, ops.mass, seed=config.seed)
    ops.lambda1 = lam1

    if config.initial_kind == "eigenmode":
        u0 = _eigenmode(ops, config.initial_mode, mode1, config.seed)
    else:
        rng = np.random.default_rng(config.seed)
        u0 = operators.project_zero_mean(rng.standard_normal(mesh.num_vertices), ops.mass)
    pot = 0.5 * float(u0 @ (ops.K @ u0))
    if pot <= 0:
        raise ConfigError("initial displacement has zero elastic energy")
    u0 = u0 * math.sqrt(config.initial_energy / pot)
    v0 = np.zeros(mesh.num_vertices)

    g = _make_feedback(config)
    dt = config.dt if config.dt is not None else 0.5 * float(mesh.edge_lengths().min())
    T0 = config.T0 if config.T0 is not None else 4.0 / math.sqrt(lam1)
    return ops, g, u0, v0, dt, T0


def build_components(config: ExperimentConfig) -> ExperimentComponents:
    """Assemble mesh, geometry, damping, operators and initial data."""
    config.validate()
    mesh = build_mesh(config.mesh_source)
    normals, areas, curv, decomp, admissibility, damp = _build_geometry(config, mesh)
    ops, g, u0, v0, dt, T0 = _build_dynamics(config, mesh)
    return ExperimentComponents(
        config=config, mesh=mesh, normals=normals, areas=areas, curv=curv,
        decomp=decomp, damp=damp, ops=ops, feedback=g, u0=u0, v0=v0,
        dt=dt, T0=T0, admissibility=admissibility,
    )


def _make_feedback(config: ExperimentConfig) -> dynamics.FeedbackLaw:
    if config.feedback_kind == "linear":
        return dynamics.make_feedback("linear", slope=config.feedback_param)
    return dynamics.make_feedback(config.feedback_kind, exponent=config.feedback_param)


def _eigenmode(ops, mode_index: int, mode1, seed: int) -> np.ndarray:
    if mode_index == 1:
        return mode1
    from scipy import sparse
    from scipy.sparse.linalg import eigsh

    M = sparse.dia_array((ops.mass[None, :], [0]), shape=ops.K.shape)
    rng = np.random.default_rng(seed)
    k = mode_index + 2
    vals, vecs = eigsh(ops.K.tocsc(), k=k, M=M.tocsc(), sigma=-1e-3,
                       v0=rng.standard_normal(ops.K.shape[0]))
    order = np.argsort(vals)
    return operators.project_zero_mean(vecs[:, order[mode_index]], ops.mass)


# ---------------------------------------------------------------------------
# the pipeline


def run_experiment(config: ExperimentConfig, out_dir=None) -> Path:
    """Run the full pipeline and write the artifact directory.

    Any stage failure is recorded in the manifest (partial artifacts are
    retained) and re-raised as StageError.
    """
    out = Path(out_dir if out_dir is not None else config.output)
    out.mkdir(parents=True, exist_ok=True)
    stage_status = []
    artifact_files = []

    def run_stage(name, fn):
        try:
            result = fn()
        except Exception as exc:
            stage_status.append((name, f"failed: {exc}"))
            _write_manifest(out, stage_status, artifact_files)
            raise StageError(name, exc) from exc
        stage_status.append((name, "ok"))
        return result

    run_stage("configure", config.validate)

    def mesh_stage():
        m = build_mesh(config.mesh_source)
        save_off(m, out / "mesh.off")
        report = validate_closed_manifold(m)
        write_keyvalues(out / "validation.txt", [
            ("V", report.V), ("E", report.E), ("F", report.F), ("chi", report.chi),
            ("is_closed", report.is_closed), ("is_oriented", report.is_oriented),
            ("min_area_ratio", report.min_area_ratio),
            ("area", float(m.triangle_areas().sum())),
        ])
        artifact_files.extend(["mesh.off", "validation.txt"])
        return m

    mesh_obj = run_stage("mesh", mesh_stage)

    def geometry_stage():
        normals, areas, curv, decomp, admissibility, damp = _build_geometry(config, mesh_obj)
        lines = [("patches", len(decomp.patches))]
        for i, rep in enumerate(admissibility):
            lines += [
                (f"patch.{i}.size", len(decomp.patches[i])),
                (f"patch.{i}.H_max", rep.H_max),
                (f"patch.{i}.gap_max", rep.gap_max),
                (f"patch.{i}.tol_H", rep.tol_H),
                (f"patch.{i}.eps_umb", rep.eps_umb),
                (f"patch.{i}.admissible", rep.admissible),
            ]
        lines += [
            ("R_max", decomp.R_max),
            ("norm_B", curv.norm_B),
            ("H_sup", float(np.abs(curv.H).max())),  # sup_M |H| interpretation
            ("M_bound", damp.M_bound),
            ("a_inf", damp.a_inf),
            ("mstar_size", int(decomp.mstar.sum())),
        ]
        write_keyvalues(out / "admissibility.txt", lines)
        geometry.export_fields_csv(out / "fields.csv", curv, decomp, damp)
        artifact_files.extend(["admissibility.txt", "fields.csv"])
        return normals, areas, curv, decomp, admissibility, damp

    normals, areas, curv, decomp, admissibility, damp = run_stage("geometry", geometry_stage)

    comps_dyn = run_stage("operators", lambda: _build_dynamics(config, mesh_obj))
    ops, feedback, u0, v0, dt, T0 = comps_dyn
    comps = ExperimentComponents(
        config=config, mesh=mesh_obj, normals=normals, areas=areas, curv=curv,
        decomp=decomp, damp=damp, ops=ops, feedback=feedback, u0=u0, v0=v0,
        dt=dt, T0=T0, admissibility=admissibility,
    )

    def simulate_stage():
        sim = dynamics.SimulationConfig(
            ops=comps.ops, damp=comps.damp, feedback=comps.feedback,
            u0=comps.u0, v0=comps.v0, dt=comps.dt, t_max=config.t_max,
            sample_stride=config.sample_stride, record_snapshots=config.snapshots,
        )
        traj = dynamics.simulate(sim)
        res = dynamics.dissipation_residual(traj)
        residual_col = np.concatenate([[0.0], res.raw])
        write_csv(out / "trajectory.csv",
                  ["t", "E", "kinetic", "potential", "dissipated_increment",
                   "dissipation_residual"],
                  [traj.t, traj.E, traj.kinetic, traj.potential,
                   traj.dissipated_increment, residual_col])
        artifact_files.append("trajectory.csv")
        if traj.snapshots:
            n = len(comps.u0)
            t_col = np.repeat([t for t, _, _ in traj.snapshots], n)
            vid = np.tile(np.arange(n), len(traj.snapshots))
            u_col = np.concatenate([u for _, u, _ in traj.snapshots])
            v_col = np.concatenate([v for _, _, v in traj.snapshots])
            write_csv(out / "snapshots.csv", ["t", "vertex_id", "u", "v"],
                      [t_col, vid, u_col, v_col])
            artifact_files.append("snapshots.csv")
        return traj

    traj = run_stage("simulate", simulate_stage)

    def decay_stage():
        meas_sigma = comps.ops.total_area * comps.T0
        env = decay.make_envelope(comps.feedback, meas_sigma, comps.damp.a_inf, comps.T0)
        report = decay.certify(traj, env, comps.T0)
        S_curve = report.envelope.S if report.envelope is not None else None
        tau = np.maximum(traj.t / comps.T0 - 1.0, 0.0)
        S_vals = S_curve(tau) if S_curve is not None else np.full_like(traj.t, np.nan)
        write_csv(out / "envelope.csv",
                  ["t", "S", "E", "kinetic", "potential", "dissipated_increment"],
                  [traj.t, S_vals, traj.E, traj.kinetic, traj.potential,
                   traj.dissipated_increment])
        cert_lines = [
            ("sequence_ok", report.sequence_ok),
            ("envelope_ok", report.envelope_ok),
            ("fitted_L", report.fitted_L),
            ("T0", comps.T0),
            ("n_sequence", len(report.s) - 1),
            ("lambda1", comps.ops.lambda1),
            ("c", env.c),
            ("K0", env.K0),
            ("meas_sigma", env.meas_sigma),
            ("a_inf", comps.damp.a_inf),
            ("E0", traj.E[0]),
            ("dt", comps.dt),
        ]
        cert_lines += [(f"s.{m}", report.s[m]) for m in range(len(report.s))]
        write_keyvalues(out / "certification.txt", cert_lines)
        artifact_files.extend(["envelope.csv", "certification.txt"])
        return report

    report = run_stage("decay", decay_stage)

    if config.multiplier:
        def diagnostics_stage():
            residual = dynamics.multiplier_residual(traj, comps.decomp, comps.curv)
            write_keyvalues(out / "diagnostics.txt",
                            [("multiplier_residual", residual),
                             ("snapshot_count", len(traj.snapshots))])
            artifact_files.append("diagnostics.txt")

        run_stage("diagnostics", diagnostics_stage)

    def config_stage():
        resolved = {"dt": comps.dt, "T0": comps.T0}
        (out / "config.txt").write_text(config_to_text(config, resolved))
        artifact_files.append("config.txt")

    run_stage("write-config", config_stage)
    _write_manifest(out, stage_status, artifact_files)
    return out


def _write_manifest(out: Path, stage_status, artifact_files) -> None:
    lines = [(f"stage.{name}", status) for name, status in stage_status]
    for name in sorted(set(artifact_files)):
        path = out / name
        if path.exists():
            lines.append((f"file.{name}", sha256_file(path)))
    write_keyvalues(out / "manifest.txt", lines)


# ---------------------------------------------------------------------------
# artifact verification


def verify_run(run_dir) -> list:
    """Re-check an artifact directory: manifest hashes, energy monotonicity,
    the dissipation ledger, and the certified envelope domination. Returns a
    list of problems (empty when the directory is self-consistent)."""
    run_dir = Path(run_dir)
    problems = []
    manifest_path = run_dir / "manifest.txt"
    if not manifest_path.exists():
        return [f"missing manifest: {manifest_path}"]
    manifest = read_keyvalues(manifest_path)

    for key, value in manifest.items():
        if key.startswith("stage.") and value != "ok":
            problems.append(f"{key} = {value}")
        if key.startswith("file."):
            path = run_dir / key[len("file."):]
            if not path.exists():
                problems.append(f"missing artifact {path.name}")
            elif sha256_file(path) != value:
                problems.append(f"hash mismatch for {path.name}")
    if problems:
        return problems

    try:
        load_config(run_dir / "config.txt")
    except (ConfigError, ValueError) as exc:
        problems.append(f"config.txt unusable: {exc}")

    traj = read_csv(run_dir / "trajectory.csv")
    E = traj["E"]
    E0 = E[0] if E[0] > 0 else 1.0
    if np.any(E < -1e-12 * E0):
        problems.append("negative energy sample")
    if np.any(np.diff(E) > 1e-8 * E0):
        problems.append("energy increases beyond tolerance")
    if np.any(traj["dissipated_increment"] < -1e-10 * E0):
        problems.append("negative dissipation increment")
    if np.any(traj["dissipation_residual"] > 1e-8 * E0):
        problems.append("dissipation residual above tolerance")

    cert = read_keyvalues(run_dir / "certification.txt")
    env = read_csv(run_dir / "envelope.csv")
    T0 = float(cert["T0"])
    past = env["t"] > T0
    dominated = bool(np.all(env["E"][past] <= env["S"][past] * (1.0 + 1e-9)))
    claimed = cert["envelope_ok"] == "1"
    if dominated != claimed:
        problems.append(
            f"certification envelope_ok = {cert['envelope_ok']} inconsistent with CSVs"
        )
    return problems
