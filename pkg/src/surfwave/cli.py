"""Command-line surface: mesh inspection, classification, full simulation
runs, the decay calculus, and artifact verification.

Exit codes: 0 success, 1 domain error (bad mesh, failed stage, missing
file), 2 usage error.
"""

import argparse
import sys

from . import decay, dynamics, geometry, harness
from .fileio import fmt
from .mesh import MeshError, validate_closed_manifold

_DOMAIN_ERRORS = (
    MeshError,
    geometry.GeometryError,
    decay.DecayError,
    dynamics.FeedbackError,
    dynamics.ConvergenceError,
    harness.ConfigError,
    harness.StageError,
    ValueError,
    OSError,
)


def _parse_vec(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected x,y,z")
    return tuple(parts)


def _parse_feedback(spec: str):
    kind, _, param = spec.partition(":")
    param = float(param) if param else (1.0 if kind == "linear" else 3.0)
    if kind == "linear":
        return dynamics.make_feedback("linear", slope=param)
    return dynamics.make_feedback(kind, exponent=param)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surfwave",
        description="Damped waves on closed surfaces: simulate and certify decay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-info", help="validate a mesh file or generator spec")
    p.add_argument("source", help="file path, icosphere:R:S, or torus:R:r:nu:nv")

    p = sub.add_parser("classify", help="write the region/curvature CSV")
    p.add_argument("source")
    p.add_argument("--x0", type=_parse_vec, required=True, help="observer position x,y,z")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")

    p = sub.add_parser("simulate", help="run the full pipeline")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="key = value config file")
    group.add_argument("--preset", help="shipped preset name: " + ", ".join(sorted(harness.PRESETS)))
    p.add_argument("--out", default=None, help="artifact directory (overrides run.output)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")

    p = sub.add_parser("envelope", help="decay calculus only")
    p.add_argument("--feedback", default="linear:1", help="kind:param, e.g. power:3")
    p.add_argument("--E0", type=float, default=1.0)
    p.add_argument("--tmax", type=float, default=1.0)
    p.add_argument("--dt-ode", type=float, default=1e-3)
    p.add_argument("--q-power", type=float, default=None,
                   help="reference mode: solve S' = -S^n directly")
    p.add_argument("--meas-sigma", type=float, default=1.0)
    p.add_argument("--a-inf", type=float, default=0.0)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--out", default=None, help="optional CSV of the solved curve")

    p = sub.add_parser("verify", help="re-check an artifact directory")
    p.add_argument("--run", required=True, help="artifact directory")
    return parser


def cmd_mesh_info(args) -> int:
    mesh = harness.build_mesh(args.source)
    report = validate_closed_manifold(mesh)
    print(f"V = {report.V}")
    print(f"E = {report.E}")
    print(f"F = {report.F}")
    print(f"chi = {report.chi}")
    print(f"is_closed = {int(report.is_closed)}")
    print(f"is_oriented = {int(report.is_oriented)}")
    print(f"min_area_ratio = {fmt(report.min_area_ratio)}")
    print(f"area = {fmt(mesh.triangle_areas().sum())}")
    return 0


def cmd_classify(args) -> int:
    mesh = harness.build_mesh(args.source)
    normals, _ = geometry.vertex_normals_and_areas(mesh)
    curv = geometry.shape_operator(mesh, normals)
    decomp = geometry.classify_visibility(mesh, normals, args.x0)
    if args.out is None:
        import tempfile

        with tempfile.NamedTemporaryFile("r", suffix=".csv") as tmp:
            geometry.export_fields_csv(tmp.name, curv, decomp)
            sys.stdout.write(open(tmp.name).read())
    else:
        geometry.export_fields_csv(args.out, curv, decomp)
    return 0


def cmd_simulate(args) -> int:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise harness.ConfigError(f"--set needs KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.preset:
        config = harness.preset_config(args.preset)
        if overrides:
            kv = {k: v.strip() for k, v in
                  (line.split(" = ", 1) for line in
                   harness.config_to_text(config).strip().splitlines())}
            kv.update(overrides)
            config = harness.config_from_keyvalues(kv)
    else:
        config = harness.load_config(args.config, overrides)
    out = harness.run_experiment(config, out_dir=args.out)
    print(f"artifacts written to {out}")
    return 0


def cmd_envelope(args) -> int:
    if args.q_power is not None:
        n = args.q_power
        q = decay.MonotoneFn(lambda x: x**n, label=f"S^{n}", check=False)
        curve = decay.solve_envelope(q, args.E0, args.tmax, dt_ode=args.dt_ode)
    else:
        g = _parse_feedback(args.feedback)
        env = decay.make_envelope(g, args.meas_sigma, args.a_inf, T0=1.0, L=args.L)
        curve = decay.solve_envelope(env.q, args.E0, args.tmax, dt_ode=args.dt_ode)
    if args.out:
        from .fileio import write_csv

        write_csv(args.out, ["t", "S"], [curve.t, curve.S])
    print(f"S({fmt(args.tmax)}) = {fmt(curve.S[-1])}")
    return 0


def cmd_verify(args) -> int:
    problems = harness.verify_run(args.run)
    if problems:
        for issue in problems:
            print(f"FAIL: {issue}", file=sys.stderr)
        return 1
    print("ok")
    return 0


_COMMANDS = {
    "mesh-info": cmd_mesh_info,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "envelope": cmd_envelope,
    "verify": cmd_verify,
}


def cli(argv=None) -> int:
    """Entry point returning the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())
