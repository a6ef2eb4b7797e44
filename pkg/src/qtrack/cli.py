"""Command-line interface: scenario loading, pipelines, and reports.

Subcommands
-----------
solve      solve the squeezing fixed point of a configured model (JSON out)
check      emit the spectral assumption report of a model (JSON out)
simulate   sample a trajectory ensemble of the phase-space process (CSV + JSON)
oracle     run the d=1 grid oracle on the same scenario (CSV + fidelity CSV)
estimate   reconstruct labels from a record CSV (CSV + residual JSON)
example    run a stock pipeline end to end and gate it (free | ho | magnetic)
compare    compare the outcome columns of two trajectory CSVs

Exit codes: 0 all criteria pass, 1 a criterion failed, 2 configuration error.
Scenario files are JSON with a top-level ``schema_version``; see
``qtrack/scenarios/`` for the bundled ones.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import models
from .compare import ComparisonReport, compare_distributions, moments_against_theory
from .coherent import CoherentState, Superposition
from .estimator import mle, mle_sequence, residuals
from .filters import FilterMatrices, build_filter, check_assumptions
from .grid import (
    init_coherent_grid,
    init_superposition_grid,
    oracle_ensemble,
    run_oracle_trajectory,
    suggest_box,
)
from .phase_space import ModelSpec, PhaseSpacePoint, SymplecticMatrix
from .squeezing import SqueezingMatrix, StableSqueezing, solve_squeezing
from .trajectory import InitialStateSpec, philox_stream, simulate_ensemble

__all__ = ["main", "load_scenario", "run_example", "ConfigError"]


class ConfigError(Exception):
    """Scenario file or command arguments are invalid."""


SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "model", "init", "n_steps", "n_trajectories", "seed"],
    "properties": {
        "schema_version": {"const": 1},
        "name": {"type": "string"},
        "model": {
            "type": "object",
            "oneOf": [
                {"required": ["d", "S", "Sigma"]},
                {"required": ["kind"]},
            ],
            "properties": {
                "d": {"type": "integer", "minimum": 1},
                "S": {"type": "array"},
                "Sigma": {"type": "array"},
                "kind": {"enum": ["free_particle", "harmonic_oscillator", "magnetic_field"]},
                "mass": {"type": "number"},
                "omega": {"type": "number"},
                "beta": {"type": "number"},
                "lam": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "init": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["coherent", "mixture", "superposition"]},
                "zeta": {"type": "array"},
                "W": {"type": "object"},
                "components": {"type": "array", "minItems": 1},
            },
        },
        "n_steps": {"type": "integer", "minimum": 1},
        "n_trajectories": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "grid": {
            "type": "object",
            "properties": {
                "x_min": {"type": "number"},
                "x_max": {"type": "number"},
                "n_points": {"type": "integer"},
            },
        },
        "outputs": {"type": "object"},
    },
}


@dataclass
class Scenario:
    """A validated scenario with its certified model attached."""

    name: str
    model: ModelSpec
    init_kind: str
    init: InitialStateSpec | Superposition
    n_steps: int
    n_trajectories: int
    seed: int
    grid: dict
    outputs: dict
    stable: StableSqueezing
    fm: FilterMatrices
    report: object


def _build_model(obj: dict) -> ModelSpec:
    if "kind" in obj:
        kind = obj["kind"]
        lam = float(obj.get("lam", 1.0))
        if kind == "free_particle":
            return models.free_particle(mass=float(obj.get("mass", 1.0)), lam=lam,
                                        d=int(obj.get("d", 1)))
        if kind == "harmonic_oscillator":
            return models.harmonic_oscillator(omega=float(obj["omega"]), lam=lam,
                                              d=int(obj.get("d", 1)))
        if kind == "magnetic_field":
            return models.magnetic_field(beta=float(obj["beta"]), mass=float(obj["mass"]), lam=lam)
        raise ConfigError(f"unknown model kind {kind!r}")
    try:
        return ModelSpec.from_dict(obj)
    except Exception as exc:
        raise ConfigError(f"model: {exc}") from exc


def _parse_w(obj: dict | None, default: SqueezingMatrix) -> SqueezingMatrix:
    if obj is None:
        return default
    re = np.atleast_2d(np.asarray(obj.get("re", 0.0), float))
    im = np.atleast_2d(np.asarray(obj["im"], float))
    if re.shape != im.shape:
        re = np.broadcast_to(re, im.shape)
    return SqueezingMatrix(re + 1j * im)


def _build_init(obj: dict, stable: StableSqueezing, d: int):
    kind = obj["kind"]
    w_default = stable.w_hat

    def state(entry, w_obj):
        zeta = np.asarray(entry["zeta"], float)
        if zeta.size != 2 * d:
            raise ConfigError(f"init.zeta must have length {2*d}, got {zeta.size}")
        return CoherentState(_parse_w(w_obj, w_default), PhaseSpacePoint(zeta))

    if kind == "coherent":
        return kind, InitialStateSpec.coherent(state(obj, obj.get("W")))
    if kind == "mixture":
        pairs = []
        for comp in obj["components"]:
            pairs.append((float(comp["weight"]), state(comp, comp.get("W", obj.get("W")))))
        return kind, InitialStateSpec.mixture(pairs)
    if kind == "superposition":
        coeffs, states = [], []
        for comp in obj["components"]:
            c = comp.get("coeff", [1.0, 0.0])
            coeffs.append(complex(c[0], c[1]))
            states.append(state(comp, comp.get("W", obj.get("W"))))
        return kind, Superposition.normalized(coeffs, states)
    raise ConfigError(f"unknown init kind {kind!r}")


def load_scenario(path: str | Path, tol: float = 1e-12) -> Scenario:
    """Load, schema-validate, and certify a scenario file.

    Raises ``ConfigError`` with the offending field path on schema violations
    and with the failing assumption name when the model cannot be certified.
    """
    import jsonschema

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such scenario file: {path}")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    try:
        jsonschema.validate(obj, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from exc

    model = _build_model(obj["model"])
    try:
        stable = solve_squeezing(model, tol=tol)
    except Exception as exc:
        raise ConfigError(f"assumption AW failed (S_xp invertibility): {exc}") from exc
    fm = build_filter(model, stable)
    report = check_assumptions(model, fm)
    failed = [name for name, ok in
              (("AW", report.aw_ok), ("AS", report.as_ok), ("AM", report.am_ok)) if not ok]
    if failed:
        raise ConfigError(f"model fails assumption(s) {', '.join(failed)}: {report.to_dict()}")
    init_kind, init = _build_init(obj["init"], stable, model.d)
    return Scenario(
        name=obj.get("name", path.stem),
        model=model,
        init_kind=init_kind,
        init=init,
        n_steps=int(obj["n_steps"]),
        n_trajectories=int(obj["n_trajectories"]),
        seed=int(obj["seed"]),
        grid=obj.get("grid", {}),
        outputs=obj.get("outputs", {}),
        stable=stable,
        fm=fm,
        report=report,
    )


def bundled_scenario_path(name: str) -> Path:
    return Path(resources.files("qtrack") / "scenarios" / f"{name}.json")


# ---------------------------------------------------------------- output I/O

_FMT = "%.17g"


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_FMT % v if isinstance(v, float) else v for v in row])


def write_trajectories_csv(path: Path, q: np.ndarray, zetas: np.ndarray | None = None,
                           etas: np.ndarray | None = None) -> None:
    n_traj, n_steps, d = q.shape
    header = ["traj_id", "step"] + [f"q_{j}" for j in range(d)]
    if zetas is not None:
        header += [f"xi_{j}" for j in range(d)] + [f"pi_{j}" for j in range(d)]
    if etas is not None:
        header += [f"eta_{j}" for j in range(d)]

    def rows():
        for i in range(n_traj):
            for k in range(n_steps):
                row: list = [i, k] + [float(v) for v in q[i, k]]
                if zetas is not None:
                    row += [float(v) for v in zetas[i, k]]
                if etas is not None:
                    row += [float(v) for v in etas[i, k]]
                yield row

    _write_csv(path, header, rows())


def read_outcomes_csv(path: Path) -> np.ndarray:
    """Read q_* columns of a trajectory CSV into an (n_traj, n_steps, d) array."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        try:
            i_traj = header.index("traj_id")
            i_step = header.index("step")
        except ValueError as exc:
            raise ConfigError(f"{path}: missing traj_id/step columns") from exc
        q_cols = [i for i, h in enumerate(header) if h.startswith("q_")]
        if not q_cols:
            raise ConfigError(f"{path}: no q_* columns found")
        data = {}
        for row in reader:
            data[(int(row[i_traj]), int(row[i_step]))] = [float(row[j]) for j in q_cols]
    trajs = sorted({t for t, _ in data})
    steps = sorted({s for _, s in data})
    out = np.empty((len(trajs), len(steps), len(q_cols)))
    for a, t in enumerate(trajs):
        for b, s in enumerate(steps):
            out[a, b] = data[(t, s)]
    return out


def _summary(q: np.ndarray, model: ModelSpec, scenario: Scenario) -> dict:
    flat = q.reshape(q.shape[0], -1)
    return {
        "scenario": scenario.name,
        "model_id": model.model_id(),
        "seed": scenario.seed,
        "n_trajectories": int(q.shape[0]),
        "n_steps": int(q.shape[1]),
        "mean": flat.mean(axis=0).tolist(),
        "second_moments": (flat[:, :, None] * flat[:, None, :]).mean(axis=0).tolist(),
    }


def _emit_json(obj: dict, out_dir: Path | None, filename: str) -> None:
    text = json.dumps(obj, indent=2)
    if out_dir is None:
        print(text)
    else:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / filename).write_text(text + "\n")


# ---------------------------------------------------------------- subcommands


def cmd_solve(args) -> int:
    scenario = load_scenario(args.config, tol=args.tol)
    st = scenario.stable
    kappa_eigs = np.linalg.eigvals(st.kappa)
    _emit_json(
        {
            "model_id": scenario.model.model_id(),
            "w_hat_re": st.w_hat.re.tolist(),
            "w_hat_im": st.w_hat.im.tolist(),
            "residual": st.residual,
            "iterations": st.iterations,
            "kappa_eigenvalues": sorted(float(np.real(v)) for v in kappa_eigs),
            "noise_cov": st.noise_cov.tolist(),
        },
        args.out,
        "solve.json",
    )
    return 0


def cmd_check(args) -> int:
    scenario = load_scenario(args.config, tol=args.tol)
    _emit_json(scenario.report.to_dict(), args.out, "check.json")
    return 0


def _scenario_overrides(scenario: Scenario, args) -> Scenario:
    if args.seed is not None:
        scenario.seed = args.seed
    if args.trajectories is not None:
        scenario.n_trajectories = args.trajectories
    if args.steps is not None:
        scenario.n_steps = args.steps
    return scenario


def cmd_simulate(args) -> int:
    scenario = _scenario_overrides(load_scenario(args.config, tol=args.tol), args)
    if scenario.init_kind == "superposition":
        raise ConfigError("superposition initial states are pure states; use the oracle subcommand")
    ens = simulate_ensemble(
        scenario.model, scenario.stable, scenario.fm, scenario.init,
        scenario.n_steps, scenario.n_trajectories, scenario.seed,
    )
    out_dir = args.out if args.out is not None else Path(".")
    write_trajectories_csv(out_dir / scenario.outputs.get("trajectories", "trajectories.csv"),
                           ens["q"], ens["zetas"], ens["etas"])
    _emit_json(_summary(ens["q"], scenario.model, scenario), out_dir,
               scenario.outputs.get("summary", "summary.json"))
    return 0


def _grid_params(scenario: Scenario) -> tuple[float, float, int]:
    g = scenario.grid
    if {"x_min", "x_max", "n_points"} <= g.keys():
        return float(g["x_min"]), float(g["x_max"]), int(g["n_points"])
    init = scenario.init
    if isinstance(init, Superposition):
        comps = InitialStateSpec.mixture(
            [(1.0 / len(init.states), s) for s in init.states])
    else:
        comps = init
    lo, hi = suggest_box(scenario.model, comps, scenario.n_steps,
                         scenario.stable.noise_cov, scenario.fm.k)
    width = min(float(np.sqrt(np.linalg.inv(2.0 * s.w.im)[0, 0])) for s in comps.states)
    n = 1 << int(np.ceil(np.log2((hi - lo) / (width / 6.0))))
    n = int(min(max(n, 1024), 1 << 21))
    return lo, hi, n


def cmd_oracle(args) -> int:
    scenario = _scenario_overrides(load_scenario(args.config, tol=args.tol), args)
    if scenario.model.d != 1:
        raise ConfigError("the grid oracle supports d = 1 models only")
    x_min, x_max, n_points = _grid_params(scenario)
    out_dir = args.out if args.out is not None else Path(".")

    if isinstance(scenario.init, Superposition):
        gs0 = init_superposition_grid(x_min, x_max, n_points, scenario.init)
        qs = []
        fids = []
        for i in range(scenario.n_trajectories):
            run = run_oracle_trajectory(gs0, scenario.model, scenario.n_steps,
                                        philox_stream(scenario.seed, i), seed=scenario.seed)
            qs.append(run["record"].outcomes)
            fids.append(run["fidelities"])
        q = np.stack(qs, axis=0)
        fid = np.stack(fids, axis=0)
    else:
        q = oracle_ensemble(scenario.model, scenario.init, scenario.n_steps,
                            scenario.n_trajectories, scenario.seed, x_min, x_max, n_points)[..., None]
        # fidelity traces for a small subset, tracking the sampled component
        n_trace = min(scenario.n_trajectories, 8)
        fid = np.empty((n_trace, scenario.n_steps))
        weights = np.cumsum(scenario.init.weights)
        for i in range(n_trace):
            rng = philox_stream(scenario.seed, i)
            comp = scenario.init.states[min(int(np.searchsorted(weights, rng.random(), side="right")),
                                            len(scenario.init.states) - 1)]
            gs0 = init_coherent_grid(x_min, x_max, n_points, comp)
            run = run_oracle_trajectory(gs0, scenario.model, scenario.n_steps, rng,
                                        seed=scenario.seed, track=comp)
            fid[i] = run["fidelities"]

    write_trajectories_csv(out_dir / scenario.outputs.get("oracle", "oracle.csv"), q)
    _write_csv(
        out_dir / scenario.outputs.get("fidelity", "fidelity.csv"),
        ["traj_id", "step", "fidelity"],
        ((i, k, float(fid[i, k])) for i in range(fid.shape[0]) for k in range(fid.shape[1])),
    )
    _emit_json(_summary(q, scenario.model, scenario), out_dir, "oracle_summary.json")
    return 0


def cmd_estimate(args) -> int:
    scenario = load_scenario(args.config, tol=args.tol)
    q = read_outcomes_csv(Path(args.records))
    n_traj, n_steps, d = q.shape
    if d != scenario.model.d:
        raise ConfigError(f"records are {d}-dimensional but the model has d={scenario.model.d}")
    margin = min(20, max(1, n_steps // 3))
    n_max = n_steps - 1 - margin
    out_dir = args.out if args.out is not None else Path(".")

    all_res = []
    rows = []
    tail0 = None
    for i in range(n_traj):
        est0 = mle(q[i], scenario.fm, tol=args.tol if args.tol < 1e-2 else 1e-8)
        tail0 = est0.tail_bound if tail0 is None else max(tail0, est0.tail_bound)
        seq = mle_sequence(q[i], scenario.fm, n_max=n_max)
        all_res.append(residuals(q[i], seq))
        for k in range(seq.shape[0]):
            rows.append([i, k] + [float(v) for v in seq[k]])
    header = ["traj_id", "step"] + [f"zhat_{j}" for j in range(2 * d)]
    _write_csv(out_dir / "estimates.csv", header, rows)

    res = np.concatenate(all_res, axis=0)
    diag = {
        "n_trajectories": n_traj,
        "n_estimated_steps": n_max + 1,
        "max_tail_bound_at_0": float(tail0),
        "residual_mean": res.mean(axis=0).tolist(),
        "residual_cov": np.atleast_2d(np.cov(res.T)).tolist(),
        "expected_residual_cov": scenario.stable.noise_cov.tolist(),
    }
    _emit_json(diag, out_dir, "residuals.json")
    return 0


def cmd_compare(args) -> int:
    qa = read_outcomes_csv(Path(args.sample_a))
    qb = read_outcomes_csv(Path(args.sample_b))
    report = compare_distributions(qa, qb, label="record")
    for line in report.summary_lines():
        print(line)
    _emit_json(report.to_dict(), args.out, "compare.json")
    return 0 if report.passed else 1


# ---------------------------------------------------------------- examples


def run_example(name: str, n_trajectories: int = 3000, n_steps: int = 4,
                seed: int = 20240715, tol: float = 1e-12) -> ComparisonReport:
    """Full pipeline on a stock model, gated by a ComparisonReport.

    free / ho additionally compare the phase-space process against the grid
    oracle; magnetic checks the tensor structure of its filter matrices.
    """
    scenario = load_scenario(bundled_scenario_path(name), tol=tol)
    scenario.n_trajectories = n_trajectories
    scenario.n_steps = n_steps
    scenario.seed = seed
    model, stable, fm = scenario.model, scenario.stable, scenario.fm
    report = ComparisonReport()

    report.add(f"{name}: squeezing residual", stable.residual, 1e-10)
    sym = float(np.linalg.norm(stable.w_hat.w - stable.w_hat.w.T))
    report.add(f"{name}: W_hat symmetry", sym, 1e-12)
    gap = float(np.linalg.eigvalsh(model.sigma - stable.w_hat.position_cov()).min())
    report.add(f"{name}: min eig(Sigma - (2 Im W)^-1) > 0", -gap, 0.0)
    rep = scenario.report
    report.add(f"{name}: assumptions AW/AS/AM", 0.0 if rep.all_ok else 1.0, 0.5)

    ens = simulate_ensemble(model, stable, fm, scenario.init, scenario.n_steps,
                            scenario.n_trajectories, scenario.seed)
    zeta0 = scenario.init.states[0].zeta.vec
    theory = np.stack([
        (np.linalg.matrix_power(model.s.matrix, n) @ zeta0)[: model.d]
        for n in range(scenario.n_steps)
    ])
    if len(scenario.init.states) == 1:
        moments_against_theory(ens["q"], theory.ravel(), report, label=f"{name}: E[Q_n]")

    if model.d == 1:
        mu = np.linalg.eigvals(fm.m)
        report.add(f"{name}: |mu|^2 = kappa (both eigenvalues)",
                   float(np.abs(np.abs(mu) ** 2 - fm.kappa[0, 0]).max()), 1e-8)
        x_min, x_max, n_points = _grid_params(scenario)
        q_oracle = oracle_ensemble(model, scenario.init, scenario.n_steps,
                                   scenario.n_trajectories, scenario.seed + 1,
                                   x_min, x_max, n_points)[..., None]
        compare_distributions(ens["q"], q_oracle, report, label=f"{name}: oracle vs process")
    else:
        # tensor structure of the magnetic model: W_hat = w 1 and M = M_hat (x) R(beta)
        off = stable.w_hat.w - stable.w_hat.w[0, 0] * np.eye(model.d)
        report.add(f"{name}: W_hat = w*1 structure", float(np.abs(off).max()), 1e-9)
        beta = float(np.arctan2(model.s.s_xx[1, 0], model.s.s_xx[0, 0]))
        m_beta = np.cos(beta) * np.sin(beta) / float(model.s.s_xp[0, 0])
        carrier = models.magnetic_carrier(beta, m_beta / beta)
        model_1d = ModelSpec(d=1, s=carrier, sigma=model.sigma[:1, :1])
        stable_1d = solve_squeezing(model_1d, tol=tol)
        fm_1d = build_filter(model_1d, stable_1d)
        rot = np.array([[np.cos(beta), -np.sin(beta)], [np.sin(beta), np.cos(beta)]])
        report.add(f"{name}: M = M_hat (x) R(beta)",
                   float(np.abs(np.kron(fm_1d.m, rot) - fm.m).max()), 1e-9)
        report.add(f"{name}: spectral radius of M < 1", fm.spectral_radius(), 1.0 - 1e-8)

    # estimator exactness at reduced scale
    n_rec = 40
    ens_e = simulate_ensemble(model, stable, fm, scenario.init, n_rec, 200, scenario.seed + 2)
    violations = 0
    for i in range(200):
        try:
            est = mle(ens_e["q"][i], fm, tol=1e-6)
        except Exception:
            violations += 1
            continue
        if np.linalg.norm(est.zeta_hat.vec - ens_e["zetas"][i, 0]) > max(est.tail_bound, 1e-12):
            violations += 1
    report.add(f"{name}: estimator exactness violations", float(violations), 0.0)
    return report


def cmd_example(args) -> int:
    name = {"free": "free_particle", "ho": "harmonic_oscillator",
            "magnetic": "magnetic_field"}[args.name]
    report = run_example(
        name,
        n_trajectories=args.trajectories or 3000,
        n_steps=args.steps or 4,
        seed=args.seed if args.seed is not None else 20240715,
    )
    for line in report.summary_lines():
        print(line)
    _emit_json(report.to_dict(), args.out, f"example_{args.name}.json")
    return 0 if report.passed else 1


# ---------------------------------------------------------------- entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtrack", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required,
                       help="scenario JSON file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trajectories", type=int, default=None)
        p.add_argument("--steps", type=int, default=None)
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--tol", type=float, default=1e-12)

    for cmd, fn in (("solve", cmd_solve), ("check", cmd_check),
                    ("simulate", cmd_simulate), ("oracle", cmd_oracle)):
        p = sub.add_parser(cmd)
        common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("estimate")
    common(p)
    p.add_argument("records", help="trajectory CSV with q_* columns")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("example")
    p.add_argument("name", choices=["free", "ho", "magnetic"])
    common(p, config_required=False)
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("compare")
    p.add_argument("sample_a")
    p.add_argument("sample_b")
    common(p, config_required=False)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
