"""Command-line entry point ``torus-bnf``.

Settings are resolved in three layers: built-in defaults, then the matching
table of a TOML file given with ``--config`` (``[normal-form]``,
``[stability]``, ``[measure]`` or ``[plan]``), then explicit flags.  The
resolved settings are hashed (SHA-256 of their canonical JSON) and the hash
is written into every output file together with the seed.  Outputs carry no
timestamps, so identical settings reproduce identical files.

Exit codes: 0 success, 1 certificate or bound failure, 2 usage error.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

def config_hash(settings: dict) -> str:
    blob = json.dumps(settings, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _load_section(path, section: str) -> dict:
    if path is None:
        return {}
    try:
        data = tomllib.loads(Path(path).read_text())
    except FileNotFoundError:
        raise click.UsageError(f"config file {path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise click.UsageError(f"cannot parse {path}: {exc}") from None
    table = data.get(section, {})
    shared = {k: v for k, v in data.items() if not isinstance(v, dict)}
    return {**shared, **table}


def resolve(ctx: click.Context, section: str, defaults: dict, flags: dict) -> dict:
    """Merge defaults, the config table and the flags that were actually given."""
    settings = dict(defaults)
    from_file = _load_section(ctx.obj["config"], section)
    unknown = set(from_file) - set(defaults) - {"seed", "jobs", "out"}
    if unknown:
        raise click.UsageError(f"unknown {section} settings in config: {sorted(unknown)}")
    settings.update({k: v for k, v in from_file.items() if k in defaults})
    settings.update({k: v for k, v in flags.items() if v is not None})
    for key in ("seed", "jobs", "out"):
        if ctx.obj[key] is not None:
            settings[key] = ctx.obj[key]
        elif key in from_file:
            settings[key] = from_file[key]
    settings.setdefault("seed", 0)
    settings.setdefault("jobs", 1)
    settings.setdefault("out", ".")
    return settings


def recorded(settings: dict) -> dict:
    """Settings that affect results (worker count and output folder excluded)."""
    return {k: v for k, v in settings.items() if k not in ("jobs", "out")}


def provenance(section: str, settings: dict) -> dict:
    hashed = recorded(settings)
    return {"tool": "torus-bnf", "version": __version__, "subcommand": section,
            "seed": settings["seed"], "config_hash": config_hash(hashed)}


def out_dir(settings: dict) -> Path:
    path = Path(settings["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _floats(value) -> list:
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).replace(",", " ").split()]


# ---------------------------------------------------------------------------
# shared model construction
# ---------------------------------------------------------------------------

def _build_model(settings: dict):
    """Frequency model and perturbation from resolved settings."""
    from .builders import build_nlw, build_nls, load_spec, monomial_spec
    from .frequencies import FrequencyModel, check_nonresonant_up_to_order, random_potential
    from .polynomial import PolynomialFamily

    kind = settings["model"]
    d = int(settings["d"])
    M = int(settings["cutoff"])
    rng = np.random.default_rng(settings["seed"])
    if kind == "nlw":
        if d != 1:
            raise click.UsageError("the wave model needs d = 1")
        mass = settings.get("mass")
        if mass is None:
            # sample masses until the scan finds no violation of the divisor bound
            for _ in range(1000):
                mass = float(rng.uniform(1.0, 2.0))
                if not check_nonresonant_up_to_order(
                        FrequencyModel.nlw(mass), settings["r"] + 2, settings["gamma"],
                        settings["tau"], M):
                    break
            else:
                raise click.ClickException("no non-resonant mass found in 1000 draws")
        freq = FrequencyModel.nlw(float(mass))
    elif kind == "nls":
        freq = FrequencyModel.nls(d, settings["decay"], random_potential(d, M, rng), M)
    else:
        raise click.UsageError(f"unknown model {kind!r}")

    spec_path = settings.get("spec")
    if spec_path:
        if not Path(spec_path).exists():
            raise click.UsageError(f"nonlinearity file {spec_path} does not exist")
        spec = load_spec(spec_path)
    elif int(settings["power"]) == 0:
        return freq, PolynomialFamily((), dim=d)
    else:
        n = int(settings["power"])
        spec = monomial_spec(kind, n, 1.0, d, plus=None if kind == "nlw" else (n + 1) // 2)
    if spec.kind != kind:
        raise click.UsageError("nonlinearity kind does not match the model")
    if kind == "nlw":
        P = build_nlw(spec, freq.mass, M)
    else:
        P = build_nls(spec, M)
    return freq, P


MODEL_DEFAULTS = {"model": "nlw", "d": 1, "cutoff": 8, "mass": None, "decay": 2.0,
                  "power": 3, "spec": None}


# ---------------------------------------------------------------------------
# click group
# ---------------------------------------------------------------------------

@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="torus-bnf")
@click.option("--seed", type=int, default=None, help="Seed for every random draw.")
@click.option("--jobs", type=click.IntRange(1), default=None, help="Worker processes.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Directory for output files.")
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="TOML file with one table per subcommand.")
@click.pass_context
def cli(ctx, seed, jobs, out, config):
    """Normal forms, stability runs and resonance measures on the torus."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, jobs=jobs, out=out, config=config)


# -- normal-form ---------------------------------------------------------------

@cli.command("normal-form")
@click.option("--model", type=click.Choice(["nlw", "nls"]), default=None)
@click.option("--d", "d", type=int, default=None)
@click.option("--cutoff", type=int, default=None)
@click.option("--mass", type=float, default=None, help="Wave mass; sampled when omitted.")
@click.option("--decay", type=float, default=None)
@click.option("--power", type=int, default=None, help="Monomial power (0 for no nonlinearity).")
@click.option("--spec", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON nonlinearity table (overrides --power).")
@click.option("--r", "r", type=int, default=None)
@click.option("--gamma", type=float, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--s0", type=float, default=None)
@click.option("--N", "N", type=float, default=None)
@click.option("--R-prime", "R_prime", type=float, default=None)
@click.option("--C-N", "C_N", type=float, default=None)
@click.option("--order-cap", type=int, default=None)
@click.pass_context
def cmd_normal_form(ctx, **flags):
    """Build the perturbation, run the normal form and certify it."""
    from .normal_form import NormalFormConfig, birkhoff_normal_form, outcome_to_dict

    defaults = {**MODEL_DEFAULTS, "r": 2, "gamma": 1e-3, "tau": 10.0, "s0": 0.0, "N": None,
                "R_prime": 1.0, "C_N": None, "order_cap": None}
    settings = resolve(ctx, "normal-form", defaults, flags)
    try:
        freq, P = _build_model(settings)
        cfg = NormalFormConfig(r=settings["r"], gamma=settings["gamma"], tau=settings["tau"],
                               s0=settings["s0"], N=settings["N"], R_prime=settings["R_prime"],
                               C_N=settings["C_N"], order_cap=settings["order_cap"],
                               d=settings["d"], cutoff=settings["cutoff"])
    except (ValueError, KeyError) as exc:
        raise click.UsageError(str(exc)) from None
    outcome = birkhoff_normal_form(P, freq, cfg)
    prov = provenance("normal-form", settings)
    folder = out_dir(settings)
    _write_json(folder / "normal_form.json",
                {"provenance": prov, "settings": recorded(settings), **outcome_to_dict(outcome)})
    cert = outcome.certificate
    with (folder / "certificate.csv").open("w", newline="") as fh:
        for k in sorted(prov):
            fh.write(f"# {k}: {prov[k]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "step", "lhs", "rhs", "radius", "verdict"])
        for row in cert.rows:
            verdict = cert.label if row.verified else "failed"
            w.writerow([row.name, row.step, repr(row.lhs), repr(row.rhs),
                        "" if row.radius is None else repr(row.radius), verdict])
    click.echo(f"Z terms: {outcome.Z.n_terms()}  R terms: {outcome.R.n_terms()}  "
               f"C_N ({cert.C_N_source}) = {cert.C_N:.6g}  R_* = {cert.R_star:.6g}")
    click.echo(f"certificate: {'all rows ' + cert.label if cert.verified else 'FAILED'}")
    ctx.exit(EXIT_OK if cert.verified else EXIT_FAIL)


# -- stability -------------------------------------------------------------------

def _stability_run(args):
    """One amplitude of the sweep (top level so it can run in a worker)."""
    from .dynamics import integrate, stability_report, verify_transformed_drift, write_trajectory
    from .polynomial import StateVector

    settings, freq, P, outcome, xi_unit, eps, folder, prov = args
    z0 = StateVector(settings["d"], settings["cutoff"], xi_unit).scaled(eps)
    T = settings["T"] if settings["T"] is not None else min(0.1 * eps ** -2, settings["T_max"])
    traj = integrate(freq, P, z0, T, settings["dt"], scheme=settings["scheme"],
                     stride=settings["stride"], s=settings["s"])
    rep = stability_report(traj, nu=settings["nu"], c2=settings["c2"])
    write_trajectory(traj, Path(folder) / f"trajectory_eps{eps:.6g}.csv", provenance=prov)
    row = {**rep.to_dict(), "initial_norm": rep.epsilon, "epsilon": eps, "T": T}
    if outcome is not None:
        drift = verify_transformed_drift(freq, P, outcome, z0, T, settings["dt"],
                                         s=settings["s"], trajectory=traj)
        row["transformed_drift"] = drift.drift
        row["transformed_bound"] = drift.bound
        row["transform_escaped"] = drift.escaped
    return row


@cli.command("stability")
@click.option("--model", type=click.Choice(["nlw", "nls"]), default=None)
@click.option("--d", "d", type=int, default=None)
@click.option("--cutoff", type=int, default=None)
@click.option("--mass", type=float, default=None)
@click.option("--decay", type=float, default=None)
@click.option("--power", type=int, default=None)
@click.option("--spec", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--eps", "eps", type=str, default=None, help="Amplitudes, e.g. '0.02,0.01'.")
@click.option("--T", "T", type=float, default=None, help="Horizon (default min(0.1/eps^2, T_max)).")
@click.option("--T-max", "T_max", type=float, default=None)
@click.option("--dt", type=float, default=None)
@click.option("--scheme", type=click.Choice(["strang", "yoshida4"]), default=None)
@click.option("--stride", type=int, default=None)
@click.option("--s", "s", type=float, default=None)
@click.option("--nu", type=float, default=None)
@click.option("--c2", type=float, default=None)
@click.option("--r", "r", type=int, default=None, help="Normal-form steps for the transformed drift (0: skip).")
@click.option("--gamma", type=float, default=None)
@click.option("--tau", type=float, default=None)
@click.pass_context
def cmd_stability(ctx, **flags):
    """Integrate an amplitude sweep and report norm and super-action drift."""
    from .dynamics import fit_exponent, flat_state
    from .normal_form import NormalFormConfig, birkhoff_normal_form

    defaults = {**MODEL_DEFAULTS, "cutoff": 16, "eps": [0.02, 0.01, 0.005], "T": None,
                "T_max": 2e4, "dt": 0.02, "scheme": "strang", "stride": 64, "s": 3.0,
                "nu": 0.0, "c2": None, "r": 1, "gamma": 1e-3, "tau": 10.0}
    flags["eps"] = _floats(flags["eps"])
    settings = resolve(ctx, "stability", defaults, flags)
    settings["eps"] = _floats(settings["eps"])
    try:
        freq, P = _build_model(settings)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    outcome = None
    if settings["r"] and P.parts:
        cfg = NormalFormConfig(r=settings["r"], gamma=settings["gamma"], tau=settings["tau"],
                               d=settings["d"], cutoff=settings["cutoff"], certify=False)
        outcome = birkhoff_normal_form(P, freq, cfg)
    xi_unit = flat_state(settings["d"], settings["cutoff"], 1.0, settings["s"],
                         np.random.default_rng([settings["seed"], 1])).xi
    prov = provenance("stability", settings)
    folder = out_dir(settings)
    jobs = [(settings, freq, P, outcome, xi_unit, eps, str(folder), prov)
            for eps in settings["eps"]]
    if settings["jobs"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=settings["jobs"]) as pool:
            rows = list(pool.map(_stability_run, jobs))
    else:
        rows = [_stability_run(job) for job in jobs]

    eps_list = [row["epsilon"] for row in rows]
    raw_J = [row["super_action_drift"] * row["epsilon"] ** (3 - settings["nu"]) for row in rows]
    slope_J = fit_exponent(eps_list, raw_J) if len(rows) > 1 and min(raw_J) > 0 else None
    slope_F = None
    if outcome is not None and len(rows) > 1 and min(r["transformed_drift"] for r in rows) > 0:
        slope_F = fit_exponent(eps_list, [r["transformed_drift"] for r in rows])
    columns = ["epsilon", "T", "norm_ratio", "super_action_drift", "action_drift",
               "energy_drift", "transformed_drift", "stopped_early", "slope_J", "slope_F"]
    with (folder / "stability.csv").open("w", newline="") as fh:
        for k in sorted(prov):
            fh.write(f"# {k}: {prov[k]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(row.get(c)) if isinstance(row.get(c), float) else row.get(c, "")
                        for c in columns[:-2]] + [repr(slope_J), repr(slope_F)])
    _write_json(folder / "stability.json", {"provenance": prov, "settings": recorded(settings),
                                            "rows": rows, "mass": freq.mass,
                                            "slope_J": slope_J, "slope_F": slope_F})
    for row in rows:
        click.echo(f"eps={row['epsilon']:<8g} T={row['T']:<10g} norm ratio={row['norm_ratio']:.4f} "
                   f"J drift/eps^3={row['super_action_drift']:.4e}")
    click.echo(f"J-drift exponent: {slope_J}")
    if slope_F is not None:
        click.echo(f"transformed-drift exponent: {slope_F}")
    ok = all(row["norm_ok"] for row in rows) and all(row["drift_ok"] is not False for row in rows)
    ctx.exit(EXIT_OK if ok else EXIT_FAIL)


# -- measure -----------------------------------------------------------------------

@cli.command("measure")
@click.option("--model", type=click.Choice(["nlw", "nls"]), default=None)
@click.option("--d", "d", type=int, default=None)
@click.option("--cutoff", type=int, default=None)
@click.option("--decay", type=float, default=None)
@click.option("--r", "r", type=int, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--gammas", type=str, default=None, help="Comma-separated gamma values.")
@click.option("--samples", type=int, default=None)
@click.pass_context
def cmd_measure(ctx, **flags):
    """Monte Carlo excluded-measure estimates against the closed-form bounds."""
    from .measure import fit_gamma_exponent, sweep_excluded_nls, sweep_theta_nlw, write_reports

    defaults = {"model": "nlw", "d": 1, "cutoff": 8, "decay": 2.0, "r": 1, "tau": None,
                "gammas": [1e-10, 1e-8, 1e-6, 1e-4], "samples": 2000}
    flags["gammas"] = _floats(flags["gammas"])
    settings = resolve(ctx, "measure", defaults, flags)
    settings["gammas"] = _floats(settings["gammas"])
    if settings["tau"] is None:
        settings["tau"] = (63.0 * (settings["r"] + 2) ** 3 if settings["model"] == "nlw"
                           else 15.0 * (settings["decay"] + 2 * settings["d"] + 1))
    if any(g < 0 for g in settings["gammas"]) or settings["samples"] < 1:
        raise click.UsageError("gammas must be non-negative and samples positive")
    if settings["model"] == "nlw":
        reports = sweep_theta_nlw(settings["r"], settings["gammas"], settings["tau"],
                                  settings["cutoff"], settings["samples"], settings["seed"])
    else:
        reports = sweep_excluded_nls(settings["r"], settings["gammas"], settings["tau"],
                                     settings["cutoff"], settings["decay"], settings["samples"],
                                     settings["seed"], settings["d"])
    prov = provenance("measure", settings)
    folder = out_dir(settings)
    write_reports(reports, folder / "measure.csv", folder / "measure.json", prov)
    for rep in reports:
        click.echo(f"gamma={rep.gamma:<10.3g} hit={rep.hit_fraction:.5f} +- {rep.ci_half_width:.5f}"
                   f"  bound={rep.closed_form_bound:.4g}")
    slope = fit_gamma_exponent(reports)
    click.echo(f"empirical gamma exponent: {slope}")
    ctx.exit(EXIT_OK if all(rep.below_bound for rep in reports) else EXIT_FAIL)


# -- plan ------------------------------------------------------------------------------

@cli.command("plan")
@click.option("--epsilon", type=float, default=None)
@click.option("--ln-inv-epsilon", type=float, default=None, help="ln(1/epsilon) for tiny amplitudes.")
@click.option("--mode", type=click.Choice(["nlw", "nls", "nls-x-free"]), default=None)
@click.option("--lam", type=float, default=None, help="Exponent lambda in (0, 1/4) for nlw.")
@click.option("--d", "d", type=int, default=None)
@click.option("--decay", type=float, default=None)
@click.option("--tau", type=float, default=None)
@click.pass_context
def cmd_plan(ctx, **flags):
    """Print the parameter schedule for an amplitude."""
    from .planner import PlannerRejection, format_plan, parameter_planner

    defaults = {"epsilon": 1e-40, "ln_inv_epsilon": None, "mode": "nlw", "lam": 0.249,
                "d": 1, "decay": 2.0, "tau": None}
    settings = resolve(ctx, "plan", defaults, flags)
    kwargs = dict(lam=settings["lam"], d=settings["d"], decay=settings["decay"],
                  tau=settings["tau"], ln_inv_epsilon=settings["ln_inv_epsilon"])
    try:
        plan = parameter_planner(settings["epsilon"], settings["mode"], **kwargs)
    except PlannerRejection as exc:
        click.echo(format_plan(exc.plan))
        click.echo(f"rejected: {exc}")
        click.echo(f"largest admissible epsilon: exp(-{exc.max_epsilon_ln:.12g})"
                   f" = {exc.max_epsilon:.6e}")
        ctx.exit(EXIT_USAGE)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    click.echo(format_plan(plan))
    if ctx.obj["out"] is not None:
        prov = provenance("plan", settings)
        _write_json(out_dir(settings) / "plan.json", {"provenance": prov, **plan.to_dict()})


def main(argv=None):
    """Console-script entry point."""
    try:
        return cli.main(args=argv, prog_name="torus-bnf", standalone_mode=True)
    except SystemExit as exc:  # pragma: no cover - click always exits
        if argv is not None:
            return exc.code
        raise


if __name__ == "__main__":  # pragma: no cover
    main()
