"""Command-line front end: ``levypolymer <command> --config run.yaml``.

Exit codes: 0 ok, 1 usage, 2 config, 3 numeric-gate failure.
"""
import json
import math
import os
import platform
import sys
import warnings
from functools import partial

import click
import numpy as np
from scipy.integrate import trapezoid

from . import __version__
from .cloud import CoupledCloudFamily, PointCloud, sample_cloud
from .config import ConfigError, dump_config, intensity_of, levels_of, load_config, parse_config
from .measures import INF, TruncationWindow, check_admissibility
from .montecarlo import RunningMoments, derive_seed, make_rng, replica_map

SEED_SCHEME = "numpy SeedSequence(seed, spawn_key=(replica,)) -> Philox"


class GateFailure(RuntimeError):
    pass


# ---- plumbing ----

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Run:
    """Output directory, resolved config and manifest bookkeeping."""

    def __init__(self, command, cfg, out_dir):
        self.command, self.cfg, self.out_dir = command, cfg, out_dir
        self.outputs = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def table(self, name, header, rows):
        if self.cfg["format"] == "json":
            with open(self.path(name + ".json"), "w") as fh:
                json.dump([_jsonable(dict(zip(header, r))) for r in rows], fh, indent=1)
                fh.write("\n")
        else:
            with open(self.path(name + ".csv"), "w") as fh:
                fh.write(",".join(header) + "\n")
                for r in rows:
                    fh.write(",".join(_fmt(v) for v in r) + "\n")

    def summary(self, name, data):
        with open(self.path(name + ".json"), "w") as fh:
            json.dump(_jsonable(data), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def manifest(self):
        import numba
        import scipy
        data = {"command": self.command, "config": self.cfg, "seed": self.cfg["seed"],
                "seed_scheme": SEED_SCHEME, "outputs": sorted(self.outputs),
                "versions": {"levypolymer": __version__, "numpy": np.__version__,
                             "scipy": scipy.__version__, "numba": numba.__version__,
                             "python": platform.python_version()}}
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            json.dump(_jsonable(data), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _window(cfg):
    return TruncationWindow(float(cfg["a"]), float(cfg["b"]))


def _half_width(cfg, endpoint_norm=0.0):
    return float(cfg["L"]) if "L" in cfg else endpoint_norm + 6 * math.sqrt(cfg["T"])


def _cloud_for(cfg, k):
    """Replica k cloud: the explicit file if given, otherwise sampled."""
    if "cloud" in cfg:
        return PointCloud.from_csv(cfg["cloud"])
    lam = intensity_of(cfg)
    norm = 0.0
    if "endpoint" in cfg:
        norm = float(np.max(np.abs(cfg["endpoint"].get("x", [0.0]))))
    return sample_cloud(lam, cfg["T"], _half_width(cfg, norm), cfg["a"], cfg["d"],
                        seed=derive_seed(cfg["seed"], k), rng=make_rng(cfg["seed"], k))


def _lam(cfg, cloud):
    return cloud.intensity if cloud.intensity is not None else intensity_of(cfg)


def _threads(cfg):
    return cfg.get("threads") or os.cpu_count() or 1


def _replicas(cfg):
    return 1 if "cloud" in cfg else int(cfg["replicas"])


# ---- replica workers (top level so they pickle) ----

def _w_partition(cfg, k):
    from .partition import brute_force_enumeration, log_p2p, log_partition
    c = _cloud_for(cfg, k)
    lam = _lam(cfg, c)
    w = _window(cfg)
    row = [k, len(c.view(w.a, w.b)), log_partition(c, cfg["beta"], w, cfg["T"], lam)]
    if "endpoint" in cfg:
        e = cfg["endpoint"]
        row.append(log_p2p(c, cfg["beta"], w, float(e.get("t", cfg["T"])),
                           np.asarray(e.get("x", [0.0] * c.d), dtype=float), lam))
    if cfg["gate"] and row[1] <= 20:
        bf = brute_force_enumeration(c, cfg["beta"], w, T=cfg["T"], lam=lam)
        row.append(abs(bf.log - row[2]))
    return row


def _w_sweep(cfg, levels, k):
    from .partition import a_sweep
    lam = intensity_of(cfg)
    fam = CoupledCloudFamily.sample(lam, cfg["T"], _half_width(cfg), levels, cfg["d"],
                                    seed=derive_seed(cfg["seed"], k), rng=make_rng(cfg["seed"], k))
    return a_sweep(fam, cfg["beta"], T=cfg["T"], lam=lam)


def _w_moments(cfg, k):
    from .partition import log_partition
    c = _cloud_for(cfg, k)
    lam = _lam(cfg, c)
    w = _window(cfg)
    z = math.exp(log_partition(c, cfg["beta"], w, cfg["T"], lam))
    gap = math.nan
    if "q" in cfg:
        zq = math.exp(log_partition(c, cfg["beta"], TruncationWindow(w.a, cfg["q"]), cfg["T"], lam))
        gap = z - zq
    return z, gap


# ---- commands ----

def cmd_sample_cloud(run):
    """Sample Poisson clouds and write them with their atom counts."""
    cfg = run.cfg
    rows = []
    lam = intensity_of(cfg)
    for k in range(_replicas(cfg)):
        c = _cloud_for(cfg, k)
        c.to_csv(run.path(f"cloud_{k:04d}.csv"))
        run.outputs.append(f"cloud_{k:04d}.csv.json")
        rows.append([k, len(c)])
    exp = cfg["T"] * (2 * _half_width(cfg)) ** cfg["d"] * lam.tail_mass(cfg["a"])
    run.table("clouds", ["replica", "n_atoms"], rows)
    run.summary("summary", {"expected_count": exp, "mean_count": float(np.mean([r[1] for r in rows]))})


def cmd_partition(run):
    """Point-to-plane (and optional point-to-point) log partition functions."""
    cfg = run.cfg
    rows = replica_map(partial(_w_partition, cfg), range(_replicas(cfg)), _threads(cfg))
    header = ["replica", "n_atoms", "log_Z"]
    if "endpoint" in cfg:
        header.append("log_Z_p2p")
    if cfg["gate"] and all(len(r) > len(header) for r in rows):
        header.append("brute_force_error")
    rows = [r[:len(header)] for r in rows]
    run.table("partition", header, rows)
    if "brute_force_error" in header:
        worst = max(r[-1] for r in rows)
        run.summary("gate", {"max_abs_log_error": worst, "tolerance": 1e-10})
        if worst > 1e-10:
            raise GateFailure(f"DP and brute force differ by {worst:.3e}")


def cmd_sweep(run):
    """Partition functions along a coupled sweep of truncation levels."""
    cfg = run.cfg
    levels = levels_of(cfg)
    reps = replica_map(partial(_w_sweep, cfg, levels), range(int(cfg["replicas"])), _threads(cfg))
    rows = []
    for k, rep in enumerate(reps):
        for a, lz, rd, n in rep.rows():
            rows.append([k, a, lz, rd, n])
    run.table("sweep", ["replica", "a_level", "log_Z", "rel_diff", "n_atoms"], rows)
    logs = np.array([rep.log_Z for rep in reps])
    run.summary("summary", {"levels": levels, "median_Z": np.exp(np.median(logs, axis=0)),
                            "mean_log_Z": logs.mean(axis=0)})


def cmd_sample_paths(run):
    """Draw polymer paths and their atom skeletons."""
    from .partition import dp_tables
    from .sampler import default_grid, sample_path
    cfg = run.cfg
    c = _cloud_for(cfg, 0)
    lam = _lam(cfg, c)
    tab = dp_tables(c, cfg["beta"], _window(cfg), cfg["T"], lam)
    rng = make_rng(cfg["seed"], 1)
    grid = default_grid(cfg["T"], int(cfg.get("grid_points", 256)))
    rows, skel = [], []
    for s in range(int(cfg.get("n_paths", 10))):
        p = sample_path(c, cfg["beta"], _window(cfg), grid, rng, tab, lam)
        is_atom = np.isin(p.times, p.atom_times)
        for t, x, ia in zip(p.times, p.positions, is_atom):
            rows.append([s, t, *x, ia])
        skel.append([s, len(p.skeleton), " ".join(str(i) for i in p.skeleton)])
    run.table("paths", ["sample", "t"] + [f"x_{i + 1}" for i in range(c.d)] + ["is_atom"], rows)
    run.table("skeletons", ["sample", "n_atoms", "atoms"], skel)


def cmd_marginal(run):
    """Polymer marginal densities and the endpoint density."""
    from .sampler import endpoint_log_density, marginal_density
    cfg = run.cfg
    c = _cloud_for(cfg, 0)
    lam = _lam(cfg, c)
    out = {}
    if "times" in cfg:
        pos = np.asarray(cfg.get("positions", [[0.0] * c.d] * len(cfg["times"])), dtype=float)
        out["log_density"] = marginal_density(c, cfg["beta"], _window(cfg), cfg["times"], pos, lam).log
    half = _half_width(cfg)
    n = int(cfg.get("grid_points", 201))
    if c.d == 1:
        xs = np.linspace(-half, half, n)
        ld = endpoint_log_density(c, cfg["beta"], _window(cfg), xs[:, None], cfg["T"], lam)
        run.table("endpoint_density", ["x_1", "density"], [[x, math.exp(v)] for x, v in zip(xs, ld)])
        out["endpoint_mass"] = float(trapezoid(np.exp(ld), xs))
    run.summary("marginal", out)


def cmd_moments(run):
    """Monte Carlo moments of Z against closed-form values."""
    from .partition import moment_oracles
    cfg = run.cfg
    lam = intensity_of(cfg)
    w = _window(cfg)
    orc = moment_oracles(lam, cfg["beta"], w, cfg["T"], cfg.get("q"))
    vals = replica_map(partial(_w_moments, cfg), range(int(cfg["replicas"])), _threads(cfg))
    z = RunningMoments.of([v[0] for v in vals])
    out = {"oracle_mean": orc.mean, "mc_mean": z.mean, "mc_se": z.se, "oracle_second_moment": orc.second_moment,
           "mc_second_moment": float(np.mean([v[0] ** 2 for v in vals])), "replicas": z.count}
    ok = abs(z.mean - orc.mean) <= 4 * z.se
    rows = [["mean", orc.mean, z.mean, z.se, ok]]
    if "q" in cfg:
        g = RunningMoments.of([v[1] for v in vals])
        okg = abs(g.mean - orc.truncation_gap) <= 4 * g.se
        rows.append(["truncation_gap", orc.truncation_gap, g.mean, g.se, okg])
        ok = ok and okg
    run.table("moments", ["quantity", "oracle", "mc_mean", "mc_se", "within_4se"], rows)
    run.summary("summary", out)
    if cfg["gate"] and not ok:
        raise GateFailure("Monte Carlo moment outside 4 SE of the closed form")


def cmd_restricted(run):
    """Restricted partition function and its moment bounds."""
    from .partition import (RestrictionParams, log_partition, restricted_gap_bound,
                            restricted_partition, restricted_second_moment_bound)
    cfg = run.cfg
    c = _cloud_for(cfg, 0)
    lam = _lam(cfg, c)
    q = float(cfg.get("q", 2.0))
    params = RestrictionParams(q, float(cfg.get("gamma", c.d / 2.0)), float(cfg.get("p", 1.5)))
    w = TruncationWindow(cfg["a"], min(q, cfg["b"]))
    try:
        zr = restricted_partition(c, cfg["beta"], w, params, lam, cfg["T"]).log
    except ValueError as e:
        raise click.UsageError(str(e))
    zq = log_partition(c, cfg["beta"], w, cfg["T"], lam)
    eps = float(cfg.get("eps", 0.1))
    out = {"log_Z_window": zq, "log_Z_restricted": zr, "q": q, "gamma": params.gamma, "p": params.p}
    for name, fn in (("gap_bound", lambda: restricted_gap_bound(lam, cfg["beta"], q, params, eps)),
                     ("second_moment_bound",
                      lambda: restricted_second_moment_bound(lam, cfg["beta"], q, params, eps, c.d))):
        try:
            out[name] = fn()
        except ValueError as e:
            out[name] = f"unavailable: {e}"
    run.summary("restricted", out)
    if cfg["gate"] and zr > zq + 1e-12:
        raise GateFailure("restricted partition exceeds the unrestricted one")


def _u0_of(cfg, d):
    from .she_field import InitialCondition
    u = cfg.get("u0", {"kind": "dirac", "at": [0.0] * d})
    if u.get("kind") == "dirac":
        return InitialCondition.dirac(np.asarray(u.get("at", [0.0] * d), dtype=float))
    if u.get("kind") == "atomic":
        return InitialCondition.atomic(u["points"], u["masses"])
    raise ConfigError(f"u0: unsupported kind {u.get('kind')!r} (dirac or atomic)")


def cmd_she(run):
    """Heat-equation field from an initial measure, with optional mild residual."""
    from .she_field import mild_residual, she_value
    cfg = run.cfg
    c = _cloud_for(cfg, 0)
    lam = _lam(cfg, c)
    u0 = _u0_of(cfg, c.d)
    ts = cfg.get("field_times", [cfg["T"]])
    xs = cfg.get("field_points", [[v] * c.d for v in np.linspace(-1, 1, 5)])
    rows = []
    for t in ts:
        for x in xs:
            x = np.asarray(x, dtype=float).reshape(c.d)
            rows.append([t, *x, she_value(c, cfg["beta"], _window(cfg), u0, t, x, lam)])
    run.table("field", ["t"] + [f"x_{i + 1}" for i in range(c.d)] + ["u"], rows)
    if cfg.get("residual", False):
        rep = mild_residual(c, cfg["beta"], _window(cfg), u0, ts, [x[0] for x in xs], lam=lam)
        run.summary("residual", {"max_relative": rep.max_relative, "points": rep.points})
        if cfg["gate"] and not rep.max_relative < 1e-3:
            raise GateFailure(f"mild residual {rep.max_relative:.3e} >= 1e-3")


def cmd_degeneracy(run):
    """Y_a separation, entropy-energy maximum and blow-up rates by level."""
    from .stats import blowup_rates, degeneracy_sweep
    cfg = run.cfg
    lam = intensity_of(cfg)
    rows = degeneracy_sweep(lam, cfg["beta"], levels_of(cfg), cfg["d"], int(cfg["replicas"]),
                            make_rng(cfg["seed"], 0), eps=float(cfg.get("eps", 1.0)))
    run.table("diagnostics", ["a", "Y_mean_P", "Y_mean_sizebiased", "separation", "T_entropy"],
              [[r.a, r.Y_mean_P, r.Y_mean_sizebiased, r.separation, r.T_entropy] for r in rows])
    js, rates = blowup_rates(lam, cfg["d"], int(cfg.get("jmax", 10)))
    run.table("blowup", ["j", "lambda_j", "prob_A_j"], [[j, r, -math.expm1(-r)] for j, r in zip(js, rates)])


def cmd_discrete_compare(run):
    """Lattice polymer statistics by N against a continuum endpoint law."""
    from .discrete import continuum_endpoint_reference, environment_constants, scaling_comparison
    from .measures import AlphaStable
    cfg = run.cfg
    alpha = float(cfg.get("alpha", 1.5))
    ref = cfg.get("reference", {})
    lam = AlphaStable(alpha)
    beta_hat = float(cfg.get("beta_hat", 1.0))
    xgrid = np.linspace(-6, 6, int(ref.get("grid", 601)))
    rng = make_rng(cfg["seed"], 0)
    reference = continuum_endpoint_reference(lam, beta_hat, float(ref.get("a", 0.05)),
                                             float(ref.get("L", 6.0)), int(ref.get("clouds", 200)),
                                             rng, xgrid)
    Ns = [int(n) for n in cfg.get("Ns", [64, 128, 256, 512, 1024])]
    rows = scaling_comparison(alpha, cfg["d"], beta_hat, Ns, int(cfg.get("n_env", 100)),
                              reference, make_rng(cfg["seed"], 1))
    run.table("discrete", ["N", "beta_N", "mean_logZ", "var_logZ", "ks_endpoint"],
              [[r.N, r.beta_N, r.mean_logZ, r.var_logZ, r.ks_endpoint] for r in rows])
    c, m = environment_constants(alpha)
    ks = [r.ks_endpoint for r in rows]
    inversions = int(sum(b > a for a, b in zip(ks, ks[1:])))
    run.summary("summary", {"environment": {"law": "shifted_pareto", "scale": c, "shift": m},
                            "ks_inversions": inversions})
    if cfg["gate"] and inversions > 1:
        raise GateFailure(f"KS distance increased {inversions} times across N")


def cmd_check_measure(run):
    """Classify an intensity: convergent, degenerate or undecided regime."""
    cfg = run.cfg
    rep = check_admissibility(intensity_of(cfg), cfg["d"])
    run.summary("admissibility", rep.to_dict())
    click.echo(f"regime: {rep.regime}")
    if rep.regime == "undecided":
        click.echo("warning: admissibility undecided for this intensity", err=True)


COMMANDS = {
    "sample-cloud": cmd_sample_cloud, "partition": cmd_partition, "sweep": cmd_sweep,
    "sample-paths": cmd_sample_paths, "marginal": cmd_marginal, "moments": cmd_moments,
    "restricted": cmd_restricted, "she": cmd_she, "degeneracy": cmd_degeneracy,
    "discrete-compare": cmd_discrete_compare, "check-measure": cmd_check_measure,
}


def execute(command, cfg, out_dir):
    run = Run(command, cfg, out_dir)
    try:
        COMMANDS[command](run)
    finally:
        run.manifest()
    return run


def _resolve(config, seed, threads, fmt, replicas):
    cfg = load_config(config) if config else parse_config("")
    if seed is not None:
        cfg["seed"] = seed
    if threads is not None:
        cfg["threads"] = threads
    if fmt is not None:
        cfg["format"] = fmt
    if replicas is not None:
        cfg["replicas"] = replicas
    # re-validate the merged tree so the manifest always holds a parseable config
    return parse_config(dump_config(cfg), config or "<flags>")


def _common(f):
    f = click.option("--replicas", type=int, default=None, help="number of replicas")(f)
    f = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
                     help="tabular output format")(f)
    f = click.option("--threads", type=int, default=None, help="worker processes (default: all CPUs)")(f)
    f = click.option("--out-dir", type=click.Path(file_okay=False), default="out", show_default=True)(f)
    f = click.option("--seed", type=int, default=None, help="64-bit master seed")(f)
    f = click.option("--config", type=click.Path(dir_okay=False), default=None, help="YAML run config")(f)
    return f


@click.group()
@click.version_option(__version__)
def cli():
    """Continuum directed polymer in Poisson/Levy noise: sampling, partition
    functions, paths, heat-equation fields and diagnostics."""


def _make(name):
    @_common
    def command(config, seed, out_dir, threads, fmt, replicas):
        cfg = _resolve(config, seed, threads, fmt, replicas)
        execute(name, cfg, out_dir)
    command.__doc__ = COMMANDS[name].__doc__ or f"Run the {name} experiment."
    cli.command(name)(command)


for _name in COMMANDS:
    _make(_name)


@cli.command("replay")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
def replay(manifest, out_dir):
    """Re-run the command recorded in a manifest."""
    with open(manifest) as fh:
        data = json.load(fh)
    cfg = parse_config(dump_config(data["config"]), manifest)
    execute(data["command"], cfg, out_dir)


def main(argv=None):
    warnings.simplefilter("ignore", RuntimeWarning)
    try:
        cli.main(args=argv, prog_name="levypolymer", standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show()
        return 1
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        return 2
    except GateFailure as e:
        click.echo(f"numeric gate failed: {e}", err=True)
        return 3
    return 0


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
