"""Command line entry point: ``optocool <mode> [--config FILE] [--set key=value ...]``.

Configs are TOML. Reduced parameters go under ``[params]`` (kappa, gamma,
g_eff, detuning, n_th) or SI parameters under ``[physical]``; each mode reads
its own table (``[evolve]``, ``[spectrum]``, ``[modulation]`` with optional
``[[pulse]]`` records, ``[oracle]``, ``[sweep]``). ``--set`` takes dotted keys;
bare keys address the parameter table.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import covariance as cov
from . import lindblad as lb
from . import modulation as md
from . import spectra
from .errors import ConfigError, DomainError, HeatingRegime, OptoCoolError, RegimeError
from .params import PhysicalParams, ReducedParams, cooperativity, stability_check, to_reduced

MODES = ("limits", "spectrum", "evolve", "modulate", "oracle", "sweep")
FORMATS = ("csv", "json")
REDUCED_KEYS = tuple(f.name for f in fields(ReducedParams))
PHYSICAL_KEYS = tuple(f.name for f in fields(PhysicalParams))
SECTIONS = ("params", "physical", "evolve", "spectrum", "modulation", "oracle", "sweep", "output")


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    points: int
    scale: str = "lin"

    @classmethod
    def parse(cls, spec):
        parts = spec.split() if isinstance(spec, str) else list(spec)
        if len(parts) not in (4, 5):
            raise ConfigError(f"sweep axis must be 'name min max points [lin|log]', got {spec!r}")
        name = parts[0]
        try:
            axis = cls(name, float(parts[1]), float(parts[2]), int(parts[3]),
                       parts[4] if len(parts) == 5 else "lin")
        except ValueError as exc:
            raise ConfigError(f"sweep axis {spec!r}: {exc}") from exc
        if axis.scale not in ("lin", "log") or axis.points < 1:
            raise ConfigError(f"sweep axis {spec!r}: bad scale or point count")
        if axis.scale == "log" and (axis.lo <= 0 or axis.hi <= 0):
            raise ConfigError(f"sweep axis {name}: log scale needs positive bounds")
        return axis

    def values(self):
        if self.scale == "log":
            return np.geomspace(self.lo, self.hi, self.points)
        return np.linspace(self.lo, self.hi, self.points)


@dataclass
class RunConfig:
    mode: str
    params: ReducedParams | PhysicalParams
    sections: dict = field(default_factory=dict)
    axes: list = field(default_factory=list)
    output: str | None = None
    format: str = "csv"

    def section(self, name):
        return self.sections.get(name, {})

    @property
    def reduced(self) -> ReducedParams:
        if isinstance(self.params, PhysicalParams):
            return to_reduced(self.params, int(self.section("physical_opts").get("branch", 0)))
        return self.params


# ---------------------------------------------------------------- config

def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw, overrides):
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key == "mode":
            raw["mode"] = value.strip()
            continue
        section, _, name = key.rpartition(".")
        if not section:
            section = "physical" if "physical" in raw else "params"
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r} in --set {key}")
        raw.setdefault(section, {})[name] = _parse_value(value.strip())
    return raw


def _build_params(raw):
    if "physical" in raw and "params" in raw:
        raise ConfigError("give either [params] or [physical], not both")
    if "physical" in raw:
        block = dict(raw["physical"])
        branch = block.pop("branch", 0)
        unknown = set(block) - set(PHYSICAL_KEYS)
        if unknown:
            raise ConfigError(f"unknown physical parameter {sorted(unknown)[0]!r}")
        try:
            return PhysicalParams(**{k: float(v) for k, v in block.items()}), {"branch": branch}
        except TypeError as exc:
            raise ConfigError(f"[physical]: {exc}") from exc
    block = raw.get("params", {})
    unknown = set(block) - set(REDUCED_KEYS)
    if unknown:
        raise ConfigError(f"unknown parameter {sorted(unknown)[0]!r}")
    missing = {"kappa", "gamma", "g_eff"} - set(block)
    if missing:
        raise ConfigError(f"missing parameter {sorted(missing)[0]!r}")
    try:
        return ReducedParams(**{k: float(v) for k, v in block.items()}), {}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[params]: {exc}") from exc


def load_config(mode=None, path=None, overrides=(), out=None, fmt=None) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config {path}: {exc}") from exc
    unknown = set(raw) - set(SECTIONS) - {"mode", "pulse"}
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    raw = apply_overrides(raw, overrides)
    mode = mode or raw.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    params, phys_opts = _build_params(raw)
    sections = {k: dict(raw.get(k, {})) for k in SECTIONS if k not in ("params", "physical")}
    sections["physical_opts"] = phys_opts
    sections["pulses"] = list(raw.get("pulse", []))
    axes_spec = sections["sweep"].get("axes", [])
    axes = [Axis.parse(a) for a in axes_spec]
    names = REDUCED_KEYS if isinstance(params, ReducedParams) else PHYSICAL_KEYS
    for axis in axes:
        if axis.name not in names:
            raise ConfigError(f"sweep axis {axis.name!r} is not a parameter name")
    if len(axes) > 2:
        raise ConfigError("at most two sweep axes")
    output = out or sections["output"].get("path")
    fmt = fmt or sections["output"].get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"output.format must be csv or json, got {fmt!r}")
    return RunConfig(mode=mode, params=params, sections=sections, axes=axes, output=output, format=fmt)


# ---------------------------------------------------------------- engines

def _safe(func, *args):
    try:
        return float(func(*args))
    except (RegimeError, ZeroDivisionError, ValueError):
        return math.nan


def limits_table(rp: ReducedParams) -> dict:
    """Every closed-form and numerical cooling figure at one parameter point."""
    nan = math.nan
    row = {}
    rates = spectra.scattering_rates(rp)
    try:
        lim = spectra.cooling_limit(rp)
        row.update(n_f=lim.n_f, n_f_classical=lim.n_classical, n_f_quantum=lim.n_quantum,
                   n_f_quantum_simplified=lim.n_quantum_simplified)
    except HeatingRegime:
        row.update(n_f=nan, n_f_classical=nan, n_f_quantum=nan, n_f_quantum_simplified=nan)
    n_min, d_opt = spectra.min_quantum_limit(rp.kappa)
    row.update(n_f_quantum_min=n_min, detuning_opt=d_opt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            forms = cov.nstd_closed_form(rp)
            row.update(nstd_full=forms.full, nstd_resolved=forms.resolved,
                       nstd_weak=forms.weak, nstd_strong=forms.strong)
        except DomainError:
            row.update(nstd_full=nan, nstd_resolved=nan, nstd_weak=nan, nstd_strong=nan)
    try:
        row["nstd_numeric"] = cov.steady_state_moments(rp).n_b
    except OptoCoolError:
        row["nstd_numeric"] = nan
    row["nins"] = _safe(md.nins_limit, rp)
    row["ninsmat"] = _safe(md.ninsmat_limit, rp)
    row.update(cooperativity=cooperativity(rp), gamma_opt=rates.gamma_opt,
               spring_shift=rates.spring_shift, a_minus=rates.a_minus, a_plus=rates.a_plus)
    try:
        row["stable"] = bool(stability_check(rp))
    except RegimeError:
        row["stable"] = False
    return row


def _spectrum(cfg: RunConfig):
    rp = cfg.reduced
    opts = cfg.section("spectrum")
    kind = opts.get("kind", "force")
    if "omega_min" in opts or "omega_max" in opts:
        half = 2.0 * max(1.0, abs(rp.detuning))
        omegas = np.linspace(float(opts.get("omega_min", -half)), float(opts.get("omega_max", half)),
                             int(opts.get("points", 2001)))
    else:
        omegas = spectra.frequency_grid(rp, int(opts.get("points", 2001)), opts.get("dense_window"))
    try:
        series = spectra.sample(kind, rp, omegas)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"spectrum.kind: {exc}") from exc
    if kind == "self_energy":
        return ["omega", "re", "im"], [[w, v.real, v.imag] for w, v in zip(series.omegas, series.values)], {}
    return ["omega", "value"], [[w, v] for w, v in zip(series.omegas, series.values)], {
        "integral": series.integrate()}


def _initial_state(rp, opts):
    n_b0 = float(opts.get("n_b0", rp.n_th))
    return cov.MomentState(n_a=float(opts.get("n_a0", 0.0)), n_b=n_b0)


def _evolve(cfg: RunConfig):
    rp = cfg.reduced
    opts = cfg.section("evolve")
    traj = cov.evolve(_initial_state(rp, opts), rp, float(opts.get("t_final", 500.0)),
                      dt_max=float(opts.get("dt_max", math.inf)), dt_out=opts.get("dt_out"),
                      backend=opts.get("backend", "rk45"), stability=opts.get("stability", "raise"))
    header, rows = traj.to_csv_rows()
    return header, rows, {"steady_n_b": _safe(lambda: cov.steady_state_moments(rp).n_b)}


def build_schedule(rp: ReducedParams, opts, pulses):
    mode = opts.get("mode", "single")
    if "k" in opts:
        rp = replace(rp, g_eff=md.matched_params(opts["k"]))
    if pulses:
        try:
            records = [md.Pulse(float(p["t_start"]), float(p["duration"]), float(p["kappa_pulse"]))
                       for p in pulses]
        except KeyError as exc:
            raise ConfigError(f"pulse record missing {exc.args[0]!r}") from exc
        return rp, md.ModulationSchedule(rp.kappa, tuple(records), "periodic" if len(records) > 1 else mode)
    kp, dur = opts.get("kappa_pulse"), opts.get("duration")
    if mode == "off":
        return rp, md.ModulationSchedule.off(rp.kappa)
    if mode == "single":
        return rp, md.ModulationSchedule.single(rp, kp, dur, opts.get("t_start"))
    if mode == "periodic":
        return rp, md.ModulationSchedule.periodic(rp, int(opts.get("n_pulses", 10)), kp, dur)
    raise ConfigError(f"modulation.mode must be single, periodic or off, got {mode!r}")


def _modulate(cfg: RunConfig):
    opts = cfg.section("modulation")
    rp, schedule = build_schedule(cfg.reduced, opts, cfg.section("pulses"))
    t_final = float(opts.get("t_final", 500.0))
    traj = md.evolve_modulated(_initial_state(rp, opts), rp, schedule, t_final,
                               dt_out=opts.get("dt_out"), backend=opts.get("backend", "rk45"))
    header, rows = traj.to_csv_rows()
    extra = {"pulses": [[p.t_start, p.duration, p.kappa_pulse] for p in schedule.pulses],
             "steady_n_b": _safe(lambda: cov.steady_state_moments(rp).n_b),
             "nins": _safe(md.nins_limit, rp)}
    return header, rows, extra


def _oracle(cfg: RunConfig):
    rp = cfg.reduced
    opts = cfg.section("oracle")
    fock = lb.FockConfig(int(opts.get("dim_a", 10)), int(opts.get("dim_b", 20)),
                         int(opts.get("budget", lb.DEFAULT_BUDGET)))
    t_final = float(opts.get("t_final", 20.0))
    result = lb.compare_with_covariance(rp, fock, t_final, dt=opts.get("dt"), dt_snap=opts.get("dt_snap"))
    run = result.run
    rows = [[t, nc, no, m.n_a, h.trace_error, h.min_eigenvalue, h.top_photon, h.top_phonon]
            for t, nc, no, m, h in zip(result.times, result.n_b_cov, result.n_b_oracle, run.moments, run.health)]
    header = ["t", "n_b_cov", "n_b_oracle", "n_a_oracle", "trace_error", "min_eigenvalue",
              "top_photon", "top_phonon"]
    return header, rows, {"max_deviation": result.max_deviation,
                          "renormalizations": len(run.renormalizations)}


def _limits(cfg: RunConfig):
    table = limits_table(cfg.reduced)
    return ["quantity", "value"], [[k, v] for k, v in table.items()], {}


def _point(args):
    params, names, values = args
    return limits_table(_reduce(replace(params, **dict(zip(names, values)))))


def _reduce(params):
    return to_reduced(params) if isinstance(params, PhysicalParams) else params


def sweep(cfg: RunConfig, workers=None):
    """Long-format table over the sweep axes (lexicographic order, first axis slowest)."""
    if not cfg.axes:
        header, rows, extra = _limits(cfg)
        return header, rows, extra
    names = [a.name for a in cfg.axes]
    grids = [a.values() for a in cfg.axes]
    points = [tuple(float(v) for v in combo) for combo in
              (np.array(np.meshgrid(*grids, indexing="ij")).reshape(len(grids), -1).T)]
    jobs = [(cfg.params, names, p) for p in points]
    workers = int(cfg.section("sweep").get("workers", 1)) if workers is None else workers
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                tables = list(pool.map(_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
        else:
            tables = [_point(j) for j in jobs]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep: {exc}") from exc
    columns = list(tables[0])
    rows = [[*p, *(t[c] for c in columns)] for p, t in zip(points, tables)]
    return [*names, *columns], rows, {}


RUNNERS = {"limits": _limits, "spectrum": _spectrum, "evolve": _evolve,
           "modulate": _modulate, "oracle": _oracle, "sweep": sweep}


# ---------------------------------------------------------------- output

def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def resolved_params(cfg: RunConfig):
    out = {"mode": cfg.mode, "version": __version__}
    out.update({k: float(v) for k, v in
                (cfg.params.__dict__ if isinstance(cfg.params, PhysicalParams) else cfg.params.as_dict()).items()})
    if isinstance(cfg.params, PhysicalParams):
        out.update({f"reduced.{k}": v for k, v in cfg.reduced.as_dict().items()})
    name = {"modulate": "modulation"}.get(cfg.mode, cfg.mode)
    out.update({f"{name}.{k}": v for k, v in sorted(cfg.section(name).items()) if name != "sweep"})
    for a in cfg.axes:
        out[f"sweep.{a.name}"] = f"{a.lo!r} {a.hi!r} {a.points} {a.scale}"
    if cfg.section("pulses"):
        out["pulses"] = cfg.section("pulses")
    return out


def render(cfg: RunConfig, header, rows, extra):
    meta = resolved_params(cfg)
    if cfg.format == "json":
        doc = {"meta": meta, "summary": extra, "columns": header, "rows": rows}
        return json.dumps(doc, indent=1, default=_json_default, allow_nan=True) + "\n"
    buf = io.StringIO()
    buf.write(f"# optocool {__version__}\n")
    for k, v in meta.items():
        buf.write(f"# {k} = {_fmt(v) if not isinstance(v, (list, dict)) else json.dumps(v)}\n")
    for k, v in extra.items():
        buf.write(f"# summary.{k} = {_fmt(v) if not isinstance(v, (list, dict)) else json.dumps(v)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj))


def run(cfg: RunConfig, stream=None) -> int:
    header, rows, extra = RUNNERS[cfg.mode](cfg)
    text = render(cfg, header, rows, extra)
    if cfg.output:
        try:
            with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigError(f"cannot write output {cfg.output}: {exc}") from exc
    else:
        (stream or sys.stdout).write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="optocool", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"optocool {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides")
        p.add_argument("--out", metavar="PATH")
        p.add_argument("--format", choices=FORMATS)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.mode, args.config, args.overrides, args.out, args.format)
        return run(cfg)
    except OptoCoolError as exc:
        print(f"optocool: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
