"""Command-line front end: ``dstorus {run,sweep,exact,strichartz,fit}``.

Exit status: 0 success, 1 usage or configuration error, 2 numeric failure
(non-finite state or a failed residual check), 3 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from . import __version__
from .config import ConfigError, ParsedConfig, load_config, parse_config
from .evolution import FitError, Trajectory, fit_rate, run_simulation
from .initial import initial_field
from .plotting import PlotUnavailable
from .persist import CheckpointError, RunManifest, load_checkpoint, read_csv, save_checkpoint, write_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
HYPNLS_RESIDUAL_MAX = 1e-10


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- shared helpers ------------------------------------------------------------


@contextmanager
def _threads(n: int):
    if n < 1:
        raise UsageError(f"--threads must be at least 1, got {n}")
    with sfft.set_workers(n):
        yield


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-test"
    probe.write_text("")
    probe.unlink()
    return out


def _load(args, env=None) -> ParsedConfig:
    if args.config:
        cfg = load_config(args.config, env)
    else:
        cfg = parse_config("", "toml", env)
    if getattr(args, "seed", None) is not None:
        cfg.values["run.seed"] = args.seed
        cfg.provenance["run.seed"] = "cli"
    return cfg


def _maybe_plot(args, csv_path: Path, x: str, ys: Sequence[str], **kw):
    if not getattr(args, "plot", False):
        return None
    from .plotting import plot_csv

    return plot_csv(csv_path, csv_path.with_suffix(".png"), x, ys, **kw)


def _grid_record(L, nx, ny):
    return {"L": L, "nx": nx, "ny": ny}


def _dumps(obj) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, (np.floating, np.integer, np.bool_)):
            return v.item()
        return v

    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


# --- run ---------------------------------------------------------------------


@dataclass
class RunOutcome:
    status: str
    stop_time: float
    steps: int
    rows: int
    nonfinite: bool
    mass_drift: float
    p_est: dict


def _checkpoint_meta(path: Path) -> Path:
    return path.with_suffix(".json")


def execute_run(cfg: ParsedConfig, out: Path, threads: int = 1, checkpoint_every: int = 0,
                resume: Optional[str] = None, command: str = "run") -> RunOutcome:
    """One solver run into ``out``: trajectory.csv, report.json, optional checkpoints, then manifest.json."""
    start = time.perf_counter()
    solver = cfg.solver_config()
    g = solver.grid
    extra = {}
    t0, l4acc0, first_dt = 0.0, 0.0, None
    if resume:
        ck = load_checkpoint(resume)
        mismatch = [f"{k}: checkpoint {a}, config {b}" for k, a, b in (
            ("L", ck.L, solver.L), ("nx", ck.nx, solver.nx), ("ny", ck.ny, solver.ny),
            ("sigma", ck.sigma, solver.sigma), ("e_enabled", ck.e_enabled, solver.e_enabled)) if a != b]
        if mismatch:
            raise UsageError("checkpoint does not match the config: " + "; ".join(mismatch))
        u0, t0 = ck.field(), ck.t
        meta_path = _checkpoint_meta(Path(resume))
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            l4acc0, first_dt = float(meta["l4acc"]), float(meta["dt"])
        else:
            extra["resume_note"] = "no checkpoint sidecar; the l4acc column restarts from zero"
        extra["resumed_from"] = str(resume)
        extra["resume_time"] = t0
    else:
        i = cfg.section("initial")
        kw = {k: i[k] for k in ("amplitude", "width", "cx", "sy", "k_max")}
        u0 = initial_field(i["kind"], g, profile_cos=i["profile_cos"], profile_sin=i["profile_sin"],
                           seed=cfg.seed, **kw)

    traj = Trajectory(solver.s_list)
    ck_dir = out / "checkpoints"
    written = []

    def on_sample(k, t, u):
        if checkpoint_every and k % checkpoint_every == 0 and k > 0:
            ck_dir.mkdir(exist_ok=True)
            index = int(round(t / solver.sample_dt))
            path = ck_dir / f"ckpt_{index:07d}.dstr"
            save_checkpoint(path, u, t, solver.sigma, solver.e_enabled)
            _checkpoint_meta(path).write_text(_dumps({"t": t, "l4acc": traj.l4acc[-1], "dt": traj.dt[-1]}))
            written.append(str(path.relative_to(out)))

    with _threads(threads):
        traj, report = run_simulation(u0, solver, t0=t0, l4acc0=l4acc0, on_sample=on_sample, trajectory=traj)
    if first_dt is not None and len(traj):
        traj.dt[0] = first_dt

    nonfinite = any("non-finite" in n for n in report.notes)
    write_csv(out / "trajectory.csv", traj.columns(), traj.table())
    rep = {
        "status": report.status,
        "stop_time": report.stop_time,
        "steps": traj.steps,
        "rows": len(traj),
        "expected_rows_if_completed": solver.expected_rows() - (int(round(t0 / solver.sample_dt)) if resume else 0),
        "mass_drift": traj.mass_drift,
        "initial_tail": report.initial_tail,
        "theorem_range": {f"{s:g}": v for s, v in solver.theorem_range.items()},
        "fits": {f"{s:g}": f.as_dict() for s, f in report.fits.items()},
        "fit_notes": {f"{s:g}": n for s, n in report.fit_notes.items()},
        "notes": report.notes,
        "nonfinite": nonfinite,
    }
    (out / "report.json").write_text(_dumps(rep))
    manifest = RunManifest(command, cfg.echo(), [cfg.seed], _grid_record(solver.L, solver.nx, solver.ny), threads,
                           time.perf_counter() - start, traj.steps,
                           ["trajectory.csv", "report.json"] + written, extra)
    manifest.write(out)
    return RunOutcome(report.status, report.stop_time, traj.steps, len(traj), nonfinite, traj.mass_drift,
                      {s: f.p_est for s, f in report.fits.items()})


def cmd_run(args) -> int:
    cfg = _load(args)
    if cfg.is_sweep:
        raise UsageError("this config has sweep axes; use `dstorus sweep`")
    if args.checkpoint_every < 0:
        raise UsageError("--checkpoint-every must be nonnegative")
    out = _out_dir(args.out)
    res = execute_run(cfg, out, args.threads, args.checkpoint_every, args.resume)
    if args.plot:
        cols = [f"hs_{s:g}" for s in cfg["s_list"]] + ["l2"]
        _maybe_plot(args, out / "trajectory.csv", "t", cols)
    print(f"status={res.status} stop_time={res.stop_time:.6g} steps={res.steps} rows={res.rows} "
          f"mass_drift={res.mass_drift:.3g}")
    if res.nonfinite:
        print("numeric failure: non-finite state; reduce dt0 or enable adaptive stepping", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# --- sweep ---------------------------------------------------------------------


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", label) or "run"


def _sweep_worker(job):
    values, provenance, label, out, threads = job
    cfg = ParsedConfig(values, provenance, {}, label)
    return execute_run(cfg, Path(out), threads, command="sweep")


def cmd_sweep(args) -> int:
    cfg = _load(args)
    points = cfg.expand()
    out = _out_dir(args.out)
    start = time.perf_counter()
    jobs = []
    for k, p in enumerate(points):
        sub = out / f"{k:03d}_{_slug(p.label)}"
        sub.mkdir(exist_ok=True)
        jobs.append((p.values, p.provenance, p.label, str(sub), args.threads))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    axes = list(cfg.sweep)
    s_list = cfg["s_list"]
    cols = ["index"] + [a.split(".")[-1] for a in axes] + ["status", "stop_time", "steps", "rows", "mass_drift"]
    cols += [f"p_est_{s:g}" for s in s_list]
    rows = []
    for k, (p, r) in enumerate(zip(points, results)):
        rows.append([k] + [p.values[a] for a in axes] + [r.status, r.stop_time, r.steps, r.rows, r.mass_drift]
                    + [r.p_est.get(float(s), math.nan) for s in s_list])
        print(f"[{k}] {p.label or 'base'}: status={r.status} stop_time={r.stop_time:.6g}")
    write_csv(out / "sweep_summary.csv", cols, rows)
    manifest = RunManifest("sweep", cfg.echo(), [cfg.seed], None, args.threads, time.perf_counter() - start,
                           sum(r.steps for r in results),
                           ["sweep_summary.csv"] + [Path(j[3]).name for j in jobs], {"workers": args.workers})
    manifest.write(out)
    return EXIT_NUMERIC if any(r.nonfinite for r in results) else EXIT_OK


# --- exact ----------------------------------------------------------------------


def _parse_floats(text: str, name: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from None


def cmd_exact(args) -> int:
    from .exact import (STATIONARY_AMPLITUDE, Bump, DiagonalSolution, OzawaParams, OzawaSolution, ProfileSpec,
                        growth_curve, ozawa_norms, sample_on_torus)
    from .spectral import hs_norm, make_grid, transform

    cfg = _load(args)
    out = _out_dir(args.out)
    start = time.perf_counter()
    s_list = _parse_floats(args.s, "--s") if args.s else [float(s) for s in cfg["s_list"]]
    case, check = args.case, args.check
    res_rows, norm_rows, norm_cols = [], [], ["t"]
    status = EXIT_OK
    grid_rec = None

    if case == "hypnls":
        L = args.L if args.L is not None else 1.0
        nx = args.nx or 128
        grid = make_grid(L, nx, nx)
        grid_rec = _grid_record(L, nx, nx)
        i = cfg.section("initial")
        prof = ProfileSpec(cos=tuple(i["profile_cos"]), sin=tuple(i["profile_sin"]))
        sol = DiagonalSolution(prof)
        times = _parse_floats(args.times, "--times") if args.times else [0.0, 0.5, 1.0, 2.0, 5.0]
        if check in ("residual", "all"):
            for t in times:
                smp = sample_on_torus(sol, grid, t)
                res_rows.append([t, smp.residual_max, smp.residual_max, smp.label])
            worst = max(r[1] for r in res_rows)
            ok = worst < HYPNLS_RESIDUAL_MAX
            print(f"max residual {worst:.3e} ({'<' if ok else '>='} {HYPNLS_RESIDUAL_MAX:g}): "
                  f"{'exact solution reproduced' if ok else 'FAILED'}")
            status = EXIT_OK if ok else EXIT_NUMERIC
        if check in ("norms", "all"):
            ts = np.linspace(0.0, args.t_max or 10.0, 101)
            norm_cols += [f"hs_{s:g}" for s in s_list]
            curves = [growth_curve(prof, s, ts) for s in s_list]
            norm_rows = [[t] + [c[k] for c in curves] for k, t in enumerate(ts)]
    elif case in ("ozawa", "stationary"):
        if case == "ozawa":
            p_res = OzawaParams(a=4.0, b=-0.4, amplitude=STATIONARY_AMPLITUDE)
            L = args.L if args.L is not None else 32.0
        else:
            p_res = OzawaParams(a=1.0, b=-1e-12, amplitude=STATIONARY_AMPLITUDE)
            L = args.L if args.L is not None else 16.0
        nx = args.nx or 512
        grid = make_grid(L, nx, nx)
        grid_rec = _grid_record(L, nx, nx)
        bump = Bump(0.6 * math.pi * L, 0.95 * math.pi * L)
        sol = OzawaSolution(p_res)
        X, Y = grid.mesh
        core = np.hypot(X - math.pi * L, Y - math.pi * L) < 0.5 * bump.r0
        if check in ("residual", "all"):
            fracs = _parse_floats(args.times, "--times") if args.times else [0.0, 0.25, 0.5]
            for f in fracs:
                t = f * p_res.T if case == "ozawa" else f
                smp = sample_on_torus(sol, grid, t, bump)
                res_rows.append([t, smp.residual_max, float(np.abs(smp.residual[core]).max()), smp.label])
            print(f"max residual {max(r[1] for r in res_rows):.3e}, inside half the cutoff radius "
                  f"{max(r[2] for r in res_rows):.3e} ({res_rows[0][3]})")
        if check in ("norms", "all"):
            if case == "ozawa":
                p = OzawaParams()
                ts = np.linspace(0.5, args.t_max or 0.99, args.points) * p.T
                norm_cols += ["l2"] + [f"hs_{s:g}" for s in s_list] + [f"hs_dot_{s:g}" for s in s_list]
                for t in ts:
                    ns = [ozawa_norms(t, s, p) for s in s_list]
                    norm_rows.append([t, ns[0].l2] + [n.hs for n in ns] + [n.hs_dot for n in ns])
            else:
                norm_cols += ["l2"] + [f"hs_{s:g}" for s in s_list]
                for t in np.linspace(0.0, args.t_max or 1.0, 11):
                    spec = transform(sample_on_torus(sol, grid, t, bump).field)
                    norm_rows.append([t, hs_norm(spec, 0.0)] + [hs_norm(spec, s) for s in s_list])
    else:  # pragma: no cover - argparse restricts the choices
        raise UsageError(f"unknown case {case!r}")

    outputs = []
    if res_rows:
        write_csv(out / "residual.csv", ["t", "residual_max", "residual_core", "label"], res_rows)
        outputs.append("residual.csv")
    if norm_rows:
        write_csv(out / "norms.csv", norm_cols, norm_rows)
        outputs.append("norms.csv")
        if args.plot:
            _maybe_plot(args, out / "norms.csv", "t", norm_cols[1:])
            outputs.append("norms.png")
    RunManifest("exact", {"case": case, "check": check, "s": s_list, "config": cfg.echo()}, [], grid_rec,
                args.threads, time.perf_counter() - start, 0, outputs).write(out)
    return status


# --- strichartz -----------------------------------------------------------------

_SAMPLE_COLS = ["L", "N1", "N2", "R", "h", "trial", "ratio", "seed"]
_SUMMARY_COLS = ["probe", "L", "N1", "N2", "R", "h", "trials", "max", "mean", "std", "seed", "note"]
BOUNDS_MAX_ENTRIES = 2_000_000
nan = math.nan


def _bounds_cells(L, N, R, trials, seed):
    from .spectral import FreqBox, box_mask, make_grid
    from .strichartz import ModBand, l4_band_bound, linf_band_bound, random_space_time, required_nt

    nx = int(4 * math.ceil(N * L) + 4)
    nx += nx % 2
    g = make_grid(L, nx, nx)
    box = FreqBox.annulus(N)
    mask = box_mask(g, box)
    nt = required_nt(g, mask, 4.0 * R)
    if nt * nx * nx > BOUNDS_MAX_ENTRIES:
        return None, None, f"skipped: {nt}x{nx}x{nx} space-time grid exceeds {BOUNDS_MAX_ENTRIES} entries"
    rng = np.random.default_rng([seed, int(N), int(R), int(round(L * 1e6))])
    linf, l4 = [], []
    band = ModBand(R)
    for _ in range(trials):
        st = random_space_time(g, mask, nt, rng, max_modulation=4.0 * R)
        linf.append(linf_band_bound(st, box, band))
        l4.append(l4_band_bound(st, box, band))
    return np.asarray(linf), np.asarray(l4), ""


def cmd_strichartz(args) -> int:
    from .strichartz import bilinear_ratio, semiclassical_l4, trilinear_adversarial, trilinear_ensemble

    cfg = _load(args)
    sc = cfg.section("strichartz")
    probe = args.probe or sc["probe"]
    seed = cfg.seed
    if seed is None:
        raise UsageError("lab sweeps need an explicit seed: pass --seed N or set run.seed in the config")
    trials = args.trials or sc["trials"]
    out = _out_dir(args.out)
    start = time.perf_counter()
    files: dict[str, list] = {}
    summary = []

    def add(name, L, N1, N2, R, h, ratios, note=""):
        rows = files.setdefault(name, [])
        for k, r in enumerate(ratios):
            rows.append([L, N1, N2, R, h, k, r, seed])
        if len(ratios):
            summary.append([name, L, N1, N2, R, h, len(ratios), float(np.max(ratios)), float(np.mean(ratios)),
                            float(np.std(ratios)), seed, note])
        else:
            summary.append([name, L, N1, N2, R, h, 0, nan, nan, nan, seed, note])

    with _threads(args.threads):
        if probe == "bilinear":
            center = (sc["center_a"], sc["center_b"])
            for L in sc["Ls"]:
                for N1 in sc["Ns"]:
                    for N2 in sc["Ns"]:
                        if N1 <= N2:
                            st = bilinear_ratio(N1, N2, center, center, L=L, trials=trials, seed=seed)
                            add("bilinear", L, N1, N2, nan, nan, st.ratios, f"quadrature nodes {st.nodes}")
        elif probe == "semiclassical":
            for h in sc["hs"]:
                st = semiclassical_l4(h, trials=trials, seed=seed)
                add("semiclassical", 1.0, nan, nan, nan, h, st.ratios, f"quadrature nodes {st.nodes}")
        elif probe == "bounds":
            for L in sc["Ls"]:
                for N in sc["Ns"]:
                    for R in sc["Rs"]:
                        linf, l4, note = _bounds_cells(L, N, R, trials, seed)
                        add("linf", L, N, N, R, nan, [] if linf is None else linf, note)
                        add("l4", L, N, N, R, nan, [] if l4 is None else l4, note)
        elif probe == "trilinear":
            for e in sc["extents"]:
                st = trilinear_ensemble(e, trials=trials, s=sc["s"], seed=seed)
                add("trilinear", 1.0, e, e, nan, nan, st.ratios, f"random ensemble, nt {st.nodes}")
                adv = trilinear_adversarial(e, trials=trials, s=sc["s"], seed=seed)
                add("adversarial", 1.0, e, e, nan, nan, adv.ratios, f"low-low-high, nt {adv.nodes}")
        else:
            raise UsageError(f"unknown probe {probe!r}")

    outputs = []
    for name, rows in files.items():
        fname = "samples.csv" if len(files) == 1 else f"samples_{name}.csv"
        write_csv(out / fname, _SAMPLE_COLS, rows)
        outputs.append(fname)
    write_csv(out / "summary.csv", _SUMMARY_COLS, summary)
    outputs.append("summary.csv")
    for row in summary:
        print(f"{row[0]:>13} L={row[1]:g} N1={row[2]:g} N2={row[3]:g} R={row[4]:g} h={row[5]:g}: "
              f"max={row[7]:.4g} mean={row[8]:.4g} std={row[9]:.3g} {row[11]}")
    if args.plot:
        x = "h" if probe == "semiclassical" else "L" if probe in ("bilinear", "bounds") else "N1"
        _maybe_plot(args, out / "summary.csv", x, ["max", "mean"], logx=True)
        outputs.append("summary.png")
    RunManifest("strichartz", {"probe": probe, "trials": trials, "config": cfg.echo()}, [seed], None, args.threads,
                time.perf_counter() - start, 0, outputs).write(out)
    return EXIT_OK


# --- fit ---------------------------------------------------------------------------


def _fit_text(d: dict) -> str:
    lines = []
    for k, v in d.items():
        if v is None:
            continue
        if isinstance(v, bool):
            lines.append(f"{k} = {'true' if v else 'false'}")
        elif isinstance(v, str):
            lines.append(f'{k} = "{v}"')
        else:
            lines.append(f"{k} = {format(float(v), '.17g') if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    header, cols = read_csv(args.input)
    column = args.column or (f"hs_{args.s:g}" if args.s is not None else None)
    if column is None:
        raise UsageError("name the column to fit with --column, or pass --s to use hs_<s>")
    if column not in cols or "t" not in cols:
        raise UsageError(f"{args.input}: need numeric columns 't' and {column!r}; found {header}")
    t, v = cols["t"], cols[column]
    keep = np.isfinite(t) & np.isfinite(v)
    if args.t_min is not None:
        keep &= t >= args.t_min
    if args.t_max is not None:
        keep &= t <= args.t_max
    try:
        fit = fit_rate(t[keep], v[keep], s=args.s)
    except FitError as exc:
        raise NumericFailure(f"fit failed: {exc}") from None
    d = {"input": str(args.input), "column": column, **fit.as_dict()}
    text = _fit_text(d)
    sys.stdout.write(text)
    if args.out:
        out = _out_dir(args.out)
        (out / "fit.toml").write_text(text)
        RunManifest("fit", {"input": str(args.input), "column": column, "s": args.s,
                            "t_min": args.t_min, "t_max": args.t_max}, [], None, 1, 0.0, 0, ["fit.toml"]).write(out)
    return EXIT_OK


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dstorus", description="Davey-Stewartson dynamics and Strichartz probes on scaled tori")
    p.add_argument("--version", action="version", version=f"dstorus {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="TOML or JSON config file")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
        sp.add_argument("--threads", type=int, default=1, help="FFT worker threads")
        sp.add_argument("--plot", action="store_true", help="also render PNGs (needs the plot extra)")

    r = sub.add_parser("run", help="evolve one configuration")
    common(r)
    r.add_argument("--checkpoint-every", type=int, default=0, metavar="N", help="checkpoint every N sample rows")
    r.add_argument("--resume", metavar="PATH", help="continue from a checkpoint file")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every point of the config's sweep axes")
    common(s)
    s.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("exact", help="residuals and norm curves of closed-form solutions")
    common(e)
    e.add_argument("--case", required=True, choices=["ozawa", "hypnls", "stationary"])
    e.add_argument("--check", default="all", choices=["residual", "norms", "all"])
    e.add_argument("--s", help="comma-separated Sobolev indices (default: config s_list)")
    e.add_argument("--L", type=float)
    e.add_argument("--nx", type=int)
    e.add_argument("--times", help="comma-separated sample times (fractions of the blow-up time for ozawa)")
    e.add_argument("--t-max", type=float, help="end of the norm curve")
    e.add_argument("--points", type=int, default=25, help="samples on the ozawa norm curve")
    e.set_defaults(func=cmd_exact)

    st = sub.add_parser("strichartz", help="Monte-Carlo estimate probes")
    common(st)
    st.add_argument("--probe", choices=["bilinear", "semiclassical", "bounds", "trilinear"])
    st.add_argument("--trials", type=int)
    st.set_defaults(func=cmd_strichartz)

    f = sub.add_parser("fit", help="fit C(T - t)^(-p) to a CSV column")
    f.add_argument("--input", required=True)
    f.add_argument("--s", type=float, help="Sobolev index; selects column hs_<s> and the classification")
    f.add_argument("--column")
    f.add_argument("--t-min", type=float)
    f.add_argument("--t-max", type=float)
    f.add_argument("--out", help="also write fit.toml and a manifest here")
    f.set_defaults(func=cmd_fit)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except (UsageError, ConfigError, PlotUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
