"""Command-line entry point and reproducible run orchestration.

``xyfluct report CONFIG`` runs every stage a config declares and writes its
outputs under ``OUT_DIR/<id>/``.  The other subcommands run a single stage
from flags.  Exit codes: 0 pass (or no verdict), 1 failed verdict, 2 usage
or config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, config, experiments
from .config import ConfigError
from .gradient import GradientConfig, couple_xy_gradient, eta_array, vortex_census
from .hswalk import diffusive_samples, diffusive_scaling_check
from .lattice import build_rect_domain
from .potentials import BetaSchedule, anharmonic, beta_at, quadratic, truncated
from .sampler import Model, sample_ensemble
from .statistics import (InsufficientSamplesError, active_edges, block_groups, contour_probability, contour_rate_fit,
                         continuum_energy, default_test_function, discrete_energy,
                         fluctuation_values, gaussian_limit_report, jackknife,
                         mean_edge_exceedance)

log = logging.getLogger("xyfluct")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


@dataclass
class RunRecord:
    id: str
    config: dict
    seed: int
    version: str
    run_dir: Path
    outputs: dict = field(default_factory=dict)  # stage -> list of file names
    results: dict = field(default_factory=dict)  # stage -> JSON-ready dict
    verdicts: dict = field(default_factory=dict)  # stage -> True / False / None
    metrics: dict = field(default_factory=dict)  # wall clock and throughput, never written

    @property
    def verdict(self) -> bool | None:
        v = [x for x in self.verdicts.values() if x is not None]
        return all(v) if v else None

    def hashes(self) -> dict:
        return {name: hashlib.sha256((self.run_dir / name).read_bytes()).hexdigest()
                for files in self.outputs.values() for name in files}


# ---------------------------------------------------------------------------
# deterministic writers


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, ensure_ascii=False, allow_nan=True)
        fh.write("\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


# ---------------------------------------------------------------------------
# stages


def model_from_config(m: dict) -> tuple[Model, dict]:
    """Sampler model and the resolved (beta, margin, schedule) info."""
    d = m["d"]
    if "schedule" in m:
        sched = BetaSchedule("log", A=m["schedule"][0], C=m["schedule"][1])
        beta, margin = beta_at(sched, m["eps"], d)
        info = {"schedule": sched.to_config(), "margin": margin,
                "in_hypothesis": sched.log_margin_diverges(d)}
    else:
        beta, info = m["beta"], {"schedule": None, "margin": None, "in_hypothesis": False}
    kind = m["model"]
    if kind == "xy":
        model = Model("xy", beta)
    elif kind == "xyfield":
        model = Model("xyfield", beta, h=m["h"])
        info["in_hypothesis"] = False
    elif kind == "graddelta":
        model = Model("grad", beta, truncated(m["delta"]))
    else:
        model = Model("grad", beta, anharmonic(m["lambda"]) if m["lambda"] > 0 else quadratic())
    info["beta"] = beta
    return model, info


def _domain(m: dict):
    lo, hi = m["box"]
    return build_rect_domain(m["d"], m["eps"], [lo] * m["d"], [hi] * m["d"])


def stage_sample(cfg: dict, seed: int, out: Path, metrics: dict) -> tuple[dict, None, list]:
    m, s = cfg["model"], cfg["sampling"]
    dom = _domain(m)
    model, info = model_from_config(m)
    t0 = time.perf_counter()
    ens = sample_ensemble(dom, model, s["chains"], s["burnin"], s["samples"], s["thin"], seed,
                          s["reflect"])
    wall = time.perf_counter() - t0
    sweeps = s["chains"] * (s["burnin"] + s["samples"] * s["thin"])
    metrics["sample"] = {"wall_clock_s": wall, "sweeps_per_s": sweeps / max(wall, 1e-12)}
    n = dom.n_vertices

    def rows():
        for c in range(ens.n_chains):
            for k in range(ens.n_samples):
                sw = int(ens.sweeps[k])
                for v in range(n):
                    yield c, sw, v, float(ens.theta[c, k, v])

    write_csv(out / "samples.csv", ("chain", "sweep", "vertex_index", "theta"), rows())
    side = {"domain": dom.descriptor(), "model": m, "resolved": info,
            "potential": model.potential.to_config(), "seed": seed, "sampling": s,
            "diagnostics": experiments._round_tree(
                {"acceptance": ens.acceptance, "tau_int_sweeps": ens.tau_int, "rhat": ens.rhat,
                 "widths": ens.widths}),
            "observable": "sum of cos(eta) over edges"}
    write_json(out / "samples.json", side)
    return side, None, ["samples.csv", "samples.json"]


def read_samples(csv_path: Path):
    """(domain, model, info, theta (chains, samples, n), sidecar) from a sample run."""
    side = json.loads(Path(csv_path).with_suffix(".json").read_text(encoding="utf-8"))
    d = side["domain"]
    dom = build_rect_domain(d["d"], d["eps"], d["box_lo"], d["box_hi"])
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    chains = int(data[:, 0].max()) + 1
    theta = data[:, 3].reshape(chains, -1, dom.n_vertices)
    m = {k: tuple(v) if isinstance(v, list) else v for k, v in side["model"].items()}
    model, info = model_from_config(m)
    return dom, model, info, theta, side


def stage_vortices(csv_path: Path, out: Path) -> tuple[dict, None, list]:
    dom, model, _, theta, _ = read_samples(csv_path)
    per = []
    for c in range(theta.shape[0]):
        for k in range(theta.shape[1]):
            g = GradientConfig(eta_array(theta[c, k], dom, model.wrapped), dom,
                               "xy" if model.wrapped else "gradient")
            per.append({"chain": c, "sample": k, **vortex_census(g).to_json()})
    frac = float(np.mean([r["n_plus"] + r["n_minus"] > 0 for r in per])) if per else 0.0
    res = {"samples": per, "fraction_with_vortex": frac}
    write_json(out / "vortices.json", res)
    return {"fraction_with_vortex": frac, "n": len(per)}, None, ["vortices.json"]


def stage_fluct(csv_path: Path, out: Path, phis=("bump", "sine"), tgrid=None):
    dom, model, info, theta, _ = read_samples(csv_path)
    chains, n = theta.shape[:2]
    eta = eta_array(theta.reshape(chains * n, -1), dom, model.wrapped)
    groups = block_groups(chains, n)
    res, files, ok = {}, [], []
    for name in phis:
        phi = default_test_function(name, dom)
        v = fluctuation_values(eta, dom, phi, model.beta)
        q = discrete_energy(phi, dom)
        rep = gaussian_limit_report(v, q, t_grid=tgrid, groups=groups,
                                    in_hypothesis=info["in_hypothesis"],
                                    q_continuum=continuum_energy(phi))
        write_csv(out / f"fluct_{name}.csv", ("t", "re", "im", "se_re", "se_im", "ref"),
                  rep.charfn.rows())
        files.append(f"fluct_{name}.csv")
        res[name] = experiments._round_tree(rep.to_json())
        ok.append(rep.passed)
    verdict = None if any(v is None for v in ok) else all(ok)
    res["verdict"] = verdict
    write_json(out / "fluct.json", res)
    return res, verdict, files + ["fluct.json"]


def stage_contour(csv_path: Path, out: Path, a_vals=(0.3, 0.5, 0.8), edges="all"):
    dom, model, info, theta, _ = read_samples(csv_path)
    chains, n = theta.shape[:2]
    eta = eta_array(theta.reshape(chains * n, -1), dom, model.wrapped)
    groups = block_groups(chains, n)
    beta = model.beta
    ids = active_edges(dom) if edges == "all" else np.asarray(edges, dtype=np.int64)
    convex = not model.wrapped
    rows, points, joint, ok = [], [], [], True
    for a in a_vals:
        p, se, count = mean_edge_exceedance(eta, ids, a, groups)
        bound = math.exp(1 - beta * a * a / math.pi ** 2) if convex else None
        if convex:
            hits = (np.abs(eta[:, ids]) > a).astype(float)
            worst = float(np.max(hits.mean(axis=0)))
            p_e, se_e = jackknife(hits, groups, lambda m: m)
            ok = ok and bool(np.all(p_e <= bound + 2 * se_e))
        else:
            worst = float(np.max((np.abs(eta[:, ids]) > a).mean(axis=0)))
        rows.append((a, beta, p, se, count, worst, "" if bound is None else bound))
        points.append((beta, a, p, se))
        if edges != "all":
            joint.append(contour_probability(eta, dom, ids, a, beta,
                                             model.potential if convex else None,
                                             groups).to_json())
    target = -1.0 / math.pi ** 2
    try:
        fit = contour_rate_fit(points)
    except InsufficientSamplesError as exc:
        log.warning("no rate fit: %s", exc)
        fit = None
    slope_ok = None if fit is None else bool(fit.slope + 2 * fit.slope_se <= target)
    verdict = ok if convex else slope_ok
    write_csv(out / "contour.csv", ("a", "beta", "p_edge_mean", "se", "count", "p_edge_max",
                                    "bound"), rows)
    res = experiments._round_tree({"beta": beta, "edges": "all" if edges == "all" else list(ids),
                                   "fit": None if fit is None else fit.to_json(), "slope_target": target,
                                   "slope_ok": slope_ok, "joint": joint, "verdict": verdict})
    write_json(out / "contour.json", res)
    return res, verdict, ["contour.csv", "contour.json"]


def stage_couple(cfg: dict, seed: int, out: Path):
    m, s = cfg["model"], cfg["sampling"]
    dom = _domain(m)
    model, info = model_from_config(m)
    run = couple_xy_gradient(dom, model.potential, model.beta, seed, n_draws=cfg["couple"]["draws"],
                             burnin=s["burnin"], thin=s["thin"], n_reflect=s["reflect"])
    write_csv(out / "couple.csv", ("draw", "agreed", "n_bad_edges", "max_abs_eta"),
              ((i, int(p.agreed), int(p.bad_edges.size), float(np.max(np.abs(p.eta_xy.eta))))
               for i, p in enumerate(run.pairs)))
    res = experiments._round_tree({"agreement": run.agreement, "c_hat": run.c_hat,
                                   "c_prime_hat": run.c_prime_hat, "q_hat": run.q_hat,
                                   "q_se": run.q_se, "rejections": run.rejections,
                                   "delta": run.delta, "beta": run.beta,
                                   "draws": len(run.pairs)})
    write_json(out / "couple.json", res)
    return res, None, ["couple.csv", "couple.json"]


def stage_walk(w: dict, seed: int, out: Path):
    pot = {"quadratic": quadratic, "truncated": lambda: truncated(w.get("delta", math.pi / 4)),
           "anharmonic": lambda: anharmonic(w["lambda"])}[w["potential"]]()
    smp = diffusive_samples(pot, w["beta"], w["eps"], w["tgrid"], w["envs"], w["walkers"],
                            w["dt"], seed, d=w["d"])
    rep = diffusive_scaling_check([smp], min_trajectories=1)
    n_env, W, n_t, d = smp.positions.shape

    def rows():
        for e in range(n_env):
            for k in range(W):
                for j in range(n_t):
                    yield (e * W + k, float(smp.t_grid[j]),
                           *(float(x) for x in smp.positions[e, k, j]))

    write_csv(out / "walk.csv", ("pair_id", "t", *(f"x_{a + 1}" for a in range(d))), rows())
    final = [r for r in rep.rows if r.t == rep.rows[-1].t]
    tol = w.get("tolerance")
    ok = True
    for r in final:
        dev = np.abs(r.var_ratio - 1)
        ok = ok and bool(np.all(dev <= (3 * r.var_ratio_se if tol is None else tol)))
        ok = ok and abs(r.cross_cov) <= 3 * r.cross_cov_se and r.gaussian is not False
    res = experiments._round_tree({**rep.to_json(), "box": smp.box, "acceptance": smp.acceptance,
                                   "potential": pot.to_config(), "beta": w["beta"],
                                   "verdict": ok})
    write_json(out / "walk.json", res)
    return res, ok, ["walk.csv", "walk.json"]


def stage_experiment(e: dict, seed: int, out: Path):
    kw = {k: v for k, v in e.items() if k != "name"}
    res = experiments.run(e["name"], seed=seed, **kw)
    write_json(out / "experiment.json", res)
    return res, bool(res["passed"]), ["experiment.json"]


# ---------------------------------------------------------------------------
# orchestration


def bundled_config(name: str) -> str:
    """Text of a config shipped with the package (``name`` with or without .cfg)."""
    fname = name if name.endswith(".cfg") else f"{name}.cfg"
    ref = resources.files("xyfluct").joinpath("configs", fname)
    if not ref.is_file():
        raise ConfigError(f"no bundled config {name!r}; available: {', '.join(bundled_names())}")
    return ref.read_text(encoding="utf-8")


def bundled_names() -> list[str]:
    d = resources.files("xyfluct").joinpath("configs")
    return sorted(p.name[:-4] for p in d.iterdir() if p.name.endswith(".cfg"))


def run_experiment(cfg, out_dir="runs", seed: int | None = None) -> RunRecord:
    """Run every stage a config declares; ``cfg`` is a path, config text or parsed dict."""
    if isinstance(cfg, dict):
        cfg = config.validate(cfg)
    elif isinstance(cfg, str) and "\n" in cfg:
        cfg = config.loads(cfg)
    else:
        cfg = config.load(cfg)
    if seed is not None:
        cfg["run"]["seed"] = int(seed)
    seed = cfg["run"]["seed"]
    run_dir = Path(out_dir) / cfg["run"]["id"]
    run_dir.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(cfg["run"]["id"], cfg, seed, __version__, run_dir)
    (run_dir / "config.cfg").write_text(config.dumps(cfg), encoding="utf-8")
    rec.outputs["config"] = ["config.cfg"]
    t0 = time.perf_counter()
    samples = run_dir / "samples.csv"
    for st in cfg["run"]["stages"]:
        ts = time.perf_counter()
        try:
            if st == "sample":
                res, v, files = stage_sample(cfg, seed, run_dir, rec.metrics)
            elif st == "vortices":
                res, v, files = stage_vortices(samples, run_dir)
            elif st == "fluct":
                f = cfg.get("fluct", config.DEFAULTS["fluct"])
                res, v, files = stage_fluct(samples, run_dir, f["phi"], f.get("tgrid"))
            elif st == "contour":
                c = cfg.get("contour", config.DEFAULTS["contour"])
                res, v, files = stage_contour(samples, run_dir, c["a"], c["edges"])
            elif st == "couple":
                cfg.setdefault("couple", dict(config.DEFAULTS["couple"]))
                res, v, files = stage_couple(cfg, seed, run_dir)
            elif st == "walk":
                res, v, files = stage_walk(cfg["walk"], seed, run_dir)
            else:
                res, v, files = stage_experiment(cfg["experiment"], seed, run_dir)
        except Exception as exc:
            raise RuntimeError(f"stage {st!r} of run {rec.id!r} failed: {exc}") from exc
        rec.results[st], rec.verdicts[st], rec.outputs[st] = res, v, files
        rec.metrics.setdefault(st, {})["stage_wall_clock_s"] = time.perf_counter() - ts
    rec.metrics["wall_clock_s"] = time.perf_counter() - t0
    return rec


def _verdict_word(v) -> str | None:
    return None if v is None else ("PASS" if v else "FAIL")


def emit_report(run: RunRecord) -> dict:
    """Write ``report.json`` (all estimates and verdicts) and return it."""
    doc = {"id": run.id, "seed": run.seed, "version": run.version,
           "config": config.dumps(run.config),
           "stages": {st: {"verdict": _verdict_word(run.verdicts.get(st)),
                           "outputs": run.outputs.get(st, []), "result": run.results[st]}
                      for st in run.results},
           "verdict": _verdict_word(run.verdict)}
    write_json(run.run_dir / "report.json", doc)
    run.outputs["report"] = ["report.json"]
    return doc


# ---------------------------------------------------------------------------
# argument parsing


def _floats_arg(s):
    try:
        return config._floats(s)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _edges_arg(s):
    try:
        return config._edges(s)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    def global_flags(parser, top):
        # Subcommands accept the same flags; SUPPRESS keeps them from
        # overwriting values given before the subcommand name.
        dflt = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
        parser.add_argument("--seed", type=int, default=dflt(None), help="master seed")
        parser.add_argument("--threads", type=int, default=dflt(None),
                            help="numba worker threads")
        parser.add_argument("--out-dir", default=dflt("runs"),
                            help="root directory for run outputs")
        parser.add_argument("-v", "--verbose", action="store_true", default=dflt(False))

    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, top=False)
    p = argparse.ArgumentParser(prog="xyfluct",
                                description="Fluctuation experiments for XY and gradient models.")
    global_flags(p, top=True)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def model_flags(sp):
        sp.add_argument("--model", choices=config.SAMPLE_MODELS, default="xy")
        sp.add_argument("--eps", type=float, required=True)
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--beta", type=float)
        g.add_argument("--schedule", type=_floats_arg, help="A,C for beta = A + C|log eps|")
        sp.add_argument("--delta", type=float)
        sp.add_argument("--lambda", dest="lam", type=float, default=0.0)
        sp.add_argument("--h", type=float, default=0.0)
        sp.add_argument("--box", type=_floats_arg, default=(0.0, 1.0), help="lo,hi of the cube")
        sp.add_argument("--d", type=int, default=2)
        sp.add_argument("--chains", type=int, default=4)
        sp.add_argument("--burnin", type=int, default=500)
        sp.add_argument("--thin", type=int, default=2)
        sp.add_argument("--reflect", type=int, default=1)
        sp.add_argument("--out", help="output directory (default OUT_DIR/<subcommand>)")

    sp = sub.add_parser("sample", parents=[common], help="sample a model, write θ as CSV")
    model_flags(sp)
    sp.add_argument("--samples", type=int, default=2000)

    sp = sub.add_parser("vortices", parents=[common], help="vortex census of a sample CSV")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out")

    sp = sub.add_parser("couple", parents=[common], help="coupled XY / truncated-convex draws")
    model_flags(sp)
    sp.add_argument("--draws", type=int, default=1000)
    sp.set_defaults(model="graddelta")

    sp = sub.add_parser("fluct", parents=[common], help="characteristic function of ⟨η̃,φ⟩")
    sp.add_argument("--phi", action="append", choices=("bump", "sine", "polybump"))
    sp.add_argument("--tgrid", type=_floats_arg)
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out")

    sp = sub.add_parser("contour", parents=[common], help="edge exceedance rates and fit")
    sp.add_argument("--edges", type=_edges_arg, default="all")
    sp.add_argument("--a", type=_floats_arg, default=(0.3, 0.5, 0.8))
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out")

    sp = sub.add_parser("walk", parents=[common], help="walk in a dynamic environment")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--potential", choices=config.WALK_POTENTIALS, default="quadratic")
    sp.add_argument("--delta", type=float, default=math.pi / 4)
    sp.add_argument("--lambda", dest="lam", type=float, default=0.1)
    sp.add_argument("--horizon", type=float, default=1.0, help="macroscopic time t")
    sp.add_argument("--pairs", type=int, default=1600, help="total walker trajectories")
    sp.add_argument("--envs", type=int, default=8, help="independent environments")
    sp.add_argument("--dt", type=float, default=0.01)
    sp.add_argument("--tolerance", type=float)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--out")

    sp = sub.add_parser("report", parents=[common], help="run configs and write report.json")
    sp.add_argument("configs", nargs="*", help="config files")
    sp.add_argument("--bundled", action="append", default=[],
                    help="bundled config name (repeatable); 'list' shows them")
    return p


def _model_section(a) -> dict:
    m = {"model": a.model, "d": a.d, "eps": a.eps, "box": tuple(a.box), "h": a.h,
         "lambda": a.lam}
    if a.beta is not None:
        m["beta"] = a.beta
    else:
        m["schedule"] = tuple(a.schedule)
    if a.delta is not None:
        m["delta"] = a.delta
    return m


def _single(a, stages, sections) -> int:
    cfg = {"run": {"id": a.command, "seed": a.seed or 0, "stages": tuple(stages)}, **sections}
    config.validate(cfg)
    out = Path(a.out) if a.out else Path(a.out_dir) / a.command
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["run"]["seed"]
    st = stages[0]
    if st == "sample":
        res, v, files = stage_sample(cfg, seed, out, {})
    elif st == "couple":
        res, v, files = stage_couple(cfg, seed, out)
    elif st == "walk":
        res, v, files = stage_walk(cfg["walk"], seed, out)
    for f in files:
        print(out / f)
    return _exit_for(v)


def _exit_for(v) -> int:
    return EXIT_FAIL if v is False else EXIT_PASS


def dispatch(a) -> int:
    if a.command == "sample":
        sampling = {"chains": a.chains, "burnin": a.burnin, "samples": a.samples, "thin": a.thin,
                    "reflect": a.reflect}
        return _single(a, ["sample"], {"model": _model_section(a), "sampling": sampling})
    if a.command == "couple":
        sampling = dict(config.DEFAULTS["sampling"], burnin=a.burnin, thin=a.thin,
                        reflect=a.reflect)
        return _single(a, ["couple"], {"model": _model_section(a), "sampling": sampling,
                                       "couple": {"draws": a.draws}})
    if a.command == "walk":
        w = {"potential": a.potential, "d": a.d, "eps": a.eps, "beta": a.beta, "delta": a.delta,
             "lambda": a.lam, "tgrid": tuple(a.horizon * f for f in (0.25, 0.5, 1.0)),
             "envs": a.envs, "walkers": max(1, a.pairs // a.envs), "dt": a.dt}
        if a.tolerance is not None:
            w["tolerance"] = a.tolerance
        return _single(a, ["walk"], {"walk": w})
    if a.command in ("vortices", "fluct", "contour"):
        inp = Path(a.inp)
        if not inp.is_file() or not inp.with_suffix(".json").is_file():
            raise ConfigError(f"{inp} and its .json sidecar must exist (output of `sample`)")
        out = Path(a.out) if a.out else Path(a.out_dir) / a.command
        out.mkdir(parents=True, exist_ok=True)
        if a.command == "vortices":
            res, v, files = stage_vortices(inp, out)
        elif a.command == "fluct":
            res, v, files = stage_fluct(inp, out, tuple(a.phi or ("bump", "sine")), a.tgrid)
        else:
            res, v, files = stage_contour(inp, out, a.a, a.edges)
        for f in files:
            print(out / f)
        return _exit_for(v)
    # report
    if "list" in a.bundled:
        print("\n".join(bundled_names()))
        return EXIT_PASS
    sources = [bundled_config(b) for b in a.bundled] + list(a.configs)
    if not sources:
        raise ConfigError("report needs at least one config file or --bundled name")
    worst = EXIT_PASS
    for src in sources:
        rec = run_experiment(src, a.out_dir, a.seed)
        doc = emit_report(rec)
        print(f"{rec.id}: {doc['verdict'] or 'NO VERDICT'} -> {rec.run_dir / 'report.json'}")
        log.info("%s metrics: %s", rec.id, json.dumps(rec.metrics, sort_keys=True))
        if rec.verdict is False:
            worst = EXIT_FAIL
    return worst


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_PASS
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.threads is not None:
        import numba
        numba.set_num_threads(max(1, min(a.threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        return dispatch(a)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyboardInterrupt, MemoryError):
        raise
    except Exception as exc:  # noqa: BLE001 - every other failure maps to the runtime code
        print(f"error: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
