"""Command-line entry point: ``shrinkerlab <subcommand> [options]``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on bad
input (unreadable or invalid mesh, malformed option, unmet precondition).
"""

from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import catalog, fileio, reilly, solver, spectrum, weighted
from .errors import ConvergenceError, ShrinkerLabError
from .mesh import validate

SUBCOMMANDS = ("catalog", "validate", "verify-identities", "spectrum", "growth", "ft-scan",
               "budgets", "reilly", "barrier", "solve", "all")
DEFAULT_SEED = 0x5EED

# option name -> (type, default)
OPTIONS = {
    "catalog": (str, None),
    "mesh": (str, None),
    "level": (int, None),
    "tol": (float, None),
    "out": (str, "shrinkerlab-out"),
    "seed": ("hex", DEFAULT_SEED),
    "radii": ("range", None),
    "t_grid": ("range", None),
    "field": (str, "x1"),
    "domain": (str, "ball:1"),
    "radius": (float, None),
    "halflength": (float, catalog.DEFAULT_HALFLENGTH),
    "k": (int, 3),
    "max_iter": (int, 500),
    "threshold": (float, None),
    "barrier_radius": (float, math.sqrt(6.0)),
    "diameter": (float, 0.0),
    "points": (int, 10_000),
    "samples": (int, 100),
    "dump_eigenfunctions": (bool, False),
}


class UsageError(ShrinkerLabError, ValueError):
    pass


def _parse_hex(s):
    try:
        v = int(str(s), 0) if str(s).lower().startswith("0x") else int(str(s), 16)
    except ValueError as exc:
        raise UsageError(f"seed must be a hexadecimal integer, got {s!r}") from exc
    if v < 0:
        raise UsageError("seed must be non-negative")
    return v


def _parse_range(s):
    """``a:b:step`` inclusive of ``b`` (within half a step), or a comma list."""
    s = str(s)
    try:
        if ":" in s:
            a, b, st = (float(x) for x in s.split(":"))
            if not st > 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / st + 0.5))
            return a + st * np.arange(n + 1)
        return np.array([float(x) for x in s.split(",")])
    except ValueError as exc:
        raise UsageError(f"expected a:b:step with step > 0, got {s!r}") from exc


def _convert(name, raw):
    typ = OPTIONS[name][0]
    if raw is None:
        return None
    if typ == "hex":
        return _parse_hex(raw)
    if typ == "range":
        return _parse_range(raw)
    if typ is bool:
        return raw if isinstance(raw, bool) else str(raw).strip().lower() in ("1", "true", "yes", "on")
    try:
        return typ(raw)
    except ValueError as exc:
        raise UsageError(f"bad value for --{name.replace('_', '-')}: {raw!r}") from exc


class RunConfig:
    """Resolved options: command line over config file over defaults."""

    def __init__(self, command, values, mesh_path=None):
        self.command = command
        for name, (_, default) in OPTIONS.items():
            setattr(self, name, values.get(name, default))
        if mesh_path is not None:
            self.mesh = mesh_path
        if self.tol is not None and not self.tol > 0:
            raise UsageError("--tol must be positive")
        if self.catalog is not None and self.catalog not in catalog.KINDS:
            raise UsageError(f"--catalog must be one of {catalog.KINDS}")

    def to_dict(self):
        d = {"command": self.command}
        for name in OPTIONS:
            v = getattr(self, name)
            d[name] = v.tolist() if isinstance(v, np.ndarray) else v
        return d


def _load_config_file(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    cp = configparser.ConfigParser()
    cp.read_string(p.read_text())
    extra = set(cp.sections()) - {"run"}
    if extra:
        raise UsageError(f"unknown config sections: {sorted(extra)}")
    out = {}
    if cp.has_section("run"):
        for key, raw in cp["run"].items():
            name = key.replace("-", "_")
            if name not in OPTIONS:
                raise UsageError(f"unknown config key {key!r}")
            out[name] = _convert(name, raw)
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="shrinkerlab", description="Self-shrinker verification laboratory.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("path", nargs="?", help="mesh file (same as --mesh)")
    p.add_argument("--config", help="INI file with a [run] section of option defaults")
    for name, (typ, _) in OPTIONS.items():
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            p.add_argument(flag, action="store_const", const=True, default=None)
        else:
            p.add_argument(flag, default=None)
    return p


def resolve_config(argv):
    ns = build_parser().parse_args(argv)
    values = _load_config_file(ns.config) if ns.config else {}
    for name in OPTIONS:
        raw = getattr(ns, name)
        if raw is not None:
            values[name] = _convert(name, raw)
    return RunConfig(ns.command, values, ns.path)


# -- helpers -----------------------------------------------------------------


def _check(name, passed, anchor="", **detail):
    return {"name": name, "passed": bool(passed), "anchor": anchor, **detail}


def _catalog_resolution(kind, level):
    if kind == "sphere":
        return level if level is not None else 4
    if kind == "cylinder":
        return 16 * (level if level is not None else 4)
    return 10 * (level if level is not None else 4)


def _catalog_F1(shr):
    """Closed-form F_1 of a catalog exemplar (complete surface)."""
    if shr.kind == "sphere":
        return shr.radius**2 * math.exp(-shr.radius**2 / 4)
    if shr.kind == "cylinder":
        return shr.radius * math.sqrt(math.pi) * math.exp(-shr.radius**2 / 4)
    return math.exp(-shr.offset[2] ** 2 / 4)


def load_mesh(cfg, default_kind="sphere"):
    """Mesh from ``--mesh`` (validated) or from the catalog."""
    if cfg.mesh:
        m = fileio.read_mesh(cfg.mesh)
        validate(m)
        return m, None, {"source": "file", "path": str(cfg.mesh)}
    kind = cfg.catalog or default_kind
    params = {} if cfg.radius is None or kind == "plane" else {"radius": cfg.radius}
    shr = catalog.make_shrinker(kind, params)
    res = _catalog_resolution(kind, cfg.level)
    half = cfg.halflength if kind == "cylinder" else max(cfg.halflength, 20.0)
    m = catalog.sample_mesh(shr, res, half)
    return m, shr, {"source": "catalog", "shrinker": shr.to_dict(), "resolution": res, "halflength": half}


# -- subcommands -------------------------------------------------------------


def cmd_catalog(cfg):
    kinds = [cfg.catalog] if cfg.catalog else list(catalog.KINDS)
    rng = np.random.default_rng(cfg.seed)
    report, checks, files = {}, [], []
    for kind in kinds:
        params = {} if cfg.radius is None or kind == "plane" else {"radius": cfg.radius}
        shr = catalog.make_shrinker(kind, params)
        (a, b), (c, d) = shr.domain
        a, b = max(a, -10.0), min(b, 10.0)
        c, d = max(c, -10.0), min(d, 10.0)
        pts = np.column_stack([rng.uniform(a, b, 64), rng.uniform(c, d, 64)])
        if kind == "sphere":
            pts[:, 0] = np.clip(pts[:, 0], 1e-3, math.pi - 1e-3)
        res = [np.linalg.norm(catalog.shrinker_residual(shr, p)) for p in pts]
        orth, split = [], []
        for p in pts:
            fr = catalog.eval_frame(shr, p)
            orth.append(abs(fr.normal_part @ fr.tangential_part))
            split.append(abs(fr.position @ fr.position - fr.normal_part @ fr.normal_part - fr.tangential_part @ fr.tangential_part))
        report[kind] = {**shr.to_dict(), "max_residual": max(res), "max_orthogonality": max(orth), "max_split_gap": max(split)}
        if shr.exact:
            checks.append(_check(f"{kind}: exact exemplar residual", max(res) <= 1e-12, "H = -X^N/2", value=max(res), tol=1e-12))
        checks.append(_check(f"{kind}: X^N orthogonal to X^T", max(orth) <= 1e-12, value=max(orth), tol=1e-12))
        checks.append(_check(f"{kind}: |X|^2 split", max(split) <= 1e-10, value=max(split), tol=1e-10))
        mesh = catalog.sample_mesh(shr, _catalog_resolution(kind, cfg.level), cfg.halflength if kind == "cylinder" else 20.0)
        files.append((f"{kind}.off", lambda p, m=mesh: fileio.write_off(m, p)))
    return report, checks, files


def cmd_validate(cfg):
    m, _, src = load_mesh(cfg)
    diag = validate(m)
    checks = []
    if diag.is_closed:
        gap = abs(diag.angle_defect_total - 2 * math.pi * diag.euler_characteristic)
        checks.append(_check("Gauss-Bonnet", gap <= 1e-9, "sum of angle defects = 2 pi chi", value=gap, tol=1e-9))
    return {"input": src, "diagnostics": diag.to_dict()}, checks, []


def cmd_identities(cfg):
    m, shr, src = load_mesh(cfg)
    from .mesh import discrete_shrinker_residual

    shr_res = discrete_shrinker_residual(m)
    ids = weighted.identity_residuals(m)
    F = weighted.f_functional_report(m, 1.0)
    tol = cfg.tol if cfg.tol is not None else (0.005 if m.is_closed else 0.01)
    rel = abs(ids["ratio_X2_rho_tail_corrected"] - 4.0) / 4.0
    checks = [_check("weighted mean identity", rel <= tol, weighted.IDENTITY_ANCHORS["res_mean"], value=rel, tol=tol)]
    if shr is not None and shr.exact:
        F1 = _catalog_F1(shr)
        ftol = 1e-3 if shr.kind == "plane" else (0.005 if shr.kind == "sphere" else 0.01)
        err = abs(F["F_t"] - F1) / F1
        checks.append(_check("F_1 closed form", err <= ftol, weighted.F_ANCHOR, value=F["F_t"], expected=F1, tol=ftol))
    report = {"input": src, "shrinker_residual": shr_res.to_dict(), "identities": ids, "F_functional": F}
    return report, checks, []


def cmd_spectrum(cfg):
    m, _, src = load_mesh(cfg)
    ops = spectrum.assemble(m)
    res = spectrum.first_eigenpairs(ops, cfg.k, seed=cfg.seed)
    bound = spectrum.eigenvalue_bound_report(res, m)
    coord = spectrum.coordinate_eigen_residual(ops, m)
    tol = cfg.tol if cfg.tol is not None else 1e-8
    report = {
        "input": src,
        "lambda": res.eigenvalues,
        "residuals": res.residuals,
        "constraint_violation": res.constraint_violation,
        "multiplicity_groups": res.multiplicity_groups,
        "paper_interval_check": bound["paper_interval_check"],
        "interval_report": bound,
        "coordinate_residuals": coord,
    }
    checks = [
        _check("eigen residuals", np.all(res.residuals <= tol), value=float(res.residuals.max()), tol=tol),
        _check("lambda_1 > 0", res.lambda1 > 0, value=res.lambda1),
        _check("eigenvalue interval", bound["paper_interval_check"] != "outside", bound["anchor"],
               value=res.lambda1, status=bound["paper_interval_check"]),
    ]
    files = []
    if cfg.dump_eigenfunctions:
        files.append(("mesh.off", lambda p: fileio.write_off(m, p)))
        for i in range(res.eigenvectors.shape[1]):
            files.append((f"eigenfunction_{i + 1}.txt", lambda p, u=res.eigenvectors[:, i]: fileio.write_scalar_field(u, p)))
    return report, checks, files


def cmd_growth(cfg):
    m, shr, src = load_mesh(cfg, "cylinder")
    radii = cfg.radii
    if radii is None:
        top = m.diameter / 2 + 1 if m.is_closed else min(cfg.halflength, float(np.abs(m.vertices).max()))
        radii = np.linspace(1.0, max(top, 2.0), 15)
    prof = weighted.growth_profile(m, radii)
    # doubling hypothesis on the profile itself: radii paired with their halves where sampled
    C2 = 2.0
    ratios = []
    for r, a in zip(prof.radii, prof.areas):
        j = np.flatnonzero(np.isclose(prof.radii, r / 2))
        if r >= C2 and len(j) and prof.areas[j[0]] > 0:
            ratios.append(a / (r**2 * prof.areas[j[0]]))
    C1 = max(ratios) if ratios else 1.0
    cert = weighted.growth_lemma_check(prof.radii, prof.areas, 2, max(C1, 1e-12), C2)
    d = prof.to_dict()
    checks = [
        _check("areas monotone", d["monotone"], "D_r nested"),
        _check("growth lemma consistency", (not cert.hypothesis_ok) or cert.conclusion_ok, cert.to_dict()["anchor"]),
    ]
    report = {"input": src, "profile": d, "growth_constant": prof.growth_constant, "lemma": cert.to_dict()}
    files = [("growth.csv", lambda p: fileio.write_csv(p, ["r", "area", "bound"], prof.csv_rows()))]
    return report, checks, files


def cmd_ft_scan(cfg):
    m, shr, src = load_mesh(cfg)
    grid = cfg.t_grid if cfg.t_grid is not None else _parse_range("0.1:5:0.1")
    tol = cfg.tol if cfg.tol is not None else 1e-6
    scan = weighted.ft_monotonicity_scan(m, cfg.radius if cfg.mesh else None, grid, tol)
    checks = [
        _check("dF_t/dt <= tol F_1 for t >= 1", scan["derivative_ok"], scan["anchor"], value=scan["max_dF_dt_t_ge_1"], tol=tol),
        _check("F_t <= F_1", scan["bounded_by_F1"], scan["anchor"]),
    ]
    rows = list(zip(scan["t"].tolist(), scan["F_t"].tolist(), scan["dF_dt"].tolist()))
    files = [("ft_scan.csv", lambda p: fileio.write_csv(p, ["t", "F_t", "dF_dt"], rows))]
    return {"input": src, "scan": scan, "F_t": scan["F_t"]}, checks, files


def _band_limited(m, n, seed):
    """Random combinations of low-degree polynomials in the vertex coordinates."""
    rng = np.random.default_rng(seed)
    X = m.vertices / max(np.abs(m.vertices).max(), 1e-300)
    basis = [np.ones(m.n_vertices)] + [X[:, i] for i in range(3)]
    basis += [X[:, i] * X[:, j] for i in range(3) for j in range(i, 3)]
    B = np.column_stack(basis)
    return B @ rng.standard_normal((B.shape[1], n))


def cmd_budgets(cfg):
    m, shr, src = load_mesh(cfg)
    diag = validate(m)
    bud = weighted.genus_budgets(m, diagnostics=diag)
    ops = spectrum.assemble(m)
    fs = _band_limited(m, cfg.samples, cfg.seed)
    ls = weighted.log_sobolev_check(m, fs, ops)
    pc = spectrum.poincare_check(ops, fs)
    conf = spectrum.conformal_eigen(m, diag.genus, seed=cfg.seed)
    ident = bud["total_curvature_identity"]
    checks = [
        _check("weighted area bound", bud["weighted_area"]["bound_satisfied"], bud["weighted_area"]["anchor"],
               value=bud["weighted_area"]["value"], bound=bud["weighted_area"]["bound"]),
        _check("area growth bound", bud["area_growth"]["bound_satisfied"], bud["area_growth"]["anchor"]),
        _check("total curvature identity", ident["gap"] <= 1e-9 * max(1.0, abs(ident["integral_B2"])), ident["anchor"], value=ident["gap"]),
        _check("total curvature bound", bud["total_curvature_bound"]["bound_satisfied"], bud["total_curvature_bound"]["anchor"],
               margin=bud["total_curvature_bound"]["margin"]),
        _check("log-Sobolev suite", ls["violations"] == 0, ls["anchor"], violations=ls["violations"]),
        _check("Poincare suite", pc["violations"] == 0, pc["anchor"], violations=pc["violations"]),
        _check("conformal eigenvalue dominates drift", conf["dominates_drift"], conf["anchor"]),
        _check("Yang-Yau bound", conf["bound_satisfied"], conf["anchor"], value=conf["lambda_conformal"], bound=conf["yang_yau_bound"]),
    ]
    report = {
        "input": src,
        "budgets": bud,
        "log_sobolev": {"slack": ls["slack"], "violations": ls["violations"]},
        "poincare": {"slack": pc["slack"], "violations": pc["violations"]},
        "slack": ls["slack"],
        "conformal": conf,
        "bound_satisfied": all(c["passed"] for c in checks),
    }
    return report, checks, []


def cmd_reilly(cfg):
    dom = reilly.parse_domain(cfg.domain)
    field = reilly.make_field(cfg.field)
    level = cfg.level if cfg.level is not None else 6
    rep = reilly.reilly_residual(dom, field, level)
    tol = cfg.tol if cfg.tol is not None else 1e-6
    lim = max(tol, 10 * rep.error_bar)
    return rep.to_dict(), [_check("Reilly residual", abs(rep.residual) <= lim, rep.to_dict()["anchor"], value=rep.residual, tol=lim)], []


def cmd_barrier(cfg):
    spec = reilly.BarrierSpec(cfg.barrier_radius, 1.0)
    rep = reilly.barrier_verify(spec, diameter=cfg.diameter, n_points=cfg.points, seed=cfg.seed)
    return rep, [_check("Lbar w+ <= 0 on the grid", rep["bound_satisfied"], rep["anchor"], value=rep["max_value"])], []


def cmd_solve(cfg):
    if cfg.mesh:
        m, _, src = load_mesh(cfg)
    else:
        kind = cfg.catalog or "sphere"
        if kind != "sphere":
            raise UsageError("solve from the catalog supports only spheres; pass --mesh for other inputs")
        r0 = cfg.radius if cfg.radius is not None else 1.8
        from . import meshes

        lv = cfg.level if cfg.level is not None else 3
        m = meshes.icosphere(r0, lv)
        src = {"source": "icosphere", "radius": r0, "level": lv}
    opts = solver.RelaxOptions(max_iter=cfg.max_iter, threshold=cfg.threshold)
    out, trace = solver.relax(m, opts)
    rad = np.linalg.norm(out.vertices, axis=1)
    rep = {"input": src, "trace": trace.to_dict(), "mean_radius": float(rad.mean()), "energies": trace.energies}
    checks = [
        _check("relaxation converged", trace.converged, trace.to_dict()["anchor"], value=trace.energies[-1], tol=trace.threshold),
        _check("energy strictly decreasing", trace.to_dict()["monotone"]),
    ]
    files = [
        ("trace.csv", lambda p: fileio.write_csv(p, ["iter", "energy", "step"], trace.csv_rows())),
        ("relaxed.off", lambda p: fileio.write_off(out, p)),
    ]
    return rep, checks, files


def _sub(cfg, **over):
    c = RunConfig(cfg.command, {n: getattr(cfg, n) for n in OPTIONS})
    for k, v in over.items():
        setattr(c, k, v)
    return c


def cmd_all(cfg):
    jobs = {
        "catalog": (cmd_catalog, _sub(cfg, catalog=None, mesh=None)),
        "verify-identities-sphere": (cmd_identities, _sub(cfg, catalog="sphere", mesh=None, level=4)),
        "verify-identities-cylinder": (cmd_identities, _sub(cfg, catalog="cylinder", mesh=None, level=4)),
        "verify-identities-plane": (cmd_identities, _sub(cfg, catalog="plane", mesh=None, level=4)),
        "spectrum-sphere": (cmd_spectrum, _sub(cfg, catalog="sphere", mesh=None, level=4)),
        "spectrum-cylinder": (cmd_spectrum, _sub(cfg, catalog="cylinder", mesh=None, level=4)),
        "growth-cylinder": (cmd_growth, _sub(cfg, catalog="cylinder", mesh=None, level=2, radii=_parse_range("2:8:0.5"))),
        "ft-scan-sphere": (cmd_ft_scan, _sub(cfg, catalog="sphere", mesh=None, level=4)),
        "budgets-sphere": (cmd_budgets, _sub(cfg, catalog="sphere", mesh=None, level=4)),
        "reilly-x1": (cmd_reilly, _sub(cfg, field="x1", domain="ball:1", level=6, tol=None)),
        "reilly-xixj": (cmd_reilly, _sub(cfg, field="xixj", domain="ball:2", level=6, tol=1e-5)),
        "barrier": (cmd_barrier, _sub(cfg)),
        "solve": (cmd_solve, _sub(cfg, catalog="sphere", mesh=None, radius=1.8, level=3)),
    }
    with ThreadPoolExecutor(max_workers=thread_count()) as ex:
        futs = {name: ex.submit(fn, c) for name, (fn, c) in jobs.items()}
        results = {name: f.result() for name, f in futs.items()}
    report, checks, files = {}, [], []
    for name in jobs:
        rep, chk, fl = results[name]
        report[name] = rep
        checks += [{**c, "name": f"{name}: {c['name']}"} for c in chk]
        files += [(f"{name}/{fn}", w) for fn, w in fl]
    return report, checks, files


COMMANDS = {
    "catalog": cmd_catalog,
    "validate": cmd_validate,
    "verify-identities": cmd_identities,
    "spectrum": cmd_spectrum,
    "growth": cmd_growth,
    "ft-scan": cmd_ft_scan,
    "budgets": cmd_budgets,
    "reilly": cmd_reilly,
    "barrier": cmd_barrier,
    "solve": cmd_solve,
    "all": cmd_all,
}


def thread_count():
    raw = os.environ.get("SHRINKERLAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def run(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = resolve_config(list(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0) and 2
    except (ShrinkerLabError, ValueError, FileNotFoundError, configparser.Error) as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    try:
        report, checks, files = COMMANDS[cfg.command](cfg)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=stderr)
        return 2
    except ConvergenceError as exc:
        print(f"check failed: {exc}", file=stderr)
        return 1
    except ShrinkerLabError as exc:
        simplex = getattr(exc, "simplex", None)
        kind = getattr(exc, "kind", None)
        extra = f" (simplex {[int(i) for i in simplex]})" if simplex is not None and len(simplex) else ""
        print(f"error: {kind + ': ' if kind else ''}{exc}{extra}", file=stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = [c for c in checks if not c["passed"]]
    doc = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config": cfg.to_dict(),
        "report": report,
        "checks": checks,
        "passed": not failed,
    }
    name = cfg.command.replace("-", "_")
    fileio.write_json(doc, out / f"{name}.json")
    for fname, writer in files:
        target = out / fname
        target.parent.mkdir(parents=True, exist_ok=True)
        writer(target)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}", file=stdout)
    if failed:
        print(f"{len(failed)} check(s) failed:", file=stderr)
        for c in failed:
            detail = {k: v for k, v in c.items() if k not in ("name", "passed")}
            print(f"  - {c['name']}: {detail}", file=stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
