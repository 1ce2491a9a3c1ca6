"""Command-line front end: deterministic solve / verify / monodromy / toda
runs driven by JSON configs.

Exit codes: 0 success, 1 runtime failure, 2 obstruction, 64 bad config.
Reports embed the convention block (Wirtinger sign, metric sign,
calibration constants) and contain no timestamps, so identical
(config, seed) pairs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import connections as conn
from . import metrics
from . import solver as slv
from . import toda as toda_mod
from .fields import Grid2D, QuadraticDifferential, ScalarField, read_field_csv, write_field_csv

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_OBSTRUCTION = 2
EXIT_CONFIG = 64


class ConfigError(ValueError):
    pass


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _grid_from(cfg, resolution_override=None):
    dom = cfg.get("domain")
    if not isinstance(dom, dict):
        raise ConfigError("config needs a 'domain' object")
    kind = dom.get("kind")
    n = int(resolution_override or dom.get("resolution", 129))
    if n < 17:
        raise ConfigError(f"resolution must be >= 17, got {n}")
    if kind == "torus":
        return Grid2D.torus(n, tuple(dom.get("lengths", (1.0, 1.0))))
    if kind == "rectangle":
        return Grid2D.rectangle(n, tuple(dom.get("lengths", (1.0, 1.0))),
                                tuple(dom.get("origin", (0.0, 0.0))))
    if kind == "disk-inscribed":
        return Grid2D.disk_inscribed(n, float(dom.get("radius", 0.7)))
    raise ConfigError(f"unknown domain kind {kind!r}")


def _t_from(cfg):
    eq = cfg.get("equation", {})
    tspec = eq.get("t", {"constant": [0.0, 0.0]})
    if "constant" in tspec:
        re, im = tspec["constant"]
        return QuadraticDifferential.constant(complex(re, im))
    if "polynomial" in tspec:
        return QuadraticDifferential.polynomial(
            [complex(re, im) for re, im in tspec["polynomial"]])
    raise ConfigError("equation.t needs 'constant' or 'polynomial'")


def _variant_from(cfg):
    name = cfg.get("equation", {}).get("variant")
    try:
        return slv.EquationVariant(name)
    except ValueError as exc:
        raise ConfigError(f"unknown equation variant {name!r}") from exc


def _lambdas_from(cfg):
    lams = [complex(re, im) for re, im in
            cfg.get("checks", {}).get("lambdas", [[1, 0], [0.5, 0], [2, 0], [0, 1], [1, 1]])]
    if any(l == 0 for l in lams):
        raise ConfigError("lambda list must exclude 0")
    return lams


def _initial_field(cfg, grid, t, rng):
    spec = cfg.get("solver", {}).get("initial", "default")
    boundary = cfg.get("solver", {}).get("boundary")
    if spec == "default":
        phi0 = slv.default_initial_guess(grid, t)
    elif isinstance(spec, dict) and "constant" in spec:
        phi0 = ScalarField.constant(grid, float(spec["constant"]))
    elif isinstance(spec, dict) and "random" in spec:
        amp = float(spec["random"])
        phi0 = ScalarField(grid, rng.uniform(-amp, amp, grid.shape))
    else:
        raise ConfigError(f"unknown solver.initial {spec!r}")
    if grid.periodic or boundary is None:
        return phi0
    bmask = grid.boundary_mask()
    if boundary == "liouville-exact":
        x, y = grid.meshes()
        vals = -2.0 * np.log(1.0 - x ** 2 - y ** 2)
        phi0.values[bmask] = vals[bmask]
    elif isinstance(boundary, dict) and "strip" in boundary:
        spec2 = boundary["strip"]
        tc = complex(*spec2.get("t", [1.0, 0.0]))
        bc = tuple(spec2.get("bc", (0.0, 0.0)))
        length = grid.hx * (grid.nx - 1)
        profile = slv.strip_ode_oracle(tc, length, bc)
        x, _ = grid.meshes()
        vals = profile(x - grid.origin[0])
        phi0.values[bmask] = vals[bmask]
    elif isinstance(boundary, dict) and "constant" in boundary:
        phi0.values[bmask] = float(boundary["constant"])
    else:
        raise ConfigError(f"unknown solver.boundary {boundary!r}")
    return phi0


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _out_dir(cfg, args):
    out = Path(args.out or cfg.get("output", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------ solve


def cmd_solve(cfg, args):
    grid = _grid_from(cfg, args.resolution_override)
    t = _t_from(cfg)
    variant = _variant_from(cfg)
    seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    rng = np.random.default_rng(seed)
    opts = cfg.get("solver", {})
    out = _out_dir(cfg, args)

    phi0 = _initial_field(cfg, grid, t, rng)
    try:
        report = slv.newton_solve(phi0, t, variant,
                                  tol=float(opts.get("tol", 1e-10)),
                                  max_iter=int(opts.get("max_iter", 40)))
    except slv.ObstructionError as exc:
        payload = {"status": "obstructed", "iterations": 0, "residual_sup": None,
                   "eigen_min": None, "inequality_ok": None, "obstruction": True,
                   "message": str(exc), "conventions": metrics.conventions()}
        _write_json(out / "solve_report.json", payload)
        print(f"obstruction: {exc}", file=sys.stderr)
        return EXIT_OBSTRUCTION
    except (slv.SingularJacobianError, slv.NoConvergenceError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_FAIL

    write_field_csv(out / "phi.csv", report.phi)
    payload = report.to_json_dict()
    payload["conventions"] = metrics.conventions()
    payload["seed"] = seed
    _write_json(out / "solve_report.json", payload)
    print(f"status={report.status} iterations={report.iterations} "
          f"residual_sup={report.residual_sup:.3e}")
    return EXIT_OK if report.converged else EXIT_FAIL


# ----------------------------------------------------------------- verify


def _families_for(variant, phi, t):
    if variant == slv.EquationVariant.SINH:
        return {tag: conn.build_family(phi, t, tag) for tag in ("sg1", "sg2")}
    return {"cosh": conn.build_family(phi, t, "cosh")}


def _verify_one(phi, t, variant, lambdas, rng, n_points, l_max):
    checks = {}
    grid = phi.grid
    fams = _families_for(variant, phi, t)
    interior = grid.interior_mask()

    for tag, fam in fams.items():
        sweep = conn.lambda_flatness_sweep(fam, lambdas)
        checks[f"flatness[{tag}]"] = {
            "value": max(sweep["lambda_sup"].values()),
            "per_lambda": sweep["lambda_sup"],
            "coefficients": {str(k): v for k, v in sweep["coefficient_sup"].items()},
        }
        lam_pm2 = max(sweep["coefficient_sup"][2], sweep["coefficient_sup"][-2])
        checks[f"flatness_lam_pm2[{tag}]"] = {"value": lam_pm2, "tol": 1e-14,
                                              "pass": lam_pm2 <= 1e-14}
        defect = max(conn.reality_check(fam, _random_lambda(rng)) for _ in range(10))
        checks[f"reality[{tag}]"] = {"value": defect, "tol": 1e-12, "pass": defect <= 1e-12}
        deg = conn.degeneracy_check(fam)
        checks[f"degeneracy[{tag}]"] = {"value": deg["max_abs_det"], "tol": 1e-14,
                                        "pass": deg["max_abs_det"] <= 1e-14,
                                        "commutator_sup": deg["commutator_sup"]}
        if tag in ("sg1", "sg2"):
            d = conn.su11_check(fam, 1.0)
            checks[f"su11[{tag}]"] = {"value": d, "tol": 1e-12, "pass": d <= 1e-12}

    # metric identities from the matching direct sampler
    mvariant = "sinh" if variant == slv.EquationVariant.SINH else "cosh"
    induced = metrics.metric_direct(phi, t, mvariant, "induced")
    literal = metrics.metric_direct(phi, t, mvariant, "literal")
    xs, ys = grid.x(), grid.y()
    margin = 0.15 * (xs[-1] - xs[0])
    worst_curv = 0.0
    worst_geo = 0.0
    for _ in range(n_points):
        x = rng.uniform(xs[0] + margin, xs[-1] - margin) if not grid.periodic \
            else rng.uniform(xs[0], xs[-1])
        y = rng.uniform(ys[0] + margin, ys[-1] - margin) if not grid.periodic \
            else rng.uniform(ys[0], ys[-1])
        l = rng.uniform(-l_max, l_max)
        worst_curv = max(worst_curv, metrics.curvature_identity_defect(induced, (x, y, l)))
        worst_geo = max(worst_geo, metrics.geodesic_defect(induced, (x, y), [l]))
    curv_tol = 5e-3  # single-resolution field; Richardson across solves tightens to 1e-4
    checks["curvature_identity"] = {"value": worst_curv, "tol": curv_tol,
                                    "pass": worst_curv <= curv_tol}
    checks["geodesic"] = {"value": worst_geo, "tol": 1e-5, "pass": worst_geo <= 1e-5}

    coarse = Grid2D.rectangle((min(grid.nx, 17), min(grid.ny, 17)),
                              ((grid.nx - 1) * grid.hx, (grid.ny - 1) * grid.hy),
                              grid.origin) if not grid.periodic else \
        Grid2D.torus((min(grid.nx, 16), min(grid.ny, 16)),
                     (grid.nx * grid.hx, grid.ny * grid.hy))
    forms = metrics.fundamental_forms(literal, coarse)
    tv = slv.t_values(t, coarse)
    tfield = t.evaluate(coarse).values if hasattr(t, "evaluate") else \
        np.full(coarse.shape, complex(t))
    b_expect = np.empty(coarse.shape + (2, 2))
    b_expect[..., 0, 0] = 2 * tfield.real
    b_expect[..., 1, 1] = -2 * tfield.real
    b_expect[..., 0, 1] = b_expect[..., 1, 0] = -2 * tfield.imag
    bdev = float(np.abs(forms.b - b_expect).max())
    mindef = forms.minimality_defect()
    checks["second_form_matches_t"] = {"value": bdev, "tol": 1e-6, "pass": bdev <= 1e-6}
    checks["minimality"] = {"value": mindef, "tol": 1e-8, "pass": mindef <= 1e-8}

    if mvariant == "cosh":
        fam = fams["cosh"]
        mfc = metrics.metric_from_connection(fam, -1.0, 1.0)
        worst = 0.0
        for _ in range(20):
            i = int(rng.integers(1, grid.nx - 1))
            j = int(rng.integers(1, grid.ny - 1))
            l = rng.uniform(-1.0, 1.0)
            worst = max(worst, float(np.abs(mfc(xs[i], ys[j], l)
                                            - induced(xs[i], ys[j], l)).max()))
        checks["cross_construction"] = {"value": worst, "tol": 1e-8, "pass": worst <= 1e-8}
        gauged = conn.gauge_transform_u1(fam, rng.uniform(0, 2 * np.pi))
        mg = metrics.metric_from_connection(gauged, -1.0, 1.0)
        i = int(rng.integers(1, grid.nx - 1))
        j = int(rng.integers(1, grid.ny - 1))
        gd = float(np.abs(mg(xs[i], ys[j], 0.4) - mfc(xs[i], ys[j], 0.4)).max())
        checks["gauge_invariance"] = {"value": gd, "tol": 1e-12, "pass": gd <= 1e-12}

    return checks


def _random_lambda(rng):
    while True:
        lam = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
        if abs(lam) > 0.2:
            return lam


def cmd_verify(cfg, args):
    out = _out_dir(cfg, args)
    sol = cfg.get("solution")
    if sol is None:
        raise ConfigError("verify needs a 'solution' CSV path (or a list of two)")
    paths = [sol] if isinstance(sol, str) else list(sol)
    for p in paths:
        if not Path(p).exists():
            print(f"missing solution file: {p}", file=sys.stderr)
            return EXIT_FAIL
    t = _t_from(cfg)
    variant = _variant_from(cfg)
    lambdas = _lambdas_from(cfg)
    seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    n_points = int(cfg.get("checks", {}).get("curvature_points", 8))
    l_max = float(cfg.get("checks", {}).get("l_max", 1.0))

    results = {}
    sups = []
    for k, p in enumerate(paths):
        phi = read_field_csv(p)
        phi = ScalarField(phi.grid, np.real(phi.values))
        rng = np.random.default_rng(seed)
        checks = _verify_one(phi, t, variant, lambdas, rng, n_points, l_max)
        results[f"resolution_{phi.grid.nx}"] = checks
        worst = max(v["value"] for kk, v in checks.items() if kk.startswith("flatness["))
        sups.append((phi.grid.nx, worst))

    payload = {"checks": results, "conventions": metrics.conventions(), "seed": seed}
    if len(sups) == 2:
        (n1, s1), (n2, s2) = sorted(sups)
        order = float(np.log(s1 / s2) / np.log((n2 - 1) / (n1 - 1)))
        payload["flatness_order"] = order
        payload["flatness_order_ok"] = bool(1.7 <= order <= 2.3)
    ok = all(v["pass"] for checks in results.values()
             for v in checks.values() if "pass" in v)
    payload["all_pass"] = bool(ok)
    _write_json(out / "verify_report.json", payload)
    print(f"verify: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


# -------------------------------------------------------------- monodromy


def cmd_monodromy(cfg, args):
    out = _out_dir(cfg, args)
    sol = cfg.get("solution")
    if sol is None or not Path(sol).exists():
        print(f"missing solution file: {sol}", file=sys.stderr)
        return EXIT_FAIL
    phi = read_field_csv(sol)
    phi = ScalarField(phi.grid, np.real(phi.values))
    t = _t_from(cfg)
    variant = _variant_from(cfg)
    lambdas = _lambdas_from(cfg)
    loops = cfg.get("checks", {}).get("loops")
    if not loops:
        raise ConfigError("monodromy needs checks.loops")
    fams = _families_for(variant, phi, t)
    lines = []
    for tag, fam in fams.items():
        for loop in loops:
            for lam in lambdas:
                res = conn.monodromy(fam, lam, loop)
                d = res.to_json_dict()
                d["family"] = tag
                lines.append(json.dumps(d, sort_keys=True))
    with open(out / "monodromy.jsonl", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} monodromy records")
    return EXIT_OK


# ------------------------------------------------------------------- toda


def cmd_toda(cfg, args):
    out = _out_dir(cfg, args)
    tcfg = cfg.get("toda")
    if not isinstance(tcfg, dict):
        raise ConfigError("config needs a 'toda' object")
    mode = tcfg.get("mode", "liouville")
    if mode == "liouville":
        try:
            data = toda_mod.HoloConnectionData(
                tuple(complex(re, im) for re, im in tcfg.get("a", [])),
                tuple(complex(re, im) for re, im in tcfg.get("b", [])))
        except ValueError as exc:
            raise ConfigError(f"bad toda data: {exc}") from exc
        grid = _grid_from(cfg, args.resolution_override)
        try:
            phi, report = toda_mod.liouville_from_holomorphic(data, grid)
        except (toda_mod.RegionError, toda_mod.DecompositionError) as exc:
            print(f"toda generator failed: {exc}", file=sys.stderr)
            return EXIT_FAIL
        write_field_csv(out / "toda_phi.csv", phi)
        payload = report.to_json_dict()
        payload["conventions"] = metrics.conventions()
        _write_json(out / "toda_report.json", payload)
        print(f"residual_sup={report.residual_sup:.3e} flatness_sup={report.flatness_sup:.3e}")
        return EXIT_OK
    if mode == "residual":
        cartan = toda_mod.CartanMatrix(tuple(map(tuple, tcfg.get("cartan", [[2]]))))
        paths = tcfg.get("fields", [])
        if len(paths) != cartan.rank:
            raise ConfigError(f"need {cartan.rank} field files, got {len(paths)}")
        phis = []
        for p in paths:
            if not Path(p).exists():
                print(f"missing field file: {p}", file=sys.stderr)
                return EXIT_FAIL
            f = read_field_csv(p)
            phis.append(ScalarField(f.grid, np.real(f.values)))
        res = toda_mod.toda_residual(phis, cartan)
        sups = []
        for k, r in enumerate(res):
            write_field_csv(out / f"toda_residual_{k}.csv", r)
            sups.append(r.sup(r.grid.interior_mask()))
        _write_json(out / "toda_report.json",
                    {"residual_sups": sups, "conventions": metrics.conventions()})
        print("residual sups: " + ", ".join(f"{s:.3e}" for s in sups))
        return EXIT_OK
    raise ConfigError(f"unknown toda mode {mode!r}")


# ----------------------------------------------------------------- report


def cmd_report(cfg, args):
    out = _out_dir(cfg or {}, args)
    merged = {}
    for p in sorted(out.glob("*.json")):
        if p.name == "report.json":
            continue
        with open(p, "r", encoding="utf-8") as fh:
            merged[p.name] = json.load(fh)
    _write_json(out / "report.json",
                {"reports": merged, "conventions": metrics.conventions()})
    print(f"merged {len(merged)} reports")
    return EXIT_OK


# ------------------------------------------------------------------ main


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="gordonlab",
        description="cosh/sinh-Gordon numerical laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "verify", "monodromy", "toda", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None,
                       required=(name != "report"), help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--resolution-override", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config) if args.config else {}
        handler = {"solve": cmd_solve, "verify": cmd_verify,
                   "monodromy": cmd_monodromy, "toda": cmd_toda,
                   "report": cmd_report}[args.command]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
