"""Batch runner: ``fiberdensity run <config.json>`` and ``fiberdensity suite <dir>``.

Exit codes: 0 when every scenario assertion holds, 2 on an assertion
failure, 1 on a configuration error.  Reports are JSON with a
``"schema": "1"`` header; tables are RFC-4180 CSV.  All randomness comes from
``SeedSequence(seed)``, spawned once per instance.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import avoidance, boxcover, density, envelope, fixtures, localization, obstruction
from .errors import ConfigurationError, FiberDensityError, PreconditionViolation
from .functions import PullbackModule, SampledFunction
from .spaces import FiberedSystem

SCHEMA = "1"
BUNDLED = Path(__file__).with_name("scenarios")
EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2


@dataclass
class Outcome:
    passed: bool
    result: dict
    tables: dict = field(default_factory=dict)     # suffix -> csv text
    texts: dict = field(default_factory=dict)      # suffix -> plain text


def _clean(obj):
    """JSON-safe, deterministic rendering of numpy scalars, fractions and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _streams(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _param(params: dict, key: str, default, kind=None):
    v = params.get(key, default)
    if kind is not None and v is not None:
        try:
            v = kind(v)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"parameter {key!r}: {exc}") from None
    return v


def _eps_list(params, default) -> list[float]:
    eps = params.get("eps", default)
    eps = [eps] if isinstance(eps, (int, float)) else list(eps)
    if not eps or any(not isinstance(e, (int, float)) or e <= 0 for e in eps):
        raise ConfigurationError("eps values must be positive numbers")
    return [float(e) for e in eps]


def _inline_system(fixture: dict) -> tuple[FiberedSystem, PullbackModule | None]:
    system = FiberedSystem.from_json(fixture["system"])
    module = PullbackModule.from_json(fixture["module"], system) if "module" in fixture else None
    return system, module


def _inline_function(doc, system: FiberedSystem) -> SampledFunction:
    spaces = {"X": system.source, "Y": system.target}
    if isinstance(doc, dict) and "values" in doc and "space" not in doc:
        doc = {"space": "X", **doc}
    return SampledFunction.from_json(doc, spaces)


# ----------------------------------------------------------------------
# scenarios


def _corpus(rng, params):
    system = fixtures.random_system(rng, max_x=_param(params, "max_x", 40, int),
                                    max_y=_param(params, "max_y", 10, int))
    broken = params.get("broken")
    if broken:
        module = fixtures.broken_module(rng, system, broken)
    else:
        module = fixtures.dense_module(rng, system, max_dim=_param(params, "max_dim", 12, int),
                                       complex_pairs=bool(params.get("complex", False)))
    make = fixtures.random_complex_function if params.get("complex") else fixtures.random_real_function
    return system, module, make(rng, system.source)


def scenario_localize(cfg, params, seed, tol) -> Outcome:
    tol = 1e-6 if tol is None else tol
    fixture = cfg.get("fixture", {})
    if "system" in fixture:
        system, module = _inline_system(fixture)
        if module is None or "f" not in fixture:
            raise ConfigurationError("inline localize fixture needs 'module' and 'f'")
        cases = [(system, module, _inline_function(fixture["f"], system))]
    else:
        cases = [_corpus(rng, params) for rng in _streams(seed, _param(params, "count", 10, int))]
    rows, passed, tables = [], True, {}
    for k, (system, module, f) in enumerate(cases):
        try:
            rep = localization.localize_distance(f, module)
        except AssertionError as exc:
            rows.append({"instance": k, "status": "assertion-failed", "error": str(exc)})
            passed = False
            continue
        ok = rep.flagged or abs(rep.gap) <= tol * (1 + rep.f_sup_norm)
        passed &= ok
        rows.append({"instance": k, "status": rep.status, "global_distance": rep.global_distance,
                     "sup_fiber_distance": rep.sup_fiber_distance, "gap": rep.gap,
                     "equality_ok": ok, "preflight_failures": rep.preflight.failures()})
        if len(cases) == 1:
            tables["fibers"] = rep.to_csv()
            rows[-1]["report"] = rep.to_json()
    tables["instances"] = _csv(["instance", "status", "global_distance", "sup_fiber_distance", "gap"],
                               [(r["instance"], r["status"], r.get("global_distance", ""),
                                 r.get("sup_fiber_distance", ""), r.get("gap", "")) for r in rows])
    flagged = sum(r["status"] == "hypotheses-violated" for r in rows)
    return Outcome(passed, {"instances": rows, "flagged": flagged, "tolerance": tol}, tables)


def scenario_approximant(cfg, params, seed, tol) -> Outcome:
    eps_values = _eps_list(params, [0.5, 0.1, 0.01])
    rows, passed = [], True
    for k, rng in enumerate(_streams(seed, _param(params, "count", 10, int))):
        _, module, f = _corpus(rng, params)
        rep = localization.localize_distance(f, module)
        if rep.flagged:
            rows.append((k, "", "flagged", "", "", True))
            continue
        for e in eps_values:
            ap = localization.construct_approximant(f, module, e, rep)
            ok = ap.achieved_error <= ap.sup_fiber_distance + e
            passed &= ok
            rows.append((k, e, "ok", ap.achieved_error, ap.sup_fiber_distance, ok))
    header = ["instance", "eps", "status", "achieved_error", "sup_fiber_distance", "bound_ok"]
    return Outcome(passed, {"eps": eps_values, "rows": [dict(zip(header, r)) for r in rows]},
                   {"approximants": _csv(header, rows)})


def scenario_envelope(cfg, params, seed, tol) -> Outcome:
    from .cheb import envelope_feasible

    ladder = sorted(_eps_list(params, [0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 4.0]))
    rows, passed = [], True
    streams = _streams(seed, _param(params, "count", 10, int))
    nest_pairs = [tuple(map(float, p)) for p in params.get("nesting_pairs", [])]
    nesting = []
    for k, rng in enumerate(streams):
        system = fixtures.random_system(rng, max_x=_param(params, "max_x", 12, int),
                                        max_y=_param(params, "max_y", 5, int))
        module = fixtures.dense_module(rng, system, max_dim=_param(params, "max_dim", 8, int))
        h = fixtures.random_real_function(rng, system.source, 0.3)
        mu = system.measure_upstairs
        feas = [envelope_feasible(h, module, mu, e).feasible for e in ladder]
        # once feasible, feasible at every larger eps
        mono = all(b or not a for a, b in zip(feas, feas[1:]))
        passed &= mono
        rows.append((k, " ".join("1" if x else "0" for x in feas), mono))
        if nest_pairs:
            rep = envelope.verify_nesting(module, mu, nest_pairs, [h])
            bad = rep.violations
            passed &= not bad
            nesting.append({"instance": k, "checked": rep.checked, "violations": len(bad)})
    header = ["instance", "feasible_pattern", "monotone"]
    return Outcome(passed, {"ladder": ladder, "rows": [dict(zip(header, r)) for r in rows],
                            "nesting": nesting}, {"monotonicity": _csv(header, rows)})


def _pipeline_instance(rng, params):
    system = fixtures.random_system(rng, max_x=_param(params, "max_x", 10, int),
                                    max_y=_param(params, "max_y", 4, int), min_y=2)
    X = system.source
    vals = np.where(rng.random(len(X)) < 0.5, rng.uniform(0.2, 2.0, len(X)), 0.0)
    if not vals.any():
        vals[0] = 1.0
    phi = envelope.RiemannIntegrableDescriptor(SampledFunction(X, vals.astype(complex)))
    return system, fixtures.full_module(system), phi


def scenario_pipeline(cfg, params, seed, tol) -> Outcome:
    eps_values = _eps_list(params, [1.0, 0.1, 0.01])
    splice = bool(params.get("double_closure", True))
    rows, passed = [], True
    for k, rng in enumerate(_streams(seed, _param(params, "count", 5, int))):
        system, module, phi = _pipeline_instance(rng, params)
        mu = system.measure_upstairs
        for e in eps_values:
            try:
                cert = envelope.main_theorem_pipeline(phi, module, mu, e)
            except FiberDensityError as exc:
                rows.append((k, e, "pipeline", "error", str(exc), False, False))
                passed = False
                continue
            chk = cert.recheck(phi.function)
            budget = cert.ledger.budget_inequality_holds() if cert.ledger else False
            ok = chk.ok and budget
            rows.append((k, e, "pipeline", cert.mass, chk.domination_margin, chk.ok, budget))
            passed &= ok
            if splice:
                try:
                    half = envelope.main_theorem_pipeline(phi, module, mu, e / 2)
                    sp = envelope.double_closure_splice(phi.function, half.m1, half.m2, module, mu, e)
                    sck = sp.recheck(phi.function)
                    rows.append((k, e, "double-closure", sp.mass, sck.domination_margin, sck.ok, True))
                    passed &= sck.ok
                except FiberDensityError as exc:
                    rows.append((k, e, "double-closure", "error", str(exc), False, True))
                    passed = False
    header = ["instance", "eps", "stage", "mass", "domination_margin", "certificate_ok", "budget_ok"]
    return Outcome(passed, {"eps": eps_values, "rows": [dict(zip(header, r)) for r in rows]},
                   {"certificates": _csv(header, rows)})


def scenario_cover(cfg, params, seed, tol) -> Outcome:
    rows, passed = [], True
    fixed_n = params.get("n")
    for k, rng in enumerate(_streams(seed, _param(params, "count", 20, int))):
        space, K, fam = fixtures.random_region(rng, n=fixed_n)
        cover = boxcover.build_cover(space, K, fam)
        v = boxcover.verify_cover(cover, K, fam)
        ok = all(v[c] for c in ("covered", "subordinate", "widths_exact", "complete", "multiplicity_ok"))
        passed &= ok
        rows.append((k, space.n, space.m, str(fam.r_min), cover.k_final, len(cover.boxes),
                     cover.multiplicity, cover.bound, ok))
    header = ["region", "n", "m", "r_min", "level", "boxes", "multiplicity", "bound", "verified"]
    return Outcome(passed, {"thickening": str(boxcover.THICKENING),
                            "rows": [dict(zip(header, r)) for r in rows]}, {"covers": _csv(header, rows)})


def scenario_density(cfg, params, seed, tol) -> Outcome:
    tol = 1e-6 if tol is None else tol
    eps_values = _eps_list(params, [0.5, 0.1])
    N = _param(params, "N", density.DEFAULT_N, int)
    rows, passed = [], True
    for k, rng in enumerate(_streams(seed, _param(params, "count", 3, int))):
        system, module, phi = _pipeline_instance(rng, {"max_x": 6, "max_y": 3})
        mu = system.measure_upstairs
        nu = rng.uniform(0.0, 1.0, len(system.source))
        for e in eps_values:
            cert = envelope.main_theorem_pipeline(phi, module, mu, e)
            rep = density.transfer_convergence(density.MeasureSequence.perturbation(mu, nu, "1/n"),
                                               phi, module, e, N, certificate=cert, tolerance=tol)
            ok = rep.status == "transferred" and rep.bound_ok and rep.triangle_ok
            passed &= ok
            rows.append((k, e, "1/n", rep.status, rep.tail_max_lhs, ok))
        adv = density.transfer_convergence(density.MeasureSequence.perturbation(mu, nu, "parity"),
                                           phi, module, eps_values[0], N, tolerance=tol)
        ok = adv.status == "hypothesis-failure"
        passed &= ok
        rows.append((k, eps_values[0], "parity", adv.status, "", ok))
    header = ["instance", "eps", "rate", "status", "tail_max", "expected"]
    return Outcome(passed, {"N": N, "tail_window": [max(1, N // 2), N], "tolerance": tol,
                            "rows": [dict(zip(header, r)) for r in rows]}, {"transfer": _csv(header, rows)})


def scenario_obstruction(cfg, params, seed, tol) -> Outcome:
    tol = 1e-3 if tol is None else tol
    pairs = params.get("pairs")
    if pairs is None:
        rngs = _streams(seed, _param(params, "count", 5, int))
        pairs = [(round(float(r.uniform(0.2, 3.0)), 6), round(float(r.uniform(0.2, 3.0)), 6)) for r in rngs]
    factor = _param(params, "eps_factor", 0.4, float)
    extra = _param(params, "extra_points", 0, int)
    rows, traces, passed = [], [], True
    for d1, d2 in pairs:
        fx = obstruction.build_fixture(float(d1), float(d2), extra)
        thr = obstruction.infeasibility_threshold(fx, "pullback")
        sep = obstruction.infeasibility_threshold(fx, "separating")
        trace = obstruction.contradiction_replay(fx, factor * (fx.d1 + fx.d2))
        ok = (abs(thr - fx.lp_exact) <= tol and thr >= fx.weak_bound and sep <= 1e-4
              and trace.contradiction and obstruction.verify_trace(trace))
        passed &= ok
        rows.append((fx.d1, fx.d2, thr, fx.lp_exact, fx.weak_bound, sep, ok))
        traces.append(f"# d1 = {fx.d1!r}, d2 = {fx.d2!r}\n" + trace.render())
    header = ["d1", "d2", "threshold", "lp_exact", "weak_bound", "separating_threshold", "ok"]
    return Outcome(passed, {"eps_factor": factor, "rows": [dict(zip(header, r)) for r in rows]},
                   {"thresholds": _csv(header, rows)}, {"trace": "\n".join(traces)})


def scenario_avoidance(cfg, params, seed, tol) -> Outcome:
    fixture = cfg.get("fixture", {})
    if "instances" in fixture:
        insts = [avoidance.AvoidanceInstance.from_json(d) for d in fixture["instances"]]
    else:
        insts = [avoidance.random_instance(rng, kill_probability=_param(params, "kill_probability", 0.1, float))
                 for rng in _streams(seed, _param(params, "count", 100, int))]
    rows, passed = [], True
    for k, inst in enumerate(insts):
        try:
            res = avoidance.find_regular_vector(inst)
            found, v = True, res.v
            margin_ok = all(avoidance.passes_margin(lam, v) for lam in inst.T)
        except PreconditionViolation:
            found, v, margin_ok = False, None, True
        agree = ""
        if len(inst.S) <= 3:
            agree = (avoidance.brute_force_avoidance_oracle(inst) is not None) == found
            passed &= agree
        passed &= margin_ok
        rows.append((k, inst.dimension, len(inst.S), len(inst.T), found,
                     "" if v is None else " ".join(map(str, v)), margin_ok, agree))
    header = ["instance", "dim", "S", "T", "found", "v", "margin_ok", "oracle_agrees"]
    return Outcome(passed, {"rows": [dict(zip(header, r)) for r in rows]}, {"avoidance": _csv(header, rows)})


def scenario_badset(cfg, params, seed, tol) -> Outcome:
    eps = _param(params, "eps", 0.5, float)
    dims = params.get("n", [1, 2])
    dims = [dims] if isinstance(dims, int) else list(dims)
    rows, passed = [], True
    for k, rng in enumerate(_streams(seed, _param(params, "count", 4, int))):
        n = int(dims[k % len(dims)])
        fx = fixtures.bad_set_fixture(rng, n=n, eps=eps, grid=32 if n == 1 else 16)
        rep = density.verify_bad_set_estimates(fx)
        ok = rep.passed and not rep.input_violations
        passed &= ok
        rows.append((k, n, "clean", fx.N, rep.mass, rep.majorant_mass, rep.rejected_set or "", ok))
        if k < _param(params, "tampered", 1, int):
            for kind in fixtures.TAMPER_KINDS:
                bad = density.verify_bad_set_estimates(fixtures.tamper_bad_set(fx, kind))
                ok = bad.rejected_set == kind
                passed &= ok
                rows.append((k, n, kind, fx.N, bad.mass, bad.majorant_mass, bad.rejected_set or "", ok))
    header = ["fixture", "n", "variant", "regions", "mass", "majorant_mass", "rejected_set", "expected"]
    return Outcome(passed, {"eps": eps, "rows": [dict(zip(header, r)) for r in rows]},
                   {"estimates": _csv(header, rows)})


SCENARIOS = {
    "localize": scenario_localize,
    "approximant": scenario_approximant,
    "envelope": scenario_envelope,
    "pipeline": scenario_pipeline,
    "cover": scenario_cover,
    "density": scenario_density,
    "obstruction": scenario_obstruction,
    "avoidance": scenario_avoidance,
    "badset": scenario_badset,
}


# ----------------------------------------------------------------------
# run / suite


def load_config(path: Path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    if cfg.get("scenario") not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {cfg.get('scenario')!r}")
    if not isinstance(cfg.get("seed"), int):
        raise ConfigurationError("config needs an explicit integer 'seed'")
    if not isinstance(cfg.get("parameters", {}), dict):
        raise ConfigurationError("'parameters' must be an object")
    fx = cfg.get("fixture", {})
    if isinstance(fx, str):
        # file reference, relative to the config
        ref = Path(path).parent / fx
        try:
            cfg["fixture"] = json.loads(ref.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"fixture {ref}: {exc}") from None
    elif not isinstance(fx, dict):
        raise ConfigurationError("'fixture' must be an object or a file name")
    return cfg


def run_config(path: Path, out: Path | None = None, seed: int | None = None,
               tolerance: float | None = None) -> tuple[int, Path | None]:
    """Run one config; returns (exit code, report path)."""
    path = Path(path)
    try:
        cfg = load_config(path)
    except ConfigurationError as exc:
        print(f"{path.name}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    seed = cfg["seed"] if seed is None else int(seed)
    params = dict(cfg.get("parameters", {}))
    tol = tolerance if tolerance is not None else params.get("tolerance")
    output = cfg.get("output", {})
    out_dir = Path(out) if out is not None else Path(output.get("dir", "reports"))
    name = output.get("name", path.stem)
    header = {"schema": SCHEMA, "config": path.name, "scenario": cfg["scenario"], "seed": seed,
              "rng": "numpy PCG64, SeedSequence(seed).spawn(count), one stream per instance",
              "parameters": params, "tolerance": tol}
    try:
        outcome = SCENARIOS[cfg["scenario"]](cfg, params, seed, tol)
        code = EXIT_OK if outcome.passed else EXIT_FAIL
        report = {**header, "status": "pass" if outcome.passed else "fail", "result": outcome.result}
    except ConfigurationError as exc:
        print(f"{path.name}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except (AssertionError, FiberDensityError) as exc:
        outcome = Outcome(False, {})
        code = EXIT_FAIL
        report = {**header, "status": "fail", "error": f"{type(exc).__name__}: {exc}"}
    out_dir.mkdir(parents=True, exist_ok=True)
    rpath = out_dir / f"{name}.json"
    rpath.write_text(json.dumps(_clean(report), sort_keys=True, indent=2) + "\n")
    for suffix, text in outcome.tables.items():
        (out_dir / f"{name}_{suffix}.csv").write_text(text, newline="")
    for suffix, text in outcome.texts.items():
        (out_dir / f"{name}_{suffix}.txt").write_text(text)
    return code, rpath


def run_suite(directory: Path, out: Path, seed: int | None = None,
              tolerance: float | None = None) -> int:
    directory, out = Path(directory), Path(out)
    configs = sorted(p for p in directory.glob("*.json")) if directory.is_dir() else []
    if not directory.is_dir():
        print(f"{directory}: not a directory", file=sys.stderr)
        return EXIT_CONFIG
    rows, worst, failing = [], EXIT_OK, []
    for cfg in configs:
        code, rpath = run_config(cfg, out, seed, tolerance)
        status = {EXIT_OK: "pass", EXIT_FAIL: "fail", EXIT_CONFIG: "config-error"}[code]
        rows.append((cfg.name, status, code, "" if rpath is None else rpath.name))
        if code != EXIT_OK:
            failing.append(cfg.name)
        if code == EXIT_FAIL or (code == EXIT_CONFIG and worst == EXIT_OK):
            worst = code
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(_csv(["config", "status", "exit_code", "report"], rows), newline="")
    for name in failing:
        print(f"FAILED {name}", file=sys.stderr)
    return worst


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fiberdensity", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one scenario config")
    r.add_argument("config", type=Path)
    r.add_argument("--out", type=Path, default=None, help="report directory (overrides the config)")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--tolerance", type=float, default=None)
    s = sub.add_parser("suite", help="run every *.json config in a directory")
    s.add_argument("directory", type=Path, nargs="?", default=BUNDLED,
                   help="config directory (default: the bundled scenarios)")
    s.add_argument("--out", type=Path, default=Path("suite_reports"))
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--tolerance", type=float, default=None)
    args = ap.parse_args(argv)
    if args.command == "run":
        code, rpath = run_config(args.config, args.out, args.seed, args.tolerance)
        if rpath is not None:
            print(f"{'pass' if code == EXIT_OK else 'FAIL'}  {rpath}")
        return code
    return run_suite(args.directory, args.out, args.seed, args.tolerance)


if __name__ == "__main__":
    sys.exit(main())
