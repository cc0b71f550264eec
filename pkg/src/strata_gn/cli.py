"""Command-line front end: configuration, orchestration and file output.

One JSON config document drives every subcommand; --set key.path=value
overrides individual entries, so the emitted manifest is always sufficient to
reproduce a run byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .coeffs import (Bathymetry, BottomSingularityError, CoeffTable,
                     bathymetry_from_values, build_coeff_table,
                     cosine_bathymetry, flat_bathymetry, gaussian_bump_bathymetry,
                     residual_report)
from .evolution import (SimConfig, SimulationBlowup, State, derivation_order,
                        energy_Es, make_state, simulate, xs_norm_state)
from .gn_ref import expansion_order
from .grid import Field, PeriodicGrid, field_from_csv
from .params import (ModelParams, RegimeCaps, check_bottom_admissibility,
                     check_depth, check_ellipticity, check_lemma41_sufficient,
                     check_regime_ch, check_regime_sw,
                     check_symmetrizer_positivity)

DEFAULT_CONFIG = {
    "params": {"mu": 0.04, "eps": 0.15, "delta": 1.1, "gamma": 0.2, "beta": 0.4,
               "bo": 15.0, "M": 1.0, "nu0": 0.05,
               "caps": {"mu_max": 0.25, "delta_min": 0.5, "delta_max": 2.0,
                        "bo_min": 1.0, "beta_max": 0.5, "eps_max": 1.0}},
    "grid": {"n": 256, "length": 62.83185307179586},
    "bathymetry": {"kind": "cosine", "amplitude": 0.05, "mode": 1, "base": 0.1},
    "initial": {"kind": "gaussian_pulse", "amplitude": 0.1, "width": 4.0},
    "sim": {"cfl": 0.4, "t_end": None, "snapshot_stride": 10, "s_energy": 2.0,
            "dealias": True, "hypothesis_check_stride": 10},
    "coeffs": {"prime_convention": "dbetab", "bline_n": 513, "quad_tol": 1e-12,
               "ode_constant": 0.0, "b_ref": None, "h0_exclusion_radius": 1e-6},
    "floors": {"h01": 0.05, "h02": 0.05, "h03": 0.05, "h0": 0.05},
    "validate": {"eps_sequence": [0.1, 0.05, 0.025, 0.0125],
                 "mu_sequence": [0.05, 0.025, 0.0125, 0.00625, 0.003125],
                 "probe_flipped_convention": True},
    "output_dir": "out",
    "seed": 0,
}


def _deep_update(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = v
    return out


def _apply_override(cfg: dict, dotted: str):
    key, _, raw = dotted.partition("=")
    if not _:
        raise ValueError(f"--set expects key.path=value, got {dotted!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def load_config(path: str | None, overrides=()) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path:
        with open(path) as fh:
            cfg = _deep_update(cfg, json.load(fh))
    for item in overrides or ():
        _apply_override(cfg, item)
    return cfg


def params_from_config(cfg: dict) -> ModelParams:
    p = dict(cfg["params"])
    caps = RegimeCaps(**p.pop("caps", {}))
    bo = p.get("bo", "inf")
    p["bo"] = math.inf if bo in ("inf", None) else float(bo)
    return ModelParams(caps=caps, **p)


def grid_from_config(cfg: dict) -> PeriodicGrid:
    return PeriodicGrid(int(cfg["grid"]["n"]), float(cfg["grid"]["length"]))


def build_bathymetry(grid: PeriodicGrid, spec: dict) -> Bathymetry:
    kind = spec.get("kind", "flat")
    if kind == "flat":
        return flat_bathymetry(grid, spec.get("level", 0.0))
    if kind == "gaussian_bump":
        return gaussian_bump_bathymetry(grid, spec["amplitude"], spec["width"],
                                        spec.get("center"), spec.get("base", 0.0))
    if kind == "cosine":
        return cosine_bathymetry(grid, spec["amplitude"], spec.get("mode", 1),
                                 spec.get("phase", 0.0), spec.get("base", 0.0))
    if kind == "csv":
        return bathymetry_from_values(grid, field_from_csv(grid, spec["path"]).values,
                                      {"kind": "csv", "path": spec["path"]})
    raise ValueError(f"unknown bathymetry kind {kind!r}")


def build_initial(grid: PeriodicGrid, spec: dict) -> State:
    kind = spec.get("kind", "zero")
    x = grid.nodes
    if kind == "zero":
        return make_state(grid, np.zeros(grid.n), np.zeros(grid.n))
    if kind == "gaussian_pulse":
        x0 = spec.get("center", grid.length / 2)
        z = spec["amplitude"] * np.exp(-((x - x0) / spec["width"]) ** 2)
        return make_state(grid, z, np.zeros(grid.n))
    if kind == "cosine":
        k = 2 * np.pi * spec.get("mode", 1) / grid.length
        z = spec["amplitude"] * np.cos(k * x + spec.get("phase", 0.0))
        v = spec.get("v_amplitude", 0.0) \
            * np.cos(2 * np.pi * spec.get("v_mode", spec.get("mode", 1)) * x / grid.length
                     + spec.get("v_phase", 0.0))
        return make_state(grid, z, v)
    if kind == "csv":
        z = field_from_csv(grid, spec["zeta_path"]).values
        v = field_from_csv(grid, spec["v_path"]).values
        return make_state(grid, z, v)
    raise ValueError(f"unknown initial kind {kind!r}")


def build_table(cfg: dict, params: ModelParams, bathy: Bathymetry) -> CoeffTable:
    c = cfg["coeffs"]
    return build_coeff_table(params, bathy, convention=c["prime_convention"],
                             bline_n=int(c["bline_n"]), quad_tol=float(c["quad_tol"]),
                             ode_constant=float(c["ode_constant"]),
                             b_ref=c.get("b_ref"),
                             h0_exclusion_radius=float(c["h0_exclusion_radius"]))


def write_manifest(cfg: dict, params: ModelParams, table: CoeffTable | None,
                   outdir: Path, extra: dict | None = None):
    manifest = {
        "tool": "strata-gn", "version": __version__,
        "config": cfg, "params": params.to_dict(),
    }
    if table is not None:
        manifest["coeff_metadata"] = {
            "prime_convention": table.prime_convention,
            "ode_reference_point": table.ode_reference_point,
            "ode_constant": table.ode_constant,
            "quad_tol": table.quad_tol,
        }
    manifest.update(extra or {})
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_check(cfg: dict) -> int:
    params = params_from_config(cfg)
    grid = grid_from_config(cfg)
    bathy = build_bathymetry(grid, cfg["bathymetry"])
    state = build_initial(grid, cfg["initial"])
    floors = cfg["floors"]

    reports = [check_regime_sw(params)]
    table = None
    try:
        table = build_table(cfg, params, bathy)
    except BottomSingularityError as exc:
        reports.append(check_bottom_admissibility(
            params, bathy.b.values, cfg["coeffs"]["h0_exclusion_radius"]))
        doc = {"passed": False, "error": str(exc),
               "reports": [r.to_dict() for r in reports]}
        print(json.dumps(doc, indent=2))
        return 1
    reports.append(check_regime_ch(params, table.nu))
    reports.append(check_bottom_admissibility(
        params, bathy.b.values, cfg["coeffs"]["h0_exclusion_radius"]))
    reports.append(check_depth(state, bathy, params, floors["h01"]))
    reports.append(check_ellipticity(state, bathy, table, params, floors["h02"]))
    reports.append(check_symmetrizer_positivity(state, table, params, floors["h03"]))
    reports.append(check_lemma41_sufficient(state, bathy, table, params, floors["h0"]))

    passed = all(r.passed or not r.applicable for r in reports)
    print(json.dumps({"passed": passed, "reports": [r.to_dict() for r in reports]},
                     indent=2))
    return 0 if passed else 1


def cmd_coeffs(cfg: dict) -> int:
    params = params_from_config(cfg)
    grid = grid_from_config(cfg)
    bathy = build_bathymetry(grid, cfg["bathymetry"])
    out = _outdir(cfg)
    try:
        table = build_table(cfg, params, bathy)
    except BottomSingularityError as exc:
        print(json.dumps({"passed": False, "error": f"H0: {exc}"}, indent=2))
        return 1
    with open(out / "coeffs.csv", "w") as fh:
        fh.write(",".join(table.csv_header()) + "\n")
        for row in table.csv_rows():
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    report = residual_report(table)
    with open(out / "residuals.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    write_manifest(cfg, params, table, out)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_simulate(cfg: dict) -> int:
    params = params_from_config(cfg)
    grid = grid_from_config(cfg)
    bathy = build_bathymetry(grid, cfg["bathymetry"])
    state = build_initial(grid, cfg["initial"])
    out = _outdir(cfg)
    table = build_table(cfg, params, bathy)

    sim_cfg = dict(cfg["sim"])
    if sim_cfg.get("t_end") is None:
        sim_cfg["t_end"] = 1.0 / max(params.eps, params.beta, 1e-3)
    floors = cfg["floors"]
    config = SimConfig(t_end=float(sim_cfg["t_end"]), cfl=float(sim_cfg["cfl"]),
                       snapshot_stride=int(sim_cfg["snapshot_stride"]),
                       s_energy=float(sim_cfg["s_energy"]),
                       dealias=bool(sim_cfg["dealias"]),
                       hypothesis_check_stride=int(sim_cfg["hypothesis_check_stride"]),
                       h01=floors["h01"], h02=floors["h02"], h03=floors["h03"])

    def dump(snapshots, diagnostics, aborted, reason=""):
        with open(out / "snapshots.csv", "w") as fh:
            fh.write("t,x,zeta,v\n")
            for st in snapshots:
                for x, z, v in zip(grid.nodes, st.zeta.values, st.v.values):
                    fh.write(f"{float(st.t)!r},{float(x)!r},{float(z)!r},{float(v)!r}\n")
        with open(out / "diagnostics.csv", "w") as fh:
            cols = ["t", "mass", "Es", "Xs", "h1_floor", "h2_floor",
                    "q1_floor", "q2_floor", "Q_floor"]
            fh.write(",".join(cols) + "\n")
            for row in diagnostics:
                fh.write(",".join(repr(float(row[c])) for c in cols) + "\n")
        write_manifest(cfg, params, table, out,
                       {"sim": {"t_end": config.t_end, "aborted": aborted,
                                "abort_reason": reason}})

    try:
        result = simulate(state, bathy, table, params, config)
    except SimulationBlowup as exc:
        last = exc.last_state or state
        dump([last], exc.diagnostics, True, str(exc))
        print(json.dumps({"passed": False, "error": str(exc)}, indent=2))
        return 1
    dump(result.snapshots, result.diagnostics, False)
    print(json.dumps({"passed": True, "steps": len(result.diagnostics),
                      "dt": result.dt}, indent=2))
    return 0


def _validate_jobs(cfg: dict):
    params = params_from_config(cfg)
    grid = grid_from_config(cfg)
    bathy = build_bathymetry(grid, cfg["bathymetry"])
    rng = np.random.default_rng(int(cfg["seed"]))
    x = grid.nodes
    k1 = 2 * np.pi / grid.length
    zeta = 0.35 * np.cos(k1 * x + 1.1) + 0.15 * np.sin(3 * k1 * x)
    v = 0.3 * np.sin(2 * k1 * x + 0.4) + 0.15 * np.cos(k1 * x)
    state = make_state(grid, zeta, v)
    return params, grid, bathy, state, rng


def cmd_validate(cfg: dict, jobs: int = 1) -> int:
    params, grid, bathy, state, _ = _validate_jobs(cfg)
    vcfg = cfg["validate"]
    table = build_table(cfg, params, bathy)

    reports = expansion_order(state, bathy, table, params,
                              tuple(vcfg["eps_sequence"]))
    ccfg = cfg["coeffs"]
    table_opts = dict(bline_n=int(ccfg["bline_n"]), quad_tol=float(ccfg["quad_tol"]),
                      ode_constant=float(ccfg["ode_constant"]), b_ref=ccfg.get("b_ref"))
    reports.append(derivation_order(state, bathy, params,
                                    tuple(vcfg["mu_sequence"]),
                                    convention=ccfg["prime_convention"], **table_opts))
    flipped = None
    if vcfg.get("probe_flipped_convention") and params.beta > 0:
        other = "db" if ccfg["prime_convention"] == "dbetab" else "dbetab"
        flipped = derivation_order(state, bathy, params, tuple(vcfg["mu_sequence"]),
                                   convention=other, **table_opts)

    doc = {"reports": [r.to_dict() for r in reports]}
    if flipped is not None:
        doc["flipped_convention_probe"] = flipped.to_dict()
        doc["flipped_convention_degrades"] = bool(
            flipped.fitted_order < reports[-1].fitted_order - 0.2)
    passed = all(r.passed for r in reports)
    doc["passed"] = passed
    out = _outdir(cfg)
    with open(out / "orders.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0 if passed else 1


def cmd_energy(cfg: dict, snapshot_path: str) -> int:
    params = params_from_config(cfg)
    grid = grid_from_config(cfg)
    bathy = build_bathymetry(grid, cfg["bathymetry"])
    table = build_table(cfg, params, bathy)
    s = float(cfg["sim"]["s_energy"])

    data = np.loadtxt(snapshot_path, delimiter=",", skiprows=1)
    times = np.unique(data[:, 0])
    rows = []
    ref = None
    for t in times:
        chunk = data[data[:, 0] == t]
        if chunk.shape[0] != grid.n:
            raise ValueError(f"snapshot at t={t} has {chunk.shape[0]} rows, "
                             f"grid wants {grid.n}")
        st = make_state(grid, chunk[:, 2], chunk[:, 3], float(t))
        if ref is None:
            ref = st
        rows.append((t, energy_Es(st, ref, table, params, s),
                     xs_norm_state(st, s, params.mu)))
    out = _outdir(cfg)
    with open(out / "energies.csv", "w") as fh:
        fh.write("t,Es,Xs\n")
        for t, es, xs in rows:
            fh.write(f"{float(t)!r},{float(es)!r},{float(xs)!r}\n")
    print(json.dumps({"snapshots": len(rows), "output": str(out / "energies.csv")}))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="strata-gn",
        description="Two-layer internal-wave model over large topography: "
                    "validation, coefficients, simulation and order checks.")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                        help="override a config entry with a dotted path")
    parser.add_argument("--jobs", type=int, default=1,
                        help="max parallel workers for sweep-style commands")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check", "coeffs", "simulate", "validate"):
        sub.add_parser(name)
    p_energy = sub.add_parser("energy")
    p_energy.add_argument("snapshots", help="snapshot CSV (t,x,zeta,v)")

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    jobs = max(1, args.jobs)
    env_cap = os.environ.get("STRATA_GN_THREADS")
    if env_cap:
        jobs = min(jobs, max(1, int(env_cap)))

    try:
        if args.command == "check":
            return cmd_check(cfg)
        if args.command == "coeffs":
            return cmd_coeffs(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "validate":
            return cmd_validate(cfg, jobs)
        if args.command == "energy":
            return cmd_energy(cfg, args.snapshots)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
