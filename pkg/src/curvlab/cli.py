"""Scenario runner: reproducible experiments over the physics modules.

A scenario is a JSON config naming a pipeline kind (evolve, cone,
sphere-suite, identity-suite), its parameters, and output paths. Outputs are
a CSV time/parameter series plus a JSON summary; both embed a digest of the
resolved config so regression baselines stay bound to their configuration.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import catalog
from .evolution import (
    BreakdownMonitors, SliceData, constraint_residuals, lapse_solve,
    monitor_integrand, nk_sup, step, update_monitors,
)
from .fields import Grid3, TensorField


class DiagnosticsSeries:
    """Column-oriented series keyed by a monotone time/parameter column."""

    def __init__(self, key_name="time", metadata=None):
        self.key_name = key_name
        self.columns = {key_name: []}
        self.metadata = metadata or {}

    def append(self, key, **values):
        prev = self.columns[self.key_name]
        if prev and key < prev[-1]:
            raise ValueError("series key must be monotone")
        row_cols = set(self.columns) - {self.key_name}
        if prev and set(values) != row_cols:
            raise ValueError("missing cells: rows must share the same columns")
        self.columns[self.key_name].append(float(key))
        for name, val in values.items():
            self.columns.setdefault(name, []).append(float(val))

    def to_csv(self, path):
        names = [self.key_name] + [c for c in self.columns if c != self.key_name]
        lines = ["# " + json.dumps(self.metadata, sort_keys=True)]
        lines.append(",".join(names))
        n = len(self.columns[self.key_name])
        for i in range(n):
            lines.append(",".join(repr(self.columns[c][i]) for c in names))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path):
        text = Path(path).read_text().strip().splitlines()
        meta = json.loads(text[0][2:]) if text[0].startswith("# ") else {}
        names = text[1 if meta else 0].split(",")
        out = cls(key_name=names[0], metadata=meta)
        out.columns = {n: [] for n in names}
        for line in text[(2 if meta else 1):]:
            for n, v in zip(names, line.split(",")):
                out.columns[n].append(float(v))
        return out


def config_digest(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def exact_catalog(name, grid=None, **params):
    """Initial-data catalog: slices and/or analytic spacetimes by name."""
    if name == "minkowski":
        out = {"spacetime": catalog.minkowski_spacetime()}
        if grid is not None:
            m, k, n = catalog.minkowski_slice(grid)
            out["slice"] = SliceData(m, k, n)
        return out
    if name == "schwarzschild_isotropic":
        mass = params.get("mass", 1.0)
        if mass < 0:
            raise ValueError("mass must be nonnegative")
        out = {"spacetime": catalog.schwarzschild_spacetime(mass)}
        if grid is not None:
            m, k, n, dn = catalog.schwarzschild_slice(grid, mass)
            out["slice"] = SliceData(m, k, n)
            out["lapse_exact"] = n
            out["dlapse_exact"] = dn
        return out
    if name == "perturbed_minkowski":
        eps = params.get("eps", 1e-3)
        mode = tuple(params.get("mode", (1, 0)))
        if not (0 <= eps <= 1e-2):
            raise ValueError("eps out of documented range [0, 1e-2]")
        out = {"spacetime": catalog.weak_wave_spacetime(max(eps, 1e-8))}
        if grid is not None:
            m, k, n = catalog.perturbed_minkowski_slice(grid, eps, mode)
            s = SliceData(m, k, n)
            out["slice"] = s
            out["constraint_residual"] = constraint_residuals(s)
        return out
    raise ValueError(f"unknown catalog entry {name!r}")


def _grid_from_config(cfg):
    return Grid3(tuple(cfg.get("extents", (16, 16, 16))),
                 float(cfg["spacing"]),
                 tuple(cfg.get("origin", (0.0, 0.0, 0.0))),
                 cfg.get("boundary", "periodic"))


def run_evolve(params, rng):
    grid = _grid_from_config(params["grid"])
    data = params.get("data", "minkowski")
    steps = int(params.get("steps", 10))
    cadence = int(params.get("cadence", 1))
    dt = float(params.get("dt", 0.25 * grid.spacing))
    eps = params.get("eps", 1e-3)
    mode = tuple(params.get("mode", (1, 0)))
    mass = params.get("mass", 1.0)

    lapse_dirichlet = None
    provider = None
    if data == "minkowski":
        slc = exact_catalog("minkowski", grid)["slice"]
        frozen = slc
    elif data == "schwarzschild":
        entry = exact_catalog("schwarzschild_isotropic", grid, mass=mass)
        slc = entry["slice"]
        lapse_dirichlet = entry["lapse_exact"]
        frozen = slc
    elif data == "perturbed_minkowski":
        m, k, n = catalog.perturbed_minkowski_slice(grid, eps, mode)
        slc = SliceData(m, k, n)
        frozen = None

        def provider(t):
            mm, kk, nn = catalog.perturbed_minkowski_slice(grid, eps, mode, time=t)
            return SliceData(mm, kk, nn, t)
    else:
        raise ValueError(f"unknown evolve data {data!r}")

    slc = SliceData(slc.metric, slc.curv_k,
                    lapse_solve(slc, tol=1e-10, dirichlet_data=lapse_dirichlet),
                    slc.time)
    series = DiagnosticsSeries("time")
    monitors = BreakdownMonitors()
    from .weyl import electric_magnetic, q_energy_density

    def record(s, mon):
        ham, mom, mx = constraint_residuals(s)
        eb = electric_magnetic(s)
        q = q_energy_density(eb, s.metric)
        energy = float(np.sum(q * s.metric.volume_element) * grid.cell_volume)
        series.append(
            s.time, hamiltonian=ham, momentum=mom, maximal=mx,
            delta2=mon.delta2_accum, nk_integral=mon.nk_integral,
            monitor_integrand=monitor_integrand(s), nk_sup=nk_sup(s),
            sup_inv_lapse=mon.sup_inv_lapse, energy=energy,
            comparability_upper=mon.comparability_envelope[1],
        )

    record(slc, monitors)
    for i in range(steps):
        nxt = step(slc, dt, frozen_exterior=frozen, boundary_provider=provider,
                   lapse_dirichlet=lapse_dirichlet)
        monitors = update_monitors(monitors, slc, dt, next_slc=nxt)
        slc = nxt
        if (i + 1) % cadence == 0:
            record(slc, monitors)
    return series, {"final_time": slc.time, "monitors": {
        "delta2": monitors.delta2_accum, "nk_integral": monitors.nk_integral}}


def run_cone(params, rng):
    from .nullcone import (
        comparison_diagnostics, conjugate_point_detect, exp_map, transport_ricci,
    )

    st = catalog.spacetime_catalog(params.get("spacetime", "minkowski"),
                                   **params.get("spacetime_params", {}))
    vertex = params.get("vertex", [0.0, 0.0, 0.0, 0.0])
    cone = exp_map(st, vertex, directions=params.get("subdivisions", 1),
                   s_max=float(params.get("s_max", 2.0)),
                   tol=float(params.get("tol", 1e-10)),
                   nsamples=int(params.get("nsamples", 200)))
    cone = transport_ricci(cone, st)
    diag = comparison_diagnostics(cone, st)
    conj = conjugate_point_detect(cone)
    series = DiagnosticsSeries("s")
    w_abs = np.abs(cone.w)
    chat = np.sqrt(2.0 * (cone.chi_hat[..., 0] ** 2 + cone.chi_hat[..., 1] ** 2))
    r_proxy = np.sqrt(np.abs(cone.det_jacobian()))
    for j, sv in enumerate(cone.s):
        series.append(sv,
                      max_trchi_dev=float(np.max(w_abs[:, j])),
                      max_chihat=float(np.max(chat[:, j])),
                      r_trchi_dev=float(np.max(r_proxy[:, j] * w_abs[:, j])),
                      parametrix_B_dev=float(np.max(np.abs(cone.B[:, j] - cone.B[:, 0]))))
    summary = {k: v for k, v in diag.items() if not isinstance(v, list)}
    summary["conjugate_points"] = sum(c is not None for c in conj)
    summary["null_norm_drift"] = cone.null_norm_drift
    return series, summary


def run_identity_suite(params, rng):
    from .geometry3 import hodge_identity_residual, scalar_hodge_identity_residual

    series = DiagnosticsSeries("n")
    results = {}
    for n in params.get("resolutions", (16, 32)):
        spacing = 2.0 * np.pi / n
        grid = Grid3((n, n, n), spacing)
        if params.get("metric", "flat") == "flat":
            metric, _, _ = catalog.minkowski_slice(grid)
        else:
            metric = catalog.bump_metric(grid, params.get("amplitude", 0.08),
                                         seed=int(params.get("seed", 7)))
        V = catalog.traceless_test_tensor(grid, metric, seed=int(params.get("seed", 7)) + 2)
        phi = TensorField.from_function(grid, lambda X, Y, Z: np.sin(X) * np.cos(Y))
        r_tensor = hodge_identity_residual(V, metric)
        r_scalar = scalar_hodge_identity_residual(phi, metric)
        series.append(n, hodge_residual=r_tensor, scalar_hodge_residual=r_scalar)
        results[str(n)] = {"tensor": r_tensor, "scalar": r_scalar}
    return series, results


def run_sphere_suite(params, rng):
    from .sphere import (
        LPConfig, SphereField, SphereMetric, SphereTransform, lp_lowpass, lp_project,
    )

    lmax = int(params.get("lmax", 32))
    tr = SphereTransform(lmax)
    met = SphereMetric(tr, radius=float(params.get("radius", 1.0)))
    cfg = LPConfig(moments=int(params.get("moments", 4)),
                   k_range=tuple(params.get("k_range", (-2, 8))))
    coef = rng.normal(size=tr.ncoef)
    f = SphereField.scalar(tr, coef)
    total = f.l2_norm(met) ** 2
    series = DiagnosticsSeries("k")
    acc = lp_lowpass(f, cfg, met).l2_norm(met) ** 2
    for k in range(0, cfg.k_range[1] + 1):
        pk = lp_project(f, k, cfg, met).l2_norm(met) ** 2
        acc += pk
        series.append(k, block_energy=pk, partial_sum_ratio=acc / total)
    return series, {"bessel_ratio": acc / total,
                    "moments_max": max(abs(cfg.moment(k1, k2))
                                       for k1 in range(cfg.N + 1)
                                       for k2 in range(cfg.N + 1 - k1))}


RUNNERS = {
    "evolve": run_evolve,
    "cone": run_cone,
    "identity-suite": run_identity_suite,
    "sphere-suite": run_sphere_suite,
}


def run_scenario(config, out_dir=None, seed=0):
    """Execute one scenario config; returns (series, summary dict)."""
    kind = config.get("kind")
    if kind not in RUNNERS:
        raise ValueError(f"unknown scenario kind {kind!r}")
    params = config.get("parameters", {})
    rng = np.random.default_rng(seed)
    digest = config_digest(config)
    try:
        series, summary = RUNNERS[kind](params, rng)
    except Exception as exc:
        raise RuntimeError(
            f"scenario {config.get('name', '?')!r} failed in monitor: {exc}") from exc
    series.metadata.update({"scenario": config.get("name", kind),
                            "hash": digest, "seed": seed})
    summary = {"name": config.get("name", kind), "hash": digest,
               "seed": seed, "results": summary}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        base = config.get("name", kind)
        series.to_csv(out / f"{base}.csv")
        (out / f"{base}.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return series, summary


def _apply_overrides(config, overrides):
    for ov in overrides or ():
        key, _, val = ov.partition("=")
        node = config
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        try:
            node[parts[-1]] = json.loads(val)
        except json.JSONDecodeError:
            node[parts[-1]] = val
    return config


def main(argv=None):
    ap = argparse.ArgumentParser(prog="curvlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run a scenario config")
    runp.add_argument("config", type=Path)
    runp.add_argument("--seed", type=int, default=0)
    runp.add_argument("--out", type=Path, default=Path("out"))
    runp.add_argument("--override", action="append", default=[],
                      metavar="key=value", help="dotted-path config override")
    args = ap.parse_args(argv)

    config = json.loads(args.config.read_text())
    config = _apply_overrides(config, args.override)
    try:
        series, summary = run_scenario(config, out_dir=args.out, seed=args.seed)
    except RuntimeError as exc:
        print(json.dumps({"status": "error", "detail": str(exc)}), file=sys.stderr)
        return 1
    checks = config.get("assert", {})
    failed = []
    for col, bound in checks.items():
        vals = summary["results"] if col in summary["results"] else series.columns.get(col)
        val = vals if isinstance(vals, float) else (max(map(abs, vals)) if vals else None)
        if val is None or not np.isfinite(val) or val > float(bound):
            failed.append({"monitor": col, "value": val, "bound": bound})
    print(json.dumps({"status": "fail" if failed else "ok",
                      "failed": failed, "summary": summary}, indent=2, default=str))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
