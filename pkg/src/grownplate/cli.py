"""``grownplate <config> [--mode M] [--out DIR] [--seed N]``.

Every run writes ``manifest.txt`` (echoed config and derived constants),
``report.txt`` (``key = value`` lines) and field CSVs under ``fields/``.
Reports carry no timings, so equal configs and seeds give identical files.

Exit status: 0 success, 1 numerical failure (a module flagged its result),
2 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import _accel
from . import fields as fd
from .airy import airy_reconstruct, boundary_residuals, build_stress, el_residuals
from .config import MODES, ConfigError, RunConfig, load_config
from .growth import (check_co1, check_co2, co1_field, co2_field, flatness_test, h_max,
                     lambda_g, omega_g, scaling_probe)
from .plate3d import gamma_limit_probe, scaling_sweep
from .solver2d import multistart

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class _Run:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.report: list[tuple[str, object]] = []
        self.failures: list[str] = []
        self.fields_dir = cfg.out / "fields"

    def put(self, prefix: str, d: dict):
        for k, v in d.items():
            if "wall_time" in k:
                continue
            self.report.append((f"{prefix}{k}", v))

    def fail(self, msg: str):
        self.failures.append(msg)

    def write_field(self, name: str, columns: dict):
        fd.write_csv(self.fields_dir / f"{name}.csv", self.cfg.grid, columns)

    def growth_fields(self):
        g = self.cfg.growth
        cols = {}
        for name, a in (("eps_g", g.eps), ("kap_g", g.kap)):
            for i in range(3):
                for j in range(3):
                    cols[f"{name}.{i + 1}{j + 1}"] = a[..., i, j]
        self.write_field("growth", cols)

    def state(self):
        """The configured state, or the multistart minimiser."""
        cfg = self.cfg
        if cfg.state is not None:
            self.report.append(("state_source", "config"))
            return cfg.state
        d, rep = multistart(cfg.growth, cfg.material, cfg.solver, cfg.starts)
        self.report.append(("state_source", "solve2d"))
        self.put("solve_", rep.as_dict())
        if not rep.converged:
            self.fail(f"2D minimisation did not converge ({rep.status})")
        return d

    def write_state(self, d):
        self.write_field("state", {"w1": d.w[..., 0], "w2": d.w[..., 1], "v": d.v})

    def guard_h(self, hs):
        hm = h_max(self.cfg.growth)
        bad = [h for h in hs if not h < hm]
        if bad:
            raise ConfigError(f"thickness {bad[0]:g} is not below h_max = {hm:g} "
                              "(growth tensor would degenerate)", path=self.cfg.path)

    # --- modes ---------------------------------------------------------------------

    def check(self):
        g = self.cfg.growth
        c1, c2 = check_co1(g), check_co2(g)
        flat = flatness_test(g)
        self.put("", flat.as_dict())
        self.put("", {"CO1_norm": c1.norm, "CO1_holds": c1.holds,
                      "CO2_norm": c2.norm, "CO2_holds": c2.holds, "h_max": h_max(g)})
        co1 = co1_field(g)
        self.growth_fields()
        self.write_field("conditions", {"co1_1": co1[..., 0], "co1_2": co1[..., 1],
                                        "co2": co2_field(g), "lambda_g": lambda_g(g),
                                        "omega_g": omega_g(g, self.cfg.material)})

    def solve2d(self):
        cfg = self.cfg
        d, rep = multistart(cfg.growth, cfg.material, cfg.solver, cfg.starts)
        self.put("", rep.as_dict())
        if not rep.converged:
            self.fail(f"2D minimisation did not converge ({rep.status})")
        self.write_state(d)
        self.growth_fields()

    def airy(self):
        cfg = self.cfg
        d = self.state()
        st = build_stress(d, cfg.growth, cfg.material)
        res = airy_reconstruct(cfg.grid, st.M)
        self.put("airy_", res.as_dict())
        if not res.compatible:
            self.fail("stress is not representable by an Airy potential within tolerance")
        el = el_residuals(d, res.phi, cfg.growth, cfg.material)
        self.put("el_", el.as_dict())
        bc = boundary_residuals(d, res.phi, cfg.growth, cfg.material)
        self.put("bc_", bc.as_dict())
        self.write_state(d)
        self.write_field("stress", {"M11": st.M[..., 0, 0], "M12": st.M[..., 0, 1],
                                    "M22": st.M[..., 1, 1], "phi": res.phi,
                                    "r1": el.r1, "r2": el.r2})

    def verify3d(self):
        cfg = self.cfg
        self.guard_h(cfg.h_list)
        d = self.state()
        rep = gamma_limit_probe(d, cfg.growth, cfg.material, cfg.h_list, cfg.nz, cfg.sign,
                                cfg.workers)
        self.put("probe_", rep.as_dict())
        for k, r in enumerate(rep.rows()):
            self.put(f"probe_{k}_", r)
        rep.write_csv(cfg.out / "gamma_sweep.csv")
        if not rep.monotone:
            self.fail("e(h) does not decrease before reaching the discretisation floor")
        if not rep.slope >= 0.8:
            self.fail(f"e(h) decays with slope {rep.slope:.3g} < 0.8")
        self.write_state(d)

    def sweep3d(self):
        cfg = self.cfg
        self.guard_h(cfg.h_list)
        d = self.state()
        sw = scaling_sweep(d, cfg.growth, cfg.material, cfg.h_list, cfg.nz, cfg.solver3d,
                           cfg.workers)
        self.put("bounds_", sw.as_dict())
        cols = ["h", "energy", "energy_over_h4", "initial_energy", "iterations", "status"]
        with open(cfg.out / "sweep3d.csv", "w") as fh:
            fh.write(",".join(cols) + "\n")
            for k, r in enumerate(sw.reports):
                row = r.as_dict()
                self.put(f"run_{k}_", row)
                fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")
                if not r.converged:
                    self.fail(f"3D minimisation at h={r.h:g} did not converge ({r.status})")
        if not sw.ok:
            self.fail("min energy / h^4 ratios are not positive and within a factor 3")
        self.write_state(d)

    def scaling(self):
        cfg = self.cfg
        p = scaling_probe(cfg.growth, cfg.gamma, cfg.theta, cfg.scaling_h)
        self.put("", p.as_dict())
        for k, (h, v) in enumerate(p.var_ah_samples):
            self.put(f"var_{k}_", {"h": h, "var_ah": v})

    # --- output --------------------------------------------------------------------

    def manifest(self) -> str:
        cfg = self.cfg
        lines = ["# grownplate run manifest", f"mode = {cfg.mode}", f"seed = {cfg.seed}",
                 f"config = {cfg.path.name}",
                 f"kernels = {'numba' if _accel.USE_NUMBA else 'numpy'}", "", "# config"]
        section = None
        for sec, key, val in cfg.echo:
            if sec != section:
                lines.append(f"[{sec}]")
                section = sec
            lines.append(f"{key} = {val}")
        lines += ["", "# derived"]
        for k, v in cfg.material.constants().items():
            lines.append(f"{k} = {_fmt(v)}")
        lines += [f"hx = {_fmt(cfg.grid.hx)}", f"hy = {_fmt(cfg.grid.hy)}"]
        return "\n".join(lines) + "\n"

    def execute(self) -> int:
        cfg = self.cfg
        self.fields_dir.mkdir(parents=True, exist_ok=True)
        (cfg.out / "manifest.txt").write_text(self.manifest())
        getattr(self, cfg.mode)()
        self.report.append(("failures", len(self.failures)))
        for k, msg in enumerate(self.failures):
            self.report.append((f"failure_{k}", msg))
        text = "".join(f"{k} = {_fmt(v)}\n" for k, v in self.report)
        (cfg.out / "report.txt").write_text(text)
        return EXIT_NUMERIC if self.failures else EXIT_OK


def run(config_path, mode=None, out=None, seed=None, stream=None) -> int:
    """Execute one configured run and return its exit status."""
    stream = stream or sys.stderr
    try:
        cfg = load_config(config_path, mode=mode, out=out, seed=seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        return EXIT_CONFIG
    job = _Run(cfg)
    try:
        status = job.execute()
    except ConfigError as exc:
        print(f"config error: {exc}", file=stream)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=stream)
        return EXIT_NUMERIC
    for msg in job.failures:
        print(f"flagged: {msg}", file=stream)
    print(f"{cfg.mode}: {'ok' if status == EXIT_OK else 'failed'} -> {cfg.out}", file=stream)
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="grownplate",
                                 description="Growth-strained plate solver and verification runs.")
    ap.add_argument("config", help="run configuration file")
    ap.add_argument("--mode", help=f"override [run] mode ({', '.join(MODES)})")
    ap.add_argument("--out", help="output directory (overrides [run] out)")
    ap.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    args = ap.parse_args(argv)
    return run(args.config, args.mode, args.out, args.seed)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
