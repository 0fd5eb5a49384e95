"""Command line driver: ``qgspec run <config> -o <dir>`` and ``qgspec list-builtins``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .conditions import DeltaPrime
from .config import CONDITION_SHORTHANDS, DEFAULTS, EXPERIMENTS, POTENTIAL_SHORTHANDS, ConfigError, Scenario, load_scenario
from .eigenfunctions import eigenfunctions, write_samples
from .graph import BUILTINS
from .secular import CertificateError, SecularSystem, Spectrum
from .stats import (
    PreconditionError,
    bipartite_divergence,
    divergence_experiment,
    hadamard_identity_check,
    heat_kernel_diag,
    isospectrality_check,
    local_weyl,
    mean_difference,
    mean_shift_limit,
)
from .stats.common import certificate_line
from .stats.heat import MIN_CUTOFF_TIME, modes_below

EXIT_OK, EXIT_CONFIG, EXIT_CERTIFICATE, EXIT_VERDICT = 0, 2, 3, 4


def fmt(x) -> str:
    return f"{float(x):.17g}"


class Run:
    """Collects CSV tables, report lines and verdicts for one scenario."""

    def __init__(self, scenario: Scenario, outdir: Path, jobs: int, dump: int, plots: bool):
        self.sc = scenario
        self.out = outdir
        self.jobs = jobs
        self.dump = dump
        self.plots = plots
        self.lines: list[str] = []
        self.verdicts: dict[str, bool] = {}
        self.tables: list[tuple[str, list[str]]] = []

    @property
    def q(self):
        return None if self.sc.potential.is_zero else self.sc.potential

    def table(self, name: str, header: list[str], rows):
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([x if isinstance(x, (int, np.integer, str)) else fmt(x) for x in r])
        self.tables.append((name, header))

    def spectrum_csv(self, label: str, spec: Spectrum):
        rows = ((spec.offset + i + 1, v, int(m)) for i, (v, m) in enumerate(zip(spec.values, spec.multiplicity)))
        self.table(f"spectrum_{label}.csv", ["index", "eigenvalue", "multiplicity"], rows)

    def verdict(self, name: str, ok: bool):
        self.verdicts[name] = bool(ok)

    def solve(self, label: str, conditions, q, n=None, window=None) -> tuple[SecularSystem, Spectrum]:
        system = SecularSystem(self.sc.graph, conditions, q)
        spec = system.find_spectrum(n=n, window=window, jobs=self.jobs)
        self.lines.append("certificate " + certificate_line(label, spec))
        return system, spec

    def dump_modes(self, label: str, system: SecularSystem, spec: Spectrum):
        if self.dump > 0 and len(spec):
            funcs = eigenfunctions(system, spec, upto=min(self.dump, len(spec)))
            write_samples(funcs, self.out / f"eigenfunctions_{label}.csv")

    # -- experiments -----------------------------------------------------------

    def spectrum(self):
        k = self.sc.knobs
        window = tuple(k["window"]) if "window" in k else None
        n = None if window else k["n_max"]
        for label, conds in (("A", self.sc.conditions_a), ("B", self.sc.conditions_b)):
            if conds is None:
                continue
            system, spec = self.solve(label, conds, self.q, n=n, window=window)
            self.spectrum_csv(label, spec)
            self.dump_modes(label, system, spec)
            self.lines.append(f"spectrum {label}: {len(spec)} eigenvalues, conditions {conds.describe()}")

    def compare(self):
        k = self.sc.knobs
        n = k["n_max"]
        variant = k["potential_variant"]
        ca, cb = self.sc.conditions_a, self.sc.conditions_b
        _, sa = self.solve("A", ca, self.q, n=n)
        _, sb = self.solve("B", cb, None if variant else self.q, n=n)
        self.spectrum_csv("A", sa)
        self.spectrum_csv("B", sb)
        predicted = None
        if all(isinstance(c, DeltaPrime) and c.beta != 0 for c in ca.conditions + cb.conditions):
            predicted = mean_shift_limit(self.sc.graph, [c.beta for c in ca.conditions],
                                     [c.beta for c in cb.conditions], self.q if variant else None)
        rep = mean_difference(sa, sb, n, predicted)
        self.table("compare.csv", ["N", "cesaro", "predicted", "extrapolated", "bound"], rep.rows())
        self.lines.append(rep.summary())
        if predicted is None:
            self.lines.append("no closed-form limit for these conditions; verdicts skipped")
            return
        scale = abs(predicted) if predicted != 0 else 1.0
        self.verdict("extrapolated limit", abs(rep.extrapolation.limit - predicted) <= k["limit_rtol"] * scale)
        self.verdict(f"raw C({n})", abs(rep.cesaro[-1] - predicted) <= k["raw_rtol"] * scale)

    def weyl(self):
        k = self.sc.knobs
        n = k["n_max"]
        system, spec = self.solve("A", self.sc.conditions_a, self.q, n=n)
        self.spectrum_csv("A", spec)
        rep = local_weyl(system, spec, self.sc.target, n)
        self.table("weyl.csv", ["N", "cesaro", "predicted"], rep.rows())
        self.lines.append(rep.summary())
        self.verdict("local Weyl limit", rep.relative_error <= k["rtol"])
        if rep.dummy_cesaro is not None:
            self.verdict("dummy vertex spectrum", rep.dummy_spectrum_deviation <= 1e-9)
            self.verdict("dummy vertex statistic", rep.dummy_agreement <= 1e-8)

    def heat(self):
        k = self.sc.knobs
        ts = [float(t) for t in k["t"]]
        cutoff = float(k.get("cutoff", MIN_CUTOFF_TIME / min(ts)))
        system = SecularSystem(self.sc.graph, self.sc.conditions_a, self.q)
        funcs, spec = modes_below(system, cutoff, self.jobs)
        self.lines.append("certificate " + certificate_line("spectrum below cutoff", spec))
        self.spectrum_csv("A", spec)
        rows = []
        for t in ts:
            rep = heat_kernel_diag(system, self.sc.target, t, cutoff, modes=(funcs, spec))
            rows.extend(rep.rows())
            self.lines.append(rep.summary())
            if rep.predicted:
                self.verdict(f"heat kernel t={t:g}", rep.relative_error <= k["rtol"])
        self.table("heat.csv", ["t", "value", "scaled", "predicted"], rows)

    def hadamard(self):
        k = self.sc.knobs
        beta = [c.beta for c in self.sc.conditions_a.conditions]
        beta_p = [c.beta for c in self.sc.conditions_b.conditions]
        rows = []
        for n in k["indices"]:
            rep = hadamard_identity_check(self.sc.graph, beta, beta_p, int(n), int(k["nodes"]), self.q,
                                          k["potential_variant"], k["rule"], self.jobs)
            rows.append((rep.index, rep.nodes, rep.rule, rep.direct, rep.quadrature, rep.residual))
            self.lines.append(rep.summary())
            if not rep.aborted:  # a crossing is reported, not judged
                self.verdict(f"Hadamard n={rep.index}", rep.residual <= k["rtol"])
        self.table("hadamard.csv", ["index", "nodes", "rule", "direct", "quadrature", "residual"], rows)

    def isospectral(self):
        k = self.sc.knobs
        rep = isospectrality_check(k["pair"], int(k["n_max"]), float(k["length"]), float(k["beta"]),
                                   self.sc.graph, self.q, self.jobs)
        for label, spec in rep.spectra.items():
            self.spectrum_csv(label, spec)
        self.lines.extend("certificate " + c for c in rep.certificates)
        self.lines.append(rep.summary())
        self.verdict("isospectral", rep.deviation <= k["tol"])

    def _comparison(self, rep):
        for label, spec in rep.spectra.items():
            self.spectrum_csv(label, spec)
        self.lines.extend("certificate " + c for c in rep.certificates)
        self.table("compare.csv", ["N", "cesaro", "predicted", "extrapolated", "bound"], rep.rows())
        self.lines.append(rep.summary())
        for name, ok in rep.verdicts.items():
            self.verdict(name, ok)

    def divergence(self):
        k = self.sc.knobs
        self._comparison(divergence_experiment(self.sc.graph, float(k["beta_prime"]), k["n_grid"], self.q,
                                               k["mirrored"], k["potential_variant"], k["gammas"], self.jobs))

    def bipartite(self):
        k = self.sc.knobs
        self._comparison(bipartite_divergence(self.sc.graph, k["sigma"], k["beta"], k["n_grid"],
                                                        self.q, self.jobs))

    # -- output ----------------------------------------------------------------

    def write_plots(self):
        for name, header in self.tables:
            if len(header) < 2 or name.startswith("hadamard"):
                continue
            stem = name[:-4]
            cols = [i for i, h in enumerate(header[1:], start=2) if h not in ("multiplicity",)]
            plots = ", ".join(f"'{name}' using 1:{c} with linespoints title '{header[c - 1]}'" for c in cols)
            script = (f"set datafile separator ','\nset key autotitle columnhead\n"
                      f"set xlabel '{header[0]}'\nset terminal pngcairo size 900,600\n"
                      f"set output '{stem}.png'\nplot {plots}\n")
            (self.out / f"{stem}.gp").write_text(script)

    def write_report(self, status: int, error: str | None = None):
        head = [f"qgspec {__version__}", f"scenario: {self.sc.source}", f"experiment: {self.sc.experiment}"]
        if self.sc.graph is not None:
            head.append(f"graph: {self.sc.graph.name} ({self.sc.graph.n_vertices} vertices, "
                        f"{self.sc.graph.n_edges} edges)")
        body = list(self.lines)
        if error:
            body.append(f"error: {error}")
        body.extend(f"verdict {k}: {'PASS' if v else 'FAIL'}" for k, v in self.verdicts.items())
        body.append(f"exit status: {status}")
        (self.out / "report.txt").write_text("\n".join(head + [""] + body) + "\n")

    def execute(self) -> int:
        try:
            getattr(self, self.sc.experiment)()
        except CertificateError as exc:
            self.write_report(EXIT_CERTIFICATE, f"certificate failure: {exc}")
            return EXIT_CERTIFICATE
        except PreconditionError as exc:
            self.write_report(EXIT_CONFIG, f"precondition: {exc}")
            return EXIT_CONFIG
        status = EXIT_OK if all(self.verdicts.values()) else EXIT_VERDICT
        if self.plots:
            self.write_plots()
        self.write_report(status)
        return status


def run(config: str | Path, outdir: str | Path, jobs: int = 1, seed: int = 0, dump: int = 0,
        plots: bool = False) -> int:
    """Run one scenario file and return the exit status."""
    try:
        sc = load_scenario(config, seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    status = Run(sc, out, jobs, dump, plots).execute()
    print((out / "report.txt").read_text(), end="")
    return status


def builtins_listing() -> dict:
    return {
        "graphs": {name: doc for name, (_, doc) in BUILTINS.items()},
        "conditions": dict(CONDITION_SHORTHANDS),
        "potentials": dict(POTENTIAL_SHORTHANDS),
        "experiments": {name: DEFAULTS[name] for name in EXPERIMENTS},
    }


def list_builtins(as_json: bool = False) -> str:
    data = builtins_listing()
    if as_json:
        return json.dumps(data, indent=2)
    out = []
    for section, items in data.items():
        out.append(f"{section}:")
        for k, v in items.items():
            out.append(f"  {k:<24} {v}")
    return "\n".join(out)


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qgspec", description="Spectra and spectral statistics of quantum graphs.")
    p.add_argument("--version", action="version", version=f"qgspec {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("config")
    r.add_argument("-o", "--output", required=True, help="output directory")
    r.add_argument("--jobs", type=int, default=1, help="worker threads for root finding and quadrature")
    r.add_argument("--seed", type=int, default=0, help="seed for random potentials without an explicit seed")
    r.add_argument("--dump-eigenfunctions", type=int, default=0, metavar="K",
                   help="write samples of the first K eigenfunctions (spectrum experiment)")
    r.add_argument("--plot-scripts", action="store_true", help="write gnuplot scripts next to the CSV files")
    b = sub.add_parser("list-builtins", help="list graphs, condition and potential shorthands")
    b.add_argument("--json", action="store_true")
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    if args.command == "list-builtins":
        print(list_builtins(args.json))
        return EXIT_OK
    if args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.config, args.output, args.jobs, args.seed, args.dump_eigenfunctions, args.plot_scripts)


if __name__ == "__main__":
    sys.exit(main())
