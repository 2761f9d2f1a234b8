"""Command-line front end.

    thinlayer [--scenario FILE] [--out FILE] [--units internal|V0]
              [--format csv|json] COMMAND [options]

Commands: ``curvature``, ``profile``, ``gauge-check``, ``spectrum``,
``consistency``.  Exit codes: 0 ok, 1 check failed, 2 validation error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from importlib import resources
from typing import Any

import jsonschema
import numpy as np

from thinlayer import __version__
from thinlayer.em import gauge_check, nongauge_test_field, torus_vector_potential, zero_field
from thinlayer.errors import ConvergenceFailure, GaugeViolation, ThinLayerError
from thinlayer.geometry import ChartPoint, builtin_chart, curvature, fundamental_forms
from thinlayer.grid import GridSpec
from thinlayer.potentials import (
    PhysicalScale,
    ThicknessParams,
    energy_unit,
    geometric_potential,
    hprime_coefficients,
    hprime_consistency,
    modified_geometric_potential,
)
from thinlayer.solver import assemble_h0, assemble_hprime, lowest_eigenpairs

EXIT_OK, EXIT_CHECK, EXIT_VALIDATION, EXIT_SOLVER = 0, 1, 2, 3
GAUGE_EXIT_TOL = 1e-6

DEFAULT_SCENARIO: dict[str, Any] = {
    "surface": {"kind": "torus", "a": 10.0, "R0": 15.0},
    "field": {"B0": 0.0, "B1": 0.0},
    "q3": 0.0,
    "grid": {"n1": 64, "n2": 64},
}

REQUIRED_PARAMS = {"plane": (), "cylinder": ("a",), "sphere": ("R",), "torus": ("a", "R0")}
OPTIONAL_PARAMS = {"plane": ("L",), "cylinder": ("L",), "sphere": (), "torus": ()}


class ScenarioError(ThinLayerError):
    """Invalid scenario file or flag combination."""


def _load_schema(name: str) -> dict:
    text = resources.files("thinlayer").joinpath("schemas", name).read_text(encoding="utf-8")
    return json.loads(text)


def _line_of(text: str, path) -> int:
    """Best-effort line number of the JSON key at ``path`` in ``text``."""
    line = 1
    pos = 0
    for key in path:
        if not isinstance(key, str):
            continue
        found = text.find(f'"{key}"', pos)
        if found < 0:
            break
        pos = found
    if pos:
        line = text.count("\n", 0, pos) + 1
    return line


def load_scenario(path: str | None) -> dict:
    scenario = copy.deepcopy(DEFAULT_SCENARIO)
    if path is None:
        return scenario
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(_load_schema("scenario.schema.json"))
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = list(err.absolute_path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            allowed = set(err.schema.get("properties", {}))
            extra = sorted(set(err.instance) - allowed)
            where = where + extra[:1]
            message = f"unknown key {extra[0]!r}" if extra else err.message
        else:
            message = err.message
        loc = "/".join(str(p) for p in where) or "<root>"
        raise ScenarioError(f"{path}:{_line_of(text, where)}: {loc}: {message}")
    if "surface" in data:
        scenario["surface"] = data["surface"]
    for key in ("field", "grid"):
        scenario[key].update(data.get(key, {}))
    for key in ("q3", "units"):
        if key in data:
            scenario[key] = data[key]
    return scenario


def apply_overrides(scenario: dict, args) -> dict:
    s = copy.deepcopy(scenario)
    if args.kind is not None:
        s["surface"] = {"kind": args.kind}
    for name in ("a", "R0", "R", "L"):
        value = getattr(args, name)
        if value is not None:
            s["surface"][name] = value
    for name in ("B0", "B1"):
        value = getattr(args, name)
        if value is not None:
            s["field"][name] = value
    if args.q3 is not None:
        s["q3"] = args.q3
    if args.n1 is not None:
        s["grid"]["n1"] = args.n1
    if args.n2 is not None:
        s["grid"]["n2"] = args.n2
    if args.units is not None:
        s["units"] = args.units
    return s


def validate_scenario(s: dict) -> None:
    surface = s["surface"]
    kind = surface.get("kind")
    if kind not in REQUIRED_PARAMS:
        raise ScenarioError(f"surface.kind: unknown surface {kind!r}")
    allowed = {"kind", *REQUIRED_PARAMS[kind], *OPTIONAL_PARAMS[kind]}
    for key in surface:
        if key not in allowed:
            raise ScenarioError(f"surface.{key}: not a parameter of {kind}")
    for key in REQUIRED_PARAMS[kind]:
        if key not in surface:
            raise ScenarioError(f"surface.{key}: required for {kind}")
    for key, value in surface.items():
        if key != "kind" and not (isinstance(value, (int, float)) and value > 0):
            raise ScenarioError(f"surface.{key}: must be a positive number")
    field = s["field"]
    if kind != "torus" and (field.get("B0", 0) or field.get("B1", 0)):
        raise ScenarioError("field: B0/B1 are only defined for the torus gauge")
    build_chart(s)
    GridSpec(int(s["grid"]["n1"]), int(s["grid"]["n2"]))


def build_chart(s: dict):
    surface = dict(s["surface"])
    kind = surface.pop("kind")
    return builtin_chart(kind, **surface)


def build_field(s: dict):
    B0 = float(s["field"].get("B0", 0.0))
    B1 = float(s["field"].get("B1", 0.0))
    surface = s["surface"]
    if surface["kind"] != "torus":
        return zero_field()
    return torus_vector_potential(surface["a"], surface["R0"], B0, B1)


def _profile_point(kind: str, t: np.ndarray) -> ChartPoint:
    """Chart point along the sampled profile line for parameter ``t``."""
    if kind == "sphere":
        # along the equator; the colatitude chart has no periodic first coordinate
        return ChartPoint(np.full_like(t, math.pi / 2), t)
    return ChartPoint(t, np.zeros_like(t))


def _scenario_hash(s: dict) -> str:
    blob = json.dumps(s, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _fmt(x: float) -> str:
    return f"{x + 0.0:.12g}"  # + 0.0 folds -0.0 into 0.0


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


class Output:
    """Collects the rendered output of one command."""

    def __init__(self, command: str, scenario: dict, fmt: str):
        self.command = command
        self.scenario = scenario
        self.fmt = fmt

    def diagnostics(self, extra=None) -> dict:
        d = {
            "tool": "thinlayer",
            "version": __version__,
            "command": self.command,
            "schema": f"thinlayer.{self.command}/1",
            "scenario_sha256": _scenario_hash(self.scenario),
        }
        d.update(extra or {})
        return d

    def table(self, columns: list[str], rows: list[list[float]], extra=None) -> str:
        if self.fmt == "json":
            return self.document({"columns": columns, "rows": rows}, extra)
        buf = io.StringIO()
        buf.write(f"# tool: thinlayer {__version__}\n")
        buf.write(f"# schema: thinlayer.{self.command}/1\n")
        buf.write(f"# scenario-sha256: {_scenario_hash(self.scenario)}\n")
        buf.write(f"# scenario: {json.dumps(self.scenario, sort_keys=True)}\n")
        for key, value in sorted((extra or {}).items()):
            buf.write(f"# {key}: {value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(float(x)) for x in row])
        return buf.getvalue()

    def document(self, results: dict, extra=None) -> str:
        doc = _clean(
            {"scenario": self.scenario, "results": results, "diagnostics": self.diagnostics(extra)}
        )
        jsonschema.validate(doc, _load_schema("output.schema.json"))
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _units(s: dict, default: str) -> str:
    return s.get("units") or default


def _potential_unit(s: dict, chart, scale: PhysicalScale, default: str):
    units = _units(s, default)
    if units == "V0":
        return "V0", energy_unit(chart.scale, scale)
    return "internal", 1.0


def cmd_curvature(s: dict, samples: int, fmt: str) -> tuple[int, str]:
    chart = build_chart(s)
    scale = PhysicalScale()
    units, unit = _potential_unit(s, chart, scale, "V0")
    t = np.linspace(-math.pi, math.pi, samples)
    curv = curvature(fundamental_forms(chart, _profile_point(chart.kind, t)))
    vg = geometric_potential(curv, scale) / unit
    label = "Vg/V0" if units == "V0" else "Vg"
    rows = [list(r) for r in zip(t, curv.M, curv.K, vg)]
    return EXIT_OK, Output("curvature", s, fmt).table(["theta", "M", "K", label], rows, {"units": units})


def cmd_profile(s: dict, q3_list: list[float], samples: int, fmt: str) -> tuple[int, str]:
    chart = build_chart(s)
    scale = PhysicalScale()
    units, unit = _potential_unit(s, chart, scale, "V0")
    t = np.linspace(-math.pi, math.pi, samples)
    curv = curvature(fundamental_forms(chart, _profile_point(chart.kind, t)))
    cols = [
        modified_geometric_potential(curv, scale, ThicknessParams(q3)) / unit for q3 in q3_list
    ]
    suffix = "/V0" if units == "V0" else ""
    columns = ["theta"] + [f"Vg'(q3={_fmt(q3)}){suffix}" for q3 in q3_list]
    rows = [[ti] + [c[i] for c in cols] for i, ti in enumerate(t)]
    return EXIT_OK, Output("profile", s, fmt).table(columns, rows, {"units": units})


def cmd_gauge_check(s: dict, inject: bool) -> tuple[int, str]:
    chart = build_chart(s)
    grid = GridSpec(int(s["grid"]["n1"]), int(s["grid"]["n2"]))
    field = build_field(s)
    if inject:
        if chart.kind != "torus":
            raise ScenarioError("--inject-nongauge needs a torus surface")
        field = field.combine(1.0, nongauge_test_field(chart.params["a"]), 1.0)
    report = gauge_check(chart, field, grid)
    code = EXIT_CHECK if report.max_div > GAUGE_EXIT_TOL else EXIT_OK
    out = Output("gauge-check", s, "json").document(
        report.as_dict(), {"tolerance": GAUGE_EXIT_TOL, "injected_test_field": inject}
    )
    return code, out


def run_spectrum(s: dict, k: int, with_thickness: bool, symmetrize: bool):
    """Assemble and solve the scenario; returns ``(spectrum, hermiticity)``."""
    chart = build_chart(s)
    grid = GridSpec(int(s["grid"]["n1"]), int(s["grid"]["n2"]))
    scale = PhysicalScale()
    field = build_field(s)
    has_field = bool(s["field"].get("B0", 0) or s["field"].get("B1", 0))
    q3 = float(s.get("q3", 0.0)) if with_thickness else 0.0
    t = ThicknessParams(q3)

    def potential(q1, q2):
        curv = curvature(fundamental_forms(chart, ChartPoint(q1, q2)))
        if with_thickness:
            return modified_geometric_potential(curv, scale, t)
        return geometric_potential(curv, scale)

    H = assemble_h0(chart, grid, field if has_field else None, potential, scale)
    if with_thickness:
        coeffs = hprime_coefficients(
            chart, ChartPoint(*grid.mesh(chart)), field if has_field else None, t, scale
        )
        H = H + assemble_hprime(chart, grid, coeffs)
    return lowest_eigenpairs(H, k, symmetrize=symmetrize), H.hermiticity_deviation()


def cmd_spectrum(s: dict, k: int, with_thickness: bool, symmetrize: bool) -> tuple[int, str]:
    chart = build_chart(s)
    spec, deviation = run_spectrum(s, k, with_thickness, symmetrize)
    units, unit = _potential_unit(s, chart, PhysicalScale(), "internal")
    vals = np.asarray(spec.eigenvalues) / unit
    results = {
        "eigenvalues": [float(v) for v in np.real(vals)],
        "residuals": [float(r) for r in spec.residuals],
        "hermiticity_deviation": deviation,
        "anti_hermitian_norm": spec.anti_hermitian_norm,
        "grid": {"n1": int(s["grid"]["n1"]), "n2": int(s["grid"]["n2"])},
        "units": units,
        "with_thickness": with_thickness,
        "symmetrized": symmetrize,
        "clusters": spec.clusters(),
    }
    if np.iscomplexobj(vals):
        results["eigenvalues_imag"] = [float(v) for v in np.imag(vals)]
    extra = {"method": spec.method, "hermitian_solver": spec.diagnostics["hermitian_solver"]}
    return EXIT_OK, Output("spectrum", s, "json").document(results, extra)


def cmd_consistency(s: dict, n_points: int, seed: int = 0) -> tuple[int, str]:
    surface = s["surface"]
    if surface["kind"] != "torus":
        raise ScenarioError("consistency compares against the torus closed form; use a torus")
    rng = np.random.default_rng(seed)
    pts = np.column_stack(
        [rng.uniform(-math.pi, math.pi, n_points), rng.uniform(0.0, 2 * math.pi, n_points)]
    )
    report = hprime_consistency(
        surface["a"],
        surface["R0"],
        pts,
        float(s["field"].get("B0", 0.0)),
        float(s["field"].get("B1", 0.0)),
        float(s.get("q3", 0.0)),
    )
    return EXIT_OK, Output("consistency", s, "json").document(
        report, {"n_points": n_points, "seed": seed}
    )


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--scenario", default=d, help="JSON scenario file")
    p.add_argument("--out", default=d, help="write output here instead of stdout")
    p.add_argument("--units", choices=["internal", "V0"], default=d)
    p.add_argument("--format", choices=["csv", "json"], default=d)
    for name in ("kind",):
        p.add_argument(f"--{name}", default=d, choices=sorted(REQUIRED_PARAMS))
    for name in ("a", "R0", "R", "L", "B0", "B1", "q3"):
        p.add_argument(f"--{name}", type=float, default=d)
    p.add_argument("--n1", type=int, default=d)
    p.add_argument("--n2", type=int, default=d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thinlayer", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"thinlayer {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        _add_globals(p, suppress=True)
        return p

    p = command("curvature", "M, K and V_g along the profile line")
    p.add_argument("--samples", type=int, default=361)
    p = command("profile", "thickness-modified geometric potential profiles")
    p.add_argument("--samples", type=int, default=361)
    p.add_argument("--q3-list", type=float, nargs="+", default=[-0.5, 0.0, 0.5])
    p = command("gauge-check", "surface Coulomb-gauge divergence over the grid")
    p.add_argument("--inject-nongauge", action="store_true", help="debug: add a non-gauge field")
    p = command("spectrum", "lowest eigenvalues of the surface Hamiltonian")
    p.add_argument("-k", type=int, default=4)
    p.add_argument("--with-thickness", action="store_true")
    p.add_argument("--symmetrize", action="store_true")
    p = command("consistency", "general vs closed-form torus kinetic correction")
    p.add_argument("--n-points", type=int, default=200)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = apply_overrides(load_scenario(args.scenario), args)
        validate_scenario(scenario)
        if args.command == "curvature":
            code, text = cmd_curvature(scenario, args.samples, args.format or "csv")
        elif args.command == "profile":
            code, text = cmd_profile(scenario, args.q3_list, args.samples, args.format or "csv")
        elif args.command == "gauge-check":
            code, text = cmd_gauge_check(scenario, args.inject_nongauge)
        elif args.command == "spectrum":
            code, text = cmd_spectrum(scenario, args.k, args.with_thickness, args.symmetrize)
        else:
            code, text = cmd_consistency(scenario, args.n_points)
    except ConvergenceFailure as exc:
        print(f"thinlayer: solver failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_SOLVER
    except GaugeViolation as exc:
        print(f"thinlayer: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ThinLayerError, ValueError) as exc:
        print(f"thinlayer: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
