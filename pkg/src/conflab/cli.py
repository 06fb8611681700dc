"""Command-line front end.

Every command reads an optional JSON scene file, runs one computation and
prints a :class:`Report` as JSON.  Exit status is 0 when every assertion in
the report holds, 1 when one fails and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import presets as P
from . import sphere_identities as S
from .calculus import MapJet, jet, lemma1_report, lemma2_residuals, phi, residual_norms
from .errors import ConfigError, ConflabError, UnknownPreset
from .geometry import ManifoldDescriptor, quadrature_grid, random_points, sphere
from .gridmaps import load_map_grid, perturbed_sample, sample_map, save_map_grid
from .variation import (
    FlowConfig,
    VariationField,
    first_variation,
    first_variation_fd,
    gradient_flow,
    second_variation,
    second_variation_fd,
    stability_spectrum,
)

DEFAULT_TOLERANCES = {
    "residual_sup": 1e-8,
    "first_variation": 1e-4,
    "second_variation": 1e-3,
    "stability_min_eigenvalue": 1e-8,
    "lemma1": 1e-10,
    "lemma2": 1e-12,
    "lemma3": 1e-3,
    "lemma4_a": 1e-5,
    "lemma4_bc": 1e-8,
    "lemma5": 1e-12,
    "field_invariants": 1e-12,
    "thm1_I": 1e-4,
    "thm1_relative": 1e-3,
    "thm2_relative": 1e-4,
    "gamma": 1e-3,
    "matrix_inequality": 1e-12,
    "example_form": 1e-12,
    "stationary": 1e-6,
}

_MANIFOLD = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"kind": {"const": "sphere"}, "dim": {"type": "integer", "minimum": 1}},
            "required": ["kind", "dim"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "circles"},
                "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            },
            "required": ["kind", "radii"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "domain": _MANIFOLD,
        "codomain": _MANIFOLD,
        "map": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {
                        "preset": {"type": "string"},
                        "params": {"type": "object"},
                        "perturbation": {
                            "type": "object",
                            "properties": {
                                "amplitude": {"type": "number", "minimum": 0},
                                "max_mode": {"type": "integer", "minimum": 1},
                                "seed": {"type": "integer", "minimum": 0},
                                "resolution": {
                                    "oneOf": [
                                        {"type": "integer", "minimum": 4},
                                        {"type": "array", "items": {"type": "integer", "minimum": 4}},
                                    ]
                                },
                            },
                            "required": ["amplitude"],
                            "additionalProperties": False,
                        },
                    },
                    "required": ["preset"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"grid_file": {"type": "string"}},
                    "required": ["grid_file"],
                    "additionalProperties": False,
                },
            ]
        },
        "grid": {
            "oneOf": [
                {"type": "integer", "minimum": 4},
                {"type": "array", "items": {"type": "integer", "minimum": 4}, "minItems": 1},
            ]
        },
        "fd": {
            "type": "object",
            "properties": {
                "step_first": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-2},
                "step_second": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-2},
            },
            "additionalProperties": False,
        },
        "tolerances": {
            "type": "object",
            "propertyNames": {"enum": sorted(DEFAULT_TOLERANCES)},
            "additionalProperties": {"type": "number", "minimum": 0},
        },
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["map"],
    "additionalProperties": False,
}


# ---------------------------------------------------------------------------
# scene


@dataclass
class SceneConfig:
    map_spec: dict
    domain: ManifoldDescriptor | None = None
    codomain: ManifoldDescriptor | None = None
    grid: int | tuple[int, ...] | None = None
    step_first: float = 1e-5
    step_second: float = 1e-3
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path = Path(".")) -> "SceneConfig":
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config field {where}: {exc.message}") from None
        grid = doc.get("grid")
        fd = doc.get("fd", {})
        return cls(
            map_spec=doc["map"],
            domain=ManifoldDescriptor.from_dict(doc["domain"]) if "domain" in doc else None,
            codomain=ManifoldDescriptor.from_dict(doc["codomain"]) if "codomain" in doc else None,
            grid=tuple(grid) if isinstance(grid, list) else grid,
            step_first=fd.get("step_first", 1e-5),
            step_second=fd.get("step_second", 1e-3),
            tolerances={**DEFAULT_TOLERANCES, **doc.get("tolerances", {})},
            seed=doc.get("seed", 0),
            base_dir=base_dir,
        )

    @classmethod
    def load(cls, path) -> "SceneConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def build_map(self):
        spec = self.map_spec
        if "grid_file" in spec:
            path = self.base_dir / spec["grid_file"]
            if not path.is_file():
                raise ConfigError(f"map.grid_file: {path} does not exist")
            f = load_map_grid(path)
        else:
            try:
                f = P.make_preset(spec["preset"], spec.get("params", {}))
            except UnknownPreset as exc:
                raise ConfigError(f"map.preset: unknown preset {exc.args[0]!r}") from None
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"map.params: {exc}") from None
            pert = spec.get("perturbation")
            if pert is not None:
                if f.domain.is_sphere:
                    raise ConfigError("map.perturbation: needs a circle-product domain")
                res = pert.get("resolution", self.grid or 8)
                f = perturbed_sample(f, res, pert["amplitude"], pert.get("max_mode", 1), pert.get("seed", 0))
        for label, want, got in (("domain", self.domain, f.domain), ("codomain", self.codomain, f.codomain)):
            if want is not None and want != got:
                raise ConfigError(f"{label}: config says {want} but the map has {got}")
        return f

    def quadrature(self, M: ManifoldDescriptor):
        return quadrature_grid(M, self.grid if self.grid is not None else default_resolution(M))

    def echo(self) -> dict:
        return {
            "map": self.map_spec,
            "domain": self.domain.to_dict() if self.domain else None,
            "codomain": self.codomain.to_dict() if self.codomain else None,
            "grid": list(self.grid) if isinstance(self.grid, tuple) else self.grid,
            "fd": {"step_first": self.step_first, "step_second": self.step_second},
            "tolerances": dict(sorted(self.tolerances.items())),
            "seed": self.seed,
        }


def default_resolution(M: ManifoldDescriptor) -> int:
    if not M.is_sphere:
        return 16 if M.dim <= 2 else 8
    return {1: 32, 2: 16, 3: 10}.get(M.dim, 6)


# ---------------------------------------------------------------------------
# report


@dataclass
class Report:
    command: str
    identity: str = ""
    inputs: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)
    runtime_ms: float | None = None

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def check(self, name: str, condition) -> bool:
        self.passed[name] = bool(condition)
        return self.passed[name]

    def to_dict(self) -> dict:
        doc = _clean(asdict(self))
        doc["pass"] = self.ok
        if self.runtime_ms is None:
            doc.pop("runtime_ms")
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        doc = json.loads(text)
        doc.pop("pass", None)
        return cls(**doc)


def _clean(obj):
    """JSON-safe copy: numpy scalars become Python numbers, NaN/inf become None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_csv(path: Path, rows: list[dict]):
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


# ---------------------------------------------------------------------------
# commands


def _scene(args) -> SceneConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    scene = SceneConfig.load(args.config)
    if args.seed is not None:
        scene.seed = args.seed
    return scene


def _optional_scene(args, default_preset: str, params: dict | None = None) -> SceneConfig:
    if args.config is not None:
        return _scene(args)
    scene = SceneConfig(map_spec={"preset": default_preset, "params": params or {}})
    if args.seed is not None:
        scene.seed = args.seed
    return scene


def cmd_phi(args, rep: Report):
    scene = _scene(args)
    f = scene.build_map()
    grid = scene.quadrature(f.domain)
    value = phi(f, grid)
    rep.identity = "integral of the squared norm of the trace-free pull-back metric"
    rep.inputs.update(scene.echo(), resolution=list(grid.resolution))
    rep.results["phi"] = value
    rep.check("phi_nonnegative", value >= 0)


def cmd_residual(args, rep: Report):
    scene = _scene(args)
    f = scene.build_map()
    grid = scene.quadrature(f.domain)
    sup, l2 = residual_norms(f, grid)
    tol = scene.tolerances["residual_sup"]
    rep.identity = "Euler-Lagrange residual div sigma_f (zero for stationary maps)"
    rep.inputs.update(scene.echo(), resolution=list(grid.resolution))
    rep.residuals.update(sup=sup, l2=l2)
    rep.check("stationary", sup < tol)


def _random_fields(f, count: int, rng: np.random.Generator, degree: int = 1):
    basis = P.variation_basis(f, degree)
    out = []
    for n in range(count):
        coeffs = rng.standard_normal(len(basis))
        fields = [(c, B) for c, B in zip(coeffs, basis)]

        def rule(x, fields=fields):
            return sum(c * B.rule(x) for c, B in fields)

        out.append(VariationField(f, rule, name=f"random{n}"))
    return out


def cmd_variation(args, rep: Report):
    scene = _scene(args)
    f = scene.build_map()
    grid = scene.quadrature(f.domain)
    rng = np.random.default_rng(scene.seed)
    fields = _random_fields(f, args.fields, rng)
    rows = []
    if args.order == "first":
        rep.identity = "first variation equals -4 times the integral of h(X, div sigma_f)"
        tol = scene.tolerances["first_variation"]
        for X in fields:
            a = first_variation(f, X, grid)
            b = first_variation_fd(f, X, grid, scene.step_first)
            rows.append({"field": X.name, "formula": a, "fd": b, "defect": abs(a - b), "bound": tol * (1 + abs(b))})
    else:
        rep.identity = "second derivative along geodesic deformations equals four times the five-term form"
        tol = scene.tolerances["second_variation"]
        for X in fields:
            terms = second_variation(f, X, X, grid)
            b = second_variation_fd(f, X, grid, scene.step_second)
            rows.append(
                {"field": X.name, **terms.as_dict(), "formula": terms.total, "fd": b,
                 "defect": abs(terms.total - b), "bound": tol * (1 + abs(b))}
            )
    rep.inputs.update(scene.echo(), resolution=list(grid.resolution), order=args.order, fields=args.fields)
    rep.results["table"] = rows
    for row in rows:
        rep.residuals[row["field"]] = row["defect"]
        rep.check(row["field"], row["defect"] <= row["bound"])
    if args.out:
        _write_csv(Path(args.out) / f"variation_{args.order}.csv", rows)


def cmd_stability(args, rep: Report):
    scene = _scene(args)
    f = scene.build_map()
    grid = scene.quadrature(f.domain)
    basis = P.variation_basis(f, args.degree, grid)
    report = stability_spectrum(f, basis, grid)
    rep.identity = "second variation restricted to a finite field basis is nonnegative"
    rep.inputs.update(scene.echo(), resolution=list(grid.resolution), degree=args.degree)
    rep.results.update(report.as_dict())
    rep.check("min_eigenvalue", report.min_eigenvalue >= -scene.tolerances["stability_min_eigenvalue"])
    if args.out:
        _write_csv(Path(args.out) / "spectrum.csv", [{"index": i, "eigenvalue": e} for i, e in enumerate(report.eigenvalues)])


def cmd_flow(args, rep: Report):
    scene = _scene(args)
    f = scene.build_map()
    if f.grid is None:
        if f.domain.is_sphere:
            raise ConfigError("flow needs a circle-product domain")
        f = sample_map(f, scene.grid or 8)
    cfg = FlowConfig(tau=args.tau, steps=args.steps)
    result = gradient_flow(f, cfg)
    phis = result.phi
    rep.identity = "descent along div sigma_f lowers the conformality energy"
    rep.inputs.update(scene.echo(), steps=args.steps, tau=args.tau, resolution=list(f.grid.resolution))
    rep.results.update(
        phi_initial=phis[0],
        phi_final=phis[-1],
        ratio=phis[-1] / phis[0] if phis[0] else 0.0,
        effective_steps=result.effective_steps,
        final_tau=result.tau[-1] if result.tau else args.tau,
        phi=phis,
    )
    rep.residuals["final_residual_sup"] = result.residual[-1] if result.residual else 0.0
    rep.check("monotone", all(b <= a for a, b in zip(phis, phis[1:])))
    if args.out:
        out = Path(args.out)
        _write_csv(out / "flow.csv", result.rows())
        save_map_grid(out / "final_map.json", result.final_map)


def cmd_presets(args, rep: Report):
    rep.identity = "catalog of closed-form maps"
    rep.results["presets"] = P.list_presets()


# ---- checks ---------------------------------------------------------------


def _preset_maps(scene_or_none):
    if scene_or_none is not None:
        f = scene_or_none.build_map()
        return {f.name: f}
    return {name: P.make_preset(name) for name in sorted(P.PRESETS)}


def check_lemma1(args, rep):
    scene = _scene(args) if args.config else None
    seed = args.seed if args.seed is not None else (scene.seed if scene else 0)
    tol = (scene.tolerances if scene else DEFAULT_TOLERANCES)["lemma1"]
    rng = np.random.default_rng(seed)
    rep.identity = "T_f is symmetric and trace-free, (f*h, T_f) = |T_f|^2 = |f*h|^2 - |df|^4 / m"
    for name, f in _preset_maps(scene).items():
        xs = random_points(f.domain, args.points, rng)
        res = lemma1_report(jet(f, xs), f.domain.dim)
        rep.residuals[name] = asdict(res)
        rep.check(name, res.max() < tol)
    rep.inputs.update(points=args.points, seed=seed, tolerance=tol)


def check_lemma2(args, rep):
    scene = _scene(args) if args.config else None
    seed = args.seed if args.seed is not None else (scene.seed if scene else 0)
    tol = (scene.tolerances if scene else DEFAULT_TOLERANCES)["lemma2"]
    rng = np.random.default_rng(seed)
    rep.identity = "sum_j h(Z, df e_j) T_f(W, e_j) = h(Z, sigma_f(W)) and |T_f|^2 = sum_i h(df e_i, sigma_f(e_i))"
    for name, f in _preset_maps(scene).items():
        xs = random_points(f.domain, args.points, rng)
        J = jet(f, xs)
        worst = [0.0, 0.0]
        for n in range(args.points):
            Z = rng.standard_normal(f.codomain.value_dim)
            W = rng.standard_normal(f.domain.dim)
            a, b = lemma2_residuals(MapJet(J.value[n], J.df[n], J.hess[n]), f.domain.dim, Z, W)
            worst = [max(worst[0], a), max(worst[1], b)]
        rep.residuals[name] = {"pairing": worst[0], "norm": worst[1]}
        rep.check(name, max(worst) < tol)
    rep.inputs.update(points=args.points, seed=seed, tolerance=tol)


def check_lemma3(args, rep):
    scene = _optional_scene(args, "azimuth_doubling")
    f = scene.build_map()
    rng = np.random.default_rng(scene.seed)
    tol = scene.tolerances["lemma3"]
    xs = random_points(f.domain, args.points, rng)
    worst = max(S.lemma3_residual(f, x, args.k) for x in xs)
    rep.identity = "pointwise formula for (1/4) Hess |T_f|^2 (Z, Z) with Z a projected field"
    rep.inputs.update(scene.echo(), points=args.points, k=args.k)
    rep.residuals["max"] = worst
    rep.check("lemma3", worst < tol)


_TEST_POLYNOMIALS = {
    "one": lambda y: 1.0 + 0.0 * y[0],
    "last": lambda y: y[-1],
    "quadratic": lambda y: y[0] * y[1] + 2.0 * y[-1] ** 2,
    "cubic": lambda y: y[0] ** 3 - 3.0 * y[0] * y[-1] ** 2 + y[1],
}


def check_lemma4(args, rep):
    m = args.dim
    scene = _scene(args) if args.config else None
    tol = scene.tolerances if scene else DEFAULT_TOLERANCES
    seed = args.seed if args.seed is not None else (scene.seed if scene else 0)
    rng = np.random.default_rng(seed)
    f = scene.build_map() if scene else None
    if f is not None and f.domain != sphere(m):
        raise ConfigError(f"--dim {m} does not match the map domain {f.domain}")
    xs = random_points(sphere(m), args.points, rng)
    worst = {"a": 0.0, "b": 0.0, "c": 0.0}
    for x in xs:
        for u in _TEST_POLYNOMIALS.values():
            r = S.lemma4_check(m, u, x, f)
            worst["a"] = max(worst["a"], r.a)
            worst["b"] = max(worst["b"], r.b)
            if f is not None:
                worst["c"] = max(worst["c"], r.c)
    rep.identity = "projected fields: sum_k Hess(Z_k, Z_k) = Laplacian, sum_k g(v, Z_k) Z_k = v, sum over Z_k of T-weighted pairings = |T_f|^2"
    rep.inputs.update(dim=m, points=args.points, seed=seed, polynomials=sorted(_TEST_POLYNOMIALS))
    rep.residuals.update(worst)
    rep.check("a", worst["a"] < tol["lemma4_a"])
    rep.check("b", worst["b"] < tol["lemma4_bc"])
    if f is not None:
        rep.check("c", worst["c"] < tol["lemma4_bc"])


def check_lemma5(args, rep):
    n = args.dim
    seed = args.seed if args.seed is not None else 0
    xs = random_points(sphere(n), args.points, np.random.default_rng(seed))
    inv = S.projected_fields(sphere(n)).invariants(xs)
    rep.identity = "sum_k h(Z_k, Z_k) = n on S^n, with sum_k phi_k^2 = 1"
    rep.inputs.update(dim=n, points=args.points, seed=seed)
    rep.residuals.update(inv)
    rep.check("norm_sq_sum", inv["norm_sq_sum"] < DEFAULT_TOLERANCES["lemma5"])
    rep.check("phi_sq_sum", inv["phi_sq_sum"] < DEFAULT_TOLERANCES["field_invariants"])


def check_thm1(args, rep):
    scene = _optional_scene(args, "azimuth_doubling")
    f = scene.build_map()
    grid = scene.quadrature(f.domain)
    tol = scene.tolerances
    t = S.theorem1_terms(f, grid, tol["stationary"])
    ph, m = t.phi_value, f.domain.dim
    rep.identity = "terms I-V of the sum of the form over df(Z_k); (4 - m) Phi for stationary maps"
    rep.inputs.update(scene.echo(), resolution=list(grid.resolution))
    rep.results.update(t.as_dict(), stationary_total=t.stationary_total)
    scale = max(ph, 1e-300)
    rep.residuals.update(
        I=abs(t.I), III=abs(t.III + (m - 1) * ph), V=abs(t.V - 3 * ph), IV=abs(t.IV),
    )
    rep.check("I", abs(t.I) <= tol["thm1_I"] * ph + 1e-10)
    rep.check("III", abs(t.III + (m - 1) * ph) <= tol["thm1_relative"] * scale + 1e-10)
    rep.check("V", abs(t.V - 3 * ph) <= tol["thm1_relative"] * scale + 1e-10)
    if t.stationary:
        rep.check("II", abs(t.II) <= tol["thm1_I"] * (1 + ph))
        rep.check("IV", abs(t.IV) <= tol["thm1_I"] * (1 + ph))
    rep.check("no_contradiction", not t.contradiction)


def check_thm2(args, rep):
    scene = _optional_scene(args, "azimuth_doubling")
    f = scene.build_map()
    grid = scene.quadrature(f.domain)
    t = S.theorem2_terms(f, grid)
    n = f.codomain.dim
    tol = scene.tolerances["thm2_relative"]
    rep.identity = "3 Phi - n Phi + Phi = (4 - n) Phi for the pulled-back projected fields"
    rep.inputs.update(scene.echo(), resolution=list(grid.resolution))
    rep.results.update(t.as_dict(), expected_ratio=4 - n)
    defect = abs(t.total - (4 - n) * t.phi_value)
    rep.residuals["total"] = defect
    rep.check("total", defect <= tol * max(abs((4 - n) * t.phi_value), t.phi_value) + 1e-10)


def check_gamma(args, rep):
    scene = _optional_scene(args, "azimuth_doubling")
    f = scene.build_map()
    grid = scene.quadrature(f.domain)
    tol = scene.tolerances["gamma"]
    rep.identity = "int h(nabla df(e_i, Z_k), sigma_f(e_i)) = -int h(df Z_k, div sigma_f) + int phi_k |T_f|^2"
    rep.inputs.update(scene.echo(), resolution=list(grid.resolution))
    for k in range(f.domain.dim + 1):
        g = S.gamma_div_identity(f, k, grid)
        rep.results[f"k{k + 1}"] = {"lhs": g.lhs, "rhs": g.rhs}
        rep.residuals[f"k{k + 1}"] = g.residual
        rep.check(f"k{k + 1}", g.residual < tol * (1 + abs(g.rhs)))


def check_matrix(args, rep):
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    tol = DEFAULT_TOLERANCES["matrix_inequality"]
    rep.identity = "|A|^2 + Tr(A^2) - (2/n)(Tr A)^2 >= 0 for n x n matrices"
    sizes = range(1, args.dim + 1)
    for n in sizes:
        A = rng.uniform(-1, 1, size=(args.samples, n, n))
        vals = np.array([P.matrix_inequality_check(a) for a in A])
        eq_identity = P.matrix_inequality_check(np.eye(n))
        skew = rng.standard_normal((n, n))
        eq_skew = P.matrix_inequality_check(skew - skew.T)
        rep.results[f"n{n}"] = {"min": float(vals.min()), "identity": eq_identity, "antisymmetric": eq_skew}
        rep.check(f"n{n}_nonnegative", vals.min() >= -tol)
        rep.check(f"n{n}_equality", abs(eq_identity) < 1e-12 * n and abs(eq_skew) < 1e-12 * (1 + np.sum(skew**2)))
    rep.inputs.update(max_size=args.dim, samples=args.samples, seed=seed)


def check_example_form(args, rep):
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    ell, k = args.ell, args.k
    tol = DEFAULT_TOLERANCES["example_form"]
    vals = np.array([P.example_quadratic_form(ell, k, rng.uniform(-1, 1, (ell, ell))) for _ in range(args.samples)])
    asserted = k <= 1 and abs(k - 1) <= 0.05
    rep.identity = "quadratic form of the flat-torus scaling map is nonnegative for k <= 1 near 1"
    rep.inputs.update(ell=ell, k=k, samples=args.samples, seed=seed)
    rep.results.update(min=float(vals.min()), asserted=asserted)
    rep.check("zero_matrix", P.example_quadratic_form(ell, k, np.zeros((ell, ell))) == 0)
    if asserted:
        rep.check("nonnegative", vals.min() >= -tol)


CHECKS = {
    "lemma1": check_lemma1,
    "lemma2": check_lemma2,
    "lemma3": check_lemma3,
    "lemma4": check_lemma4,
    "lemma5": check_lemma5,
    "thm1-terms": check_thm1,
    "thm2-terms": check_thm2,
    "gamma": check_gamma,
    "matrix-ineq": check_matrix,
    "example-form": check_example_form,
}


def cmd_check(args, rep: Report):
    rep.command = f"check {args.name}"
    CHECKS[args.name](args, rep)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scene file")
    common.add_argument("--seed", type=int, help="overrides the scene seed")
    common.add_argument("--out", help="directory for CSV tables and map grids")
    common.add_argument("--timing", action="store_true", help="include runtime_ms in the report")

    parser = argparse.ArgumentParser(prog="conflab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("phi", parents=[common], help="integrate |T_f|^2").set_defaults(run=cmd_phi)
    sub.add_parser("residual", parents=[common], help="norms of div sigma_f").set_defaults(run=cmd_residual)

    p = sub.add_parser("variation", parents=[common], help="formula against finite differences")
    p.add_argument("order", choices=["first", "second"])
    p.add_argument("--fields", type=int, default=3)
    p.set_defaults(run=cmd_variation)

    p = sub.add_parser("stability", parents=[common], help="spectrum on a finite field basis")
    p.add_argument("--degree", type=int, default=2)
    p.set_defaults(run=cmd_stability)

    p = sub.add_parser("flow", parents=[common], help="gradient descent on a grid map")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--tau", type=float, default=0.05)
    p.set_defaults(run=cmd_flow)

    p = sub.add_parser("check", parents=[common], help="identity residual suites")
    p.add_argument("name", choices=sorted(CHECKS))
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--k", type=float, default=None, help="field index (lemma3) or scaling factor (example-form)")
    p.add_argument("--ell", type=int, default=3)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("presets", parents=[common], help="preset catalog")
    p.add_argument("action", choices=["list"])
    p.set_defaults(run=cmd_presets)
    return parser


_CHECK_DEFAULTS = {
    "lemma1": {"points": 100},
    "lemma2": {"points": 100},
    "lemma3": {"points": 20, "k": 0},
    "lemma4": {"points": 5, "dim": 2},
    "lemma5": {"points": 100, "dim": 3},
    "matrix-ineq": {"dim": 6, "samples": 10000},
    "example-form": {"k": 0.97, "samples": 1000},
}


def _apply_check_defaults(args):
    for key, value in _CHECK_DEFAULTS.get(args.name, {}).items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    if args.name == "lemma3":
        args.k = int(args.k)


def _configure_threads() -> int | None:
    raw = os.environ.get("CONFLAB_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CONFLAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"CONFLAB_THREADS must be a positive integer, got {raw!r}")
    flags = os.environ.get("XLA_FLAGS", "")
    if "intra_op_parallelism_threads" not in flags:
        os.environ["XLA_FLAGS"] = f"{flags} --xla_cpu_multi_thread_eigen=false intra_op_parallelism_threads={n}".strip()
    return n


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    rep = Report(command=args.command)
    start = time.perf_counter()
    try:
        threads = _configure_threads()
        if threads is not None:
            rep.inputs["threads"] = threads
        if args.command == "check":
            _apply_check_defaults(args)
        args.run(args, rep)
    except (ConfigError, jsonschema.ValidationError) as exc:
        print(f"conflab: config error: {exc}", file=sys.stderr)
        return 2
    except ConflabError as exc:
        rep.results["error"] = f"{type(exc).__name__}: {exc}"
        rep.passed["completed"] = False
    if args.timing:
        rep.runtime_ms = (time.perf_counter() - start) * 1e3
    stdout.write(rep.to_json() + "\n")
    return 0 if rep.ok else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
