"""Configuration-driven runner: single solves, convergence ladders and benches.

Usage::

    hhx run --config run.json [--out DIR] [--threads N]

The JSON schema is :data:`SCHEMA`; unknown keys are rejected and every schema
violation is reported before exiting with status 2.  Exit status is 0 only if
every requested row succeeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

CSV_HEADER = ["omega", "h", "npw", "eps", "ray_mode", "rel_l2_error", "gmres_iters",
              "t_babich_s", "t_lowfreq_s", "t_nmla_s", "t_rayfem_s", "t_total_s"]

EXIT_OK, EXIT_FAILED_ROWS, EXIT_CONFIG = 0, 1, 2

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

_MEDIUM = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"enum": ["homogeneous", "constant_gradient", "gaussian_bump", "velocity_file"]}},
    "allOf": [
        {"if": {"properties": {"kind": {"const": "homogeneous"}}},
         "then": {"properties": {"kind": {}, "c0": _pos}, "additionalProperties": False}},
        {"if": {"properties": {"kind": {"const": "constant_gradient"}}},
         "then": {"properties": {"kind": {}, "c0": _pos, "G0": _point, "x0": _point},
                  "additionalProperties": False}},
        {"if": {"properties": {"kind": {"const": "gaussian_bump"}}},
         "then": {"properties": {"kind": {}, "alpha": _pos, "beta": _pos, "sigma": _pos, "x1": _point,
                                 "amplitude": _num}, "additionalProperties": False}},
        {"if": {"properties": {"kind": {"const": "velocity_file"}}},
         "then": {"required": ["path"],
                  "properties": {"kind": {}, "path": {"type": "string"},
                                 "sigma": {"type": "number", "minimum": 0}},
                  "additionalProperties": False}},
    ],
}

_SOLVER = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "method": {"enum": ["direct", "gmres"]},
        "rel_tolerance": _pos,
        "restart": {"type": "integer", "minimum": 1},
        "max_iterations": {"type": "integer", "minimum": 1},
        "preconditioner": {"enum": ["none", "block_jacobi", "ilu"]},
        "block_size": {"type": "integer", "minimum": 1},
    },
}

_HYBRID = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "eps": _pos, "eps_clip": _pos, "low_frequency": _pos, "loop_tol": _pos,
        "max_iter": {"type": "integer", "minimum": 0},
        "pml_wavelengths": _pos, "pml_strength": _pos, "hc_constant": _pos,
        "quad_degree": {"type": "integer", "minimum": 1, "maximum": 20}, "eta_factor": _pos,
    },
}

_NMLA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "radius_constant": _pos,
        "peak_threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "min_separation_deg": _pos,
        "max_directions": {"type": "integer", "minimum": 1},
        "oversampling": {"type": "integer", "minimum": 2},
    },
}

_OUTPUTS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"pgm": {"type": "boolean"}, "matrix_market": {"type": "boolean"},
                   "nmla_csv": {"type": "boolean"}},
}

_NMLA_BENCH = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "alpha": _pos, "noise": {"type": "number", "minimum": 0}, "noise_alpha": _pos,
        "two_wave_alpha": _pos, "two_wave_separation_deg": _pos,
        "circular_omega": _pos, "trials": {"type": "integer", "minimum": 1}, "seed": {"type": "integer"},
    },
}

_EIKONAL_BENCH = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "base_n": {"type": "integer", "minimum": 5}, "levels": {"type": "integer", "minimum": 2},
        "reference_n": {"type": "integer", "minimum": 9}, "radius": _pos, "domain_half_width": _pos,
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mode"],
    "properties": {
        "mode": {"enum": ["single", "omega_ladder", "h_ladder", "nmla_bench", "eikonal_bench"]},
        "medium": _MEDIUM,
        "source": _point,
        "domain": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        "omega": _pos,
        "omegas": {"type": "array", "items": _pos},
        "npw": _pos,
        "npws": {"type": "array", "items": _pos, "minItems": 1},
        "reference_npw": _pos,
        "reference": {"enum": ["auto", "exact", "babich", "self", "none"]},
        "ray_mode": {"enum": ["exact", "learned"]},
        "solver": _SOLVER,
        "hybrid": _HYBRID,
        "nmla": _NMLA,
        "outputs": _OUTPUTS,
        "out_dir": {"type": "string"},
        "nmla_bench": _NMLA_BENCH,
        "eikonal_bench": _EIKONAL_BENCH,
    },
    "allOf": [
        {"if": {"properties": {"mode": {"const": "single"}}},
         "then": {"required": ["omega", "medium", "source"]}},
        {"if": {"properties": {"mode": {"const": "omega_ladder"}}},
         "then": {"required": ["omegas", "medium", "source"],
                  "properties": {"omegas": {"minItems": 3}}}},
        {"if": {"properties": {"mode": {"const": "h_ladder"}}},
         "then": {"required": ["omega", "npws", "medium", "source"]}},
        {"if": {"properties": {"mode": {"const": "eikonal_bench"}}},
         "then": {"required": ["medium", "source"]}},
    ],
}


class ConfigError(ValueError):
    """Schema violations; ``errors`` lists every message."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    mode: str
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def get(self, key, default=None):
        return self.raw.get(key, default)

    @property
    def out_dir(self) -> Path:
        return Path(self.raw.get("out_dir", "out"))


def _format_error(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return f"{where}: unknown key(s) {', '.join(map(repr, extra))}"
    if err.validator == "required":
        return f"{where}: {err.message}"
    return f"{where}: {err.message}"


def validate_config(data) -> list[str]:
    """All schema errors (empty if valid), plus semantic checks the schema cannot express."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    msgs = [_format_error(e) for e in errors]
    if not isinstance(data, dict) or msgs:
        return msgs
    if data["mode"] == "h_ladder":
        ref = data.get("reference_npw", 16.0)
        if any(n >= ref for n in data["npws"]):
            msgs.append("reference_npw: must be strictly larger than every entry of npws")
    dom = data.get("domain")
    if dom is not None and not (dom[0] < dom[1] and dom[2] < dom[3]):
        msgs.append("domain: expected [xmin, xmax, ymin, ymax] with xmin < xmax and ymin < ymax")
    if dom is not None and "source" in data:
        x, y = data["source"]
        if not (dom[0] < x < dom[1] and dom[2] < y < dom[3]):
            msgs.append("source: must lie strictly inside the domain")
    med = data.get("medium", {})
    if med.get("kind") == "gaussian_bump" and "alpha" in med and "beta" in med and med["alpha"] >= med["beta"]:
        msgs.append("medium: gaussian_bump needs alpha < beta")
    return msgs


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    errors = validate_config(data)
    if errors:
        raise ConfigError(errors)
    return RunConfig(data["mode"], data, path.resolve().parent)


# --------------------------------------------------------------------------
# building blocks

def build_medium(spec: dict, base_dir: Path = Path(".")):
    from hhx.media import Medium, read_velocity_file, smooth

    kind = spec["kind"]
    args = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "homogeneous":
        return Medium.homogeneous(**args)
    if kind == "constant_gradient":
        return Medium.constant_gradient(**args)
    if kind == "gaussian_bump":
        return Medium.gaussian_bump(**args)
    path = Path(args["path"])
    if not path.is_absolute():
        path = base_dir / path
    return Medium.from_grid(smooth(read_velocity_file(path), args.get("sigma", 0.0)))


def hybrid_config(run: RunConfig, omega: float, npw: float | None = None, **overrides):
    from hhx import nmla, pipeline, sparse

    solver = dict(run.get("solver", {}))
    if solver.get("preconditioner") == "none":
        solver["preconditioner"] = None
    kw = dict(run.get("hybrid", {}))
    if "domain" in run.raw:
        kw["domain"] = tuple(run.raw["domain"])
    kw.setdefault("ray_mode", run.get("ray_mode", "learned"))
    kw.update(overrides)
    return pipeline.HybridConfig(
        omega=float(omega),
        npw=float(npw if npw is not None else run.get("npw", 8.0)),
        solver=sparse.SolverConfig(**solver),
        nmla=nmla.NMLAConfig(**run.get("nmla", {})),
        **kw,
    )


def resolve_reference_kind(run: RunConfig, medium) -> str:
    kind = run.get("reference", "auto")
    if kind != "auto":
        return kind
    return {"homogeneous": "exact", "constant_gradient": "babich"}.get(medium.kind, "self")


def make_reference(kind: str, cfg, medium, x0, reference_npw: float = 16.0):
    """Callable reference total field (or None for ``none``)."""
    from hhx import pipeline

    if kind == "none":
        return None
    if kind == "exact":
        if medium.kind != "homogeneous":
            raise ValueError("an exact reference exists only for the homogeneous medium")
        return pipeline.homogeneous_reference(cfg.omega, x0, medium.params["c0"])
    if kind == "babich":
        return pipeline.babich_reference(medium, x0, cfg.omega, cfg.domain)
    return pipeline.self_reference(cfg, medium, x0, npw=reference_npw).total


def ladder_slope(xs, errors) -> tuple[float, float]:
    """Least-squares slope of log(error) against log(x) and the RMS residual of the fit."""
    lx, le = np.log(np.asarray(xs, float)), np.log(np.asarray(errors, float))
    if len(lx) < 2 or not np.all(np.isfinite(le)):
        return float("nan"), float("nan")
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, le, rcond=None)
    res = le - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(res ** 2)))


def observed_orders(hs, errors) -> list[float]:
    """log(e_k / e_{k+1}) / log(h_k / h_{k+1}) for consecutive entries."""
    hs, errors = np.asarray(hs, float), np.asarray(errors, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return [float(np.log(errors[k] / errors[k + 1]) / np.log(hs[k] / hs[k + 1]))
                for k in range(len(hs) - 1)]


def result_row(res, error: float) -> dict:
    t = res.timings
    return {"omega": res.config.omega, "h": res.disc.h, "npw": res.config.npw, "eps": res.eps,
            "ray_mode": res.config.ray_mode, "rel_l2_error": error, "gmres_iters": res.gmres_iterations,
            "t_babich_s": t["babich"], "t_lowfreq_s": t["lowfreq"], "t_nmla_s": t["nmla"],
            "t_rayfem_s": t["rayfem"], "t_total_s": t["total"]}


def failed_row(omega, npw, ray_mode) -> dict:
    row = {k: float("nan") for k in CSV_HEADER}
    row.update(omega=omega, npw=npw, ray_mode=ray_mode, gmres_iters=-1)
    return row


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    return "nan" if v is None else f"{v:.10g}"


def write_csv(path, rows, footer=()) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_cell(r.get(k)) for k in CSV_HEADER])
        for line in footer:
            fh.write(f"# {line}\n")


def read_csv(path):
    """Rows of a ladder CSV (comment lines skipped) as dicts of strings."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


# --------------------------------------------------------------------------
# images

def write_field_image(values, path) -> None:
    """8-bit binary PGM of the real part, mapped linearly and symmetrically about zero.

    ``values`` is (ny, nx) with row 0 at the smallest y; the image puts the largest
    y on top.  NaN entries and zero-range data map to the mid gray 128.
    """
    v = np.real(np.asarray(values))
    if v.ndim != 2:
        raise ValueError("field image needs a rectangular (ny, nx) node layout")
    ny, nx = v.shape
    finite = np.isfinite(v)
    img = np.full(v.shape, 128, dtype=np.uint8)
    if finite.any():
        lo, hi = v[finite].min(), v[finite].max()
        if hi > lo:
            m = max(abs(lo), abs(hi))
            img[finite] = np.clip(np.rint(127.5 + 127.5 * v[finite] / m), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(img[::-1].tobytes())


def read_pgm(path) -> np.ndarray:
    """Binary PGM pixels (rows top to bottom)."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    if tokens[0] != "P5":
        raise ValueError("not a binary PGM")
    nx, ny, maxval = map(int, tokens[1:])
    if maxval != 255:
        raise ValueError("only 8-bit PGM is supported")
    pix = np.frombuffer(data[pos + 1:pos + 1 + nx * ny], dtype=np.uint8)
    return pix.reshape(ny, nx)


def nodal_grid_values(res) -> np.ndarray:
    """Nodal total field reshaped to the (ny, nx) layout of the mesh grid."""
    return res.u_total.reshape(res.disc.grid.shape)


# --------------------------------------------------------------------------
# modes

def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _write_outputs(run: RunConfig, res, out: Path, tag: str) -> None:
    from hhx import sparse

    opts = run.get("outputs", {})
    if opts.get("pgm", True):
        write_field_image(nodal_grid_values(res), out / f"field_{tag}.pgm")
    if opts.get("matrix_market", False) and res.system is not None:
        sparse.write_matrix_market(out / f"rayfem_{tag}.mtx", res.system.matrix, comment=f"omega={res.config.omega}")
    if opts.get("nmla_csv", False) and res.learned is not None:
        res.learned.dump_csv(out / f"nmla_{tag}.csv")


def _solve_row(run: RunConfig, medium, x0, omega, npw, out: Path, tag: str, reference=None,
               ref_kind=None, eta=None, **overrides):
    """One hybrid run; returns (row, summary entry)."""
    from hhx import pipeline

    keep = run.get("outputs", {}).get("matrix_market", False)
    cfg = hybrid_config(run, omega, npw, keep_system=keep, **overrides)
    try:
        res = pipeline.run_hybrid(cfg, medium, x0)
        if reference is None and ref_kind is not None:
            reference = make_reference(ref_kind, cfg, medium, x0, run.get("reference_npw", 16.0))
        err = float("nan") if reference is None else res.relative_error(reference, eta=eta)
        _write_outputs(run, res, out, tag)
        info = {"tag": tag, "ok": True, "tol_history": res.tol_history, "loop_converged": res.converged,
                "low_frequency": res.low_frequency}
        return result_row(res, err), info
    except Exception as exc:  # noqa: BLE001 - failures are recorded per row
        _log(f"row {tag} failed: {exc}")
        return failed_row(omega, cfg.npw, cfg.ray_mode), {"tag": tag, "ok": False, "error": str(exc),
                                                      "traceback": traceback.format_exc()}


def run_single(run: RunConfig, out: Path) -> int:
    medium = build_medium(run.get("medium"), run.base_dir)
    x0 = tuple(run.get("source"))
    omega = run.get("omega")
    kind = run.get("reference", "none")
    if kind == "auto":
        kind = resolve_reference_kind(run, medium)
    row, info = _solve_row(run, medium, x0, omega, None, out, "single", ref_kind=kind)
    write_csv(out / "single.csv", [row])
    (out / "summary.json").write_text(json.dumps({"mode": "single", "rows": [info]}, indent=2))
    return EXIT_OK if info["ok"] else EXIT_FAILED_ROWS


def run_omega_ladder(run: RunConfig, out: Path) -> int:
    omegas = list(run.get("omegas"))
    if len(omegas) < 3:
        raise ConfigError(["omegas: at least 3 ladder points are required"])
    medium = build_medium(run.get("medium"), run.base_dir)
    x0 = tuple(run.get("source"))
    kind = resolve_reference_kind(run, medium)
    rows, infos = [], []
    for k, om in enumerate(omegas):
        _log(f"omega ladder {k + 1}/{len(omegas)}: omega = {om:.6g}")
        row, info = _solve_row(run, medium, x0, om, None, out, f"w{k}", ref_kind=kind)
        if info["ok"] and not np.isfinite(row["rel_l2_error"]) and kind != "none":
            info.update(ok=False, error="non-finite error")
        rows.append(row)
        infos.append(info)
    ok = [i["ok"] for i in infos]
    good = [r for r, o in zip(rows, ok) if o]
    slope, resid = ladder_slope([r["omega"] for r in good], [r["rel_l2_error"] for r in good]) \
        if len(good) >= 2 else (float("nan"), float("nan"))
    write_csv(out / "omega_ladder.csv", rows, [f"slope={slope:.6g}", f"residual={resid:.6g}"])
    summary = {"mode": "omega_ladder", "reference": kind, "slope": slope, "slope_residual": resid, "rows": infos}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
    print(f"slope {slope:.4f} (residual {resid:.3g})")
    return EXIT_OK if all(ok) else EXIT_FAILED_ROWS


def run_h_ladder(run: RunConfig, out: Path) -> int:
    """Errors at each NPW against a finer self-reference on one fixed error region.

    In exact ray mode all rows share one first-arrival ray field.
    """
    from hhx import pipeline

    npws = sorted(run.get("npws"))
    ref_npw = run.get("reference_npw", 16.0)
    if any(n >= ref_npw for n in npws):
        raise ConfigError(["reference_npw: must be strictly larger than every entry of npws"])
    medium = build_medium(run.get("medium"), run.base_dir)
    x0 = tuple(run.get("source"))
    omega = run.get("omega")
    ray_mode = run.get("ray_mode", "exact")
    base = hybrid_config(run, omega, ref_npw, ray_mode="exact")
    ref_disc = pipeline.build_discretization(omega, ref_npw, medium, x0, base.domain)
    rays = pipeline.exact_ray_field(medium, x0, ref_disc.grid.bounds, max(ref_disc.h, 1.0 / 400))
    _log(f"h ladder reference: npw = {ref_npw}")
    ref = pipeline.run_hybrid(base, medium, x0, exact_rays=rays)
    coarse = pipeline.build_discretization(omega, npws[0], medium, x0, base.domain)
    eta = base.eta_factor * coarse.h
    rows, infos = [], []
    for k, npw in enumerate(npws):
        _log(f"h ladder {k + 1}/{len(npws)}: npw = {npw}")
        cfg = hybrid_config(run, omega, npw, ray_mode=ray_mode,
                            keep_system=run.get("outputs", {}).get("matrix_market", False))
        try:
            res = pipeline.run_hybrid(cfg, medium, x0, exact_rays=rays if ray_mode == "exact" else None)
            rows.append(result_row(res, res.relative_error(ref.total, eta=eta)))
            infos.append({"tag": f"n{k}", "ok": True, "tol_history": res.tol_history})
            _write_outputs(run, res, out, f"n{k}")
        except Exception as exc:  # noqa: BLE001
            _log(f"row npw={npw} failed: {exc}")
            rows.append(failed_row(omega, npw, ray_mode))
            infos.append({"tag": f"n{k}", "ok": False, "error": str(exc)})
    orders = observed_orders([r["h"] for r in rows], [r["rel_l2_error"] for r in rows])
    footer = [f"order npw {npws[k]:g}->{npws[k + 1]:g} = {o:.6g}" for k, o in enumerate(orders)]
    write_csv(out / "h_ladder.csv", rows, footer)
    summary = {"mode": "h_ladder", "reference_npw": ref_npw, "eta": eta, "orders": orders, "rows": infos}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float))
    for line in footer:
        print(line)
    return EXIT_OK if all(i["ok"] for i in infos) else EXIT_FAILED_ROWS


def nmla_bench(params: dict | None = None, config=None) -> list[dict]:
    """Synthetic NMLA checks: clean, noisy and two-wave plane waves, and a circular wave.

    Returns one dict per case with the measured angle error and its bound.
    """
    from hhx import nmla

    p = {"alpha": 30.0, "noise": 0.1, "noise_alpha": 50.0, "two_wave_alpha": 50.0,
         "two_wave_separation_deg": 40.0, "circular_omega": 20 * np.pi, "trials": 20, "seed": 0}
    p.update(params or {})
    cfg = config or nmla.NMLAConfig()
    rng = np.random.default_rng(p["seed"])
    out = []

    def plane(angles, amps, k):
        d = np.array([[np.cos(a), np.sin(a)] for a in angles])
        u = lambda x: sum(b * np.exp(1j * k * (x @ dd)) for b, dd in zip(amps, d))
        g = lambda x: sum((1j * k * b * np.exp(1j * k * (x @ dd)))[:, None] * dd for b, dd in zip(amps, d))
        return u, g

    def angle_err(a, b):
        return abs(float(np.angle(np.exp(1j * (a - b)))))

    k, r = 1.0, p["alpha"]
    for case, alpha, noise in (("clean", p["alpha"], 0.0), ("noisy", p["noise_alpha"], p["noise"])):
        L = nmla.l_alpha(alpha)
        bound = 2 * np.pi / (2 * L + 1) * (2 if noise else 1)
        worst = 0.0
        for _ in range(p["trials"]):
            th = rng.uniform(0, 2 * np.pi)
            u, g = plane([th], [1.0], k)
            smp = nmla.sample_impedance(u, g, (0.0, 0.0), alpha / k, k, nmla.sample_count(alpha, cfg.oversampling))
            if noise:
                scale = np.abs(smp.values).max()
                smp.values = smp.values + noise * scale * rng.uniform(-1, 1, smp.values.shape)
            est = nmla.analyze(smp, cfg, with_amplitudes=False)
            worst = max(worst, min(angle_err(e.angle, th) for e in est[:1]))
        out.append({"case": case, "alpha": alpha, "error": worst, "bound": bound})
    alpha = p["two_wave_alpha"]
    L = nmla.l_alpha(alpha)
    bound = 2 * np.pi / (2 * L + 1)
    worst = 0.0
    for _ in range(p["trials"]):
        th = rng.uniform(0, 2 * np.pi)
        ths = [th, th + np.deg2rad(p["two_wave_separation_deg"])]
        u, g = plane(ths, [1.0, 1.0], k)
        smp = nmla.sample_impedance(u, g, (0.0, 0.0), alpha / k, k, nmla.sample_count(alpha, cfg.oversampling))
        est = nmla.analyze(smp, cfg, with_amplitudes=False)
        for t in ths:
            worst = max(worst, min((angle_err(e.angle, t) for e in est), default=np.pi))
    out.append({"case": "two_waves", "alpha": alpha, "error": worst, "bound": bound})
    # circular wavefront: learned directions against the radial direction
    oms = (p["circular_omega"], 4 * p["circular_omega"])
    errs = [circular_wave_error(om, cfg) for om in oms]
    for om, e in zip(oms, errs):
        out.append({"case": f"circular_omega_{om:.6g}", "alpha": cfg.radius(om) * om, "error": e,
                    "bound": float("nan")})
    out.append({"case": "circular_ratio", "alpha": float("nan"), "error": errs[1] / errs[0], "bound": 0.8})
    return out


def circular_wave_error(omega: float, config=None, exclusion: float = 0.2, n_probe: int = 41) -> float:
    """Max angle error of learned directions for the outgoing homogeneous point-source field.

    Directions are learned on the box (-0.5, 0.5)^2 with lattice spacing omega^(-1/2)
    and checked against (x - x0)/|x - x0| on a fixed probe lattice outside the exclusion disk.
    """
    from hhx import nmla
    from hhx.media import Medium, exact_homogeneous, exact_homogeneous_grad

    cfg = config or nmla.NMLAConfig()
    med = Medium.homogeneous()
    x0 = np.zeros(2)
    s = np.linspace(-0.5, 0.5, n_probe)
    X, Y = np.meshgrid(s, s)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    learned = nmla.learn_rays(lambda x: exact_homogeneous(omega, x, x0),
                              lambda x: exact_homogeneous_grad(omega, x, x0),
                              nodes, omega, med, 1.0 / np.sqrt(omega), (-0.5, 0.5, -0.5, 0.5),
                              x0, exclusion, cfg)
    worst = 0.0
    for j in np.flatnonzero(learned.rays.counts > 0):
        true = np.arctan2(nodes[j, 1], nodes[j, 0])
        errs = [abs(float(np.angle(np.exp(1j * (a - true))))) for a in learned.rays.node_angles(j)]
        worst = max(worst, min(errs))
    return worst


def run_nmla_bench(run: RunConfig, out: Path) -> int:
    from hhx import nmla

    rows = nmla_bench(run.get("nmla_bench", {}), nmla.NMLAConfig(**run.get("nmla", {})))
    with open(out / "nmla_bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, ["case", "alpha", "error", "bound"])
        w.writeheader()
        for r in rows:
            w.writerow({k: (v if isinstance(v, str) else f"{v:.8g}") for k, v in r.items()})
    for r in rows:
        print(f"{r['case']:>24s}  error {r['error']:.4g}  bound {r['bound']:.4g}")
    return EXIT_OK


def eikonal_bench(medium, x0, base_n: int = 21, levels: int = 3, reference_n: int = 321,
                  radius: float = 0.3, half_width: float = 0.5) -> dict:
    """Max errors of phi, v0, v1 on the disk of ``radius`` over a grid-halving ladder.

    phi is compared with the closed form when one exists; otherwise, and always for
    v0 and v1, with a fine self-reference of ``reference_n`` points per side.
    """
    from hhx import eikonal as ek
    from hhx.grid import CartesianGrid
    from hhx.media import exact_phase_constant_gradient

    x0 = np.asarray(x0, dtype=float)
    ns = [(base_n - 1) * 2 ** k + 1 for k in range(levels)]
    if (reference_n - 1) % (ns[-1] - 1):
        raise ValueError("reference grid must nest the finest ladder grid")

    def grid(n):
        return CartesianGrid.from_bounds(x0[0] - half_width, x0[0] + half_width,
                                         x0[1] - half_width, x0[1] + half_width, n, n)

    def solve(n):
        eik = ek.solve_phase(medium, x0, grid(n))
        return eik, ek.solve_amplitudes(eik, medium)

    ref_eik, ref_tr = solve(reference_n)
    out = {"n": ns, "h": [2 * half_width / (n - 1) for n in ns], "phi": [], "v0": [], "v1": []}
    for n in ns:
        g = grid(n)
        X, Y = g.mesh_xy()
        mask = np.hypot(X - x0[0], Y - x0[1]) <= radius
        stride = (reference_n - 1) // (n - 1)
        eik, tr = solve(n)
        if medium.kind == "constant_gradient":
            p = medium.params
            exact = exact_phase_constant_gradient(p["c0"], p["G0"], p["x0"], np.stack([X, Y], -1))
        elif medium.kind == "homogeneous":
            exact = np.hypot(X - x0[0], Y - x0[1]) / medium.params["c0"]
        else:
            exact = ref_eik.phi.values[::stride, ::stride]
        out["phi"].append(float(np.abs(eik.phi.values - exact)[mask].max()))
        for key in ("v0", "v1"):
            fine = getattr(ref_tr, key).values[::stride, ::stride]
            out[key].append(float(np.abs(getattr(tr, key).values - fine)[mask].max()))
    for key in ("phi", "v0", "v1"):
        out[f"order_{key}"] = observed_orders(out["h"], out[key])
    return out


def run_eikonal_bench(run: RunConfig, out: Path) -> int:
    medium = build_medium(run.get("medium"), run.base_dir)
    p = dict(run.get("eikonal_bench", {}))
    if "domain_half_width" in p:
        p["half_width"] = p.pop("domain_half_width")
    res = eikonal_bench(medium, run.get("source"), **p)
    with open(out / "eikonal_bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "h", "err_phi", "err_v0", "err_v1"])
        for k in range(len(res["n"])):
            w.writerow([res["n"][k], f"{res['h'][k]:.8g}", f"{res['phi'][k]:.6e}",
                        f"{res['v0'][k]:.6e}", f"{res['v1'][k]:.6e}"])
        for key in ("phi", "v0", "v1"):
            fh.write(f"# order_{key} = {' '.join(f'{o:.4f}' for o in res[f'order_{key}'])}\n")
    (out / "summary.json").write_text(json.dumps(res, indent=2))
    for key in ("phi", "v0", "v1"):
        print(f"order {key}: {', '.join(f'{o:.3f}' for o in res[f'order_{key}'])}")
    return EXIT_OK


MODES = {"single": run_single, "omega_ladder": run_omega_ladder, "h_ladder": run_h_ladder,
         "nmla_bench": run_nmla_bench, "eikonal_bench": run_eikonal_bench}


# --------------------------------------------------------------------------

def set_threads(n: int | None) -> int | None:
    """Thread count from ``n`` or HHX_THREADS; applied to BLAS env vars and numba."""
    if n is None:
        env = os.environ.get("HHX_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError([f"HHX_THREADS: expected an integer, got {env!r}"]) from None
    if n is None:
        return None
    if n < 1:
        raise ConfigError(["threads: must be at least 1"])
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hhx", description="Hybrid point-source Helmholtz solver")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a JSON-configured study")
    r.add_argument("--config", required=True, help="path to the JSON run configuration")
    r.add_argument("--out", help="output directory (overrides out_dir in the config)")
    r.add_argument("--threads", type=int, help="worker threads (default: HHX_THREADS or library default)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        set_threads(args.threads)
        run = parse_config(args.config)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else run.out_dir
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        code = MODES[run.mode](run, out)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - a whole-mode failure is a failed run
        _log(f"run failed: {exc}")
        return EXIT_FAILED_ROWS
    _log(f"done in {time.perf_counter() - t0:.1f} s; outputs in {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
