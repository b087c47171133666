"""Command-line front end: ``python -m krein <command> ...``.

Files are UTF-8 JSON.  A complex scalar is ``[re, im]``; an ``r x r`` matrix
is a list of rows.  Sampled kernels list their samples from the left end of
the support, so an accelerant file stores ``k_plus`` for ``t = 0..T`` and
``k_minus`` for ``t = -T..0`` (the last entry is ``k(0-)``).

Exit status: 0 when every asserted check passes, 1 on bad input or
configuration, 2 on a numerical failure or a failed check.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import examples as ex
from .accelerant import (
    AccelerantKernel,
    Potential,
    is_accelerant,
    krein_sobolev_residual,
    potential_of,
    resolvent_residual,
    solve_resolvent,
)
from .kreinsys import (
    LambdaGrid,
    factorization_residual,
    fg_from_potential,
    liouville_defect,
    matrizant,
    ortho_difference,
    ortho_from_matrizant,
    ortho_from_resolvent,
    zero_location_check,
)
from .lincore import SingularMatrix, UniformGrid, maxnorm
from .resultant import (
    SingularResultant,
    ExtractionFailed,
    TwoSidedKernel,
    conditions_check,
    recover_accelerant,
    sharp,
    weight_residual,
)

COMMANDS = ("example", "check", "resolvent", "potential", "ortho", "matrizant", "recover", "roundtrip")
FAMILIES = ("step", "exk", "rational", "pexp")

DEFAULT_TOLERANCES = {
    "resolvent_residual": 1e-8,
    "krein_sobolev": 5e-2,
    "closed_form": 1e-3,
    "ortho_difference": 1e-3,
    "factorization": 1e-3,
    "zero_det": 1e-6,
    "liouville": 1e-4,
    "recovery_error": 5e-3,
    "hermitian_defect": 5e-3,
    "identity_residual": 2e-3,
    "min_singular_value": 1e-6,
    "weight_residual": 5e-3,
    "resultant_residual": 1e-8,
}


class InputError(ValueError):
    """Bad file contents or options; the message names the offending field."""


class NumericalFailure(RuntimeError):
    pass


# ------------------------------------------------------------------ config


@dataclass
class RunConfig:
    command: str
    input: Optional[str] = None
    out: Optional[str] = None
    report: Optional[str] = None
    T: float = 1.0
    N: int = 200
    family: Optional[str] = None
    tau: Optional[float] = None
    level: Optional[int] = None
    lambda_spec: Optional[str] = None
    lambda_file: Optional[str] = None
    rates: list = field(default_factory=lambda: [1.0])
    freqs: list = field(default_factory=lambda: [1.0])
    params: Optional[str] = None
    parallel: bool = False
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 42

    def validate(self):
        if self.command not in COMMANDS:
            raise InputError(f"command: unknown command {self.command!r}")
        if not (isinstance(self.N, int) and self.N >= 2):
            raise InputError(f"N: must be an integer >= 2, got {self.N}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise InputError(f"T: must be positive, got {self.T}")
        if self.lambda_spec and self.lambda_file:
            raise InputError("lambda: give either --lambda or --lambda-file, not both")
        for name, v in self.tolerances.items():
            if not (math.isfinite(v) and v > 0):
                raise InputError(f"tol {name}: must be positive, got {v}")


# ---------------------------------------------------------------- encoding


def enc_c(z) -> list:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise NumericalFailure("refusing to serialize a non-finite value")
    return [float(z.real), float(z.imag)]


def enc_array(a) -> list:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 0:
        return enc_c(a)
    return [enc_array(x) for x in a]


def dec_c(x, where: str) -> complex:
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return complex(x)
    if (
        isinstance(x, list)
        and len(x) == 2
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)
    ):
        return complex(x[0], x[1])
    raise InputError(f"{where}: expected a complex scalar [re, im], got {json.dumps(x)[:40]}")


def dec_matrix(x, where: str) -> np.ndarray:
    if not isinstance(x, list) or not x or not all(isinstance(row, list) for row in x):
        raise InputError(f"{where}: expected a matrix (list of rows)")
    rows = [[dec_c(v, where) for v in row] for row in x]
    if len({len(r) for r in rows}) != 1:
        raise InputError(f"{where}: ragged matrix")
    out = np.array(rows, dtype=complex)
    if not np.all(np.isfinite(out)):
        raise InputError(f"{where}: non-finite entry")
    return out


def dec_samples(x, where: str, count: int, r: int) -> np.ndarray:
    if not isinstance(x, list):
        raise InputError(f"{where}: expected a list of matrices")
    if len(x) != count:
        raise InputError(f"{where}: expected {count} samples, got {len(x)}")
    out = np.array([dec_matrix(m, f"{where}[{i}]") for i, m in enumerate(x)])
    if out.shape[1:] != (r, r):
        raise InputError(f"{where}: samples must be {r}x{r}, got {out.shape[1:]}")
    return out


def write_json(path, obj):
    text = json.dumps(obj, indent=1, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def read_json(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"input: file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"input: {path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(obj, dict):
        raise InputError("input: top level must be an object")
    return obj


def _header(obj: dict, kind: str):
    if obj.get("kind", kind) != kind:
        raise InputError(f"kind: expected {kind!r}, got {obj.get('kind')!r}")
    for key in ("r", "T", "N"):
        if key not in obj:
            raise InputError(f"{key}: missing field")
    r, T, N = obj["r"], obj["T"], obj["N"]
    if not isinstance(r, int) or isinstance(r, bool) or r < 1:
        raise InputError(f"r: must be a positive integer, got {r!r}")
    if not isinstance(N, int) or isinstance(N, bool) or N < 2:
        raise InputError(f"N: must be an integer >= 2, got {N!r}")
    if not isinstance(T, (int, float)) or isinstance(T, bool) or not T > 0:
        raise InputError(f"T: must be a positive number, got {T!r}")
    return r, float(T), N


def accelerant_to_json(k) -> dict:
    plus, minus = (k.k_plus, k.k_minus) if isinstance(k, AccelerantKernel) else (k.plus, k.minus)
    return {
        "kind": "accelerant",
        "r": int(plus.shape[1]),
        "T": float(k.grid.T),
        "N": int(k.grid.N),
        "k_plus": enc_array(plus),
        "k_minus": enc_array(minus[::-1]),
    }


def accelerant_from_json(obj: dict) -> AccelerantKernel:
    r, T, N = _header(obj, "accelerant")
    for key in ("k_plus", "k_minus"):
        if key not in obj:
            raise InputError(f"{key}: missing field")
    plus = dec_samples(obj["k_plus"], "k_plus", N + 1, r)
    minus = dec_samples(obj["k_minus"], "k_minus", N + 1, r)[::-1]
    try:
        return AccelerantKernel(UniformGrid(T, N), plus, minus.copy())
    except ValueError as exc:
        raise InputError(f"k_minus: {exc}") from None


def potential_to_json(p: Potential) -> dict:
    return {
        "kind": "potential",
        "r": p.r,
        "T": float(p.grid.T),
        "N": int(p.grid.N),
        "convention": p.convention,
        "samples": enc_array(p.a),
    }


def potential_from_json(obj: dict) -> Potential:
    r, T, N = _header(obj, "potential")
    if "samples" not in obj:
        raise InputError("samples: missing field")
    return Potential(UniformGrid(T, N), dec_samples(obj["samples"], "samples", N + 1, r))


def parse_lambda(cfg: RunConfig, default: str) -> LambdaGrid:
    if cfg.lambda_file:
        try:
            raw = json.loads(Path(cfg.lambda_file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"lambda-file: cannot read ({exc})") from None
        if not isinstance(raw, list) or not raw:
            raise InputError("lambda-file: expected a nonempty list")
        vals = [dec_c(v, f"lambda-file[{i}]") for i, v in enumerate(raw)]
        try:
            return LambdaGrid(np.array(vals))
        except ValueError as exc:
            raise InputError(f"lambda-file: {exc}") from None
    spec = cfg.lambda_spec or default
    parts = spec.split(":")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if len(parts) != 3:
            raise ValueError
    except (ValueError, IndexError):
        raise InputError(f"lambda: expected min:max:count, got {spec!r}") from None
    if count < 1 or not (math.isfinite(lo) and math.isfinite(hi)) or (count > 1 and lo >= hi):
        raise InputError(f"lambda: invalid range {spec!r}")
    if count == 1:
        return LambdaGrid(np.array([lo]), "real_axis")
    return LambdaGrid.real(lo, hi, count)


def _lambda_json(grid: LambdaGrid) -> list:
    return enc_array(grid.values)


# ------------------------------------------------------------------ report


class Report:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.checks: list = []
        self.flags: list = []
        self.data: dict = {}
        self.grid: dict = {}

    def check(self, name: str, value: float, threshold: float, kind: str = "max"):
        value = float(value)
        ok = value <= threshold if kind == "max" else value >= threshold
        self.checks.append(
            {"name": name, "value": value, "threshold": float(threshold), "pass": bool(ok)}
        )

    def tol(self, name: str) -> float:
        return self.cfg.tolerances[name]

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def as_dict(self) -> dict:
        cfg = asdict(self.cfg)
        return {
            "command": self.cfg.command,
            "config": cfg,
            "grid": self.grid,
            "tolerances": dict(self.cfg.tolerances),
            "checks": self.checks,
            "flags": self.flags,
            "data": self.data,
            "pass": self.passed,
        }


def _grid_info(T: float, N: int) -> dict:
    return {"T": float(T), "N": int(N), "h": float(T / N)}


def _need_input(cfg: RunConfig) -> dict:
    if not cfg.input:
        raise InputError("input: --input is required for this command")
    return read_json(cfg.input)


def _level_of(cfg: RunConfig, grid: UniformGrid) -> int:
    if cfg.level is not None:
        j = cfg.level
    elif cfg.tau is not None:
        try:
            j = grid.level(cfg.tau)
        except ValueError as exc:
            raise InputError(f"tau: {exc}") from None
    else:
        j = grid.N
    if not 0 < j <= grid.N:
        raise InputError(f"level: must lie in 1..{grid.N}, got {j}")
    return j


def _potential(k: AccelerantKernel, cfg: RunConfig) -> Potential:
    return potential_of(k, parallel=cfg.parallel)


# ---------------------------------------------------------------- commands


def _family_params(cfg: RunConfig) -> dict:
    if not cfg.params:
        return {}
    obj = read_json(cfg.params)
    return {key: dec_matrix(val, f"params.{key}") for key, val in obj.items()}


def cmd_example(cfg: RunConfig, rep: Report) -> dict:
    fam = cfg.family
    if fam not in FAMILIES:
        raise InputError(f"family: expected one of {', '.join(FAMILIES)}, got {fam!r}")
    T, N = cfg.T, cfg.N
    rep.grid = _grid_info(T, N)
    params = _family_params(cfg)
    try:
        if fam == "step":
            bundle = ex.step_family(ex.StepParams(T), N)
        elif fam == "exk":
            rz = ex.exk_build(cfg.rates, cfg.freqs)
            bundle = ex.expk_family(rz, T, N)
        elif fam == "rational":
            trip = ex.RationalTriple(
                params.get("a", [[1j]]), params.get("b", [[1.0]]), params.get("c", [[1.0]])
            )
            bundle = ex.rational_family(trip, T, N)
        else:
            trip = ex.AdmissibleTriple(
                params.get("beta", [[1 - 0.5j]]),
                params.get("gamma1", [[1.0]]),
                params.get("gamma2", [[1.0]]),
            )
            bundle = ex.pexp_family(trip, T, N)
    except (ex.InvalidTriple, ValueError) as exc:
        raise InputError(f"params: {exc}") from None
    k = bundle.kernel
    rep.flags.extend(bundle.flags)
    rep.check("hermitian_defect", k.hermitian_defect(), 1e-12 * max(1.0, maxnorm(k.k_plus)))
    acc = is_accelerant(k)
    rep.data["is_accelerant"] = {"ok": acc.ok, "first_bad_level": acc.first_bad_level}
    if fam == "step":
        if not acc.ok:
            rep.flags.append(f"not an accelerant from level {acc.first_bad_level}")
        # fits need an invertible range, so they use T <= 1
        fits = ex.step_discrepancies(T=min(T, 1.0), N=N)
        rep.data["reference_formula_fits"] = {
            key: (val.as_dict() if isinstance(val, ex.ScaleFit) else val) for key, val in fits.items()
        }
        rep.flags.append("step reference formulas fitted against the numerics; factors reported, not asserted")
    else:
        rep.check("is_accelerant", 1.0 if acc.ok else 0.0, 1.0, "min")
        if acc.ok:
            pot = _potential(k, cfg)
            if fam == "rational":
                closed = bundle.extras["potential_realization"]
                reference = np.array([bundle.potential_closed(x) for x in k.grid.nodes])
                fit = ex.fit_scale(pot.a, reference)
                rep.data["reference_potential_fit"] = fit.as_dict()
                rep.flags.append("rational potential checked against the realization formula")
            else:
                closed = bundle.potential_closed
            ref = np.array([closed(x) for x in k.grid.nodes])
            rep.check("potential_vs_closed_form", maxnorm(pot.a - ref), rep.tol("closed_form"))
    return accelerant_to_json(k)


def _load_accelerant(cfg: RunConfig, rep: Report) -> AccelerantKernel:
    k = accelerant_from_json(_need_input(cfg))
    rep.grid = _grid_info(k.grid.T, k.grid.N)
    return k


def cmd_check(cfg: RunConfig, rep: Report) -> Optional[dict]:
    k = _load_accelerant(cfg, rep)
    rep.check("hermitian_defect", k.hermitian_defect(), 1e-10 * max(1.0, maxnorm(k.k_plus)))
    acc = is_accelerant(k)
    rep.data["is_accelerant"] = {"ok": acc.ok, "first_bad_level": acc.first_bad_level}
    rep.check("is_accelerant", 1.0 if acc.ok else 0.0, 1.0, "min")
    if not acc.ok:
        rep.flags.append(f"T_tau not positive from level {acc.first_bad_level}")
        return None
    N = k.grid.N
    gam = solve_resolvent(k, N)
    rep.check("resolvent_residual", resolvent_residual(k, gam), rep.tol("resolvent_residual"))
    rep.check("resolvent_hermitian_defect", gam.hermitian_defect(), 1e-8)
    if N >= 4:
        j = N // 2
        ks = krein_sobolev_residual(k, j, j // 2, j // 4)
        rep.data["krein_sobolev_point"] = {"level": j, "i_t": j // 2, "i_s": j // 4}
        rep.check("krein_sobolev_residual", ks, rep.tol("krein_sobolev"))
    return None


def cmd_resolvent(cfg: RunConfig, rep: Report) -> dict:
    k = _load_accelerant(cfg, rep)
    j = _level_of(cfg, k.grid)
    try:
        gam = solve_resolvent(k, j)
    except SingularMatrix as exc:
        raise NumericalFailure(f"resolvent singular at level {j}: {exc}") from None
    rep.check("resolvent_residual", resolvent_residual(k, gam), rep.tol("resolvent_residual"))
    rep.check("hermitian_defect", gam.hermitian_defect(), 1e-8)
    return {
        "kind": "resolvent",
        "r": gam.r,
        "tau": float(gam.tau),
        "level": j,
        "h": float(gam.h),
        "gamma": enc_array(gam.gamma),
        "diag_upper": enc_array(gam.diag_upper),
        "diag_lower": enc_array(gam.diag_lower),
    }


def cmd_potential(cfg: RunConfig, rep: Report) -> dict:
    k = _load_accelerant(cfg, rep)
    pot = _potential(k, cfg)
    rep.data["a0_minus_k_plus_0"] = maxnorm(pot.a[0] - k.k_plus[0])
    rep.flags.append("a(0) extrapolated from a(t_1..t_3)")
    return potential_to_json(pot)


def _substeps(h: float, lam: np.ndarray, phase: float = 0.05) -> int:
    return max(1, int(np.ceil(np.abs(lam).max() * h / phase)))


def _box_for(lam: LambdaGrid, side: str) -> LambdaGrid:
    re = lam.values.real
    lo, hi = float(re.min()), float(re.max())
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    depth = max(abs(lo), abs(hi), 1.0) / 2
    if side == "lower_half":
        return LambdaGrid.box(lo, hi, -depth, 0.0, 21, 21)
    return LambdaGrid.box(lo, hi, 0.0, depth, 21, 21)


def cmd_ortho(cfg: RunConfig, rep: Report) -> dict:
    k = _load_accelerant(cfg, rep)
    j = _level_of(cfg, k.grid)
    lam = parse_lambda(cfg, "-20:20:41")
    gam = solve_resolvent(k, j)
    pair_r = ortho_from_resolvent(gam, lam)
    pot = _potential(k, cfg)
    U = matrizant(pot, lam, substeps=_substeps(k.grid.h, lam.values), tau_final=gam.tau)
    pair_m = ortho_from_matrizant(U)
    rep.check("ortho_difference", ortho_difference(pair_r, pair_m), rep.tol("ortho_difference"))
    if lam.is_real:
        rep.check("factorization_resolvent", factorization_residual(pair_r), rep.tol("factorization"))
        rep.check("factorization_matrizant", factorization_residual(pair_m), rep.tol("factorization"))
    for side in ("lower_half", "upper_half"):
        box = _box_for(lam, side)
        zr = zero_location_check(ortho_from_resolvent(gam, box), side)
        rep.check(f"zero_free_{side}_det_{zr.function}", zr.min_abs_det, rep.tol("zero_det"), "min")
    rep.flags.append("zero location checked on 21x21 samples only")
    return {
        "kind": "ortho",
        "tau": float(gam.tau),
        "lambda": _lambda_json(lam),
        "P_resolvent": enc_array(pair_r.P),
        "P_star_resolvent": enc_array(pair_r.P_star),
        "P_matrizant": enc_array(pair_m.P),
        "P_star_matrizant": enc_array(pair_m.P_star),
    }


def cmd_matrizant(cfg: RunConfig, rep: Report) -> dict:
    obj = _need_input(cfg)
    if obj.get("kind") == "accelerant":
        k = accelerant_from_json(obj)
        pot = _potential(k, cfg)
    else:
        pot = potential_from_json(obj)
    rep.grid = _grid_info(pot.grid.T, pot.grid.N)
    lam = parse_lambda(cfg, "-10:10:21")
    U = matrizant(pot, lam, substeps=_substeps(pot.grid.h, lam.values))
    rep.check("liouville_defect", liouville_defect(U), rep.tol("liouville"))
    return {
        "kind": "matrizant",
        "tau": float(U.tau_final),
        "lambda": _lambda_json(lam),
        "U": enc_array(U.U),
    }


def _recover(pot: Potential, lam: LambdaGrid, rep: Report, prefix: str = ""):
    try:
        F, G, info = fg_from_potential(pot)
    except ExtractionFailed as exc:
        raise NumericalFailure(f"kernel extraction failed: {exc}") from None
    try:
        kk, rr = recover_accelerant(F, G)
    except SingularResultant as exc:
        raise NumericalFailure(f"resultant singular at N={pot.grid.N}: {exc}") from None
    cond = conditions_check(F, sharp(G), lam.values.real)
    wl, wm = weight_residual(F, sharp(G), kk)
    if rep is not None:
        rep.check(prefix + "resultant_residual", rr.residual, rep.tol("resultant_residual"))
        rep.check(prefix + "hermitian_defect", rr.hermitian_defect, rep.tol("hermitian_defect"))
        rep.check(prefix + "identity_residual", cond.identity_residual, rep.tol("identity_residual"))
        rep.check(
            prefix + "min_singular_value", cond.min_singular_value, rep.tol("min_singular_value"), "min"
        )
        rep.check(prefix + "weight_residual_l", wl, rep.tol("weight_residual"))
        rep.check(prefix + "weight_residual_m", wm, rep.tol("weight_residual"))
        rep.data[prefix + "extraction_rank"] = {"f": info["f"].rank, "g": info["g"].rank}
    return kk, rr, cond


def cmd_recover(cfg: RunConfig, rep: Report) -> dict:
    obj = _need_input(cfg)
    pot = potential_from_json(obj)
    rep.grid = _grid_info(pot.grid.T, pot.grid.N)
    lam = parse_lambda(cfg, "-20:20:41")
    if not lam.is_real:
        raise InputError("lambda: recover needs a real grid")
    kk, _, _ = _recover(pot, lam, rep)
    rep.flags.append("kernel-intersection condition checked on the sampled grid only")
    return accelerant_to_json(kk)


def _subsample(k: AccelerantKernel) -> AccelerantKernel:
    N = k.grid.N // 2
    return AccelerantKernel(UniformGrid(k.grid.T, N), k.k_plus[::2], k.k_minus[::2])


def _recovery_error(k: AccelerantKernel, kk: TwoSidedKernel) -> float:
    return max(maxnorm(kk.plus - k.k_plus), maxnorm(kk.minus - k.k_minus))


def cmd_roundtrip(cfg: RunConfig, rep: Report) -> dict:
    k = _load_accelerant(cfg, rep)
    lam = parse_lambda(cfg, "-20:20:41")
    if not lam.is_real:
        raise InputError("lambda: roundtrip needs a real grid")
    levels = [k]
    if k.grid.N % 2 == 0 and k.grid.N >= 8:
        levels.insert(0, _subsample(k))
    else:
        rep.flags.append("N odd or too small: single resolution only")
    table = []
    result = None
    for kk_in in levels:
        fine = kk_in is k
        try:
            pot = _potential(kk_in, cfg)
        except SingularMatrix as exc:
            raise NumericalFailure(str(exc)) from None
        kk, rr, cond = _recover(pot, lam, rep if fine else None)
        err = _recovery_error(kk_in, kk)
        table.append(
            {
                "N": kk_in.grid.N,
                "h": kk_in.grid.h,
                "sup_error": err,
                "hermitian_defect": rr.hermitian_defect,
                "identity_residual": cond.identity_residual,
            }
        )
        if fine:
            rep.check("recovery_sup_error", err, rep.tol("recovery_error"))
            result = kk
    if len(table) == 2:
        ratio = table[0]["sup_error"] / max(table[1]["sup_error"], 1e-300)
        rep.data["convergence_ratio"] = ratio
        rep.flags.append(f"error ratio N={table[0]['N']} -> N={table[1]['N']}: {ratio:.3f} (reported only)")
    rep.data["error_table"] = table
    return accelerant_to_json(result)


HANDLERS = {
    "example": cmd_example,
    "check": cmd_check,
    "resolvent": cmd_resolvent,
    "potential": cmd_potential,
    "ortho": cmd_ortho,
    "matrizant": cmd_matrizant,
    "recover": cmd_recover,
    "roundtrip": cmd_roundtrip,
}


def _report_path(cfg: RunConfig) -> Path:
    if cfg.report:
        return Path(cfg.report)
    if cfg.out:
        out = Path(cfg.out)
        return out.with_name(out.stem + ".report.json")
    return Path(f"{cfg.command}.report.json")


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    try:
        cfg.validate()
        rep = Report(cfg)
        payload = HANDLERS[cfg.command](cfg, rep)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ex.SingularM as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (SingularMatrix, SingularResultant, NumericalFailure, ExtractionFailed) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    if payload is not None:
        write_json(cfg.out or f"{cfg.command}.json", payload)
    write_json(_report_path(cfg), rep.as_dict())
    if not rep.passed:
        failed = ", ".join(c["name"] for c in rep.checks if not c["pass"])
        print(f"checks failed: {failed}", file=sys.stderr)
        return 2
    return 0


# ------------------------------------------------------------------ parser


def _tol_arg(text: str):
    name, sep, value = text.partition("=")
    if not sep or name not in DEFAULT_TOLERANCES:
        raise argparse.ArgumentTypeError(
            f"expected name=value with name in {', '.join(sorted(DEFAULT_TOLERANCES))}"
        )
    try:
        return name, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {name}: not a number: {value!r}") from None


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="krein", description="Krein systems with accelerants that jump at the origin.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, needs_input=True):
        if needs_input:
            sp.add_argument("--input", "-i", help="input JSON file")
        sp.add_argument("--out", "-o", help="output JSON file")
        sp.add_argument("--report", help="report JSON file (default: <out>.report.json)")
        sp.add_argument("--lambda", dest="lambda_spec", metavar="MIN:MAX:COUNT")
        sp.add_argument("--lambda-file", help="JSON list of lambda values")
        sp.add_argument("--tol", action="append", type=_tol_arg, default=[], metavar="NAME=VALUE")
        sp.add_argument("--parallel", action="store_true", help="solve potential levels concurrently")
        return sp

    sp = common(sub.add_parser("example", help="emit a family fixture"), needs_input=False)
    sp.add_argument("family", choices=FAMILIES)
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--N", type=int, default=200)
    sp.add_argument("--rates", type=_float_list, default=[1.0], help="exk rates r_nu")
    sp.add_argument("--freqs", type=_float_list, default=[1.0], help="exk frequencies beta_nu")
    sp.add_argument("--params", help="JSON matrices for rational (a, b, c) or pexp (beta, gamma1, gamma2)")

    common(sub.add_parser("check", help="accelerant test and invariant suite"))
    for name in ("resolvent", "ortho"):
        sp = common(sub.add_parser(name))
        sp.add_argument("--tau", type=float)
        sp.add_argument("--level", type=int)
    common(sub.add_parser("potential"))
    common(sub.add_parser("matrizant", help="input: potential or accelerant file"))
    common(sub.add_parser("recover", help="input: potential file"))
    common(sub.add_parser("roundtrip", help="accelerant -> potential -> recovered accelerant"))
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update(dict(ns.tol))
    try:
        seed = int(os.environ.get("KREIN_SEED", "42"))
    except ValueError:
        raise InputError("KREIN_SEED: must be an integer") from None
    kw = {
        "command": ns.command,
        "input": getattr(ns, "input", None),
        "out": ns.out,
        "report": ns.report,
        "lambda_spec": ns.lambda_spec,
        "lambda_file": ns.lambda_file,
        "parallel": ns.parallel,
        "tolerances": tolerances,
        "seed": seed,
    }
    for name in ("T", "N", "family", "tau", "level", "rates", "freqs", "params"):
        if hasattr(ns, name):
            kw[name] = getattr(ns, name)
    return RunConfig(**kw)


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
