"""Command-line entry point: ``dysmooth {analyze,certify,cascade,verify}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .analysis import (
    decay_svg,
    fit_exponent,
    geometric_decay_check,
    saturation_test,
    theorem_verification,
)
from .cascade import cascade_reconstruct
from .catalog import CATALOG, Analytic, make_function
from .certificates import certify_row
from .errors import DysmoothError, InvariantError, ValidationError
from .mesh import SampledSource, load_samples
from .moduli import PROOF, THEOREM, modulus_profile

WEIGHTING_NAMES = {"theorem": THEOREM, "proof": PROOF}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def parse_range(text: str) -> tuple[int, int]:
    """``a..b`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise ValidationError(f"bad range {text!r}, expected a..b with integers") from None
    if hi < lo:
        raise ValidationError(f"empty range {text!r}")
    return lo, hi


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ValidationError(f"bad number list {text!r}") from None


def _coef(text: str) -> tuple[tuple[int, ...], float]:
    try:
        exps, value = text.split(":")
        return tuple(int(e) for e in exps.split(",")), float(value)
    except ValueError:
        raise ValidationError(f"bad --coef {text!r}, expected e1,...,ed:value") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dysmooth", description="Discrete and continuous moduli of smoothness on dyadic meshes.")
    p.add_argument("--version", action="version", version=f"dysmooth {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, source=True, fmt=("json", "csv")):
        if source:
            g = sp.add_mutually_exclusive_group(required=True)
            g.add_argument("--function", choices=CATALOG, help="catalog function")
            g.add_argument("--input", help="sample file (JSON)")
            sp.add_argument("--d", type=int, help="dimension (catalog functions)")
            sp.add_argument("--axis", type=int, default=1, help="1-based axis for abs-power and cascade")
            sp.add_argument("--center", type=_floats, help="center point or coordinate")
            sp.add_argument("--alpha", type=float, help="exponent for the power functions")
            sp.add_argument("--a", type=float, help="weierstrass amplitude ratio")
            sp.add_argument("--b", type=float, help="weierstrass frequency ratio")
            sp.add_argument("--M", type=int, help="weierstrass number of extra terms")
            sp.add_argument("--coef", type=_coef, action="append",
                            help="poly monomial e1,...,ed:value (repeatable)")
        sp.add_argument("--format", choices=fmt, default="json")
        sp.add_argument("--out", help="write here instead of stdout")
        sp.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("analyze", help="Psi profile, decay fit, saturation and geometric decay")
    common(a, fmt=("json", "csv", "svg"))
    a.add_argument("--r", type=int, required=True)
    a.add_argument("--n", type=parse_range, required=True, help="level range a..b")

    c = sub.add_parser("certify", help="exact determinant and constant ledger over an r range")
    common(c, source=False)
    c.add_argument("--r", type=parse_range, default=(2, 12), help="order range a..b")
    c.add_argument("--d", type=int, default=3, help="largest dimension for c(r, d)")

    k = sub.add_parser("cascade", help="spline cascade on the basic cube of (u, i, t)")
    common(k)
    k.add_argument("--r", type=int, required=True)
    k.add_argument("--n", type=int, required=True, help="starting level")
    k.add_argument("--u", type=_floats, required=True, help="base point u1,...,ud")
    k.add_argument("--t", type=float, required=True, help="step, at most 2**-n")
    k.add_argument("--K", type=int, default=6, help="number of refinement stages")

    v = sub.add_parser("verify", help="estimators against the assembled bounds")
    common(v, fmt=("json", "csv", "svg"))
    v.add_argument("--r", type=int, required=True)
    v.add_argument("--n", type=parse_range, default=(3, 8), help="level range a..b")
    v.add_argument("--weighting", choices=sorted(WEIGHTING_NAMES), default="theorem")
    v.add_argument("--dirs", type=int, default=64, help="direction count for omega estimates")
    v.add_argument("--base-res", type=int, default=16)
    return p


def make_source(args):
    if args.input:
        field = load_samples(args.input)
        if args.d is not None and args.d != field.d:
            raise ValidationError(f"--d {args.d} does not match the sample file dimension {field.d}")
        return SampledSource(field)
    d = args.d if args.d is not None else (2 if args.function == "diag-bilinear" else 1)
    params = {}
    name = args.function
    if name == "poly":
        if not args.coef:
            raise ValidationError("poly needs at least one --coef e1,...,ed:value")
        params["coefficients"] = dict(args.coef)
    if name == "abs-power":
        params["axis"] = _axis(args.axis, d)
    if name in ("abs-power", "radial-power"):
        if args.center is not None:
            center = args.center
            params["center"] = center[0] if name == "abs-power" else center
        if args.alpha is not None:
            params["alpha"] = args.alpha
    if name == "weierstrass-truncated":
        for key, val in (("a", args.a), ("b", args.b), ("terms", args.M)):
            if val is not None:
                params[key] = val
    if name == "abs-power" and args.center is not None and len(args.center) != 1:
        raise ValidationError("abs-power takes a single --center coordinate")
    return make_function(name, d, **params)


def _axis(axis: int, d: int) -> int:
    if not 1 <= axis <= d:
        raise ValidationError(f"--axis {axis} outside 1..{d}")
    return axis - 1


def _config(args) -> dict:
    cfg = {}
    for key, val in sorted(vars(args).items()):
        if key in ("out", "format"):
            continue
        if isinstance(val, tuple):
            val = list(val)
        if key == "coef" and val is not None:
            val = [[list(e), c] for e, c in val]
        cfg[key] = val
    return cfg


def _envelope(args, result: dict, flags: dict | None = None) -> dict:
    return {
        "command": args.command,
        "version": __version__,
        "seed": args.seed,
        "config": _config(args),
        "flags": flags or {},
        "result": result,
    }


def cmd_analyze(args):
    src = make_source(args)
    lo, hi = args.n
    profile = modulus_profile(src, args.r, lo, hi)
    try:
        fit = fit_exponent(profile)
        fit_doc = fit.as_dict()
    except ValidationError as exc:
        fit, fit_doc = None, {"unavailable": str(exc)}
    verdict = saturation_test(profile, args.r)
    try:
        geo = geometric_decay_check(profile, args.r).as_dict()
    except ValidationError as exc:
        geo = {"unavailable": str(exc)}
    if args.format == "csv":
        return profile.to_csv()
    if args.format == "svg":
        return decay_svg(profile, fit, f"{profile.source.get('name', 'samples')}, r = {args.r}")
    return _envelope(args, {
        "profile": profile.as_dict(),
        "fit": fit_doc,
        "saturation": verdict.as_dict(),
        "geometric_decay": geo,
    })


def cmd_certify(args):
    lo, hi = args.r
    if lo < 2:
        raise ValidationError("certify needs r >= 2 (the matrix is defined for r >= 2)")
    rows = [certify_row(r, args.d) for r in range(lo, hi + 1)]
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "det_abs", "expected_pow2", "inv_inf_norm", "lebesgue", "c_1d"]
                   + [f"c_dd_{d}" for d in range(1, args.d + 1)] + ["status"])
        for row in rows:
            w.writerow([row["r"], row["det_abs"], row["expected_pow2"], row["inv_inf_norm"],
                        repr(row["lebesgue"]), repr(row["c_1d"])]
                       + [repr(row["c_dd"][str(d)]) for d in range(1, args.d + 1)] + [row["status"]])
        return buf.getvalue()
    return _envelope(args, {"rows": rows, "all_pass": all(r["status"] == "pass" for r in rows)})


def cmd_cascade(args):
    src = make_source(args)
    report = cascade_reconstruct(src, args.u, _axis(args.axis, src.d), args.t, args.r, args.n, args.K)
    if args.format == "csv":
        return report.to_csv()
    return _envelope(args, report.as_dict())


def cmd_verify(args):
    src = make_source(args)
    if not isinstance(src, Analytic):
        raise ValidationError("verify needs a catalog function (off-mesh evaluation); got a sample file")
    report = theorem_verification(
        src, args.r, src.d, args.n, seed=args.seed, weighting=WEIGHTING_NAMES[args.weighting],
        dir_count=args.dirs, base_res=args.base_res,
    )
    if args.format == "csv":
        return report.to_csv()
    if args.format == "svg":
        return decay_svg(report.profile, report.fit, f"{src.name}, r = {args.r}")
    doc = report.as_dict()
    return _envelope(args, doc, flags=dict(doc["flags"], weighting=report.weighting))


COMMANDS = {"analyze": cmd_analyze, "certify": cmd_certify, "cascade": cmd_cascade, "verify": cmd_verify}


def render(payload) -> str:
    if isinstance(payload, str):
        return payload
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            text = render(COMMANDS[args.command](args))
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    except DysmoothError as exc:
        _report(exc)
        return exc.exit_code
    except OSError as exc:
        err = ValidationError(f"{exc.filename}: {exc.strerror}")
        _report(err)
        return err.exit_code
    except Exception as exc:  # anything else is a bug
        err = InvariantError(f"{type(exc).__name__}: {exc}")
        _report(err)
        return err.exit_code


def _report(exc: DysmoothError) -> None:
    doc = dict(exc.to_dict(), exit_code=exc.exit_code)
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
