"""Batch command-line interface.

Subcommands::

    analyze     zeros, reducibility, identifiability verdicts, FIM rank
    crb         constrained CRB rows for a list of constraint specs
    sweep-known known-coefficient CRB trace sweep plus the minimal baseline
    fim-check   analytic FIM vs Monte Carlo score covariance (gated)
    mse         estimator MSE vs bound over an SNR grid (experiment JSON)

Every CSV output starts with a ``#``-prefixed manifest (tool version,
command, argument digest, input digests, seed, schema tag, timestamp).
All commands are deterministic given their flags and seed; the timestamp
line is informational and excluded from that contract. The default seed
comes from ``BLINDCRB_SEED`` when set.

Exit codes: 0 for successful runs (including data-level negatives such as
unbounded CRB rows), 1 for oracle-gate failures in ``fim-check``, 2 for bad
inputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .channel import (
    COMPLEX,
    REAL,
    Channel,
    load_channel,
    realify_channel,
    reducible_decompose,
    subchannel_zeros,
    common_zeros,
)
from .crb import (
    CONSTRAINT_GRAMMAR,
    constrained_crb,
    minimal_crb,
    parse_constraint,
)
from .fim import (
    DETERMINISTIC,
    GAUSSIAN,
    GaussianModelConfig,
    analyze_singularities,
    deterministic_fim,
    deterministic_reduced_fim,
    gaussian_fim_complex,
    gaussian_fim_real,
    phase_direction,
    schur_reduce,
)
from .identifiability import deterministic_verdict, gaussian_verdict, verdict_vs_fim
from .simulate import (
    ExperimentConfig,
    experiment_symbols,
    mse_vs_crb_experiment,
    score_covariance_fim,
    stream_rng,
)

_SCHEMAS = {
    "crb": "crb-v1",
    "sweep-known": "sweep-known-v1",
    "fim-check": "fim-check-v1",
    "mse": "mse-v1",
}


def _default_seed():
    return int(os.environ.get("BLINDCRB_SEED", "0"))


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return _sha256_bytes(fh.read())


def _manifest_lines(command, args_dict, inputs, schema, extra=()):
    # digest the computation-relevant arguments only: the output path and
    # the dispatch callable do not change what is computed
    digestable = {k: v for k, v in args_dict.items()
                  if k not in ("output", "func") and not callable(v)}
    payload = json.dumps(digestable, sort_keys=True, default=str).encode()
    lines = [
        f"# tool=blindcrb {__version__}",
        f"# command={command}",
        f"# schema={schema}",
        f"# args_sha256={_sha256_bytes(payload)}",
    ]
    for path in inputs:
        lines.append(f"# input={path} sha256={_sha256_file(path)}")
    lines.extend(f"# {line}" for line in extra)
    lines.append(f"# timestamp={datetime.now(timezone.utc).isoformat()}")
    return lines


def _emit_csv(out_path, manifest, header, rows):
    buf = io.StringIO()
    for line in manifest:
        buf.write(line + "\n")
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if out_path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _resolve_field(ch: Channel, requested):
    if requested in (None, "auto"):
        return ch
    if requested == ch.field:
        return ch
    if requested == COMPLEX:
        return Channel(ch.coeffs.astype(complex), field=COMPLEX, name=ch.name)
    return realify_channel(ch)


def _fmt(x, nd=6):
    return f"{x:.{nd}g}"


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _channel_fim_and_directions(ch, args):
    """Reduced channel FIM in the representation used for reporting, plus
    predicted null directions."""
    if args.model == DETERMINISTIC:
        rng = stream_rng(args.seed, 0)
        n = args.M + ch.N - 1
        if ch.field == COMPLEX:
            A = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        else:
            A = rng.standard_normal(n)
        full = deterministic_fim(ch, A, args.sigma_v2, args.M)
        reduced = deterministic_reduced_fim(ch, A, args.sigma_v2, args.M)
        if ch.field == COMPLEX:
            full = full.realified()
            Jred = reduced.realified().J
            h = ch.h
            predicted = [
                ("scale", np.concatenate([h.real, h.imag])),
                ("phase", phase_direction(h)),
            ]
        else:
            Jred = reduced.J
            predicted = [("scale", ch.h)]
        return full, Jred, predicted, A
    cfg = GaussianModelConfig(args.sigma_a2, args.sigma_v2, args.M)
    if ch.field == COMPLEX:
        fim = gaussian_fim_complex(ch, cfg).realified()
        predicted = [("phase", phase_direction(ch.h))]
    else:
        fim = gaussian_fim_real(ch, cfg)
        predicted = []
    Jred = schur_reduce(fim, "h")
    return fim, Jred, predicted, None


def cmd_analyze(args):
    ch = _resolve_field(load_channel(args.channel), args.field)
    print(f"channel {ch.name}: m={ch.m} N={ch.N} field={ch.field}")
    zeros = subchannel_zeros(ch)
    for l, z in enumerate(zeros):
        zs = ", ".join(_fmt(complex(r)) for r in z) if z.size else "(none)"
        print(f"  subchannel {l} zeros: {zs}")
    cz = common_zeros(ch, tol=args.zero_tol)
    print(f"  common zeros: "
          + (", ".join(_fmt(complex(r)) for r in cz) if cz.size else "(none)"))
    dec = reducible_decompose(ch, tol=args.zero_tol)
    print(f"  reducible: {'yes' if dec.N_c > 1 else 'no'} "
          f"(N_c={dec.N_c}, N_I={dec.N_I}, residual={dec.residual:.2e})")

    full, Jred, predicted, _ = _channel_fim_and_directions(ch, args)
    rep_full = analyze_singularities(full, tol=args.rank_tol)
    rep_red = analyze_singularities(Jred, predicted, tol=args.rank_tol)
    print(f"model {args.model}: full FIM dim={full.dim} rank={rep_full.rank} "
          f"nullity={rep_full.nullity}")
    print(f"  channel-reduced FIM rank={rep_red.rank} nullity={rep_red.nullity}")
    for name, ang, ok in rep_red.matches:
        print(f"  predicted null direction '{name}': angle={ang:.2e} "
              f"{'MATCH' if ok else 'NO MATCH'}")

    if args.model == DETERMINISTIC:
        verdict = deterministic_verdict(ch, args.M, tol=args.zero_tol)
        realified = ch.field == COMPLEX
        rec = verdict_vs_fim(verdict, rep_full, realified=realified)
    else:
        verdict = gaussian_verdict(ch, GaussianModelConfig(args.sigma_a2,
                                                           args.sigma_v2, args.M),
                                   tol=args.zero_tol)
        rec = verdict_vs_fim(verdict, rep_full)
    print(f"verdict: identifiable up to {verdict.identifiable_up_to}; "
          f"predicted nullity {rec.predicted}")
    for reason in verdict.reasons:
        print(f"  - {reason}")
    print(f"predicted vs computed: {'CONSISTENT' if rec.passed else 'MISMATCH'} "
          f"({rec.detail})")
    return 0


# ---------------------------------------------------------------------------
# crb
# ---------------------------------------------------------------------------


def _per_coefficient_diag(crb, n_coeffs, field):
    d = np.real(np.diag(crb))
    if field == COMPLEX and d.size == 2 * n_coeffs:
        return d[:n_coeffs] + d[n_coeffs:]
    return d[:n_coeffs]


def cmd_crb(args):
    ch = _resolve_field(load_channel(args.channel), args.field)
    fargs = argparse.Namespace(model=args.model, M=args.M, sigma_a2=args.sigma_a2,
                               sigma_v2=args.sigma_v2, seed=args.seed)
    _, Jred, _, _ = _channel_fim_and_directions(ch, fargs)
    n = ch.m * ch.N
    # constraints on complex deterministic channels act on the realified FIM,
    # except the reducible ones, which act in the complex domain
    dec = None
    try:
        dec = reducible_decompose(ch, tol=args.zero_tol)
    except Exception:
        dec = None
    field_for_constraints = ch.field

    def load_linear(path):
        with open(path, "r", encoding="utf-8") as fh:
            return np.asarray(json.load(fh), dtype=float)

    h0 = ch.h
    h0_for_constraints = h0
    rows = []
    for spec in args.constraint:
        try:
            cs = parse_constraint(spec, h0_for_constraints, field_for_constraints,
                                  dec=dec, linear_loader=load_linear)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if cs is None:
            res = minimal_crb(Jred)
        elif cs.kind.startswith("reducible") and ch.field == COMPLEX:
            # reducible constraints act in the complex channel coordinates;
            # they are deterministic-model constructs here
            if args.model != DETERMINISTIC:
                print("error: reducible constraints on a complex channel are "
                      "supported for the deterministic model only", file=sys.stderr)
                return 2
            rng = stream_rng(args.seed, 0)
            nA = args.M + ch.N - 1
            A = (rng.standard_normal(nA) + 1j * rng.standard_normal(nA)) / np.sqrt(2)
            Jc = deterministic_reduced_fim(ch, A, args.sigma_v2, args.M).J
            res = constrained_crb(Jc, cs)
        else:
            res = constrained_crb(Jred, cs)
        diag = _per_coefficient_diag(res.crb, n, ch.field)
        rows.append([spec, _fmt(res.trace, 12), int(res.bounded)]
                    + [_fmt(v, 9) for v in diag])
    header = ["constraint", "trace", "bounded"] + [f"coef{i}" for i in range(n)]
    manifest = _manifest_lines("crb", vars(args), [args.channel], _SCHEMAS["crb"],
                               extra=[f"channel={ch.name} m={ch.m} N={ch.N} "
                                      f"field={ch.field}", f"seed={args.seed}"])
    _emit_csv(args.output, manifest, header, rows)
    return 0


# ---------------------------------------------------------------------------
# sweep-known
# ---------------------------------------------------------------------------


def cmd_sweep_known(args):
    ch = _resolve_field(load_channel(args.channel), args.field)
    fargs = argparse.Namespace(model=args.model, M=args.M, sigma_a2=args.sigma_a2,
                               sigma_v2=args.sigma_v2, seed=args.seed)
    _, Jred, _, _ = _channel_fim_and_directions(ch, fargs)
    baseline = minimal_crb(Jred).trace
    n = ch.m * ch.N
    rows = []
    for i in range(n):
        cs = parse_constraint(f"known:{i}", ch.h, ch.field)
        res = constrained_crb(Jred, cs)
        rows.append([i, _fmt(abs(ch.h[i]), 9), _fmt(res.trace, 12),
                     int(res.bounded), _fmt(baseline, 12)])
    header = ["coef_index", "coef_abs", "trace", "bounded", "minimal_trace"]
    manifest = _manifest_lines("sweep-known", vars(args), [args.channel],
                               _SCHEMAS["sweep-known"],
                               extra=[f"channel={ch.name}", f"seed={args.seed}"])
    _emit_csv(args.output, manifest, header, rows)
    return 0


# ---------------------------------------------------------------------------
# fim-check
# ---------------------------------------------------------------------------


def cmd_fim_check(args):
    ch = _resolve_field(load_channel(args.channel), args.field)
    cfg = ExperimentConfig(
        channel=ch, model=args.model, M=args.M, sigma_a2=args.sigma_a2,
        sigma_v2=args.sigma_v2, trials=args.trials, seed=args.seed,
    )
    est = score_covariance_fim(cfg)
    sv2 = args.sigma_v2 * args.corrupt_sigma
    if args.model == DETERMINISTIC:
        A = experiment_symbols(cfg)
        fim = deterministic_fim(ch, A, sv2, args.M)
    else:
        gcfg = GaussianModelConfig(args.sigma_a2, sv2, args.M)
        fim = gaussian_fim_complex(ch, gcfg) if ch.field == COMPLEX \
            else gaussian_fim_real(ch, gcfg)
    J = fim.realified().J if ch.field == COMPLEX else fim.J
    diff = est.J_hat - J
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(est.std_err > 0, diff / est.std_err,
                     np.where(diff == 0, 0.0, np.inf))
    zmax = float(np.abs(z).max())
    tr_rel = abs(float(np.trace(est.J_hat) - np.trace(J))) / abs(float(np.trace(J)))
    ok = zmax <= args.z_gate and tr_rel <= args.trace_gate
    manifest = _manifest_lines(
        "fim-check", vars(args), [args.channel], _SCHEMAS["fim-check"],
        extra=[f"result={'pass' if ok else 'fail'}"])
    header = ["metric", "value", "gate", "pass"]
    rows = [
        ["max_abs_z", _fmt(zmax, 9), _fmt(args.z_gate), int(zmax <= args.z_gate)],
        ["trace_rel_err", _fmt(tr_rel, 9), _fmt(args.trace_gate),
         int(tr_rel <= args.trace_gate)],
        ["trials", str(est.trials), "", 1],
        ["fim_dim", str(J.shape[0]), "", 1],
    ]
    _emit_csv(args.output, manifest, header, rows)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# mse
# ---------------------------------------------------------------------------


def cmd_mse(args):
    with open(args.experiment, "r", encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            print(f"{args.experiment}:{exc.lineno}: invalid JSON ({exc.msg})",
                  file=sys.stderr)
            return 2
    chan_path = spec["channel"]
    if not os.path.isabs(chan_path):
        chan_path = os.path.join(os.path.dirname(os.path.abspath(args.experiment)),
                                 chan_path)
    ch = load_channel(chan_path)
    cfg = ExperimentConfig(
        channel=ch,
        model=spec.get("model", DETERMINISTIC),
        M=int(spec.get("M", 100)),
        sigma_a2=float(spec.get("sigma_a2", 1.0)),
        trials=int(spec.get("trials", 200)),
        seed=int(spec.get("seed", args.seed)),
        ls_sweeps=int(spec.get("ls_sweeps", 30)),
        init_scale=float(spec.get("init_scale", 1e-2)),
    )
    snrs = spec.get("snr_db", [10.0, 20.0, 30.0])
    rows_data = mse_vs_crb_experiment(cfg, snrs)
    warn = []
    total_nonconv = sum(r.nonconverged for r in rows_data)
    if total_nonconv > 0.5 * cfg.trials * len(snrs):
        warn.append("warning=estimator non-convergence rate above 50%")
    manifest = _manifest_lines("mse", {**vars(args), **spec},
                               [args.experiment, chan_path], _SCHEMAS["mse"],
                               extra=[f"channel={ch.name}",
                                      f"seed={cfg.seed}"] + warn)
    header = ["snr_db", "sigma_v2", "crb_trace", "trials", "nonconverged",
              "mse_NO", "se_NO", "mse_LS", "se_LS", "mse_LIN", "se_LIN"]
    rows = []
    for r in rows_data:
        rows.append([
            _fmt(r.snr_db), _fmt(r.sigma_v2, 9), _fmt(r.crb_trace, 12),
            r.trials, r.nonconverged,
            _fmt(r.mse["NO"], 9), _fmt(r.std_err["NO"], 9),
            _fmt(r.mse["LS"], 9), _fmt(r.std_err["LS"], 9),
            _fmt(r.mse["LIN"], 9), _fmt(r.std_err["LIN"], 9),
        ])
    _emit_csv(args.output, manifest, header, rows)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(p, gaussian_defaults=False):
    p.add_argument("channel", help="channel JSON file")
    p.add_argument("--model", choices=[DETERMINISTIC, GAUSSIAN],
                   default=DETERMINISTIC)
    p.add_argument("--field", choices=["auto", REAL, COMPLEX], default="auto",
                   help="override the channel's field tag (real doubles the "
                        "subchannels of a complex channel)")
    p.add_argument("--M", type=int, default=20, help="burst length")
    p.add_argument("--sigma-a2", dest="sigma_a2", type=float, default=1.0)
    p.add_argument("--sigma-v2", dest="sigma_v2", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--zero-tol", dest="zero_tol", type=float, default=1e-6,
                   help="root clustering tolerance")
    p.add_argument("--rank-tol", dest="rank_tol", type=float, default=1e-8,
                   help="relative eigenvalue threshold for FIM rank")
    p.add_argument("--output", "-o", default=None, help="CSV output path (default stdout)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blindcrb",
        description="Fisher information and constrained CRBs for blind FIR "
                    "multichannel estimation",
    )
    parser.add_argument("--version", action="version",
                        version=f"blindcrb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="zero structure, verdicts, FIM rank")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("crb", help="constrained CRB per constraint spec")
    _add_common(p)
    p.add_argument("--constraint", action="append", required=True,
                   metavar="SPEC", help=f"one of: {CONSTRAINT_GRAMMAR} "
                   "(repeatable; known:IDX uses 0-based stacked indices)")
    p.set_defaults(func=cmd_crb)

    p = sub.add_parser("sweep-known",
                       help="CRB trace over the known-coefficient index")
    _add_common(p)
    p.set_defaults(func=cmd_sweep_known)

    p = sub.add_parser("fim-check",
                       help="analytic FIM vs Monte Carlo score covariance")
    _add_common(p)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--z-gate", dest="z_gate", type=float, default=4.0,
                   help="max per-entry z-score allowed")
    p.add_argument("--trace-gate", dest="trace_gate", type=float, default=0.05,
                   help="max relative trace error allowed")
    p.add_argument("--corrupt-sigma", dest="corrupt_sigma", type=float, default=1.0,
                   help="scale the analytic-side noise variance (negative-control "
                        "knob; 1.0 = honest comparison)")
    p.set_defaults(func=cmd_fim_check)

    p = sub.add_parser("mse", help="MSE vs CRB experiment from a JSON config")
    p.add_argument("experiment", help="experiment JSON file")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_mse)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
