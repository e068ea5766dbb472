"""Command-line entry point: selftest, gen-data, train, eval, bench, predict.

Every subcommand resolves one RunConfig (file plus --set overrides) before
touching anything else, funnels all randomness through named seed streams,
and writes its outputs plus a manifest under the --out directory. Exit codes:
0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import random
import sys

from . import autodiff
from .config import ConfigError, RunConfig, load_config
from .dataio import DatasetFile, generate_dataset, split
from .evalbench import (
    AccuracyReport,
    BENCH_COLUMNS,
    bench,
    chassis_verdict,
    derive_annulus,
    evaluate_model,
    fmp_verdict,
)
from .kinematics import default_table, fk_chain, verify_fk_probes
from .predictor import (
    Checkpoint,
    LOG_COLUMNS,
    TrainConfig,
    predict_with_resampling,
    train_cmp,
    train_fmp,
)


def _load_run_config(args) -> RunConfig:
    text = ""
    if getattr(args, "config", None):
        with open(args.config) as fh:
            text = fh.read()
    overrides = {}
    for item in getattr(args, "set", None) or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = val.strip()
    return load_config(text, overrides)


def _ensure_out(cfg: RunConfig, args) -> str:
    out = getattr(args, "out", None) or cfg["out.dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _write_manifest(out_dir: str, cfg: RunConfig, command: str, extra: dict) -> None:
    lines = [f"command = {command}"]
    for k in sorted(extra):
        lines.append(f"{k} = {extra[k]}")
    lines.extend(cfg.manifest_lines())
    with open(os.path.join(out_dir, "run-manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_selftest(args) -> int:
    failures = []
    suites = []

    def suite(name, total, bad, detail=""):
        suites.append((name, total, total - bad))
        if bad:
            failures.append(f"{name}: {bad} failed {detail}".rstrip())

    rng = random.Random("selftest")
    bad = 0
    ops = []
    for _ in range(40):
        x = rng.uniform(-2.0, 2.0)
        y = rng.uniform(-2.0, 2.0)
        checks = [
            ("mul_add", lambda v: v[0] * v[1] + v[0], (x, y)),
            ("tanh_chain", lambda v: autodiff.tanh(v[0] * 0.7 + v[1] * v[1]), (x, y)),
            ("atan2", lambda v: autodiff.atan2_diff(v[0], v[1] + 3.0), (x, y)),
            ("sqrt_guarded", lambda v: autodiff.sqrt_guarded(v[0] * v[0] + v[1] * v[1] + 0.1),
             (x, y)),
        ]
        for name, f, pt in checks:
            worst = autodiff.grad_check(f, pt)
            if worst > 1e-4:
                bad += 1
                ops.append(name)
    suite("gradient-checks", 160, bad, f"(ops: {sorted(set(ops))})" if ops else "")

    table = default_table()
    try:
        verify_fk_probes()
        probes_bad = 0
    except RuntimeError:
        probes_bad = 1
    suite("fk-probes", 3, probes_bad)

    from .kinematics import analytic_ik, draw_nonsingular_joints
    bad = 0
    n = 300
    for _ in range(n):
        q = draw_nonsingular_joints(rng, table)
        H = fk_chain(q, table)
        sol = analytic_ik(H, table)
        hit = False
        for b in range(8):
            joints = sol.joints[b]
            if joints is not None and all(
                    abs(autodiff.wrap_angle(a - bq)) < 1e-6 for a, bq in zip(joints, q)):
                hit = True
                break
        bad += not hit
    suite("ik-round-trip", n, bad)

    from .losses import LossWeights, loss_distance
    from .evalbench import Annulus
    reach = Annulus(0.5, 1.0, 0.0)
    examples = [
        (1.2, (1.2 - 1.0) ** 2), (0.4, (0.5 - 0.4) ** 2), (0.7, 0.0)]
    bad = 0
    for radius, want in examples:
        got = autodiff.value_of(loss_distance(
            (0.0, 0.0, 0.0), (0.0, 0.0, 0.0, radius, 0.0, 0.5), reach))
        bad += abs(got - want) > 1e-12
    suite("loss-branches", len(examples), bad)

    for name, total, passed in suites:
        print(f"{name}: {passed}/{total} passed")
    if failures:
        for f in failures:
            print(f"FAIL {f}")
        return 1
    print("selftest ok")
    return 0


def cmd_gen_data(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _ensure_out(cfg, args)
    n = args.n if args.n is not None else cfg["data.n"]
    seed = args.seed if args.seed is not None else cfg["data.seed"]
    data = generate_dataset(n, seed, cfg.table(), cfg.mount())
    path = args.data or os.path.join(out_dir, f"dataset_n{n}_s{seed}.csv")
    data.save(path)
    _write_manifest(out_dir, cfg, "gen-data", {"n": n, "seed": seed, "path": path})
    print(f"wrote {len(data.records)} records to {path}")
    return 0


MODEL_CHOICES = ("cmp1", "cmp2", "fmp", "nnreg")


def _train_for_model(model: str, cfg: RunConfig, parts):
    if model in ("cmp1", "cmp2"):
        tc = cfg.train_config("cmp", U=1 if model == "cmp1" else 0)
        return train_cmp(parts, tc)
    if model == "fmp":
        return train_fmp(parts, cfg.train_config("fmp"))
    from .baselines import nn_regression_train
    return nn_regression_train(parts, cfg.train_config("cmp"))


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _ensure_out(cfg, args)
    data = DatasetFile.load(args.data, expect_table=cfg.table())
    parts = split(data, (cfg["split.train"], cfg["split.val"], cfg["split.test"]),
                  cfg["split.seed"])
    try:
        result = _train_for_model(args.model, cfg, parts)
    except RuntimeError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        print("rerun with a lower train.lr or different train.seed", file=sys.stderr)
        return 1
    ckpt_path = os.path.join(out_dir, f"{args.model}.ckpt")
    result.checkpoint.save(ckpt_path)
    log_path = os.path.join(out_dir, f"{args.model}_train_log.csv")
    with open(log_path, "w") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in result.log_rows:
            fh.write(",".join("" if row.get(k) is None else f"{row[k]:.10g}"
                              for k in LOG_COLUMNS) + "\n")
    _write_manifest(out_dir, cfg, "train",
                    {"model": args.model, "data": args.data,
                     "checkpoint": ckpt_path, "epochs": len(result.log_rows),
                     "final_loss": f"{result.final_loss:.17g}"})
    print(f"checkpoint {ckpt_path} final_loss {result.final_loss:.6g} "
          f"epochs {len(result.log_rows)}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _ensure_out(cfg, args)
    table = cfg.table()
    ckpt = Checkpoint.load(args.checkpoint, expect_table=table)
    data = DatasetFile.load(args.data, expect_table=table)
    parts = split(data, (cfg["split.train"], cfg["split.val"], cfg["split.test"]),
                  cfg["split.seed"])
    records = {"train": parts.train, "val": parts.val, "test": parts.test}[args.split]
    mount = cfg.mount()
    reach = derive_annulus(table)
    params = ckpt.to_params()
    report = evaluate_model(params, records, ckpt.kind, table, mount, reach)
    rows = [("single", report)]
    if args.resample:
        verdicts = []
        for i, rec in enumerate(records):
            rng = random.Random(f"{cfg['bench.seed']}/eval/{i}")
            pr = predict_with_resampling(ckpt, rec.target,
                                         cfg["predict.max_attempts"], rng)
            if pr.success:
                cfgv = pr.config
                if ckpt.kind == "cmp":
                    verdicts.append(chassis_verdict(cfgv[:3], rec.target, table,
                                                    mount, reach))
                else:
                    verdicts.append(fmp_verdict(cfgv[:3], cfgv[3:], rec.target,
                                                table, mount, reach))
            else:
                from .evalbench import FeasibilityVerdict
                verdicts.append(FeasibilityVerdict(False, "no_ik_solution"))
        rows.append(("resample", AccuracyReport.from_verdicts(verdicts)))
    path = os.path.join(out_dir, "accuracy.csv")
    reasons = sorted({r for _, rep in rows for r in rep.reasons})
    with open(path, "w") as fh:
        fh.write("mode,n,successes,acc," + ",".join(reasons) + "\n")
        for mode, rep in rows:
            fh.write(f"{mode},{rep.n},{rep.successes},{rep.acc:.10g},"
                     + ",".join(str(rep.reasons.get(r, 0)) for r in reasons) + "\n")
    _write_manifest(out_dir, cfg, "eval",
                    {"checkpoint": args.checkpoint, "data": args.data,
                     "split": args.split})
    for mode, rep in rows:
        print(f"{mode} ACC {rep.acc:.4f} ({rep.successes}/{rep.n})")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _ensure_out(cfg, args)
    table = cfg.table()
    mount = cfg.mount()
    data = DatasetFile.load(args.data, expect_table=table)
    parts = split(data, (cfg["split.train"], cfg["split.val"], cfg["split.test"]),
                  cfg["split.seed"])
    tasks = parts.test[:cfg["bench.tasks"]]
    from . import baselines
    methods = {}
    wanted = [m.strip() for m in args.methods.split(",") if m.strip()]
    for name in wanted:
        if name == "rs":
            methods[name] = baselines.make_rs_method(cfg.sampler(), table=table, mount=mount)
        elif name == "ebs":
            methods[name] = baselines.make_ebs_method(cfg.sampler("facing"),
                                                      table=table, mount=mount)
        elif name in ("cmp", "nnreg", "fmp"):
            path = getattr(args, f"ckpt_{name}", None)
            if not path:
                print(f"method {name} needs --ckpt-{name}", file=sys.stderr)
                return 2
            ckpt = Checkpoint.load(path, expect_table=table)
            methods[name] = baselines.make_network_method(ckpt, table=table, mount=mount)
        elif name == "rs_dls":
            methods[name] = baselines.make_rs_dls_method(cfg.sampler(), cfg.dls(),
                                                         table=table, mount=mount)
        elif name == "wbrs":
            methods[name] = baselines.make_whole_body_rs_method(
                cfg.sampler(), cfg["bench.cap_ms"], table=table, mount=mount)
        else:
            print(f"unknown method {name!r}", file=sys.stderr)
            return 2
    # KINET_THREADS caps bench parallelism; per-phase wall timings are the
    # product here, so anything above one worker is clamped back to serial.
    threads = os.environ.get("KINET_THREADS", "1")
    try:
        threads = max(1, int(threads))
    except ValueError:
        raise ConfigError(f"KINET_THREADS must be an integer, got {threads!r}")
    if threads > 1:
        print("KINET_THREADS > 1 requested; running serially to keep timings clean",
              file=sys.stderr)
        threads = 1
    report, rows = bench(methods, tasks, cfg["bench.seed"], cfg["bench.repeats"])
    rows_path = os.path.join(out_dir, "bench_rows.csv")
    with open(rows_path, "w") as fh:
        fh.write(",".join(BENCH_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.10g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    summary_path = os.path.join(out_dir, "bench_summary.csv")
    with open(summary_path, "w") as fh:
        fh.write("method,mean_attempts,mean_sample_ms,mean_check_ms,"
                 "mean_total_ms,success_rate,speedup_vs_rs\n")
        for row in report.table_rows():
            fh.write(",".join("" if v is None else
                              (f"{v:.10g}" if isinstance(v, float) else str(v))
                              for v in row) + "\n")
    _write_manifest(out_dir, cfg, "bench",
                    {"methods": ",".join(wanted), "tasks": len(tasks),
                     "data": args.data, "threads": threads})
    for row in report.table_rows():
        speed = "" if row[6] is None else f" speedup {row[6]:.2f}x"
        print(f"{row[0]}: attempts {row[1]:.2f} total {row[4]:.3f} ms "
              f"success {row[5]:.3f}{speed}")
    return 0


def cmd_predict(args) -> int:
    cfg = _load_run_config(args)
    table = cfg.table()
    ckpt = Checkpoint.load(args.checkpoint, expect_table=table)
    try:
        pose = tuple(float(v) for v in args.pose.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --pose: {exc}") from exc
    if len(pose) != 6:
        raise ConfigError("--pose needs 6 comma-separated numbers")
    rng = random.Random(f"{cfg['bench.seed']}/predict")
    result = predict_with_resampling(ckpt, pose, cfg["predict.max_attempts"], rng)
    if result.success:
        vals = ",".join(f"{v:.10g}" for v in result.config)
        print(f"RESULT ok attempts={result.attempts} config={vals}")
        return 0
    kind = "deterministic" if result.deterministic_failure else "exhausted"
    print(f"RESULT fail attempts={result.attempts} cause={kind}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kinet",
                                 description="kinematics-informed configuration "
                                             "prediction toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("selftest", help="gradient checks, IK round-trips, loss branches")
    p.set_defaults(fn=cmd_selftest)

    p = sub.add_parser("gen-data", help="generate a dataset CSV")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--data", help="explicit output path")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a predictor")
    common(p)
    p.add_argument("--model", required=True, choices=MODEL_CHOICES)
    p.add_argument("--data", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="accuracy report for a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--resample", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="timing benchmark over methods")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--methods", default="rs,ebs,cmp")
    p.add_argument("--ckpt-cmp", dest="ckpt_cmp")
    p.add_argument("--ckpt-nnreg", dest="ckpt_nnreg")
    p.add_argument("--ckpt-fmp", dest="ckpt_fmp")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("predict", help="one configuration for one pose")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pose", required=True, metavar="PHI,THETA,PSI,X,Y,Z")
    p.set_defaults(fn=cmd_predict)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
