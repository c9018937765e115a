"""Task execution, CSV emission and run manifests."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .anticonc import ANTICONC_CSV_FIELDS, proj_anticonc_experiment
from .config import ExperimentConfig, resolve_d, task_stream_seed, xi_of
from .ensemble import ShiftSpec, beta_of_xi, sample_matrix, shift_and_scale
from .lawcheck import LAW_CSV_FIELDS, law_report
from .linalg import svd
from .potential import (POTENTIAL_CSV_FIELDS, DeltaSchedule, TruncationIndices,
                        potential_report, u_circ)
from .process import WALK_CSV_FIELDS, ProcessConfig, replay_chain, run_process, simulate_drift_walk
from .quasirandom import CERT_CSV_FIELDS, FAIL, CertificateConfig, certify, u_r_witness_holds

PROCESS_CSV_FIELDS = ("seed", "n", "d", "eps", "z_re", "z_im", "h_final", "U_n", "T_n",
                      "delta_sum", "chain_slack", "acceptance_rate", "trace")
CSV_FIELDS = {"law": LAW_CSV_FIELDS, "potential": POTENTIAL_CSV_FIELDS,
              "process": PROCESS_CSV_FIELDS, "certify": CERT_CSV_FIELDS,
              "anticonc": ANTICONC_CSV_FIELDS, "walk": WALK_CSV_FIELDS}
MANIFEST = "manifest.json"
SANDWICH_TOL = 1e-9


def _z(params) -> complex:
    return complex(params["z"])


def _task_law(cfg, params, seed, stream):
    d, _ = resolve_d(params)
    rep = law_report(params["n"], d, params["eps"], _z(params), xi_of(params), stream,
                     strict=cfg.strict_p)
    row = rep.csv_row() | {"seed": seed}
    n, z = params["n"], _z(params)
    metrics = {"dev": rep.T1_dev,
               "margin": (4.0 * (abs(z) ** 2 + 1.0) * n - rep.hs_norm_sq) / n}
    return [row], {}, {}, metrics


def _task_potential(cfg, params, seed, stream):
    n, eps, z = params["n"], params["eps"], _z(params)
    d, p = resolve_d(params)
    A = sample_matrix(n, n, p, xi_of(params), stream, strict=cfg.strict_p).to_dense()
    shift = ShiftSpec(z, "rescaled", d)
    m = TruncationIndices.of(n, eps).m
    full = svd(shift_and_scale(A, shift), seed=stream).values
    minor = svd(shift_and_scale(A[:m, :m], shift), seed=stream).values
    rep = potential_report(full, minor, n=n, eps=eps, z=z, d=d, seed=seed)
    upper, lower = rep.sandwich_slacks()
    literal = rep.U_n - rep.T1 / ((1 - eps / 4) * (1 - eps))
    checks = {"T_n<=T2": upper >= -SANDWICH_TOL, "U_n>=T1*n/keep": lower >= -SANDWICH_TOL}
    metrics = {"dev": abs(rep.T1 - rep.U_circ), "margin": min(upper, lower),
               "literal_margin": literal}
    return [rep.csv_row()], {}, checks, metrics


def _task_process(cfg, params, seed, stream):
    d, _ = resolve_d(params)
    pc = ProcessConfig(params["n"], params["eps"], d, xi_of(params), _z(params), stream,
                       C_sched=params["C_sched"], strict=cfg.strict_p)
    trace = run_process(pc)
    replay = replay_chain(trace)
    name = f"traces/process_{stream:016x}.csv"
    s = trace.summary()
    row = {"seed": seed, "n": pc.n, "d": d, "eps": pc.eps, "z_re": s["z_re"], "z_im": s["z_im"],
           "h_final": s["h_final"], "U_n": s["U_n"], "T_n": s["T_n"], "delta_sum": s["delta_sum"],
           "chain_slack": s["chain_slack"], "acceptance_rate": s["acceptance_rate"],
           "trace": name}
    metrics = {"dev": abs(trace.U_n - u_circ(pc.z)), "margin": trace.chain_slack,
               "h_zero": float(trace.h_final == 0)}
    return [row], {name: trace.to_csv()}, {"chain_replay": replay.ok}, metrics


def _task_certify(cfg, params, seed, stream):
    n = params["n"]
    d, p = resolve_d(params)
    xi = xi_of(params)
    beta = beta_of_xi(xi)
    cc = CertificateConfig(beta=beta, c_star=params["c_star"], C_prime=params["C_prime"],
                           B_big_O=params["B_big_O"], subset_trials=max(cfg.trials, 100),
                           seed=stream)
    A = sample_matrix(n, n, p, xi, stream, strict=cfg.strict_p).to_dense()
    rep = certify(A, n, n, cc, n=n, d=d)
    checks = {}
    ev = rep.events["U_r"]
    if ev.verdict == FAIL:
        checks["U_r_witness"] = u_r_witness_holds(A, ev.witness, n=n, d=d, beta=beta)
    rows = rep.csv_rows(seed=seed, n=n, d=d, t=n, r=n)
    ok = sum(e.ok for e in rep.events.values())
    return rows, {}, checks, {"dev": math.nan, "margin": ok / len(rep.events)}


def _task_anticonc(cfg, params, seed, stream):
    n, z, eps = params["n"], _z(params), params["eps"]
    d, p = resolve_d(params)
    xi = xi_of(params)
    A = sample_matrix(n, n, p, xi, stream, strict=cfg.strict_p).to_dense()
    M = A - z * np.eye(n)
    sched = DeltaSchedule.build(n, d, params["C_sched"])
    r = n - params["r_offset"]
    exp = proj_anticonc_experiment(M, n, r, p=p, xi=xi, d=d, eps=eps, schedule=sched,
                                   trials=cfg.trials, seed=stream, strict=cfg.strict_p)
    row = exp.csv_row(seed=seed, n=n, d=d, z=z)
    return [row], {}, {}, {"dev": exp.freq, "margin": exp.bound_shape_value - exp.freq}


def _task_walk(cfg, params, seed, stream):
    res = simulate_drift_walk(params["T"], params["q"], adversary=params["adversary"],
                              trials=cfg.trials, seed=stream)
    row = res.csv_row() | {"seed": seed}
    return [row], {}, {"p_zero>=bound": res.passed}, {"dev": 1 - res.p_zero,
                                                     "margin": res.p_zero - res.bound}


TASKS = {"law": _task_law, "potential": _task_potential, "process": _task_process,
         "certify": _task_certify, "anticonc": _task_anticonc, "walk": _task_walk}


def execute_task(cfg: ExperimentConfig, task: dict) -> dict:
    """Run one (params, seed) task; never raises."""
    params, seed = task["params"], task["seed"]
    stream = task_stream_seed(params, seed)
    start = time.perf_counter()
    try:
        rows, files, checks, metrics = TASKS[cfg.experiment](cfg, params, seed, stream)
        checks = {k: bool(v) for k, v in checks.items()}
        status = "ok" if all(checks.values()) else "assertion-failed"
        error = None
    except Exception as exc:  # recorded per task, the run continues
        rows, files, checks, metrics = [], {}, {}, {}
        status, error = "error", "".join(traceback.format_exception_only(type(exc), exc)).strip()
    return {"params": params, "seed": seed, "stream": f"{stream:016x}", "status": status,
            "checks": checks, "metrics": {k: _jsonable(v) for k, v in metrics.items()},
            "error": error, "rows": rows, "files": files,
            "wall_seconds": time.perf_counter() - start}


def _jsonable(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _run_pair(args):
    return execute_task(*args)


def _csv_text(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _cell(row[k]) for k in fields})
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, output: str | Path | None = None,
                   workers: int | None = None) -> dict:
    """Execute every task, write CSVs and the manifest, return the manifest."""
    out = Path(output if output is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    tasks = cfg.tasks()
    n_workers = workers or cfg.resolved_workers()
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_pair, [(cfg, t) for t in tasks]))
    else:
        results = [execute_task(cfg, t) for t in tasks]
    # Single writer: everything below runs in the driver, in task order.
    rows = [row for res in results for row in res["rows"]]
    main_csv = out / f"{cfg.experiment}.csv"
    main_csv.write_text(_csv_text(CSV_FIELDS[cfg.experiment], rows))
    outputs = [main_csv]
    for res in results:
        for name, text in res["files"].items():
            path = out / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
            outputs.append(path)
    manifest = {
        "artifact_version": __version__,
        "experiment": cfg.experiment,
        "config_digest": cfg.digest(),
        "config": cfg.model_dump(mode="json"),
        "started_at": started,
        "finished_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "wall_seconds": time.perf_counter() - t0,
        "workers": n_workers,
        "tasks": [{k: v for k, v in res.items() if k not in ("rows", "files")}
                  for res in results],
        "outputs": {str(p.relative_to(out)): sha256_file(p) for p in outputs},
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def manifest_exit_code(manifest: dict) -> int:
    return 0 if all(t["status"] == "ok" for t in manifest["tasks"]) else 1


class ManifestError(ValueError):
    pass


def load_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    if not Path(directory).is_dir():
        raise ManifestError(f"{directory} is not a directory")
    if not path.exists():
        raise ManifestError(f"no manifest in {directory}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"corrupt manifest {path}: {exc}") from exc
    if not isinstance(data, dict) or "tasks" not in data or "experiment" not in data:
        raise ManifestError(f"corrupt manifest {path}: missing tasks or experiment")
    return data


SUMMARY_FIELDS = ("experiment", "tasks", "passed", "pass_rate", "mean_dev", "min_margin")


def summarize_manifests(manifests: list[dict]) -> list[dict]:
    groups: dict[str, list] = {}
    for man in manifests:
        groups.setdefault(man["experiment"], []).extend(man["tasks"])
    rows = []
    for exp in sorted(groups):
        tasks = groups[exp]
        passed = sum(t["status"] == "ok" for t in tasks)
        devs = [_as_float(t["metrics"].get("dev")) for t in tasks if t["metrics"]]
        margins = [_as_float(t["metrics"].get("margin")) for t in tasks if t["metrics"]]
        devs = [v for v in devs if not math.isnan(v)]
        margins = [v for v in margins if not math.isnan(v)]
        rows.append({"experiment": exp, "tasks": len(tasks), "passed": passed,
                     "pass_rate": passed / len(tasks) if tasks else math.nan,
                     "mean_dev": float(np.mean(devs)) if devs else math.nan,
                     "min_margin": float(np.min(margins)) if margins else math.nan})
    return rows


def _as_float(v) -> float:
    if v is None:
        return math.nan
    return float(v)


def format_table(rows: list[dict]) -> str:
    head = f"{'experiment':<12}{'tasks':>7}{'pass':>11}{'rate':>8}{'mean_dev':>14}{'min_margin':>14}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['experiment']:<12}{r['tasks']:>7}{str(r['passed']) + '/' + str(r['tasks']):>11}"
                     f"{r['pass_rate']:>8.3f}{r['mean_dev']:>14.6g}{r['min_margin']:>14.6g}")
    return "\n".join(lines)


def summarize_directory(directory) -> tuple[str, str]:
    """(fixed-width table, CSV twin) for the manifest in ``directory``."""
    rows = summarize_manifests([load_manifest(directory)])
    return format_table(rows), _csv_text(SUMMARY_FIELDS, rows)
