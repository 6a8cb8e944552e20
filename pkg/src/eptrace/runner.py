"""Task dispatch and deterministic result emission."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BandEdge, EptraceError, PoleProximity, StalledAtNonzeroGap
from .hamiltonian import solve_poles
from .linalg import biorthonormalize, eig_general, tolerances
from .scattering import cross_section, peak_count, s_matrix_energy_dependent, trapping_sweep
from .spectral import (
    coalescence_order, encircle, ep_search, ep_two_level, mixing_matrix,
    orthogonality_scan, rigidity_map, trace_branches,
)

__all__ = ["ResultEnvelope", "run", "emit", "CSV_HEADERS"]

CSV_HEADERS = {
    "eig": ["k", "re_lambda", "im_lambda", "width", "re_r", "im_r", "abs_r"],
    "sweep": ["value", "branch", "re_lambda", "im_lambda", "abs_r", "overlap"],
    "ep_find": ["x", "y", "gap", "min_abs_r", "converged"],
    "rigidity_map": ["x", "y", "state", "re_r", "im_r", "abs_r"],
    "cross_section": ["E", "sigma"],
    "trap": None,  # alpha,Gamma_1..Gamma_N,sum_residual
    "encircle": ["theta", "branch", "re_lambda", "im_lambda"],
    "orth_scan": ["x", "y", "i", "j", "overlap", "refined"],
}


def _j(x):
    """Convert numpy/complex values into plain JSON-compatible objects."""
    if isinstance(x, dict):
        return {str(k): _j(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_j(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [_j(float(x.real)), _j(float(x.imag))]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


@dataclass
class ResultEnvelope:
    config: dict
    task: str
    version: str = __version__
    seed: int | None = None
    payload: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    error: dict | None = None
    header: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    @property
    def exit_code(self):
        if self.error is not None:
            return 1
        return 2 if self.warnings else 0

    def warn(self, kind, message, **where):
        self.warnings.append({"kind": kind, "message": message, **_j(where)})

    def to_json(self, include_rows=False):
        doc = {
            "version": self.version,
            "task": self.task,
            "seed": self.seed,
            "config": self.config,
            "status": {0: "ok", 1: "error", 2: "warnings"}[self.exit_code],
            "exit_code": self.exit_code,
            "payload": _j(self.payload),
            "warnings": self.warnings,
            "error": self.error,
        }
        if include_rows:
            doc["table"] = {"header": self.header, "rows": _j(self.rows)}
        return doc


def _family2(model, xk, yk):
    return lambda x, y: model.with_knobs({xk: x, yk: y}).matrix()


def _task_eig(cfg, env):
    model, tol = cfg.model, cfg.tolerances
    sys = biorthonormalize(eig_general(model.matrix()))
    rig = sys.rigidities
    states = []
    for k in range(len(sys)):
        states.append({
            "k": k, "value": sys.values[k], "width": sys.widths[k],
            "rigidity": rig[k], "abs_rigidity": abs(rig[k]),
            "c_norm": sys.c_norms[k], "near_defective": bool(sys.near_defective[k]),
        })
        env.rows.append([k, sys.values[k].real, sys.values[k].imag, sys.widths[k],
                         rig[k].real, rig[k].imag, abs(rig[k])])
        if sys.near_defective[k]:
            env.warn("NearDefective", f"state {k} has vanishing c-norm", state=k)
    mix = mixing_matrix(sys, model.basis())
    env.payload.update({
        "states": states,
        "coalescence_order": coalescence_order(sys, tol.tol_cluster),
        "max_residual": sys.max_residual,
        "max_biorthogonality_defect": sys.max_cross,
        "max_external_mixing": mix.max_offdiag,
    })
    if cfg.task["poles"]:
        poles = solve_poles(model.closed(), model.channels(), tol.max_iter_fix, tol.tol_fix)
        env.payload["poles"] = [
            {"value": p.value, "width": -2 * p.value.imag, "iterations": p.iterations,
             "converged": p.converged} for p in poles
        ]
        for k, p in enumerate(poles):
            if not p.converged:
                env.warn("NoConvergence", f"pole {k}: {p.reason}", state=k)


def _task_sweep(cfg, env):
    model, t = cfg.model, cfg.task
    name = t["parameter"]
    values = t["values"].values()
    traj = trace_branches(lambda v: model.with_knobs({name: v}).matrix(), values,
                          overlap_min=cfg.tolerances.overlap_min)
    for i, v in enumerate(values):
        for b in range(traj.values.shape[1]):
            ov = 1.0 if i == 0 else traj.overlaps[i - 1, b]
            lam = traj.values[i, b]
            env.rows.append([v, b, lam.real, lam.imag, abs(traj.rigidities[i, b]), ov])
    for step in traj.ambiguous_steps:
        env.warn("AmbiguousMatching", f"weak branch overlap at step {step}",
                 step=step, value=values[step])
    env.payload.update({
        "parameter": name, "n_points": len(values), "n_branches": traj.values.shape[1],
        "ambiguous_steps": traj.ambiguous_steps, "final_values": traj.values[-1],
    })


def _task_ep_find(cfg, env):
    model, t, tol = cfg.model, cfg.task, cfg.tolerances
    fam = _family2(model, t["x"], t["y"])
    try:
        cand = ep_search(fam, t["domain"], t["seed"], pair=t["pair"], tol_ep_gap=tol.tol_ep_gap,
                         tol_ep_rig=tol.tol_ep_rig, fd_step=tol.fd_step, max_iter=t["max_iter"])
    except StalledAtNonzeroGap as exc:
        c = exc.candidate
        env.payload.update({"point": c.params, "gap": c.gap, "min_rigidity": c.min_rigidity})
        raise
    env.payload.update({
        "point": cand.params, "gap": cand.gap, "min_rigidity": cand.min_rigidity,
        "converged": cand.converged, "pair": cand.pair_indices, "values": cand.values,
        "iterations": cand.iterations,
    })
    if model.kind == "two_level" and {t["x"], t["y"]} == {"omega_re", "omega_im"}:
        plus, minus = ep_two_level(model.e1, model.gamma1, model.e2, model.gamma2)
        env.payload["analytic_omega_ep"] = [plus, minus]
    env.rows.append([cand.params[0], cand.params[1], cand.gap, cand.min_rigidity, int(cand.converged)])
    if not cand.converged:
        env.warn("NoConvergence", "EP criteria (gap and rigidity) not met",
                 gap=cand.gap, min_rigidity=cand.min_rigidity)


def _task_rigidity_map(cfg, env):
    model, t = cfg.model, cfg.task
    rm = rigidity_map(_family2(model, t["x"], t["y"]), t["xs"].values(), t["ys"].values())
    for ix, x in enumerate(rm.xs):
        for iy, y in enumerate(rm.ys):
            for k, r in enumerate(rm.r[ix, iy]):
                env.rows.append([x, y, k, r.real, r.imag, abs(r)])
                if rm.near_defective[ix, iy, k]:
                    env.warn("NearDefective", "vanishing c-norm", x=x, y=y, state=k)
    a = rm.abs_r
    idx = np.unravel_index(np.argmin(a), a.shape)
    env.payload.update({
        "x": t["x"], "y": t["y"], "shape": list(a.shape),
        "min_abs_r": a[idx], "argmin": [rm.xs[idx[0]], rm.ys[idx[1]], int(idx[2])],
    })


def _task_cross_section(cfg, env):
    model, t = cfg.model, cfg.task
    grid = t["energies"].values()
    cs, ch = model.closed(), model.channels()
    c, c_out = t["c"], t["c_out"]
    if model.coupling == "wideband":
        xs = cross_section(cs, ch, model.alpha, grid, c, c_out)
        for k in xs.pole_points:
            env.warn("PoleProximity", "pseudo-inverse used at a pole", energy=grid[k])
        energies, values = xs.energies, xs.values
    else:
        energies, values = [], []
        delta = 1.0 if c == c_out else 0.0
        for e in grid:
            try:
                s = s_matrix_energy_dependent(cs, ch, e)
            except (BandEdge, PoleProximity) as exc:
                env.warn(type(exc).__name__, str(exc), energy=e)
                continue
            energies.append(e)
            values.append(abs(delta - s.entries[c, c_out]) ** 2)
        values = np.array(values)
    env.rows.extend([e, s] for e, s in zip(energies, values))
    env.payload.update({
        "channels": [c, c_out], "n_points": len(values),
        "peak_count": peak_count(np.asarray(values), cfg.tolerances.prominence) if len(values) else 0,
        "max_sigma": float(np.max(values)) if len(values) else 0.0,
    })


def _task_trap(cfg, env):
    model = cfg.model
    sw = trapping_sweep(model.closed(), model.channels(), cfg.task["alphas"].values())
    n = sw.widths.shape[1]
    env.header = ["alpha"] + [f"Gamma_{k}" for k in range(1, n + 1)] + ["sum_residual"]
    for a, g, r in zip(sw.alphas, sw.widths, sw.sum_residuals):
        env.rows.append([a, *g, r])
    env.payload.update({
        "n_states": n, "n_channels": model.n_channels,
        "max_relative_residual": float(sw.relative_residuals.max()),
        "increasing": sw.increasing, "final_widths": sw.widths[-1],
    })


def _task_encircle(cfg, env):
    model, t = cfg.model, cfg.task
    traj, theta = encircle(_family2(model, t["x"], t["y"]), t["center"], t["radius"],
                           t["n_points"], overlap_min=cfg.tolerances.overlap_min)
    for i, th in enumerate(theta):
        for b in range(traj.values.shape[1]):
            lam = traj.values[i, b]
            env.rows.append([th, b, lam.real, lam.imag])
    for step in traj.ambiguous_steps:
        env.warn("AmbiguousMatching", f"weak branch overlap at step {step}",
                 step=step, theta=theta[step])
    env.payload.update({
        "center": t["center"], "radius": t["radius"], "permutation": traj.permutation,
        "closed": traj.closed, "min_overlap": float(traj.overlaps.min()),
        "ambiguous_steps": traj.ambiguous_steps,
    })


def _task_orth_scan(cfg, env):
    model, t = cfg.model, cfg.task
    pts = orthogonality_scan(_family2(model, t["x"], t["y"]), t["xs"].values(), t["ys"].values(),
                             tol_orth=t["tol_orth"])
    for p in pts:
        env.rows.append([p.x, p.y, p.i, p.j, p.overlap, int(p.refined)])
    env.payload.update({"n_points": len(pts), "points": [asdict(p) for p in pts]})


_TASKS = {
    "eig": _task_eig, "sweep": _task_sweep, "ep_find": _task_ep_find,
    "rigidity_map": _task_rigidity_map, "cross_section": _task_cross_section,
    "trap": _task_trap, "encircle": _task_encircle, "orth_scan": _task_orth_scan,
}


def run(cfg, seed=None):
    """Execute the configured task.

    Returns a :class:`ResultEnvelope`; ``envelope.exit_code`` is 0 on
    success, 2 when only non-fatal warnings were raised and 1 on a fatal
    module error (recorded under ``error``).
    """
    env = ResultEnvelope(config=cfg.to_dict(), task=cfg.task.name, seed=seed,
                         header=list(CSV_HEADERS[cfg.task.name] or []))
    tol = cfg.tolerances
    try:
        with tolerances(tol_eig=tol.tol_eig, tol_norm=tol.tol_norm, tol_sym=tol.tol_sym,
                        tol_solve=tol.tol_solve, gap_min=tol.gap_min, tol_defect=tol.tol_defect):
            _TASKS[cfg.task.name](cfg, env)
    except (EptraceError, ValueError, np.linalg.LinAlgError) as exc:
        env.error = {"kind": type(exc).__name__, "message": str(exc)}
        gap = getattr(exc, "gap", None)
        if gap is not None:
            env.error["gap"] = gap
        point = getattr(exc, "point", None)
        if point is not None:
            env.error["point"] = list(point)
    return env


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else int(v) for v in row])
    return buf.getvalue()


def _atomic_write(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(env, fmt="csv", out_dir="out"):
    """Write ``result.json`` (always) and ``<task>.csv`` (csv format).

    Floats are written as shortest round-trip decimals; JSON keys are
    sorted so identical runs produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "csv" and env.error is None:
        p = out / f"{env.task}.csv"
        _atomic_write(p, _csv_text(env.header, env.rows))
        written.append(p)
    doc = env.to_json(include_rows=(fmt == "json"))
    p = out / "result.json"
    _atomic_write(p, json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n")
    written.append(p)
    return written
