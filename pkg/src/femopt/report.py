"""Run artifacts: series/prediction CSV tables, text report, plot scripts."""

import io
import os

import numpy as np

from .analysis import ErrorSeries
from .predictor import SuiteResult, cpu_reduction

__all__ = [
    "series_csv",
    "prediction_csv",
    "render_report",
    "emit_plot_script",
    "write_outputs",
]

VAR_LABEL = {"u": "u", "grad": "u_x", "hess": "u_xx"}


def _fmt(x) -> str:
    """Round-trip decimal form; repeated runs must reproduce it bit for bit."""
    return "%.17g" % float(x)


# ------------------------------------------------------------------ CSV

def series_csv(series: ErrorSeries) -> str:
    out = io.StringIO()
    out.write("R,N,E_h,q_h,seconds\n")
    orders = series.orders()
    for (level, n, err, sec), q in zip(series.samples, orders):
        q_txt = "" if np.isnan(q) else _fmt(q)
        out.write(f"{level},{n},{_fmt(err)},{q_txt},{_fmt(sec)}\n")
    return out.getvalue()


def prediction_csv(scenarios) -> str:
    out = io.StringIO()
    out.write("variable,p,alpha_T,beta_T,alpha_R,beta_R,N_opt,E_min,achievable\n")
    for sc in scenarios:
        pred = sc.prediction
        if pred is None:
            continue
        row = [sc.variable, str(sc.p), _fmt(pred.alpha_T), _fmt(pred.beta_T),
               _fmt(pred.alpha_R), _fmt(pred.beta_R), _fmt(pred.n_opt),
               _fmt(pred.e_min), str(pred.achievable).lower()]
        out.write(",".join(row) + "\n")
    return out.getvalue()


# ------------------------------------------------------------------ report

def render_report(result: SuiteResult, parallel: bool = False) -> str:
    # time columns hold first-touch marginal costs: their sums (plus the
    # shared row) reproduce the batch totals behind the printed pct, which
    # standalone per-scenario bills cannot, since refinement solves are shared
    out = io.StringIO()
    prob = result.problem
    cfg = result.config
    out.write(f"problem: {prob.name} (dim {prob.dim}, {cfg.kind} elements, "
              f"reference: {prob.reference_mode})\n")
    out.write(f"mode: {result.mode}   degrees: "
              + " ".join(str(p) for p in result.degrees)
              + "   variables: " + " ".join(result.variables) + "\n")
    out.write(f"budget N_max = {cfg.n_max:g}\n")
    if result.norm_uO is not None:
        out.write(f"normalization |u_O|_2 = {_fmt(result.norm_uO)}\n")
    if result.msplus is not None:
        ms = result.msplus
        out.write(f"MS+ parameterization at p_M = {ms.degree}, "
                  f"|u_M|_2 = {_fmt(ms.norm_uM)}\n")
        for var in result.variables:
            if var in ms.fits:
                fit = ms.fits[var]
                out.write(f"  {VAR_LABEL[var]:<5} alpha_R = {fit.alpha_R_Mplus:.6e}"
                          f"  beta_R = {fit.beta_R_M:.4f}"
                          f"  rms = {fit.rms:.3f} decades\n")
    out.write("\n")

    has_bf = result.mode in ("bf", "both")
    has_pred = result.mode in ("pred", "both")
    header = f"{'variable':<9}{'p':>2}"
    if has_bf:
        header += f"{'N_opt^BF':>12}{'E_min^BF':>13}{'T_BF[s]':>10}"
    if has_pred:
        header += f"{'N_opt^PR+':>12}{'E_min^PR+':>13}{'T_PR+[s]':>10}"
    out.write(header + "\n")
    out.write("-" * len(header) + "\n")

    sum_bf = 0.0
    sum_pred = 0.0
    notes = []
    for sc in result.scenarios:
        line = f"{VAR_LABEL[sc.variable]:<9}{sc.p:>2}"
        if has_bf:
            if sc.bf is not None:
                line += (f"{sc.bf.n_opt:>12.0f}{sc.bf.e_min:>13.3e}"
                         f"{sc.t_bf_marginal:>10.3f}")
                sum_bf += sc.t_bf_marginal
            else:
                line += f"{'-':>12}{'-':>13}{'-':>10}"
        if has_pred:
            if sc.t_pred_marginal is not None:
                n_txt = (f"{sc.prediction.n_opt:>12.0f}" if sc.prediction
                         else f"{'-':>12}")
                e_txt = (f"{sc.e_attained:>13.3e}" if sc.e_attained is not None
                         else f"{'-':>13}")
                line += n_txt + e_txt + f"{sc.t_pred_marginal:>10.3f}"
                sum_pred += sc.t_pred_marginal
            else:
                line += f"{'-':>12}{'-':>13}{'-':>10}"
        out.write(line + "\n")
        if sc.note:
            notes.append(f"  {VAR_LABEL[sc.variable]} p={sc.p}: {sc.note}")
    for var, p, why in result.skipped:
        notes.append(f"  {VAR_LABEL[var]} p={p}: skipped ({why})")

    if has_pred and result.shared_seconds > 0.0:
        pad = 9 + 2 + (35 if has_bf else 0) + 25
        out.write(f"{'shared: normalization + MS+ fit':<{pad}}"
                  f"{result.shared_seconds:>10.3f}\n")
        sum_pred += result.shared_seconds
    out.write("-" * len(header) + "\n")
    total = f"{'total':<9}{'':>2}"
    if has_bf:
        total += f"{'':>12}{'':>13}{sum_bf:>10.3f}"
    if has_pred:
        total += f"{'':>12}{'':>13}{sum_pred:>10.3f}"
    out.write(total + "\n\n")

    if parallel:
        out.write("pct: n/a (parallel run, timings overlap)\n")
    elif result.aggregate_pct is not None:
        out.write(f"CPU time reduction: pct = (T_BF - T_PRED+)/T_BF * 100 = "
                  f"{result.aggregate_pct:.1f}\n")
        check = cpu_reduction(sum_bf, sum_pred)
        out.write(f"consistency: pct from the summed time columns above = "
                  f"{check:.1f}\n")
    else:
        out.write("pct: n/a (needs both BF and PRED+ runs)\n")

    if notes:
        out.write("\nnotes:\n" + "\n".join(notes) + "\n")
    return out.getvalue()


# ------------------------------------------------------------------ plots

def _datablock(tag: str, series: ErrorSeries) -> str:
    lines = [f"${tag} << EOD"]
    for _, n, err, _ in series.samples:
        lines.append(f"{_fmt(n)} {_fmt(err)}")
    lines.append("EOD")
    return "\n".join(lines)


def emit_plot_script(series, prediction=None, compare=None, title=None) -> str:
    """Standalone gnuplot script: E vs N log-log with model overlays.

    ``series`` is one ErrorSeries or a list of them; ``compare`` adds a second
    family drawn with open symbols (e.g. manufactured vs original lines).
    ``prediction`` contributes dashed model branches and the optimum marker.
    """
    family = list(series) if isinstance(series, (list, tuple)) else [series]
    if not family or not all(s.samples for s in family):
        raise ValueError("plot needs at least one non-empty series")
    other = list(compare) if compare else []

    out = io.StringIO()
    name = title or f"error vs DoF count ({VAR_LABEL[family[0].variable]})"
    out.write("# gnuplot script, self-contained\n")
    out.write(f'set title "{name}"\n')
    out.write('set xlabel "N"\nset ylabel "E"\n')
    out.write("set logscale xy\nset format y '10^{%T}'\nset key bottom left\n\n")

    blocks = []
    plots = []
    for i, s in enumerate(family):
        tag = f"S{i}"
        blocks.append(_datablock(tag, s))
        plots.append(f'${tag} using 1:2 with linespoints pt 7 '
                     f'title "p={s.degree}"')
    for i, s in enumerate(other):
        tag = f"C{i}"
        blocks.append(_datablock(tag, s))
        plots.append(f'${tag} using 1:2 with linespoints pt 6 dashtype 3 '
                     f'title "p={s.degree} ({s.reference_mode})"')

    if prediction is not None:
        plots.append(f'{_fmt(prediction.alpha_T)} * x ** (-{_fmt(prediction.beta_T)}) '
                     f'with lines dashtype 2 lc rgb "gray40" title "E_T model"')
        plots.append(f'{_fmt(prediction.alpha_R)} * x ** ({_fmt(prediction.beta_R)}) '
                     f'with lines dashtype 4 lc rgb "gray40" title "E_R model"')
        blocks.append(f"$OPT << EOD\n{_fmt(prediction.n_opt)} "
                      f"{_fmt(prediction.e_min)}\nEOD")
        plots.append('$OPT using 1:2 with points pt 5 ps 2 lc rgb "red" '
                     'title "(N_{opt}, E_{min})"')

    out.write("\n".join(blocks) + "\n\n")
    out.write("plot \\\n    " + ", \\\n    ".join(plots) + "\n")
    return out.getvalue()


def _render_png(path, rows, title):
    """Matplotlib twin of the gnuplot script, rendered straight to a file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for series, prediction in rows:
        n = series.ndofs
        pts = ax.loglog(n, series.errors, "o-", label=f"p={series.degree}")
        color = pts[0].get_color()
        if prediction is not None:
            grid = np.geomspace(n.min(), max(n.max(), prediction.n_opt * 4), 200)
            ax.loglog(grid, prediction.alpha_T * grid ** -prediction.beta_T,
                      "--", color=color, alpha=0.5, lw=1)
            ax.loglog(grid, prediction.alpha_R * grid ** prediction.beta_R,
                      ":", color=color, alpha=0.5, lw=1)
            ax.loglog([prediction.n_opt], [prediction.e_min], "s",
                      color=color, ms=9, mfc="none")
    ax.set_xlabel("N")
    ax.set_ylabel("E")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def write_outputs(result: SuiteResult, out_dir: str, emit_plots: bool = True,
                  parallel: bool = False):
    """Write every artifact of a suite run; returns the list of paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def emit(fname, text):
        path = os.path.join(out_dir, fname)
        with open(path, "w") as fh:
            fh.write(text)
        written.append(path)

    for sc in result.scenarios:
        series = sc.bf.series if sc.bf is not None else (
            sc.prediction.series if sc.prediction is not None else None)
        if series is not None and series.samples:
            emit(f"series_{sc.variable}_p{sc.p}.csv", series_csv(series))

    if result.mode in ("pred", "both"):
        emit("prediction.csv", prediction_csv(result.scenarios))

    emit("report.txt", render_report(result, parallel=parallel))

    if emit_plots:
        for var in result.variables:
            rows = []
            for sc in result.scenarios:
                if sc.variable != var:
                    continue
                series = sc.bf.series if sc.bf is not None else (
                    sc.prediction.series if sc.prediction is not None else None)
                if series is not None and series.samples:
                    rows.append((series, sc.prediction))
            if not rows:
                continue
            script = emit_plot_script([s for s, _ in rows],
                                      prediction=next((p for _, p in rows
                                                       if p is not None), None),
                                      title=f"{result.problem.name}: "
                                            f"{VAR_LABEL[var]}")
            emit(f"plot_{var}.gp", script)
            png = os.path.join(out_dir, f"plot_{var}.png")
            _render_png(png, rows, f"{result.problem.name}: {VAR_LABEL[var]}")
            written.append(png)
    return written
