"""Stage orchestration: plan, herald, waveform, synth, pca, tomo and report.

Each stage writes its artifacts to the output directory and keeps the
in-memory results it produced, so later stages in the same run reuse them.
A stage whose inputs are missing runs its prerequisites first.
"""

from __future__ import annotations

import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from heraldlab import __version__, fock, herald, measurement, planner, rng, waveform
from heraldlab.config import ExperimentConfig, dump_config
from heraldlab.errors import ConfigError, RangeExceeded
from heraldlab.fock import DensityMatrix
from heraldlab.herald import GaussianResourceParams

FLOAT_FORMAT = ".12g"
PROB_TABLE_MAX = 4
STAGES = ("waveform", "plan", "herald", "synth", "pca", "tomo", "report")


# ----------------------------------------------------------------- serialization


def _clean(obj):
    """Plain JSON types with floats pinned to a fixed number of digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return str(v)
        return float(format(v, FLOAT_FORMAT)) + 0.0  # folds -0.0
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=1, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


# ----------------------------------------------------------------- run context


@dataclass
class Run:
    cfg: ExperimentConfig
    out: Path
    results: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def __post_init__(self):
        self.out = Path(self.out)
        self.out.mkdir(parents=True, exist_ok=True)

    def record(self, stage: str, *paths: Path) -> None:
        self.outputs.setdefault(stage, [])
        for p in paths:
            name = str(Path(p).relative_to(self.out))
            if name not in self.outputs[stage]:
                self.outputs[stage].append(name)

    def need(self, stage: str):
        if stage not in self.results:
            t = time.perf_counter()
            self.results[stage] = STAGE_FUNCS[stage](self)
            self.timing[stage] = time.perf_counter() - t
        return self.results[stage]


def target_and_params(cfg: ExperimentConfig):
    """Target state, fixed resource (or None) and planner strategy from the config."""
    res_cfg = cfg.resolved_resource()
    params = None
    if res_cfg is not None:
        params = GaussianResourceParams.from_db(res_cfg.r0_db, res_cfg.r1_db, res_cfg.T)
    st = cfg.state
    if st.type == "single_photon":
        c, r_out = [0, 1], 0.0
    elif st.type == "two_photon":
        c, r_out = [0, 0, 1], 0.0
    elif st.type == "cat":
        c, r_out = [0, 1], None
    else:
        imag = st.coefficients_imag or [0.0] * len(st.coefficients_real)
        c = np.array(st.coefficients_real) + 1j * np.array(imag)
        r_out = st.r_out
    strategy = cfg.planner.strategy or ("fixed" if params is not None else "symmetric")
    if strategy == "fixed":
        if params is None:
            raise ConfigError("planner strategy 'fixed' needs a resource section")
        if r_out is None or st.type in ("single_photon", "two_photon"):
            # presets take r_out from the resource; custom targets must agree with it
            r_out = herald.r_out(params)
        elif abs(herald.r_out(params) - r_out) > 1e-9:
            raise ConfigError(
                f"resource gives r_out = {herald.r_out(params):.6g} but state.r_out = {r_out}"
            )
    elif r_out is None:
        r_out = herald.r_out(params) if params is not None else 0.0
    try:
        target = planner.TargetState.create(r_out, c)
    except Exception as exc:  # noqa: BLE001 - surface as a config problem
        raise ConfigError(str(exc)) from exc
    return target, (params if strategy == "fixed" else None), strategy


# ----------------------------------------------------------------- stages


def stage_waveform(run: Run) -> dict:
    wcfg, scfg = run.cfg.waveform, run.cfg.sequence
    grid = waveform.TimeGrid.span(0.0, wcfg.frame_duration_s, wcfg.dt_s)
    if wcfg.samples is not None:
        target = waveform.TemporalWaveform(grid, np.array(wcfg.samples)).normalize()
    else:
        target = waveform.builtin_waveforms(
            wcfg.name, grid, wcfg.gamma, wcfg.t_m2_s,
            width=wcfg.width_s, bin_width=wcfg.bin_width_s, gap=wcfg.gap_s,
        )
    depth = 1.0
    prog = waveform.target_to_modulation(target, wcfg.gamma, wcfg.t_m2_s, depth)
    try:
        volts = waveform.awg_voltage(prog, wcfg.v0_v, wcfg.v_max_v)
    except RangeExceeded as exc:
        depth = exc.scale
        prog = waveform.target_to_modulation(target, wcfg.gamma, wcfg.t_m2_s, depth)
        volts = waveform.awg_voltage(prog, wcfg.v0_v, wcfg.v_max_v)
    achieved = waveform.ModulationProgram(
        grid, waveform.voltage_to_modulation(volts, wcfg.v0_v), prog.t_m1, prog.t_m2, prog.gamma
    )
    f1, cprime = waveform.modulation_to_waveform(achieved)
    cnorm = waveform.planner_cnorm(achieved)
    rate = waveform.detection_rate(achieved)
    rate = rate * (scfg.peak_rate_hz / np.max(rate))
    t_start, tau_suc = waveform.success_window(rate, grid, achieved.t_m2, scfg.dark_rate_hz, scfg.snr_min)
    rep = waveform.repetition_check(achieved, scfg.tau_rep_s)
    window = (grid.times >= t_start - 0.5 * grid.dt) & (grid.times < t_start + tau_suc - 0.5 * grid.dt)
    csv_path = waveform.write_csv(run.out / "waveform.csv", grid, {
        "f_target": (target.samples, "1/sqrt(s)"),
        "f1": (f1.samples, "1/sqrt(s)"),
        "sin_m": (achieved.sin_m, "1"),
        "V_awg": (volts, "V"),
        "detection_rate": (rate, "1/s"),
        "in_window": (window.astype(float), "1"),
    })
    summary = {
        "name": wcfg.name if wcfg.samples is None else "custom",
        "cprime_per_sqrt_s": cprime,
        "cnorm": cnorm,
        "modulation_depth": depth,
        "t_m1_s": achieved.t_m1,
        "t_m2_s": achieved.t_m2,
        "v_awg_peak_v": float(np.max(np.abs(volts))),
        "mode_matching": waveform.mode_matching(target, f1),
        "target_integral": target.integral(),
        "success_window_s": tau_suc,
        "repetition_residual": rep.residual,
        "repetition_pass": rep.passed,
    }
    run.record("waveform", csv_path, write_json(run.out / "waveform.json", summary))
    return {"grid": grid, "target": target, "f1": f1, "program": achieved, "summary": summary}


def stage_plan(run: Run) -> dict:
    wf = run.need("waveform")
    target, params, strategy = target_and_params(run.cfg)
    cutoff = run.cfg.planner.cutoff_sim
    kwargs = {"params": params} if strategy == "fixed" else {}
    pl = planner.plan(target, wf["summary"]["cnorm"], strategy, cutoff=cutoff, **kwargs)
    report = planner.verify_plan(pl, cutoff)
    path = write_json(run.out / "plan.json", {"plan": pl.to_dict(), "verify": report.to_dict()})
    run.record("plan", path)
    return {"plan": pl, "verify": report}


def stage_herald(run: Run) -> dict:
    pl = run.need("plan")["plan"]
    cutoff = run.cfg.planner.cutoff_sim
    res = herald.build_resource(pl.params, cutoff)
    table = []
    for n in range(PROB_TABLE_MAX + 1):
        prob = fock.project_mode1(res, n)[1]
        table.append({"n": n, "prob": prob})
    cprime = planner.cprime_from_alphas(pl.alphas, pl.cnorm)
    state = herald.herald_superposition(pl.params, cprime, cutoff, resource=res)
    rho = state.to_density()
    summary = {
        "r_out": herald.r_out(pl.params),
        "p_n": table,
        "resource_tail": res.tail,
        "fidelity_to_target": fock.fidelity(state, pl.target.vector(cutoff)),
        "photon_dist": rho.photon_distribution()[:12],
        "wigner_origin": fock.wigner_origin(rho),
        "mean_trigger_photons": herald.trigger_mean_photons(pl.params),
    }
    run.record("herald", write_json(run.out / "herald.json", summary))
    return {"state": state, "summary": summary}


def _phase_set(run: Run) -> measurement.PhaseSet:
    return measurement.PhaseSet(np.deg2rad(run.cfg.measurement.phases_deg))


def stage_synth(run: Run) -> dict:
    mcfg = run.cfg.measurement
    wf = run.need("waveform")
    state = run.need("herald")["state"]
    grid, f1 = wf["grid"], wf["f1"]
    phases = _phase_set(run)
    basis = measurement.subspace_basis(grid, [f1, wf["target"]], mcfg.pca_noise_dim, mcfg.seed)

    def project(src: measurement.FrameSource):
        acc = measurement.ProjectionAccumulator(basis)
        first = {}
        for k, block in src.chunks():
            if run.cfg.measurement.lowpass_hz is not None:
                block = measurement.lowpass_fir(block, grid.dt, mcfg.lowpass_hz)
            first.setdefault(k, block[0].copy())
            acc.add(k, block)
        return acc, first

    src = measurement.FrameSource(state.to_density(), f1, mcfg.eta, phases, mcfg.frames_per_phase,
                                  mcfg.seed, mcfg.electronics_noise)
    acc, first = project(src)
    vac_per_phase = max(1, math.ceil(mcfg.vacuum_frames / len(phases)))
    vsrc = measurement.FrameSource(fock.vacuum(4).to_density(), f1, 1.0, phases, vac_per_phase,
                                   mcfg.seed, mcfg.electronics_noise, stage=rng.VACUUM)
    vac, _ = project(vsrc)
    y, idx, vy = acc.projections, acc.phase_index, vac.projections
    np.savez_compressed(run.out / "projections.npz", y=y, phase_index=idx, vacuum_y=vy, basis=basis)
    sample = measurement.FrameSet(grid, np.stack([first[k] for k in sorted(first)]),
                                  phases.phases[sorted(first)], mcfg.seed)
    sample_path = sample.save(run.out / "frames_sample.npz")
    run.record("synth", run.out / "projections.npz", sample_path)
    return {"y": y, "phase_index": idx, "vacuum_y": vy, "basis": basis}


def _load_synth(run: Run) -> dict:
    path = run.out / "projections.npz"
    if "synth" not in run.results and path.is_file():
        with np.load(path) as z:
            run.results["synth"] = {k: z[k] for k in ("y", "phase_index", "vacuum_y", "basis")}
    return run.need("synth")


def stage_pca(run: Run) -> dict:
    wf = run.need("waveform")
    syn = _load_synth(run)
    res, evecs = measurement.pca_projected(syn["y"], syn["basis"], wf["grid"], syn["vacuum_y"])
    quads = syn["y"] @ evecs[:, 0] * math.sqrt(res.scale)
    pc1_overlap = waveform.mode_matching(res.pc1, wf["f1"])
    summary = {
        "variances": res.variances,
        "scale": res.scale,
        "pc1_overlap_f1": pc1_overlap,
        "pc1_overlap_target": waveform.mode_matching(res.pc1, wf["target"]),
        "n_frames": int(syn["y"].shape[0]),
        "subspace_dim": int(syn["basis"].shape[1]),
    }
    csv_path = waveform.write_csv(run.out / "pca_modes.csv", wf["grid"], {
        "f1": (wf["f1"].samples, "1/sqrt(s)"),
        "pc1": (res.components[0].samples, "1/sqrt(s)"),
        "pc2": (res.components[1].samples, "1/sqrt(s)"),
    })
    np.savez_compressed(run.out / "quadratures.npz", x=quads, phase_index=syn["phase_index"])
    run.record("pca", write_json(run.out / "pca.json", summary), csv_path, run.out / "quadratures.npz")
    return {"result": res, "quads": quads, "phase_index": syn["phase_index"], "summary": summary}


def expected_state(run: Run) -> DensityMatrix:
    """Heralded state after the configured loss, cropped to the tomography cutoff."""
    state = run.need("herald")["state"]
    lossy = fock.loss_channel(state.to_density(), run.cfg.measurement.eta)
    return lossy.resize(run.cfg.measurement.cutoff_tomo).normalize()


def stage_tomo(run: Run) -> dict:
    mcfg = run.cfg.measurement
    path = run.out / "quadratures.npz"
    if "pca" not in run.results and path.is_file():
        with np.load(path) as z:
            quads, idx = z["x"], z["phase_index"]
    else:
        p = run.need("pca")
        quads, idx = p["quads"], p["phase_index"]
    phases = _phase_set(run).phases
    data = [(float(th), quads[idx == k]) for k, th in enumerate(phases)]
    tomo = measurement.mle_tomography(data, mcfg.cutoff_tomo, mcfg.mle_max_iter, mcfg.mle_tol)
    trace = tomo.likelihood_trace
    payload = tomo.to_dict()
    payload["likelihood_monotone"] = bool(np.all(np.diff(trace) >= 0))
    payload["fidelity_to_expected"] = fock.fidelity(tomo.rho, expected_state(run))
    payload["wigner_origin"] = fock.wigner_origin(tomo.rho)
    run.record("tomo", write_json(run.out / "tomography.json", payload))
    return {"result": tomo, "summary": payload}


def stage_report(run: Run) -> dict:
    th = run.cfg.thresholds
    wf = run.need("waveform")["summary"]
    pl = run.need("plan")
    hr = run.need("herald")["summary"]
    pc = run.need("pca")["summary"]
    tm = run.need("tomo")["summary"]
    checks = {
        "plan_fidelity": pl["verify"].fidelity >= th.min_plan_fidelity,
        "pc1_overlap": pc["pc1_overlap_f1"] >= th.min_pc1_overlap,
        "likelihood_monotone": tm["likelihood_monotone"],
        "repetition": wf["repetition_pass"],
    }
    if th.max_wigner_min is not None:
        checks["wigner_min"] = tm["wigner_min"] <= th.max_wigner_min
    if th.min_tomo_fidelity is not None:
        checks["tomo_fidelity"] = tm["fidelity_to_expected"] >= th.min_tomo_fidelity
    report = {
        "state": run.cfg.state.type,
        "waveform": wf["name"],
        "fidelity_to_target": pl["verify"].fidelity,
        "heralded_fidelity": hr["fidelity_to_target"],
        "predicted_prob": pl["plan"].predicted_prob,
        "mode_matching": wf["mode_matching"],
        "pc1_overlap": pc["pc1_overlap_f1"],
        "p_n": hr["p_n"],
        "wigner_min": tm["wigner_min"],
        "wigner_origin": tm["wigner_origin"],
        "photon_dist": tm["photon_dist"],
        "tomo_fidelity": tm["fidelity_to_expected"],
        "success_window_s": wf["success_window_s"],
        "checks": checks,
        "passed": all(checks.values()),
    }
    run.record("report", write_json(run.out / "report.json", report))
    return report


STAGE_FUNCS = {
    "waveform": stage_waveform,
    "plan": stage_plan,
    "herald": stage_herald,
    "synth": stage_synth,
    "pca": stage_pca,
    "tomo": stage_tomo,
    "report": stage_report,
}


def write_manifest(run: Run) -> Path:
    manifest = {
        "config_hash": run.cfg.digest(),
        "seed": run.cfg.measurement.seed,
        "versions": {
            "heraldlab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "outputs": run.outputs,
        "timing_s": run.timing,
    }
    (run.out / "config.yaml").write_text(dump_config(run.cfg))
    return write_json(run.out / "manifest.json", manifest)


def run_stages(cfg: ExperimentConfig, out: str | Path, stages) -> Run:
    run = Run(cfg, Path(out))
    for s in stages:
        run.need(s)
    write_manifest(run)
    return run


def run_pipeline(cfg: ExperimentConfig, out: str | Path) -> dict:
    return run_stages(cfg, out, STAGES).results["report"]


# ----------------------------------------------------------------- report rendering


def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def render_report(manifest_path: str | Path) -> str:
    """Summary text plus plot-ready CSVs next to a finished run's manifest."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ConfigError(f"manifest not found: {manifest_path}")
    root = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_text())
        report = json.loads((root / "report.json").read_text())
        tomo = json.loads((root / "tomography.json").read_text())
        herald_json = json.loads((root / "herald.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"incomplete run directory {root}: {exc}") from exc
    out = root / "report"
    out.mkdir(exist_ok=True)

    _, wf = _read_csv(root / "waveform.csv")
    _, modes = _read_csv(root / "pca_modes.csv")
    with (out / "tw_overlay.csv").open("w") as fh:
        fh.write(f"# mode_matching={format(report['mode_matching'], FLOAT_FORMAT)} "
                 f"pc1_overlap={format(report['pc1_overlap'], FLOAT_FORMAT)}\n")
        fh.write("t [s],f_target [1/sqrt(s)],f1_achieved [1/sqrt(s)],pc1 [1/sqrt(s)]\n")
        for t, a, b, c in zip(wf[:, 0], wf[:, 1], wf[:, 2], modes[:, 2]):
            fh.write(f"{t:.12g},{a:.12g},{b:.12g},{c:.12g}\n")

    rho = DensityMatrix(np.array(tomo["rho_real"]) + 1j * np.array(tomo["rho_imag"]))
    wr = measurement.wigner_report(rho)
    with (out / "wigner_grid.csv").open("w") as fh:
        fh.write("x,p,W\n")
        for i, x in enumerate(wr.x):
            for j, p in enumerate(wr.p):
                fh.write(f"{x:.12g},{p:.12g},{wr.w[i, j]:.12g}\n")

    rec = tomo["photon_dist"]
    pure = herald_json["photon_dist"]
    with (out / "photon_bars.csv").open("w") as fh:
        fh.write("n,reconstructed,heralded_lossless\n")
        for n, p in enumerate(rec):
            q = pure[n] if n < len(pure) else 0.0
            fh.write(f"{n},{p:.12g},{q:.12g}\n")

    lines = [
        f"run             {root}",
        f"config hash     {manifest['config_hash']}",
        f"seed            {manifest['seed']}",
        f"state           {report['state']} in {report['waveform']} waveform",
        f"plan fidelity   {format(report['fidelity_to_target'], FLOAT_FORMAT)}",
        f"mode matching   {format(report['mode_matching'], FLOAT_FORMAT)}",
        f"PC-1 overlap    {format(report['pc1_overlap'], FLOAT_FORMAT)}",
        f"Wigner minimum  {format(report['wigner_min'], FLOAT_FORMAT)}",
        f"Wigner origin   {format(report['wigner_origin'], FLOAT_FORMAT)}",
        f"tomo fidelity   {format(report['tomo_fidelity'], FLOAT_FORMAT)}",
        "P(n) trigger    " + " ".join(format(r["prob"], ".4g") for r in report["p_n"]),
        "photon dist     " + " ".join(format(p, ".4f") for p in report["photon_dist"]),
        "checks          " + ", ".join(f"{k}={'pass' if v else 'FAIL'}" for k, v in report["checks"].items()),
        f"overall         {'PASS' if report['passed'] else 'FAIL'}",
    ]
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    return text
