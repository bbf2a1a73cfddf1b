"""Monte-Carlo detection experiments.

A trial renders a scene, takes ``m = round(n / rho)`` compressive samples,
recovers one correlation plane per dictionary entry and checks the
detections against the ground truth. A curve repeats this for every
compression ratio of the grid.

Seeds are derived per trial so any single trial can be re-run on its own.
The scene of trial ``t`` does not depend on ``rho`` or on the noise level:
all points of a curve, and curves that differ only in SNR, see the same
scenes. Row selection and noise use separate streams keyed on ``rho``.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import csv
import json
import math
import os
import struct
from typing import Optional

import numpy as np

from ..detection import build_dictionary, classify_and_localize, score_success
from ..errors import ParameterError
from ..sensing import (
    SensingOperator,
    add_noise,
    measure,
    measure_differential_binary,
    noise_sigma,
    select_rows,
)
from ..solver import Auto, LassoProblem, SolverOptions, solve_lasso
from .config import ExperimentConfig, format_config
from .scenes import (
    FlatBackground,
    Placement,
    RandomPlacement,
    SceneSpec,
    TexturedBackground,
    default_targets,
    generate_scene,
)

__all__ = [
    "TrialRecord",
    "CurvePoint",
    "CurveRun",
    "derive_seed",
    "trial_seeds",
    "scene_spec",
    "scene_targets",
    "measurement_count",
    "residual_target",
    "exclusion_radius",
    "run_trial",
    "run_curve",
    "wilson_interval",
    "curve_points",
    "curve_to_csv",
    "psnr",
    "CURVE_HEADER",
    "read_curve_csv",
]

CURVE_HEADER = ["rho", "m", "trials", "successes", "probability", "wilson_lo", "wilson_hi",
                "snr_db", "basis", "mode"]
_Z95 = 1.959963984540054


def _rho_key(rho: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(rho)))[0]


def derive_seed(*words) -> int:
    """64-bit seed hashed from a sequence of integers."""
    return int(np.random.SeedSequence([int(w) & (2 ** 64 - 1) for w in words])
               .generate_state(1, np.uint64)[0])


def trial_seeds(base_seed: int, rho: float, trial: int) -> dict:
    """Scene, row-selection and noise seeds of one trial."""
    key = _rho_key(rho)
    return {
        "scene": derive_seed(base_seed, 0, trial),
        "rows": derive_seed(base_seed, 1, key, trial),
        "noise": derive_seed(base_seed, 2, key, trial),
    }


def scene_targets(config: ExperimentConfig) -> dict:
    return default_targets(config.target_length, config.target_beam)


def scene_spec(config: ExperimentConfig, seed: int) -> SceneSpec:
    if config.background == "flat":
        background = FlatBackground(config.background_level)
    else:
        background = TexturedBackground(config.background_level, config.texture_amplitude,
                                        config.correlation_length)
    if config.random_count is not None:
        placements = RandomPlacement(config.random_count[0], config.random_count[1],
                                     config.objects)
    else:
        placements = tuple(Placement(label) for label in config.objects)
    return SceneSpec(side=config.side, background=background, placements=placements, seed=seed)


def measurement_count(n: int, rho: float) -> int:
    return max(1, min(n, int(round(n / rho))))


def residual_target(config: ExperimentConfig, samples, m: int) -> float:
    """Residual norm handed to the Pareto root finder.

    ``samples`` are the noise-free samples. Noisy runs use the expected
    norm of the injected noise; estimating it from noisy samples would
    count the noise as signal and, at 0 dB, admit the all-zero plane. Noiseless runs
    use the same rule at ``noiseless_floor_db``; an exact fit of a scene
    that is not sparse in the correlation domain would need far more
    iterations and does not change the detection peaks.
    """
    if config.sigma is not None:
        return float(config.sigma)
    snr = config.snr_db if math.isfinite(config.snr_db) else config.noiseless_floor_db
    return math.sqrt(m) * noise_sigma(samples, snr)


def exclusion_radius(config: ExperimentConfig) -> float:
    """Suppression radius for peak picking.

    Non-overlapping boxes only guarantee that two top-left corners are at
    least the smaller target dimension apart, so that is the default.
    """
    if config.exclusion_radius is not None:
        return float(config.exclusion_radius)
    return float(min(config.target_length, config.target_beam))


@dataclass
class TrialRecord:
    rho: float
    trial: int
    m: int
    seeds: dict
    success: bool
    converged: bool
    iterations: int
    newton_steps: int
    truth: list
    detections: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrialRecord":
        d = json.loads(text)
        d["truth"] = [tuple(t) for t in d["truth"]]
        d["detections"] = [tuple(t) for t in d["detections"]]
        return cls(**d)


def _measure(config: ExperimentConfig, scene, selection, seeds):
    """Noise-free and noisy measurement of one scene."""
    if config.binary_differential:
        meas = measure_differential_binary(scene, selection)
        # the differential reading carries the unnormalized +/-1 row
        meas = replace(meas, samples=meas.samples / math.sqrt(selection.n))
    else:
        meas = measure(scene, selection, whitened=(config.mode == "ppc"))
    if math.isfinite(config.snr_db):
        return meas, add_noise(meas, config.snr_db, seeds["noise"])
    return meas, meas


def run_trial(config: ExperimentConfig, rho: float, trial: int, *,
              return_planes: bool = False):
    """One end-to-end detection experiment; deterministic in
    ``(config, rho, trial)``. Solver non-convergence makes the trial fail.

    With ``return_planes`` a ``(record, planes, scene)`` tuple is returned.
    """
    seeds = trial_seeds(config.base_seed, rho, trial)
    targets = scene_targets(config)
    scene, truth = generate_scene(scene_spec(config, seeds["scene"]), targets)
    side = config.side
    n = side * side
    m = measurement_count(n, rho)
    selection = select_rows(config.basis, n, m, seeds["rows"])
    clean, meas = _measure(config, scene, selection, seeds)

    dictionary = build_dictionary({label: targets[label] for label in config.dictionary},
                                  (side, side))
    opts = SolverOptions(max_iter=config.max_iter, sigma_tol=config.sigma_tol)
    tau = config.tau if config.tau is not None else Auto(residual_target(config, clean.samples, m))
    planes = []
    converged = True
    iterations = newton = 0
    for entry in dictionary:
        result = solve_lasso(LassoProblem(SensingOperator(selection, entry.pof), meas.samples, tau), opts)
        planes.append((entry.label, result.s_hat))
        converged &= result.converged or config.tau is not None
        iterations += result.iterations
        newton += result.newton_steps

    wanted = [t for t in truth if t[0] in config.dictionary]
    expected = (len(wanted) or 1) if config.count_known else None
    report = classify_and_localize(planes, dictionary, expected, exclusion_radius(config),
                                   config.min_score_ratio)
    hit = bool(wanted) and score_success(report, wanted, config.radius, (side, side))
    record = TrialRecord(
        rho=float(rho), trial=int(trial), m=m, seeds=seeds,
        success=bool(hit and converged), converged=bool(converged),
        iterations=iterations, newton_steps=newton,
        truth=[tuple(t) for t in truth],
        detections=[(d.label, d.row, d.col, d.score) for d in report.detections],
    )
    if return_planes:
        return record, planes, scene
    return record


@dataclass(frozen=True)
class CurvePoint:
    rho: float
    m: int
    successes: int
    trials: int
    probability: float
    wilson_lo: float
    wilson_hi: float

    @property
    def wilson_halfwidth(self) -> float:
        return 0.5 * (self.wilson_hi - self.wilson_lo)


def wilson_interval(successes: int, trials: int, z: float = _Z95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ParameterError("need at least one trial")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def curve_points(config: ExperimentConfig, records) -> list:
    """Aggregate trial records into one point per grid value."""
    n = config.side * config.side
    points = []
    for rho in config.rho_grid:
        flags = [r.success for r in records if r.rho == rho and r.trial < config.trials_per_point]
        k, t = sum(flags), len(flags)
        lo, hi = wilson_interval(k, t)
        points.append(CurvePoint(rho, measurement_count(n, rho), k, t, k / t, lo, hi))
    return points


def curve_to_csv(config: ExperimentConfig, points) -> str:
    rows = [",".join(CURVE_HEADER)]
    snr = "inf" if math.isinf(config.snr_db) else repr(config.snr_db)
    for p in points:
        rows.append(",".join([repr(p.rho), str(p.m), str(p.trials), str(p.successes),
                              repr(p.probability), repr(p.wilson_lo), repr(p.wilson_hi),
                              snr, config.basis.value, config.mode]))
    return "\n".join(rows) + "\n"


@dataclass
class CurveRun:
    points: list
    records: list
    resumed: bool
    computed: int


def _fingerprint(config: ExperimentConfig) -> str:
    # trial count and worker count do not change individual trials
    return format_config(replace(config, trials_per_point=1, workers=1))


def _load_journal(path, config: ExperimentConfig) -> dict:
    done = {}
    if path is None or not os.path.exists(path):
        return done
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        return done
    header = json.loads(lines[0])
    if header.get("config") != _fingerprint(config):
        raise ParameterError(f"journal {path} was written for a different configuration")
    for line in lines[1:]:
        if not line.strip():
            continue
        try:
            rec = TrialRecord.from_json(line)
        except (ValueError, TypeError, KeyError):
            continue  # torn line of an interrupted run; recomputed below
        done[(rec.rho, rec.trial)] = rec
    return done


def _ends_with_newline(path) -> bool:
    with open(path, "rb") as fh:
        fh.seek(-1, os.SEEK_END)
        return fh.read(1) == b"\n"


def _run_job(args):
    config, rho, trial = args
    return run_trial(config, rho, trial)


def run_curve(config: ExperimentConfig, out: Optional[str] = None,
              journal: Optional[str] = None, progress=None) -> CurveRun:
    """Run every (rho, trial) of the grid and aggregate.

    Finished trials are appended to ``journal`` (JSON lines) as they
    complete; a later call with the same configuration only runs the
    missing ones. ``out`` receives the curve CSV.
    """
    done = _load_journal(journal, config)
    jobs = [(config, rho, t) for rho in config.rho_grid for t in range(config.trials_per_point)
            if (rho, t) not in done]
    resumed = bool(jobs) and any(
        (rho, t) in done for rho in config.rho_grid for t in range(config.trials_per_point))

    fh = None
    if journal is not None:
        fresh = not os.path.exists(journal) or os.path.getsize(journal) == 0
        torn = not fresh and not _ends_with_newline(journal)
        fh = open(journal, "a", encoding="utf-8")
        if fresh:
            fh.write(json.dumps({"config": _fingerprint(config)}) + "\n")
            fh.flush()
        elif torn:
            fh.write("\n")
    try:
        if config.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                results = pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (8 * config.workers)))
                for rec in results:
                    done[(rec.rho, rec.trial)] = rec
                    if fh:
                        fh.write(rec.to_json() + "\n")
                        fh.flush()
                    if progress:
                        progress(rec)
        else:
            for job in jobs:
                rec = _run_job(job)
                done[(rec.rho, rec.trial)] = rec
                if fh:
                    fh.write(rec.to_json() + "\n")
                    fh.flush()
                if progress:
                    progress(rec)
    finally:
        if fh:
            fh.close()

    records = [done[(rho, t)] for rho in config.rho_grid for t in range(config.trials_per_point)]
    points = curve_points(config, records)
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="") as fh_out:
            fh_out.write(curve_to_csv(config, points))
    return CurveRun(points, records, resumed, len(jobs))


def read_curve_csv(path) -> list:
    """Rows of a curve CSV as dicts with numeric fields converted."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("rho", "probability", "wilson_lo", "wilson_hi", "snr_db"):
            row[key] = float(row[key])
        for key in ("m", "trials", "successes"):
            row[key] = int(row[key])
    return rows


def psnr(reference, estimate, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB of a real estimate."""
    err = np.mean((np.asarray(reference, dtype=np.float64) - np.real(estimate)) ** 2)
    return math.inf if err == 0 else 10.0 * math.log10(peak * peak / err)
