"""Aggregate stored result records into the results table and plot data.

The report is a pure function of the records, so regenerating it from the
same run directory is byte-identical.
"""
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..dataset import Sample
from ..device import DriftRow
from ..errors import DataIntegrityError
from ..qsim import bitstring
from .metrics import improvement_stats, kl_metric, mean_std, metric_pair

logger = logging.getLogger(__name__)

IN_DOMAIN = "in-domain"
ZERO_SHOT = "zero-shot"
CONDITIONS = (IN_DOMAIN, ZERO_SHOT)
EXPECTED_K = (5, 10, 20)
CSV_FLOAT_FORMAT = "%.10g"


@dataclass
class ConditionRow:
    condition: str
    kl_mean: float
    kl_std: Optional[float]
    tv_mean: float
    tv_std: Optional[float]
    n_runs: int
    improvement_pct: Optional[float] = None
    gap_recovery_pct: Optional[float] = None


@dataclass
class MetricsReport:
    config_hash: str
    conditions: List[ConditionRow] = field(default_factory=list)
    fewshot_runs: List[Dict[str, Any]] = field(default_factory=list)
    ablation: List[Dict[str, Any]] = field(default_factory=list)
    drift: List[DriftRow] = field(default_factory=list)
    replay_effect: List[Dict[str, Any]] = field(default_factory=list)
    example: Optional[Dict[str, Any]] = None
    warnings: List[str] = field(default_factory=list)

    def condition(self, name: str) -> Optional[ConditionRow]:
        return next((row for row in self.conditions if row.condition == name), None)

    @property
    def seeds(self) -> List[int]:
        return sorted({int(r["seed"]) for r in self.fewshot_runs})


def select_worst_example(samples: Sequence[Sample]) -> int:
    '''Index of the sample with the largest noisy-to-ideal KL (first on ties)'''
    if not samples:
        raise DataIntegrityError("no samples to choose an example from")
    scores = [kl_metric(s.y, s.noisy_padded) for s in samples]
    return int(np.argmax(scores))


def build_example_record(
    sample: Sample,
    zero_shot_pred: np.ndarray,
    adapted_pred: Optional[np.ndarray] = None,
    k: Optional[int] = None,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """Per-circuit comparison of noisy, ideal and predicted distributions.

    Probabilities are listed over the circuit's 2^n outcomes; metrics are
    computed against the ideal distribution on the padded 32-entry vectors.
    """
    n_states = 2 ** sample.n_qubits
    distributions = OrderedDict(
        [("ideal", sample.y), ("noisy", sample.noisy_padded), ("zero_shot", np.asarray(zero_shot_pred))]
    )
    if adapted_pred is not None:
        distributions["adapted"] = np.asarray(adapted_pred)
    record = {
        "circuit_id": sample.circuit_id,
        "family": sample.family,
        "backend": sample.backend,
        "n_qubits": sample.n_qubits,
        "adapted_k": k,
        "adapted_seed": seed,
        "bitstrings": [bitstring(i, sample.n_qubits) for i in range(n_states)],
        "probabilities": {name: [float(v) for v in d[:n_states]] for name, d in distributions.items()},
        "metrics": {},
    }
    for name, d in distributions.items():
        if name == "ideal":
            continue
        pair = metric_pair(sample.y, d)
        record["metrics"][name] = {"kl": pair.kl, "tv": pair.tv}
    return record


def _config_hash(*record_sets: Iterable[Dict[str, Any]]) -> str:
    hashes = sorted({r["config_hash"] for records in record_sets for r in records if r.get("config_hash")})
    if len(hashes) > 1:
        raise DataIntegrityError(f"records come from different configurations: {', '.join(hashes)}")
    return hashes[0] if hashes else ""


def _latest_runs(fewshot_records: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    '''Keep the last record per (k, seed, replay), ordered by replay, k, seed'''
    latest: Dict[tuple, Dict[str, Any]] = {}
    for r in fewshot_records:
        latest[(bool(r.get("replay", True)), int(r["k"]), int(r["seed"]))] = r
    return [latest[key] for key in sorted(latest, key=lambda t: (not t[0], t[1], t[2]))]


def _mean_of(records: Sequence[Dict[str, Any]], key: str) -> Optional[float]:
    values = [r[key] for r in records if r.get(key) is not None]
    return mean_std(values)[0] if values else None


def build_report(
    eval_records: Sequence[Dict[str, Any]] = (),
    fewshot_records: Sequence[Dict[str, Any]] = (),
    ablation_records: Sequence[Dict[str, Any]] = (),
    drift: Sequence[DriftRow] = (),
    example: Optional[Dict[str, Any]] = None,
) -> MetricsReport:
    report = MetricsReport(_config_hash(eval_records, fewshot_records, ablation_records, [example] if example else []))
    by_condition = {r["condition"]: r for r in eval_records}
    for name in CONDITIONS:
        r = by_condition.get(name)
        if r is None:
            report.warnings.append(f"missing {name} result")
            continue
        report.conditions.append(ConditionRow(name, float(r["kl"]), None, float(r["tv"]), None, 1))

    zs = by_condition.get(ZERO_SHOT)
    ind = by_condition.get(IN_DOMAIN)
    runs = _latest_runs(fewshot_records)
    with_replay = [r for r in runs if r.get("replay", True)]
    report.fewshot_runs = with_replay
    ks = sorted({int(r["k"]) for r in with_replay})
    for k in EXPECTED_K:
        if k not in ks:
            report.warnings.append(f"missing few-shot results for K={k}")
    for k in ks:
        cell = [r for r in with_replay if int(r["k"]) == k]
        kl_mean, kl_std = mean_std([r["kl"] for r in cell])
        tv_mean, tv_std = mean_std([r["tv"] for r in cell])
        row = ConditionRow(f"K={k}", kl_mean, kl_std, tv_mean, tv_std, len(cell))
        if zs is not None and ind is not None:
            stats = improvement_stats(float(zs["kl"]), kl_mean, float(ind["kl"]))
            row.improvement_pct, row.gap_recovery_pct = stats
        report.conditions.append(row)

    without_replay = [r for r in runs if not r.get("replay", True)]
    for k in sorted({int(r["k"]) for r in without_replay}):
        on = [r for r in with_replay if int(r["k"]) == k]
        off = [r for r in without_replay if int(r["k"]) == k]
        if not on:
            continue
        report.replay_effect.append({
            "k": k,
            "target_kl_replay": _mean_of(on, "kl"),
            "target_kl_no_replay": _mean_of(off, "kl"),
            "source_val_kl_replay": _mean_of(on, "source_val_kl"),
            "source_val_kl_no_replay": _mean_of(off, "source_val_kl"),
        })

    report.ablation = sorted((dict(r) for r in ablation_records), key=lambda r: int(r["feature_index"]))
    if not report.ablation:
        report.warnings.append("missing ablation results")
    report.drift = list(drift)
    report.example = example

    for warning in report.warnings:
        logger.warning(f"Partial report: {warning}")
    return report


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


def _fmt_pm(mean: float, std: Optional[float]) -> str:
    return _fmt(mean) if std is None else f"{mean:.4f} ± {std:.4f}"


def _fmt_pct(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.1f}%"


def render_markdown(report: MetricsReport) -> str:
    lines = [
        "# Cross-device transfer results",
        "",
        f"Config hash: `{report.config_hash or 'unknown'}`  ",
        f"Adaptation seeds: {', '.join(str(s) for s in report.seeds) or 'none'}",
        "",
        "| Condition | KL | TV | Improvement | Gap recovery |",
        "|---|---|---|---|---|",
    ]
    for row in report.conditions:
        lines.append(
            f"| {row.condition} | {_fmt_pm(row.kl_mean, row.kl_std)} | {_fmt_pm(row.tv_mean, row.tv_std)} "
            f"| {_fmt_pct(row.improvement_pct)} | {_fmt_pct(row.gap_recovery_pct)} |"
        )
    if report.ablation:
        lines += ["", "## Calibration feature ablation", "", "| Feature | KL | Delta | Note |", "|---|---|---|---|"]
        for r in report.ablation:
            note = "within numerical noise" if r["within_noise"] else ""
            lines.append(f"| {r['feature_name']} | {r['kl']:.4f} | {r['delta']:+.4f} | {note} |")
    if report.replay_effect:
        lines += [
            "",
            "## Replay effect",
            "",
            "| K | Target KL (replay) | Target KL (no replay) | Source val KL (replay) | Source val KL (no replay) |",
            "|---|---|---|---|---|",
        ]
        for r in report.replay_effect:
            lines.append(
                f"| {r['k']} | {_fmt(r['target_kl_replay'])} | {_fmt(r['target_kl_no_replay'])} "
                f"| {_fmt(r['source_val_kl_replay'])} | {_fmt(r['source_val_kl_no_replay'])} |"
            )
    if report.drift:
        lines += ["", "## Calibration drift", "", "| Property | Source | Target | Delta | Delta % |", "|---|---|---|---|---|"]
        for d in report.drift:
            lines.append(f"| {d.property} | {d.source:g} | {d.target:g} | {d.delta:+.4g} | {d.delta_pct:+.1f}% |")
    if report.example:
        ex = report.example
        lines += ["", "## Worst-case example", "", f"Circuit `{ex['circuit_id']}` ({ex['family']}, {ex['n_qubits']} qubits)", ""]
        for name, m in ex["metrics"].items():
            lines.append(f"- {name} vs ideal: KL {m['kl']:.4f}, TV {m['tv']:.4f}")
    if report.warnings:
        lines += ["", "## Warnings", ""] + [f"- {w}" for w in report.warnings]
    return "\n".join(lines) + "\n"


def _curve_frame(report: MetricsReport, metric: str) -> pd.DataFrame:
    rows = []
    for k in sorted({int(r["k"]) for r in report.fewshot_runs}):
        cell = [r for r in report.fewshot_runs if int(r["k"]) == k]
        mean, std = mean_std([r[metric] for r in cell])
        for r in cell:
            rows.append({"k": k, "seed": int(r["seed"]), metric: r[metric], f"{metric}_mean": mean, f"{metric}_std": std})
    return pd.DataFrame(rows, columns=["k", "seed", metric, f"{metric}_mean", f"{metric}_std"])


def emit_report(report: MetricsReport, out_dir: Union[str, Path]) -> List[Path]:
    '''Write results.md plus CSV plot data and the example record'''
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "results.md"
    path.write_text(render_markdown(report), encoding="utf-8")
    written.append(path)

    for metric in ("kl", "tv"):
        path = out_dir / f"{metric}_vs_k.csv"
        _curve_frame(report, metric).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        written.append(path)

    path = out_dir / "ablation.csv"
    columns = ["feature_index", "feature_name", "kl", "baseline_kl", "delta", "within_noise"]
    pd.DataFrame(report.ablation, columns=columns).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    written.append(path)

    path = out_dir / "calibration_drift.csv"
    pd.DataFrame([d._asdict() for d in report.drift], columns=list(DriftRow._fields)).to_csv(
        path, index=False, float_format=CSV_FLOAT_FORMAT
    )
    written.append(path)

    if report.example is not None:
        path = out_dir / "example.json"
        path.write_text(json.dumps(report.example, indent=2) + "\n", encoding="utf-8")
        written.append(path)

    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written
