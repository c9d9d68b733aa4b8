#!/usr/bin/env python3

import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, List

from rich.console import Console
from rich.table import Table

ABLATION_COLUMNS = [
    "variant",
    "parameters",
    "eps_val_loss",
    "log_mel_teacher",
    "log_mel_predicted",
    "noise_baseline",
    "dur_mse",
    "dur_mse_mean_predictor",
]


class ReportManager:
    def __init__(self, verbose=False):
        self.verbose = verbose
        self.results: Dict[str, Any] = {}
        self.ablation_rows: List[Dict[str, Any]] = []

    def set_evaluation(self, report: Dict[str, Any]) -> None:
        self.results = report

    def save_json_report(self, filename) -> None:
        """Sorted keys, no timestamps: reruns with one seed are byte-identical"""
        if self.verbose:
            print(f"[DEBUG] Saving JSON report to {filename}")
        Path(filename).parent.mkdir(parents=True, exist_ok=True)
        with open(filename, "w", encoding="utf-8") as f:
            json.dump(self.results, f, indent=2, sort_keys=True, allow_nan=False)
            f.write("\n")
        print(f"💾 JSON report saved: {filename} ({self.results.get('num_utterances', 0)} utterances)")

    def save_csv_report(self, filename) -> None:
        """One row per holdout utterance, log-mel columns expanded per step count"""
        if self.verbose:
            print(f"[DEBUG] Saving CSV report to {filename}")
        rows = self.results.get("utterances", [])
        headers = [
            "index",
            "num_tokens",
            "eps_val_loss",
            "noise_baseline",
            "dur_mse",
            "dur_mse_mean_predictor",
            "total_duration_error",
        ]
        steps = [str(s) for s in self.results.get("steps_list", [])]
        if rows and rows[0]["log_mel"]:
            for s in steps:
                headers += [f"log_mel_teacher_{s}", f"log_mel_predicted_{s}"]
        if not rows:
            print("Warning: No utterances evaluated, creating empty CSV")

        Path(filename).parent.mkdir(parents=True, exist_ok=True)
        with open(filename, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(headers)
            for row in rows:
                values = [row[h] for h in headers[:7]]
                if row["log_mel"]:
                    for s in steps:
                        values += [row["log_mel"][s]["teacher"], row["log_mel"][s]["predicted"]]
                writer.writerow([repr(v) if isinstance(v, float) else v for v in values])
        print(f"💾 CSV report saved: {filename} ({len(rows)} utterances)")

    def save_report(self, filename) -> None:
        if str(filename).lower().endswith(".csv"):
            self.save_csv_report(filename)
        else:
            self.save_json_report(filename)

    def add_ablation_row(self, variant: str, parameters: int, report: Dict[str, Any], steps: int) -> None:
        summary = report["summary"]
        log_mel = summary.get("log_mel", {}).get(str(steps), {})
        self.ablation_rows.append(
            {
                "variant": variant,
                "parameters": parameters,
                "eps_val_loss": summary["eps_val_loss"],
                "log_mel_teacher": log_mel.get("teacher", float("nan")),
                "log_mel_predicted": log_mel.get("predicted", float("nan")),
                "noise_baseline": summary["noise_baseline"],
                "dur_mse": summary["dur_mse"],
                "dur_mse_mean_predictor": summary["dur_mse_mean_predictor"],
            }
        )
        if self.verbose:
            print(f"[DEBUG] Ablation row for {variant}: {self.ablation_rows[-1]}")

    def save_ablation_csv(self, filename) -> None:
        Path(filename).parent.mkdir(parents=True, exist_ok=True)
        with open(filename, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=ABLATION_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in self.ablation_rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        print(f"💾 Ablation table saved: {filename} ({len(self.ablation_rows)} variants)")

    def ablation_table(self, title: str) -> Table:
        table = Table(title=title)
        for column in ABLATION_COLUMNS:
            table.add_column(column, justify="left" if column == "variant" else "right")
        for row in self.ablation_rows:
            table.add_row(
                *[f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c]) for c in ABLATION_COLUMNS]
            )
        return table

    def render_ablation_text(self, title: str) -> str:
        """Aligned plain-text rendering of the ablation table"""
        buffer = io.StringIO()
        Console(file=buffer, width=160, color_system=None, force_terminal=False).print(self.ablation_table(title))
        return buffer.getvalue()

    def save_ablation_text(self, filename, title: str) -> None:
        Path(filename).write_text(self.render_ablation_text(title), encoding="utf-8")
