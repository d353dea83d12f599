"""Run outputs: metrics/diagnostics/CV reports and the hashed run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from datetime import datetime, timezone
from typing import Iterable

from src.als_solver import CompletionDiagnostics
from src.rank_planner import CrossValidationResult

RUN_MANIFEST_NAME = "run_manifest.json"
DIAGNOSTICS_COLUMNS = ["sweep", "half", "residual", "rse_train", "lambda_1", "lambda_2", "seconds"]
CV_COLUMNS = ["rank", "candidate", "ranks", "mean_rse", "parameter_count", "trial_rse"]


def utc_now_iso() -> str:
    """Return current UTC timestamp in ISO8601 format with Z suffix."""
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def file_sha256(path: str) -> str:
    """Compute SHA-256 hex digest for a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as file_obj:
        while True:
            chunk = file_obj.read(1024 * 1024)
            if not chunk:
                break
            digest.update(chunk)
    return digest.hexdigest()


def file_byte_size(path: str) -> int:
    return os.path.getsize(path)


def write_json(path: str, payload: dict) -> None:
    """Write JSON in UTF-8 with trailing newline."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as file_obj:
        json.dump(payload, file_obj, ensure_ascii=False, indent=2)
        file_obj.write("\n")


def write_diagnostics_csv(path: str, diagnostics: CompletionDiagnostics) -> None:
    """One row per half-sweep; lambda columns are blank when no TV term is active."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as file_obj:
        writer = csv.writer(file_obj)
        writer.writerow(DIAGNOSTICS_COLUMNS)
        for record in diagnostics.records:
            lambdas = list(record.lambdas) + [None, None]
            writer.writerow(
                [
                    record.sweep,
                    record.half,
                    repr(record.residual),
                    repr(record.rse_train),
                    "" if lambdas[0] is None else repr(lambdas[0]),
                    "" if lambdas[1] is None else repr(lambdas[1]),
                    f"{record.seconds:.6f}",
                ]
            )


def write_cv_reports(scores_path: str, selected_path: str, result: CrossValidationResult) -> None:
    """Score table sorted by held-out RSE, plus the selected schedule."""
    os.makedirs(os.path.dirname(scores_path) or ".", exist_ok=True)
    with open(scores_path, "w", encoding="utf-8", newline="") as file_obj:
        writer = csv.writer(file_obj)
        writer.writerow(CV_COLUMNS)
        for position, score in enumerate(result.scores, start=1):
            writer.writerow(
                [
                    position,
                    score.candidate.label(),
                    " ".join(str(rank) for rank in score.ranks),
                    repr(score.mean_rse),
                    score.parameter_count,
                    " ".join(repr(value) for value in score.trial_rse),
                ]
            )

    selected = result.selected
    write_json(
        selected_path,
        {
            "r2": selected.candidate.r2,
            "r_mid": selected.candidate.r_mid,
            "r_dm1": selected.candidate.r_dm1,
            "r_d": selected.candidate.r_d,
            "ranks": list(selected.ranks),
            "mean_rse": selected.mean_rse,
            "parameter_count": selected.parameter_count,
        },
    )


def build_run_manifest(artifact_paths: Iterable[str], run_info: dict) -> dict:
    """Manifest listing every artifact with its sha256 and byte size."""
    artifacts = []
    for path in artifact_paths:
        artifacts.append(
            {
                "file_name": os.path.basename(path),
                "sha256": file_sha256(path),
                "byte_size": file_byte_size(path),
            }
        )
    return {"generated_at": utc_now_iso(), "run": run_info, "artifacts": artifacts}


def validate_run_manifest(manifest_path: str) -> None:
    """Re-hash every listed artifact next to the manifest and raise on mismatch."""
    try:
        with open(manifest_path, "r", encoding="utf-8") as file_obj:
            manifest = json.load(file_obj)
    except (OSError, json.JSONDecodeError) as exc:
        raise RuntimeError(f"Failed to read run manifest: {manifest_path}") from exc

    base_dir = os.path.dirname(manifest_path) or "."
    for entry in manifest.get("artifacts", []):
        path = os.path.join(base_dir, entry.get("file_name", ""))
        if not os.path.exists(path):
            raise RuntimeError(f"run manifest artifact missing: {entry.get('file_name')}")
        if entry.get("sha256") != file_sha256(path):
            raise RuntimeError(f"run manifest sha256 mismatch: {entry.get('file_name')}")
        if entry.get("byte_size") != file_byte_size(path):
            raise RuntimeError(f"run manifest byte_size mismatch: {entry.get('file_name')}")
