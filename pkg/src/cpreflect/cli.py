"""Offline batch runner: generate packages for a corpus, report on audits.

Exit codes follow batch-tool convention: 0 all good, 1 pipeline or golden
failures, 2 input/config errors. Status lines are one per entry,
tab-separated, stable for scripting.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import build_runtime, load_app_config
from .domain import EPOCH, SubmissionBundle, ValidationError, Verdict, pretty_json
from .gateway import GatewayError
from .pipelines import PipelineError, QuestionPackage
from .store import atomic_write_text


@dataclass(frozen=True)
class CorpusEntry:
    problem_path: Path
    code_path: Path
    verdict: Verdict
    expected_package_path: Path | None = None


def load_manifest(path: Path) -> list[CorpusEntry]:
    """Parse a manifest: a JSON array of corpus entries.

    Relative paths resolve against the manifest's directory.
    """
    try:
        data = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise ValidationError(f"manifest: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest: invalid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ValidationError("manifest: top-level value must be an array")
    base = path.parent
    entries = []
    for i, raw in enumerate(data):
        try:
            expected = raw.get("expected_package_path")
            entries.append(
                CorpusEntry(
                    problem_path=base / raw["problem_path"],
                    code_path=base / raw["code_path"],
                    verdict=Verdict.from_json(raw["verdict"]),
                    expected_package_path=(base / expected) if expected else None,
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"manifest: entry {i} malformed: {exc}") from exc
    return entries


class _MemoryPackageStore:
    """Per-invocation package memo so duplicate bundles run once."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._packages: dict[str, QuestionPackage] = {}

    def load(self, bundle_hash: str) -> QuestionPackage | None:
        with self._lock:
            return self._packages.get(bundle_hash)

    def save(self, bundle_hash: str, package: QuestionPackage) -> None:
        with self._lock:
            self._packages[bundle_hash] = package


@dataclass
class _EntryResult:
    status: str  # OK | GOLDEN_DIFF | PIPELINE_FAIL | INPUT_ERROR
    detail: str


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        config = load_app_config(args.config)
        if args.provider:
            config.provider_kind = args.provider
        entries = load_manifest(Path(args.manifest))
        runtime = build_runtime(config)
    except (ValidationError, GatewayError) as exc:
        print(f"CONFIG_ERROR\t-\t{exc}")
        return 2

    if config.provider_kind == "mock":
        runtime.pipeline.clock = lambda: EPOCH  # reproducible package files

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    memo = _MemoryPackageStore()

    def process(index: int, entry: CorpusEntry) -> _EntryResult:
        try:
            problem = entry.problem_path.read_text("utf-8")
            code = entry.code_path.read_text("utf-8")
        except OSError as exc:
            return _EntryResult("INPUT_ERROR", str(exc))
        try:
            bundle = SubmissionBundle.create(
                problem, code, entry.code_path.name, entry.verdict,
                max_chars=config.max_upload_chars,
            )
        except ValidationError as exc:
            return _EntryResult("INPUT_ERROR", str(exc))
        try:
            package = runtime.pipeline.get_or_run(bundle, memo)
        except PipelineError as exc:
            return _EntryResult("PIPELINE_FAIL", str(exc))
        name = f"{index:03d}_{entry.problem_path.stem}_{bundle.content_hash[:12]}.json"
        out_path = out_dir / name
        payload = pretty_json(package.to_dict())
        atomic_write_text(out_path, payload)
        if args.golden and entry.expected_package_path is not None:
            try:
                expected = entry.expected_package_path.read_text("utf-8")
            except OSError as exc:
                return _EntryResult("INPUT_ERROR", f"golden file unreadable: {exc}")
            if expected != payload:
                return _EntryResult("GOLDEN_DIFF", str(out_path))
        return _EntryResult("OK", str(out_path))

    with ThreadPoolExecutor(max_workers=max(1, args.parallel)) as pool:
        futures = [pool.submit(process, i, e) for i, e in enumerate(entries)]
        results = [f.result() for f in futures]

    exit_code = 0
    for entry, result in zip(entries, results):
        print(f"{result.status}\t{entry.problem_path}\t{result.detail}")
        if result.status == "INPUT_ERROR":
            exit_code = 2
        elif result.status in ("PIPELINE_FAIL", "GOLDEN_DIFF") and exit_code != 2:
            exit_code = 1
    return exit_code


def cmd_audit_report(args: argparse.Namespace) -> int:
    path = Path(args.log)
    if not path.exists():
        print(f"CONFIG_ERROR\t-\taudit log {path} not found")
        return 2
    malformed = 0
    stages: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                malformed += 1
                continue
            if record.get("event") != "stage":
                continue
            try:
                name = record["stage"]
                attempts = int(record["attempts"])
                outcome = record["outcome"]
                duration = int(record["duration_ms"])
            except (KeyError, TypeError, ValueError):
                malformed += 1
                continue
            agg = stages.setdefault(
                name,
                {"runs": 0, "first_try": 0, "retried": 0, "succeeded": 0, "duration_total": 0},
            )
            agg["runs"] += 1
            if attempts == 1:
                agg["first_try"] += 1
            else:
                agg["retried"] += 1
            if outcome == "valid":
                agg["succeeded"] += 1
            agg["duration_total"] += duration

    header = f"{'stage':<24} {'runs':>5} {'first_try':>9} {'retried':>8} {'success':>8} {'mean_ms':>8}"
    print(header)
    for name in sorted(stages):
        agg = stages[name]
        runs = agg["runs"]
        first_rate = agg["first_try"] / runs
        success_rate = agg["succeeded"] / runs
        mean_ms = agg["duration_total"] / runs
        print(
            f"{name:<24} {int(runs):>5} {first_rate:>8.1%} {int(agg['retried']):>8} "
            f"{success_rate:>7.1%} {mean_ms:>8.1f}"
        )
    print(f"malformed_lines\t{malformed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpreflect", description="Reflection-tutor batch tools"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run pipelines over a corpus manifest")
    gen.add_argument("--config", help="JSON config file (default: $OWL_CONFIG)")
    gen.add_argument("--manifest", required=True, help="JSON array of corpus entries")
    gen.add_argument("--out", required=True, help="output directory for package files")
    gen.add_argument("--parallel", type=int, default=2, help="concurrent entries (default 2)")
    gen.add_argument("--golden", action="store_true", help="compare against expected packages")
    gen.add_argument("--provider", choices=["mock", "real"], help="override configured provider")
    gen.set_defaults(func=cmd_generate)

    audit = sub.add_parser("audit-report", help="aggregate stage attempts from an audit log")
    audit.add_argument("log", help="path to the audit JSON-lines file")
    audit.set_defaults(func=cmd_audit_report)
    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    sys.exit(args.func(args))


if __name__ == "__main__":
    main()
