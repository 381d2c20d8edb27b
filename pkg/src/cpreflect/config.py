"""Application configuration: one JSON file wires the whole deployment.

The file names the provider, model, temperatures, counts, word limits,
timeouts, and storage paths. The path comes from ``--config`` or the
``OWL_CONFIG`` environment variable; the API credential for a real
provider always comes from ``LLM_API_KEY``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .assessment import DEFAULT_MAX_ANSWER_CHARS, Assessor
from .audit import AuditLog
from .contracts import ContractRegistry, load_contracts
from .domain import DEFAULT_MAX_UPLOAD_CHARS, PipelineConfig, ValidationError
from .gateway import ClientRole, Gateway, load_provider
from .pipelines import Pipeline
from .store import SessionStore

CONFIG_ENV = "OWL_CONFIG"


@dataclass
class AppConfig:
    provider_kind: str = "mock"
    endpoint: str = ""
    model: str = ""
    mock_script: str | None = None
    request_timeout_s: float = 60.0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    stage_timeout_s: float = 60.0
    run_timeout_s: float = 240.0
    storage_root: str = "./cpreflect-data"
    audit_log: str | None = None  # default: <storage_root>/audit.jsonl
    contracts_file: str | None = None  # default: packaged contracts.json
    personas: dict[str, str] = field(default_factory=dict)
    instructor_token: str = "change-me"
    max_answer_chars: int = DEFAULT_MAX_ANSWER_CHARS
    max_upload_chars: int = DEFAULT_MAX_UPLOAD_CHARS
    host: str = "127.0.0.1"
    port: int = 8000
    ui_dir: str | None = None

    @property
    def audit_log_path(self) -> Path:
        if self.audit_log:
            return Path(self.audit_log)
        return Path(self.storage_root) / "audit.jsonl"

    def role_personas(self) -> dict[ClientRole, str] | None:
        if not self.personas:
            return None
        return {ClientRole.from_json(name): text for name, text in self.personas.items()}


def load_app_config(path: str | os.PathLike[str] | None = None) -> AppConfig:
    """Load configuration from *path*, ``$OWL_CONFIG``, or defaults."""
    if path is None:
        env = os.environ.get(CONFIG_ENV)
        path = Path(env) if env else None
    if path is None:
        return AppConfig()
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise ValidationError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config: invalid JSON in {path}: {exc}") from exc
    return parse_app_config(data)


def parse_app_config(data: dict[str, Any]) -> AppConfig:
    provider = data.get("provider", {})
    timeouts = data.get("timeouts", {})
    storage = data.get("storage", {})
    limits = data.get("limits", {})
    server = data.get("server", {})
    return AppConfig(
        provider_kind=provider.get("kind", "mock"),
        endpoint=provider.get("endpoint", ""),
        model=provider.get("model", ""),
        mock_script=provider.get("script"),
        request_timeout_s=float(provider.get("request_timeout_s", 60.0)),
        pipeline=PipelineConfig.from_dict(data.get("pipeline", {})),
        stage_timeout_s=float(timeouts.get("stage_s", 60.0)),
        run_timeout_s=float(timeouts.get("run_s", 240.0)),
        storage_root=storage.get("root", "./cpreflect-data"),
        audit_log=storage.get("audit_log"),
        contracts_file=storage.get("contracts_file"),
        personas=data.get("personas", {}),
        instructor_token=data.get("instructor_token", "change-me"),
        max_answer_chars=int(limits.get("max_answer_chars", DEFAULT_MAX_ANSWER_CHARS)),
        max_upload_chars=int(limits.get("max_upload_chars", DEFAULT_MAX_UPLOAD_CHARS)),
        host=server.get("host", "127.0.0.1"),
        port=int(server.get("port", 8000)),
        ui_dir=server.get("ui_dir"),
    )


@dataclass
class Runtime:
    """Fully wired application components."""

    config: AppConfig
    audit: AuditLog
    gateway: Gateway
    contracts: ContractRegistry
    store: SessionStore
    pipeline: Pipeline
    assessor: Assessor


def build_runtime(config: AppConfig, durable: bool = True) -> Runtime:
    provider = load_provider(
        config.provider_kind,
        endpoint=config.endpoint,
        model=config.model,
        script_path=config.mock_script,
        request_timeout_s=config.request_timeout_s,
    )
    audit = AuditLog(config.audit_log_path, durable=durable)
    gateway = Gateway(provider, audit)
    contracts = load_contracts(config.contracts_file)
    personas = config.role_personas()
    pipeline = Pipeline(
        gateway,
        contracts,
        config.pipeline,
        personas=personas,
        stage_timeout_s=config.stage_timeout_s,
        run_timeout_s=config.run_timeout_s,
    )
    assessor = Assessor(
        gateway,
        contracts,
        config.pipeline,
        personas=personas,
        stage_timeout_s=config.stage_timeout_s,
        max_answer_chars=config.max_answer_chars,
    )
    store = SessionStore(config.storage_root, durable=durable)
    return Runtime(
        config=config,
        audit=audit,
        gateway=gateway,
        contracts=contracts,
        store=store,
        pipeline=pipeline,
        assessor=assessor,
    )
