"""Shared department plumbing: config, the admission gateway, seeding, and
process assembly.

A department process is: one store, one manager, one wire wrapper, one
service host serving HTTP, one registry publication. Everything a
department knows about the admission service it learns through the broker
(bind, then invoke), never by reading another department's files; the
fetch is re-bound per call so a restarted admission service is picked up
without cache invalidation logic.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .. import errors
from ..broker import RegistryClient, ServiceRecord, bind
from ..engine import ServerHandle, ServiceHost, serve
from ..envelope import TypedValue
from ..model import STORE_CODECS, StudentRecord, bean_to_student, validate_record
from ..storage import Store, open_store
from ..wsdd import DeploymentDescriptor, parse_wsdd

logger = logging.getLogger("i3.dept")

AMIS_SERVICE = "AdmissionDataBaseManagerService"

# dept key -> (service name, implementation class name, default storage format)
DEPT_INFO: dict[str, tuple[str, str, str]] = {
    "amis": (AMIS_SERVICE, "AdmissionDataBaseManager", "binarylog"),
    "lmis": ("LibraryDataBaseManagerService", "LibraryDataBaseManager", "tabular"),
    "hmis": ("HostelDataBaseManagerService", "HostelDataBaseManager", "jsonlines"),
    "campus": ("CampusDataBaseManagerService", "CampusDataBaseManager", "tabular"),
}

# record kinds each department seeds and owns
DEPT_KINDS: dict[str, tuple[str, ...]] = {
    "amis": ("students", "departments", "programmes"),
    "lmis": ("books", "library_students"),
    "hmis": ("rooms", "hostel_students"),
    "campus": ("campus_students",),
    "emis": ("exam_records",),
}


@dataclass(frozen=True)
class DeptConfig:
    dept: str                      # amis | lmis | hmis | campus
    data_dir: Path
    registry_url: str
    storage_format: str = ""       # empty means the department default
    wsdd_path: Path | None = None  # default: the bundled descriptor
    address: str = "127.0.0.1"
    port: int = 0
    log_path: Path | None = None
    call_timeout: float = 5.0

    def resolved_format(self) -> str:
        return self.storage_format or DEPT_INFO[self.dept][2]


class AmisGateway:
    """How other departments reach admission data: the broker path only."""

    def __init__(self, registry_url: str, timeout: float = 5.0):
        self.registry_url = registry_url
        self.timeout = timeout

    def fetch_student(self, student_id: str) -> StudentRecord:
        try:
            proxy = bind(self.registry_url, AMIS_SERVICE, self.timeout)
            result = proxy.call(
                "getStudent", [TypedValue("student_id", "string", student_id)],
                timeout=self.timeout)
        except errors.StudentNotFound:
            raise
        except errors.I3Error as exc:
            raise errors.AmisUnreachable(f"admission service: {exc}") from exc
        return bean_to_student(result.value)


def seed_store(store: Store, kinds: tuple[str, ...], seed_dir: Path) -> dict[str, int]:
    """Load fixture CSVs (one per record kind, named `<kind>.csv`) into a
    store. Returns kind -> row count for reporting. Invalid rows are
    refused loudly rather than skipped."""
    counts: dict[str, int] = {}
    for kind in kinds:
        path = Path(seed_dir) / f"{kind}.csv"
        if not path.exists():
            continue
        codec = STORE_CODECS[kind]
        loaded = 0
        with open(path, newline="", encoding="utf-8") as handle:
            for row in csv.DictReader(handle):
                record = codec.from_plain(row)
                problems = validate_record(record) if kind != "certificates" else []
                if problems:
                    raise errors.InvalidRecord(
                        f"{path.name}: {codec.key_of(record)}: {'; '.join(problems)}")
                store.put(kind, record)
                loaded += 1
        counts[kind] = loaded
    return counts


def _default_wsdd(dept: str) -> Path:
    fixtures = Path(__file__).resolve().parents[3] / "fixtures"
    return fixtures / ("campus.wsdd" if dept == "campus" else "i3.wsdd")


@dataclass
class DeptHandle:
    config: DeptConfig
    store: Store
    manager: object
    service: object
    host: ServiceHost
    server: ServerHandle
    record: ServiceRecord
    service_name: str = field(init=False)

    def __post_init__(self):
        self.service_name = self.record.name

    @property
    def url(self) -> str:
        return self.server.url

    def stop(self, unpublish: bool = False) -> None:
        if unpublish:
            try:
                RegistryClient(self.config.registry_url).unpublish(self.record.name)
            except errors.I3Error:
                pass  # registry may already be gone during teardown
        self.server.stop()
        self.host.close()
        self.store.close()


def _build_service(config: DeptConfig, store: Store, gateway: AmisGateway):
    # local imports: the dept modules import this module for shared pieces
    from .amis import AmisManager, AmisService
    from .campus import CampusManager, CampusService
    from .hmis import HmisManager, HmisService
    from .lmis import LmisManager, LmisService

    if config.dept == "amis":
        manager = AmisManager(store)
        return manager, AmisService(manager)
    if config.dept == "lmis":
        manager = LmisManager(store, gateway.fetch_student)
        return manager, LmisService(manager)
    if config.dept == "hmis":
        manager = HmisManager(store, gateway.fetch_student)
        return manager, HmisService(manager)
    if config.dept == "campus":
        manager = CampusManager(store, gateway.fetch_student)
        return manager, CampusService(manager)
    raise ValueError(f"unknown department {config.dept!r}")


def run_department(config: DeptConfig, seed_dir: Path | None = None) -> DeptHandle:
    """Boot one department: store, manager, host, HTTP server, publication."""
    service_name, class_name, _ = DEPT_INFO[config.dept]
    store = open_store(config.resolved_format(), config.data_dir)
    gateway = AmisGateway(config.registry_url, config.call_timeout)
    manager, service = _build_service(config, store, gateway)
    if seed_dir is not None:
        counts = seed_store(store, DEPT_KINDS[config.dept], seed_dir)
        if counts:
            logger.info("%s seeded %s", config.dept,
                        ", ".join(f"{k}={n}" for k, n in counts.items()))

    wsdd_path = config.wsdd_path or _default_wsdd(config.dept)
    descriptor = parse_wsdd(Path(wsdd_path).read_bytes())
    try:
        own = descriptor.service(service_name)
    except KeyError:
        raise errors.ServiceNotFound(
            f"{wsdd_path} does not declare {service_name}") from None

    host = ServiceHost(log_path=config.log_path)
    host.register_impl(class_name, service)
    host.deploy(DeploymentDescriptor(descriptor.handlers, (own,)))
    server = serve(host, config.address, config.port)

    endpoint = f"{server.url}/services/{service_name}"
    record = RegistryClient(config.registry_url).publish(
        ServiceRecord(service_name, endpoint, endpoint + "?wsdl"))
    return DeptHandle(config, store, manager, service, host, server, record)
