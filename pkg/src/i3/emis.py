"""Examination-side orchestration: no-dues verification and certificates.

The orchestrator fans out to the admission, library, and hostel services
through the broker, folds the answers into a VerificationResult, and gates
certificate issuance on an all-clear outcome plus a passed exam record.  A
small JSON-over-HTTP gateway exposes the same operations to the registrar
console; it holds no rules of its own.
"""

import dataclasses
import datetime
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit

from . import errors, model
from .broker import RegistryClient, ServiceProxy, bind
from .dept.base import AMIS_SERVICE, DEPT_INFO, DEPT_KINDS, seed_store
from .envelope import TypedValue
from .storage import Store, open_store

# Per-department call budget; well inside the engine's request budget so a
# slow department surfaces as Unreachable here, not as an engine timeout.
DEFAULT_CALL_TIMEOUT = 3.0

# gateway registration target -> (service name, record kind, bean decoder)
_REGISTER_TARGETS = {
    "library": (DEPT_INFO["lmis"][0], "library_students", model.bean_to_library_record),
    "hostel": (DEPT_INFO["hmis"][0], "hostel_students", model.bean_to_hostel_record),
    "campus": (DEPT_INFO["campus"][0], "campus_students", model.bean_to_student),
}


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


class EmisOrchestrator:
    """Verification fan-out and certificate issuance over one local store.

    The store holds exam records and issued certificates; everything else is
    fetched live from the departmental services on every verify call, so a
    store-less orchestrator can still verify, it just cannot issue.  The
    department list is configurable, but each configured department needs a
    checker: a callable taking a student id and returning a DeptStatus.
    """

    def __init__(
        self,
        registry_url: str,
        store: Store | None = None,
        audit_path: str | Path | None = None,
        call_timeout: float = DEFAULT_CALL_TIMEOUT,
        departments: tuple[str, ...] = model.DEPARTMENTS,
        checkers: dict | None = None,
        sequential: bool = False,
    ):
        self.registry_url = registry_url
        self.call_timeout = call_timeout
        self.departments = departments
        self.sequential = sequential
        self._store = store
        self._registry = RegistryClient(registry_url, timeout=call_timeout)
        self._checkers = {
            "Admission": self._check_admission,
            "Library": self._check_library,
            "Hostel": self._check_hostel,
        }
        if checkers:
            self._checkers.update(checkers)
        missing = [d for d in departments if d not in self._checkers]
        if missing:
            raise ValueError(f"no checker for departments {missing}")
        self._proxies: dict[str, ServiceProxy] = {}
        self._proxy_lock = threading.Lock()
        self._audit: list[dict] = []
        self._audit_lock = threading.Lock()
        self._audit_file = None
        if audit_path is not None:
            self._audit_file = open(audit_path, "a", encoding="utf-8")
        self._issue_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- broker plumbing ---------------------------------------------------

    def _proxy(self, service_name: str, refresh: bool = False) -> ServiceProxy:
        with self._proxy_lock:
            if refresh:
                self._proxies.pop(service_name, None)
            proxy = self._proxies.get(service_name)
        if proxy is None:
            proxy = bind(self.registry_url, service_name, timeout=self.call_timeout)
            with self._proxy_lock:
                self._proxies[service_name] = proxy
        return proxy

    def _call(self, service_name: str, method: str, params=()) -> TypedValue:
        """Call through a cached proxy, rebinding once on a dead endpoint.

        A stale cache entry (service restarted on a new port) looks like an
        unreachable endpoint; one fresh bind distinguishes that from a service
        that is actually down.  Domain faults pass through untouched.
        """
        try:
            return self._proxy(service_name).call(
                method, list(params), timeout=self.call_timeout)
        except errors.EndpointUnreachable:
            proxy = self._proxy(service_name, refresh=True)
            return proxy.call(method, list(params), timeout=self.call_timeout)

    # -- per-department checkers ------------------------------------------

    def _check_admission(self, student_id: str) -> model.DeptStatus:
        try:
            self._call(AMIS_SERVICE, "getStudent",
                       [TypedValue("student_id", "string", student_id)])
        except errors.StudentNotFound:
            return model.DeptStatus.defaulter("not found in admission records")
        return model.DeptStatus.clear()

    def _check_report(self, service_name: str, department: str,
                      student_id: str) -> model.DeptStatus:
        # Departments publish a full defaulter report; the per-student answer
        # is a local filter over it.
        reply = self._call(service_name, "defaulterReport")
        report = model.items_to_report(department, reply.value)
        reason = report.reason_for(student_id)
        if reason is not None:
            return model.DeptStatus.defaulter(reason)
        return model.DeptStatus.clear()

    def _check_library(self, student_id: str) -> model.DeptStatus:
        return self._check_report(DEPT_INFO["lmis"][0], "Library", student_id)

    def _check_hostel(self, student_id: str) -> model.DeptStatus:
        return self._check_report(DEPT_INFO["hmis"][0], "Hostel", student_id)

    def _probe(self, department: str, student_id: str):
        """Run one checker, never raising: failures become Unreachable."""
        started = time.perf_counter()
        try:
            status = self._checkers[department](student_id)
        except errors.I3Error as exc:
            status = model.DeptStatus.unreachable(f"{type(exc).__name__}: {exc}")
        except Exception as exc:  # checker bug: still fail closed
            status = model.DeptStatus.unreachable(f"{type(exc).__name__}: {exc}")
        return status, time.perf_counter() - started

    # -- operations --------------------------------------------------------

    def verify_student(self, student_id: str) -> model.VerificationResult:
        try:
            self._registry.list_services()
        except errors.RegistryUnreachable as exc:
            raise errors.BrokerUnreachable(f"registry at {self.registry_url}: {exc}") from exc
        outcomes: dict[str, tuple[model.DeptStatus, float]] = {}
        if self.sequential:
            for dept in self.departments:
                outcomes[dept] = self._probe(dept, student_id)
        else:
            with ThreadPoolExecutor(max_workers=len(self.departments)) as pool:
                futures = {
                    dept: pool.submit(self._probe, dept, student_id)
                    for dept in self.departments
                }
                for dept, future in futures.items():
                    outcomes[dept] = future.result()
        result = model.VerificationResult(
            student_id, {dept: outcomes[dept][0] for dept in self.departments})
        self._append_audit(student_id, result,
                           {dept: outcomes[dept][1] for dept in self.departments})
        return result

    def issue_certificate(self, student_id: str, programme_id: str) -> model.Certificate:
        if self._store is None:
            raise errors.I3Error("certificate issuance needs an exam store")
        key = f"{student_id}|{programme_id}"
        with self._locks_guard:
            lock = self._issue_locks.setdefault(key, threading.Lock())
        with lock:
            existing = self._store.get("certificates", key)
            if existing is not None:
                return existing
            exam = self._store.get("exam_records", key)
            if exam is None:
                raise errors.ExamRecordMissing(
                    f"no exam record for student {student_id!r} in programme "
                    f"{programme_id!r}")
            if not exam.passed:
                raise errors.ExamNotPassed(
                    f"student {student_id!r} has not passed programme "
                    f"{programme_id!r}")
            result = self.verify_student(student_id)
            if result.overall != model.CLEAR:
                raise errors.VerificationBlocked(result)
            certificate = model.Certificate(
                f"C-{student_id}-{programme_id}", student_id, programme_id,
                _utc_now(), result)
            self._store.put("certificates", certificate)
            return certificate

    def find_certificate(self, certificate_id: str) -> model.Certificate:
        if self._store is None:
            raise errors.I3Error("certificate lookup needs an exam store")
        for certificate in self._store.scan("certificates"):
            if certificate.certificate_id == certificate_id:
                return certificate
        raise errors.NotFound(f"no certificate {certificate_id!r}")

    # -- pass-throughs for the gateway ------------------------------------

    def list_students(self) -> list[dict]:
        reply = self._call(AMIS_SERVICE, "listStudents")
        return [
            {"id": item.value.values["id"], "label": item.value.values["label"]}
            for item in reply.value
        ]

    def get_student(self, student_id: str) -> model.StudentRecord:
        reply = self._call(AMIS_SERVICE, "getStudent",
                           [TypedValue("student_id", "string", student_id)])
        return model.bean_to_student(reply.value)

    def register_student(self, target: str, student_id: str) -> dict:
        service_name, kind, decode = _REGISTER_TARGETS[target]
        reply = self._call(service_name, "registerStudent",
                           [TypedValue("student_id", "string", student_id)])
        return model.STORE_CODECS[kind].to_plain(decode(reply.value))

    # -- audit -------------------------------------------------------------

    def _append_audit(self, student_id: str, result: model.VerificationResult,
                      durations: dict[str, float]) -> None:
        entry = {
            "student_id": student_id,
            "timestamp": _utc_now(),
            "result": result.to_plain(),
            "durations_ms": {
                dept: round(seconds * 1000.0, 3)
                for dept, seconds in durations.items()
            },
        }
        with self._audit_lock:
            self._audit.append(entry)
            if self._audit_file is not None:
                self._audit_file.write(
                    json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n")
                self._audit_file.flush()

    def audit_entries(self) -> list[dict]:
        with self._audit_lock:
            return list(self._audit)

    def close(self) -> None:
        with self._audit_lock:
            if self._audit_file is not None:
                self._audit_file.close()
                self._audit_file = None


# -- JSON gateway ----------------------------------------------------------

def _error_payload(exc: Exception) -> dict:
    detail = None
    if isinstance(exc, errors.VerificationBlocked):
        detail = exc.result.to_plain()
    elif isinstance(exc, errors.ValidationFailed):
        detail = list(exc.violations)
    return {"code": type(exc).__name__, "message": str(exc), "detail": detail}


def gateway_status(exc: Exception) -> int:
    if isinstance(exc, (errors.ValidationFailed, errors.TypeMismatch,
                        errors.MalformedXml, errors.MethodNotInWsdl,
                        errors.InvalidRecord)):
        return 400
    if isinstance(exc, (errors.StudentNotFound, errors.BookNotFound,
                        errors.RoomNotFound, errors.NotFound,
                        errors.ServiceNotFound, errors.ExamRecordMissing)):
        return 404
    if isinstance(exc, (errors.BrokerUnreachable, errors.RegistryUnreachable,
                        errors.EndpointUnreachable, errors.AmisUnreachable,
                        errors.WsdlFetchFailed, errors.RemoteFault)):
        return 502
    if isinstance(exc, (errors.VerificationBlocked, errors.ExamNotPassed,
                        errors.DomainFault)):
        return 409
    return 500


@dataclass
class GatewayHandle:
    url: str
    stop: callable


def serve_gateway(orchestrator: EmisOrchestrator, address: str = "127.0.0.1",
                  port: int = 0) -> GatewayHandle:
    """Serve the JSON facade; returns a handle with the bound URL."""

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):
            pass

        def _send(self, status: int, payload) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _send_error(self, exc: Exception) -> None:
            self._send(gateway_status(exc), _error_payload(exc))

        def _route_not_found(self) -> None:
            self._send(404, {"code": "NotFound",
                             "message": f"no route {self.command} {self.path}",
                             "detail": None})

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            if not raw:
                return {}
            parsed = json.loads(raw.decode("utf-8"))
            if not isinstance(parsed, dict):
                raise ValueError("body must be a JSON object")
            return parsed

        def do_OPTIONS(self):
            # CORS preflight for the browser console.
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            path = urlsplit(self.path).path
            try:
                if path == "/api/students":
                    self._send(200, orchestrator.list_students())
                elif path.startswith("/api/students/"):
                    student_id = path[len("/api/students/"):]
                    record = orchestrator.get_student(student_id)
                    self._send(200, dataclasses.asdict(record))
                elif path.startswith("/api/certificates/"):
                    certificate_id = path[len("/api/certificates/"):]
                    certificate = orchestrator.find_certificate(certificate_id)
                    self._send(200, model.STORE_CODECS["certificates"].to_plain(certificate))
                elif path == "/api/audit":
                    self._send(200, orchestrator.audit_entries())
                else:
                    self._route_not_found()
            except Exception as exc:
                self._send_error(exc)

        def do_POST(self):
            path = urlsplit(self.path).path
            try:
                if path.startswith("/api/register/"):
                    parts = path[len("/api/register/"):].split("/")
                    if len(parts) != 2 or parts[0] not in _REGISTER_TARGETS or not parts[1]:
                        self._route_not_found()
                        return
                    self._send(200, orchestrator.register_student(parts[0], parts[1]))
                elif path.startswith("/api/verify/"):
                    student_id = path[len("/api/verify/"):]
                    result = orchestrator.verify_student(student_id)
                    self._send(200, result.to_plain())
                elif path == "/api/certificates":
                    body = self._body()
                    student_id = body.get("student_id")
                    programme_id = body.get("programme_id")
                    if not student_id or not programme_id:
                        self._send(400, {
                            "code": "BadRequest",
                            "message": "body must carry student_id and programme_id",
                            "detail": None})
                        return
                    certificate = orchestrator.issue_certificate(student_id, programme_id)
                    self._send(200, model.STORE_CODECS["certificates"].to_plain(certificate))
                else:
                    self._route_not_found()
            except (ValueError, UnicodeDecodeError) as exc:
                self._send(400, {"code": "BadRequest", "message": str(exc),
                                 "detail": None})
            except Exception as exc:
                self._send_error(exc)

    try:
        server = ThreadingHTTPServer((address, port), Handler)
    except OSError as exc:
        raise errors.BindFailed(f"cannot bind gateway to {address}:{port}: {exc}") from exc
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://{server.server_address[0]}:{server.server_address[1]}"

    def stop():
        server.shutdown()
        server.server_close()
        thread.join(timeout=5.0)

    return GatewayHandle(url=url, stop=stop)


# -- process wiring --------------------------------------------------------

@dataclass(frozen=True)
class EmisConfig:
    data_dir: Path
    registry_url: str
    storage_format: str = "binarylog"
    address: str = "127.0.0.1"
    port: int = 0
    audit_name: str = "audit.jsonl"
    call_timeout: float = DEFAULT_CALL_TIMEOUT


@dataclass
class EmisHandle:
    config: EmisConfig
    store: Store
    orchestrator: EmisOrchestrator
    gateway: GatewayHandle

    @property
    def url(self) -> str:
        return self.gateway.url

    def stop(self) -> None:
        self.gateway.stop()
        self.orchestrator.close()
        self.store.close()


def run_emis(config: EmisConfig, seed_dir: str | Path | None = None) -> EmisHandle:
    """Open the exam store, seed it, and serve the gateway."""
    data_dir = Path(config.data_dir)
    store = open_store(config.storage_format, data_dir)
    try:
        if seed_dir is not None:
            seed_store(store, DEPT_KINDS["emis"], seed_dir)
        orchestrator = EmisOrchestrator(
            config.registry_url, store,
            audit_path=data_dir / config.audit_name,
            call_timeout=config.call_timeout)
        gateway = serve_gateway(orchestrator, config.address, config.port)
    except Exception:
        store.close()
        raise
    return EmisHandle(config=config, store=store, orchestrator=orchestrator,
                      gateway=gateway)
