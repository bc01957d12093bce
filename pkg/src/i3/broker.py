"""Name registry and the client-side bind/invoke path.

The registry is a directory, not a service fabric member: name -> record
over HTTP with JSON bodies, backed by an append-only journal so it survives
restarts mid-test. Publishing is last-writer-wins; unpublishing writes a
tombstone.

Binding follows the discovery triangle exactly: ask the registry where the
service lives, fetch its description from the advertised URL, and build a
proxy from that document alone. The proxy checks calls against the fetched
schemas before any bytes leave the process, and turns remote faults back
into typed errors where the fault detail names one.
"""

from __future__ import annotations

import datetime
import json
import logging
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlparse

from . import errors
from .engine import WsdlDoc, parse_wsdl
from .envelope import Call, Envelope, TypedValue, decode_envelope, encode_envelope

logger = logging.getLogger("i3.broker")

DEFAULT_CALL_TIMEOUT = 10.0


@dataclass(frozen=True)
class ServiceRecord:
    name: str
    endpoint_url: str
    wsdl_url: str
    published_at: str = ""

    def to_plain(self) -> dict:
        return {
            "name": self.name,
            "endpoint_url": self.endpoint_url,
            "wsdl_url": self.wsdl_url,
            "published_at": self.published_at,
        }

    @classmethod
    def from_plain(cls, plain: dict) -> "ServiceRecord":
        return cls(plain["name"], plain["endpoint_url"], plain["wsdl_url"],
                   plain.get("published_at", ""))


def _check_absolute(url: str, what: str) -> None:
    parsed = urlparse(url)
    if parsed.scheme not in ("http", "https") or not parsed.netloc:
        raise errors.InvalidRecord(f"{what} must be an absolute URL, got {url!r}")


class Registry:
    """In-process registry state: a name map plus its journal."""

    def __init__(self, journal_path: str | Path | None = None):
        self._lock = threading.RLock()
        self._records: dict[str, ServiceRecord] = {}
        self._journal_path = Path(journal_path) if journal_path else None
        if self._journal_path is not None and self._journal_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self._journal_path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if entry["op"] == "publish":
                    record = ServiceRecord.from_plain(entry["record"])
                    self._records[record.name] = record
                elif entry["op"] == "unpublish":
                    self._records.pop(entry["name"], None)

    def _journal(self, entry: dict) -> None:
        if self._journal_path is None:
            return
        self._journal_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._journal_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(entry, separators=(",", ":")) + "\n")
            handle.flush()

    def publish(self, record: ServiceRecord) -> ServiceRecord:
        _check_absolute(record.endpoint_url, "endpoint_url")
        _check_absolute(record.wsdl_url, "wsdl_url")
        stamped = ServiceRecord(
            record.name, record.endpoint_url, record.wsdl_url,
            datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )
        with self._lock:
            self._records[record.name] = stamped
            self._journal({"op": "publish", "record": stamped.to_plain()})
        logger.info("published %s -> %s", record.name, record.endpoint_url)
        return stamped

    def find(self, name: str) -> ServiceRecord:
        with self._lock:
            record = self._records.get(name)
        if record is None:
            raise errors.NotFound(name)
        return record

    def unpublish(self, name: str) -> None:
        with self._lock:
            if name not in self._records:
                raise errors.NotFound(name)
            del self._records[name]
            self._journal({"op": "unpublish", "name": name})
        logger.info("unpublished %s", name)

    def list_records(self) -> list[ServiceRecord]:
        with self._lock:
            return [self._records[name] for name in sorted(self._records)]


class RegistryHandle:
    def __init__(self, server: ThreadingHTTPServer, thread: threading.Thread, url: str):
        self._server = server
        self._thread = thread
        self.url = url

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)


def serve_registry(registry: Registry, address: str = "127.0.0.1",
                   port: int = 0) -> RegistryHandle:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("registry http %s", fmt % args)

        def _reply(self, status: int, payload: dict | list) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _name(self) -> str | None:
            path = urlparse(self.path).path
            if path.startswith("/registry/") and len(path) > len("/registry/"):
                return path[len("/registry/"):]
            return None

        def do_GET(self):
            if urlparse(self.path).path == "/registry":
                self._reply(200, {"services": [r.to_plain() for r in registry.list_records()]})
                return
            name = self._name()
            if name is None:
                self._reply(404, {"error": "NotFound", "message": self.path})
                return
            try:
                self._reply(200, registry.find(name).to_plain())
            except errors.NotFound:
                self._reply(404, {"error": "NotFound", "message": name})

        def do_PUT(self):
            name = self._name()
            if name is None:
                self._reply(404, {"error": "NotFound", "message": self.path})
                return
            length = int(self.headers.get("Content-Length") or 0)
            try:
                plain = json.loads(self.rfile.read(length))
                record = ServiceRecord(name, plain["endpoint_url"], plain["wsdl_url"])
            except (ValueError, KeyError, TypeError) as exc:
                self._reply(400, {"error": "InvalidRecord", "message": str(exc)})
                return
            try:
                stamped = registry.publish(record)
            except errors.InvalidRecord as exc:
                self._reply(400, {"error": "InvalidRecord", "message": str(exc)})
                return
            self._reply(200, stamped.to_plain())

        def do_DELETE(self):
            name = self._name()
            if name is None:
                self._reply(404, {"error": "NotFound", "message": self.path})
                return
            try:
                registry.unpublish(name)
            except errors.NotFound:
                self._reply(404, {"error": "NotFound", "message": name})
                return
            self._reply(200, {"unpublished": name})

    try:
        server = ThreadingHTTPServer((address, port), Handler)
    except OSError as exc:
        raise errors.BindFailed(f"{address}:{port}: {exc}") from exc
    server.daemon_threads = True
    url = f"http://{address}:{server.server_address[1]}"
    thread = threading.Thread(target=server.serve_forever,
                              name=f"i3-registry-{server.server_address[1]}",
                              daemon=True)
    thread.start()
    logger.info("registry at %s", url)
    return RegistryHandle(server, thread, url)


# --- client side ------------------------------------------------------------

class RegistryClient:
    def __init__(self, base_url: str, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _request(self, method: str, path: str, payload: dict | None = None):
        data = json.dumps(payload).encode("utf-8") if payload is not None else None
        request = urllib.request.Request(
            f"{self.base_url}{path}", data=data, method=method,
            headers={"Content-Type": "application/json"} if data else {},
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                return resp.status, json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            try:
                return exc.code, json.loads(exc.read())
            except ValueError:
                raise errors.RegistryUnreachable(
                    f"{self.base_url}: non-registry reply {exc.code}") from exc
        except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
            raise errors.RegistryUnreachable(f"{self.base_url}: {exc}") from exc

    def publish(self, record: ServiceRecord) -> ServiceRecord:
        status, body = self._request("PUT", f"/registry/{record.name}", {
            "endpoint_url": record.endpoint_url,
            "wsdl_url": record.wsdl_url,
        })
        if status != 200:
            raise errors.InvalidRecord(body.get("message", str(body)))
        return ServiceRecord.from_plain(body)

    def find(self, name: str) -> ServiceRecord:
        status, body = self._request("GET", f"/registry/{name}")
        if status == 404:
            raise errors.NotFound(name)
        if status != 200:
            raise errors.RegistryUnreachable(f"unexpected status {status}")
        return ServiceRecord.from_plain(body)

    def unpublish(self, name: str) -> None:
        status, body = self._request("DELETE", f"/registry/{name}")
        if status == 404:
            raise errors.NotFound(name)
        if status != 200:
            raise errors.RegistryUnreachable(f"unexpected status {status}")

    def list_services(self) -> list[ServiceRecord]:
        status, body = self._request("GET", "/registry")
        if status != 200:
            raise errors.RegistryUnreachable(f"unexpected status {status}")
        return [ServiceRecord.from_plain(p) for p in body["services"]]


@dataclass(frozen=True)
class ServiceProxy:
    """Immutable client-side stub built from the fetched description."""

    record: ServiceRecord
    wsdl: WsdlDoc
    timeout: float = DEFAULT_CALL_TIMEOUT

    def __post_init__(self):
        object.__setattr__(self, "_registry", self.wsdl.bean_registry())

    def operations(self) -> list[str]:
        return [op.name for op in self.wsdl.operations]

    def call(self, method: str, params: list[TypedValue] | tuple = (),
             timeout: float | None = None) -> TypedValue:
        op = self.wsdl.operation(method)
        if op is None:
            raise errors.MethodNotInWsdl(f"{self.record.name} has no {method}")
        params = tuple(params)
        mismatch = _check_call(params, op.params)
        if mismatch is not None:
            raise errors.TypeMismatch(f"{method}: {mismatch}")
        body = encode_envelope(
            Envelope(Call(self.record.name, method, params)), self._registry)
        request = urllib.request.Request(
            self.record.endpoint_url, data=body,
            headers={"Content-Type": "text/xml; charset=utf-8"},
        )
        try:
            with urllib.request.urlopen(
                    request, timeout=self.timeout if timeout is None else timeout) as resp:
                wire = resp.read()
        except urllib.error.HTTPError as exc:
            wire = exc.read()  # fault envelopes ride on error statuses
        except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
            raise errors.EndpointUnreachable(
                f"{self.record.endpoint_url}: {exc}") from exc
        reply = decode_envelope(wire, self._registry)
        if reply.kind == "Response":
            return reply.payload.result
        if reply.kind == "Fault":
            fault = reply.payload
            raise _fault_to_error(fault.code, fault.message, fault.detail)
        raise errors.RemoteFault("Server", f"unexpected {reply.kind} envelope")


def _check_call(params, schema) -> str | None:
    if len(params) != len(schema):
        return f"expected {len(schema)} params, got {len(params)}"
    for given, (name, tag) in zip(params, schema):
        if given.name != name or given.tag != tag:
            return (f"expected param {name!r} of type {tag!r}, "
                    f"got {given.name!r} of type {given.tag!r}")
    return None


def _fault_to_error(code: str, message: str, detail: str | None) -> errors.I3Error:
    typed = errors.resurrect(detail, message)
    if typed is not None:
        return typed
    return errors.RemoteFault(code, message, detail)


def bind(registry_url: str, service_name: str,
         timeout: float = DEFAULT_CALL_TIMEOUT) -> ServiceProxy:
    """find -> fetch description -> proxy; exactly the discovery triangle."""
    record = RegistryClient(registry_url).find(service_name)
    request = urllib.request.Request(record.wsdl_url)
    try:
        with urllib.request.urlopen(request, timeout=timeout) as resp:
            raw = resp.read()
    except (urllib.error.URLError, urllib.error.HTTPError, TimeoutError,
            ConnectionError, OSError) as exc:
        raise errors.WsdlFetchFailed(f"{record.wsdl_url}: {exc}") from exc
    try:
        doc = parse_wsdl(raw)
    except errors.I3Error as exc:
        raise errors.WsdlFetchFailed(f"{record.wsdl_url}: {exc}") from exc
    return ServiceProxy(record, doc, timeout)
