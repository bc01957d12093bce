"""Service host: deploy descriptors, dispatch calls, describe services.

The host owns the deployed-service table, the handler registry, and the
bean registry that the codec validates against. Implementations plug in as
plain objects with a ``SIGNATURES`` table (method name -> parameter schema
and result slot) and one Python method per operation; dispatch decodes,
runs the declared handler chain, checks the call against the signature,
invokes, and wraps the outcome in a Response or Fault envelope. Nothing
dispatch does raises: every failure becomes a Fault with a precise code.

Discovery uses a WSDL-lite document, an XML description in the same
primitive-tag vocabulary as the wire grammar. It embeds every bean schema
the host knows, because list-typed fields carry self-describing items whose
types cannot be enumerated statically. A client built from the document
alone can form valid calls.
"""

from __future__ import annotations

import concurrent.futures
import datetime
import json
import logging
import threading
from collections import deque
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlparse

from . import errors
from .envelope import (
    BeanRegistry, Call, Envelope, Fault, Response, TypedValue,
    decode_envelope, encode_envelope,
)
from .model import BINDING_SCHEMAS, base_bean_registry
from .wsdd import (
    DeploymentDescriptor, UndeploymentDescriptor,
    parse_undeploy, parse_wsdd, validate,
)
from .xmlio import XML_DECL, element, esc_attr, parse_xml

logger = logging.getLogger("i3.engine")

REQUEST_BUDGET = 10.0  # seconds per dispatched request


# --- WSDL-lite --------------------------------------------------------------

@dataclass(frozen=True)
class WsdlOperation:
    name: str
    params: tuple[tuple[str, str], ...]  # (param name, i3type)
    result: tuple[str, str]              # (result name, i3type)


@dataclass(frozen=True)
class WsdlDoc:
    service_name: str
    endpoint_url: str
    operations: tuple[WsdlOperation, ...]
    beans: tuple[tuple[str, tuple[tuple[str, str], ...]], ...]

    def operation(self, name: str) -> WsdlOperation | None:
        for op in self.operations:
            if op.name == name:
                return op
        return None

    def bean_registry(self) -> BeanRegistry:
        registry = BeanRegistry()
        for qname, schema in self.beans:
            registry.register(qname, list(schema))
        return registry


def render_wsdl(doc: WsdlDoc) -> bytes:
    beans = []
    for qname, schema in doc.beans:
        fields = [
            element("i3:Field", [("name", name), ("i3type", tag)], "")
            for name, tag in schema
        ]
        beans.append(element("i3:Bean", [("qname", qname)], "".join(fields)))
    ops = []
    for op in doc.operations:
        params = [
            element("i3:Param", [("name", name), ("i3type", tag)], "")
            for name, tag in op.params
        ]
        ops.append(element("i3:Operation", [("name", op.name)],
                           element("i3:Input", [], "".join(params))
                           + element("i3:Output",
                                     [("name", op.result[0]),
                                      ("i3type", op.result[1])], "")))
    body = (element("i3:Types", [], "".join(beans))
            + element("i3:Operations", [], "".join(ops)))
    root = element(
        "i3:Description",
        [("service", esc_attr(doc.service_name)),
         ("endpoint", esc_attr(doc.endpoint_url))],
        body,
    )
    return (XML_DECL + root).encode("utf-8")


def _wsdl_slot(node, what: str) -> tuple[str, str]:
    name = node.attrs.get("name")
    tag = node.attrs.get("i3type")
    if name is None or tag is None:
        raise errors.MalformedXml(f"{what} missing name/i3type")
    return name, tag


def parse_wsdl(data: bytes) -> WsdlDoc:
    root = parse_xml(data)
    if root.name != "i3:Description":
        raise errors.MalformedXml(f"expected i3:Description, got {root.name}")
    service = root.attrs.get("service")
    endpoint = root.attrs.get("endpoint")
    if not service or not endpoint:
        raise errors.MalformedXml("description missing service/endpoint")
    beans: list[tuple[str, tuple[tuple[str, str], ...]]] = []
    operations: list[WsdlOperation] = []
    for section in root.children:
        if section.name == "i3:Types":
            for bean in section.children:
                if bean.name != "i3:Bean" or "qname" not in bean.attrs:
                    raise errors.MalformedXml("bad types section")
                schema = tuple(_wsdl_slot(f, "field") for f in bean.children)
                beans.append((bean.attrs["qname"], schema))
        elif section.name == "i3:Operations":
            for op in section.children:
                if op.name != "i3:Operation" or "name" not in op.attrs:
                    raise errors.MalformedXml("bad operations section")
                params: tuple[tuple[str, str], ...] = ()
                result = None
                for part in op.children:
                    if part.name == "i3:Input":
                        params = tuple(_wsdl_slot(p, "param") for p in part.children)
                    elif part.name == "i3:Output":
                        result = _wsdl_slot(part, "output")
                    else:
                        raise errors.MalformedXml(f"unexpected {part.name} in operation")
                if result is None:
                    raise errors.MalformedXml(f"operation {op.attrs['name']} has no output")
                operations.append(WsdlOperation(op.attrs["name"], params, result))
        else:
            raise errors.MalformedXml(f"unexpected {section.name} in description")
    return WsdlDoc(service, endpoint, tuple(operations), tuple(beans))


# --- handlers ---------------------------------------------------------------

@dataclass(frozen=True)
class HandlerInvocation:
    handler: str
    timestamp: str
    service: str
    method: str


class LogHandler:
    """The File-1 ``print`` handler: records each call it sees.

    Appends to the host's bounded ring and, when the host has a log file,
    one line there too. Always passes the call through unchanged.
    """

    def __init__(self, name: str, host: "ServiceHost"):
        self.name = name
        self._host = host

    def __call__(self, call: Call) -> Call:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        entry = HandlerInvocation(self.name, stamp, call.service_name, call.method)
        self._host.handler_log.append(entry)
        self._host.write_log_line(
            f"{stamp} {self.name} {call.service_name}.{call.method}"
        )
        return call


HANDLER_KINDS = {"LogHandler": LogHandler}


# --- host -------------------------------------------------------------------

_FAULT_STATUS = {
    "Client": 400,
    "TypeMismatch": 400,
    "ServiceNotFound": 404,
    "MethodNotFound": 404,
}


def fault_status(code: str) -> int:
    return _FAULT_STATUS.get(code, 500)


@dataclass
class DeployedService:
    decl: object
    impl: object


class ServiceHost:
    """One process's service engine: deployment table plus dispatcher."""

    def __init__(self, base_url: str = "http://127.0.0.1:0",
                 request_budget: float = REQUEST_BUDGET,
                 log_path=None,
                 log_ring_size: int = 10000):
        self.base_url = base_url.rstrip("/")
        self.request_budget = request_budget
        self.bean_registry = base_bean_registry()
        self.handler_log: deque[HandlerInvocation] = deque(maxlen=log_ring_size)
        self._log_path = log_path
        self._log_lock = threading.Lock()
        self._lock = threading.RLock()
        self._impls: dict[str, object] = {}
        self._handlers: dict[str, object] = {}
        self._deployed: dict[str, DeployedService] = {}
        self._pool = concurrent.futures.ThreadPoolExecutor(
            max_workers=32, thread_name_prefix="i3-dispatch")

    # -- configuration --

    def register_impl(self, class_suffix: str, impl) -> None:
        """Make an implementation available for descriptors to bind by the
        suffix of their className parameter."""
        if not getattr(impl, "SIGNATURES", None):
            raise ValueError(f"{class_suffix}: implementation has no SIGNATURES")
        self._impls[class_suffix] = impl

    def write_log_line(self, line: str) -> None:
        if self._log_path is None:
            return
        with self._log_lock:
            with open(self._log_path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    # -- deployment --

    def deploy(self, descriptor: DeploymentDescriptor) -> list[str]:
        with self._lock:
            violations = validate(descriptor, set(self._impls),
                                  self.bean_registry, BINDING_SCHEMAS)
            for handler in descriptor.handlers:
                if handler.handler_kind not in HANDLER_KINDS:
                    violations.append(
                        f"handler {handler.name!r}: unknown kind {handler.handler_kind!r}")
            if violations:
                raise errors.ValidationFailed(violations)
            for service in descriptor.services:
                if service.name in self._deployed:
                    raise errors.AlreadyDeployed(service.name)
            for handler in descriptor.handlers:
                self._handlers[handler.name] = HANDLER_KINDS[handler.handler_kind](
                    handler.name, self)
            for service in descriptor.services:
                for qname, binding in service.bean_mappings:
                    if qname not in self.bean_registry.qnames():
                        self.bean_registry.register(qname, BINDING_SCHEMAS[binding])
                impl = self._impls[service.class_name]
                self._deployed[service.name] = DeployedService(service, impl)
            names = [s.name for s in descriptor.services]
        logger.info("deployed %s", ", ".join(names))
        return names

    def undeploy(self, descriptor: UndeploymentDescriptor) -> list[str]:
        removed: list[str] = []
        missing: list[str] = []
        with self._lock:
            for name in descriptor.service_names:
                if name in self._deployed:
                    del self._deployed[name]
                    removed.append(name)
                else:
                    missing.append(name)
        if removed:
            logger.info("undeployed %s", ", ".join(removed))
        if missing:
            raise errors.NotDeployed(", ".join(missing))
        return removed

    def list_services(self) -> list[str]:
        with self._lock:
            return list(self._deployed)

    # -- description --

    def generate_wsdl(self, service_name: str) -> WsdlDoc:
        with self._lock:
            deployed = self._deployed.get(service_name)
            if deployed is None:
                raise errors.ServiceNotFound(service_name)
            beans = tuple(
                (qname, tuple(self.bean_registry.schema(qname)))
                for qname in self.bean_registry.qnames()
            )
        allowed = deployed.decl.allowed_method_set()
        operations = tuple(
            WsdlOperation(method, tuple(params), result)
            for method, (params, result) in deployed.impl.SIGNATURES.items()
            if allowed is None or method in allowed
        )
        endpoint = f"{self.base_url}/services/{service_name}"
        return WsdlDoc(service_name, endpoint, operations, beans)

    # -- dispatch --

    def dispatch(self, envelope: Envelope) -> Envelope:
        """Serve one request envelope; never raises."""
        try:
            future = self._pool.submit(self._dispatch_now, envelope)
            return future.result(timeout=self.request_budget)
        except concurrent.futures.TimeoutError:
            return Envelope(Fault("Server", "timeout"))
        except Exception as exc:  # belt and braces: dispatch must be total
            logger.exception("dispatch failed unexpectedly")
            return Envelope(Fault("Server", str(exc)))

    def _dispatch_now(self, envelope: Envelope) -> Envelope:
        if envelope.kind != "Call":
            return Envelope(Fault("Client", f"expected a call, got {envelope.kind}"))
        call = envelope.payload
        with self._lock:
            deployed = self._deployed.get(call.service_name)
            handlers = None
            if deployed is not None:
                handlers = [self._handlers[n] for n in deployed.decl.request_flow]
        if deployed is None:
            return Envelope(Fault("ServiceNotFound", call.service_name))

        for handler in handlers:
            outcome = handler(call)
            if isinstance(outcome, Fault):
                return Envelope(outcome)
            call = outcome

        allowed = deployed.decl.allowed_method_set()
        signature = deployed.impl.SIGNATURES.get(call.method)
        if signature is None or (allowed is not None and call.method not in allowed):
            return Envelope(Fault("MethodNotFound",
                                  f"{call.service_name} has no method {call.method}"))
        params_schema, result_slot = signature
        mismatch = _check_params(call.params, params_schema)
        if mismatch is not None:
            return Envelope(Fault("TypeMismatch", mismatch))

        try:
            value = getattr(deployed.impl, call.method)(
                *[p.value for p in call.params])
        except errors.DomainFault as exc:
            return Envelope(Fault("Client", str(exc), detail=exc.code))
        except errors.I3Error as exc:
            return Envelope(Fault("Server", str(exc), detail=exc.code))
        except Exception as exc:
            logger.exception("%s.%s implementation error", call.service_name, call.method)
            return Envelope(Fault("Server", f"{type(exc).__name__}: {exc}"))
        name, tag = result_slot
        return Envelope(Response(call.method, TypedValue(name, tag, value)))

    def close(self) -> None:
        self._pool.shutdown(wait=False)


def _check_params(params, schema) -> str | None:
    if len(params) != len(schema):
        return f"expected {len(schema)} params, got {len(params)}"
    for given, (name, tag) in zip(params, schema):
        if given.name != name:
            return f"expected param {name!r}, got {given.name!r}"
        if given.tag != tag:
            return f"param {name!r}: expected type {tag!r}, got {given.tag!r}"
    return None


# --- HTTP transport ---------------------------------------------------------

class ServerHandle:
    def __init__(self, server: ThreadingHTTPServer, thread: threading.Thread, url: str):
        self._server = server
        self._thread = thread
        self.url = url

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)


def serve(host: ServiceHost, address: str = "127.0.0.1", port: int = 0) -> ServerHandle:
    """Expose the host over HTTP; returns a handle with the bound URL."""

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("http %s", fmt % args)

        def _reply(self, status: int, body: bytes, content_type: str) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _reply_envelope(self, status: int, envelope: Envelope) -> None:
            try:
                body = encode_envelope(envelope, host.bean_registry)
            except Exception as exc:
                # A reply that cannot be encoded still owes the caller a
                # fault; fault envelopes need no registry, so this cannot
                # recurse.
                logger.exception("reply encoding failed")
                status = 500
                body = encode_envelope(
                    Envelope(Fault("Server", f"reply encoding failed: {exc}")),
                    host.bean_registry)
            self._reply(status, body, "text/xml; charset=utf-8")

        def _body(self) -> bytes:
            length = int(self.headers.get("Content-Length") or 0)
            return self.rfile.read(length)

        def do_GET(self):
            parsed = urlparse(self.path)
            if parsed.path == "/services":
                names = "\n".join(host.list_services())
                self._reply(200, (names + "\n" if names else "").encode("utf-8"),
                            "text/plain; charset=utf-8")
                return
            if parsed.path.startswith("/services/"):
                name = parsed.path[len("/services/"):]
                if parsed.query != "wsdl":
                    self._reply_envelope(
                        400, Envelope(Fault("Client", "expected ?wsdl query")))
                    return
                try:
                    doc = host.generate_wsdl(name)
                except errors.ServiceNotFound as exc:
                    self._reply_envelope(
                        404, Envelope(Fault("ServiceNotFound", str(exc))))
                    return
                self._reply(200, render_wsdl(doc), "text/xml; charset=utf-8")
                return
            self._reply(404, b"not found\n", "text/plain; charset=utf-8")

        def do_POST(self):
            parsed = urlparse(self.path)
            body = self._body()
            if parsed.path.startswith("/services/"):
                self._post_service(parsed.path[len("/services/"):], body)
            elif parsed.path == "/admin/deploy":
                self._admin_deploy(body)
            elif parsed.path == "/admin/undeploy":
                self._admin_undeploy(body)
            else:
                self._reply(404, b"not found\n", "text/plain; charset=utf-8")

        def _post_service(self, name: str, body: bytes) -> None:
            try:
                envelope = decode_envelope(body, host.bean_registry)
            except errors.MalformedXml as exc:
                self._reply_envelope(400, Envelope(Fault("Client", str(exc))))
                return
            except (errors.TypeMismatch, errors.UnregisteredBean) as exc:
                self._reply_envelope(400, Envelope(Fault("TypeMismatch", str(exc))))
                return
            if envelope.kind == "Call" and envelope.payload.service_name != name:
                self._reply_envelope(400, Envelope(Fault(
                    "Client",
                    f"posted to {name} but call addresses {envelope.payload.service_name}")))
                return
            reply = host.dispatch(envelope)
            status = 200 if reply.kind == "Response" else fault_status(reply.payload.code)
            self._reply_envelope(status, reply)

        def _admin_deploy(self, body: bytes) -> None:
            try:
                names = host.deploy(parse_wsdd(body))
            except errors.ValidationFailed as exc:
                payload = {"error": "ValidationFailed", "violations": exc.violations}
                self._reply(400, json.dumps(payload).encode(), "application/json")
                return
            except errors.I3Error as exc:
                payload = {"error": exc.code, "message": str(exc)}
                self._reply(400, json.dumps(payload).encode(), "application/json")
                return
            self._reply(200, json.dumps({"deployed": names}).encode(),
                        "application/json")

        def _admin_undeploy(self, body: bytes) -> None:
            try:
                descriptor = parse_undeploy(body)
            except errors.I3Error as exc:
                payload = {"error": exc.code, "message": str(exc)}
                self._reply(400, json.dumps(payload).encode(), "application/json")
                return
            missing: list[str] = []
            try:
                removed = host.undeploy(descriptor)
            except errors.NotDeployed as exc:
                missing = str(exc).split(", ")
                removed = [n for n in descriptor.service_names if n not in missing]
            payload = {"undeployed": removed, "missing": missing}
            self._reply(200 if not missing else 404,
                        json.dumps(payload).encode(), "application/json")

    try:
        server = ThreadingHTTPServer((address, port), Handler)
    except OSError as exc:
        raise errors.BindFailed(f"{address}:{port}: {exc}") from exc
    server.daemon_threads = True
    url = f"http://{address}:{server.server_address[1]}"
    host.base_url = url
    thread = threading.Thread(target=server.serve_forever,
                              name=f"i3-http-{server.server_address[1]}", daemon=True)
    thread.start()
    logger.info("serving at %s", url)
    return ServerHandle(server, thread, url)
