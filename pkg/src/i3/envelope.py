"""Encode/decode of the XML wire messages: calls, responses, faults.

Wire grammar (fixed, byte-exact on output):

    <i3:Envelope><i3:Body>
      <METHOD service="SERVICE"><PARAM i3type="TAG">VALUE</PARAM>...</METHOD>
    </i3:Body></i3:Envelope>

Responses wrap a single result element in ``<METHODResponse>``; faults are
``<i3:Fault code="CODE">MESSAGE</i3:Fault>`` (optional ``detail``
attribute). Bean-typed values expand to one child element per schema field,
in schema order; list-typed values hold self-describing children, each with
its own ``i3type``. Output always carries the XML declaration and contains
no insignificant whitespace, so equal inputs produce byte-identical text.

Encoding is pure and total over valid envelopes; decoding of arbitrary
bytes yields an Envelope or raises exactly one of MalformedXml,
UnregisteredBean, TypeMismatch.
"""

from __future__ import annotations

import datetime
import re
from dataclasses import dataclass, field

from .errors import (
    DuplicateQName,
    MalformedXml,
    TypeMismatch,
    UnknownNestedType,
    UnregisteredBean,
)
from .xmlio import NAME_RE, QNAME_RE, XML_DECL, Node, element, esc_text, parse_xml

PRIMITIVE_TAGS = ("string", "int", "bool", "date", "list")
FAULT_CODES = ("Client", "Server", "ServiceNotFound", "MethodNotFound", "TypeMismatch")

_INT_RE = re.compile(r"^[+-]?[0-9]+$")
_DATE_RE = re.compile(r"^[0-9]{4}-[0-9]{2}-[0-9]{2}$")


@dataclass(frozen=True)
class BeanValue:
    """An instance of a registered bean: qname plus field values."""

    qname: str
    values: dict[str, object]

    def __eq__(self, other):
        return (
            isinstance(other, BeanValue)
            and self.qname == other.qname
            and self.values == other.values
        )

    def __hash__(self):
        return hash(self.qname)


@dataclass(frozen=True)
class TypedValue:
    name: str
    tag: str
    value: object


@dataclass(frozen=True)
class Call:
    service_name: str
    method: str
    params: tuple[TypedValue, ...] = ()

    def __init__(self, service_name, method, params=()):
        object.__setattr__(self, "service_name", service_name)
        object.__setattr__(self, "method", method)
        object.__setattr__(self, "params", tuple(params))


@dataclass(frozen=True)
class Response:
    method: str
    result: TypedValue


@dataclass(frozen=True)
class Fault:
    code: str
    message: str
    detail: str | None = None


@dataclass(frozen=True)
class Envelope:
    payload: Call | Response | Fault

    @property
    def kind(self) -> str:
        return type(self.payload).__name__


class BeanRegistry:
    """qname -> ordered field schema. Built once at startup, then read-only.

    A schema may reference primitives or beans registered earlier, which
    makes cycles impossible by construction.
    """

    def __init__(self):
        self._schemas: dict[str, tuple[tuple[str, str], ...]] = {}

    def register(self, qname: str, schema) -> "BeanRegistry":
        if not QNAME_RE.match(qname):
            raise ValueError(f"not a valid bean qname: {qname!r}")
        if qname in self._schemas:
            raise DuplicateQName(qname)
        items = list(schema.items()) if isinstance(schema, dict) else list(schema)
        seen = set()
        for fname, ftag in items:
            if not NAME_RE.match(fname):
                raise ValueError(f"not a valid field name: {fname!r}")
            if fname in seen:
                raise ValueError(f"duplicate field {fname!r} in {qname}")
            seen.add(fname)
            if ftag not in PRIMITIVE_TAGS and ftag not in self._schemas:
                raise UnknownNestedType(f"{qname}.{fname} references {ftag!r}")
        self._schemas[qname] = tuple(items)
        return self

    def schema(self, qname: str) -> tuple[tuple[str, str], ...]:
        try:
            return self._schemas[qname]
        except KeyError:
            raise UnregisteredBean(qname) from None

    def __contains__(self, qname: str) -> bool:
        return qname in self._schemas

    def __len__(self) -> int:
        return len(self._schemas)

    def qnames(self) -> list[str]:
        return list(self._schemas)

    def copy(self) -> "BeanRegistry":
        clone = BeanRegistry()
        clone._schemas = dict(self._schemas)
        return clone


def register_bean(registry: BeanRegistry, qname: str, schema) -> BeanRegistry:
    return registry.register(qname, schema)


# --- encoding ---------------------------------------------------------------

def encode_envelope(env: Envelope, registry: BeanRegistry) -> bytes:
    payload = env.payload
    if isinstance(payload, Call):
        body = _encode_call(payload, registry)
    elif isinstance(payload, Response):
        body = _encode_response(payload, registry)
    elif isinstance(payload, Fault):
        body = _encode_fault(payload)
    else:
        raise ValueError(f"not an envelope payload: {payload!r}")
    text = f"{XML_DECL}<i3:Envelope><i3:Body>{body}</i3:Body></i3:Envelope>"
    return text.encode("utf-8")


def _require_name(name: str, what: str) -> str:
    if not NAME_RE.match(name):
        raise ValueError(f"invalid {what}: {name!r}")
    return name


def _encode_call(call: Call, registry: BeanRegistry) -> str:
    _require_name(call.method, "method name")
    if not call.service_name:
        raise ValueError("service_name must be non-empty")
    names = [p.name for p in call.params]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate parameter names in call: {names}")
    content = "".join(_encode_typed_value(p, registry) for p in call.params)
    return element(call.method, [("service", call.service_name)], content)


def _encode_response(resp: Response, registry: BeanRegistry) -> str:
    _require_name(resp.method, "method name")
    content = _encode_typed_value(resp.result, registry)
    return element(f"{resp.method}Response", [], content)


def _encode_fault(fault: Fault) -> str:
    if fault.code not in FAULT_CODES:
        raise ValueError(f"unknown fault code: {fault.code!r}")
    if not fault.message:
        raise ValueError("fault message must be non-empty")
    attrs = [("code", fault.code)]
    if fault.detail is not None:
        attrs.append(("detail", fault.detail))
    return element("i3:Fault", attrs, esc_text(fault.message))


def _encode_typed_value(tv: TypedValue, registry: BeanRegistry) -> str:
    _require_name(tv.name, "value name")
    return element(
        tv.name, [("i3type", tv.tag)], _encode_content(tv.tag, tv.value, registry)
    )


def _encode_content(tag: str, value, registry: BeanRegistry) -> str:
    if tag == "string":
        if not isinstance(value, str):
            raise TypeMismatch(f"expected str for tag 'string', got {type(value).__name__}")
        return esc_text(value)
    if tag == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            raise TypeMismatch(f"expected int for tag 'int', got {type(value).__name__}")
        return str(value)
    if tag == "bool":
        if not isinstance(value, bool):
            raise TypeMismatch(f"expected bool for tag 'bool', got {type(value).__name__}")
        return "true" if value else "false"
    if tag == "date":
        if not isinstance(value, datetime.date) or isinstance(value, datetime.datetime):
            raise TypeMismatch(f"expected date for tag 'date', got {type(value).__name__}")
        return value.isoformat()
    if tag == "list":
        if not isinstance(value, (list, tuple)):
            raise TypeMismatch(f"expected list for tag 'list', got {type(value).__name__}")
        return "".join(_encode_typed_value(item, registry) for item in value)
    if QNAME_RE.match(tag):
        return _encode_bean(tag, value, registry)
    raise ValueError(f"invalid type tag: {tag!r}")


def _encode_bean(qname: str, value, registry: BeanRegistry) -> str:
    schema = registry.schema(qname)
    if not isinstance(value, BeanValue) or value.qname != qname:
        raise TypeMismatch(f"expected a {qname} bean value, got {value!r}")
    expected = [fname for fname, _ in schema]
    if set(value.values) != set(expected):
        raise TypeMismatch(
            f"{qname} fields {sorted(value.values)} do not match schema {expected}"
        )
    parts = []
    for fname, ftag in schema:
        parts.append(
            element(fname, [("i3type", ftag)], _encode_content(ftag, value.values[fname], registry))
        )
    return "".join(parts)


# --- decoding ---------------------------------------------------------------

def decode_envelope(text: bytes | str, registry: BeanRegistry) -> Envelope:
    root = parse_xml(text)
    _require_shape(root, "i3:Envelope", allowed_attrs=())
    if len(root.children) != 1:
        raise MalformedXml("i3:Envelope must contain exactly one i3:Body")
    body = root.children[0]
    _require_shape(body, "i3:Body", allowed_attrs=())
    if len(body.children) != 1:
        raise MalformedXml("i3:Body must contain exactly one payload element")
    elem = body.children[0]

    if elem.name == "i3:Fault":
        return Envelope(_decode_fault(elem))
    if "service" in elem.attrs:
        return Envelope(_decode_call(elem, registry))
    return Envelope(_decode_response(elem, registry))


def _require_shape(node: Node, name: str, allowed_attrs: tuple[str, ...]) -> None:
    if node.name != name:
        raise MalformedXml(f"expected <{name}>, found <{node.name}>")
    _check_attrs(node, allowed_attrs, required=())
    if node.has_real_text:
        raise MalformedXml(f"<{name}> must not contain text")


def _check_attrs(node: Node, allowed: tuple[str, ...], required: tuple[str, ...]) -> None:
    for key in node.attrs:
        if key not in allowed:
            raise MalformedXml(f"unexpected attribute {key!r} on <{node.name}>")
    for key in required:
        if key not in node.attrs:
            raise MalformedXml(f"<{node.name}> is missing attribute {key!r}")


def _decode_fault(node: Node) -> Fault:
    _check_attrs(node, allowed=("code", "detail"), required=("code",))
    code = node.attrs["code"]
    if code not in FAULT_CODES:
        raise MalformedXml(f"unknown fault code {code!r}")
    if node.children:
        raise MalformedXml("i3:Fault must not contain child elements")
    if not node.text:
        raise MalformedXml("fault message must be non-empty")
    return Fault(code, node.text, node.attrs.get("detail"))


def _decode_call(node: Node, registry: BeanRegistry) -> Call:
    _check_attrs(node, allowed=("service",), required=("service",))
    if not NAME_RE.match(node.name):
        raise MalformedXml(f"invalid method element name {node.name!r}")
    service = node.attrs["service"]
    if not service:
        raise MalformedXml("service attribute must be non-empty")
    if node.has_real_text:
        raise MalformedXml("method element must not contain text")
    params = [_decode_typed_value(child, registry) for child in node.children]
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise MalformedXml(f"duplicate parameter names: {names}")
    return Call(service, node.name, params)


def _decode_response(node: Node, registry: BeanRegistry) -> Response:
    _check_attrs(node, allowed=(), required=())
    if not NAME_RE.match(node.name):
        raise MalformedXml(f"invalid response element name {node.name!r}")
    if not node.name.endswith("Response") or node.name == "Response":
        raise MalformedXml(f"response element {node.name!r} must be METHOD + 'Response'")
    if node.has_real_text:
        raise MalformedXml("response element must not contain text")
    if len(node.children) != 1:
        raise MalformedXml("response must carry exactly one result element")
    method = node.name[: -len("Response")]
    return Response(method, _decode_typed_value(node.children[0], registry))


def _decode_typed_value(node: Node, registry: BeanRegistry) -> TypedValue:
    _check_attrs(node, allowed=("i3type",), required=("i3type",))
    if not NAME_RE.match(node.name):
        raise MalformedXml(f"invalid value element name {node.name!r}")
    tag = node.attrs["i3type"]
    if tag not in PRIMITIVE_TAGS and not QNAME_RE.match(tag):
        raise MalformedXml(f"invalid i3type tag {tag!r}")
    return TypedValue(node.name, tag, _decode_content(node, tag, registry))


def _decode_content(node: Node, tag: str, registry: BeanRegistry):
    if tag in ("string", "int", "bool", "date") and node.children:
        raise TypeMismatch(f"<{node.name}> with primitive tag must not have children")
    if tag == "string":
        return node.text
    if tag == "int":
        text = node.text.strip()
        if not _INT_RE.match(text):
            raise TypeMismatch(f"{node.text!r} is not an int")
        return int(text)
    if tag == "bool":
        text = node.text.strip()
        if text == "true":
            return True
        if text == "false":
            return False
        raise TypeMismatch(f"{node.text!r} is not a bool")
    if tag == "date":
        text = node.text.strip()
        if not _DATE_RE.match(text):
            raise TypeMismatch(f"{node.text!r} is not a calendar date")
        try:
            return datetime.date.fromisoformat(text)
        except ValueError:
            raise TypeMismatch(f"{node.text!r} is not a calendar date") from None
    if tag == "list":
        if node.has_real_text:
            raise TypeMismatch(f"<{node.name}> with tag 'list' must not contain text")
        return [_decode_typed_value(child, registry) for child in node.children]
    return _decode_bean(node, tag, registry)


def _decode_bean(node: Node, qname: str, registry: BeanRegistry) -> BeanValue:
    schema = registry.schema(qname)
    if node.has_real_text:
        raise TypeMismatch(f"bean <{node.name}> must not contain text")
    if len(node.children) != len(schema):
        raise TypeMismatch(
            f"{qname} expects {len(schema)} fields, found {len(node.children)}"
        )
    values: dict[str, object] = {}
    for child, (fname, ftag) in zip(node.children, schema):
        # schema order is the canonical wire order; reject reordering
        if child.name != fname:
            raise TypeMismatch(f"{qname}: expected field {fname!r}, found {child.name!r}")
        _check_attrs(child, allowed=("i3type",), required=("i3type",))
        if child.attrs["i3type"] != ftag:
            raise TypeMismatch(
                f"{qname}.{fname}: declared {child.attrs['i3type']!r}, schema says {ftag!r}"
            )
        values[fname] = _decode_content(child, ftag, registry)
    return BeanValue(qname, values)
