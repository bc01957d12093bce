"""Deployment and undeployment descriptor parsing (the Axis-dialect subset).

The accepted grammar is exactly the node kinds the shipped descriptor uses:
``deployment`` > ``handler`` | ``service``; ``service`` > ``requestFlow`` |
``parameter`` (className / allowedMethods) | ``beanMapping``. xmlns
attributes are ignored; any other element or parameter is rejected. Values
like ``java:RPC`` keep the prefix before ":" as an opaque provider
namespace; the engine binds on the suffix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .envelope import BeanRegistry
from .errors import (
    DuplicateQName,
    DuplicateService,
    EmptyDescriptor,
    MissingAttribute,
    UnknownNode,
)
from .xmlio import Node, element, esc_attr, parse_xml


@dataclass(frozen=True)
class HandlerDecl:
    name: str
    handler_kind: str


@dataclass(frozen=True)
class ServiceDecl:
    name: str
    provider: str
    class_name: str
    allowed_methods: str
    request_flow: tuple[str, ...] = ()
    bean_mappings: tuple[tuple[str, str], ...] = ()  # (qname, binding key)

    def allowed_method_set(self) -> set[str] | None:
        """None means all public methods are exposed."""
        if self.allowed_methods == "":
            return None
        return set(self.allowed_methods.split())


@dataclass(frozen=True)
class DeploymentDescriptor:
    handlers: tuple[HandlerDecl, ...] = ()
    services: tuple[ServiceDecl, ...] = ()

    def service(self, name: str) -> ServiceDecl:
        for svc in self.services:
            if svc.name == name:
                return svc
        raise KeyError(name)


@dataclass(frozen=True)
class UndeploymentDescriptor:
    service_names: tuple[str, ...]


def _suffix(value: str) -> str:
    """Binding key of a descriptor type reference: the bare class name.

    The prefix before ":" names a provider namespace and any dotted path is
    a package; neither participates in binding, so "java:pkg.LogHandler",
    "pkg.LogHandler", and "LogHandler" all bind the same implementation.
    """
    return value.split(":", 1)[-1].rsplit(".", 1)[-1]


def _attr(node: Node, name: str) -> str:
    if name not in node.attrs:
        raise MissingAttribute(f"<{node.name}> is missing attribute {name!r}")
    return node.attrs[name]


def _real_children(node: Node) -> list[Node]:
    if node.has_real_text:
        raise UnknownNode(f"<{node.name}> must not contain text")
    return node.children


def parse_wsdd(text: bytes | str) -> DeploymentDescriptor:
    root = parse_xml(text)
    if root.name != "deployment":
        raise UnknownNode(f"expected <deployment>, found <{root.name}>")
    handlers: list[HandlerDecl] = []
    services: list[ServiceDecl] = []
    for child in _real_children(root):
        if child.name == "handler":
            name = _attr(child, "name")
            kind = _suffix(_attr(child, "type"))
            if any(h.name == name for h in handlers):
                raise DuplicateService(f"duplicate handler {name!r}")
            handlers.append(HandlerDecl(name, kind))
        elif child.name == "service":
            services.append(_parse_service(child))
        else:
            raise UnknownNode(f"unknown element <{child.name}> under <deployment>")
    names = [s.name for s in services]
    for name in names:
        if names.count(name) > 1:
            raise DuplicateService(name)
    return DeploymentDescriptor(tuple(handlers), tuple(services))


def _parse_service(node: Node) -> ServiceDecl:
    name = _attr(node, "name")
    provider = _attr(node, "provider")
    class_name = None
    allowed = None
    flow: list[str] = []
    mappings: list[tuple[str, str]] = []
    for child in _real_children(node):
        if child.name == "requestFlow":
            for handler in _real_children(child):
                if handler.name != "handler":
                    raise UnknownNode(
                        f"unknown element <{handler.name}> under <requestFlow>"
                    )
                # File-1 convention: flow entries reference the declared
                # handler by its name through the "type" attribute
                flow.append(_attr(handler, "type"))
        elif child.name == "parameter":
            pname = _attr(child, "name")
            pvalue = _attr(child, "value")
            if pname == "className":
                class_name = _suffix(pvalue)
            elif pname == "allowedMethods":
                allowed = pvalue
            else:
                raise UnknownNode(f"unknown parameter {pname!r} in service {name!r}")
        elif child.name == "beanMapping":
            qname = _attr(child, "qname")
            binding = _suffix(_attr(child, "languageSpecificType"))
            mappings.append((qname, binding))
        else:
            raise UnknownNode(f"unknown element <{child.name}> under <service>")
    if class_name is None:
        raise MissingAttribute(f"service {name!r} has no className parameter")
    if allowed is None:
        raise MissingAttribute(f"service {name!r} has no allowedMethods parameter")
    if allowed != "" and not allowed.split():
        raise MissingAttribute(f"service {name!r} has a blank allowedMethods list")
    return ServiceDecl(name, provider, class_name, allowed, tuple(flow), tuple(mappings))


def parse_undeploy(text: bytes | str) -> UndeploymentDescriptor:
    root = parse_xml(text)
    if root.name != "undeployment":
        raise UnknownNode(f"expected <undeployment>, found <{root.name}>")
    names: list[str] = []
    for child in _real_children(root):
        if child.name != "service":
            raise UnknownNode(f"unknown element <{child.name}> under <undeployment>")
        names.append(_attr(child, "name"))
    if not names:
        raise EmptyDescriptor("undeployment descriptor lists no services")
    return UndeploymentDescriptor(tuple(names))


def validate(
    descriptor: DeploymentDescriptor,
    known_impls: set[str],
    registry: BeanRegistry,
    bean_schemas: dict[str, list[tuple[str, str]]] | None = None,
) -> list[str]:
    """Return the full list of violations (empty list means ok).

    ``bean_schemas`` maps binding keys to wire schemas; when given, each
    beanMapping must resolve to a schema that is registrable without
    conflicting with anything already in ``registry``.
    """
    violations: list[str] = []
    declared_handlers = {h.name for h in descriptor.handlers}
    for svc in descriptor.services:
        if svc.class_name not in known_impls:
            violations.append(
                f"service {svc.name!r}: no implementation for class {svc.class_name!r}"
            )
        for ref in svc.request_flow:
            if ref not in declared_handlers:
                violations.append(
                    f"service {svc.name!r}: requestFlow references unknown handler {ref!r}"
                )
        for qname, binding in svc.bean_mappings:
            if bean_schemas is not None:
                schema = bean_schemas.get(binding)
                if schema is None:
                    violations.append(
                        f"service {svc.name!r}: no wire schema for bean type {binding!r}"
                    )
                    continue
                if qname in registry and tuple(registry.schema(qname)) != tuple(schema):
                    violations.append(
                        f"service {svc.name!r}: bean {qname!r} conflicts with an "
                        "already-registered schema"
                    )
            elif qname not in registry:
                violations.append(
                    f"service {svc.name!r}: bean {qname!r} is not registered"
                )
    return violations


def serialize_wsdd(descriptor: DeploymentDescriptor) -> str:
    """Pretty-print a descriptor back to the accepted dialect."""
    lines = ['<deployment xmlns="http://xml.apache.org/axis/wsdd/">']
    for handler in descriptor.handlers:
        lines.append(
            "  " + element("handler", [("name", handler.name), ("type", f"java:{handler.handler_kind}")], "")
        )
    for svc in descriptor.services:
        lines.append(f'  <service name="{esc_attr(svc.name)}" provider="{esc_attr(svc.provider)}">')
        if svc.request_flow:
            flow = "".join(element("handler", [("type", ref)], "") for ref in svc.request_flow)
            lines.append(f"    {element('requestFlow', [], flow)}")
        lines.append(
            "    " + element("parameter", [("name", "className"), ("value", f"java:{svc.class_name}")], "")
        )
        lines.append(
            "    " + element("parameter", [("name", "allowedMethods"), ("value", svc.allowed_methods)], "")
        )
        for qname, binding in svc.bean_mappings:
            lines.append(
                "    " + element(
                    "beanMapping",
                    [("qname", qname), ("languageSpecificType", f"java:{binding}")],
                    "",
                )
            )
        lines.append("  </service>")
    lines.append("</deployment>")
    return "\n".join(lines) + "\n"


def serialize_undeploy(undeploy: UndeploymentDescriptor) -> str:
    lines = ["<undeployment>"]
    for name in undeploy.service_names:
        lines.append("  " + element("service", [("name", name)], ""))
    lines.append("</undeployment>")
    return "\n".join(lines) + "\n"
