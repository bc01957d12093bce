"""Minimal XML reading/writing for the wire dialect.

The wire grammar uses literal prefixed names (``i3:Envelope``,
``myNS:StudentRecord``) without xmlns declarations, so namespace-aware
parsers reject it. We drive expat with namespace processing disabled and
build a tiny node tree; colons are ordinary name characters here.

Writing is done by string building, not a DOM serializer, so output bytes
are fully pinned down: no self-closing tags, attributes in the order the
caller supplies them, and a fixed escape table (including numeric escapes
for CR/LF/TAB in attribute values, which parsers would otherwise
whitespace-normalize away).
"""

from __future__ import annotations

import re
import xml.parsers.expat
from dataclasses import dataclass, field

from .errors import MalformedXml

XML_DECL = '<?xml version="1.0" encoding="utf-8"?>'

# Element-name shape for methods, params and bean fields (no colon: the
# colon is reserved for the fixed i3: elements and bean qnames).
NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
QNAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*:[A-Za-z_][A-Za-z0-9_.\-]*$")


@dataclass
class Node:
    name: str
    attrs: dict[str, str] = field(default_factory=dict)
    children: list["Node"] = field(default_factory=list)
    text: str = ""

    @property
    def has_real_text(self) -> bool:
        """True when character data is more than inter-element whitespace."""
        return bool(self.text.strip())


def parse_xml(data: bytes | str) -> Node:
    """Parse one document into a Node tree; any failure is MalformedXml."""
    parser = xml.parsers.expat.ParserCreate()
    root: list[Node] = []
    stack: list[Node] = []

    def start(name, attrs):
        node = Node(name, dict(attrs))
        if stack:
            stack[-1].children.append(node)
        elif root:
            raise MalformedXml("multiple root elements")
        else:
            root.append(node)
        stack.append(node)

    def end(name):
        stack.pop()

    def chars(text):
        if stack:
            stack[-1].text += text

    def doctype(*args):
        raise MalformedXml("DOCTYPE is not accepted")

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    parser.StartDoctypeDeclHandler = doctype
    try:
        parser.Parse(data, True)
    except xml.parsers.expat.ExpatError as exc:
        raise MalformedXml(str(exc)) from None
    except (ValueError, TypeError, LookupError) as exc:
        # LookupError: a declared encoding expat does not recognize
        raise MalformedXml(str(exc)) from None
    if not root:
        raise MalformedXml("empty document")
    return root[0]


# XML 1.0 forbids most C0 controls outright; a string containing them can
# never round-trip, so the writer refuses it up front.
_BAD_CHARS = re.compile(
    "[\x00-\x08\x0b\x0c\x0e-\x1f\ud800-\udfff￾￿]"
)


def check_text(value: str) -> str:
    if _BAD_CHARS.search(value):
        raise ValueError("string contains characters not representable in XML")
    return value


def esc_text(value: str) -> str:
    value = check_text(value)
    value = value.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    return value.replace("\r", "&#13;")


def esc_attr(value: str) -> str:
    value = esc_text(value).replace('"', "&quot;")
    return value.replace("\n", "&#10;").replace("\t", "&#9;")


def element(name: str, attrs: list[tuple[str, str]], content: str) -> str:
    """One element, always with an explicit end tag."""
    parts = [f"{k}=\"{esc_attr(v)}\"" for k, v in attrs]
    head = " ".join([name] + parts)
    return f"<{head}>{content}</{name}>"
