"""Exception taxonomy for the whole fabric.

Every error that can cross the wire carries a stable ``code`` string (its
class name by default). The engine maps raised errors onto fault envelopes;
the client proxy maps fault envelopes back onto typed errors, so a
department throwing ``StudentNotFound`` is caught as ``StudentNotFound`` on
the far side of an HTTP hop.
"""

from __future__ import annotations


class I3Error(Exception):
    """Base class; ``code`` is the stable machine-readable error name."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- wire codec -------------------------------------------------------------

class MalformedXml(I3Error):
    pass


class UnregisteredBean(I3Error):
    pass


class TypeMismatch(I3Error):
    pass


class DuplicateQName(I3Error):
    pass


class UnknownNestedType(I3Error):
    pass


# --- deployment descriptors -------------------------------------------------

class UnknownNode(I3Error):
    pass


class MissingAttribute(I3Error):
    pass


class DuplicateService(I3Error):
    pass


class EmptyDescriptor(I3Error):
    pass


# --- service engine ---------------------------------------------------------

class AlreadyDeployed(I3Error):
    pass


class NotDeployed(I3Error):
    pass


class ServiceNotFound(I3Error):
    pass


class BindFailed(I3Error):
    pass


class ValidationFailed(I3Error):
    """Carries the full violation list, never just the first."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


# --- storage ----------------------------------------------------------------

class StoreCorrupt(I3Error):
    """A storage file failed its integrity checks before the indexed or
    committed region; refusing to guess at the data."""


# --- broker / client --------------------------------------------------------

class NotFound(I3Error):
    pass


class InvalidRecord(I3Error):
    pass


class RegistryUnreachable(I3Error):
    pass


class WsdlFetchFailed(I3Error):
    pass


class MethodNotInWsdl(I3Error):
    pass


class EndpointUnreachable(I3Error):
    pass


class RemoteFault(I3Error):
    """A fault envelope returned by the far side, surfaced as an error."""

    def __init__(self, fault_code: str, message: str, detail: str | None = None):
        super().__init__(f"{fault_code}: {message}")
        self.fault_code = fault_code
        self.message = message
        self.detail = detail


# --- department domain errors ----------------------------------------------
# DomainFault subclasses cross the wire as Fault{Client} with the error name
# in the fault detail; anything else a service raises becomes Fault{Server}.

class DomainFault(I3Error):
    pass


class DuplicateStudent(DomainFault):
    pass


class StudentNotFound(DomainFault):
    pass


class AlreadyRegistered(DomainFault):
    pass


class NotRegistered(DomainFault):
    pass


class BookNotFound(DomainFault):
    pass


class BookAlreadyIssued(DomainFault):
    pass


class NoOutstandingIssue(DomainFault):
    pass


class RoomNotFound(DomainFault):
    pass


class RoomFull(DomainFault):
    pass


class AlreadyAllotted(DomainFault):
    pass


class NoOpenAllotment(DomainFault):
    pass


class AmisUnreachable(I3Error):
    """Dependency outage, not caller misuse: crosses the wire as Fault{Server}."""


# --- verification / certificates -------------------------------------------

class BrokerUnreachable(I3Error):
    pass


class ExamNotPassed(I3Error):
    pass


class ExamRecordMissing(I3Error):
    pass


class VerificationBlocked(I3Error):
    """Certificate refused; carries the per-department breakdown."""

    def __init__(self, result):
        super().__init__(f"verification blocked for {result.student_id}")
        self.result = result


DOMAIN_FAULTS: dict[str, type[I3Error]] = {
    cls.__name__: cls
    for cls in (
        DuplicateStudent, StudentNotFound, AlreadyRegistered, NotRegistered,
        BookNotFound, BookAlreadyIssued, NoOutstandingIssue, RoomNotFound,
        RoomFull, AlreadyAllotted, NoOpenAllotment,
    )
}


def resurrect(detail: str | None, message: str) -> I3Error | None:
    """Rebuild the typed domain error named by a fault's detail, if any."""
    cls = DOMAIN_FAULTS.get(detail or "")
    if cls is not None:
        return cls(message)
    if detail == "AmisUnreachable":
        return AmisUnreachable(message)
    if detail == "ValidationFailed":
        return ValidationFailed([message])
    return None
