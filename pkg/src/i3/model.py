"""Domain records for the five information levels, and their wire/store forms.

Three views of every record live here so no other module needs to know the
details: the dataclass itself, the bean schema used on the wire (File-1
qnames plus two helper beans for issue/allotment list entries), and the
plain-dict form the storage adapters persist. Wire schemas only use the
primitive tags; optional dates (an unreturned book, an open allotment) ride
as empty strings because the primitive set has no null.
"""

from __future__ import annotations

import datetime
import enum
import json
from dataclasses import dataclass

from .envelope import BeanRegistry, BeanValue, TypedValue


class InfoLevel(enum.Enum):
    AL = "admission"
    HL = "hostel"
    LL = "library"
    CL = "campus"
    EL = "examination"


# --- records ----------------------------------------------------------------

@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    first_name: str
    last_name: str
    address: str
    contact_number: str
    institution_name: str
    department_name: str
    degree_program: str
    graduation_year: int


@dataclass(frozen=True)
class DepartmentRecord:
    department_id: str
    department_name: str


@dataclass(frozen=True)
class ProgrammeRecord:
    programme_id: str
    programme_name: str
    department_id: str


@dataclass(frozen=True)
class ListItem:
    id: str
    label: str


@dataclass(frozen=True)
class BookRecord:
    book_id: str
    isbn: str
    title: str
    author: str
    publisher: str
    year: int


@dataclass(frozen=True)
class BookIssue:
    book_id: str
    issue_date: datetime.date
    return_date: datetime.date | None = None

    @property
    def outstanding(self) -> bool:
        return self.return_date is None


@dataclass(frozen=True)
class LibraryStudentRecord:
    student_id: str
    issued_books: tuple[BookIssue, ...] = ()

    def __init__(self, student_id, issued_books=()):
        object.__setattr__(self, "student_id", student_id)
        object.__setattr__(self, "issued_books", tuple(issued_books))

    def outstanding_books(self) -> list[str]:
        return [i.book_id for i in self.issued_books if i.outstanding]


@dataclass(frozen=True)
class RoomRecord:
    room_id: str
    capacity: int


@dataclass(frozen=True)
class RoomAllotment:
    room_id: str
    allot_date: datetime.date
    vacate_date: datetime.date | None = None

    @property
    def open(self) -> bool:
        return self.vacate_date is None


@dataclass(frozen=True)
class HostelStudentRecord:
    student_id: str
    allotments: tuple[RoomAllotment, ...] = ()

    def __init__(self, student_id, allotments=()):
        object.__setattr__(self, "student_id", student_id)
        object.__setattr__(self, "allotments", tuple(allotments))

    def open_allotment(self) -> RoomAllotment | None:
        for allotment in self.allotments:
            if allotment.open:
                return allotment
        return None


@dataclass(frozen=True)
class ExamRecord:
    student_id: str
    programme_id: str
    passed: bool
    completion_date: datetime.date


@dataclass(frozen=True)
class DefaulterReport:
    department: str  # "Library" | "Hostel"
    entries: tuple[tuple[str, str], ...] = ()  # (student_id, reason)

    def __init__(self, department, entries=()):
        object.__setattr__(self, "department", department)
        object.__setattr__(self, "entries", tuple(tuple(e) for e in entries))

    def reason_for(self, student_id: str) -> str | None:
        for sid, reason in self.entries:
            if sid == student_id:
                return reason
        return None


DEPARTMENTS = ("Admission", "Library", "Hostel")
CLEAR, DEFAULTER, UNREACHABLE = "Clear", "Defaulter", "Unreachable"


@dataclass(frozen=True)
class DeptStatus:
    state: str
    reason: str | None = None

    @classmethod
    def clear(cls) -> "DeptStatus":
        return cls(CLEAR)

    @classmethod
    def defaulter(cls, reason: str) -> "DeptStatus":
        return cls(DEFAULTER, reason)

    @classmethod
    def unreachable(cls, reason: str) -> "DeptStatus":
        return cls(UNREACHABLE, reason)


@dataclass(frozen=True)
class VerificationResult:
    student_id: str
    per_department: dict[str, DeptStatus]

    @property
    def overall(self) -> str:
        ok = all(
            self.per_department.get(d, DeptStatus.unreachable("missing")).state == CLEAR
            for d in DEPARTMENTS
        )
        return "Clear" if ok else "Blocked"

    def to_plain(self) -> dict:
        return {
            "student_id": self.student_id,
            "departments": {
                name: {"status": status.state, "reason": status.reason}
                for name, status in self.per_department.items()
            },
            "overall": self.overall,
        }

    @classmethod
    def from_plain(cls, plain: dict) -> "VerificationResult":
        return cls(
            plain["student_id"],
            {
                name: DeptStatus(entry["status"], entry.get("reason"))
                for name, entry in plain["departments"].items()
            },
        )


@dataclass(frozen=True)
class Certificate:
    certificate_id: str
    student_id: str
    programme_id: str
    issued_at: str  # ISO-8601 UTC timestamp
    verification: VerificationResult


# --- validation and defaulter rules ----------------------------------------

def validate_record(record) -> list[str]:
    """All invariant violations for one record; empty list means ok."""
    problems: list[str] = []

    def need(cond: bool, message: str) -> None:
        if not cond:
            problems.append(message)

    if isinstance(record, StudentRecord):
        need(bool(record.student_id), "student_id must be non-empty")
        need(
            isinstance(record.graduation_year, int)
            and 1900 <= record.graduation_year <= 2200,
            f"graduation_year {record.graduation_year!r} outside [1900, 2200]",
        )
    elif isinstance(record, DepartmentRecord):
        need(bool(record.department_id), "department_id must be non-empty")
    elif isinstance(record, ProgrammeRecord):
        need(bool(record.programme_id), "programme_id must be non-empty")
        need(bool(record.department_id), "department_id reference must be non-empty")
    elif isinstance(record, ListItem):
        need(bool(record.id), "id must be non-empty")
    elif isinstance(record, BookRecord):
        need(bool(record.book_id), "book_id must be non-empty")
    elif isinstance(record, LibraryStudentRecord):
        need(bool(record.student_id), "student_id must be non-empty")
    elif isinstance(record, RoomRecord):
        need(bool(record.room_id), "room_id must be non-empty")
        need(record.capacity > 0, f"capacity must be positive, got {record.capacity}")
    elif isinstance(record, HostelStudentRecord):
        need(bool(record.student_id), "student_id must be non-empty")
        open_count = sum(1 for a in record.allotments if a.open)
        need(open_count <= 1, f"{open_count} allotments open at once (max 1)")
    elif isinstance(record, ExamRecord):
        need(bool(record.student_id), "student_id must be non-empty")
        need(bool(record.programme_id), "programme_id must be non-empty")
    else:
        problems.append(f"unknown record type {type(record).__name__}")
    return problems


def is_defaulter(record) -> tuple[bool, str | None]:
    """Defaulter test plus a reason naming the offending book/room ids."""
    if isinstance(record, LibraryStudentRecord):
        books = record.outstanding_books()
        if books:
            return True, "outstanding books: " + ", ".join(books)
        return False, None
    if isinstance(record, HostelStudentRecord):
        allotment = record.open_allotment()
        if allotment is not None:
            return True, f"room not vacated: {allotment.room_id}"
        return False, None
    raise TypeError(f"no defaulter rule for {type(record).__name__}")


# --- wire schemas and converters -------------------------------------------

# binding key (descriptor suffix) -> (qname, ordered field schema)
WIRE_SCHEMAS: dict[str, tuple[str, list[tuple[str, str]]]] = {
    "BookIssue": (
        "myNS:BookIssue",
        [("book_id", "string"), ("issue_date", "date"), ("return_date", "string")],
    ),
    "RoomAllotment": (
        "myNS:RoomAllotment",
        [("room_id", "string"), ("allot_date", "date"), ("vacate_date", "string")],
    ),
    "StudentRecord": (
        "myNS:StudentRecord",
        [
            ("student_id", "string"),
            ("first_name", "string"),
            ("last_name", "string"),
            ("address", "string"),
            ("contact_number", "string"),
            ("institution_name", "string"),
            ("department_name", "string"),
            ("degree_program", "string"),
            ("graduation_year", "int"),
        ],
    ),
    "DepartmentRecord": (
        "myNS:DepartmentRecord",
        [("department_id", "string"), ("department_name", "string")],
    ),
    "ProgrammeRecord": (
        "myNS:ProgrammeRecord",
        [
            ("programme_id", "string"),
            ("programme_name", "string"),
            ("department_id", "string"),
        ],
    ),
    "ListItem": ("myNS:ListItem", [("id", "string"), ("label", "string")]),
    "LibraryStudentRecord": (
        "myNS:LibraryStudentRecord",
        [("student_id", "string"), ("issued_books", "list")],
    ),
    "HostelStudentRecord": (
        "myNS:HostelStudentRecord",
        [("student_id", "string"), ("allotments", "list")],
    ),
}

BINDING_SCHEMAS = {key: schema for key, (_, schema) in WIRE_SCHEMAS.items()}
QNAMES = {key: qname for key, (qname, _) in WIRE_SCHEMAS.items()}


def base_bean_registry() -> BeanRegistry:
    """Registry every host starts from: the generic vocabulary types.

    BookIssue and RoomAllotment ride inside list-typed fields of the
    descriptor-mapped beans; ListItem is the id+label pair used by every
    listing and report. None of them is specific to one service, so they
    are built in rather than descriptor-mapped (a descriptor may still map
    them; re-registration with the identical schema is a no-op)."""
    registry = BeanRegistry()
    for key in ("BookIssue", "RoomAllotment", "ListItem"):
        qname, schema = WIRE_SCHEMAS[key]
        registry.register(qname, schema)
    return registry


def full_bean_registry() -> BeanRegistry:
    registry = BeanRegistry()
    for qname, schema in WIRE_SCHEMAS.values():
        registry.register(qname, schema)
    return registry


def _date_or_empty(value: datetime.date | None) -> str:
    return value.isoformat() if value is not None else ""


def _empty_or_date(text: str) -> datetime.date | None:
    return datetime.date.fromisoformat(text) if text else None


def student_to_bean(record: StudentRecord) -> BeanValue:
    return BeanValue("myNS:StudentRecord", {
        "student_id": record.student_id,
        "first_name": record.first_name,
        "last_name": record.last_name,
        "address": record.address,
        "contact_number": record.contact_number,
        "institution_name": record.institution_name,
        "department_name": record.department_name,
        "degree_program": record.degree_program,
        "graduation_year": record.graduation_year,
    })


def bean_to_student(bean: BeanValue) -> StudentRecord:
    return StudentRecord(**bean.values)


def department_to_bean(record: DepartmentRecord) -> BeanValue:
    return BeanValue("myNS:DepartmentRecord", {
        "department_id": record.department_id,
        "department_name": record.department_name,
    })


def bean_to_department(bean: BeanValue) -> DepartmentRecord:
    return DepartmentRecord(**bean.values)


def programme_to_bean(record: ProgrammeRecord) -> BeanValue:
    return BeanValue("myNS:ProgrammeRecord", {
        "programme_id": record.programme_id,
        "programme_name": record.programme_name,
        "department_id": record.department_id,
    })


def bean_to_programme(bean: BeanValue) -> ProgrammeRecord:
    return ProgrammeRecord(**bean.values)


def list_item_to_bean(item: ListItem) -> BeanValue:
    return BeanValue("myNS:ListItem", {"id": item.id, "label": item.label})


def bean_to_list_item(bean: BeanValue) -> ListItem:
    return ListItem(**bean.values)


def library_record_to_bean(record: LibraryStudentRecord) -> BeanValue:
    issues = [
        TypedValue("item", "myNS:BookIssue", BeanValue("myNS:BookIssue", {
            "book_id": issue.book_id,
            "issue_date": issue.issue_date,
            "return_date": _date_or_empty(issue.return_date),
        }))
        for issue in record.issued_books
    ]
    return BeanValue("myNS:LibraryStudentRecord", {
        "student_id": record.student_id,
        "issued_books": issues,
    })


def bean_to_library_record(bean: BeanValue) -> LibraryStudentRecord:
    issues = [
        BookIssue(
            item.value.values["book_id"],
            item.value.values["issue_date"],
            _empty_or_date(item.value.values["return_date"]),
        )
        for item in bean.values["issued_books"]
    ]
    return LibraryStudentRecord(bean.values["student_id"], issues)


def hostel_record_to_bean(record: HostelStudentRecord) -> BeanValue:
    allotments = [
        TypedValue("item", "myNS:RoomAllotment", BeanValue("myNS:RoomAllotment", {
            "room_id": allotment.room_id,
            "allot_date": allotment.allot_date,
            "vacate_date": _date_or_empty(allotment.vacate_date),
        }))
        for allotment in record.allotments
    ]
    return BeanValue("myNS:HostelStudentRecord", {
        "student_id": record.student_id,
        "allotments": allotments,
    })


def bean_to_hostel_record(bean: BeanValue) -> HostelStudentRecord:
    allotments = [
        RoomAllotment(
            item.value.values["room_id"],
            item.value.values["allot_date"],
            _empty_or_date(item.value.values["vacate_date"]),
        )
        for item in bean.values["allotments"]
    ]
    return HostelStudentRecord(bean.values["student_id"], allotments)


def report_to_items(report: DefaulterReport) -> list[TypedValue]:
    return [
        TypedValue("item", "myNS:ListItem",
                   BeanValue("myNS:ListItem", {"id": sid, "label": reason}))
        for sid, reason in report.entries
    ]


def items_to_report(department: str, items: list[TypedValue]) -> DefaulterReport:
    return DefaulterReport(
        department,
        [(item.value.values["id"], item.value.values["label"]) for item in items],
    )


# --- storage codecs ---------------------------------------------------------

@dataclass(frozen=True)
class RecordCodec:
    """How one record kind is keyed and flattened for the stores.

    ``from_plain`` must accept both typed plain dicts (JSON/binary paths)
    and all-string dicts (the tabular path), so the coercers below are
    deliberately tolerant of stringly input.
    """

    kind: str
    fields: tuple[str, ...]
    key_of: callable
    to_plain: callable
    from_plain: callable


def _int(value) -> int:
    return value if isinstance(value, int) else int(str(value).strip())


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "1"):
        return True
    if text in ("false", "0"):
        return False
    raise ValueError(f"not a bool: {value!r}")


def _listval(value) -> list:
    return value if isinstance(value, list) else json.loads(value)


def _issue_plain(issue: BookIssue) -> dict:
    return {
        "book_id": issue.book_id,
        "issue_date": issue.issue_date.isoformat(),
        "return_date": _date_or_empty(issue.return_date),
    }


def _allot_plain(allotment: RoomAllotment) -> dict:
    return {
        "room_id": allotment.room_id,
        "allot_date": allotment.allot_date.isoformat(),
        "vacate_date": _date_or_empty(allotment.vacate_date),
    }


def _student_codec(kind: str) -> RecordCodec:
    names = (
        "student_id", "first_name", "last_name", "address", "contact_number",
        "institution_name", "department_name", "degree_program", "graduation_year",
    )
    return RecordCodec(
        kind=kind,
        fields=names,
        key_of=lambda r: r.student_id,
        to_plain=lambda r: {
            **{n: getattr(r, n) for n in names[:-1]},
            "graduation_year": r.graduation_year,
        },
        from_plain=lambda p: StudentRecord(
            **{n: p[n] for n in names[:-1]},
            graduation_year=_int(p["graduation_year"]),
        ),
    )


STORE_CODECS: dict[str, RecordCodec] = {}


def _register_codec(codec: RecordCodec) -> None:
    STORE_CODECS[codec.kind] = codec


_register_codec(_student_codec("students"))
_register_codec(_student_codec("campus_students"))

_register_codec(RecordCodec(
    kind="departments",
    fields=("department_id", "department_name"),
    key_of=lambda r: r.department_id,
    to_plain=lambda r: {"department_id": r.department_id, "department_name": r.department_name},
    from_plain=lambda p: DepartmentRecord(p["department_id"], p["department_name"]),
))

_register_codec(RecordCodec(
    kind="programmes",
    fields=("programme_id", "programme_name", "department_id"),
    key_of=lambda r: r.programme_id,
    to_plain=lambda r: {
        "programme_id": r.programme_id,
        "programme_name": r.programme_name,
        "department_id": r.department_id,
    },
    from_plain=lambda p: ProgrammeRecord(
        p["programme_id"], p["programme_name"], p["department_id"]
    ),
))

_register_codec(RecordCodec(
    kind="books",
    fields=("book_id", "isbn", "title", "author", "publisher", "year"),
    key_of=lambda r: r.book_id,
    to_plain=lambda r: {
        "book_id": r.book_id, "isbn": r.isbn, "title": r.title,
        "author": r.author, "publisher": r.publisher, "year": r.year,
    },
    from_plain=lambda p: BookRecord(
        p["book_id"], p["isbn"], p["title"], p["author"], p["publisher"], _int(p["year"])
    ),
))

_register_codec(RecordCodec(
    kind="library_students",
    fields=("student_id", "issued_books"),
    key_of=lambda r: r.student_id,
    to_plain=lambda r: {
        "student_id": r.student_id,
        "issued_books": [_issue_plain(i) for i in r.issued_books],
    },
    from_plain=lambda p: LibraryStudentRecord(
        p["student_id"],
        [
            BookIssue(
                i["book_id"],
                datetime.date.fromisoformat(i["issue_date"]),
                _empty_or_date(i["return_date"]),
            )
            for i in _listval(p["issued_books"])
        ],
    ),
))

_register_codec(RecordCodec(
    kind="rooms",
    fields=("room_id", "capacity"),
    key_of=lambda r: r.room_id,
    to_plain=lambda r: {"room_id": r.room_id, "capacity": r.capacity},
    from_plain=lambda p: RoomRecord(p["room_id"], _int(p["capacity"])),
))

_register_codec(RecordCodec(
    kind="hostel_students",
    fields=("student_id", "allotments"),
    key_of=lambda r: r.student_id,
    to_plain=lambda r: {
        "student_id": r.student_id,
        "allotments": [_allot_plain(a) for a in r.allotments],
    },
    from_plain=lambda p: HostelStudentRecord(
        p["student_id"],
        [
            RoomAllotment(
                a["room_id"],
                datetime.date.fromisoformat(a["allot_date"]),
                _empty_or_date(a["vacate_date"]),
            )
            for a in _listval(p["allotments"])
        ],
    ),
))

_register_codec(RecordCodec(
    kind="exam_records",
    fields=("student_id", "programme_id", "passed", "completion_date"),
    key_of=lambda r: f"{r.student_id}|{r.programme_id}",
    to_plain=lambda r: {
        "student_id": r.student_id,
        "programme_id": r.programme_id,
        "passed": r.passed,
        "completion_date": r.completion_date.isoformat(),
    },
    from_plain=lambda p: ExamRecord(
        p["student_id"], p["programme_id"], _bool(p["passed"]),
        datetime.date.fromisoformat(p["completion_date"]),
    ),
))

_register_codec(RecordCodec(
    kind="certificates",
    fields=("certificate_id", "student_id", "programme_id", "issued_at", "verification"),
    key_of=lambda r: f"{r.student_id}|{r.programme_id}",
    to_plain=lambda r: {
        "certificate_id": r.certificate_id,
        "student_id": r.student_id,
        "programme_id": r.programme_id,
        "issued_at": r.issued_at,
        "verification": r.verification.to_plain(),
    },
    from_plain=lambda p: Certificate(
        p["certificate_id"], p["student_id"], p["programme_id"], p["issued_at"],
        VerificationResult.from_plain(
            p["verification"] if isinstance(p["verification"], dict)
            else json.loads(p["verification"])
        ),
    ),
))
