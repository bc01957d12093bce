"""Library service: registrations, book issue/return, defaulter reporting.

Registration copies nothing locally beyond the student id: the student must
exist at admission (checked over the fabric), after which the library record
tracks only issue state. A book is issued exclusively: one outstanding
issue at a time across all students.
"""

from __future__ import annotations

import datetime
import threading

from .. import errors
from ..envelope import BeanValue, TypedValue
from ..model import (
    BookIssue, DefaulterReport, LibraryStudentRecord,
    is_defaulter, library_record_to_bean, list_item_to_bean, ListItem,
)
from ..storage import Store


class LmisManager:
    def __init__(self, store: Store, fetch_student, today=datetime.date.today):
        self.store = store
        self.fetch_student = fetch_student
        self.today = today
        self._write_lock = threading.Lock()

    def _record(self, student_id: str) -> LibraryStudentRecord:
        record = self.store.get("library_students", student_id)
        if record is None:
            raise errors.NotRegistered(student_id)
        return record

    def register_student(self, student_id: str) -> LibraryStudentRecord:
        with self._write_lock:
            if self.store.get("library_students", student_id) is not None:
                raise errors.AlreadyRegistered(student_id)
            self.fetch_student(student_id)  # StudentNotFound / AmisUnreachable
            record = LibraryStudentRecord(student_id)
            self.store.put("library_students", record)
        return record

    def issue_book(self, student_id: str, book_id: str) -> bool:
        with self._write_lock:
            record = self._record(student_id)
            if self.store.get("books", book_id) is None:
                raise errors.BookNotFound(book_id)
            for other in self.store.scan("library_students"):
                for issue in other.issued_books:
                    if issue.book_id == book_id and issue.outstanding:
                        raise errors.BookAlreadyIssued(
                            f"{book_id} is out with {other.student_id}")
            issues = list(record.issued_books)
            issues.append(BookIssue(book_id, self.today()))
            self.store.put("library_students",
                           LibraryStudentRecord(student_id, issues))
        return True

    def return_book(self, student_id: str, book_id: str) -> bool:
        with self._write_lock:
            record = self._record(student_id)
            issues = list(record.issued_books)
            for position, issue in enumerate(issues):
                if issue.book_id == book_id and issue.outstanding:
                    issues[position] = BookIssue(
                        issue.book_id, issue.issue_date, self.today())
                    self.store.put("library_students",
                                   LibraryStudentRecord(student_id, issues))
                    return True
            raise errors.NoOutstandingIssue(f"{student_id} has not got {book_id}")

    def get_record(self, student_id: str) -> LibraryStudentRecord:
        return self._record(student_id)

    def defaulter_report(self) -> DefaulterReport:
        entries = []
        for record in self.store.scan("library_students"):
            bad, reason = is_defaulter(record)
            if bad:
                entries.append((record.student_id, reason))
        return DefaulterReport("Library", entries)


class LmisService:
    SIGNATURES = {
        "registerStudent": (
            (("student_id", "string"),), ("record", "myNS:LibraryStudentRecord")),
        "issueBook": (
            (("student_id", "string"), ("book_id", "string")), ("ok", "bool")),
        "returnBook": (
            (("student_id", "string"), ("book_id", "string")), ("ok", "bool")),
        "defaulterReport": ((), ("report", "list")),
    }

    def __init__(self, manager: LmisManager):
        self.manager = manager

    def registerStudent(self, student_id: str) -> BeanValue:
        return library_record_to_bean(self.manager.register_student(student_id))

    def issueBook(self, student_id: str, book_id: str) -> bool:
        return self.manager.issue_book(student_id, book_id)

    def returnBook(self, student_id: str, book_id: str) -> bool:
        return self.manager.return_book(student_id, book_id)

    def defaulterReport(self) -> list[TypedValue]:
        report = self.manager.defaulter_report()
        return [
            TypedValue("item", "myNS:ListItem",
                       list_item_to_bean(ListItem(sid, reason)))
            for sid, reason in report.entries
        ]
