"""Admission service: the primary student roster plus reference catalogs."""

from __future__ import annotations

import threading

from .. import errors
from ..envelope import BeanValue, TypedValue
from ..model import (
    DepartmentRecord, ListItem, ProgrammeRecord, StudentRecord,
    bean_to_student, department_to_bean, list_item_to_bean, programme_to_bean,
    student_to_bean, validate_record,
)
from ..storage import Store


class AmisManager:
    """Domain operations over the admission store."""

    def __init__(self, store: Store):
        self.store = store
        self._write_lock = threading.Lock()

    def add_student(self, record: StudentRecord) -> str:
        problems = validate_record(record)
        if problems:
            raise errors.ValidationFailed(problems)
        with self._write_lock:
            if self.store.get("students", record.student_id) is not None:
                raise errors.DuplicateStudent(record.student_id)
            self.store.put("students", record)
        return record.student_id

    def get_student(self, student_id: str) -> StudentRecord:
        record = self.store.get("students", student_id)
        if record is None:
            raise errors.StudentNotFound(student_id)
        return record

    def list_students(self) -> list[ListItem]:
        return [
            ListItem(r.student_id, f"{r.first_name} {r.last_name}")
            for r in self.store.scan("students")
        ]

    def list_departments(self) -> list[DepartmentRecord]:
        return self.store.scan("departments")

    def list_programmes(self) -> list[ProgrammeRecord]:
        return self.store.scan("programmes")

    # catalog admin (seed/CLI only; not exposed on the wire)

    def add_department(self, record: DepartmentRecord) -> str:
        problems = validate_record(record)
        if problems:
            raise errors.ValidationFailed(problems)
        self.store.put("departments", record)
        return record.department_id

    def add_programme(self, record: ProgrammeRecord) -> str:
        problems = validate_record(record)
        if self.store.get("departments", record.department_id) is None:
            problems.append(
                f"programme {record.programme_id}: unknown department "
                f"{record.department_id!r}")
        if problems:
            raise errors.ValidationFailed(problems)
        self.store.put("programmes", record)
        return record.programme_id


class AmisService:
    """Wire wrapper: bean conversion on both sides of the manager."""

    SIGNATURES = {
        "addStudent": (
            (("record", "myNS:StudentRecord"),), ("student_id", "string")),
        "getStudent": (
            (("student_id", "string"),), ("record", "myNS:StudentRecord")),
        "listStudents": ((), ("students", "list")),
        "listDepartments": ((), ("departments", "list")),
        "listProgrammes": ((), ("programmes", "list")),
    }

    def __init__(self, manager: AmisManager):
        self.manager = manager

    def addStudent(self, record: BeanValue) -> str:
        return self.manager.add_student(bean_to_student(record))

    def getStudent(self, student_id: str) -> BeanValue:
        return student_to_bean(self.manager.get_student(student_id))

    def listStudents(self) -> list[TypedValue]:
        return [
            TypedValue("item", "myNS:ListItem", list_item_to_bean(item))
            for item in self.manager.list_students()
        ]

    def listDepartments(self) -> list[TypedValue]:
        return [
            TypedValue("item", "myNS:DepartmentRecord", department_to_bean(r))
            for r in self.manager.list_departments()
        ]

    def listProgrammes(self) -> list[TypedValue]:
        return [
            TypedValue("item", "myNS:ProgrammeRecord", programme_to_bean(r))
            for r in self.manager.list_programmes()
        ]
