"""Campus service: keeps its own copy of the admission fields at
registration time. More campuses can run side by side, each with its own
data directory; they never share state."""

from __future__ import annotations

import threading

from .. import errors
from ..envelope import BeanValue
from ..model import StudentRecord, student_to_bean
from ..storage import Store


class CampusManager:
    def __init__(self, store: Store, fetch_student):
        self.store = store
        self.fetch_student = fetch_student
        self._write_lock = threading.Lock()

    def register_student(self, student_id: str) -> StudentRecord:
        with self._write_lock:
            if self.store.get("campus_students", student_id) is not None:
                raise errors.AlreadyRegistered(student_id)
            record = self.fetch_student(student_id)
            self.store.put("campus_students", record)
        return record

    def registered(self) -> list[StudentRecord]:
        return self.store.scan("campus_students")


class CampusService:
    SIGNATURES = {
        "registerStudent": (
            (("student_id", "string"),), ("record", "myNS:StudentRecord")),
    }

    def __init__(self, manager: CampusManager):
        self.manager = manager

    def registerStudent(self, student_id: str) -> BeanValue:
        return student_to_bean(self.manager.register_student(student_id))
