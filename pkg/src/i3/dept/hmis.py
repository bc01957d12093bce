"""Hostel service: registrations, room allotment, defaulter reporting.

A student holds at most one open allotment; a room's open allotments never
exceed its capacity. The defaulter rule is an un-vacated room.
"""

from __future__ import annotations

import datetime
import threading

from .. import errors
from ..envelope import BeanValue, TypedValue
from ..model import (
    DefaulterReport, HostelStudentRecord, ListItem, RoomAllotment,
    hostel_record_to_bean, is_defaulter, list_item_to_bean,
)
from ..storage import Store


class HmisManager:
    def __init__(self, store: Store, fetch_student, today=datetime.date.today):
        self.store = store
        self.fetch_student = fetch_student
        self.today = today
        self._write_lock = threading.Lock()

    def _record(self, student_id: str) -> HostelStudentRecord:
        record = self.store.get("hostel_students", student_id)
        if record is None:
            raise errors.NotRegistered(student_id)
        return record

    def register_student(self, student_id: str) -> HostelStudentRecord:
        with self._write_lock:
            if self.store.get("hostel_students", student_id) is not None:
                raise errors.AlreadyRegistered(student_id)
            self.fetch_student(student_id)
            record = HostelStudentRecord(student_id)
            self.store.put("hostel_students", record)
        return record

    def _occupancy(self, room_id: str) -> int:
        count = 0
        for record in self.store.scan("hostel_students"):
            allotment = record.open_allotment()
            if allotment is not None and allotment.room_id == room_id:
                count += 1
        return count

    def allot_room(self, student_id: str, room_id: str) -> bool:
        with self._write_lock:
            record = self._record(student_id)
            room = self.store.get("rooms", room_id)
            if room is None:
                raise errors.RoomNotFound(room_id)
            if record.open_allotment() is not None:
                raise errors.AlreadyAllotted(
                    f"{student_id} already holds {record.open_allotment().room_id}")
            if self._occupancy(room_id) >= room.capacity:
                raise errors.RoomFull(f"{room_id} is at capacity {room.capacity}")
            allotments = list(record.allotments)
            allotments.append(RoomAllotment(room_id, self.today()))
            self.store.put("hostel_students",
                           HostelStudentRecord(student_id, allotments))
        return True

    def vacate_room(self, student_id: str) -> bool:
        with self._write_lock:
            record = self._record(student_id)
            allotments = list(record.allotments)
            for position, allotment in enumerate(allotments):
                if allotment.open:
                    allotments[position] = RoomAllotment(
                        allotment.room_id, allotment.allot_date, self.today())
                    self.store.put("hostel_students",
                                   HostelStudentRecord(student_id, allotments))
                    return True
            raise errors.NoOpenAllotment(student_id)

    def get_record(self, student_id: str) -> HostelStudentRecord:
        return self._record(student_id)

    def defaulter_report(self) -> DefaulterReport:
        entries = []
        for record in self.store.scan("hostel_students"):
            bad, reason = is_defaulter(record)
            if bad:
                entries.append((record.student_id, reason))
        return DefaulterReport("Hostel", entries)


class HmisService:
    SIGNATURES = {
        "registerStudent": (
            (("student_id", "string"),), ("record", "myNS:HostelStudentRecord")),
        "allotRoom": (
            (("student_id", "string"), ("room_id", "string")), ("ok", "bool")),
        "vacateRoom": ((("student_id", "string"),), ("ok", "bool")),
        "defaulterReport": ((), ("report", "list")),
    }

    def __init__(self, manager: HmisManager):
        self.manager = manager

    def registerStudent(self, student_id: str) -> BeanValue:
        return hostel_record_to_bean(self.manager.register_student(student_id))

    def allotRoom(self, student_id: str, room_id: str) -> bool:
        return self.manager.allot_room(student_id, room_id)

    def vacateRoom(self, student_id: str) -> bool:
        return self.manager.vacate_room(student_id)

    def defaulterReport(self) -> list[TypedValue]:
        report = self.manager.defaulter_report()
        return [
            TypedValue("item", "myNS:ListItem",
                       list_item_to_bean(ListItem(sid, reason)))
            for sid, reason in report.entries
        ]
