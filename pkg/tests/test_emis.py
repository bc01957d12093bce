"""No-dues verification and certificate issuance.

The grid and race tests drive the orchestrator with injected checkers so
every outcome combination is reachable; the scenario tests run the real
stack end to end, including department outages mid-flight.
"""

import datetime
import itertools
import json
import socket
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor

import pytest

from i3 import errors, model
from i3.broker import Registry, serve_registry
from i3.dept import DeptConfig, run_department
from i3.emis import (
    EmisConfig, EmisOrchestrator, gateway_status, run_emis, serve_gateway,
)
from i3.storage import open_store

CLEAR = model.DeptStatus.clear()


def stub_checkers(outcomes: dict):
    """Checkers driven by a mutable dict: a DeptStatus is returned, an
    exception instance is raised, a callable is invoked."""

    def make(dept):
        def check(student_id):
            value = outcomes[dept]
            if isinstance(value, Exception):
                raise value
            if callable(value):
                return value(student_id)
            return value
        return check

    return {dept: make(dept) for dept in outcomes}


@pytest.fixture
def live_registry(tmp_path):
    handle = serve_registry(Registry(tmp_path / "registry.jsonl"))
    yield handle
    handle.stop()


def make_orch(registry_url, outcomes, **kwargs):
    return EmisOrchestrator(
        registry_url, checkers=stub_checkers(outcomes), **kwargs)


# --- fail-closed folding ----------------------------------------------------

def test_overall_grid_has_exactly_one_clear_cell(live_registry):
    states = {
        "Clear": CLEAR,
        "Defaulter": model.DeptStatus.defaulter("dues"),
        "Unreachable": model.DeptStatus.unreachable("down"),
    }
    clear_cells = []
    for combo in itertools.product(states, repeat=3):
        outcomes = dict(zip(model.DEPARTMENTS, (states[c] for c in combo)))
        orch = make_orch(live_registry.url, outcomes)
        result = orch.verify_student("S001")
        assert {d: s.state for d, s in result.per_department.items()} == (
            dict(zip(model.DEPARTMENTS, combo)))
        assert result.overall in ("Clear", "Blocked")
        if result.overall == "Clear":
            clear_cells.append(combo)
        orch.close()
    assert clear_cells == [("Clear", "Clear", "Clear")]


def test_checker_failures_become_unreachable(live_registry):
    orch = make_orch(live_registry.url, {
        "Admission": CLEAR,
        "Library": errors.EndpointUnreachable("nobody listening"),
        "Hostel": RuntimeError("checker bug"),
    })
    result = orch.verify_student("S001")
    assert result.per_department["Library"] == model.DeptStatus.unreachable(
        "EndpointUnreachable: nobody listening")
    assert result.per_department["Hostel"] == model.DeptStatus.unreachable(
        "RuntimeError: checker bug")
    assert result.overall == "Blocked"
    orch.close()


def test_missing_department_blocks(live_registry):
    # a shrunken fan-out can never produce an all-clear verdict
    orch = EmisOrchestrator(
        live_registry.url, departments=("Admission", "Library"),
        checkers=stub_checkers({"Admission": CLEAR, "Library": CLEAR}))
    result = orch.verify_student("S001")
    assert set(result.per_department) == {"Admission", "Library"}
    assert result.overall == "Blocked"
    orch.close()


def test_every_department_needs_a_checker(live_registry):
    with pytest.raises(ValueError):
        EmisOrchestrator(live_registry.url, departments=("Admission", "Dining"))


def test_verify_without_registry(tmp_path):
    gone = serve_registry(Registry(tmp_path / "r.jsonl"))
    url = gone.url
    gone.stop()
    orch = make_orch(url, dict.fromkeys(model.DEPARTMENTS, CLEAR))
    with pytest.raises(errors.BrokerUnreachable):
        orch.verify_student("S001")
    orch.close()


# --- fan-out timing ---------------------------------------------------------

def test_probes_run_concurrently(live_registry):
    delay = 0.3

    def slow_clear(student_id):
        time.sleep(delay)
        return CLEAR

    outcomes = dict.fromkeys(model.DEPARTMENTS, slow_clear)
    concurrent = make_orch(live_registry.url, outcomes)
    started = time.perf_counter()
    assert concurrent.verify_student("S001").overall == "Clear"
    concurrent_elapsed = time.perf_counter() - started
    concurrent.close()

    sequential = make_orch(live_registry.url, outcomes, sequential=True)
    started = time.perf_counter()
    assert sequential.verify_student("S001").overall == "Clear"
    sequential_elapsed = time.perf_counter() - started
    sequential.close()

    assert concurrent_elapsed < 2 * delay
    assert sequential_elapsed >= 3 * delay


# --- audit ------------------------------------------------------------------

def test_audit_records_every_verification(live_registry, tmp_path):
    audit_path = tmp_path / "audit.jsonl"
    outcomes = dict.fromkeys(model.DEPARTMENTS, CLEAR)
    orch = make_orch(live_registry.url, outcomes, audit_path=audit_path)
    orch.verify_student("S001")
    outcomes["Library"] = model.DeptStatus.defaulter("outstanding books: B001")
    orch.verify_student("S002")
    entries = orch.audit_entries()
    orch.close()

    assert [e["student_id"] for e in entries] == ["S001", "S002"]
    for entry in entries:
        datetime.datetime.fromisoformat(entry["timestamp"])
        assert set(entry["durations_ms"]) == set(model.DEPARTMENTS)
        assert all(ms >= 0 for ms in entry["durations_ms"].values())
        restored = model.VerificationResult.from_plain(entry["result"])
        assert restored.student_id == entry["student_id"]
    assert entries[0]["result"]["overall"] == "Clear"
    assert entries[1]["result"]["overall"] == "Blocked"

    on_disk = [json.loads(line) for line in
               audit_path.read_text(encoding="utf-8").splitlines()]
    assert on_disk == entries


# --- certificates over injected checkers ------------------------------------

@pytest.fixture
def issuing(live_registry, tmp_path):
    store = open_store("binarylog", tmp_path / "emis")
    store.put("exam_records", model.ExamRecord(
        "S001", "P01", True, datetime.date(2015, 5, 30)))
    store.put("exam_records", model.ExamRecord(
        "S004", "P01", False, datetime.date(2015, 5, 30)))
    outcomes = dict.fromkeys(model.DEPARTMENTS, CLEAR)
    orch = make_orch(live_registry.url, outcomes, store=store)
    yield orch, outcomes, store
    orch.close()
    store.close()


class TestCertificates:
    def test_issue_mints_and_persists(self, issuing):
        orch, _, store = issuing
        certificate = orch.issue_certificate("S001", "P01")
        assert certificate.certificate_id == "C-S001-P01"
        assert certificate.verification.overall == "Clear"
        issued = datetime.datetime.fromisoformat(certificate.issued_at)
        assert issued.tzinfo is not None
        assert store.get("certificates", "S001|P01") == certificate
        assert orch.find_certificate("C-S001-P01") == certificate

    def test_issue_is_idempotent(self, issuing):
        orch, _, store = issuing
        first = orch.issue_certificate("S001", "P01")
        second = orch.issue_certificate("S001", "P01")
        assert first == second
        assert len(store.scan("certificates")) == 1
        assert len(orch.audit_entries()) == 1  # no second verification ran

    def test_missing_exam_record(self, issuing):
        orch, _, _ = issuing
        with pytest.raises(errors.ExamRecordMissing):
            orch.issue_certificate("S001", "P99")

    def test_exam_not_passed(self, issuing):
        orch, _, store = issuing
        with pytest.raises(errors.ExamNotPassed):
            orch.issue_certificate("S004", "P01")
        assert store.scan("certificates") == []
        assert orch.audit_entries() == []  # gate fails before the fan-out

    def test_blocked_verification_withholds_certificate(self, issuing):
        orch, outcomes, store = issuing
        outcomes["Hostel"] = model.DeptStatus.defaulter("room not vacated: R101")
        with pytest.raises(errors.VerificationBlocked) as info:
            orch.issue_certificate("S001", "P01")
        result = info.value.result
        assert result.overall == "Blocked"
        assert result.per_department["Hostel"].reason == "room not vacated: R101"
        assert store.scan("certificates") == []

    def test_no_negative_caching(self, issuing):
        orch, outcomes, _ = issuing
        outcomes["Library"] = model.DeptStatus.unreachable("down")
        with pytest.raises(errors.VerificationBlocked):
            orch.issue_certificate("S001", "P01")
        outcomes["Library"] = CLEAR  # dues settled: the next attempt re-verifies
        assert orch.issue_certificate("S001", "P01").certificate_id == "C-S001-P01"

    def test_concurrent_issue_mints_once(self, issuing):
        orch, outcomes, store = issuing

        def slow_clear(student_id):
            time.sleep(0.05)
            return CLEAR

        outcomes.update(dict.fromkeys(model.DEPARTMENTS, slow_clear))
        with ThreadPoolExecutor(max_workers=2) as pool:
            futures = [pool.submit(orch.issue_certificate, "S001", "P01")
                       for _ in range(2)]
            results = [f.result() for f in futures]
        assert results[0] == results[1]
        assert len(store.scan("certificates")) == 1
        assert len(orch.audit_entries()) == 1  # the loser reused, not re-verified

    def test_storeless_orchestrator_cannot_issue(self, live_registry):
        orch = make_orch(live_registry.url, dict.fromkeys(model.DEPARTMENTS, CLEAR))
        with pytest.raises(errors.I3Error):
            orch.issue_certificate("S001", "P01")
        with pytest.raises(errors.I3Error):
            orch.find_certificate("C-S001-P01")
        orch.close()


def test_find_certificate_unknown(issuing):
    orch, _, _ = issuing
    with pytest.raises(errors.NotFound):
        orch.find_certificate("C-S009-P01")


# --- the real stack ---------------------------------------------------------

def states_of(result: model.VerificationResult) -> dict[str, str]:
    return {dept: status.state for dept, status in result.per_department.items()}


def test_seeded_fixture_scenarios(make_stack):
    stack = make_stack(emis=True)
    orch = stack.emis.orchestrator

    clear = orch.verify_student("S001")
    assert clear.overall == "Clear"
    assert states_of(clear) == dict.fromkeys(model.DEPARTMENTS, "Clear")

    library_block = orch.verify_student("S002")
    assert library_block.overall == "Blocked"
    assert library_block.per_department["Library"] == model.DeptStatus.defaulter(
        "outstanding books: B001")
    assert library_block.per_department["Hostel"].state == "Clear"

    hostel_block = orch.verify_student("S003")
    assert hostel_block.overall == "Blocked"
    assert hostel_block.per_department["Hostel"] == model.DeptStatus.defaulter(
        "room not vacated: R101")

    unknown = orch.verify_student("S999")
    assert unknown.overall == "Blocked"
    assert unknown.per_department["Admission"] == model.DeptStatus.defaulter(
        "not found in admission records")
    # the reports do not mention a student the departments never met
    assert unknown.per_department["Library"].state == "Clear"
    assert unknown.per_department["Hostel"].state == "Clear"


def test_certificates_over_the_stack(make_stack):
    stack = make_stack(emis=True)
    orch = stack.emis.orchestrator
    certificate = orch.issue_certificate("S001", "P01")
    assert certificate.certificate_id == "C-S001-P01"
    with pytest.raises(errors.VerificationBlocked):
        orch.issue_certificate("S002", "P01")
    with pytest.raises(errors.ExamNotPassed):
        orch.issue_certificate("S004", "P01")
    with pytest.raises(errors.ExamRecordMissing):
        orch.issue_certificate("S005", "P01")


def test_department_outage_blocks_and_restart_heals(make_stack):
    stack = make_stack(emis=True)
    orch = stack.emis.orchestrator
    assert orch.verify_student("S001").overall == "Clear"

    down = stack.depts.pop("lmis")
    data_dir = down.config.data_dir
    down.stop()
    blocked = orch.verify_student("S001")
    assert blocked.overall == "Blocked"
    assert blocked.per_department["Library"].state == "Unreachable"
    # the cached proxy fails, then the one fresh bind against the dead
    # endpoint reports why it could not rebind
    assert blocked.per_department["Library"].reason.startswith(
        ("EndpointUnreachable", "WsdlFetchFailed"))
    assert blocked.per_department["Admission"].state == "Clear"
    assert blocked.per_department["Hostel"].state == "Clear"

    # same data, new port: the cached proxy is stale and must be re-bound
    stack.depts["lmis"] = run_department(DeptConfig(
        dept="lmis", data_dir=data_dir, registry_url=stack.registry_url))
    healed = orch.verify_student("S001")
    assert healed.overall == "Clear"


# --- the JSON gateway -------------------------------------------------------

def gw(method: str, url: str, body=None):
    data = None if body is None else json.dumps(body).encode("utf-8")
    request = urllib.request.Request(url, data=data, method=method)
    if data is not None:
        request.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            return response.status, json.loads(response.read() or b"null"), response.headers
    except urllib.error.HTTPError as exc:
        payload = exc.read()
        return exc.code, json.loads(payload) if payload else None, exc.headers


def gw_post_raw(url: str, raw: bytes):
    request = urllib.request.Request(url, data=raw, method="POST")
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            return response.status, json.loads(response.read() or b"null")
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def test_gateway_round_trip(make_stack):
    stack = make_stack(emis=True)
    base = stack.emis.url

    status, students, headers = gw("GET", f"{base}/api/students")
    assert status == 200
    assert headers["Access-Control-Allow-Origin"] == "*"
    assert {"id": "S001", "label": "Aisha Khan"} in students
    assert len(students) == 5

    status, record, _ = gw("GET", f"{base}/api/students/S001")
    assert (status, record["first_name"], record["graduation_year"]) == (
        200, "Aisha", 2015)

    status, verdict, _ = gw("POST", f"{base}/api/verify/S001")
    assert status == 200
    restored = model.VerificationResult.from_plain(verdict)
    assert restored.overall == "Clear" and verdict["overall"] == "Clear"

    status, verdict, _ = gw("POST", f"{base}/api/verify/S002")
    assert status == 200  # a blocked verdict is an answer, not an error
    assert verdict["overall"] == "Blocked"
    assert verdict["departments"]["Library"]["reason"] == "outstanding books: B001"

    status, issued, _ = gw("POST", f"{base}/api/certificates",
                           {"student_id": "S001", "programme_id": "P01"})
    assert status == 200
    assert issued["certificate_id"] == "C-S001-P01"
    assert issued["verification"]["overall"] == "Clear"

    status, fetched, _ = gw("GET", f"{base}/api/certificates/C-S001-P01")
    assert (status, fetched) == (200, issued)

    status, audit, _ = gw("GET", f"{base}/api/audit")
    assert status == 200
    assert [e["student_id"] for e in audit] == ["S001", "S002", "S001"]

    # the audit file sits next to the exam store
    audit_file = stack.emis.config.data_dir / "audit.jsonl"
    assert len(audit_file.read_text(encoding="utf-8").splitlines()) == 3


def test_gateway_registration_routes(make_stack):
    stack = make_stack(emis=True)
    base = stack.emis.url

    status, record, _ = gw("POST", f"{base}/api/register/library/S004")
    assert (status, record) == (200, {"student_id": "S004", "issued_books": []})
    status, payload, _ = gw("POST", f"{base}/api/register/library/S004")
    assert (status, payload["code"]) == (409, "AlreadyRegistered")

    status, record, _ = gw("POST", f"{base}/api/register/hostel/S004")
    assert (status, record) == (200, {"student_id": "S004", "allotments": []})

    status, record, _ = gw("POST", f"{base}/api/register/campus/S004")
    assert status == 200 and record["first_name"] == "Divya"

    status, payload, _ = gw("POST", f"{base}/api/register/library/S999")
    assert (status, payload["code"]) == (404, "StudentNotFound")

    status, payload, _ = gw("POST", f"{base}/api/register/dining/S001")
    assert (status, payload["code"]) == (404, "NotFound")
    status, payload, _ = gw("POST", f"{base}/api/register/library/")
    assert status == 404


def test_gateway_error_statuses(make_stack):
    stack = make_stack(emis=True)
    base = stack.emis.url

    status, payload, _ = gw("GET", f"{base}/api/students/S999")
    assert (status, payload["code"]) == (404, "StudentNotFound")

    status, payload, _ = gw("POST", f"{base}/api/certificates",
                            {"student_id": "S001"})
    assert (status, payload["code"]) == (400, "BadRequest")

    status, payload, _ = gw("POST", f"{base}/api/certificates",
                            {"student_id": "S005", "programme_id": "P01"})
    assert (status, payload["code"]) == (404, "ExamRecordMissing")

    status, payload, _ = gw("POST", f"{base}/api/certificates",
                            {"student_id": "S002", "programme_id": "P01"})
    assert (status, payload["code"]) == (409, "VerificationBlocked")
    assert payload["detail"]["departments"]["Library"]["status"] == "Defaulter"

    status, payload = gw_post_raw(f"{base}/api/certificates", b"{oops")
    assert (status, payload["code"]) == (400, "BadRequest")

    status, payload, _ = gw("GET", f"{base}/api/nowhere")
    assert (status, payload["code"]) == (404, "NotFound")
    assert "no route" in payload["message"]


def test_gateway_cors_preflight(make_stack):
    stack = make_stack(emis=True)
    request = urllib.request.Request(
        f"{stack.emis.url}/api/students", method="OPTIONS")
    with urllib.request.urlopen(request, timeout=10) as response:
        assert response.status == 204
        assert response.headers["Access-Control-Allow-Origin"] == "*"
        assert "POST" in response.headers["Access-Control-Allow-Methods"]


def test_gateway_maps_broker_outage_to_502(tmp_path):
    gone = serve_registry(Registry(tmp_path / "r.jsonl"))
    url = gone.url
    gone.stop()
    orch = EmisOrchestrator(url, call_timeout=1.0)
    gateway = serve_gateway(orch)
    try:
        status, payload, _ = gw("POST", f"{gateway.url}/api/verify/S001")
        assert (status, payload["code"]) == (502, "BrokerUnreachable")
    finally:
        gateway.stop()
        orch.close()


def test_gateway_status_covers_the_error_families():
    assert gateway_status(errors.ValidationFailed(["x"])) == 400
    assert gateway_status(errors.StudentNotFound("S1")) == 404
    assert gateway_status(errors.ExamRecordMissing("none")) == 404
    assert gateway_status(errors.BrokerUnreachable("down")) == 502
    assert gateway_status(errors.AmisUnreachable("down")) == 502
    assert gateway_status(errors.ExamNotPassed("no")) == 409
    assert gateway_status(errors.AlreadyRegistered("S1")) == 409
    assert gateway_status(errors.StoreCorrupt("bad")) == 500
    assert gateway_status(RuntimeError("bug")) == 500


def test_gateway_refuses_an_occupied_port(tmp_path, live_registry):
    blocker = socket.socket()
    blocker.bind(("127.0.0.1", 0))
    blocker.listen(1)
    port = blocker.getsockname()[1]
    try:
        with pytest.raises(errors.BindFailed):
            run_emis(EmisConfig(
                data_dir=tmp_path / "emis", registry_url=live_registry.url,
                port=port))
    finally:
        blocker.close()
