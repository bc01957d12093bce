"""Command-line surface: settings resolution, exit codes, and the
operator flows (seed, verify, issue, wsdl, deploy/undeploy, demo).

Fast paths run main() in process and read captured output; the demo test
boots the real multi-process stack through `python3 -m i3.cli`.
"""

import json
import socket
import subprocess
import sys
import time
import urllib.error
import urllib.request
from pathlib import Path

import pytest

from i3 import cli, errors
from i3.engine import parse_wsdl

from conftest import REPO_ROOT, SEED_DIR, UNDEPLOY_PATH

LMIS_WSDD = REPO_ROOT / "fixtures" / "lmis.wsdd"


def settings_for(argv):
    return cli.Settings(cli.build_parser().parse_args(argv))


# --- config file grammar ----------------------------------------------------

def test_load_config_grammar(tmp_path):
    path = tmp_path / "i3.conf"
    path.write_text(
        "# stack defaults\n"
        "registry-url = http://file.example:7100\n"
        "\n"
        "data-dir=/var/lib/i3\n"
        "note = a=b\n",
        encoding="utf-8")
    assert cli.load_config(path) == {
        "registry-url": "http://file.example:7100",
        "data-dir": "/var/lib/i3",
        "note": "a=b",
    }


def test_load_config_rejects_bare_words(tmp_path):
    path = tmp_path / "i3.conf"
    path.write_text("# fine\njust words\n", encoding="utf-8")
    with pytest.raises(errors.I3Error) as info:
        cli.load_config(path)
    assert f"{path}:2" in str(info.value)


# --- settings precedence ----------------------------------------------------

class TestSettingsPrecedence:
    def test_flag_beats_environment(self, monkeypatch):
        monkeypatch.setenv("I3_REGISTRY_URL", "http://env.example")
        settings = settings_for(
            ["verify", "S001", "--registry-url", "http://flag.example"])
        assert settings.get("registry-url") == "http://flag.example"

    def test_environment_beats_file(self, monkeypatch, tmp_path):
        config = tmp_path / "i3.conf"
        config.write_text("registry-url = http://file.example\n")
        monkeypatch.setenv("I3_REGISTRY_URL", "http://env.example")
        settings = settings_for(["verify", "S001", "--config", str(config)])
        assert settings.get("registry-url") == "http://env.example"

    def test_file_beats_default(self, monkeypatch, tmp_path):
        monkeypatch.delenv("I3_REGISTRY_URL", raising=False)
        config = tmp_path / "i3.conf"
        config.write_text("registry-url = http://file.example\n")
        settings = settings_for(["verify", "S001", "--config", str(config)])
        assert settings.get("registry-url") == "http://file.example"

    def test_default_when_nothing_set(self, monkeypatch):
        monkeypatch.delenv("I3_REGISTRY_URL", raising=False)
        settings = settings_for(["verify", "S001"])
        assert settings.get("registry-url", cli.DEFAULT_REGISTRY_URL) == (
            "http://127.0.0.1:7100")

    def test_environment_key_spelling(self, monkeypatch):
        monkeypatch.setenv("I3_DATA_DIR", "/srv/i3")
        settings = settings_for(["seed", "lmis"])
        assert settings.get("data-dir") == "/srv/i3"

    def test_global_flag_before_subcommand_survives(self):
        # the subparser copy uses SUPPRESS, so it cannot clobber the root value
        settings = settings_for(
            ["--registry-url", "http://root.example", "verify", "S001"])
        assert settings.get("registry-url") == "http://root.example"


@pytest.mark.parametrize("text,expected", [
    ("127.0.0.1:7100", ("127.0.0.1", 7100)),
    (":7100", ("127.0.0.1", 7100)),
    ("7100", ("127.0.0.1", 7100)),
    ("0.0.0.0:80", ("0.0.0.0", 80)),
])
def test_parse_listen(text, expected):
    assert cli._parse_listen(text) == expected


def test_parse_listen_rejects_garbage():
    with pytest.raises(errors.I3Error):
        cli._parse_listen("port-eighty")


# --- exit codes -------------------------------------------------------------

def test_usage_errors_exit_2(capsys):
    for argv in ([], ["bogus"], ["deploy"], ["service", "dining"]):
        with pytest.raises(SystemExit) as info:
            cli.main(argv)
        assert info.value.code == 2
    capsys.readouterr()


def test_missing_config_file_exits_1(capsys):
    assert cli.main(["--config", "/no/such/i3.conf", "verify", "S001"]) == 1
    assert "error:" in capsys.readouterr().err


def test_malformed_config_file_exits_1(tmp_path, capsys):
    config = tmp_path / "i3.conf"
    config.write_text("nonsense\n")
    assert cli.main(["--config", str(config), "verify", "S001"]) == 1
    assert "expected 'key = value'" in capsys.readouterr().err


def test_unreachable_registry_exits_1(tmp_path, capsys):
    from i3.broker import Registry, serve_registry
    gone = serve_registry(Registry(tmp_path / "r.jsonl"))
    url = gone.url
    gone.stop()
    assert cli.main(["verify", "S001", "--registry-url", url]) == 1
    assert "error:" in capsys.readouterr().err


# --- seed -------------------------------------------------------------------

def test_seed_writes_department_stores(tmp_path, capsys):
    root = tmp_path / "data"
    assert cli.main(["seed", "lmis", str(SEED_DIR),
                     "--data-dir", str(root)]) == 0
    out = capsys.readouterr().out
    assert "books: 6 records (tabular)" in out
    assert "library_students: 3 records (tabular)" in out
    assert (root / "lmis" / "books.csv").exists()

    # reseeding is idempotent: keys overwrite, counts hold
    assert cli.main(["seed", "lmis", str(SEED_DIR),
                     "--data-dir", str(root)]) == 0
    assert "books: 6 records" in capsys.readouterr().out


def test_seed_respects_storage_format_flag(tmp_path, capsys):
    root = tmp_path / "data"
    assert cli.main(["seed", "hmis", str(SEED_DIR), "--data-dir", str(root),
                     "--storage-format", "binarylog"]) == 0
    assert "rooms: 3 records (binarylog)" in capsys.readouterr().out
    assert (root / "hmis" / "rooms.bin").exists()


def test_seed_emis_defaults(tmp_path, capsys):
    root = tmp_path / "data"
    assert cli.main(["seed", "emis", "--data-dir", str(root)]) == 0
    assert "exam_records: 4 records (binarylog)" in capsys.readouterr().out


# --- verify and issue over a live stack -------------------------------------

def test_verify_clear_and_blocked(make_stack, capsys):
    stack = make_stack(depts=("amis", "lmis", "hmis"))

    assert cli.main(["verify", "S001", "--registry-url",
                     stack.registry_url]) == 0
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert lines[-1] == "CLEAR"
    assert sum(line.endswith("CLEAR") for line in lines[:-1]) == 3

    assert cli.main(["verify", "S002", "--registry-url",
                     stack.registry_url]) == 1
    out = capsys.readouterr().out
    assert out.splitlines()[-1] == "BLOCKED"
    assert "outstanding books: B001" in out


def test_issue_against_local_store(make_stack, tmp_path, capsys):
    stack = make_stack(depts=("amis", "lmis", "hmis"))
    root = tmp_path / "data"
    assert cli.main(["seed", "emis", "--data-dir", str(root)]) == 0
    capsys.readouterr()

    argv = ["--registry-url", stack.registry_url, "--data-dir", str(root)]
    assert cli.main(["issue", "S001", "P01", *argv]) == 0
    assert capsys.readouterr().out.strip() == "C-S001-P01"

    # idempotent: a second run reports the same certificate
    assert cli.main(["issue", "S001", "P01", *argv]) == 0
    assert capsys.readouterr().out.strip() == "C-S001-P01"

    assert cli.main(["issue", "S002", "P01", *argv]) == 1
    err = capsys.readouterr().err
    assert "verification blocked:" in err
    assert "Library" in err and "DEFAULTER" in err

    assert cli.main(["issue", "S005", "P01", *argv]) == 1
    assert "no exam record" in capsys.readouterr().err

    audit = (root / "emis" / "audit.jsonl").read_text(encoding="utf-8")
    assert len(audit.splitlines()) == 2  # S001 once (then reused), S002 once


def test_issue_via_gateway(make_stack, capsys):
    stack = make_stack(emis=True)
    assert cli.main(["issue", "S001", "P01",
                     "--gateway-url", stack.emis.url]) == 0
    assert capsys.readouterr().out.strip() == "C-S001-P01"

    assert cli.main(["issue", "S002", "P01",
                     "--gateway-url", stack.emis.url]) == 1
    err = capsys.readouterr().err
    assert "VerificationBlocked" in err
    assert "Library" in err and "DEFAULTER" in err

    assert cli.main(["issue", "S001", "P01",
                     "--gateway-url", "http://127.0.0.1:9"]) == 1
    assert "cannot reach gateway" in capsys.readouterr().err


# --- wsdl -------------------------------------------------------------------

def test_wsdl_via_registry_and_direct(make_stack, capsys):
    stack = make_stack(depts=("amis",))
    assert cli.main(["wsdl", "AdmissionDataBaseManagerService",
                     "--registry-url", stack.registry_url]) == 0
    via_registry = capsys.readouterr().out
    doc = parse_wsdl(via_registry.encode("utf-8"))
    assert "getStudent" in {op.name for op in doc.operations}

    assert cli.main(["wsdl", "AdmissionDataBaseManagerService",
                     "--host", stack.depts["amis"].url]) == 0
    assert capsys.readouterr().out == via_registry

    assert cli.main(["wsdl", "NoSuchService",
                     "--registry-url", stack.registry_url]) == 1
    assert "error:" in capsys.readouterr().err


# --- deploy / undeploy ------------------------------------------------------

def service_listing(base_url: str) -> str:
    with urllib.request.urlopen(f"{base_url}/services", timeout=5) as reply:
        return reply.read().decode("utf-8")


def test_undeploy_redeploy_cycle(make_stack, capsys):
    stack = make_stack(depts=("amis", "lmis"))
    host_url = stack.depts["lmis"].url

    assert cli.main(["undeploy", str(UNDEPLOY_PATH), "--host", host_url]) == 0
    assert capsys.readouterr().out.strip() == "LibraryDataBaseManagerService"
    assert "LibraryDataBaseManagerService" not in service_listing(host_url)

    # a second undeploy finds nothing left to remove
    assert cli.main(["undeploy", str(UNDEPLOY_PATH), "--host", host_url]) == 1
    assert "undeploy failed" in capsys.readouterr().err

    assert cli.main(["deploy", str(LMIS_WSDD), "--host", host_url]) == 0
    assert capsys.readouterr().out.strip() == "LibraryDataBaseManagerService"
    assert "LibraryDataBaseManagerService" in service_listing(host_url)

    assert cli.main(["deploy", str(LMIS_WSDD), "--host", host_url]) == 1
    assert "AlreadyDeployed" in capsys.readouterr().err

    # the restored service answers over the fabric
    from i3.envelope import TypedValue
    record = stack.bind("LibraryDataBaseManagerService").call(
        "registerStudent", [TypedValue("student_id", "string", "S004")])
    assert record.value.values["student_id"] == "S004"


def test_deploy_unreachable_host(capsys):
    assert cli.main(["deploy", str(LMIS_WSDD),
                     "--host", "http://127.0.0.1:9"]) == 1
    assert "cannot reach" in capsys.readouterr().err


def test_deploy_missing_descriptor_file(make_stack, capsys):
    stack = make_stack(depts=("amis",))
    assert cli.main(["deploy", "/no/such.wsdd",
                     "--host", stack.depts["amis"].url]) == 1
    assert "error:" in capsys.readouterr().err


# --- the demo stack as real processes ---------------------------------------

def free_port() -> int:
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        return probe.getsockname()[1]


def wait_for_json(url: str, deadline: float = 20.0):
    last = None
    end = time.monotonic() + deadline
    while time.monotonic() < end:
        try:
            with urllib.request.urlopen(url, timeout=2) as reply:
                return json.loads(reply.read())
        except (urllib.error.URLError, OSError, ValueError) as exc:
            last = exc
            time.sleep(0.2)
    raise AssertionError(f"{url} never came up: {last}")


def test_demo_boots_a_working_stack(tmp_path):
    registry_port, gateway_port = free_port(), free_port()
    process = subprocess.Popen(
        [sys.executable, "-m", "i3.cli", "demo",
         "--registry-port", str(registry_port),
         "--gateway-port", str(gateway_port),
         "--data-dir", str(tmp_path / "demo")],
        cwd=REPO_ROOT, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        text=True)
    try:
        students = wait_for_json(
            f"http://127.0.0.1:{gateway_port}/api/students")
        assert len(students) == 5

        from i3.broker import RegistryClient
        names = {record.name for record in RegistryClient(
            f"http://127.0.0.1:{registry_port}").list_services()}
        assert {"AdmissionDataBaseManagerService",
                "LibraryDataBaseManagerService",
                "HostelDataBaseManagerService",
                "CampusDataBaseManagerService"} <= names

        # this process can verify against the demo's registry
        assert cli.main(["verify", "S002", "--registry-url",
                         f"http://127.0.0.1:{registry_port}"]) == 1
    finally:
        process.terminate()
        stdout, stderr = process.communicate(timeout=15)
    assert process.returncode == 0, stderr
    assert "registry" in stdout and "gateway" in stdout
