"""Operator command line: run the stack, deploy descriptors, verify students.

Every long-running subcommand hosts exactly one server and shuts down cleanly
on interrupt.  Settings resolve as flags > environment > config file; the
config file is plain `key = value` lines with `#` comments, keys spelled like
the flags without the leading dashes (registry-url, data-dir, ...).
"""

import argparse
import json
import logging
import os
import signal
import sys
import tempfile
import threading
import urllib.error
import urllib.request
from pathlib import Path

from . import errors
from .broker import Registry, RegistryClient, serve_registry
from .dept import DEPT_INFO, DeptConfig, run_department
from .emis import EmisConfig, EmisOrchestrator, run_emis
from .storage import FORMATS, open_store

DEFAULT_REGISTRY_PORT = 7100
DEFAULT_GATEWAY_PORT = 7180
DEFAULT_REGISTRY_URL = f"http://127.0.0.1:{DEFAULT_REGISTRY_PORT}"
DEFAULT_DATA_DIR = "i3-data"

_ENV_PREFIX = "I3_"


def _repo_fixtures() -> Path:
    return Path(__file__).resolve().parents[2] / "fixtures"


def default_seed_dir() -> Path:
    return _repo_fixtures() / "seed"


def load_config(path: str | Path) -> dict[str, str]:
    """Parse a `key = value` config file; malformed lines are errors."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise errors.I3Error(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


class Settings:
    """Flag > environment > config-file resolution for one invocation."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        config_path = self._args.get("config")
        self._file = load_config(config_path) if config_path else {}

    def get(self, key: str, default=None):
        flag = self._args.get(key.replace("-", "_"))
        if flag is not None:
            return flag
        env = os.environ.get(_ENV_PREFIX + key.upper().replace("-", "_"))
        if env is not None:
            return env
        if key in self._file:
            return self._file[key]
        return default


def _parse_listen(text: str) -> tuple[str, int]:
    """Accept HOST:PORT or :PORT; a bare port counts as :PORT."""
    if ":" in text:
        host, _, port = text.rpartition(":")
    else:
        host, port = "", text
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise errors.I3Error(f"bad --listen value {text!r}, expected HOST:PORT")


def _wait_for_interrupt() -> None:
    stop = threading.Event()

    def _on_term(*_):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _on_term)
    try:
        while not stop.is_set():
            stop.wait(0.5)
    except KeyboardInterrupt:
        pass


def _say(message: str) -> None:
    print(message, flush=True)


# -- subcommands -----------------------------------------------------------

def cmd_registry(args: argparse.Namespace) -> int:
    settings = Settings(args)
    address, port = _parse_listen(
        settings.get("listen", f":{DEFAULT_REGISTRY_PORT}"))
    journal = settings.get("journal")
    if journal is None:
        data_dir = settings.get("data-dir")
        if data_dir is not None:
            journal = Path(data_dir) / "registry.jsonl"
    registry = Registry(journal)
    handle = serve_registry(registry, address, port)
    _say(f"registry listening on {handle.url}"
         + (f" (journal {journal})" if journal else " (in-memory)"))
    try:
        _wait_for_interrupt()
    finally:
        handle.stop()
    return 0


def cmd_service(args: argparse.Namespace) -> int:
    settings = Settings(args)
    dept = args.dept
    data_root = Path(settings.get("data-dir", DEFAULT_DATA_DIR))
    registry_url = settings.get("registry-url", DEFAULT_REGISTRY_URL)
    address, port = _parse_listen(settings.get("listen", ":0"))
    seed = settings.get("seed")
    seed_dir = Path(seed) if seed else None
    timeout = float(settings.get("call-timeout", 5.0))

    if dept == "emis":
        config = EmisConfig(
            data_dir=data_root / "emis", registry_url=registry_url,
            storage_format=settings.get("storage-format", "binarylog"),
            address=address, port=port, call_timeout=timeout)
        handle = run_emis(config, seed_dir=seed_dir)
        _say(f"emis gateway listening on {handle.url}")
    else:
        wsdd = settings.get("wsdd")
        config = DeptConfig(
            dept=dept, data_dir=data_root / dept, registry_url=registry_url,
            storage_format=settings.get("storage-format", ""),
            wsdd_path=Path(wsdd) if wsdd else None,
            address=address, port=port,
            log_path=settings.get("log-file"), call_timeout=timeout)
        handle = run_department(config, seed_dir=seed_dir)
        _say(f"{handle.record.name} listening on {handle.url} "
             f"({handle.store.format_name}, registry {registry_url})")
    try:
        _wait_for_interrupt()
    finally:
        handle.stop()
    return 0


def _post_admin(host: str, path: str, descriptor_path: str) -> tuple[int, dict]:
    body = Path(descriptor_path).read_bytes()
    request = urllib.request.Request(
        host.rstrip("/") + path, data=body, method="POST",
        headers={"Content-Type": "text/xml; charset=utf-8"})
    try:
        with urllib.request.urlopen(request, timeout=10.0) as reply:
            return reply.status, json.loads(reply.read())
    except urllib.error.HTTPError as exc:
        try:
            return exc.code, json.loads(exc.read())
        except (ValueError, UnicodeDecodeError):
            raise errors.I3Error(f"{host}: HTTP {exc.code}") from exc
    except (urllib.error.URLError, OSError) as exc:
        raise errors.I3Error(f"cannot reach {host}: {exc}") from exc


def cmd_deploy(args: argparse.Namespace) -> int:
    status, reply = _post_admin(args.host, "/admin/deploy", args.descriptor)
    if status != 200:
        print(f"deploy failed: {reply.get('error', reply)}", file=sys.stderr)
        for violation in reply.get("violations", []):
            print(f"  {violation}", file=sys.stderr)
        return 1
    for name in reply.get("deployed", []):
        _say(name)
    return 0


def cmd_undeploy(args: argparse.Namespace) -> int:
    status, reply = _post_admin(args.host, "/admin/undeploy", args.descriptor)
    for name in reply.get("undeployed", []):
        _say(name)
    missing = reply.get("missing") or reply.get("error")
    if status != 200 or missing:
        print(f"undeploy failed: {missing}", file=sys.stderr)
        return 1
    return 0


def cmd_seed(args: argparse.Namespace) -> int:
    from .dept.base import DEPT_KINDS, seed_store

    settings = Settings(args)
    dept = args.dept
    data_root = Path(settings.get("data-dir", DEFAULT_DATA_DIR))
    if dept == "emis":
        fmt = settings.get("storage-format", "binarylog")
    else:
        fmt = settings.get("storage-format") or DEPT_INFO[dept][2]
    seed_dir = Path(args.seed_dir) if args.seed_dir else default_seed_dir()
    with open_store(fmt, data_root / dept) as store:
        seed_store(store, DEPT_KINDS[dept], seed_dir)
        for kind in DEPT_KINDS[dept]:
            _say(f"{kind}: {len(store.scan(kind))} records ({fmt})")
    return 0


def _print_result(result) -> None:
    for dept, status in result.per_department.items():
        reason = f"  {status.reason}" if status.reason else ""
        _say(f"{dept:<12}{status.state.upper()}{reason}")


def cmd_verify(args: argparse.Namespace) -> int:
    settings = Settings(args)
    registry_url = settings.get("registry-url", DEFAULT_REGISTRY_URL)
    orchestrator = EmisOrchestrator(
        registry_url, call_timeout=float(settings.get("call-timeout", 3.0)))
    result = orchestrator.verify_student(args.student_id)
    _print_result(result)
    _say(result.overall.upper())
    return 0 if result.overall == "Clear" else 1


def cmd_issue(args: argparse.Namespace) -> int:
    settings = Settings(args)
    gateway_url = settings.get("gateway-url")
    if gateway_url:
        # A running gateway owns the exam store; go through it rather than
        # opening the same files from a second process.
        return _issue_via_gateway(gateway_url, args.student_id, args.programme_id)
    registry_url = settings.get("registry-url", DEFAULT_REGISTRY_URL)
    data_root = Path(settings.get("data-dir", DEFAULT_DATA_DIR))
    fmt = settings.get("storage-format", "binarylog")
    with open_store(fmt, data_root / "emis") as store:
        orchestrator = EmisOrchestrator(
            registry_url, store,
            audit_path=data_root / "emis" / "audit.jsonl",
            call_timeout=float(settings.get("call-timeout", 3.0)))
        try:
            certificate = orchestrator.issue_certificate(
                args.student_id, args.programme_id)
        except errors.VerificationBlocked as exc:
            print("verification blocked:", file=sys.stderr)
            for dept, status in exc.result.per_department.items():
                reason = f"  {status.reason}" if status.reason else ""
                print(f"  {dept:<12}{status.state.upper()}{reason}", file=sys.stderr)
            return 1
        finally:
            orchestrator.close()
    _say(certificate.certificate_id)
    return 0


def _issue_via_gateway(gateway_url: str, student_id: str, programme_id: str) -> int:
    body = json.dumps({"student_id": student_id,
                       "programme_id": programme_id}).encode("utf-8")
    request = urllib.request.Request(
        gateway_url.rstrip("/") + "/api/certificates", data=body, method="POST",
        headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(request, timeout=30.0) as reply:
            _say(json.loads(reply.read())["certificate_id"])
            return 0
    except urllib.error.HTTPError as exc:
        try:
            payload = json.loads(exc.read())
        except (ValueError, UnicodeDecodeError):
            payload = {"code": f"HTTP {exc.code}", "message": "", "detail": None}
        print(f"{payload.get('code')}: {payload.get('message')}", file=sys.stderr)
        detail = payload.get("detail")
        if isinstance(detail, dict):
            for dept, entry in detail.get("departments", {}).items():
                reason = f"  {entry.get('reason')}" if entry.get("reason") else ""
                print(f"  {dept:<12}{str(entry.get('status', '')).upper()}{reason}",
                      file=sys.stderr)
        return 1
    except (urllib.error.URLError, OSError) as exc:
        raise errors.I3Error(f"cannot reach gateway {gateway_url}: {exc}") from exc


def cmd_wsdl(args: argparse.Namespace) -> int:
    settings = Settings(args)
    if args.host:
        url = args.host.rstrip("/") + f"/services/{args.service}?wsdl"
    else:
        registry_url = settings.get("registry-url", DEFAULT_REGISTRY_URL)
        record = RegistryClient(registry_url).find(args.service)
        url = record.wsdl_url
    try:
        with urllib.request.urlopen(url, timeout=10.0) as reply:
            sys.stdout.write(reply.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        raise errors.I3Error(f"{url}: HTTP {exc.code}") from exc
    except (urllib.error.URLError, OSError) as exc:
        raise errors.I3Error(f"cannot reach {url}: {exc}") from exc
    return 0


def cmd_gateway(args: argparse.Namespace) -> int:
    args.dept = "emis"
    return cmd_service(args)


def cmd_demo(args: argparse.Namespace) -> int:
    settings = Settings(args)
    data_dir = settings.get("data-dir")
    data_root = Path(data_dir) if data_dir else Path(tempfile.mkdtemp(prefix="i3-demo-"))
    seed_dir = Path(settings.get("seed") or default_seed_dir())
    registry_port = int(settings.get("registry-port", DEFAULT_REGISTRY_PORT))
    gateway_port = int(settings.get("gateway-port", DEFAULT_GATEWAY_PORT))

    handles = []
    try:
        registry = serve_registry(
            Registry(data_root / "registry.jsonl"), port=registry_port)
        handles.append(registry)
        _say(f"registry   {registry.url}  (data in {data_root})")
        for dept in ("amis", "lmis", "hmis", "campus"):
            handle = run_department(
                DeptConfig(dept=dept, data_dir=data_root / dept,
                           registry_url=registry.url),
                seed_dir=seed_dir)
            handles.append(handle)
            _say(f"{dept:<10} {handle.url}  ({handle.store.format_name})")
        emis = run_emis(
            EmisConfig(data_dir=data_root / "emis", registry_url=registry.url,
                       port=gateway_port),
            seed_dir=seed_dir)
        handles.append(emis)
        _say(f"gateway    {emis.url}")
        _say("")
        _say(f"try: i3 verify S002 --registry-url {registry.url}")
        _say(f"     curl {emis.url}/api/students")
        _wait_for_interrupt()
    finally:
        for handle in reversed(handles):
            handle.stop()
    return 0


# -- parser ----------------------------------------------------------------

_GLOBAL_FLAGS = (
    ("--registry-url", "broker base URL (default http://127.0.0.1:7100)"),
    ("--config", "key = value settings file"),
    ("--data-dir", "stack data root; each service uses a subdirectory"),
    ("--log-level", "logging level name (default WARNING)"),
)


def build_parser() -> argparse.ArgumentParser:
    # The global flags live on the root parser and on every subparser, so
    # they work on either side of the subcommand.  The subparser copies use
    # SUPPRESS defaults so an absent flag cannot clobber a root-parsed value.
    common = argparse.ArgumentParser(add_help=False)
    for flag, help_text in _GLOBAL_FLAGS:
        common.add_argument(flag, default=argparse.SUPPRESS, help=help_text)

    parser = argparse.ArgumentParser(
        prog="i3",
        description="Federated campus information fabric: registry, "
                    "departmental services, and no-dues verification.")
    for flag, help_text in _GLOBAL_FLAGS:
        parser.add_argument(flag, default=None, help=help_text)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("registry", parents=[common],
                       help="run the service registry")
    p.add_argument("--listen", help="HOST:PORT to bind (default :7100)")
    p.add_argument("--journal", help="registry journal path "
                                     "(default <data-dir>/registry.jsonl)")
    p.set_defaults(func=cmd_registry)

    p = sub.add_parser("service", parents=[common],
                       help="run one departmental service")
    p.add_argument("dept", choices=("amis", "lmis", "hmis", "campus", "emis"),
                   help="which department to host")
    p.add_argument("--listen", help="HOST:PORT to bind (default ephemeral)")
    p.add_argument("--storage-format", choices=FORMATS,
                   help="storage backend (default per department)")
    p.add_argument("--wsdd", help="deployment descriptor path")
    p.add_argument("--seed", help="seed fixture directory to load at startup")
    p.add_argument("--log-file", help="handler log path")
    p.add_argument("--call-timeout", help="outbound call timeout in seconds")
    p.set_defaults(func=cmd_service)

    p = sub.add_parser("deploy", parents=[common],
                       help="deploy a descriptor into a running host")
    p.add_argument("descriptor", help="deployment descriptor file")
    p.add_argument("--host", required=True, help="service host base URL")
    p.set_defaults(func=cmd_deploy)

    p = sub.add_parser("undeploy", parents=[common],
                       help="undeploy services from a running host")
    p.add_argument("descriptor", help="un-deployment descriptor file")
    p.add_argument("--host", required=True, help="service host base URL")
    p.set_defaults(func=cmd_undeploy)

    p = sub.add_parser("seed", parents=[common],
                       help="load seed fixtures into a department's store")
    p.add_argument("dept", choices=("amis", "lmis", "hmis", "campus", "emis"),
                   help="which department's records to seed")
    p.add_argument("seed_dir", nargs="?", help="fixture directory "
                                               "(default fixtures/seed)")
    p.add_argument("--storage-format", choices=FORMATS,
                   help="storage backend (default per department)")
    p.set_defaults(func=cmd_seed)

    p = sub.add_parser("verify", parents=[common],
                       help="run a no-dues verification for one student")
    p.add_argument("student_id")
    p.add_argument("--call-timeout", help="per-department timeout in seconds")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("issue", parents=[common],
                       help="issue a degree certificate (verifies first)")
    p.add_argument("student_id")
    p.add_argument("programme_id")
    p.add_argument("--gateway-url",
                   help="send the request to a running gateway instead of "
                        "opening the exam store locally")
    p.add_argument("--storage-format", choices=FORMATS,
                   help="exam store backend (default binarylog)")
    p.add_argument("--call-timeout", help="per-department timeout in seconds")
    p.set_defaults(func=cmd_issue)

    p = sub.add_parser("wsdl", parents=[common],
                       help="fetch and print a service description")
    p.add_argument("service", help="service name")
    p.add_argument("--host", help="ask this host directly instead of "
                                  "looking up the registry")
    p.set_defaults(func=cmd_wsdl)

    p = sub.add_parser("gateway", parents=[common],
                       help="run the JSON gateway (same as: service emis)")
    p.add_argument("--listen", help="HOST:PORT to bind (default ephemeral)")
    p.add_argument("--storage-format", choices=FORMATS,
                   help="exam store backend (default binarylog)")
    p.add_argument("--seed", help="seed fixture directory to load at startup")
    p.add_argument("--call-timeout", help="per-department timeout in seconds")
    p.set_defaults(func=cmd_gateway)

    p = sub.add_parser("demo", parents=[common],
                       help="boot registry, all services, and the gateway, "
                            "seeded with the bundled fixtures")
    p.add_argument("--seed", help="seed fixture directory "
                                  "(default fixtures/seed)")
    p.add_argument("--registry-port", help="registry port (default 7100)")
    p.add_argument("--gateway-port", help="gateway port (default 7180)")
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = Settings(args)
        logging.basicConfig(
            level=getattr(logging, str(settings.get("log-level", "WARNING")).upper(),
                          logging.WARNING),
            format="%(asctime)s %(name)s %(levelname)s %(message)s")
        return args.func(args)
    except errors.VerificationBlocked as exc:
        print("verification blocked:", file=sys.stderr)
        for dept, status in exc.result.per_department.items():
            print(f"  {dept}: {status.state}", file=sys.stderr)
        return 1
    except errors.I3Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
