"""Federated campus information fabric.

Departmental information systems (admission, library, hostel, campus) exposed
as XML-RPC services behind a discovery registry, and an examination-side
orchestrator that runs the no-dues verification workflow across them before
issuing degree certificates.
"""

from .broker import Registry, RegistryClient, ServiceRecord, bind, serve_registry
from .dept import DeptConfig, run_department
from .emis import EmisConfig, EmisOrchestrator, run_emis, serve_gateway
from .engine import ServiceHost, serve
from .envelope import BeanValue, Call, Envelope, Fault, Response, TypedValue
from .model import Certificate, DeptStatus, StudentRecord, VerificationResult
from .storage import FORMATS, open_store
from .wsdd import parse_undeploy, parse_wsdd

__version__ = "0.1.0"

__all__ = [
    "BeanValue", "Call", "Certificate", "DeptConfig", "DeptStatus",
    "EmisConfig", "EmisOrchestrator", "Envelope", "Fault", "FORMATS",
    "Registry", "RegistryClient", "Response", "ServiceHost", "ServiceRecord",
    "StudentRecord", "TypedValue", "VerificationResult", "bind", "open_store",
    "parse_undeploy", "parse_wsdd", "run_department", "run_emis",
    "serve", "serve_gateway", "__version__",
]
