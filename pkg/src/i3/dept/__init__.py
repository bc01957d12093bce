"""Departmental services: managers, wire wrappers, and process assembly."""

from .base import (
    DEPT_INFO, AmisGateway, DeptConfig, DeptHandle, run_department, seed_store,
)
from .amis import AmisManager, AmisService
from .lmis import LmisManager, LmisService
from .hmis import HmisManager, HmisService
from .campus import CampusManager, CampusService

__all__ = [
    "DEPT_INFO", "AmisGateway", "DeptConfig", "DeptHandle", "run_department",
    "seed_store", "AmisManager", "AmisService", "LmisManager", "LmisService",
    "HmisManager", "HmisService", "CampusManager", "CampusService",
]
