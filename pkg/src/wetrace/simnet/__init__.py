from .actors import Injector, Snooper, SnoopRecord, injector_run, snooper_observe
from .engine import SimResult, run
from .generate import demo_document, demo_scenario, random_document, random_scenario
from .metrics import MetricsReport
from .oracle import GroundTruthContact, ground_truth_contacts
from .privacy import privacy_taint
from .radio import RadioMedium, RadioParams, RadioSample, rssi_at
from .scenario import Scenario, ScenarioError, Trajectory

__all__ = [
    "GroundTruthContact",
    "Injector",
    "MetricsReport",
    "RadioMedium",
    "RadioParams",
    "RadioSample",
    "Scenario",
    "ScenarioError",
    "SimResult",
    "SnoopRecord",
    "Snooper",
    "Trajectory",
    "demo_document",
    "demo_scenario",
    "ground_truth_contacts",
    "injector_run",
    "privacy_taint",
    "random_document",
    "random_scenario",
    "rssi_at",
    "run",
    "snooper_observe",
]
