"""Desk-scale tether-net capture simulator."""

from .model import (
    CLOSING,
    CORNER,
    MAIN_TETHER,
    MESH,
    DebrisSpec,
    DebrisState,
    NetModel,
    SpringElement,
    build_net,
    euler321_to_quat,
    quat_to_matrix,
)
from .simulate import (
    CaptureSimulation,
    ScenarioSpec,
    SimConfig,
    SimOutcome,
    SimulationDiverged,
    closing_rest_lengths,
    contact_force,
    count_locked,
    element_force,
    net_centre_of_mass,
    run_capture,
    update_locks,
)
