"""Deterministic low-speed automation simulator and copilot library.

Submodules
----------
road        road network geometry, Frenet frame, vehicle kinematics
perception  simulated lane sensing, localization, object detection, fusion
modes       driver/automation mode arbitration and take-over requests
planner     polynomial trajectory generation, legality filter, safe-stop fallback
control     motion vector controllers, shared steering torque, fuel model
traffic     conventional-vehicle model and road-side supervisor
scenario    scenario file schema, loading and validation
simulation  the two-rate simulation loop and metrics
sweep       fleet penetration-rate studies
telemetry   live WebSocket telemetry/command server
"""

__version__ = "0.1.0"
