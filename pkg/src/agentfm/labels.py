"""Closed label sets shared by the simulator, task agents and scoring."""

FAULT_LABELS = (
    "cpu_saturation",
    "io_saturation",
    "memory_saturation",
    "network_delay",
    "network_bandwidth_limit",
    "network_partition",
    "workload_spike",
    "slow_queries",
    "excessive_export",
    "excessive_import",
)
NORMAL = "normal"
UNKNOWN = "unknown"

EXAMPLE_LABELS = (NORMAL,) + FAULT_LABELS
DIAGNOSIS_LABELS = FAULT_LABELS + (UNKNOWN,)

RESOURCE_FAULTS = ("cpu_saturation", "io_saturation", "memory_saturation")
LOG_FAULTS = ("excessive_export", "excessive_import")
