"""Roadside-risk co-driver pipeline.

Subpackages cover the full chain from perception fixtures to the HUD:

- ``vcd.ingest``  — fixture loading and stream alignment
- ``vcd.scene``   — per-frame classification and scene-description JSON
- ``vcd.risk``    — prompt assembly, completion service, verdict parsing, guards
- ``vcd.hud``     — overlay sign state machine and gaze acknowledgment
- ``vcd.replay``  — causal windows, latency profiles, end-to-end replay
- ``vcd.gateway`` — session service streaming display lists to the viewer
- ``vcd.metrics`` — detection metrics, judgment timelines, rater agreement
"""

__version__ = "0.1.0"
