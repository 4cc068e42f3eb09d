"""Shared display-list schema facts for the gateway and the browser viewer.

Primitives (one JSON object each):

- ``triangle_hollow``  red on-road alert above the sign geometry; ``scale``
  drops to 0.5 once acknowledged
- ``corner_rect``      yellow corner-only outline for active roadside signs
- ``triangle_solid``   small yellow triangle an acknowledged roadside sign
  collapses into
- ``arc``              peripheral guidance cue at ``bearing`` degrees
  (0 = up, clockwise, 45-degree sectors), colored like its sign
- ``basics``           bottom bar with ``speed_kmh``, ``clock``, ``nav``

Geometry-bearing primitives carry ``x, y, w, h`` in video pixels; the viewer
scales them to its canvas.
"""

SCHEMA_VERSION = 1

SHAPES = ("triangle_hollow", "corner_rect", "triangle_solid", "arc", "basics")
