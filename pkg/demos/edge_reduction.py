"""Three-dimensional edge reduced to a planar corner.

A straight edge carries x3-independent jumps. Averaging against a bump
profile in x3 splits the problem into an in-plane elastic corner and an
antiplane scalar corner, and each is probed separately.
"""

import math

from dislocation.reduction import BumpProfile, EdgeData3D, edge_probe_3d

profile = BumpProfile(0.0, 1.0)
profile.check_support(2.0)

same = EdgeData3D.constant(-math.pi / 3, math.pi / 3, 0.5, [0.1, 0.2, 0.3], [0, 0, 0],
                           [0.1, 0.2, 0.3], [0, 0, 0], zero_gradient=True)
print("matched edge:", edge_probe_3d(same, profile).verdict)

jump = EdgeData3D.constant(-math.pi / 3, math.pi / 3, 0.5, [0.1, 0.2, 0.6], [0, 0, 0],
                           [0.1, 0.2, 0.3], [0, 0, 0], zero_gradient=True)
print("antiplane mismatch:", edge_probe_3d(jump, profile).verdict)
