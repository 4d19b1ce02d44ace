"""creaselift: lifted neural fields with sharp gradient discontinuities.

Scalar fields that are continuous in value but kinked in gradient across an
explicit interface are represented by evaluating a smooth network on an
augmented ("lifted") input: the spatial coordinates plus a smoothly clamped
unsigned distance to the interface.  The trained fields serve as basis
functions for reduced-order elastodynamics of heterogeneous and creased
materials, with the interface free to move at runtime.

Subpackages / modules:

- ``geometry``  explicit interface meshes, closest-point queries, spatial
  hashing, generalized winding numbers
- ``lifting``   the closed-form lifting map and built-in interface families
- ``field``     the sinusoidal network over lifted coordinates and its
  spatial/parameter derivatives
- ``basis``     energy-based basis training and inference
- ``sim``       reduced time stepping and shape optimization
- ``oracle``    FEM references, finite-difference checks, jump detectors
- ``scene``     scene/checkpoint/trajectory file formats
- ``service``   live simulation endpoint
- ``cli``       command-line entry points
"""

__version__ = "0.1.0"
