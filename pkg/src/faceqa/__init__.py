"""Face-centric image quality assessment with per-pixel interpretability.

Subpackages split along the pipeline: synthetic corpora and raster types
(`facedata`), corruption synthesis (`degradation`), region-swap
supervision (`fprs`), the generator/discriminator pair (`networks`),
training objectives (`objectives`) and loop (`trainer`), inference
(`assessor`), rank statistics (`evalstats`), and the human-ranking study
service (`studysvc`).
"""

__version__ = "0.1.0"
