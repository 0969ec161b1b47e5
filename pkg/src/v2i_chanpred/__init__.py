"""Environment-aware V2I channel prediction.

Synthetic urban scenes are ray traced into multipath components, rendered into
semantic and depth panoramas, and used to train multimodal networks that
predict path loss, delay spread, azimuth spreads and the angular power
spectrum.
"""

__version__ = "0.1.0"
